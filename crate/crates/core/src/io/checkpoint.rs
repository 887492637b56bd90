//! JSON containers for trained models and fitted scalers. serde_json writes
//! the shortest representation that parses back to the same `f64`, so
//! parameters round-trip exactly.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, FormatError, Result};
use crate::net::{DenseLayer, DenseNet};
use crate::scalers::{Scaler, ScalerKind, DEFAULT_LEAKY_SLOPE};

pub const MODEL_FORMAT: &str = "ucal-model";
pub const SCALER_FORMAT: &str = "ucal-scaler";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LayerRecord {
    inputs: usize,
    outputs: usize,
    dropout: f64,
    weights: Vec<f64>,
    bias: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    format: String,
    version: u32,
    seed: u64,
    layers: Vec<LayerRecord>,
}

fn malformed(what: &'static str, reason: impl ToString) -> Error {
    FormatError::Malformed {
        what,
        reason: reason.to_string(),
    }
    .into()
}

fn check_header(what: &'static str, format: &str, expected: &str, version: u32) -> Result<()> {
    if format != expected {
        return Err(malformed(what, format!("format tag {format:?}, expected {expected:?}")));
    }
    if version != CHECKPOINT_VERSION {
        return Err(malformed(
            what,
            format!("version {version}, supported {CHECKPOINT_VERSION}"),
        ));
    }
    Ok(())
}

pub fn model_to_json(model: &DenseNet, seed: u64) -> String {
    let file = ModelFile {
        format: MODEL_FORMAT.into(),
        version: CHECKPOINT_VERSION,
        seed,
        layers: model
            .layers()
            .iter()
            .map(|l| LayerRecord {
                inputs: l.inputs(),
                outputs: l.outputs(),
                dropout: l.dropout(),
                weights: l.weights().to_vec(),
                bias: l.bias().to_vec(),
            })
            .collect(),
    };
    serde_json::to_string_pretty(&file).expect("model serializes")
}

/// Returns the model and the seed it was trained with.
pub fn model_from_json(text: &str) -> Result<(DenseNet, u64)> {
    let file: ModelFile = serde_json::from_str(text).map_err(|e| malformed("model checkpoint", e))?;
    check_header("model checkpoint", &file.format, MODEL_FORMAT, file.version)?;
    let layers = file
        .layers
        .into_iter()
        .map(|l| DenseLayer::new(l.inputs, l.outputs, l.weights, l.bias, l.dropout))
        .collect::<Result<Vec<_>>>()
        .map_err(|e| malformed("model checkpoint", e))?;
    let net = DenseNet::new(layers).map_err(|e| malformed("model checkpoint", e))?;
    Ok((net, file.seed))
}

pub fn write_model(model: &DenseNet, seed: u64, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, model_to_json(model, seed)).map_err(|e| Error::io(path, e))
}

pub fn read_model(path: impl AsRef<Path>) -> Result<(DenseNet, u64)> {
    let path = path.as_ref();
    model_from_json(&fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScalerFile {
    pub format: String,
    pub version: u32,
    pub kind: ScalerKind,
    /// Class count for vector and aux scalers; absent for temperature.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub classes: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub leaky_slope: Option<f64>,
    pub params: Vec<f64>,
    /// `exp(params[0])` for temperature scalers, for human readers.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub temperature: Option<f64>,
}

impl ScalerFile {
    pub fn from_scaler(s: &Scaler) -> Self {
        Self {
            format: SCALER_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            kind: s.kind(),
            classes: s.classes(),
            leaky_slope: match s {
                Scaler::Aux(a) => Some(a.slope()),
                _ => None,
            },
            params: s.params(),
            temperature: match s {
                Scaler::Temperature(t) => Some(t.temperature()),
                _ => None,
            },
        }
    }

    pub fn to_scaler(&self) -> Result<Scaler> {
        check_header("scaler file", &self.format, SCALER_FORMAT, self.version)?;
        let classes = match (self.kind, self.classes) {
            (ScalerKind::Temperature, c) => c.unwrap_or(2),
            (_, Some(c)) => c,
            (_, None) => return Err(malformed("scaler file", "missing class count")),
        };
        Scaler::from_params(
            self.kind,
            classes,
            self.leaky_slope.unwrap_or(DEFAULT_LEAKY_SLOPE),
            &self.params,
        )
        .map_err(|e| malformed("scaler file", e))
    }
}

pub fn scaler_to_json(s: &Scaler) -> String {
    serde_json::to_string_pretty(&ScalerFile::from_scaler(s)).expect("scaler serializes")
}

pub fn scaler_from_json(text: &str) -> Result<Scaler> {
    let file: ScalerFile = serde_json::from_str(text).map_err(|e| malformed("scaler file", e))?;
    file.to_scaler()
}

pub fn write_scaler(s: &Scaler, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, scaler_to_json(s)).map_err(|e| Error::io(path, e))
}

pub fn read_scaler(path: impl AsRef<Path>) -> Result<Scaler> {
    let path = path.as_ref();
    scaler_from_json(&fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
}
