use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::experiments::data::{make_dataset, SyntheticData, SyntheticSpec};
use crate::experiments::ood::{ood_mixing_curve, OodConfig, OodCurve};
use crate::experiments::rejection::{even_thresholds, rejection_curve, RejectionCurve};
use crate::math::{argmax, RngStream};
use crate::metrics::{self, BinMode, BinnedReliability, EvalRecord, MetricSummary};
use crate::net::{dump_archive, train, DenseNet, LogitArchive, TrainConfig};
use crate::scalers::{self, EarlyStopping, FitConfig, Scaler, ScalerKind};

/// Flat key-value configuration of a full run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,

    pub classes: usize,
    pub dim: usize,
    pub n_train: usize,
    pub n_calib: usize,
    pub n_test: usize,
    pub n_ood: usize,
    pub separation: f64,
    pub label_noise: f64,

    pub hidden: Vec<usize>,
    pub dropout: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    /// Confidence-penalty weight of the comparison model.
    pub beta: f64,

    pub mc_samples: usize,
    pub bins: usize,

    pub scalers: Vec<ScalerKind>,
    pub fit_learning_rate: f64,
    pub aux_learning_rate: f64,
    pub fit_max_iters: usize,
    pub fit_tol: f64,
    pub aux_weight_decay: f64,
    /// 0 disables early stopping of the aux scaler.
    pub aux_patience: usize,
    pub aux_holdout_fraction: f64,

    pub rejection_thresholds: usize,
    pub ood_batch: usize,
    pub ood_steps: usize,
    pub ood_repeats: usize,

    /// Output directory of the report bundle.
    pub out: Option<String>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let data = SyntheticSpec::default();
        Self {
            seed: 0,
            classes: data.classes,
            dim: data.dim,
            n_train: data.n_train,
            n_calib: data.n_calib,
            n_test: data.n_test,
            n_ood: data.n_ood,
            separation: data.separation,
            label_noise: data.label_noise,
            hidden: vec![64, 64],
            dropout: 0.2,
            learning_rate: 0.05,
            epochs: 10,
            batch_size: 32,
            beta: 0.1,
            mc_samples: 25,
            bins: metrics::DEFAULT_BINS,
            scalers: ScalerKind::ALL.to_vec(),
            fit_learning_rate: 0.05,
            aux_learning_rate: 0.01,
            fit_max_iters: 500,
            fit_tol: 1e-7,
            aux_weight_decay: 0.0,
            aux_patience: 0,
            aux_holdout_fraction: 0.2,
            rejection_thresholds: 51,
            ood_batch: 100,
            ood_steps: 10,
            ood_repeats: 20,
            out: None,
        }
    }
}

impl RunConfig {
    pub fn synthetic_spec(&self) -> SyntheticSpec {
        SyntheticSpec {
            classes: self.classes,
            dim: self.dim,
            n_train: self.n_train,
            n_calib: self.n_calib,
            n_test: self.n_test,
            n_ood: self.n_ood,
            separation: self.separation,
            label_noise: self.label_noise,
            seed: RngStream::new(self.seed).derive(1).next_u64(),
        }
    }

    pub fn train_config(&self, beta: f64) -> TrainConfig {
        TrainConfig {
            learning_rate: self.learning_rate,
            epochs: self.epochs,
            batch_size: self.batch_size,
            beta,
            seed: RngStream::new(self.seed).derive(3).next_u64(),
        }
    }

    pub fn init_seed(&self) -> u64 {
        RngStream::new(self.seed).derive(2).next_u64()
    }

    /// Root stream for archive dumps; each split derives its own child.
    pub fn sample_stream(&self) -> RngStream {
        RngStream::new(self.seed).derive(4)
    }

    pub fn fit_config(&self, kind: ScalerKind) -> FitConfig {
        let mut cfg = FitConfig::for_kind(kind);
        cfg.learning_rate = match kind {
            ScalerKind::Aux => self.aux_learning_rate,
            _ => self.fit_learning_rate,
        };
        cfg.max_iters = self.fit_max_iters;
        cfg.tol = self.fit_tol;
        cfg.seed = RngStream::new(self.seed).derive(6).next_u64();
        if kind == ScalerKind::Aux {
            cfg.weight_decay = self.aux_weight_decay;
            if self.aux_patience > 0 {
                cfg.early_stopping = Some(EarlyStopping {
                    holdout_fraction: self.aux_holdout_fraction,
                    patience: self.aux_patience,
                });
            }
        }
        cfg
    }

    pub fn ood_config(&self) -> OodConfig {
        OodConfig {
            batch: self.ood_batch,
            steps: self.ood_steps,
            repeats: self.ood_repeats,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.synthetic_spec().validate()?;
        self.train_config(self.beta).validate()?;
        crate::net::DenseLayer::new(1, 1, vec![0.0], vec![0.0], self.dropout)?;
        if self.hidden.contains(&0) {
            return Err(Error::invalid_config("hidden widths must be positive"));
        }
        if self.mc_samples == 0 || self.bins == 0 {
            return Err(Error::invalid_config("mc_samples and bins must be positive"));
        }
        if self.rejection_thresholds == 0 {
            return Err(Error::invalid_config("rejection_thresholds must be positive"));
        }
        if self.ood_batch == 0 || self.ood_steps == 0 || self.ood_repeats == 0 {
            return Err(Error::invalid_config(
                "ood_batch, ood_steps and ood_repeats must be positive",
            ));
        }
        if self.ood_batch > self.n_test || self.ood_batch > self.n_ood {
            return Err(Error::invalid_config("ood_batch exceeds n_test or n_ood"));
        }
        for kind in &self.scalers {
            self.fit_config(*kind).validate()?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodReport {
    pub method: String,
    pub metrics: MetricSummary,
    pub mean_uncertainty: f64,
    pub ood_mean_uncertainty: f64,
    pub reliability_confidence: BinnedReliability,
    pub reliability_uncertainty: BinnedReliability,
    pub rejection: RejectionCurve,
    pub ood: OodCurve,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedScaler {
    pub scaler: Scaler,
    pub iterations: usize,
    pub converged: bool,
    pub initial_nll: f64,
    pub final_nll: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub base_loss_history: Vec<f64>,
    pub penalty_loss_history: Vec<f64>,
    /// Per-pass argmax changes caused by temperature scaling over the test
    /// archive.
    pub temperature_pass_flips: Option<usize>,
    pub test_passes: usize,
    /// Test inputs whose MC-integrated prediction changes under temperature
    /// scaling.
    pub temperature_prediction_flips: Option<usize>,
    /// The OoD curve averages this many independently drawn batch
    /// compositions per point instead of following one batch.
    pub ood_repeats: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub version: String,
    pub config: RunConfig,
    pub methods: Vec<MethodReport>,
    pub scalers: Vec<FittedScaler>,
    pub diagnostics: Diagnostics,
}

impl Report {
    pub fn method(&self, name: &str) -> Option<&MethodReport> {
        self.methods.iter().find(|m| m.method == name)
    }
}

pub const UNCALIBRATED: &str = "uncalibrated";
pub const CONF_PENALTY: &str = "conf_penalty";

/// Archives of one trained model on every evaluation split.
pub struct ModelArchives {
    pub calib: LogitArchive,
    pub test: LogitArchive,
    pub ood: LogitArchive,
}

pub fn build_model(cfg: &RunConfig) -> Result<DenseNet> {
    DenseNet::init(
        cfg.dim,
        &cfg.hidden,
        cfg.classes,
        cfg.dropout,
        &mut RngStream::new(cfg.init_seed()),
    )
}

pub fn dump_all(model: &DenseNet, data: &SyntheticData, cfg: &RunConfig) -> Result<ModelArchives> {
    let root = cfg.sample_stream();
    Ok(ModelArchives {
        calib: dump_archive(model, &data.calib, cfg.mc_samples, &root.derive(1))?,
        test: dump_archive(model, &data.test, cfg.mc_samples, &root.derive(2))?,
        ood: dump_archive(model, &data.ood, cfg.mc_samples, &root.derive(3))?,
    })
}

/// Fit every selected scaler on the calibration archive only.
pub fn fit_scalers(calib: &LogitArchive, cfg: &RunConfig) -> Result<Vec<FittedScaler>> {
    cfg.scalers
        .iter()
        .map(|&kind| {
            let init = Scaler::identity(kind, calib.classes())?;
            let out = scalers::fit(&init, calib, &cfg.fit_config(kind))?;
            Ok(FittedScaler {
                initial_nll: out.trace[0],
                final_nll: *out.trace.last().unwrap(),
                scaler: out.scaler,
                iterations: out.iterations,
                converged: out.converged,
            })
        })
        .collect()
}

pub fn evaluate_method(
    method: &str,
    test: &LogitArchive,
    ood: &LogitArchive,
    scaler: Option<&Scaler>,
    cfg: &RunConfig,
    rng: &mut RngStream,
) -> Result<MethodReport> {
    let records = metrics::records_from_archive(test, scaler);
    let ood_records = metrics::records_from_archive(ood, scaler);
    evaluate_records(method, &records, &ood_records, cfg, rng)
}

pub fn evaluate_records(
    method: &str,
    records: &[EvalRecord],
    ood_records: &[EvalRecord],
    cfg: &RunConfig,
    rng: &mut RngStream,
) -> Result<MethodReport> {
    Ok(MethodReport {
        method: method.to_string(),
        metrics: metrics::summarize(records, cfg.bins)?,
        mean_uncertainty: metrics::mean_uncertainty(records)?,
        ood_mean_uncertainty: metrics::mean_uncertainty(ood_records)?,
        reliability_confidence: metrics::reliability_data(records, cfg.bins, BinMode::Confidence)?,
        reliability_uncertainty: metrics::reliability_data(records, cfg.bins, BinMode::Uncertainty)?,
        rejection: rejection_curve(records, &even_thresholds(cfg.rejection_thresholds))?,
        ood: ood_mixing_curve(records, ood_records, &cfg.ood_config(), rng)?,
    })
}

fn count_pass_flips(archive: &LogitArchive, scaler: &Scaler) -> usize {
    (0..archive.len())
        .flat_map(|j| archive.passes(j))
        .filter(|z| argmax(z) != argmax(&scaler.apply(z)))
        .count()
}

/// Train the plain and the confidence-penalty models, calibrate the plain
/// one and evaluate every variant on the test and OoD splits.
pub fn run_pipeline(cfg: &RunConfig) -> Result<Report> {
    cfg.validate()?;
    let data = make_dataset(&cfg.synthetic_spec()).map_err(|e| e.in_stage("data"))?;

    let base = train(build_model(cfg)?, &data.train, &cfg.train_config(0.0)).map_err(|e| e.in_stage("train"))?;
    let penalty =
        train(build_model(cfg)?, &data.train, &cfg.train_config(cfg.beta)).map_err(|e| e.in_stage("train-penalty"))?;

    let base_archives = dump_all(&base.model, &data, cfg).map_err(|e| e.in_stage("sample"))?;
    let penalty_archives = dump_all(&penalty.model, &data, cfg).map_err(|e| e.in_stage("sample-penalty"))?;

    let fitted = fit_scalers(&base_archives.calib, cfg).map_err(|e| e.in_stage("calibrate"))?;

    let mut rng = RngStream::new(cfg.seed).derive(5);
    let mut methods = Vec::with_capacity(2 + fitted.len());
    let eval = |name: &str, archives: &ModelArchives, scaler: Option<&Scaler>, rng: &mut RngStream| {
        evaluate_method(name, &archives.test, &archives.ood, scaler, cfg, rng).map_err(|e| e.in_stage("evaluate"))
    };
    methods.push(eval(UNCALIBRATED, &base_archives, None, &mut rng)?);
    methods.push(eval(CONF_PENALTY, &penalty_archives, None, &mut rng)?);
    for f in &fitted {
        methods.push(eval(f.scaler.kind().name(), &base_archives, Some(&f.scaler), &mut rng)?);
    }

    let temperature = fitted.iter().find(|f| f.scaler.kind() == ScalerKind::Temperature);
    let prediction_flips = temperature.map(|f| {
        let plain = metrics::records_from_archive(&base_archives.test, None);
        let scaled = metrics::records_from_archive(&base_archives.test, Some(&f.scaler));
        plain
            .iter()
            .zip(&scaled)
            .filter(|(a, b)| a.predicted() != b.predicted())
            .count()
    });

    Ok(Report {
        version: crate::VERSION.to_string(),
        config: cfg.clone(),
        methods,
        diagnostics: Diagnostics {
            base_loss_history: base.loss_history,
            penalty_loss_history: penalty.loss_history,
            temperature_pass_flips: temperature.map(|f| count_pass_flips(&base_archives.test, &f.scaler)),
            test_passes: base_archives.test.len() * base_archives.test.samples(),
            temperature_prediction_flips: prediction_flips,
            ood_repeats: cfg.ood_repeats,
        },
        scalers: fitted,
    })
}
