use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::experiments::RunConfig;

/// Parse a TOML run configuration. Every key is optional; unknown keys are
/// rejected and values are validated.
pub fn parse_run_config(text: &str) -> Result<RunConfig> {
    let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::invalid_config(e.to_string()))?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn load_run_config(path: impl AsRef<Path>) -> Result<RunConfig> {
    let path = path.as_ref();
    parse_run_config(&fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
}

pub fn run_config_to_toml(cfg: &RunConfig) -> String {
    toml::to_string(cfg).expect("run config serializes")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalers::ScalerKind;

    #[test]
    fn empty_file_gives_defaults() {
        assert_eq!(parse_run_config("").unwrap(), RunConfig::default());
    }

    #[test]
    fn keys_are_read() {
        let cfg = parse_run_config("seed = 9\nepochs = 3\nscalers = [\"temperature\"]\nhidden = [16]\n").unwrap();
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.epochs, 3);
        assert_eq!(cfg.scalers, vec![ScalerKind::Temperature]);
        assert_eq!(cfg.hidden, vec![16]);
    }

    #[test]
    fn unknown_keys_and_bad_values_are_rejected() {
        assert!(matches!(parse_run_config("colour = 1"), Err(Error::InvalidConfig(_))));
        assert!(parse_run_config("dropout = 1.0").is_err());
        assert!(parse_run_config("scalers = [\"platt\"]").is_err());
        assert!(parse_run_config("n_test = 50").is_err());
        assert!(parse_run_config("epochs = -1").is_err());
    }

    #[test]
    fn toml_round_trip() {
        let cfg = RunConfig {
            out: Some("reports".into()),
            separation: 3.25,
            ..RunConfig::default()
        };
        assert_eq!(parse_run_config(&run_config_to_toml(&cfg)).unwrap(), cfg);
    }
}
