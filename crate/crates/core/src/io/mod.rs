//! On-disk formats: binary logit archives, JSON checkpoints, TOML run
//! configurations and the CSV/SVG report bundle.

mod archive_file;
mod checkpoint;
mod config;
mod report;
mod svg;

pub use archive_file::{
    decode_archive, encode_archive, encoded_len, read_archive, write_archive, FORMAT_VERSION, HEADER_LEN, MAGIC,
};
pub use checkpoint::{
    model_from_json, model_to_json, read_model, read_scaler, scaler_from_json, scaler_to_json, write_model,
    write_scaler, ScalerFile, CHECKPOINT_VERSION, MODEL_FORMAT, SCALER_FORMAT,
};
pub use config::{load_run_config, parse_run_config, run_config_to_toml};
pub use report::{
    fmt_f64, metrics_csv, ood_csv, parse_metrics_csv, parse_ood_csv, parse_rejection_csv, parse_reliability_csv,
    read_metrics_csv, read_ood_csv, read_rejection_csv, read_reliability_csv, rejection_csv, reliability_csv,
    reliability_file, write_bundle, Metadata, ScalerEntry, METRICS_HEADER, OOD_HEADER, REJECTION_HEADER,
    RELIABILITY_HEADER,
};
pub use svg::{emit_reliability_svg, parse_svg_bins, render_reliability_svg};
