use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};

use ucal_core::experiments::{
    build_model, even_thresholds, make_dataset, ood_mixing_curve, rejection_curve, run_pipeline, RunConfig,
    SyntheticData, UNCALIBRATED,
};
use ucal_core::io::{
    load_run_config, metrics_csv, ood_csv, read_archive, read_model, read_scaler, rejection_csv, write_archive,
    write_bundle, write_model, write_scaler,
};
use ucal_core::metrics::{records_from_archive, summarize};
use ucal_core::net::{dump_archive, train};
use ucal_core::scalers::fit;
use ucal_core::{Error, LabeledSet, Result, RngStream, Scaler, ScalerKind, VERSION};

#[derive(Parser)]
#[command(name = "ucal", version, about = "Uncertainty calibration for MC dropout classifiers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// TOML run configuration; defaults apply to missing keys.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long)]
    seed: Option<u64>,
}

impl ConfigArgs {
    fn load(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => load_run_config(path)?,
            None => RunConfig::default(),
        };
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        Ok(cfg)
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Split {
    Train,
    Calib,
    Test,
    Ood,
}

impl Split {
    /// Matches the per-split streams the pipeline uses.
    fn stream(self) -> u64 {
        match self {
            Split::Calib => 1,
            Split::Test => 2,
            Split::Ood => 3,
            Split::Train => 4,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Train a model on the synthetic training split and write a checkpoint.
    Train {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Confidence-penalty weight.
        #[arg(long, default_value_t = 0.0)]
        beta: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run MC passes of a checkpoint over one split and write a logit archive.
    Sample {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, value_enum, default_value_t = Split::Test)]
        split: Split,
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        mc_samples: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit a logit scaler on a calibration archive.
    Calibrate {
        archive: PathBuf,
        #[arg(long)]
        method: ScalerKind,
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print or write the metric row of an archive.
    Eval {
        archive: PathBuf,
        #[arg(long)]
        scaler: Option<PathBuf>,
        #[arg(long, default_value_t = ucal_core::metrics::DEFAULT_BINS)]
        bins: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Uncertainty-threshold rejection curve.
    Reject {
        archive: PathBuf,
        #[arg(long)]
        scaler: Option<PathBuf>,
        #[arg(long, default_value_t = 51)]
        thresholds: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Mean uncertainty while in-distribution inputs are replaced by OoD ones.
    Ood {
        archive: PathBuf,
        ood_archive: PathBuf,
        #[arg(long)]
        scaler: Option<PathBuf>,
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train, sample, calibrate and evaluate from one configuration.
    Pipeline {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        bins: Option<usize>,
        #[arg(long)]
        mc_samples: Option<usize>,
        #[arg(long)]
        beta: Option<f64>,
        /// Report directory; overrides `out` from the configuration.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the version.
    Version,
}

fn emit(text: &str, out: Option<&Path>) -> Result<()> {
    match out {
        Some(path) => fs::write(path, text).map_err(|e| Error::Io {
            path: path.to_path_buf(),
            source: e,
        }),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn load_scaler(path: Option<&PathBuf>) -> Result<Option<Scaler>> {
    path.map(read_scaler).transpose()
}

fn split_set(data: &SyntheticData, split: Split) -> &LabeledSet {
    match split {
        Split::Train => &data.train,
        Split::Calib => &data.calib,
        Split::Test => &data.test,
        Split::Ood => &data.ood,
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Version => println!("ucal {VERSION}"),
        Command::Train { cfg, beta, out } => {
            let cfg = cfg.load()?;
            let data = make_dataset(&cfg.synthetic_spec())?;
            let trained = train(build_model(&cfg)?, &data.train, &cfg.train_config(beta))?;
            write_model(&trained.model, cfg.seed, &out)?;
            if let Some(loss) = trained.loss_history.last() {
                println!("final training loss {loss:.6}");
            }
        }
        Command::Sample {
            model,
            split,
            cfg: cfg_args,
            mc_samples,
            out,
        } => {
            let (net, trained_seed) = read_model(&model)?;
            let mut cfg = cfg_args.load()?;
            if cfg_args.seed.is_none() {
                cfg.seed = trained_seed;
            }
            if let Some(n) = mc_samples {
                cfg.mc_samples = n;
            }
            cfg.validate()?;
            let data = make_dataset(&cfg.synthetic_spec())?;
            let archive = dump_archive(
                &net,
                split_set(&data, split),
                cfg.mc_samples,
                &cfg.sample_stream().derive(split.stream()),
            )?;
            write_archive(&archive, &out)?;
        }
        Command::Calibrate {
            archive,
            method,
            cfg,
            out,
        } => {
            let cfg = cfg.load()?;
            let archive = read_archive(&archive)?;
            let init = Scaler::identity(method, archive.classes())?;
            let outcome = fit(&init, &archive, &cfg.fit_config(method))?;
            write_scaler(&outcome.scaler, &out)?;
            println!(
                "{method}: mean nll {:.6} -> {:.6} after {} iterations{}",
                outcome.trace[0],
                outcome.trace.last().unwrap(),
                outcome.iterations,
                if outcome.converged { "" } else { " (not converged)" }
            );
            if let Scaler::Temperature(t) = &outcome.scaler {
                println!("temperature {}", t.temperature());
            }
        }
        Command::Eval {
            archive,
            scaler,
            bins,
            out,
        } => {
            let archive = read_archive(&archive)?;
            let scaler = load_scaler(scaler.as_ref())?;
            let records = records_from_archive(&archive, scaler.as_ref());
            let summary = summarize(&records, bins)?;
            let name = scaler.as_ref().map_or(UNCALIBRATED, |s| s.kind().name());
            emit(&metrics_csv(&[(name, &summary)]), out.as_deref())?;
        }
        Command::Reject {
            archive,
            scaler,
            thresholds,
            out,
        } => {
            let archive = read_archive(&archive)?;
            let scaler = load_scaler(scaler.as_ref())?;
            let records = records_from_archive(&archive, scaler.as_ref());
            let curve = rejection_curve(&records, &even_thresholds(thresholds))?;
            emit(&rejection_csv(&curve.points), out.as_deref())?;
        }
        Command::Ood {
            archive,
            ood_archive,
            scaler,
            cfg,
            out,
        } => {
            let cfg = cfg.load()?;
            let scaler = load_scaler(scaler.as_ref())?;
            let in_dist = records_from_archive(&read_archive(&archive)?, scaler.as_ref());
            let ood = records_from_archive(&read_archive(&ood_archive)?, scaler.as_ref());
            let mut rng = RngStream::new(cfg.seed).derive(5);
            let curve = ood_mixing_curve(&in_dist, &ood, &cfg.ood_config(), &mut rng)?;
            emit(&ood_csv(&curve.points), out.as_deref())?;
        }
        Command::Pipeline {
            cfg: cfg_args,
            bins,
            mc_samples,
            beta,
            out,
        } => {
            let mut cfg = cfg_args.load()?;
            if let Some(b) = bins {
                cfg.bins = b;
            }
            if let Some(n) = mc_samples {
                cfg.mc_samples = n;
            }
            if let Some(b) = beta {
                cfg.beta = b;
            }
            if let Some(dir) = out {
                cfg.out = Some(dir.display().to_string());
            }
            let dir = cfg
                .out
                .clone()
                .ok_or_else(|| Error::InvalidConfig("no output directory: pass --out or set `out`".into()))?;
            let report = run_pipeline(&cfg)?;
            write_bundle(&report, &dir)?;
            let rows: Vec<_> = report.methods.iter().map(|m| (m.method.as_str(), &m.metrics)).collect();
            print!("{}", metrics_csv(&rows));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
