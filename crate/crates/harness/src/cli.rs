//! The `benet` command-line tool.
//!
//! Exit codes: 0 success, 1 usage error, 2 data or configuration error.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use benet_core::checkpoint::Checkpoint;
use benet_core::{DetectorState, Scalar};
use benet_data::io::load_png;
use benet_data::kv::KvConfig;
use benet_data::{generate_dataset, Dataset, Domain, GeneratorConfig, Split};
use clap::{Args, Parser, Subcommand};

use crate::config::{CalibrationSet, Precision, TrainConfig};
use crate::error::{HarnessError, Result};
use crate::eval::{calibrate, evaluate, robustness_report};
use crate::pipeline::sha256_hex;
use crate::report::{loss_curve_report, with_suffix};
use crate::train::train_with;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "benet", version, about = "Bias-expansion face-forgery detector")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

/// Config file plus `key=value` overrides, shared by every subcommand.
#[derive(Debug, Clone, Args)]
pub struct ConfigArgs {
    /// `key = value` config file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Override one config key; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate the synthetic dataset and its manifest.
    GenerateData {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Train a model on the train split and save a checkpoint.
    Train {
        #[command(flatten)]
        config: ConfigArgs,
        /// Dataset manifest.
        #[arg(long)]
        data: PathBuf,
        /// Output checkpoint; defaults to the config's `checkpoint` key.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        lambda: Option<f64>,
        /// Report prefix; `.txt` and `.kv` are appended.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Calibrate the detector threshold on the train split.
    Calibrate {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Where to write the calibrated checkpoint; defaults to in place.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        percentile: Option<f64>,
        #[arg(long, value_name = "all|real")]
        calibration_set: Option<String>,
    },
    /// Evaluate a checkpoint on one split.
    Eval {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value = "test")]
        split: String,
        /// Comma-separated domains to keep; all by default.
        #[arg(long)]
        domains: Option<String>,
        /// Apply the calibrated threshold override.
        #[arg(long)]
        cross_domain_detector: bool,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Classify one PNG image.
    Predict {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        image: PathBuf,
    },
    /// AUC under every perturbation kind and severity.
    Robustness {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value = "test")]
        split: String,
        /// Report prefix; `.txt`, `.kv` and `.csv` are appended.
        #[arg(long)]
        report: Option<PathBuf>,
    },
}

impl ConfigArgs {
    fn load(&self) -> Result<KvConfig> {
        let mut kv = match &self.config {
            Some(p) => KvConfig::load(p)
                .map_err(HarnessError::from)
                .map_err(HarnessError::at(p))?,
            None => KvConfig::default(),
        };
        for s in &self.set {
            let (k, v) = s
                .split_once('=')
                .ok_or_else(|| HarnessError::Config(format!("--set expects KEY=VALUE, got '{s}'")))?;
            kv.set(k.trim(), v.trim());
        }
        Ok(kv)
    }

    fn train_config(&self) -> Result<TrainConfig> {
        TrainConfig::from_kv(&self.load()?)
    }
}

/// Parse `argv` (program name first) and run; returns the exit code.
pub fn run<I, S>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let text = e.render().to_string();
            return if e.use_stderr() {
                let _ = write!(err, "{text}");
                EXIT_USAGE
            } else {
                let _ = write!(out, "{text}");
                EXIT_OK
            };
        }
    };
    match execute(cli.command, out) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            EXIT_DATA
        }
    }
}

fn load_split(manifest: &Path, split: &str) -> Result<(Dataset, Split)> {
    let split: Split = split.parse()?;
    let data = Dataset::load(manifest)
        .map_err(HarnessError::from)
        .map_err(HarnessError::at(manifest))?;
    Ok((data, split))
}

fn execute(command: Command, out: &mut dyn Write) -> Result<()> {
    match command {
        Command::GenerateData { config, out: dir, seed } => {
            let mut kv = config.load()?;
            if let Some(s) = seed {
                kv.set("seed", s);
            }
            let gen = GeneratorConfig::from_kv(&kv)?;
            let data = generate_dataset(&gen)?;
            let manifest = data.write_to_dir(&dir)?;
            fs::write(dir.join("generator.cfg"), gen.to_kv().render())?;
            writeln!(out, "samples={}", data.len())?;
            writeln!(out, "manifest={}", manifest.display())?;
        }
        Command::Train {
            config,
            data,
            checkpoint,
            seed,
            epochs,
            lambda,
            report,
        } => {
            let mut cfg = config.train_config()?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if let Some(e) = epochs {
                cfg.epochs = e;
            }
            if let Some(l) = lambda {
                cfg.loss.lambda = l;
            }
            cfg.validate()?;
            let path = checkpoint
                .or_else(|| cfg.checkpoint.clone())
                .ok_or_else(|| HarnessError::Config("no checkpoint path (--checkpoint or `checkpoint` key)".into()))?;
            let (data, _) = load_split(&data, "train")?;
            match cfg.precision {
                Precision::F32 => train_cmd::<f32>(&cfg, &data, &path, report.as_deref(), out)?,
                Precision::F64 => train_cmd::<f64>(&cfg, &data, &path, report.as_deref(), out)?,
            }
        }
        Command::Calibrate {
            config,
            data,
            checkpoint,
            out: dest,
            percentile,
            calibration_set,
        } => {
            let mut cfg = config.train_config()?;
            if let Some(p) = percentile {
                cfg.percentile = p;
            }
            if let Some(s) = calibration_set {
                cfg.calibration_set = s.parse::<CalibrationSet>()?;
            }
            cfg.validate()?;
            let (data, _) = load_split(&data, "train")?;
            let dest = dest.unwrap_or_else(|| checkpoint.clone());
            match cfg.precision {
                Precision::F32 => calibrate_cmd::<f32>(&cfg, &data, &checkpoint, &dest, out)?,
                Precision::F64 => calibrate_cmd::<f64>(&cfg, &data, &checkpoint, &dest, out)?,
            }
        }
        Command::Eval {
            config,
            data,
            checkpoint,
            split,
            domains,
            cross_domain_detector,
            report,
        } => {
            let cfg = config.train_config()?;
            let (data, split) = load_split(&data, &split)?;
            let domains = match domains {
                Some(list) => list
                    .split(',')
                    .map(|d| d.trim().parse::<Domain>())
                    .collect::<std::result::Result<Vec<_>, _>>()?,
                None => Domain::ALL.to_vec(),
            };
            let args = EvalArgs {
                data: &data,
                split,
                domains: &domains,
                detector: cross_domain_detector,
                report: report.as_deref(),
            };
            match cfg.precision {
                Precision::F32 => eval_cmd::<f32>(&checkpoint, &args, out)?,
                Precision::F64 => eval_cmd::<f64>(&checkpoint, &args, out)?,
            }
        }
        Command::Predict {
            config,
            checkpoint,
            image,
        } => {
            let cfg = config.train_config()?;
            match cfg.precision {
                Precision::F32 => predict_cmd::<f32>(&checkpoint, &image, out)?,
                Precision::F64 => predict_cmd::<f64>(&checkpoint, &image, out)?,
            }
        }
        Command::Robustness {
            config,
            data,
            checkpoint,
            split,
            report,
        } => {
            let cfg = config.train_config()?;
            let (data, split) = load_split(&data, &split)?;
            match cfg.precision {
                Precision::F32 => robustness_cmd::<f32>(&checkpoint, &data, split, report.as_deref(), out)?,
                Precision::F64 => robustness_cmd::<f64>(&checkpoint, &data, split, report.as_deref(), out)?,
            }
        }
    }
    Ok(())
}

fn train_cmd<T: Scalar>(
    cfg: &TrainConfig,
    data: &Dataset,
    path: &Path,
    report: Option<&Path>,
    out: &mut dyn Write,
) -> Result<()> {
    let train_set = data.split(Split::Train);
    let model = benet_core::BENetModel::<T>::new(cfg.model.clone(), cfg.seed)?;
    let outcome = train_with(model, &train_set, cfg, |e| {
        eprintln!("epoch {} total={} cross_entropy={}", e.epoch, e.total, e.cross_entropy);
    })?;
    let bytes = Checkpoint::new(outcome.model, None).to_bytes();
    fs::write(path, &bytes)?;
    let mut r = loss_curve_report("training", &outcome.epochs);
    r.push("checkpoint", path.display());
    r.push("checkpoint_sha256", sha256_hex(&bytes));
    if let Some(prefix) = report {
        r.write(prefix)?;
    }
    write!(out, "{}", r.render_kv())?;
    Ok(())
}

fn calibrate_cmd<T: Scalar>(
    cfg: &TrainConfig,
    data: &Dataset,
    src: &Path,
    dest: &Path,
    out: &mut dyn Write,
) -> Result<()> {
    let mut ckpt = load_checkpoint::<T>(src)?;
    let detector = calibrate(&ckpt.model, &data.split(Split::Train), cfg.percentile, cfg.calibration_set)?;
    writeln!(out, "theta={}", detector.theta()?)?;
    writeln!(out, "percentile={}", detector.percentile())?;
    writeln!(out, "calibration_samples={}", detector.calibration_values().len())?;
    ckpt.detector = Some(detector);
    ckpt.save(dest)?;
    writeln!(out, "checkpoint={}", dest.display())?;
    Ok(())
}

fn load_checkpoint<T: Scalar>(path: &Path) -> Result<Checkpoint<T>> {
    Checkpoint::load(path)
        .map_err(HarnessError::from)
        .map_err(HarnessError::at(path))
}

struct EvalArgs<'a> {
    data: &'a Dataset,
    split: Split,
    domains: &'a [Domain],
    detector: bool,
    report: Option<&'a Path>,
}

fn eval_cmd<T: Scalar>(checkpoint: &Path, a: &EvalArgs<'_>, out: &mut dyn Write) -> Result<()> {
    let ckpt = load_checkpoint::<T>(checkpoint)?;
    let detector: Option<&DetectorState<T>> = if a.detector {
        Some(ckpt.detector.as_ref().ok_or(benet_core::Error::Uncalibrated)?)
    } else {
        None
    };
    let samples: Vec<_> = a
        .data
        .split(a.split)
        .into_iter()
        .filter(|s| a.domains.contains(&s.domain))
        .collect();
    let report = evaluate(&ckpt.model, detector, &samples)?.to_report(&format!("evaluation ({})", a.split));
    if let Some(prefix) = a.report {
        report.write(prefix)?;
    }
    write!(out, "{}", report.render_kv())?;
    Ok(())
}

fn predict_cmd<T: Scalar>(checkpoint: &Path, image: &Path, out: &mut dyn Write) -> Result<()> {
    let ckpt = load_checkpoint::<T>(checkpoint)?;
    let detector = ckpt.detector.as_ref().ok_or(benet_core::Error::Uncalibrated)?;
    let img = load_png(image)
        .map_err(HarnessError::from)
        .map_err(HarnessError::at(image))?
        .cast::<T>();
    let p = detector.predict(&ckpt.model, &img)?[0];
    writeln!(
        out,
        "label={} p={} D={} unknown={}",
        p.label.name(),
        p.probability,
        p.discrepancy,
        p.unknown
    )?;
    Ok(())
}

fn robustness_cmd<T: Scalar>(
    checkpoint: &Path,
    data: &Dataset,
    split: Split,
    report: Option<&Path>,
    out: &mut dyn Write,
) -> Result<()> {
    let ckpt = load_checkpoint::<T>(checkpoint)?;
    let table = robustness_report(&ckpt.model, &data.split(split))?;
    let r = table.to_report(&format!("perturbation robustness ({split})"));
    if let Some(prefix) = report {
        r.write(prefix)?;
        fs::write(with_suffix(prefix, "csv"), table.to_csv())?;
    }
    write!(out, "{}", r.render_kv())?;
    Ok(())
}
