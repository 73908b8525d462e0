//! End-to-end runs: generate, train, calibrate, evaluate, stress-test.

use std::fs;
use std::path::{Path, PathBuf};

use benet_core::checkpoint::Checkpoint;
use benet_core::{DetectorState, Scalar};
use benet_data::{generate_dataset, Dataset, Domain, GeneratorConfig, LabeledSample, Split};
use sha2::{Digest, Sha256};

use crate::config::{Precision, TrainConfig};
use crate::error::{HarnessError, Result};
use crate::eval::{calibrate, evaluate_scored, robustness_report, score};
use crate::report::{loss_curve_report, with_suffix, Report};
use crate::train::{train, TrainOutcome};

/// Samples whose domain is one of `domains`.
pub fn subset<'a>(samples: &[&'a LabeledSample], domains: &[Domain]) -> Vec<&'a LabeledSample> {
    samples.iter().copied().filter(|s| domains.contains(&s.domain)).collect()
}

/// Real samples plus the fakes of every domain not held out.
pub fn known_domains(gen: &GeneratorConfig) -> Vec<Domain> {
    Domain::ALL.into_iter().filter(|d| !gen.held_out.contains(d)).collect()
}

/// Real samples plus the held-out fakes.
pub fn held_out_domains(gen: &GeneratorConfig) -> Vec<Domain> {
    std::iter::once(Domain::Real).chain(gen.held_out.iter().copied()).collect()
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Train on `train_set`, then calibrate the detector on the same samples.
pub fn train_and_calibrate<T: Scalar>(
    train_set: &[&LabeledSample],
    cfg: &TrainConfig,
) -> Result<(TrainOutcome<T>, DetectorState<T>)> {
    let outcome = train::<T>(train_set, cfg)?;
    let detector = calibrate(&outcome.model, train_set, cfg.percentile, cfg.calibration_set)?;
    Ok((outcome, detector))
}

/// Files produced by [`run_pipeline`], in write order.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineArtifacts {
    pub dir: PathBuf,
    pub files: Vec<PathBuf>,
}

/// Generate the dataset under `dir/data`, reload it from its manifest,
/// train, calibrate, and write the checkpoint and every report into `dir`.
pub fn run_pipeline(gen: &GeneratorConfig, cfg: &TrainConfig, dir: &Path) -> Result<PipelineArtifacts> {
    match cfg.precision {
        Precision::F32 => run_pipeline_typed::<f32>(gen, cfg, dir),
        Precision::F64 => run_pipeline_typed::<f64>(gen, cfg, dir),
    }
}

fn run_pipeline_typed<T: Scalar>(gen: &GeneratorConfig, cfg: &TrainConfig, dir: &Path) -> Result<PipelineArtifacts> {
    cfg.validate()?;
    fs::create_dir_all(dir)?;
    let mut files = Vec::new();
    let manifest = generate_dataset(gen)?.write_to_dir(dir.join("data"))?;
    files.push(manifest.clone());
    let data = Dataset::load(&manifest)?;
    let train_set = data.split(Split::Train);
    let test = data.split(Split::Test);
    if train_set.is_empty() || test.is_empty() {
        return Err(HarnessError::Invalid("pipeline needs non-empty train and test splits".into()));
    }

    let (outcome, detector) = train_and_calibrate::<T>(&train_set, cfg)?;
    let ckpt = Checkpoint::new(outcome.model, Some(detector));
    let ckpt_path = dir.join("model.ckpt");
    let bytes = ckpt.to_bytes();
    fs::write(&ckpt_path, &bytes)?;
    files.push(ckpt_path);

    let mut train_report = loss_curve_report("training", &outcome.epochs);
    train_report.push("checkpoint_sha256", sha256_hex(&bytes));
    files.extend(pair(train_report.write(dir.join("train"))?));

    let theta = ckpt.detector.as_ref().map(|d| d.theta()).transpose()?.map(|t| t.to_f64_lossy());
    for (name, domains) in [("test", Domain::ALL.to_vec()), ("known", known_domains(gen)), ("held_out", held_out_domains(gen))] {
        let part = subset(&test, &domains);
        if part.is_empty() {
            continue;
        }
        let scored = score(&ckpt.model, &part)?;
        let plain = evaluate_scored(&scored, None)?;
        let with = evaluate_scored(&scored, theta)?;
        let mut r = Report::new(format!("evaluation ({name})"));
        r.extend("classifier.", &plain.to_report(""));
        r.extend("detector.", &with.to_report(""));
        files.extend(pair(r.write(dir.join(format!("eval_{name}")))?));
    }

    let table = robustness_report(&ckpt.model, &test)?;
    let prefix = dir.join("robustness");
    files.extend(pair(table.to_report("perturbation robustness").write(&prefix)?));
    let csv = with_suffix(&prefix, "csv");
    fs::write(&csv, table.to_csv())?;
    files.push(csv);

    Ok(PipelineArtifacts {
        dir: dir.to_path_buf(),
        files,
    })
}

fn pair((a, b): (PathBuf, PathBuf)) -> [PathBuf; 2] {
    [a, b]
}
