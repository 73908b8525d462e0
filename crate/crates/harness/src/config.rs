//! Training configuration and its `key = value` form.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use benet_core::{EncoderDecoderConfig, L2SignMode, LossConfig};
use benet_data::kv::KvConfig;

use crate::adam::AdamConfig;
use crate::error::{HarnessError, Result};

/// Floating-point width used for training and inference.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Precision {
    #[default]
    F32,
    F64,
}

impl FromStr for Precision {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "f32" => Ok(Self::F32),
            "f64" => Ok(Self::F64),
            other => Err(HarnessError::Config(format!("unknown precision '{other}'"))),
        }
    }
}

impl fmt::Display for Precision {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::F32 => "f32",
            Self::F64 => "f64",
        })
    }
}

/// Which training samples feed the detector threshold.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CalibrationSet {
    /// Every training sample, real and fake.
    #[default]
    All,
    /// Real training samples only.
    Real,
}

impl FromStr for CalibrationSet {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "all" => Ok(Self::All),
            "real" => Ok(Self::Real),
            other => Err(HarnessError::Config(format!("unknown calibration set '{other}'"))),
        }
    }
}

impl fmt::Display for CalibrationSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::All => "all",
            Self::Real => "real",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub optimizer: AdamConfig,
    /// At least 2: the pairwise loss needs pairs.
    pub batch_size: usize,
    pub epochs: usize,
    /// Seeds initialisation and batch order.
    pub seed: u64,
    pub loss: LossConfig,
    pub model: EncoderDecoderConfig,
    pub precision: Precision,
    pub percentile: f64,
    pub calibration_set: CalibrationSet,
    pub checkpoint: Option<PathBuf>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            optimizer: AdamConfig::default(),
            batch_size: 8,
            epochs: 20,
            seed: 7,
            loss: LossConfig::default(),
            model: EncoderDecoderConfig::default(),
            precision: Precision::F32,
            percentile: benet_core::detector::DEFAULT_PERCENTILE,
            calibration_set: CalibrationSet::All,
            checkpoint: None,
        }
    }
}

const KEYS: &[&str] = &[
    "lr",
    "weight_decay",
    "beta1",
    "beta2",
    "eps",
    "batch_size",
    "epochs",
    "seed",
    "margin",
    "lambda",
    "l3_normalize",
    "l2_sign_mode",
    "image_size",
    "channels",
    "stage_channels",
    "patch_size",
    "hidden_width",
    "use_lsa",
    "precision",
    "percentile",
    "calibration_set",
    "checkpoint",
];

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size < 2 {
            return Err(HarnessError::Config(format!(
                "batch_size must be at least 2, got {}",
                self.batch_size
            )));
        }
        let o = &self.optimizer;
        if !(o.lr > 0.0) || !(o.weight_decay >= 0.0) || !(o.eps > 0.0) {
            return Err(HarnessError::Config("lr and eps must be positive, weight_decay non-negative".into()));
        }
        if !(0.0..1.0).contains(&o.beta1) || !(0.0..1.0).contains(&o.beta2) {
            return Err(HarnessError::Config("beta1 and beta2 must lie in [0, 1)".into()));
        }
        if !(self.percentile > 0.0 && self.percentile <= 1.0) {
            return Err(HarnessError::Config(format!("percentile must lie in (0, 1], got {}", self.percentile)));
        }
        self.loss.validate()?;
        self.model.validate()?;
        Ok(())
    }

    /// Defaults overridden by every key present in `kv`; unknown keys are
    /// rejected.
    pub fn from_kv(kv: &KvConfig) -> Result<Self> {
        kv.ensure_known(|k| KEYS.contains(&k))?;
        let mut c = Self::default();
        let o = &mut c.optimizer;
        o.lr = kv.get_or("lr", o.lr)?;
        o.weight_decay = kv.get_or("weight_decay", o.weight_decay)?;
        o.beta1 = kv.get_or("beta1", o.beta1)?;
        o.beta2 = kv.get_or("beta2", o.beta2)?;
        o.eps = kv.get_or("eps", o.eps)?;
        c.batch_size = kv.get_or("batch_size", c.batch_size)?;
        c.epochs = kv.get_or("epochs", c.epochs)?;
        c.seed = kv.get_or("seed", c.seed)?;
        c.loss.margin = kv.get_or("margin", c.loss.margin)?;
        c.loss.lambda = kv.get_or("lambda", c.loss.lambda)?;
        c.loss.l3_normalize = kv.get_or("l3_normalize", c.loss.l3_normalize)?;
        if let Some(s) = kv.raw("l2_sign_mode") {
            c.loss.l2_sign_mode = s.parse::<L2SignMode>()?;
        }
        let m = &mut c.model;
        m.image_size = kv.get_or("image_size", m.image_size)?;
        m.channels = kv.get_or("channels", m.channels)?;
        if let Some(s) = kv.get_list::<usize>("stage_channels")? {
            m.stage_channels = s;
        }
        m.patch_size = kv.get_or("patch_size", m.patch_size)?;
        m.hidden_width = kv.get_or("hidden_width", m.hidden_width)?;
        m.use_lsa = kv.get_or("use_lsa", m.use_lsa)?;
        if let Some(s) = kv.raw("precision") {
            c.precision = s.parse()?;
        }
        c.percentile = kv.get_or("percentile", c.percentile)?;
        if let Some(s) = kv.raw("calibration_set") {
            c.calibration_set = s.parse()?;
        }
        if let Some(s) = kv.raw("checkpoint") {
            c.checkpoint = Some(PathBuf::from(s));
        }
        c.validate()?;
        Ok(c)
    }

    pub fn to_kv(&self) -> KvConfig {
        let mut kv = KvConfig::default();
        let o = &self.optimizer;
        kv.set("lr", o.lr);
        kv.set("weight_decay", o.weight_decay);
        kv.set("beta1", o.beta1);
        kv.set("beta2", o.beta2);
        kv.set("eps", o.eps);
        kv.set("batch_size", self.batch_size);
        kv.set("epochs", self.epochs);
        kv.set("seed", self.seed);
        kv.set("margin", self.loss.margin);
        kv.set("lambda", self.loss.lambda);
        kv.set("l3_normalize", self.loss.l3_normalize);
        kv.set("l2_sign_mode", self.loss.l2_sign_mode);
        let m = &self.model;
        kv.set("image_size", m.image_size);
        kv.set("channels", m.channels);
        kv.set(
            "stage_channels",
            m.stage_channels.iter().map(|c| c.to_string()).collect::<Vec<_>>().join(", "),
        );
        kv.set("patch_size", m.patch_size);
        kv.set("hidden_width", m.hidden_width);
        kv.set("use_lsa", m.use_lsa);
        kv.set("precision", self.precision);
        kv.set("percentile", self.percentile);
        kv.set("calibration_set", self.calibration_set);
        if let Some(p) = &self.checkpoint {
            kv.set("checkpoint", p.display());
        }
        kv
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kv_round_trip_preserves_every_field() {
        let mut cfg = TrainConfig::default();
        cfg.optimizer.lr = 1e-3;
        cfg.loss.l2_sign_mode = L2SignMode::Verbatim;
        cfg.model.use_lsa = false;
        cfg.precision = Precision::F64;
        cfg.calibration_set = CalibrationSet::Real;
        cfg.checkpoint = Some(PathBuf::from("m.ckpt"));
        let text = cfg.to_kv().render();
        let back = TrainConfig::from_kv(&KvConfig::parse(&text, "t").unwrap()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn unknown_keys_and_bad_values_are_rejected() {
        assert!(TrainConfig::from_kv(&KvConfig::parse("learning_rate = 1", "t").unwrap()).is_err());
        assert!(TrainConfig::from_kv(&KvConfig::parse("batch_size = 1", "t").unwrap()).is_err());
        assert!(TrainConfig::from_kv(&KvConfig::parse("percentile = 0", "t").unwrap()).is_err());
        assert!("f16".parse::<Precision>().is_err());
    }
}
