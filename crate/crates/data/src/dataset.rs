//! Whole-dataset generation and (de)serialisation.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::domain::{Domain, LabeledSample, Split};
use crate::error::{DataError, Result};
use crate::forge::{forge, ForgeryStrengths};
use crate::io::{load_png, read_manifest, save_png, write_manifest, Manifest, ManifestRow};
use crate::kv::KvConfig;
use crate::synth::{derive_seed, render_face};

/// Generator settings. Config-file keys:
///
/// ```text
/// seed = 7
/// image_size = 32
/// held_out = noiseC, colorD
/// count.<split>.<domain> = <n>      # e.g. count.train.spliceA = 250
/// forge.blur_sigma = 2.0
/// forge.noise_amplitude = 0.3
/// forge.color_shift = 0.3
/// forge.region_min = 0.3
/// forge.region_max = 0.45
/// ```
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorConfig {
    pub seed: u64,
    pub image_size: usize,
    pub counts: BTreeMap<(Split, Domain), usize>,
    /// Domains that may only appear in the test split.
    pub held_out: Vec<Domain>,
    pub strengths: ForgeryStrengths,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        let mut counts = BTreeMap::new();
        let mut put = |split, pairs: &[(Domain, usize)]| {
            for &(d, n) in pairs {
                counts.insert((split, d), n);
            }
        };
        put(Split::Train, &[(Domain::Real, 500), (Domain::SpliceA, 250), (Domain::BlurB, 250)]);
        put(Split::Val, &[(Domain::Real, 100), (Domain::SpliceA, 50), (Domain::BlurB, 50)]);
        put(
            Split::Test,
            &[
                (Domain::Real, 160),
                (Domain::SpliceA, 60),
                (Domain::BlurB, 60),
                (Domain::NoiseC, 60),
                (Domain::ColorD, 60),
            ],
        );
        Self {
            seed: 7,
            image_size: 32,
            counts,
            held_out: vec![Domain::NoiseC, Domain::ColorD],
            strengths: ForgeryStrengths::default(),
        }
    }
}

impl GeneratorConfig {
    pub fn count(&self, split: Split, domain: Domain) -> usize {
        self.counts.get(&(split, domain)).copied().unwrap_or(0)
    }

    pub fn split_size(&self, split: Split) -> usize {
        Domain::ALL.iter().map(|&d| self.count(split, d)).sum()
    }

    /// Scale every count by `factor`, keeping at least one sample where the
    /// original count was nonzero.
    pub fn scaled(&self, factor: f64) -> Self {
        let mut out = self.clone();
        for n in out.counts.values_mut() {
            if *n > 0 {
                *n = ((*n as f64 * factor).round() as usize).max(1);
            }
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        if self.image_size == 0 {
            return Err(DataError::Invalid("image_size must be positive".into()));
        }
        if self.held_out.contains(&Domain::Real) {
            return Err(DataError::Invalid("the real domain cannot be held out".into()));
        }
        for &d in &self.held_out {
            for s in [Split::Train, Split::Val] {
                if self.count(s, d) > 0 {
                    return Err(DataError::Invalid(format!(
                        "held-out domain {d} has samples in the {s} split"
                    )));
                }
            }
        }
        self.strengths.validate()
    }

    pub fn from_kv(kv: &KvConfig) -> Result<Self> {
        kv.ensure_known(|k| {
            matches!(
                k,
                "seed"
                    | "image_size"
                    | "held_out"
                    | "forge.blur_sigma"
                    | "forge.noise_amplitude"
                    | "forge.color_shift"
                    | "forge.region_min"
                    | "forge.region_max"
            ) || k.starts_with("count.")
        })?;
        let mut cfg = Self::default();
        cfg.seed = kv.get_or("seed", cfg.seed)?;
        cfg.image_size = kv.get_or("image_size", cfg.image_size)?;
        if let Some(h) = kv.get_list::<String>("held_out")? {
            cfg.held_out = h.iter().map(|s| s.parse()).collect::<Result<_>>()?;
        }
        let s = &mut cfg.strengths;
        s.blur_sigma = kv.get_or("forge.blur_sigma", s.blur_sigma)?;
        s.noise_amplitude = kv.get_or("forge.noise_amplitude", s.noise_amplitude)?;
        s.color_shift = kv.get_or("forge.color_shift", s.color_shift)?;
        s.region_min = kv.get_or("forge.region_min", s.region_min)?;
        s.region_max = kv.get_or("forge.region_max", s.region_max)?;
        for key in kv.keys().filter(|k| k.starts_with("count.")) {
            let parts: Vec<&str> = key.splitn(3, '.').collect();
            if parts.len() != 3 {
                return Err(DataError::Invalid(format!("count key '{key}' must be count.<split>.<domain>")));
            }
            let split: Split = parts[1].parse()?;
            let domain: Domain = parts[2].parse()?;
            cfg.counts.insert((split, domain), kv.get::<usize>(key)?.unwrap_or(0));
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_kv(&self) -> KvConfig {
        let mut kv = KvConfig::default();
        kv.set("seed", self.seed);
        kv.set("image_size", self.image_size);
        kv.set(
            "held_out",
            self.held_out.iter().map(|d| d.name()).collect::<Vec<_>>().join(", "),
        );
        for (&(s, d), &n) in &self.counts {
            kv.set(&format!("count.{s}.{d}"), n);
        }
        let s = &self.strengths;
        kv.set("forge.blur_sigma", s.blur_sigma);
        kv.set("forge.noise_amplitude", s.noise_amplitude);
        kv.set("forge.color_shift", s.color_shift);
        kv.set("forge.region_min", s.region_min);
        kv.set("forge.region_max", s.region_max);
        kv
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Entry {
    pub sample: LabeledSample,
    pub split: Split,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Dataset {
    pub entries: Vec<Entry>,
}

/// Generate every split. Deterministic under `cfg.seed`.
pub fn generate_dataset(cfg: &GeneratorConfig) -> Result<Dataset> {
    cfg.validate()?;
    let mut entries = Vec::new();
    for split in Split::ALL {
        for domain in Domain::ALL {
            for i in 0..cfg.count(split, domain) {
                let key = [split as u64, domain as u64, i as u64];
                let id = format!("{split}-{domain}-{i:05}");
                let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, &key));
                let (image, _) = render_face(&mut rng, cfg.image_size);
                let real = LabeledSample::new(image, Domain::Real, id.clone());
                let sample = if domain == Domain::Real {
                    real
                } else {
                    let mut fake = forge(&real, domain, derive_seed(cfg.seed, &[key[0], key[1], key[2], 2]), &cfg.strengths)?;
                    fake.id = id;
                    fake
                };
                entries.push(Entry { sample, split });
            }
        }
    }
    Ok(Dataset { entries })
}

impl Dataset {
    pub fn split(&self, split: Split) -> Vec<&LabeledSample> {
        self.entries.iter().filter(|e| e.split == split).map(|e| &e.sample).collect()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    fn relative_path(e: &Entry) -> PathBuf {
        PathBuf::from(e.split.name())
            .join(e.sample.domain.name())
            .join(format!("{}.png", e.sample.id))
    }

    pub fn manifest(&self) -> Manifest {
        Manifest {
            rows: self
                .entries
                .iter()
                .map(|e| ManifestRow {
                    path: Self::relative_path(e),
                    label: e.sample.label,
                    domain: e.sample.domain,
                    split: e.split,
                })
                .collect(),
        }
    }

    /// Write PNGs under `dir/<split>/<domain>/` and `dir/manifest.csv`.
    pub fn write_to_dir(&self, dir: impl AsRef<Path>) -> Result<PathBuf> {
        let dir = dir.as_ref();
        for e in &self.entries {
            let p = dir.join(Self::relative_path(e));
            if let Some(parent) = p.parent() {
                fs::create_dir_all(parent)?;
            }
            save_png(&e.sample.image, &p)?;
        }
        let manifest_path = dir.join("manifest.csv");
        write_manifest(&manifest_path, &self.manifest())?;
        Ok(manifest_path)
    }

    /// Load every row of a manifest; image paths resolve against the
    /// manifest's directory.
    pub fn load(manifest_path: impl AsRef<Path>) -> Result<Self> {
        let manifest_path = manifest_path.as_ref();
        let manifest = read_manifest(manifest_path)?;
        let base = manifest_path.parent().unwrap_or(Path::new("."));
        let mut entries = Vec::with_capacity(manifest.rows.len());
        for row in manifest.rows {
            let image = load_png(base.join(&row.path))?;
            let id = row
                .path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default();
            entries.push(Entry {
                sample: LabeledSample::new(image, row.domain, id),
                split: row.split,
            });
        }
        Ok(Dataset { entries })
    }
}
