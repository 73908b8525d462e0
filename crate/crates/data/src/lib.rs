//! Synthetic multi-domain face dataset, forgery families, image
//! perturbations and the on-disk formats (PNG images, CSV manifest,
//! key-value generator config).

pub mod dataset;
pub mod domain;
pub mod error;
pub mod forge;
pub mod io;
pub mod kv;
pub mod perturb;
pub mod synth;

pub use dataset::{generate_dataset, Dataset, GeneratorConfig};
pub use domain::{Domain, LabeledSample, Split};
pub use error::{DataError, Result};
pub use forge::{forge, ForgeryStrengths};
pub use perturb::{perturb, PerturbationKind, PerturbationSpec};
pub use synth::generate_real;

/// A `[3, H, W]` image with values in `[0, 1]`.
pub type Image = benet_core::Tensor<f32>;
