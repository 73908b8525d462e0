//! Bias-expansion face forgery detection.
//!
//! The crate is organised bottom-up:
//!
//! * [`numerics`] — dense tensors, a recording graph with reverse-mode
//!   differentiation, and finite-difference gradient checking.
//! * [`model`] — the convolutional autoencoder with multi-scale taps, the
//!   latent-space attention module, bias/attention fusion and the MLP head.
//! * [`losses`] — the bias-expansion loss family, binary cross-entropy and the
//!   weighted total objective.
//! * [`detector`] — the mean bias discrepancy score, percentile threshold
//!   calibration and the thresholded prediction rule.
//! * [`checkpoint`] — the `BENET1` binary parameter format.
//!
//! Everything numeric is generic over [`Scalar`] (`f32` or `f64`); the
//! `*32`/`*64` aliases below pin the common instantiations.

pub mod checkpoint;
pub mod detector;
pub mod error;
pub mod losses;
pub mod model;
pub mod numerics;

pub use error::{Error, Result};
pub use numerics::{Graph, Gradients, Scalar, Tensor, Var};

pub use detector::{DetectorState, Prediction};
pub use losses::{L2SignMode, LossConfig};
pub use model::{BENetModel, EncoderDecoderConfig, ForwardTrace};

/// Binary ground-truth label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Label {
    Real,
    Fake,
}

impl Label {
    /// `0` for real, `1` for fake.
    pub fn as_u8(self) -> u8 {
        match self {
            Label::Real => 0,
            Label::Fake => 1,
        }
    }

    pub fn from_u8(v: u8) -> Option<Self> {
        match v {
            0 => Some(Label::Real),
            1 => Some(Label::Fake),
            _ => None,
        }
    }

    pub fn is_fake(self) -> bool {
        self == Label::Fake
    }

    pub fn name(self) -> &'static str {
        match self {
            Label::Real => "real",
            Label::Fake => "fake",
        }
    }
}

impl std::fmt::Display for Label {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

pub type Tensor32 = Tensor<f32>;
pub type Tensor64 = Tensor<f64>;
pub type Graph32 = Graph<f32>;
pub type Graph64 = Graph<f64>;
pub type Model32 = BENetModel<f32>;
pub type Model64 = BENetModel<f64>;
pub type Detector32 = DetectorState<f32>;
pub type Detector64 = DetectorState<f64>;

#[cfg(test)]
mod tests {
    use super::Label;

    #[test]
    fn label_codes_round_trip() {
        for l in [Label::Real, Label::Fake] {
            assert_eq!(Label::from_u8(l.as_u8()), Some(l));
        }
        assert_eq!(Label::from_u8(2), None);
        assert_eq!(Label::Fake.to_string(), "fake");
    }
}
