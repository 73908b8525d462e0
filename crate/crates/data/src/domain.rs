use std::fmt;
use std::str::FromStr;

use benet_core::Label;

use crate::error::DataError;
use crate::Image;

/// Manipulation family of a sample. `Real` is the only genuine domain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Domain {
    Real,
    /// Face-region patch pasted from another face.
    SpliceA,
    /// Gaussian blur of a facial subregion.
    BlurB,
    /// Localised white noise.
    NoiseC,
    /// Regional hue/brightness shift.
    ColorD,
}

impl Domain {
    pub const ALL: [Domain; 5] = [Domain::Real, Domain::SpliceA, Domain::BlurB, Domain::NoiseC, Domain::ColorD];
    pub const FORGERIES: [Domain; 4] = [Domain::SpliceA, Domain::BlurB, Domain::NoiseC, Domain::ColorD];

    pub fn label(self) -> Label {
        if self == Domain::Real {
            Label::Real
        } else {
            Label::Fake
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Domain::Real => "real",
            Domain::SpliceA => "spliceA",
            Domain::BlurB => "blurB",
            Domain::NoiseC => "noiseC",
            Domain::ColorD => "colorD",
        }
    }
}

impl fmt::Display for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Domain {
    type Err = DataError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Domain::ALL
            .into_iter()
            .find(|d| d.name() == s)
            .ok_or_else(|| DataError::Unknown {
                what: "domain",
                value: s.to_string(),
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Split {
    type Err = DataError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Split::ALL
            .into_iter()
            .find(|d| d.name() == s)
            .ok_or_else(|| DataError::Unknown {
                what: "split",
                value: s.to_string(),
            })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSample {
    pub image: Image,
    pub label: Label,
    pub domain: Domain,
    pub id: String,
}

impl LabeledSample {
    pub fn new(image: Image, domain: Domain, id: impl Into<String>) -> Self {
        Self {
            image,
            label: domain.label(),
            domain,
            id: id.into(),
        }
    }

    /// `label == Real` exactly when `domain == Real`.
    pub fn is_consistent(&self) -> bool {
        self.label == self.domain.label()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_parse_back() {
        for d in Domain::ALL {
            assert_eq!(d.name().parse::<Domain>().unwrap(), d);
        }
        for s in Split::ALL {
            assert_eq!(s.name().parse::<Split>().unwrap(), s);
        }
        assert!("Real".parse::<Domain>().is_err());
    }

    #[test]
    fn only_real_is_labelled_real() {
        assert_eq!(Domain::Real.label(), Label::Real);
        assert!(Domain::FORGERIES.iter().all(|d| d.label() == Label::Fake));
    }
}
