use crate::error::{Error, Result};

/// Architecture of the autoencoder, attention module and classifier.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncoderDecoderConfig {
    /// Image channel count.
    pub channels: usize,
    /// Square input extent.
    pub image_size: usize,
    /// Output channels of each stride-2 encoder stage. The last stage is the
    /// bottleneck; every earlier stage contributes one attention scale.
    pub stage_channels: Vec<usize>,
    /// Side of the non-overlapping attention patches.
    pub patch_size: usize,
    /// Width of the classifier's hidden layer.
    pub hidden_width: usize,
    /// When false the attention maps are dropped and `s = z`.
    pub use_lsa: bool,
}

impl Default for EncoderDecoderConfig {
    fn default() -> Self {
        Self {
            channels: 3,
            image_size: 32,
            stage_channels: vec![16, 32, 64],
            patch_size: 4,
            hidden_width: 128,
            use_lsa: true,
        }
    }
}

impl EncoderDecoderConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.channels == 0 || self.hidden_width == 0 {
            return bad("channels and hidden_width must be positive".into());
        }
        if self.stage_channels.is_empty() || self.stage_channels.contains(&0) {
            return bad(format!("stage_channels must be nonempty and positive, got {:?}", self.stage_channels));
        }
        let stages = self.stage_channels.len() as u32;
        let Some(div) = 2usize.checked_pow(stages) else {
            return bad(format!("{stages} stages is too deep"));
        };
        if self.image_size == 0 || self.image_size % div != 0 {
            return bad(format!(
                "image_size {} must be divisible by 2^{stages} = {div}",
                self.image_size
            ));
        }
        let b = self.bottleneck_size();
        if self.patch_size == 0 || b % self.patch_size != 0 {
            return bad(format!(
                "patch_size {} must divide the bottleneck extent {b}",
                self.patch_size
            ));
        }
        Ok(())
    }

    /// Spatial extent of the bottleneck `z`.
    pub fn bottleneck_size(&self) -> usize {
        self.image_size >> self.stage_channels.len()
    }

    pub fn bottleneck_channels(&self) -> usize {
        *self.stage_channels.last().unwrap()
    }

    /// Number of attention scales (encoder taps before the bottleneck).
    pub fn num_scales(&self) -> usize {
        self.stage_channels.len() - 1
    }

    pub fn image_shape(&self, batch: usize) -> [usize; 4] {
        [batch, self.channels, self.image_size, self.image_size]
    }

    pub fn flat_image_len(&self) -> usize {
        self.channels * self.image_size * self.image_size
    }
}
