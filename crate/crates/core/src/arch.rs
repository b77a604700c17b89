//! Channel widths shared by the predictor and the blender.

use crate::error::{Error, Result};

/// Layer widths of the generator networks.
///
/// The predictor exposes three activations per generated frame: a deep map at
/// `H/8` with `deep_width` channels, and decoder features at `H/8` and `H/4`
/// whose widths equal the blender's decoder-3 and decoder-2 outputs so they can
/// be summed into the blender's decoder inputs.
#[derive(Clone, Debug, PartialEq)]
pub struct ArchConfig {
    /// Image channels (1 grayscale, 3 color).
    pub channels: usize,
    /// Predictor encoder widths at `H`, `H/2`, `H/4` (pooled after each).
    pub pred_encoder: [usize; 3],
    /// ConvLSTM hidden width.
    pub pred_hidden: usize,
    /// Predictor decoder width at `H/2` and `H`.
    pub pred_top: usize,
    /// Deep activation width per direction (the blender sees twice this).
    pub deep_width: usize,
    /// Blender encoder 1 and 2 output widths.
    pub blend_encoder: [usize; 2],
    /// Blender decoder 4, 3, 2, 1 output widths.
    pub blend_decoder: [usize; 4],
    /// Hidden width of each kernel head.
    pub head_width: usize,
    /// Length of every 1-D kernel.
    pub kernel_size: usize,
    /// Convs per blender block.
    pub convs_per_block: usize,
}

impl ArchConfig {
    /// Small widths for 32×32 training on one CPU core.
    pub fn desk() -> Self {
        ArchConfig {
            channels: 1,
            pred_encoder: [8, 16, 24],
            pred_hidden: 24,
            pred_top: 8,
            deep_width: 16,
            blend_encoder: [16, 24],
            blend_decoder: [24, 16, 16, 8],
            head_width: 8,
            kernel_size: 5,
            convs_per_block: 1,
        }
    }

    /// The published widths: 1024-channel blender input, 51-tap kernels.
    pub fn paper_faithful() -> Self {
        ArchConfig {
            channels: 1,
            pred_encoder: [64, 128, 256],
            pred_hidden: 256,
            pred_top: 64,
            deep_width: 512,
            blend_encoder: [256, 512],
            blend_decoder: [512, 256, 128, 64],
            head_width: 64,
            kernel_size: 51,
            convs_per_block: 3,
        }
    }

    /// Width of the predictor decoder feature summed into blender decoder 2.
    pub fn coarse_residual(&self) -> usize {
        self.blend_decoder[1]
    }

    /// Width of the predictor decoder feature summed into blender decoder 1.
    pub fn fine_residual(&self) -> usize {
        self.blend_decoder[2]
    }

    pub fn validate(&self) -> Result<()> {
        let widths = self
            .pred_encoder
            .iter()
            .chain(&self.blend_encoder)
            .chain(&self.blend_decoder)
            .chain([&self.channels, &self.pred_hidden, &self.pred_top, &self.deep_width, &self.head_width, &self.convs_per_block]);
        if widths.into_iter().any(|&w| w == 0) {
            return Err(Error::Config("every layer width must be positive".into()));
        }
        if self.kernel_size % 2 == 0 {
            return Err(Error::Config(format!("kernel size {} must be odd", self.kernel_size)));
        }
        Ok(())
    }
}

impl Default for ArchConfig {
    fn default() -> Self {
        Self::desk()
    }
}
