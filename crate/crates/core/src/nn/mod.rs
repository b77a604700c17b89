//! Network building blocks: conv blocks, ConvLSTM, spectral normalization,
//! initializers, and the Adam optimizer.

mod adam;
mod convlstm;
pub mod init;
mod layers;
mod params;
mod spectral;

pub use adam::{Adam, AdamConfig};
pub use convlstm::{ConvLstm, ConvLstmState};
pub use layers::{Conv, ConvBlock, Linear, Resample};
pub use params::{BufferId, Bound, Entry, ParamId, ParamStore};
pub use spectral::SpectralNorm;
