pub mod arch;
pub mod autodiff;
pub mod baselines;
pub mod blender;
pub mod data;
pub mod error;
pub mod gradcheck;
pub mod harness;
pub mod metrics;
pub mod nn;
pub mod objectives;
pub mod predictor;
pub mod rng;
pub mod tensor;

pub use error::{Error, Result};
pub use tensor::Tensor;
