//! Segmentation engine for maritime scenes: a three-branch network with row
//! positional encoding modules, its training objective, evaluation metrics,
//! dataset tooling and an analytic cost profiler.

pub mod autodiff;
pub mod config;
pub mod data;
pub mod encodings;
pub mod error;
pub mod gradcheck;
pub mod kernels;
pub mod losses;
pub mod metrics;
pub mod net;
pub mod params;
pub mod profile;
pub mod rng;
pub mod rpem;
pub mod tensor;
pub mod train;

pub use autodiff::{Gradients, Graph, Var};
pub use error::{Error, Result};
pub use tensor::{Precision, Real, Tensor};
