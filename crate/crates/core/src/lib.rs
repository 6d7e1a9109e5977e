//! Matrix-variate Gaussian and Student-t process regression for jointly
//! predicting several correlated outputs.

pub mod backtest;
pub mod cli;
pub mod data;
pub mod error;
pub mod evaluation;
pub mod hexfloat;
pub mod kernels;
pub mod linalg;
pub mod matvar;
pub mod model;
pub mod model_io;
pub mod mvgp;
pub mod mvtp;
pub mod optimizer;
pub mod params;
pub mod special;

pub use error::{Error, Result};
pub use kernels::{KernelFamily, KernelSpec};
pub use matvar::{MatrixNormal, MatrixT, RowPartition};
pub use model::{fit, Family, IndependentModels, Prediction, TrainedModel};
pub use optimizer::{FitOptions, MinimizeOptions};
pub use params::{HyperParams, RowCovParams};
