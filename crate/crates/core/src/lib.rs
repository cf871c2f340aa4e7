//! Complex-valued neural networks built on Wirtinger calculus.
//!
//! The crate is organised bottom-up:
//!
//! - [`complex`]: scalar helpers, Wirtinger pairs and the finite-difference oracle
//! - [`activation`]: split, phase-preserving, MVN and holomorphic activations
//! - [`loss`]: quadratic, logarithmic and average cross-entropy losses
//! - [`network`]: dense feed-forward layers, forward pass, model files
//! - [`backprop`]: Wirtinger backpropagation, SGD and gradient checking
//! - [`batchnorm`]: 2D whitening batch normalization
//! - [`init`]: polar (Rayleigh) and rectangular (uniform) weight init
//! - [`mvn`]: derivative-free multi-valued neuron learning
//! - [`dataset`]: synthetic complex tasks
//! - [`train`]: SGD training loop and metrics CSV
//! - [`cli`]: the `cvnn` command-line tool

pub mod activation;
pub mod backprop;
pub mod batchnorm;
pub mod cli;
pub mod complex;
pub mod dataset;
pub mod error;
pub mod init;
pub mod loss;
pub mod mvn;
pub mod network;
pub mod train;

pub use activation::{ActivationKind, OutputMap, RealFn};
pub use backprop::{GradCheckReport, GradCheckStatus, GradientSet, TrainConfig};
pub use batchnorm::{BatchNormState, Mat2};
pub use complex::{ComplexMatrix, ComplexValue, ComplexVector, WirtingerPair};
pub use dataset::{Dataset, Task, TaskParams};
pub use error::{CvnnError, Result};
pub use init::{InitScheme, InitSpec, RngStream};
pub use loss::LossKind;
pub use mvn::MvnConfig;
pub use network::{ForwardCache, Layer, LayerCache, Mode, Network};
