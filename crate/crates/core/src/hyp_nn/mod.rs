//! Learnable layers: Euclidean MLPs, the Möbius linear layer, hyperbolic
//! multinomial logistic regression, and the model that wires them.

mod mlp;
mod mlr;
mod mobius_linear;
mod model;
pub mod ops;
pub mod params;

pub use mlp::{glorot_bound, Activation, DenseLayer, EuclideanMLP};
pub use mlr::{argmax, softmax, HyperbolicMLR, MIN_NORMAL_NORM};
pub use mobius_linear::MobiusLinear;
pub use model::{HypModel, ModelConfig, TapeOutputs};
pub use params::{ParamKind, ParamMut, ParamRef, Parameterized};
