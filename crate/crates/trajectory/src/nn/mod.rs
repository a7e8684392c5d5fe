//! Minimal differentiable core: a dense 2-D tensor, a reverse-mode tape,
//! dense and recurrent blocks, Adam with optional lookahead, and a
//! finite-difference gradient checker.

pub mod gradcheck;
pub mod layers;
pub mod optim;
pub mod params;
pub mod recurrent;
pub mod tape;
pub mod tensor;

pub use gradcheck::{grad_check, GradCheckReport, GradCheckSettings};
pub use layers::{DenseBlock, FrozenEmbedding};
pub use optim::{Optimizer, OptimizerConfig};
pub use params::{Grads, ParamId, ParamStore};
pub use recurrent::{CellType, RecurrentStack};
pub use tape::{bce_mean, mish, sigmoid, softplus, NodeId, Tape, BCE_EPS};
pub use tensor::{Scalar, Tensor2D};
