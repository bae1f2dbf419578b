//! Neural building blocks for the scheduling policy: a small reverse-mode
//! autodiff tape, finite-difference gradient checking, the graph encoder
//! with policy and value heads, and an Adam optimizer.

pub mod error;
pub mod gradcheck;
pub mod model;
pub mod optim;
pub mod tape;
pub mod tensor;

pub use error::{NnError, Result};
pub use gradcheck::grad_check;
pub use model::{act_distribution, encode, forward, policy_value, GraphBatch, Heads, PolicyConfig, PolicyParams};
pub use optim::{Adam, AdamConfig};
pub use tape::{Gradients, Tape, Var};
pub use tensor::Tensor;
