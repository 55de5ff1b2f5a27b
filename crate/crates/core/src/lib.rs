//! Boundary-seeking GAN training toolkit.
//!
//! The crate provides:
//!
//! - a minimal dense-tensor reverse-mode differentiation engine
//!   ([`graph`]) with first-order optimizers ([`optim`]),
//! - the f-divergence registry ([`fdiv`]) pairing activations with convex
//!   conjugates so that discriminator statistics yield importance weights,
//! - generator and statistic-network model families ([`models`]),
//! - discrete-generator training via importance-weighted policy gradients
//!   and a REINFORCE variant ([`discrete`]),
//! - continuous-generator training with the boundary-seeking objective and
//!   gradient-norm regularization ([`continuous`]),
//! - brute-force ground truth on enumerable spaces ([`oracle`]), and
//! - dataset ingestion and synthesis ([`data`]) with binary checkpoint and
//!   PGM output formats ([`io`]).

pub mod continuous;
pub mod data;
pub mod discrete;
pub mod error;
pub mod fdiv;
pub mod gradcheck;
pub mod graph;
pub mod io;
pub mod models;
pub mod optim;
pub mod oracle;
pub mod rng;
pub mod tensor;

pub use error::{Error, Result};
pub use fdiv::Divergence;
pub use graph::{Graph, Var};
pub use optim::Optimizer;
pub use tensor::Tensor;
