//! Conditional graph generation with a sequence VAE.
//!
//! Graphs are serialized as minimum DFS codes ([`dfs`]), learned by an
//! LSTM-based conditional VAE ([`model`], trained by [`train`]) and sampled
//! back under a chosen value of one structural feature ([`generate`]).

pub mod autodiff;
pub mod dataset;
pub mod dfs;
pub mod error;
pub mod eval;
pub mod features;
pub mod generate;
pub mod graph;
pub mod model;
pub mod rng;
pub mod train;

pub use error::{Error, Result};
pub use graph::Graph;
