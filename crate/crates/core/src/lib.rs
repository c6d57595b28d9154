//! Streaming compression of positive discrete quadrature rules: prune an
//! M-node positive rule down to at most N nodes while exactly preserving N
//! prescribed moments, with bounded O(N^2) working memory.

pub mod baselines;
pub mod basis;
pub mod error;
pub mod givens_qr;
pub mod harness;
pub mod io_stream;
pub mod measure;
pub mod pruning;
pub mod registry;

pub use error::{Error, Result};
