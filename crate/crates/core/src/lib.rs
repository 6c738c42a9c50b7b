//! Simulator for load-aware clustering and ON/OFF switching of small cells
//! driven by per-cluster regret learning.

pub mod association;
pub mod clustering;
pub mod coordination;
pub mod diagnostics;
pub mod error;
pub mod experiment;
pub mod learning;
pub mod linalg;
pub mod network;
pub mod scenario;
pub mod similarity;
pub mod sim;

pub use error::{Error, Result};
