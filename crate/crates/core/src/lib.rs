//! Factorization-machine recommenders trained with and without user
//! attributes, Top-N evaluation, and audits of how much attribute signal
//! survives into the recommendation lists.

pub mod audit;
pub mod corpus;
pub mod error;
pub mod metrics;
pub mod pipeline;
pub mod ranker;
pub mod report;
pub mod splits;
pub mod survival;

pub use error::{Error, Result};
