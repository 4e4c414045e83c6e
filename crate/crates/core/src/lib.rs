pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod corpus;
pub mod embeddings;
pub mod error;
pub mod eval;
pub mod graph;
pub mod nn;
pub mod pipeline;
pub mod stage1;
pub mod stage2;
pub mod tags;
pub mod trainer;

pub use error::{AsteError, Result};
