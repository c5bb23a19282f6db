//! Symmetry detection and data augmentation for MDP transition batches.

pub mod batch_io;
pub mod density;
pub mod dyneval;
pub mod envs;
pub mod error;
pub mod harness;
pub mod nn;
pub mod rng;
pub mod space;
pub mod symmetry;

pub use error::{Error, Result};
