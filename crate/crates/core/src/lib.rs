//! EEG artifact detection: per-channel CNN-transformer detectors trained with
//! a Dirichlet evidence lower bound, aggregated into multi-channel segment
//! classifiers with gradient-boosted trees.

pub mod bmnet;
pub mod cli;
pub mod dataio;
pub mod dsp;
pub mod error;
pub mod evalkit;
pub mod gbdt;
pub mod numcore;
pub mod segfeat;

pub use error::{Error, Result};
