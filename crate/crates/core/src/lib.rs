//! Temporal mix-of-experts (TMOE) attention and the TimeExpert /
//! TimeExpert-G forecasting models, with data loading, training, evaluation
//! harnesses and ablation runners.

pub mod attention;
pub mod data;
pub mod error;
pub mod eval;
pub mod model;
pub mod numerics;
pub mod training;

pub use error::{Error, Result};
