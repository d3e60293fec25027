//! Poisoning attacks and robust training for link prediction on
//! continuous-time dynamic graphs.

pub mod attack;
pub mod autodiff;
pub mod cli;
pub mod ctdg;
pub mod defense;
pub mod error;
pub mod eval;
pub mod seed;
pub mod stats;
pub mod tgnn;

pub use error::{Error, Result};
