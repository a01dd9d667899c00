//! Simulation and analysis of algorithmic collective action against
//! sequential playlist-continuation recommenders.

pub mod corpus;
pub mod error;
pub mod eval;
pub mod par;
pub mod recommender;
pub mod runner;
pub mod seed;
pub mod stats;
pub mod strategy;

pub use error::{Error, Result};
