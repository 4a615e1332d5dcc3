//! Bayesian integrative factor analysis for multi-view data with joint
//! outcome prediction (BIP), optionally informed by feature grouping
//! structure (BIPnet).
//!
//! The model decomposes M feature views plus a continuous outcome into
//! sparse shared/individual latent components through two nested layers of
//! spike-and-slab indicators, fit by a partially collapsed Gibbs sampler
//! with Metropolis-Hastings moves for the indicator layers. Held-out
//! outcomes are predicted by Bayesian model averaging over retained
//! posterior draws.

pub mod collapsed;
pub mod error;
pub mod geweke;
mod linalg;
pub mod metrics;
pub mod model;
pub mod predict;
pub mod rng;
pub mod sampler;
pub mod simgen;

pub use error::BipError;
pub use model::{
    validate_and_standardize, ChainState, GroupDesign, Hyperparameters, PosteriorSummary,
    StandardizationRecord, ViewSet,
};
pub use predict::FittedModel;
pub use sampler::{fit, run_chain, SweepDiagnostics};
