//! Hierarchical Dirichlet process hidden Markov models with
//! similarity-biased ("local") transitions, in vanilla, Sticky, LT, and
//! Sticky-LT flavors.
//!
//! Transition rates are modeled as unnormalized Gammas under a weak-limit
//! HDP prior and rescaled elementwise by a similarity kernel over the
//! latent states. Inference runs a Gibbs sampler over an augmented
//! representation in which jump attempts between dissimilar states can
//! fail: reinstating the holding times and failed-attempt counts restores
//! conjugacy for every transition-side conditional, and the hidden path
//! is drawn jointly by forward filtering / backward sampling.
//!
//! The crate also ships the data simulators used in the experiments, the
//! evaluation metrics, and a correctness harness (brute-force conditional
//! oracles plus a forward-vs-Gibbs joint distribution test).

pub mod ars;
pub mod datagen;
pub mod emissions;
pub mod engine;
pub mod error;
pub mod hdp;
pub mod hmc;
pub mod inference;
pub mod io;
pub mod rng;
pub mod similarity;
pub mod special;
pub mod validation;

pub use error::{Error, Result};
pub use rng::RandomStream;
