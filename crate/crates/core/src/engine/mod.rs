//! Gibbs sweep orchestration, experiment configuration, traces,
//! checkpoints, and metrics.

pub mod checkpoint;
pub mod config;
pub mod metrics;
pub mod run;
pub mod state;
pub mod sweep;
pub mod trace;

pub use checkpoint::{checkpoint_bytes, checkpoint_from_bytes, checkpoint_load, checkpoint_save};
pub use config::{EmissionConfig, HdpPriorConfig, ModelConfig, Variant};
pub use metrics::{f1_binary, f1_from_probs, hamming_metric, StateMatrixAccumulator};
pub use run::{
    pooled_state_matrix, run_chain, run_chains, summarize, ChainOutput, ChainSummary, RunMetrics,
};
pub use state::ChainState;
pub use sweep::{gibbs_sweep, gibbs_sweep_with, SamplerMutation};
pub use trace::{GibbsTrace, TraceRow};
