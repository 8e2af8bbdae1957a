//! Sampler-correctness harness: brute-force conditional oracles and a
//! joint-distribution (forward vs. Gibbs-cycle) consistency test, plus
//! the statistics they rely on.

pub mod geweke;
pub mod oracles;
pub mod stats;

pub use geweke::{forward_joint_draw, geweke_test, GewekeConfig, GewekeReport};
pub use oracles::{conditional_oracle_suite, OracleCheck, OracleReport};
