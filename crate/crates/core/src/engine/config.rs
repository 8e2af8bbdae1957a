//! Experiment configuration: model variant, kernel, emission family,
//! priors, and the sampling schedule. Deserialized from a single JSON
//! document; every field has a default so configs can stay sparse.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::similarity::{KernelKind, KernelSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    Vanilla,
    Sticky,
    Lt,
    StickyLt,
}

impl Variant {
    pub fn is_sticky(self) -> bool {
        matches!(self, Variant::Sticky | Variant::StickyLt)
    }

    pub fn is_lt(self) -> bool {
        matches!(self, Variant::Lt | Variant::StickyLt)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Vanilla => "vanilla",
            Variant::Sticky => "sticky",
            Variant::Lt => "lt",
            Variant::StickyLt => "sticky-lt",
        }
    }
}

impl std::str::FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "vanilla" => Ok(Variant::Vanilla),
            "sticky" => Ok(Variant::Sticky),
            "lt" => Ok(Variant::Lt),
            "sticky-lt" => Ok(Variant::StickyLt),
            other => Err(Error::input(format!(
                "unknown variant '{other}' (expected vanilla|sticky|lt|sticky-lt)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct HdpPriorConfig {
    pub a_alpha: f64,
    pub b_alpha: f64,
    pub a_gamma: f64,
    pub b_gamma: f64,
}

impl Default for HdpPriorConfig {
    fn default() -> Self {
        HdpPriorConfig {
            a_alpha: 0.1,
            b_alpha: 0.1,
            a_gamma: 0.1,
            b_gamma: 0.1,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum EmissionConfig {
    LinearGaussian {
        /// Number of binary state coordinates (speakers).
        speakers: usize,
        #[serde(default = "default_noise_prior")]
        a_sigma: f64,
        #[serde(default = "default_noise_prior")]
        b_sigma: f64,
        #[serde(default = "default_one")]
        a_mu: f64,
        #[serde(default = "default_one")]
        b_mu: f64,
        /// Pin the weights to a supplied matrix (evaluation protocol).
        #[serde(default = "default_true")]
        w_fixed: bool,
        #[serde(default = "default_one")]
        w_prior_prec: f64,
    },
    Categorical {
        /// Vocabulary size; derived from the data when absent.
        #[serde(default)]
        vocab: Option<usize>,
        #[serde(default = "default_half")]
        a0: f64,
    },
}

fn default_noise_prior() -> f64 {
    0.1
}

fn default_one() -> f64 {
    1.0
}

fn default_half() -> f64 {
    0.5
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelConfig {
    pub variant: Variant,
    #[serde(default = "default_trunc")]
    pub truncation: usize,
    #[serde(default = "default_iterations")]
    pub iterations: u64,
    #[serde(default = "default_burn_in")]
    pub burn_in: u64,
    #[serde(default = "default_thin")]
    pub thin: u64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_chains")]
    pub chains: usize,
    #[serde(default)]
    pub hdp: HdpPriorConfig,
    #[serde(default = "default_kernel")]
    pub kernel: KernelSpec,
    pub emission: EmissionConfig,
}

fn default_trunc() -> usize {
    20
}

fn default_iterations() -> u64 {
    3000
}

fn default_burn_in() -> u64 {
    1000
}

fn default_thin() -> u64 {
    10
}

fn default_chains() -> usize {
    5
}

fn default_kernel() -> KernelSpec {
    KernelSpec::constant()
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations <= self.burn_in {
            return Err(Error::parameter(format!(
                "iterations ({}) must exceed burn_in ({})",
                self.iterations, self.burn_in
            )));
        }
        if self.thin == 0 {
            return Err(Error::parameter("thin must be at least 1"));
        }
        if self.truncation < 2 {
            return Err(Error::parameter("truncation must be at least 2"));
        }
        if self.chains == 0 {
            return Err(Error::parameter("at least one chain is required"));
        }
        let constant = self.kernel.kind == KernelKind::Constant;
        if self.variant.is_lt() && constant {
            return Err(Error::parameter(
                "lt variants need a non-constant similarity kernel",
            ));
        }
        if !self.variant.is_lt() && !constant {
            return Err(Error::parameter(
                "vanilla/sticky variants force the constant kernel",
            ));
        }
        if self.kernel.kind == KernelKind::GaussianEuclidean && self.kernel.loc_dim == 0 {
            return Err(Error::parameter(
                "the Gaussian kernel needs loc_dim >= 1",
            ));
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ModelConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sparse_config_parses_with_defaults() {
        let cfg = ModelConfig::from_json(
            r#"{
                "variant": "vanilla",
                "iterations": 100,
                "burn_in": 10,
                "emission": {"type": "categorical"}
            }"#,
        )
        .unwrap();
        assert_eq!(cfg.truncation, 20);
        assert_eq!(cfg.thin, 10);
        assert_eq!(cfg.kernel.kind, KernelKind::Constant);
    }

    #[test]
    fn variant_kernel_consistency_enforced() {
        let bad = ModelConfig {
            variant: Variant::Lt,
            truncation: 10,
            iterations: 100,
            burn_in: 10,
            thin: 1,
            seed: 0,
            chains: 1,
            hdp: HdpPriorConfig::default(),
            kernel: KernelSpec::constant(),
            emission: EmissionConfig::Categorical {
                vocab: Some(4),
                a0: 0.5,
            },
        };
        assert!(bad.validate().is_err());

        let mut swapped = bad;
        swapped.variant = Variant::Vanilla;
        swapped.kernel = KernelSpec::laplacian_hamming(1.0);
        assert!(swapped.validate().is_err());
    }

    #[test]
    fn schedule_sanity_enforced() {
        let mut cfg = ModelConfig::from_json(
            r#"{"variant": "vanilla", "emission": {"type": "categorical"}}"#,
        )
        .unwrap();
        cfg.burn_in = cfg.iterations;
        assert!(cfg.validate().is_err());
    }
}
