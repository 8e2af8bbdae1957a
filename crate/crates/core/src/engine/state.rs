//! Full latent state of one Gibbs chain, its initialization, and the
//! joint log density used for trace monitoring.

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::emissions::{CategoricalEmission, EmissionState, LinearGaussianEmission};
use crate::engine::config::{EmissionConfig, ModelConfig};
use crate::error::{Error, Result};
use crate::hdp::{HdpHyper, TransitionState};
use crate::inference::{Observations, SequenceBatch};
use crate::rng::{dirichlet_draw, RandomStream};
use crate::similarity::{BinaryStateMatrix, KernelKind, LocationMatrix, StateSpace};
use crate::special::{
    beta_log_pdf, dirichlet_log_pdf, gamma_log_pdf, inv_gamma_log_pdf, normal_log_pdf,
};

/// Everything one chain owns: transition block, kernel decay, latent
/// state structure, emission parameters, assignments, and its random
/// stream. Serializable bit-exactly for checkpointing.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChainState {
    pub hyper: HdpHyper,
    pub trans: TransitionState,
    /// Kernel decay rate; pinned to 0 under the constant kernel.
    pub lambda: f64,
    pub space: StateSpace,
    pub emission: EmissionState,
    /// Hidden state sequence per observation sequence.
    pub assignments: Vec<Vec<usize>>,
    pub rng: RandomStream,
    pub iteration: u64,
    /// Current (possibly adapted) HMC step size for location updates.
    pub hmc_step: f64,
    pub hmc_accepted: u64,
    pub hmc_attempted: u64,
}

impl ChainState {
    /// Initialize a chain: concentrations at prior means, rates from
    /// their priors, state structure and emissions from their priors,
    /// and assignments drawn independently from the top-level weights.
    pub fn init(
        cfg: &ModelConfig,
        data: &SequenceBatch,
        fixed_weights: Option<&Array2<f64>>,
        mut rng: RandomStream,
    ) -> Result<Self> {
        cfg.validate()?;
        let trunc = cfg.truncation;
        let mut hyper = HdpHyper {
            alpha: cfg.hdp.a_alpha / cfg.hdp.b_alpha,
            gamma: cfg.hdp.a_gamma / cfg.hdp.b_gamma,
            kappa: 0.0,
            a_alpha: cfg.hdp.a_alpha,
            b_alpha: cfg.hdp.b_alpha,
            a_gamma: cfg.hdp.a_gamma,
            b_gamma: cfg.hdp.b_gamma,
            trunc,
        };
        if cfg.variant.is_sticky() {
            // self-mass ratio starts at 1/2, i.e. kappa = alpha
            hyper.kappa = hyper.alpha;
        }
        let trans = TransitionState::prior_init(&hyper, &mut rng)?;

        let lambda = if cfg.kernel.kind == KernelKind::Constant {
            0.0
        } else {
            cfg.kernel.lambda_init
        };

        let space = match (&cfg.emission, cfg.kernel.kind) {
            (EmissionConfig::LinearGaussian { speakers, a_mu, b_mu, .. }, kind) => {
                if kind == KernelKind::GaussianEuclidean {
                    return Err(Error::parameter(
                        "linear-Gaussian emissions pair with the constant or \
                         Laplacian-Hamming kernel",
                    ));
                }
                let mu = Array1::from_elem(*speakers, a_mu / (a_mu + b_mu));
                let eta =
                    Array2::from_shape_fn((trunc, *speakers), |(_, d)| {
                        u8::from(rng.bernoulli(mu[d]))
                    });
                StateSpace::Binary(BinaryStateMatrix {
                    eta,
                    mu,
                    a_mu: *a_mu,
                    b_mu: *b_mu,
                })
            }
            (EmissionConfig::Categorical { .. }, KernelKind::GaussianEuclidean) => {
                let sd = (1.0 / cfg.kernel.h_loc).sqrt();
                StateSpace::Euclidean(LocationMatrix {
                    loc: Array2::from_shape_fn((trunc, cfg.kernel.loc_dim), |_| {
                        sd * rng.standard_normal()
                    }),
                })
            }
            (EmissionConfig::Categorical { .. }, KernelKind::Constant) => StateSpace::None,
            (EmissionConfig::Categorical { .. }, KernelKind::LaplacianHamming) => {
                return Err(Error::parameter(
                    "categorical emissions pair with the constant or \
                     Gaussian-Euclidean kernel",
                ));
            }
        };

        let emission = match &cfg.emission {
            EmissionConfig::LinearGaussian {
                speakers,
                a_sigma,
                b_sigma,
                w_fixed,
                w_prior_prec,
                ..
            } => {
                let channels = match &data.observations {
                    Observations::Real(seqs) => seqs
                        .first()
                        .map(|m| m.ncols())
                        .ok_or_else(|| Error::input("empty observation batch"))?,
                    _ => {
                        return Err(Error::parameter(
                            "linear-Gaussian emissions need real-valued data",
                        ))
                    }
                };
                let weights = match fixed_weights {
                    Some(w) => {
                        if w.nrows() != speakers + 1 || w.ncols() != channels {
                            return Err(Error::input(format!(
                                "weight matrix is {}x{}, expected {}x{channels}",
                                w.nrows(),
                                w.ncols(),
                                speakers + 1
                            )));
                        }
                        w.clone()
                    }
                    None => {
                        if *w_fixed {
                            return Err(Error::parameter(
                                "w_fixed requires a weight matrix (simulator output or file)",
                            ));
                        }
                        let sd = (1.0 / w_prior_prec).sqrt();
                        Array2::from_shape_fn((speakers + 1, channels), |_| {
                            sd * rng.standard_normal()
                        })
                    }
                };
                EmissionState::LinearGaussian(LinearGaussianEmission {
                    weights,
                    noise_var: Array1::ones(channels),
                    a_sigma: *a_sigma,
                    b_sigma: *b_sigma,
                    w_fixed: *w_fixed,
                    w_prior_prec: *w_prior_prec,
                })
            }
            EmissionConfig::Categorical { vocab, a0 } => {
                let needed = data
                    .observations
                    .max_symbol()
                    .map(|m| m + 1)
                    .unwrap_or(0);
                let vocab = match vocab {
                    Some(v) => {
                        if *v < needed {
                            return Err(Error::input(format!(
                                "vocab {v} smaller than largest symbol + 1 ({needed})"
                            )));
                        }
                        *v
                    }
                    None => needed.max(2),
                };
                let mut theta = Array2::zeros((trunc, vocab));
                let masses = vec![*a0; vocab];
                for j in 0..trunc {
                    let row = dirichlet_draw(&masses, &mut rng)?;
                    for (v, value) in row.into_iter().enumerate() {
                        theta[(j, v)] = value;
                    }
                }
                EmissionState::Categorical(CategoricalEmission { theta, a0: *a0 })
            }
        };

        // assignments drawn independently from the top-level weights;
        // the first sweep replaces them wholesale
        let beta = trans.beta.as_slice().unwrap().to_vec();
        let assignments = data
            .observations
            .lengths()
            .iter()
            .map(|&len| {
                (0..len)
                    .map(|_| {
                        let mut u = rng.uniform();
                        for (j, &b) in beta.iter().enumerate() {
                            u -= b;
                            if u <= 0.0 {
                                return j;
                            }
                        }
                        beta.len() - 1
                    })
                    .collect()
            })
            .collect();

        Ok(ChainState {
            hyper,
            trans,
            lambda,
            space,
            emission,
            assignments,
            rng,
            iteration: 0,
            hmc_step: cfg.kernel.hmc_step,
            hmc_accepted: 0,
            hmc_attempted: 0,
        })
    }

    /// Number of distinct states currently used by the assignments.
    pub fn occupied_states(&self) -> usize {
        let mut seen = vec![false; self.hyper.trunc];
        for z in &self.assignments {
            for &s in z {
                seen[s] = true;
            }
        }
        seen.iter().filter(|&&s| s).count()
    }

    /// Joint log density of the persistent model variables (priors,
    /// rates, kernel and emission parameters, hidden path, data);
    /// augmentation variables are deliberately omitted. Used as a trace
    /// diagnostic, not by any update.
    pub fn log_joint(&self, cfg: &ModelConfig, data: &SequenceBatch) -> Result<f64> {
        use crate::emissions::loglik_table;
        use crate::inference::normalize_transitions;
        use crate::similarity::compute_phi;

        let trunc = self.hyper.trunc;
        let mut lp = gamma_log_pdf(self.hyper.alpha, self.hyper.a_alpha, self.hyper.b_alpha)
            + gamma_log_pdf(self.hyper.gamma, self.hyper.a_gamma, self.hyper.b_gamma);

        let base = vec![self.hyper.gamma / trunc as f64; trunc];
        lp += dirichlet_log_pdf(self.trans.beta.as_slice().unwrap(), &base);

        for a in 0..trunc {
            for b in 0..trunc {
                let shape = (self.hyper.alpha * self.trans.beta[b]
                    + if a == b { self.hyper.kappa } else { 0.0 })
                .max(f64::MIN_POSITIVE);
                lp += gamma_log_pdf(self.trans.rates[(a, b)], shape, 1.0);
            }
            lp += gamma_log_pdf(
                self.trans.init_rates[a],
                (self.hyper.alpha * self.trans.beta[a]).max(f64::MIN_POSITIVE),
                1.0,
            );
        }

        if cfg.kernel.kind != KernelKind::Constant {
            lp += cfg.kernel.b_lambda.ln() - cfg.kernel.b_lambda * self.lambda;
        }
        match &self.space {
            StateSpace::Binary(bits) => {
                for d in 0..bits.dims() {
                    lp += beta_log_pdf(bits.mu[d], bits.a_mu, bits.b_mu);
                    for j in 0..bits.states() {
                        lp += if bits.eta[(j, d)] == 1 {
                            bits.mu[d].ln()
                        } else {
                            (1.0 - bits.mu[d]).ln()
                        };
                    }
                }
            }
            StateSpace::Euclidean(locs) => {
                let var = 1.0 / cfg.kernel.h_loc;
                for v in locs.loc.iter() {
                    lp += normal_log_pdf(*v, 0.0, var);
                }
            }
            StateSpace::None => {}
        }

        match &self.emission {
            EmissionState::LinearGaussian(lg) => {
                for &v in lg.noise_var.iter() {
                    lp += inv_gamma_log_pdf(v, lg.a_sigma, lg.b_sigma);
                }
                if !lg.w_fixed {
                    for &w in lg.weights.iter() {
                        lp += normal_log_pdf(w, 0.0, 1.0 / lg.w_prior_prec);
                    }
                }
            }
            EmissionState::Categorical(cat) => {
                let masses = vec![cat.a0; cat.theta.ncols()];
                for j in 0..cat.theta.nrows() {
                    lp += dirichlet_log_pdf(cat.theta.row(j).as_slice().unwrap(), &masses);
                }
            }
        }

        let phi = compute_phi(cfg.kernel.kind, self.lambda, &self.space, trunc)?;
        let nt = normalize_transitions(&self.trans.rates, &self.trans.init_rates, &phi)?;
        for (seq, z) in self.assignments.iter().enumerate() {
            let table = loglik_table(
                &self.emission,
                self.space.binary(),
                &data.observations,
                seq,
                trunc,
            )?;
            if let Some(&first) = z.first() {
                lp += nt.init[first].ln();
                lp += table[(0, first)];
            }
            for (t, pair) in z.windows(2).enumerate() {
                lp += nt.probs[(pair[0], pair[1])].ln();
                lp += table[(t + 1, pair[1])];
            }
        }
        Ok(lp)
    }
}
