//! The rescaled-HDP transition block under the weak-limit truncation:
//! storage and Gibbs updates for the top-level weights, the unnormalized
//! transition rate matrix, the augmentation variables (holding times,
//! failed-jump counts, table counts), and the concentration parameters.
//!
//! Every conditional here is available both as a parameter computation
//! (`*_posterior_*`) and as a draw, so tests can assert the algebra
//! without relying on sampled values. With `phi ≡ 1` the failed-jump
//! counts are almost surely zero and every conditional reduces to the
//! plain weak-limit HDP-HMM sampler.

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{beta_draw, crp_table_count, dirichlet_draw, gamma_draw, poisson_draw, RandomStream};

/// Guard against a diverging augmentation. Large transient failed-jump
/// excursions are legitimate under the Gaussian kernel (weakly-restored
/// location spread) and self-correct on the next sweep through the rate
/// shapes, so the guard only trips when the state is numerically broken.
const MAX_FAILED_JUMPS_PER_ENTRY: u64 = 2_000_000_000;

/// Concentration parameters, their Gamma priors, the Sticky self-mass,
/// and the truncation level.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HdpHyper {
    /// DP concentration over transition rows (α).
    pub alpha: f64,
    /// Top-level concentration (γ).
    pub gamma: f64,
    /// Extra prior mass on self-transitions; 0 for non-Sticky variants.
    pub kappa: f64,
    pub a_alpha: f64,
    pub b_alpha: f64,
    pub a_gamma: f64,
    pub b_gamma: f64,
    /// Weak-limit truncation level J.
    pub trunc: usize,
}

impl HdpHyper {
    pub fn new(trunc: usize) -> Self {
        HdpHyper {
            alpha: 1.0,
            gamma: 1.0,
            kappa: 0.0,
            a_alpha: 0.1,
            b_alpha: 0.1,
            a_gamma: 0.1,
            b_gamma: 0.1,
            trunc,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.trunc < 2 {
            return Err(Error::parameter("truncation level must be at least 2"));
        }
        for (name, v) in [
            ("alpha", self.alpha),
            ("gamma", self.gamma),
            ("a_alpha", self.a_alpha),
            ("b_alpha", self.b_alpha),
            ("a_gamma", self.a_gamma),
            ("b_gamma", self.b_gamma),
        ] {
            if !(v > 0.0) {
                return Err(Error::parameter(format!("{name} must be positive, got {v}")));
            }
        }
        if self.kappa < 0.0 {
            return Err(Error::parameter("kappa must be nonnegative"));
        }
        Ok(())
    }
}

/// All transition-side latent state of one chain.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TransitionState {
    /// Top-level state weights (simplex of length J).
    pub beta: Array1<f64>,
    /// Unnormalized transition rates, J×J, strictly positive.
    pub rates: Array2<f64>,
    /// Rates for the initial-state distribution (not rescaled by `phi`).
    pub init_rates: Array1<f64>,
    /// Total holding time per source state (zero iff the state has no
    /// outgoing transitions).
    pub hold_times: Array1<f64>,
    /// Failed jump-attempt counts.
    pub failed_jumps: Array2<u64>,
    /// Table counts for the transition restaurant of each (source, dest).
    pub tables: Array2<u64>,
    /// Second-level table counts feeding the top-level concentration.
    pub top_tables: Array1<u64>,
    /// Beta-distributed stick auxiliary for the top-level concentration.
    pub stick_aux: f64,
    /// Transition counts from the current state sequence(s).
    pub trans_counts: Array2<u64>,
    /// Initial-state counts, one increment per sequence.
    pub init_counts: Array1<u64>,
}

impl TransitionState {
    /// Fresh state with all evidence counts at zero and rates drawn from
    /// their priors.
    pub fn prior_init(hyper: &HdpHyper, rng: &mut RandomStream) -> Result<Self> {
        hyper.validate()?;
        let j = hyper.trunc;
        let masses = vec![hyper.gamma / j as f64; j];
        let beta = Array1::from(dirichlet_draw(&masses, rng)?);
        let mut state = TransitionState {
            beta,
            rates: Array2::zeros((j, j)),
            init_rates: Array1::zeros(j),
            hold_times: Array1::zeros(j),
            failed_jumps: Array2::zeros((j, j)),
            tables: Array2::zeros((j, j)),
            top_tables: Array1::zeros(j),
            stick_aux: 0.5,
            trans_counts: Array2::zeros((j, j)),
            init_counts: Array1::zeros(j),
        };
        sample_pi(&mut state, hyper, rng)?;
        sample_pi0(&mut state, hyper, rng)?;
        Ok(state)
    }

    pub fn trunc(&self) -> usize {
        self.beta.len()
    }

    /// Total tables across the transition matrix.
    pub fn total_tables(&self) -> u64 {
        self.tables.iter().sum()
    }
}

/// Row totals `T_j = Σ_j' rate_jj'·phi_jj'` of the rescaled rate matrix.
pub fn row_rate_totals(rates: &Array2<f64>, phi: &Array2<f64>) -> Array1<f64> {
    let j = rates.nrows();
    Array1::from_shape_fn(j, |a| {
        (0..j).map(|b| rates[(a, b)] * phi[(a, b)]).sum()
    })
}

/// Holding times: `u_j ~ Gamma(n_j·, T_j)` for occupied states, exactly
/// zero for unoccupied ones.
pub fn sample_u(
    state: &mut TransitionState,
    phi: &Array2<f64>,
    rng: &mut RandomStream,
) -> Result<()> {
    let totals = row_rate_totals(&state.rates, phi);
    for j in 0..state.trunc() {
        let visits: u64 = state.trans_counts.row(j).iter().sum();
        state.hold_times[j] = if visits == 0 {
            0.0
        } else {
            gamma_draw(visits as f64, totals[j], rng)?
        };
    }
    Ok(())
}

/// Failed jump attempts: `q_jj' ~ Poisson(u_j · rate_jj' · (1 − phi_jj'))`.
pub fn sample_q(
    state: &mut TransitionState,
    phi: &Array2<f64>,
    rng: &mut RandomStream,
) -> Result<()> {
    let j = state.trunc();
    for a in 0..j {
        for b in 0..j {
            let rate = state.hold_times[a] * state.rates[(a, b)] * (1.0 - phi[(a, b)]).max(0.0);
            let q = poisson_draw(rate, rng)?;
            if q > MAX_FAILED_JUMPS_PER_ENTRY {
                return Err(Error::numeric(format!(
                    "failed-jump count {q} at ({a},{b}) exceeds the divergence guard"
                )));
            }
            state.failed_jumps[(a, b)] = q;
        }
    }
    Ok(())
}

/// Gamma shape of each rate entry's conditional:
/// `α·β_j' + κ·[j=j'] + n_jj' + q_jj'`. Shapes are floored at the
/// smallest normal float: the product α·β legitimately underflows when
/// both concentrations crash to their prior tails, and a draw from an
/// (effectively degenerate) tiny-shape Gamma is what such a shape means.
pub fn pi_posterior_shapes(state: &TransitionState, hyper: &HdpHyper) -> Array2<f64> {
    let j = state.trunc();
    Array2::from_shape_fn((j, j), |(a, b)| {
        let sticky = if a == b { hyper.kappa } else { 0.0 };
        (hyper.alpha * state.beta[b]
            + sticky
            + state.trans_counts[(a, b)] as f64
            + state.failed_jumps[(a, b)] as f64)
            .max(f64::MIN_POSITIVE)
    })
}

/// Gamma rate of each row's conditional: `1 + u_j`.
pub fn pi_posterior_rates(state: &TransitionState) -> Array1<f64> {
    state.hold_times.mapv(|u| 1.0 + u)
}

/// Rate matrix update; entries are conditionally independent Gammas.
pub fn sample_pi(
    state: &mut TransitionState,
    hyper: &HdpHyper,
    rng: &mut RandomStream,
) -> Result<()> {
    let shapes = pi_posterior_shapes(state, hyper);
    let rates = pi_posterior_rates(state);
    let j = state.trunc();
    for a in 0..j {
        for b in 0..j {
            state.rates[(a, b)] = gamma_draw(shapes[(a, b)], rates[a], rng)?;
        }
    }
    Ok(())
}

/// Gamma shapes of the initial-rate conditional: `α·β_j + N0_j`.
/// The initial row takes no part in the jump augmentation, so its Gamma
/// rate stays at 1.
pub fn pi0_posterior_shapes(state: &TransitionState, hyper: &HdpHyper) -> Array1<f64> {
    Array1::from_shape_fn(state.trunc(), |b| {
        (hyper.alpha * state.beta[b] + state.init_counts[b] as f64).max(f64::MIN_POSITIVE)
    })
}

pub fn sample_pi0(
    state: &mut TransitionState,
    hyper: &HdpHyper,
    rng: &mut RandomStream,
) -> Result<()> {
    let shapes = pi0_posterior_shapes(state, hyper);
    for (rate, shape) in state.init_rates.iter_mut().zip(shapes.iter()) {
        *rate = gamma_draw(*shape, 1.0, rng)?;
    }
    Ok(())
}

/// Restaurant mass for each (source, dest): `α·β_j' + κ·[j=j']`.
pub fn table_masses(state: &TransitionState, hyper: &HdpHyper) -> Array2<f64> {
    let j = state.trunc();
    Array2::from_shape_fn((j, j), |(a, b)| {
        (hyper.alpha * state.beta[b] + if a == b { hyper.kappa } else { 0.0 })
            .max(f64::MIN_POSITIVE)
    })
}

/// Table counts: CRP simulation with `n_jj' + q_jj'` customers per entry.
pub fn sample_m(
    state: &mut TransitionState,
    hyper: &HdpHyper,
    rng: &mut RandomStream,
) -> Result<()> {
    let masses = table_masses(state, hyper);
    let j = state.trunc();
    for a in 0..j {
        for b in 0..j {
            let customers = state.trans_counts[(a, b)] + state.failed_jumps[(a, b)];
            state.tables[(a, b)] = if customers == 0 {
                0
            } else {
                crp_table_count(customers, masses[(a, b)], rng)?
            };
        }
    }
    Ok(())
}

/// Dirichlet masses of the top-level weight conditional: `γ/J + m_·j`.
pub fn beta_posterior_masses(state: &TransitionState, hyper: &HdpHyper) -> Array1<f64> {
    let j = state.trunc();
    Array1::from_shape_fn(j, |b| {
        hyper.gamma / j as f64 + state.tables.column(b).iter().sum::<u64>() as f64
    })
}

pub fn sample_beta(
    state: &mut TransitionState,
    hyper: &HdpHyper,
    rng: &mut RandomStream,
) -> Result<()> {
    let masses = beta_posterior_masses(state, hyper);
    state.beta = Array1::from(dirichlet_draw(masses.as_slice().unwrap(), rng)?);
    Ok(())
}

/// Shape and rate of the α conditional:
/// `Gamma(a_α + m_··, b_α + Σ_j log(1 + u_j))`.
pub fn alpha_posterior(state: &TransitionState, hyper: &HdpHyper) -> (f64, f64) {
    let shape = hyper.a_alpha + state.total_tables() as f64;
    let rate = hyper.b_alpha + state.hold_times.iter().map(|&u| u.ln_1p()).sum::<f64>();
    (shape, rate)
}

pub fn sample_alpha(
    state: &TransitionState,
    hyper: &mut HdpHyper,
    rng: &mut RandomStream,
) -> Result<()> {
    let (shape, rate) = alpha_posterior(state, hyper);
    hyper.alpha = gamma_draw(shape, rate, rng)?;
    Ok(())
}

/// Second-level auxiliaries: `r_j' ~ TableCount(m_·j', γ/J)` and
/// `w ~ Beta(γ, m_··)`. With no tables at all the stick draw is skipped
/// (its density would be improper) and the previous value is kept; the γ
/// update falls back to the prior in that case.
pub fn sample_r_w(
    state: &mut TransitionState,
    hyper: &HdpHyper,
    rng: &mut RandomStream,
) -> Result<()> {
    let j = state.trunc();
    let base = hyper.gamma / j as f64;
    for b in 0..j {
        let customers: u64 = state.tables.column(b).iter().sum();
        state.top_tables[b] = if customers == 0 {
            0
        } else {
            crp_table_count(customers, base, rng)?
        };
    }
    let total = state.total_tables();
    if total > 0 {
        state.stick_aux = beta_draw(hyper.gamma, total as f64, rng)?;
    }
    Ok(())
}

/// Shape and rate of the γ conditional, `Gamma(a_γ + r_·, b_γ − log w)`,
/// falling back to the prior when there are no tables.
pub fn gamma_posterior(state: &TransitionState, hyper: &HdpHyper) -> (f64, f64) {
    if state.total_tables() == 0 {
        return (hyper.a_gamma, hyper.b_gamma);
    }
    let shape = hyper.a_gamma + state.top_tables.iter().sum::<u64>() as f64;
    let rate = hyper.b_gamma - state.stick_aux.ln();
    (shape, rate)
}

pub fn sample_gamma_conc(
    state: &TransitionState,
    hyper: &mut HdpHyper,
    rng: &mut RandomStream,
) -> Result<()> {
    let (shape, rate) = gamma_posterior(state, hyper);
    hyper.gamma = gamma_draw(shape, rate, rng)?;
    Ok(())
}

/// Outcome of the Sticky self-mass update: how the diagonal tables were
/// split between the self-transition mass and the shared base.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StickySplit {
    pub sticky: u64,
    pub regular: u64,
}

/// Sticky self-mass update. Each diagonal table is attributed to the
/// self-transition mass with probability `κ/(α·β_j + κ)`; the ratio
/// `ρ = κ/(α+κ)` is resampled from `Beta(1 + #sticky, 1 + #regular)`
/// (uniform prior) and κ recovered as `ρ·α/(1−ρ)`.
///
/// Tables attributed to the self-mass are removed from the stored table
/// counts so the top-level weight update only sees tables that came from
/// the shared base measure.
pub fn sticky_rho_update(
    state: &mut TransitionState,
    hyper: &mut HdpHyper,
    rng: &mut RandomStream,
) -> Result<StickySplit> {
    let mut sticky_total = 0u64;
    let mut regular_total = 0u64;
    for j in 0..state.trunc() {
        let m = state.tables[(j, j)];
        let p = if hyper.kappa > 0.0 {
            hyper.kappa / (hyper.alpha * state.beta[j] + hyper.kappa).max(f64::MIN_POSITIVE)
        } else {
            0.0
        };
        let mut sticky = 0u64;
        for _ in 0..m {
            if rng.bernoulli(p) {
                sticky += 1;
            }
        }
        sticky_total += sticky;
        regular_total += m - sticky;
        state.tables[(j, j)] = m - sticky;
    }
    let rho = beta_draw(
        1.0 + sticky_total as f64,
        1.0 + regular_total as f64,
        rng,
    )?
    .clamp(1e-12, 1.0 - 1e-9);
    hyper.kappa = rho * hyper.alpha / (1.0 - rho);
    Ok(StickySplit {
        sticky: sticky_total,
        regular: regular_total,
    })
}
