//! Similarity kernels over latent states and the updates for their
//! parameters: the decay rate λ (adaptive rejection sampling), binary
//! state vectors η (coordinate-wise Gibbs), and continuous locations ℓ
//! (Hamiltonian Monte Carlo).
//!
//! A kernel produces the matrix `phi` with entries in (0,1], unit
//! diagonal, and symmetry. Transition rates get scaled elementwise by
//! `phi`, which is what makes transitions between similar states more
//! likely; `phi ≡ 1` recovers the unscaled model.

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::ars::{ars_sample, FnTarget};
use crate::error::{Error, Result};
use crate::hmc::hmc_step;
use crate::rng::RandomStream;
use crate::special::{ln_one_minus_exp_neg, sigmoid};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelKind {
    /// `phi ≡ 1`: no similarity bias.
    Constant,
    /// `phi = exp(-λ · hamming(η_j, η_j'))` over binary state vectors.
    LaplacianHamming,
    /// `phi = exp(-(λ/2) · ‖ℓ_j − ℓ_j'‖²)` over real locations.
    GaussianEuclidean,
}

/// Kernel configuration. `lambda` itself is chain state; this carries the
/// prior and proposal tuning.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KernelSpec {
    pub kind: KernelKind,
    /// Rate of the exponential prior on the decay rate λ.
    pub b_lambda: f64,
    pub lambda_init: f64,
    /// Keep λ at `lambda_init` instead of resampling it.
    pub fix_lambda: bool,
    /// Prior precision of the locations (Gaussian kernel only).
    pub h_loc: f64,
    /// Location dimensionality (Gaussian kernel only).
    pub loc_dim: usize,
    pub hmc_step: f64,
    pub hmc_leapfrog_steps: usize,
}

impl KernelSpec {
    pub fn constant() -> Self {
        KernelSpec {
            kind: KernelKind::Constant,
            b_lambda: 1.0,
            lambda_init: 0.0,
            fix_lambda: true,
            h_loc: 1.0,
            loc_dim: 0,
            hmc_step: 0.05,
            hmc_leapfrog_steps: 20,
        }
    }

    pub fn laplacian_hamming(b_lambda: f64) -> Self {
        KernelSpec {
            kind: KernelKind::LaplacianHamming,
            b_lambda,
            lambda_init: 1.0,
            fix_lambda: false,
            h_loc: 1.0,
            loc_dim: 0,
            hmc_step: 0.05,
            hmc_leapfrog_steps: 20,
        }
    }

    pub fn gaussian_euclidean(b_lambda: f64, h_loc: f64, loc_dim: usize) -> Self {
        KernelSpec {
            kind: KernelKind::GaussianEuclidean,
            b_lambda,
            lambda_init: 1.0,
            fix_lambda: false,
            h_loc,
            loc_dim,
            // the location conditional sharpens with the failed-jump
            // counts; a step this size keeps the integrator inside its
            // stability region so acceptance never collapses at startup
            hmc_step: 0.015,
            hmc_leapfrog_steps: 20,
        }
    }
}

/// Binary state vectors η (J×D) with coordinate-wise Beta-Bernoulli prior
/// means μ.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BinaryStateMatrix {
    pub eta: Array2<u8>,
    pub mu: Array1<f64>,
    pub a_mu: f64,
    pub b_mu: f64,
}

impl BinaryStateMatrix {
    pub fn states(&self) -> usize {
        self.eta.nrows()
    }

    pub fn dims(&self) -> usize {
        self.eta.ncols()
    }
}

/// Real-valued state locations ℓ (J×D).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LocationMatrix {
    pub loc: Array2<f64>,
}

/// Latent structure the kernel (and possibly the emission model) reads.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum StateSpace {
    Binary(BinaryStateMatrix),
    Euclidean(LocationMatrix),
    /// No per-state structure (categorical emissions without a kernel).
    None,
}

impl StateSpace {
    pub fn binary(&self) -> Option<&BinaryStateMatrix> {
        match self {
            StateSpace::Binary(b) => Some(b),
            _ => None,
        }
    }

    pub fn binary_mut(&mut self) -> Option<&mut BinaryStateMatrix> {
        match self {
            StateSpace::Binary(b) => Some(b),
            _ => None,
        }
    }

    pub fn euclidean(&self) -> Option<&LocationMatrix> {
        match self {
            StateSpace::Euclidean(l) => Some(l),
            _ => None,
        }
    }
}

/// Pairwise Hamming distances between the rows of a binary matrix.
pub fn hamming_distances(eta: &Array2<u8>) -> Array2<f64> {
    let j = eta.nrows();
    let mut out = Array2::zeros((j, j));
    for a in 0..j {
        for b in (a + 1)..j {
            let d = eta
                .row(a)
                .iter()
                .zip(eta.row(b).iter())
                .filter(|(x, y)| x != y)
                .count() as f64;
            out[(a, b)] = d;
            out[(b, a)] = d;
        }
    }
    out
}

/// Pairwise ½‖ℓ_a − ℓ_b‖² between rows; the ½ absorbs the Gaussian
/// kernel's λ/2 convention so `phi = exp(-λ·d)` uniformly.
pub fn half_sq_euclidean_distances(loc: &Array2<f64>) -> Array2<f64> {
    let j = loc.nrows();
    let mut out = Array2::zeros((j, j));
    for a in 0..j {
        for b in (a + 1)..j {
            let d: f64 = loc
                .row(a)
                .iter()
                .zip(loc.row(b).iter())
                .map(|(x, y)| (x - y) * (x - y))
                .sum();
            out[(a, b)] = 0.5 * d;
            out[(b, a)] = 0.5 * d;
        }
    }
    out
}

/// The distance matrix the decay rate λ acts on, or `None` for the
/// constant kernel.
pub fn kernel_distances(kind: KernelKind, space: &StateSpace) -> Result<Option<Array2<f64>>> {
    match kind {
        KernelKind::Constant => Ok(None),
        KernelKind::LaplacianHamming => {
            let b = space.binary().ok_or_else(|| {
                Error::parameter("Laplacian-Hamming kernel requires binary state vectors")
            })?;
            Ok(Some(hamming_distances(&b.eta)))
        }
        KernelKind::GaussianEuclidean => {
            let l = space.euclidean().ok_or_else(|| {
                Error::parameter("Gaussian-Euclidean kernel requires state locations")
            })?;
            Ok(Some(half_sq_euclidean_distances(&l.loc)))
        }
    }
}

/// Similarity matrix `phi` for the given kernel and state structure.
/// Symmetric, unit diagonal, entries in (0,1].
pub fn compute_phi(
    kind: KernelKind,
    lambda: f64,
    space: &StateSpace,
    trunc: usize,
) -> Result<Array2<f64>> {
    if lambda < 0.0 {
        return Err(Error::parameter(format!(
            "kernel decay rate must be nonnegative, got {lambda}"
        )));
    }
    match kernel_distances(kind, space)? {
        None => Ok(Array2::ones((trunc, trunc))),
        Some(d) => Ok(d.mapv(|v| (-lambda * v).exp())),
    }
}

/// Exact draw of the kernel decay rate λ from its conditional
///
/// `p(λ | z, Q, distances) ∝ exp{-(b_λ + Σ d·n)λ} · Π (1 - e^{-λ d})^q`
///
/// with diagonal terms excluded. The density is log-concave on (0, ∞),
/// so adaptive rejection sampling draws from it exactly.
pub fn sample_lambda(
    b_lambda: f64,
    distances: &Array2<f64>,
    trans_counts: &Array2<u64>,
    failed_jumps: &Array2<u64>,
    rng: &mut RandomStream,
) -> Result<f64> {
    if !(b_lambda > 0.0) {
        return Err(Error::parameter("sample_lambda requires b_lambda > 0"));
    }
    let j = distances.nrows();
    let mut rate = b_lambda;
    let mut failure_terms: Vec<(f64, f64)> = Vec::new();
    for a in 0..j {
        for b in 0..j {
            if a == b {
                continue;
            }
            let d = distances[(a, b)];
            rate += d * trans_counts[(a, b)] as f64;
            let q = failed_jumps[(a, b)];
            if q > 0 {
                if d <= 0.0 {
                    return Err(Error::integrity(format!(
                        "sample_lambda: {q} failed jumps recorded between states {a} and {b} \
                         at distance zero (phi = 1 admits no failures)"
                    )));
                }
                failure_terms.push((d, q as f64));
            }
        }
    }

    let terms = failure_terms.clone();
    let log_density = move |x: f64| {
        let mut h = -rate * x;
        for &(d, q) in &terms {
            h += q * ln_one_minus_exp_neg(x * d);
        }
        h
    };
    let terms = failure_terms;
    let gradient = move |x: f64| {
        let mut g = -rate;
        for &(d, q) in &terms {
            // d/dλ ln(1 - e^{-λd}) = d / (e^{λd} - 1)
            g += q * d / (x * d).exp_m1();
        }
        g
    };
    ars_sample(
        &FnTarget {
            log_density,
            gradient,
            lower: 0.0,
            upper: f64::INFINITY,
        },
        rng,
    )
}

/// Log odds of `η[j,d] = 1` against `η[j,d] = 0` given everything else:
/// prior log odds, successful-jump attraction, failed-jump repulsion, and
/// the caller-supplied emission log-likelihood ratio.
///
/// With λ = 0 the kernel is inert and only prior and emissions remain.
pub fn eta_log_odds(
    j: usize,
    d: usize,
    eta: &Array2<u8>,
    mu_d: f64,
    lambda: f64,
    trans_counts: &Array2<u64>,
    failed_jumps: &Array2<u64>,
    emission_log_ratio: f64,
) -> f64 {
    let mut log_odds = (mu_d / (1.0 - mu_d)).ln() + emission_log_ratio;
    if lambda > 0.0 {
        let states = eta.nrows();
        let dims = eta.ncols();
        let mut toward_ones = 0i64;
        let mut toward_zeros = 0i64;
        for other in 0..states {
            if other == j {
                continue;
            }
            let jumps = (trans_counts[(j, other)] + trans_counts[(other, j)]) as i64;
            if eta[(other, d)] == 1 {
                toward_ones += jumps;
            } else {
                toward_zeros += jumps;
            }
            let failures = failed_jumps[(j, other)] + failed_jumps[(other, j)];
            if failures > 0 {
                // Hamming distance excluding coordinate d
                let mut rest = 0u64;
                for dd in 0..dims {
                    if dd != d && eta[(j, dd)] != eta[(other, dd)] {
                        rest += 1;
                    }
                }
                // ln(1 - phi_rest·e^{-λ}) - ln(1 - phi_rest); the second
                // term is -∞ when the rows agree everywhere else, which
                // correctly forbids flipping into an identical state
                // while failures between the pair exist.
                let ratio = ln_one_minus_exp_neg(lambda * (rest as f64 + 1.0))
                    - ln_one_minus_exp_neg(lambda * rest as f64);
                let sign = if eta[(other, d)] == 1 { -1.0 } else { 1.0 };
                log_odds += sign * failures as f64 * ratio;
            }
        }
        log_odds += (toward_ones - toward_zeros) as f64 * lambda;
    }
    log_odds
}

/// One full coordinate sweep over η in fixed (state, coordinate) order.
/// `emission_log_ratio(j, d, eta)` must return the summed log likelihood
/// ratio of the observations assigned to state `j` under `η[j,d] = 1`
/// versus `0`, evaluated at the current η.
pub fn gibbs_update_eta<F>(
    states: &mut BinaryStateMatrix,
    lambda: f64,
    trans_counts: &Array2<u64>,
    failed_jumps: &Array2<u64>,
    mut emission_log_ratio: F,
    rng: &mut RandomStream,
) where
    F: FnMut(usize, usize, &Array2<u8>) -> f64,
{
    for j in 0..states.states() {
        for d in 0..states.dims() {
            let ratio = emission_log_ratio(j, d, &states.eta);
            let log_odds = eta_log_odds(
                j,
                d,
                &states.eta,
                states.mu[d],
                lambda,
                trans_counts,
                failed_jumps,
                ratio,
            );
            states.eta[(j, d)] = u8::from(rng.bernoulli(sigmoid(log_odds)));
        }
    }
}

/// Negative log posterior (potential) of the locations given transition
/// evidence, up to an additive constant.
pub fn location_potential(
    flat: &[f64],
    states: usize,
    dims: usize,
    h_loc: f64,
    lambda: f64,
    trans_counts: &Array2<u64>,
    failed_jumps: &Array2<u64>,
) -> f64 {
    let mut u = 0.5 * h_loc * flat.iter().map(|v| v * v).sum::<f64>();
    for a in 0..states {
        for b in 0..states {
            if a == b {
                continue;
            }
            let n = trans_counts[(a, b)];
            let q = failed_jumps[(a, b)];
            if n == 0 && q == 0 {
                continue;
            }
            let mut sq = 0.0;
            for d in 0..dims {
                let diff = flat[a * dims + d] - flat[b * dims + d];
                sq += diff * diff;
            }
            let x = 0.5 * lambda * sq;
            u += n as f64 * x;
            if q > 0 {
                u -= q as f64 * ln_one_minus_exp_neg(x);
            }
        }
    }
    u
}

/// Gradient of [`location_potential`]; coordinate (j,d) receives
/// `h·ℓ + λ Σ_{j'≠j} (ℓ_jd − ℓ_j'd)·[(n_jj'+n_j'j) − (q_jj'+q_j'j)·phi/(1−phi)]`
/// with both orderings of each pair contributing.
pub fn location_potential_grad(
    flat: &[f64],
    states: usize,
    dims: usize,
    h_loc: f64,
    lambda: f64,
    trans_counts: &Array2<u64>,
    failed_jumps: &Array2<u64>,
    out: &mut [f64],
) {
    for (o, v) in out.iter_mut().zip(flat) {
        *o = h_loc * v;
    }
    for a in 0..states {
        for b in (a + 1)..states {
            let n = (trans_counts[(a, b)] + trans_counts[(b, a)]) as f64;
            let q = (failed_jumps[(a, b)] + failed_jumps[(b, a)]) as f64;
            if n == 0.0 && q == 0.0 {
                continue;
            }
            let mut sq = 0.0;
            for d in 0..dims {
                let diff = flat[a * dims + d] - flat[b * dims + d];
                sq += diff * diff;
            }
            let x = 0.5 * lambda * sq;
            // phi/(1-phi) = 1/(e^x - 1)
            let coeff = lambda * (n - q / x.exp_m1());
            for d in 0..dims {
                let diff = flat[a * dims + d] - flat[b * dims + d];
                out[a * dims + d] += coeff * diff;
                out[b * dims + d] -= coeff * diff;
            }
        }
    }
}

/// One HMC proposal over the whole location matrix; returns whether the
/// proposal was accepted. Non-finite energies reject.
pub fn hmc_update_locations(
    locations: &mut LocationMatrix,
    h_loc: f64,
    lambda: f64,
    trans_counts: &Array2<u64>,
    failed_jumps: &Array2<u64>,
    step: f64,
    leapfrog_steps: usize,
    rng: &mut RandomStream,
) -> Result<bool> {
    if leapfrog_steps == 0 {
        return Ok(false);
    }
    let states = locations.loc.nrows();
    let dims = locations.loc.ncols();
    let mut flat: Vec<f64> = locations.loc.iter().cloned().collect();
    let accepted = hmc_step(
        &mut flat,
        |q| location_potential(q, states, dims, h_loc, lambda, trans_counts, failed_jumps),
        |q, g| {
            location_potential_grad(
                q,
                states,
                dims,
                h_loc,
                lambda,
                trans_counts,
                failed_jumps,
                g,
            )
        },
        step,
        leapfrog_steps,
        rng,
    )?;
    if accepted {
        locations.loc = Array2::from_shape_vec((states, dims), flat)
            .expect("shape preserved by construction");
    }
    Ok(accepted)
}
