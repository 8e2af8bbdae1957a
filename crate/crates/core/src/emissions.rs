//! Emission families: linear-Gaussian over binary state vectors (with a
//! background bias row) and categorical-Dirichlet over a symbol
//! vocabulary. Likelihood tables feed the state-sequence sampler; all
//! parameter updates are conjugate.

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inference::Observations;
use crate::rng::{beta_draw, dirichlet_draw, gamma_draw, RandomStream};
use crate::similarity::BinaryStateMatrix;

/// Linear-Gaussian emissions: `y_t ~ N(Wᵀ(1, η_{z_t}), diag σ²)`.
/// Row 0 of the weight matrix is the always-on background channel.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LinearGaussianEmission {
    /// (D+1)×K weights; row 0 is the bias row.
    pub weights: Array2<f64>,
    /// Per-channel noise variances (diagonal covariance).
    pub noise_var: Array1<f64>,
    pub a_sigma: f64,
    pub b_sigma: f64,
    /// When set, the weights are pinned (evaluation protocol where the
    /// inferred state matrix must be comparable to ground truth).
    pub w_fixed: bool,
    /// Prior precision of each weight when weights are sampled.
    pub w_prior_prec: f64,
}

/// Categorical emissions with a symmetric Dirichlet prior per state.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CategoricalEmission {
    /// J×V per-state symbol distributions, each row a simplex.
    pub theta: Array2<f64>,
    /// Symmetric Dirichlet mass.
    pub a0: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum EmissionState {
    LinearGaussian(LinearGaussianEmission),
    Categorical(CategoricalEmission),
}

impl EmissionState {
    pub fn linear_gaussian(&self) -> Option<&LinearGaussianEmission> {
        match self {
            EmissionState::LinearGaussian(lg) => Some(lg),
            _ => None,
        }
    }

    pub fn categorical(&self) -> Option<&CategoricalEmission> {
        match self {
            EmissionState::Categorical(c) => Some(c),
            _ => None,
        }
    }
}

impl LinearGaussianEmission {
    pub fn speakers(&self) -> usize {
        self.weights.nrows() - 1
    }

    pub fn channels(&self) -> usize {
        self.weights.ncols()
    }

    /// Per-state emission means: `mean_{jk} = w_{0k} + Σ_d η_{jd} w_{d+1,k}`.
    pub fn state_means(&self, eta: &Array2<u8>) -> Array2<f64> {
        let channels = self.channels();
        let states = eta.nrows();
        let mut means = Array2::zeros((states, channels));
        for j in 0..states {
            for k in 0..channels {
                let mut m = self.weights[(0, k)];
                for d in 0..eta.ncols() {
                    if eta[(j, d)] == 1 {
                        m += self.weights[(d + 1, k)];
                    }
                }
                means[(j, k)] = m;
            }
        }
        means
    }
}

/// Log-likelihood table for one sequence: entry (t, j) is
/// `log f(y_t | state j)`.
pub fn loglik_table(
    emission: &EmissionState,
    space_bits: Option<&BinaryStateMatrix>,
    obs: &Observations,
    seq: usize,
    trunc: usize,
) -> Result<Array2<f64>> {
    match (emission, obs) {
        (EmissionState::LinearGaussian(lg), Observations::Real(seqs)) => {
            let bits = space_bits.ok_or_else(|| {
                Error::parameter("linear-Gaussian emissions need binary state vectors")
            })?;
            let y = &seqs[seq];
            let channels = lg.channels();
            if y.ncols() != channels {
                return Err(Error::input(format!(
                    "observation has {} channels, weights expect {channels}",
                    y.ncols()
                )));
            }
            let means = lg.state_means(&bits.eta);
            let ln_norm: f64 = lg
                .noise_var
                .iter()
                .map(|&v| (2.0 * std::f64::consts::PI * v).ln())
                .sum::<f64>()
                * -0.5;
            let steps = y.nrows();
            let mut table = Array2::zeros((steps, trunc));
            for t in 0..steps {
                for j in 0..trunc {
                    let mut quad = 0.0;
                    for k in 0..channels {
                        let d = y[(t, k)] - means[(j, k)];
                        quad += d * d / lg.noise_var[k];
                    }
                    table[(t, j)] = ln_norm - 0.5 * quad;
                }
            }
            Ok(table)
        }
        (EmissionState::Categorical(cat), Observations::Symbols(seqs)) => {
            let vocab = cat.theta.ncols();
            let symbols = &seqs[seq];
            let mut table = Array2::zeros((symbols.len(), trunc));
            for (t, &sym) in symbols.iter().enumerate() {
                if sym >= vocab {
                    return Err(Error::input(format!(
                        "symbol {sym} out of vocabulary (size {vocab})"
                    )));
                }
                for j in 0..trunc {
                    table[(t, j)] = cat.theta[(j, sym)].ln();
                }
            }
            Ok(table)
        }
        _ => Err(Error::parameter(
            "emission family does not match the observation kind",
        )),
    }
}

/// Conjugate update of the per-state symbol distributions:
/// `θ_j ~ Dirichlet(a0 + counts(j, ·))`.
pub fn sample_theta_categorical(
    cat: &mut CategoricalEmission,
    assignments: &[Vec<usize>],
    obs: &Observations,
    rng: &mut RandomStream,
) -> Result<()> {
    let seqs = match obs {
        Observations::Symbols(s) => s,
        _ => return Err(Error::parameter("categorical update needs symbol data")),
    };
    let (states, vocab) = cat.theta.dim();
    let mut counts = Array2::<u64>::zeros((states, vocab));
    for (z, symbols) in assignments.iter().zip(seqs) {
        for (&state, &sym) in z.iter().zip(symbols) {
            counts[(state, sym)] += 1;
        }
    }
    for j in 0..states {
        let masses: Vec<f64> = (0..vocab)
            .map(|v| cat.a0 + counts[(j, v)] as f64)
            .collect();
        let row = dirichlet_draw(&masses, rng)?;
        for (v, value) in row.into_iter().enumerate() {
            cat.theta[(j, v)] = value;
        }
    }
    Ok(())
}

/// Conjugate noise update:
/// `σ²_k ~ InvGamma(a_σ + T/2, b_σ + ½ Σ_t resid²_{tk})`, drawn as the
/// inverse of a Gamma precision draw.
pub fn sample_sigma2(
    lg: &mut LinearGaussianEmission,
    bits: &BinaryStateMatrix,
    assignments: &[Vec<usize>],
    obs: &Observations,
    rng: &mut RandomStream,
) -> Result<()> {
    let seqs = match obs {
        Observations::Real(s) => s,
        _ => return Err(Error::parameter("linear-Gaussian update needs real data")),
    };
    let channels = lg.channels();
    let means = lg.state_means(&bits.eta);
    let mut total = 0u64;
    let mut sq = vec![0.0; channels];
    for (z, y) in assignments.iter().zip(seqs) {
        for (t, &state) in z.iter().enumerate() {
            total += 1;
            for k in 0..channels {
                let r = y[(t, k)] - means[(state, k)];
                sq[k] += r * r;
            }
        }
    }
    for k in 0..channels {
        let shape = lg.a_sigma + total as f64 / 2.0;
        let scale = lg.b_sigma + 0.5 * sq[k];
        let precision = gamma_draw(shape, scale, rng)?;
        lg.noise_var[k] = 1.0 / precision;
    }
    Ok(())
}

/// Posterior mean of the ridge regression for every weight column, given
/// the current assignments. Exposed so tests can check the normal
/// equations without relying on a draw.
pub fn w_posterior_mean(
    lg: &LinearGaussianEmission,
    bits: &BinaryStateMatrix,
    assignments: &[Vec<usize>],
    obs: &Observations,
) -> Result<Array2<f64>> {
    let (xtx, xty) = design_moments(lg, bits, assignments, obs)?;
    let p = lg.weights.nrows();
    let mut mean = Array2::zeros((p, lg.channels()));
    for k in 0..lg.channels() {
        let mut prec = xtx.clone() / lg.noise_var[k];
        for i in 0..p {
            prec[(i, i)] += lg.w_prior_prec;
        }
        let rhs: Vec<f64> = (0..p).map(|i| xty[(i, k)] / lg.noise_var[k]).collect();
        let chol = cholesky(&prec)?;
        let col = chol_solve(&chol, &rhs);
        for i in 0..p {
            mean[(i, k)] = col[i];
        }
    }
    Ok(mean)
}

/// Bayesian linear-regression update of the weight columns; a no-op when
/// the weights are pinned.
pub fn sample_w(
    lg: &mut LinearGaussianEmission,
    bits: &BinaryStateMatrix,
    assignments: &[Vec<usize>],
    obs: &Observations,
    rng: &mut RandomStream,
) -> Result<()> {
    if lg.w_fixed {
        return Ok(());
    }
    let (xtx, xty) = design_moments(lg, bits, assignments, obs)?;
    let p = lg.weights.nrows();
    for k in 0..lg.channels() {
        let mut prec = xtx.clone() / lg.noise_var[k];
        for i in 0..p {
            prec[(i, i)] += lg.w_prior_prec;
        }
        let rhs: Vec<f64> = (0..p).map(|i| xty[(i, k)] / lg.noise_var[k]).collect();
        let chol = cholesky(&prec)?;
        let mean = chol_solve(&chol, &rhs);
        // draw = mean + L^{-T} ξ
        let noise: Vec<f64> = (0..p).map(|_| rng.standard_normal()).collect();
        let extra = chol_upper_solve(&chol, &noise);
        for i in 0..p {
            lg.weights[(i, k)] = mean[i] + extra[i];
        }
    }
    Ok(())
}

/// Beta-Bernoulli update of the coordinate prior means:
/// `μ_d ~ Beta(a_μ + Σ_j η_{jd}, b_μ + J − Σ_j η_{jd})`.
pub fn sample_mu(bits: &mut BinaryStateMatrix, rng: &mut RandomStream) -> Result<()> {
    let states = bits.states() as f64;
    for d in 0..bits.dims() {
        let on: u64 = bits.eta.column(d).iter().map(|&b| b as u64).sum();
        bits.mu[d] = beta_draw(
            bits.a_mu + on as f64,
            bits.b_mu + states - on as f64,
            rng,
        )?;
    }
    Ok(())
}

/// Per-state observation sums and counts, the sufficient statistics for
/// the η emission log-ratio.
pub struct StateSuffStats {
    pub sums: Array2<f64>,
    pub counts: Array1<f64>,
}

pub fn state_suff_stats(
    trunc: usize,
    channels: usize,
    assignments: &[Vec<usize>],
    obs: &Observations,
) -> Result<StateSuffStats> {
    let seqs = match obs {
        Observations::Real(s) => s,
        _ => return Err(Error::parameter("sufficient stats need real data")),
    };
    let mut sums = Array2::zeros((trunc, channels));
    let mut counts = Array1::zeros(trunc);
    for (z, y) in assignments.iter().zip(seqs) {
        for (t, &state) in z.iter().enumerate() {
            counts[state] += 1.0;
            for k in 0..channels {
                sums[(state, k)] += y[(t, k)];
            }
        }
    }
    Ok(StateSuffStats { sums, counts })
}

/// Summed log-likelihood ratio of the observations in state `j` under
/// `η[j,d] = 1` versus `0`, from the per-state sufficient statistics.
/// Matches direct evaluation of the two Gaussian densities.
pub fn eta_emission_log_ratio(
    lg: &LinearGaussianEmission,
    stats: &StateSuffStats,
    j: usize,
    d: usize,
    eta: &Array2<u8>,
) -> f64 {
    let count = stats.counts[j];
    if count == 0.0 {
        return 0.0;
    }
    let mut ratio = 0.0;
    for k in 0..lg.channels() {
        // state mean with coordinate d forced off
        let mut base = lg.weights[(0, k)];
        for dd in 0..eta.ncols() {
            if dd != d && eta[(j, dd)] == 1 {
                base += lg.weights[(dd + 1, k)];
            }
        }
        let w = lg.weights[(d + 1, k)];
        ratio += w * (2.0 * (stats.sums[(j, k)] - count * base) - count * w)
            / (2.0 * lg.noise_var[k]);
    }
    ratio
}

fn design_moments(
    lg: &LinearGaussianEmission,
    bits: &BinaryStateMatrix,
    assignments: &[Vec<usize>],
    obs: &Observations,
) -> Result<(Array2<f64>, Array2<f64>)> {
    let seqs = match obs {
        Observations::Real(s) => s,
        _ => return Err(Error::parameter("weight update needs real data")),
    };
    let p = lg.weights.nrows();
    let channels = lg.channels();
    let mut xtx = Array2::zeros((p, p));
    let mut xty = Array2::zeros((p, channels));
    let mut x = vec![0.0; p];
    for (z, y) in assignments.iter().zip(seqs) {
        for (t, &state) in z.iter().enumerate() {
            x[0] = 1.0;
            for d in 0..p - 1 {
                x[d + 1] = bits.eta[(state, d)] as f64;
            }
            for i in 0..p {
                if x[i] == 0.0 {
                    continue;
                }
                for ii in 0..p {
                    xtx[(i, ii)] += x[i] * x[ii];
                }
                for k in 0..channels {
                    xty[(i, k)] += x[i] * y[(t, k)];
                }
            }
        }
    }
    Ok((xtx, xty))
}

/// Lower-triangular Cholesky factor of a symmetric positive-definite
/// matrix. The dimensions here are tiny (speaker count + 1).
fn cholesky(a: &Array2<f64>) -> Result<Array2<f64>> {
    let n = a.nrows();
    let mut l = Array2::zeros((n, n));
    for i in 0..n {
        for j in 0..=i {
            let mut sum = a[(i, j)];
            for k in 0..j {
                sum -= l[(i, k)] * l[(j, k)];
            }
            if i == j {
                if sum <= 0.0 {
                    return Err(Error::numeric(
                        "posterior precision is not positive definite".to_string(),
                    ));
                }
                l[(i, j)] = sum.sqrt();
            } else {
                l[(i, j)] = sum / l[(j, j)];
            }
        }
    }
    Ok(l)
}

/// Solve (L Lᵀ) x = b.
fn chol_solve(l: &Array2<f64>, b: &[f64]) -> Vec<f64> {
    let n = l.nrows();
    let mut y = vec![0.0; n];
    for i in 0..n {
        let mut sum = b[i];
        for k in 0..i {
            sum -= l[(i, k)] * y[k];
        }
        y[i] = sum / l[(i, i)];
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let mut sum = y[i];
        for k in i + 1..n {
            sum -= l[(k, i)] * x[k];
        }
        x[i] = sum / l[(i, i)];
    }
    x
}

/// Solve Lᵀ x = b (used to color a standard normal draw by the posterior
/// covariance).
fn chol_upper_solve(l: &Array2<f64>, b: &[f64]) -> Vec<f64> {
    let n = l.nrows();
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let mut sum = b[i];
        for k in i + 1..n {
            sum -= l[(k, i)] * x[k];
        }
        x[i] = sum / l[(i, i)];
    }
    x
}
