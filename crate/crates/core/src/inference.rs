//! Exact conditional sampling of the hidden state sequence(s) and
//! marginal-likelihood evaluation.
//!
//! Forward messages are kept in scaled linear space with per-step
//! normalizers accumulated in log space: same result as pure log-space
//! message passing, but the Θ(T·J²) inner loop stays in plain
//! multiply-adds.

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hdp::row_rate_totals;
use crate::rng::RandomStream;

/// Observation sequences, all of one kind.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum Observations {
    /// Real-valued T×K matrices.
    Real(Vec<Array2<f64>>),
    /// Integer symbol sequences.
    Symbols(Vec<Vec<usize>>),
}

impl Observations {
    pub fn num_sequences(&self) -> usize {
        match self {
            Observations::Real(s) => s.len(),
            Observations::Symbols(s) => s.len(),
        }
    }

    pub fn lengths(&self) -> Vec<usize> {
        match self {
            Observations::Real(s) => s.iter().map(|m| m.nrows()).collect(),
            Observations::Symbols(s) => s.iter().map(|v| v.len()).collect(),
        }
    }

    pub fn total_len(&self) -> usize {
        self.lengths().iter().sum()
    }

    /// Feature channels for real data, vocabulary floor for symbols.
    pub fn max_symbol(&self) -> Option<usize> {
        match self {
            Observations::Symbols(s) => s.iter().flatten().max().copied(),
            _ => None,
        }
    }
}

/// One or more observation sequences plus optional ground truth for
/// evaluation (stacked over sequences, one row per time step).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SequenceBatch {
    pub observations: Observations,
    pub truth: Option<Array2<u8>>,
}

impl SequenceBatch {
    pub fn new(observations: Observations) -> Result<Self> {
        if observations.num_sequences() == 0 {
            return Err(Error::input("a sequence batch cannot be empty"));
        }
        Ok(SequenceBatch {
            observations,
            truth: None,
        })
    }

    pub fn with_truth(mut self, truth: Array2<u8>) -> Result<Self> {
        if truth.nrows() != self.observations.total_len() {
            return Err(Error::input(format!(
                "ground truth has {} rows but the batch holds {} steps",
                truth.nrows(),
                self.observations.total_len()
            )));
        }
        self.truth = Some(truth);
        Ok(self)
    }
}

/// Row-stochastic transition matrix derived from the rescaled rates,
/// with the initial distribution and the row totals it was scaled by.
#[derive(Debug, Clone)]
pub struct NormalizedTransitions {
    pub probs: Array2<f64>,
    pub init: Array1<f64>,
    pub row_totals: Array1<f64>,
}

/// `P_jj' = rate_jj'·phi_jj' / T_j`, `p0 = init_rates / Σ init_rates`.
pub fn normalize_transitions(
    rates: &Array2<f64>,
    init_rates: &Array1<f64>,
    phi: &Array2<f64>,
) -> Result<NormalizedTransitions> {
    let trunc = rates.nrows();
    let totals = row_rate_totals(rates, phi);
    for (j, &t) in totals.iter().enumerate() {
        if !(t > 0.0) || !t.is_finite() {
            return Err(Error::numeric(format!(
                "row {j} of the rescaled rate matrix has total {t}"
            )));
        }
    }
    let mut probs = Array2::zeros((trunc, trunc));
    for a in 0..trunc {
        for b in 0..trunc {
            probs[(a, b)] = rates[(a, b)] * phi[(a, b)] / totals[a];
        }
    }
    let init_total: f64 = init_rates.iter().sum();
    if !(init_total > 0.0) || !init_total.is_finite() {
        return Err(Error::numeric(format!(
            "initial rates sum to {init_total}"
        )));
    }
    Ok(NormalizedTransitions {
        probs,
        init: init_rates.mapv(|r| r / init_total),
        row_totals: totals,
    })
}

/// Scaled forward messages. `messages` row t is the filtering
/// distribution p(z_t | y_{1..t}); `log_marginal` is log p(y_{1..T}),
/// −∞ if some step had zero total likelihood.
pub struct ForwardPass {
    pub messages: Array2<f64>,
    pub log_marginal: f64,
    /// First step whose forward message vanished, if any.
    pub underflow_at: Option<usize>,
}

pub fn forward_pass(trans: &NormalizedTransitions, loglik: &Array2<f64>) -> ForwardPass {
    let steps = loglik.nrows();
    let trunc = loglik.ncols();
    let mut messages = Array2::zeros((steps, trunc));
    let mut log_marginal = 0.0;
    let mut scratch = vec![0.0; trunc];

    for t in 0..steps {
        let row = loglik.row(t);
        let row_max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if !row_max.is_finite() {
            return ForwardPass {
                messages,
                log_marginal: f64::NEG_INFINITY,
                underflow_at: Some(t),
            };
        }
        if t == 0 {
            for j in 0..trunc {
                scratch[j] = trans.init[j] * (row[j] - row_max).exp();
            }
        } else {
            scratch.iter_mut().for_each(|v| *v = 0.0);
            let prev = messages.row(t - 1);
            for i in 0..trunc {
                let a = prev[i];
                if a == 0.0 {
                    continue;
                }
                let p_row = trans.probs.row(i);
                for j in 0..trunc {
                    scratch[j] += a * p_row[j];
                }
            }
            for j in 0..trunc {
                scratch[j] *= (row[j] - row_max).exp();
            }
        }
        let norm: f64 = scratch.iter().sum();
        if !(norm > 0.0) || !norm.is_finite() {
            return ForwardPass {
                messages,
                log_marginal: f64::NEG_INFINITY,
                underflow_at: Some(t),
            };
        }
        for j in 0..trunc {
            messages[(t, j)] = scratch[j] / norm;
        }
        log_marginal += norm.ln() + row_max;
    }
    ForwardPass {
        messages,
        log_marginal,
        underflow_at: None,
    }
}

/// Exact joint draw of the hidden path by forward filtering and backward
/// sampling.
pub fn ffbs_sample_z(
    trans: &NormalizedTransitions,
    loglik: &Array2<f64>,
    rng: &mut RandomStream,
) -> Result<Vec<usize>> {
    let steps = loglik.nrows();
    if steps == 0 {
        return Ok(Vec::new());
    }
    let fwd = forward_pass(trans, loglik);
    if let Some(t) = fwd.underflow_at {
        return Err(Error::numeric(format!(
            "forward message vanished at step {t}: every state has zero likelihood"
        )));
    }
    let trunc = loglik.ncols();
    let mut path = vec![0usize; steps];
    path[steps - 1] = sample_index(fwd.messages.row(steps - 1).as_slice().unwrap(), rng)?;
    let mut weights = vec![0.0; trunc];
    for t in (0..steps - 1).rev() {
        let next = path[t + 1];
        let msg = fwd.messages.row(t);
        for i in 0..trunc {
            weights[i] = msg[i] * trans.probs[(i, next)];
        }
        path[t] = sample_index(&weights, rng)?;
    }
    Ok(path)
}

fn sample_index(weights: &[f64], rng: &mut RandomStream) -> Result<usize> {
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) || !total.is_finite() {
        return Err(Error::numeric(
            "cannot sample from an all-zero weight vector".to_string(),
        ));
    }
    let mut u = rng.uniform() * total;
    for (i, w) in weights.iter().enumerate() {
        u -= w;
        if u <= 0.0 {
            return Ok(i);
        }
    }
    Ok(weights.len() - 1)
}

/// Adjacent-pair transition counts and initial-state counts. Sequence
/// boundaries never contribute to the transition matrix.
pub fn count_transitions(
    assignments: &[Vec<usize>],
    trunc: usize,
) -> Result<(Array2<u64>, Array1<u64>)> {
    let mut counts = Array2::zeros((trunc, trunc));
    let mut initial = Array1::zeros(trunc);
    for z in assignments {
        let Some(&first) = z.first() else { continue };
        if first >= trunc {
            return Err(Error::input(format!("state {first} out of range")));
        }
        initial[first] += 1;
        for pair in z.windows(2) {
            if pair[1] >= trunc {
                return Err(Error::input(format!("state {} out of range", pair[1])));
            }
            counts[(pair[0], pair[1])] += 1;
        }
    }
    Ok((counts, initial))
}

/// Marginal log likelihood with the state path integrated out, plus the
/// per-observation average.
#[derive(Debug, Clone, Copy)]
pub struct MarginalLoglik {
    pub total: f64,
    pub per_obs: f64,
}

pub fn marginal_loglik(trans: &NormalizedTransitions, loglik: &Array2<f64>) -> MarginalLoglik {
    let fwd = forward_pass(trans, loglik);
    MarginalLoglik {
        total: fwd.log_marginal,
        per_obs: fwd.log_marginal / loglik.nrows().max(1) as f64,
    }
}

/// Marginal log likelihood of a batch of independent sequences under
/// shared parameters.
pub fn marginal_loglik_batch(
    trans: &NormalizedTransitions,
    tables: &[Array2<f64>],
) -> MarginalLoglik {
    let mut total = 0.0;
    let mut steps = 0usize;
    for table in tables {
        total += forward_pass(trans, table).log_marginal;
        steps += table.nrows();
    }
    MarginalLoglik {
        total,
        per_obs: total / steps.max(1) as f64,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    fn flat_transitions(trunc: usize) -> NormalizedTransitions {
        NormalizedTransitions {
            probs: Array2::from_elem((trunc, trunc), 1.0 / trunc as f64),
            init: Array1::from_elem(trunc, 1.0 / trunc as f64),
            row_totals: Array1::ones(trunc),
        }
    }

    #[test]
    fn normalization_arithmetic() {
        let rates = array![[2.0, 1.0, 1.0], [1.0, 1.0, 1.0], [1.0, 1.0, 1.0]];
        let phi = array![
            [1.0, 0.5, 0.5],
            [1.0, 1.0, 1.0],
            [1.0, 1.0, 1.0]
        ];
        let init = array![1.0, 1.0, 2.0];
        let nt = normalize_transitions(&rates, &init, &phi).unwrap();
        assert_abs_diff_eq!(nt.row_totals[0], 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(nt.probs[(0, 0)], 2.0 / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(nt.probs[(0, 1)], 1.0 / 6.0, epsilon = 1e-15);
        assert_abs_diff_eq!(nt.init[2], 0.5, epsilon = 1e-15);
        for a in 0..3 {
            assert_abs_diff_eq!(nt.probs.row(a).sum(), 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn no_rescaling_is_row_normalization() {
        let rates = array![[3.0, 1.0], [2.0, 2.0]];
        let phi = Array2::ones((2, 2));
        let nt = normalize_transitions(&rates, &array![1.0, 1.0], &phi).unwrap();
        assert_abs_diff_eq!(nt.probs[(0, 0)], 0.75, epsilon = 1e-15);
        assert_abs_diff_eq!(nt.probs[(1, 0)], 0.5, epsilon = 1e-15);
    }

    #[test]
    fn degenerate_dynamics_give_constant_path() {
        let nt = NormalizedTransitions {
            probs: array![[1.0, 0.0], [0.0, 1.0]],
            init: array![0.5, 0.5],
            row_totals: array![1.0, 1.0],
        };
        // emissions pin the first step to state 0
        let mut loglik = Array2::zeros((6, 2));
        loglik[(0, 1)] = f64::NEG_INFINITY;
        let mut rng = RandomStream::new(91);
        for _ in 0..200 {
            let z = ffbs_sample_z(&nt, &loglik, &mut rng).unwrap();
            assert!(z.iter().all(|&s| s == 0));
        }
    }

    #[test]
    fn flat_model_gives_uniform_marginals() {
        let nt = flat_transitions(3);
        let loglik = Array2::zeros((4, 3));
        let mut rng = RandomStream::new(92);
        let draws = 30_000;
        let mut counts = vec![0u64; 3];
        for _ in 0..draws {
            let z = ffbs_sample_z(&nt, &loglik, &mut rng).unwrap();
            counts[z[2]] += 1;
        }
        for c in counts {
            assert_abs_diff_eq!(c as f64 / draws as f64, 1.0 / 3.0, epsilon = 0.01);
        }
    }

    #[test]
    fn ffbs_matches_enumeration_on_toy() {
        let mut rng = RandomStream::new(93);
        let (trunc, steps) = (2, 3);
        let nt = NormalizedTransitions {
            probs: array![[0.8, 0.2], [0.35, 0.65]],
            init: array![0.6, 0.4],
            row_totals: array![1.0, 1.0],
        };
        let loglik = Array2::from_shape_fn((steps, trunc), |_| rng.standard_normal());
        let oracle = crate::validation::oracles::enumerate_posterior(&nt, &loglik);
        let draws = 100_000;
        let mut unary = Array2::<f64>::zeros((steps, trunc));
        let mut pairwise = Array2::<f64>::zeros((trunc, trunc));
        for _ in 0..draws {
            let z = ffbs_sample_z(&nt, &loglik, &mut rng).unwrap();
            for (t, &s) in z.iter().enumerate() {
                unary[(t, s)] += 1.0;
            }
            for pair in z.windows(2) {
                pairwise[(pair[0], pair[1])] += 1.0;
            }
        }
        unary /= draws as f64;
        pairwise /= draws as f64;
        for t in 0..steps {
            for j in 0..trunc {
                let p = oracle.unary[(t, j)];
                let se = (p * (1.0 - p) / draws as f64).sqrt().max(1e-9);
                assert!(
                    (unary[(t, j)] - p).abs() < 4.0 * se + 1e-12,
                    "unary marginal off at ({t},{j}): {} vs {p}",
                    unary[(t, j)]
                );
            }
        }
        for a in 0..trunc {
            for b in 0..trunc {
                let p = oracle.pairwise[(a, b)] / (steps - 1) as f64;
                let got = pairwise[(a, b)] / (steps - 1) as f64;
                let se = (p * (1.0 - p) / draws as f64).sqrt().max(1e-9);
                assert!(
                    (got - p).abs() < 4.0 * se + 1e-12,
                    "pairwise marginal off at ({a},{b})"
                );
            }
        }
    }

    #[test]
    fn counts_examples_and_conservation() {
        let (n, n0) = count_transitions(&[vec![0, 0, 1]], 3).unwrap();
        assert_eq!(n[(0, 0)], 1);
        assert_eq!(n[(0, 1)], 1);
        assert_eq!(n0[0], 1);

        let (n, n0) = count_transitions(&[vec![0], vec![1]], 3).unwrap();
        assert!(n.iter().all(|&v| v == 0));
        assert_eq!(n0[0], 1);
        assert_eq!(n0[1], 1);
        assert_eq!(n0[2], 0);

        let seqs = vec![vec![0, 1, 2, 1], vec![2, 2]];
        let (n, _) = count_transitions(&seqs, 3).unwrap();
        let total: u64 = n.iter().sum();
        let lens: usize = seqs.iter().map(|s| s.len()).sum();
        assert_eq!(total as usize + seqs.len(), lens);

        assert!(count_transitions(&[vec![5]], 3).is_err());
    }

    #[test]
    fn single_step_marginal() {
        let nt = flat_transitions(2);
        let loglik = Array2::from_elem((1, 2), 0.5_f64.ln());
        let m = marginal_loglik(&nt, &loglik);
        assert_abs_diff_eq!(m.total, 0.5_f64.ln(), epsilon = 1e-12);
        assert_abs_diff_eq!(m.per_obs, 0.5_f64.ln(), epsilon = 1e-12);
    }

    #[test]
    fn marginal_matches_enumeration() {
        let mut rng = RandomStream::new(94);
        let nt = NormalizedTransitions {
            probs: array![
                [0.5, 0.3, 0.2],
                [0.1, 0.6, 0.3],
                [0.25, 0.25, 0.5]
            ],
            init: array![0.2, 0.5, 0.3],
            row_totals: array![1.0, 1.0, 1.0],
        };
        let loglik = Array2::from_shape_fn((4, 3), |_| rng.standard_normal());
        let oracle = crate::validation::oracles::enumerate_posterior(&nt, &loglik);
        let m = marginal_loglik(&nt, &loglik);
        assert_abs_diff_eq!(m.total, oracle.log_marginal, epsilon = 1e-10);
    }

    #[test]
    fn impossible_observation_gives_negative_infinity() {
        let nt = flat_transitions(2);
        let mut loglik = Array2::zeros((3, 2));
        loglik[(2, 0)] = f64::NEG_INFINITY;
        loglik[(2, 1)] = f64::NEG_INFINITY;
        let m = marginal_loglik(&nt, &loglik);
        assert!(m.total.is_infinite() && m.total < 0.0);
        assert!(ffbs_sample_z(&nt, &loglik, &mut RandomStream::new(1)).is_err());
    }

    #[test]
    fn marginal_invariant_to_row_scaling() {
        let mut rng = RandomStream::new(95);
        let rates = Array2::from_shape_fn((3, 3), |_| rng.uniform() + 0.1);
        let init = Array1::from_shape_fn(3, |_| rng.uniform() + 0.1);
        let phi = Array2::from_shape_fn((3, 3), |(a, b)| if a == b { 1.0 } else { 0.7 });
        let loglik = Array2::from_shape_fn((5, 3), |_| rng.standard_normal());

        let nt = normalize_transitions(&rates, &init, &phi).unwrap();
        let base = marginal_loglik(&nt, &loglik).total;

        let mut scaled = rates.clone();
        for b in 0..3 {
            scaled[(1, b)] *= 37.0;
        }
        let nt2 = normalize_transitions(&scaled, &init, &phi).unwrap();
        assert_abs_diff_eq!(marginal_loglik(&nt2, &loglik).total, base, epsilon = 1e-10);
    }
}
