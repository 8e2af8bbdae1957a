//! Chain orchestration: run one or many Gibbs chains against a dataset,
//! recording traces, posterior state-matrix averages, and metrics.

use ndarray::Array2;
use rayon::prelude::*;
use serde::Serialize;

use crate::emissions::loglik_table;
use crate::engine::config::ModelConfig;
use crate::engine::metrics::{f1_binary, f1_from_probs, hamming_metric, StateMatrixAccumulator};
use crate::engine::state::ChainState;
use crate::engine::sweep::gibbs_sweep;
use crate::engine::trace::{GibbsTrace, TraceRow};
use crate::error::Result;
use crate::inference::{marginal_loglik_batch, normalize_transitions, SequenceBatch};
use crate::rng::RandomStream;
use crate::similarity::{compute_phi, KernelKind, StateSpace};

/// Everything one chain produces.
pub struct ChainOutput {
    pub chain: u64,
    pub trace: GibbsTrace,
    pub accumulator: Option<StateMatrixAccumulator>,
    pub final_state: ChainState,
}

impl ChainOutput {
    pub fn state_matrix_mean(&self) -> Option<Array2<f64>> {
        self.accumulator.as_ref().and_then(|a| a.mean())
    }
}

/// Post-burn-in scalar summaries of one chain.
#[derive(Debug, Clone, Serialize)]
pub struct ChainSummary {
    pub chain: u64,
    pub mean_lambda: f64,
    pub mean_alpha: f64,
    pub mean_gamma: f64,
    pub mean_occupied_states: f64,
    pub mean_f1: Option<f64>,
    pub mean_hamming_rate: Option<f64>,
    pub mean_train_loglik: Option<f64>,
    pub mean_test_surprisal: Option<f64>,
}

/// Aggregate metrics across chains, serialized as `metrics.json`.
#[derive(Debug, Clone, Serialize)]
pub struct RunMetrics {
    pub variant: String,
    pub chains: Vec<ChainSummary>,
    pub mean_f1: Option<f64>,
    pub mean_hamming_rate: Option<f64>,
    pub mean_lambda: f64,
    pub mean_test_surprisal: Option<f64>,
    /// F1 of the pooled posterior-mean state matrix thresholded at 0.5.
    pub pooled_f1: Option<f64>,
    pub pooled_hamming_rate: Option<f64>,
}

/// Run a single chain. `chain_id` seeds an independent child stream of
/// the configured seed; `resume` continues a checkpointed state instead
/// of initializing.
pub fn run_chain(
    cfg: &ModelConfig,
    data: &SequenceBatch,
    test: Option<&SequenceBatch>,
    fixed_weights: Option<&Array2<f64>>,
    resume: Option<ChainState>,
    chain_id: u64,
) -> Result<ChainOutput> {
    cfg.validate()?;
    let mut state = match resume {
        Some(s) => s,
        None => ChainState::init(
            cfg,
            data,
            fixed_weights,
            RandomStream::with_stream(cfg.seed, chain_id),
        )?,
    };
    let mut trace = GibbsTrace::default();
    let mut accumulator = match &state.space {
        StateSpace::Binary(bits) => Some(StateMatrixAccumulator::new(
            data.observations.total_len(),
            bits.dims(),
        )),
        _ => None,
    };
    let mut adapt_accepted = state.hmc_accepted;
    let mut adapt_attempted = state.hmc_attempted;

    while state.iteration < cfg.iterations {
        gibbs_sweep(&mut state, data, cfg)?;
        let iter = state.iteration;

        // halve the HMC step when acceptance collapses during burn-in
        if cfg.kernel.kind == KernelKind::GaussianEuclidean
            && iter <= cfg.burn_in
            && iter % 50 == 0
        {
            let attempted = state.hmc_attempted - adapt_attempted;
            let accepted = state.hmc_accepted - adapt_accepted;
            if attempted > 0 && (accepted as f64 / attempted as f64) < 0.2 {
                state.hmc_step = (state.hmc_step * 0.5).max(1e-4);
            }
            adapt_accepted = state.hmc_accepted;
            adapt_attempted = state.hmc_attempted;
        }

        if iter % cfg.thin == 0 {
            let row = record_row(&state, cfg, data, test)?;
            trace.push(row);
            if iter > cfg.burn_in {
                if let (Some(acc), StateSpace::Binary(bits)) = (&mut accumulator, &state.space) {
                    acc.add(&state.assignments, &bits.eta);
                }
            }
        }
    }

    Ok(ChainOutput {
        chain: chain_id,
        trace,
        accumulator,
        final_state: state,
    })
}

fn record_row(
    state: &ChainState,
    cfg: &ModelConfig,
    data: &SequenceBatch,
    test: Option<&SequenceBatch>,
) -> Result<TraceRow> {
    let trunc = state.hyper.trunc;
    let phi = compute_phi(cfg.kernel.kind, state.lambda, &state.space, trunc)?;
    let nt = normalize_transitions(&state.trans.rates, &state.trans.init_rates, &phi)?;

    let mut tables = Vec::with_capacity(data.observations.num_sequences());
    for seq in 0..data.observations.num_sequences() {
        tables.push(loglik_table(
            &state.emission,
            state.space.binary(),
            &data.observations,
            seq,
            trunc,
        )?);
    }
    let train = marginal_loglik_batch(&nt, &tables);

    let (f1, hamming_rate) = match (&data.truth, &state.space) {
        (Some(truth), StateSpace::Binary(bits)) => {
            let mut pred = Array2::zeros((data.observations.total_len(), bits.dims()));
            let mut row = 0usize;
            for z in &state.assignments {
                for &s in z {
                    for d in 0..bits.dims() {
                        pred[(row, d)] = bits.eta[(s, d)];
                    }
                    row += 1;
                }
            }
            (
                Some(f1_binary(&pred, truth)?),
                Some(hamming_metric(&pred, truth)?.1),
            )
        }
        _ => (None, None),
    };

    let test_surprisal = match test {
        Some(batch) => {
            let mut test_tables = Vec::with_capacity(batch.observations.num_sequences());
            for seq in 0..batch.observations.num_sequences() {
                test_tables.push(loglik_table(
                    &state.emission,
                    state.space.binary(),
                    &batch.observations,
                    seq,
                    trunc,
                )?);
            }
            Some(-marginal_loglik_batch(&nt, &test_tables).per_obs)
        }
        None => None,
    };

    Ok(TraceRow {
        iteration: state.iteration,
        log_joint: state.log_joint(cfg, data)?,
        lambda: state.lambda,
        alpha: state.hyper.alpha,
        gamma: state.hyper.gamma,
        kappa: state.hyper.kappa,
        occupied_states: state.occupied_states(),
        f1,
        hamming_rate,
        train_loglik: Some(train.total),
        test_surprisal,
    })
}

/// Run all configured chains (in parallel) and aggregate.
pub fn run_chains(
    cfg: &ModelConfig,
    data: &SequenceBatch,
    test: Option<&SequenceBatch>,
    fixed_weights: Option<&Array2<f64>>,
) -> Result<(Vec<ChainOutput>, RunMetrics)> {
    cfg.validate()?;
    let outputs: Vec<ChainOutput> = (0..cfg.chains as u64)
        .into_par_iter()
        .map(|chain| run_chain(cfg, data, test, fixed_weights, None, chain))
        .collect::<Result<_>>()?;
    let metrics = summarize(cfg, data, &outputs)?;
    Ok((outputs, metrics))
}

pub fn summarize(
    cfg: &ModelConfig,
    data: &SequenceBatch,
    outputs: &[ChainOutput],
) -> Result<RunMetrics> {
    let chains: Vec<ChainSummary> = outputs
        .iter()
        .map(|out| {
            let mean = |pick: fn(&TraceRow) -> Option<f64>| {
                out.trace.post_burn_in_mean(cfg.burn_in, pick)
            };
            ChainSummary {
                chain: out.chain,
                mean_lambda: mean(|r| Some(r.lambda)).unwrap_or(f64::NAN),
                mean_alpha: mean(|r| Some(r.alpha)).unwrap_or(f64::NAN),
                mean_gamma: mean(|r| Some(r.gamma)).unwrap_or(f64::NAN),
                mean_occupied_states: mean(|r| Some(r.occupied_states as f64))
                    .unwrap_or(f64::NAN),
                mean_f1: mean(|r| r.f1),
                mean_hamming_rate: mean(|r| r.hamming_rate),
                mean_train_loglik: mean(|r| r.train_loglik),
                mean_test_surprisal: mean(|r| r.test_surprisal),
            }
        })
        .collect();

    let avg = |pick: fn(&ChainSummary) -> Option<f64>| -> Option<f64> {
        let vals: Vec<f64> = chains.iter().filter_map(pick).collect();
        if vals.is_empty() {
            None
        } else {
            Some(vals.iter().sum::<f64>() / vals.len() as f64)
        }
    };

    // pool the per-chain accumulators for the averaged state matrix
    let mut pooled: Option<StateMatrixAccumulator> = None;
    for out in outputs {
        if let Some(acc) = &out.accumulator {
            match &mut pooled {
                Some(p) => p.merge(acc),
                None => pooled = Some(acc.clone()),
            }
        }
    }
    let (pooled_f1, pooled_hamming) = match (&pooled, &data.truth) {
        (Some(acc), Some(truth)) => match acc.mean() {
            Some(mean) => {
                let thresholded = mean.mapv(|p| u8::from(p >= 0.5));
                (
                    Some(f1_from_probs(&mean, truth)?),
                    Some(hamming_metric(&thresholded, truth)?.1),
                )
            }
            None => (None, None),
        },
        _ => (None, None),
    };

    Ok(RunMetrics {
        variant: cfg.variant.as_str().to_string(),
        mean_f1: avg(|c| c.mean_f1),
        mean_hamming_rate: avg(|c| c.mean_hamming_rate),
        mean_lambda: avg(|c| Some(c.mean_lambda)).unwrap_or(f64::NAN),
        mean_test_surprisal: avg(|c| c.mean_test_surprisal),
        pooled_f1,
        pooled_hamming_rate: pooled_hamming,
        chains,
    })
}

/// Pooled posterior-mean state matrix across chains, when available.
pub fn pooled_state_matrix(outputs: &[ChainOutput]) -> Option<Array2<f64>> {
    let mut pooled: Option<StateMatrixAccumulator> = None;
    for out in outputs {
        if let Some(acc) = &out.accumulator {
            match &mut pooled {
                Some(p) => p.merge(acc),
                None => pooled = Some(acc.clone()),
            }
        }
    }
    pooled.and_then(|p| p.mean())
}
