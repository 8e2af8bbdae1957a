//! One full Gibbs sweep over the blocks
//! {γ, α, β, rates, initial rates} → {z, u, Q, M, r, w} →
//! {state/emission parameters} → {λ, σ², μ}.
//!
//! The sweep can run with one deliberate single-site corruption switched
//! on; the correctness harness uses those to demonstrate that the
//! validation suites actually detect broken conditionals. Production
//! paths always pass [`SamplerMutation::None`].

use ndarray::Array2;

use crate::emissions::{
    eta_emission_log_ratio, loglik_table, sample_mu, sample_sigma2, sample_theta_categorical,
    sample_w, state_suff_stats, EmissionState,
};
use crate::engine::config::ModelConfig;
use crate::engine::state::ChainState;
use crate::error::Result;
use crate::hdp::{
    sample_alpha, sample_beta, sample_gamma_conc, sample_m, sample_pi, sample_pi0, sample_q,
    sample_r_w, sample_u, sticky_rho_update,
};
use crate::inference::{
    count_transitions, ffbs_sample_z, forward_pass, normalize_transitions, NormalizedTransitions,
    SequenceBatch,
};
use crate::rng::RandomStream;
use crate::similarity::{
    compute_phi, gibbs_update_eta, hmc_update_locations, kernel_distances, sample_lambda,
    KernelKind, StateSpace,
};

/// Deliberate single-site corruptions for mutation testing of the
/// correctness harness. `None` is the production sampler.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SamplerMutation {
    None,
    /// Inflate every rate-conditional shape by one.
    RateShapeInflated,
    /// Draw holding times against raw row sums, ignoring the similarity
    /// rescaling.
    HoldTimeIgnoresPhi,
    /// Seat only successful transitions when drawing table counts.
    TableCountIgnoresFailures,
    /// Drop the transition-count term from the λ density exponent.
    LambdaExponentDropsCounts,
    /// Transpose the transition kernel in the backward sampling pass.
    BackwardKernelTransposed,
}

impl SamplerMutation {
    pub const ALL_CORRUPTIONS: [SamplerMutation; 5] = [
        SamplerMutation::RateShapeInflated,
        SamplerMutation::HoldTimeIgnoresPhi,
        SamplerMutation::TableCountIgnoresFailures,
        SamplerMutation::LambdaExponentDropsCounts,
        SamplerMutation::BackwardKernelTransposed,
    ];
}

/// One production Gibbs sweep.
pub fn gibbs_sweep(state: &mut ChainState, data: &SequenceBatch, cfg: &ModelConfig) -> Result<()> {
    gibbs_sweep_with(state, data, cfg, SamplerMutation::None)
}

/// One Gibbs sweep with an optional deliberate corruption.
pub fn gibbs_sweep_with(
    state: &mut ChainState,
    data: &SequenceBatch,
    cfg: &ModelConfig,
    mutation: SamplerMutation,
) -> Result<()> {
    let ChainState {
        hyper,
        trans,
        lambda,
        space,
        emission,
        assignments,
        rng,
        iteration,
        hmc_step,
        hmc_accepted,
        hmc_attempted,
    } = state;

    // ── block 1: concentrations, top-level weights, rates ──
    sample_gamma_conc(trans, hyper, rng)?;
    sample_alpha(trans, hyper, rng)?;
    sample_beta(trans, hyper, rng)?;
    if mutation == SamplerMutation::RateShapeInflated {
        trans.failed_jumps.mapv_inplace(|q| q + 1);
        sample_pi(trans, hyper, rng)?;
        trans.failed_jumps.mapv_inplace(|q| q - 1);
    } else {
        sample_pi(trans, hyper, rng)?;
    }
    sample_pi0(trans, hyper, rng)?;

    // ── block 2: hidden path, then augmentation from its forward laws ──
    let phi = compute_phi(cfg.kernel.kind, *lambda, space, hyper.trunc)?;
    let nt = normalize_transitions(&trans.rates, &trans.init_rates, &phi)?;
    for (seq, z) in assignments.iter_mut().enumerate() {
        let table = loglik_table(emission, space.binary(), &data.observations, seq, hyper.trunc)?;
        *z = if mutation == SamplerMutation::BackwardKernelTransposed {
            ffbs_transposed_backward(&nt, &table, rng)?
        } else {
            ffbs_sample_z(&nt, &table, rng)?
        };
    }
    let (counts, initial) = count_transitions(assignments, hyper.trunc)?;
    trans.trans_counts = counts;
    trans.init_counts = initial;

    if mutation == SamplerMutation::HoldTimeIgnoresPhi {
        let ones = Array2::ones((hyper.trunc, hyper.trunc));
        sample_u(trans, &ones, rng)?;
    } else {
        sample_u(trans, &phi, rng)?;
    }
    sample_q(trans, &phi, rng)?;
    if mutation == SamplerMutation::TableCountIgnoresFailures {
        let saved = trans.failed_jumps.clone();
        trans.failed_jumps.fill(0);
        sample_m(trans, hyper, rng)?;
        trans.failed_jumps = saved;
    } else {
        sample_m(trans, hyper, rng)?;
    }
    if cfg.variant.is_sticky() {
        sticky_rho_update(trans, hyper, rng)?;
    }
    sample_r_w(trans, hyper, rng)?;

    // ── block 3: state structure and emission parameters ──
    match (&mut *emission, &mut *space) {
        (EmissionState::LinearGaussian(lg), StateSpace::Binary(bits)) => {
            let channels = lg.channels();
            let stats = state_suff_stats(hyper.trunc, channels, assignments, &data.observations)?;
            // the kernel reads η only under the Laplacian-Hamming kernel;
            // otherwise the transition terms are inert (λ treated as 0)
            let lambda_eff = if cfg.kernel.kind == KernelKind::LaplacianHamming {
                *lambda
            } else {
                0.0
            };
            let lg_ref: &crate::emissions::LinearGaussianEmission = lg;
            gibbs_update_eta(
                bits,
                lambda_eff,
                &trans.trans_counts,
                &trans.failed_jumps,
                |j, d, eta| eta_emission_log_ratio(lg_ref, &stats, j, d, eta),
                rng,
            );
        }
        (EmissionState::Categorical(cat), _) => {
            sample_theta_categorical(cat, assignments, &data.observations, rng)?;
        }
        _ => {}
    }
    if cfg.kernel.kind == KernelKind::GaussianEuclidean {
        if let StateSpace::Euclidean(locs) = &mut *space {
            *hmc_attempted += 1;
            if hmc_update_locations(
                locs,
                cfg.kernel.h_loc,
                *lambda,
                &trans.trans_counts,
                &trans.failed_jumps,
                *hmc_step,
                cfg.kernel.hmc_leapfrog_steps,
                rng,
            )? {
                *hmc_accepted += 1;
            }
        }
    }

    // ── block 4: kernel decay and remaining emission hyperparameters ──
    if cfg.kernel.kind != KernelKind::Constant && !cfg.kernel.fix_lambda {
        let distances = kernel_distances(cfg.kernel.kind, space)?
            .expect("non-constant kernel always has distances");
        if mutation == SamplerMutation::LambdaExponentDropsCounts {
            let zeroed = Array2::zeros((hyper.trunc, hyper.trunc));
            *lambda = sample_lambda(
                cfg.kernel.b_lambda,
                &distances,
                &zeroed,
                &trans.failed_jumps,
                rng,
            )?;
        } else {
            *lambda = sample_lambda(
                cfg.kernel.b_lambda,
                &distances,
                &trans.trans_counts,
                &trans.failed_jumps,
                rng,
            )?;
        }
    }
    if let (EmissionState::LinearGaussian(lg), StateSpace::Binary(bits)) =
        (&mut *emission, &mut *space)
    {
        sample_sigma2(lg, bits, assignments, &data.observations, rng)?;
        if !lg.w_fixed {
            sample_w(lg, bits, assignments, &data.observations, rng)?;
        }
        sample_mu(bits, rng)?;
    }

    *iteration += 1;
    Ok(())
}

/// FFBS with the backward kernel deliberately transposed; only reachable
/// from the mutation-testing harness.
fn ffbs_transposed_backward(
    nt: &NormalizedTransitions,
    loglik: &Array2<f64>,
    rng: &mut RandomStream,
) -> Result<Vec<usize>> {
    let steps = loglik.nrows();
    if steps == 0 {
        return Ok(Vec::new());
    }
    let fwd = forward_pass(nt, loglik);
    if fwd.underflow_at.is_some() {
        return Err(crate::error::Error::numeric("forward message vanished"));
    }
    let trunc = loglik.ncols();
    let mut path = vec![0usize; steps];
    path[steps - 1] = weighted_index(fwd.messages.row(steps - 1).as_slice().unwrap(), rng);
    let mut weights = vec![0.0; trunc];
    for t in (0..steps - 1).rev() {
        let next = path[t + 1];
        for i in 0..trunc {
            weights[i] = fwd.messages[(t, i)] * nt.probs[(next, i)];
        }
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            // the corrupted kernel can zero out; fall back to the filter
            for i in 0..trunc {
                weights[i] = fwd.messages[(t, i)];
            }
        }
        path[t] = weighted_index(&weights, rng);
    }
    Ok(path)
}

fn weighted_index(weights: &[f64], rng: &mut RandomStream) -> usize {
    let total: f64 = weights.iter().sum();
    let mut u = rng.uniform() * total;
    for (i, w) in weights.iter().enumerate() {
        u -= w;
        if u <= 0.0 {
            return i;
        }
    }
    weights.len() - 1
}
