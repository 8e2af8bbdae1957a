//! Leapfrog integration and a generic Hamiltonian Monte Carlo step.

use crate::error::{Error, Result};
use crate::rng::RandomStream;

/// Standard leapfrog trajectory for potential gradient `grad` (writes
/// ∇U(q) into its second argument). Volume-preserving and reversible;
/// zero steps is the identity.
///
/// Returns a divergence error if the gradient goes non-finite anywhere
/// along the trajectory; callers treat that as a rejected proposal.
pub fn leapfrog<G>(
    position: &mut [f64],
    momentum: &mut [f64],
    mut grad: G,
    step: f64,
    steps: usize,
) -> Result<()>
where
    G: FnMut(&[f64], &mut [f64]),
{
    if steps == 0 {
        return Ok(());
    }
    if !(step > 0.0) {
        return Err(Error::parameter(format!(
            "leapfrog requires a positive step size, got {step}"
        )));
    }
    let dim = position.len();
    let mut g = vec![0.0; dim];
    let refresh =
        |g: &mut Vec<f64>, q: &[f64], grad: &mut G| -> Result<()> {
            grad(q, g);
            if g.iter().any(|v| !v.is_finite()) {
                return Err(Error::numeric(
                    "leapfrog: non-finite gradient (diverged trajectory)".to_string(),
                ));
            }
            Ok(())
        };
    refresh(&mut g, position, &mut grad)?;
    for _ in 0..steps {
        for i in 0..dim {
            momentum[i] -= 0.5 * step * g[i];
        }
        for i in 0..dim {
            position[i] += step * momentum[i];
            if !position[i].is_finite() {
                return Err(Error::numeric(
                    "leapfrog: non-finite position (diverged trajectory)".to_string(),
                ));
            }
        }
        refresh(&mut g, position, &mut grad)?;
        for i in 0..dim {
            momentum[i] -= 0.5 * step * g[i];
        }
    }
    Ok(())
}

/// One HMC proposal with unit mass matrix. `position` is left unchanged
/// when the proposal is rejected (including on divergence).
pub fn hmc_step<U, G>(
    position: &mut [f64],
    potential: U,
    grad: G,
    step: f64,
    steps: usize,
    rng: &mut RandomStream,
) -> Result<bool>
where
    U: Fn(&[f64]) -> f64,
    G: FnMut(&[f64], &mut [f64]),
{
    let dim = position.len();
    let mut momentum: Vec<f64> = (0..dim).map(|_| rng.standard_normal()).collect();
    let u0 = potential(position);
    if !u0.is_finite() {
        return Err(Error::numeric(
            "hmc_step: potential is non-finite at the current state".to_string(),
        ));
    }
    let kinetic0: f64 = momentum.iter().map(|p| 0.5 * p * p).sum();

    let mut proposal = position.to_vec();
    if leapfrog(&mut proposal, &mut momentum, grad, step, steps).is_err() {
        return Ok(false);
    }
    let u1 = potential(&proposal);
    let kinetic1: f64 = momentum.iter().map(|p| 0.5 * p * p).sum();
    if !u1.is_finite() || !kinetic1.is_finite() {
        return Ok(false);
    }

    let log_accept = (u0 + kinetic0) - (u1 + kinetic1);
    if rng.uniform_open().ln() < log_accept {
        position.copy_from_slice(&proposal);
        Ok(true)
    } else {
        Ok(false)
    }
}
