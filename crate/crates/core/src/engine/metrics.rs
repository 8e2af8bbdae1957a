//! Evaluation metrics for inferred binary state matrices.

use ndarray::Array2;

use crate::error::{Error, Result};

fn check_shapes<A, B>(pred: &Array2<A>, truth: &Array2<B>) -> Result<()> {
    if pred.dim() != truth.dim() {
        return Err(Error::input(format!(
            "shape mismatch: predictions {:?} vs truth {:?}",
            pred.dim(),
            truth.dim()
        )));
    }
    Ok(())
}

/// Micro-averaged binary F1 over all cells:
/// `2·TP / (2·TP + FP + FN)`. Zero true positives with any error gives
/// 0; identical all-zero matrices give 1.
pub fn f1_binary(pred: &Array2<u8>, truth: &Array2<u8>) -> Result<f64> {
    check_shapes(pred, truth)?;
    let mut tp = 0u64;
    let mut fp = 0u64;
    let mut fng = 0u64;
    for (&p, &t) in pred.iter().zip(truth.iter()) {
        match (p, t) {
            (1, 1) => tp += 1,
            (1, 0) => fp += 1,
            (0, 1) => fng += 1,
            _ => {}
        }
    }
    if tp == 0 {
        return Ok(if fp + fng == 0 { 1.0 } else { 0.0 });
    }
    Ok(2.0 * tp as f64 / (2.0 * tp as f64 + fp as f64 + fng as f64))
}

/// Threshold a probability matrix at 0.5 (ties round up) and score it.
pub fn f1_from_probs(probs: &Array2<f64>, truth: &Array2<u8>) -> Result<f64> {
    check_shapes(probs, truth)?;
    let pred = probs.mapv(|p| u8::from(p >= 0.5));
    f1_binary(&pred, truth)
}

/// Count of mismatched cells and the per-cell rate.
pub fn hamming_metric(pred: &Array2<u8>, truth: &Array2<u8>) -> Result<(u64, f64)> {
    check_shapes(pred, truth)?;
    let count = pred
        .iter()
        .zip(truth.iter())
        .filter(|(p, t)| p != t)
        .count() as u64;
    Ok((count, count as f64 / pred.len() as f64))
}

/// Running mean of the per-step binary state rows, for posterior
/// averaging of the inferred state matrix.
#[derive(Debug, Clone)]
pub struct StateMatrixAccumulator {
    sum: Array2<f64>,
    samples: u64,
}

impl StateMatrixAccumulator {
    pub fn new(steps: usize, dims: usize) -> Self {
        StateMatrixAccumulator {
            sum: Array2::zeros((steps, dims)),
            samples: 0,
        }
    }

    /// Add the state matrix implied by the current assignments: row t is
    /// the binary vector of state `z_t`.
    pub fn add(&mut self, assignments: &[Vec<usize>], eta: &Array2<u8>) {
        let mut row = 0usize;
        for z in assignments {
            for &state in z {
                for d in 0..eta.ncols() {
                    self.sum[(row, d)] += eta[(state, d)] as f64;
                }
                row += 1;
            }
        }
        self.samples += 1;
    }

    pub fn merge(&mut self, other: &StateMatrixAccumulator) {
        self.sum += &other.sum;
        self.samples += other.samples;
    }

    pub fn samples(&self) -> u64 {
        self.samples
    }

    pub fn mean(&self) -> Option<Array2<f64>> {
        if self.samples == 0 {
            return None;
        }
        Some(&self.sum / self.samples as f64)
    }
}
