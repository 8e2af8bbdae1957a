//! Per-iteration scalar trace of a Gibbs run.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::Result;

/// One recorded iteration. Metric columns stay empty when the run has no
/// ground truth or test set to score against.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TraceRow {
    pub iteration: u64,
    pub log_joint: f64,
    pub lambda: f64,
    pub alpha: f64,
    pub gamma: f64,
    pub kappa: f64,
    pub occupied_states: usize,
    pub f1: Option<f64>,
    pub hamming_rate: Option<f64>,
    pub train_loglik: Option<f64>,
    pub test_surprisal: Option<f64>,
}

#[derive(Debug, Clone, Default)]
pub struct GibbsTrace {
    pub rows: Vec<TraceRow>,
}

impl GibbsTrace {
    pub fn push(&mut self, row: TraceRow) {
        debug_assert!(
            self.rows
                .last()
                .map(|r| r.iteration < row.iteration)
                .unwrap_or(true),
            "trace iterations must be strictly increasing"
        );
        self.rows.push(row);
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(writer);
        for row in &self.rows {
            out.serialize(row)?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path)?;
        self.write_csv(std::io::BufWriter::new(file))
    }

    pub fn read_csv<R: std::io::Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(reader);
        let mut rows = Vec::new();
        for row in rdr.deserialize() {
            rows.push(row?);
        }
        Ok(GibbsTrace { rows })
    }

    /// Mean of a statistic over rows strictly past burn-in.
    pub fn post_burn_in_mean<F>(&self, burn_in: u64, pick: F) -> Option<f64>
    where
        F: Fn(&TraceRow) -> Option<f64>,
    {
        let values: Vec<f64> = self
            .rows
            .iter()
            .filter(|r| r.iteration > burn_in)
            .filter_map(pick)
            .collect();
        if values.is_empty() {
            None
        } else {
            Some(values.iter().sum::<f64>() / values.len() as f64)
        }
    }
}
