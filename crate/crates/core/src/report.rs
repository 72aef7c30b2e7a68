//! Per-iteration traces produced by the solver and the baseline updaters.

use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::solver::SolverConfig;

/// One iteration of a run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterRecord {
    pub iter: usize,
    /// Solver time since the start of the run, in seconds.
    pub seconds: f64,
    pub objective: f64,
    pub sparsity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportSummary {
    pub final_objective: f64,
    pub final_density: f64,
    pub config: SolverConfig,
}

/// Trace of a pruning or weight-update run on one layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PruneReport {
    pub layer: String,
    pub records: Vec<IterRecord>,
    pub summary: ReportSummary,
}

impl PruneReport {
    /// Copy with every timestamp set to zero, for byte-reproducible output.
    pub fn without_timing(&self) -> PruneReport {
        let mut out = self.clone();
        out.records.iter_mut().for_each(|r| r.seconds = 0.0);
        out
    }

    pub fn objectives(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.objective).collect()
    }

    pub fn sparsities(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.sparsity).collect()
    }
}

/// Monotonic stopwatch that can be paused around bookkeeping work such as
/// objective evaluation.
#[derive(Debug)]
pub(crate) struct Stopwatch {
    elapsed: Duration,
    started: Option<Instant>,
}

impl Stopwatch {
    pub(crate) fn start() -> Self {
        Self {
            elapsed: Duration::ZERO,
            started: Some(Instant::now()),
        }
    }

    pub(crate) fn pause(&mut self) {
        if let Some(t) = self.started.take() {
            self.elapsed += t.elapsed();
        }
    }

    pub(crate) fn resume(&mut self) {
        if self.started.is_none() {
            self.started = Some(Instant::now());
        }
    }

    pub(crate) fn seconds(&self) -> f64 {
        let running = self.started.map_or(Duration::ZERO, |t| t.elapsed());
        (self.elapsed + running).as_secs_f64()
    }
}
