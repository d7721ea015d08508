//! Run configuration and the per-run trajectory record shared by both solvers.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How coordinate indices are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sampling {
    /// Uniform draw per step, independent across steps.
    WithReplacement,
    /// A fresh uniform permutation of the (owned) indices every epoch.
    ShuffledEpochs,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveConfig {
    pub gamma: f64,
    pub epochs: usize,
    pub seed: u64,
    pub sampling: Sampling,
    /// Keep a copy of `x` at every epoch boundary (needed for potential-based
    /// certification; costs `n·epochs` floats).
    pub keep_iterates: bool,
    /// Staleness above which an asynchronous run is flagged. `None` means
    /// `8·threads`.
    pub staleness_cap: Option<u64>,
}

impl SolveConfig {
    pub fn new(gamma: f64, epochs: usize) -> Self {
        SolveConfig {
            gamma,
            epochs,
            seed: 0,
            sampling: Sampling::ShuffledEpochs,
            keep_iterates: false,
            staleness_cap: None,
        }
    }

    pub fn seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn sampling(mut self, sampling: Sampling) -> Self {
        self.sampling = sampling;
        self
    }

    pub fn keep_iterates(mut self, keep: bool) -> Self {
        self.keep_iterates = keep;
        self
    }

    pub fn staleness_cap(mut self, cap: u64) -> Self {
        self.staleness_cap = Some(cap);
        self
    }

    pub(crate) fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0) || !self.gamma.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "gamma must be positive and finite, got {}",
                self.gamma
            )));
        }
        Ok(())
    }
}

/// Index stream for worker `worker` of a run seeded with `seed`.
///
/// The serial solver uses worker 0, so a one-thread asynchronous run sees
/// exactly the serial index sequence.
pub fn worker_rng(seed: u64, worker: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(worker as u64);
    rng
}

/// Trajectory of one solver run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub seed: u64,
    pub threads: usize,
    pub gamma: f64,
    #[serde(rename = "epochs")]
    pub epochs_run: usize,
    /// `F(x₀)`
    pub initial_objective: f64,
    /// `F` after each completed epoch.
    pub objective_by_epoch: Vec<f64>,
    /// Cumulative worker wall time at each epoch boundary.
    pub epoch_wall_seconds: Vec<f64>,
    /// Worker-loop wall time; excludes objective evaluation at barriers.
    pub wall_seconds: f64,
    /// Time spent in epoch barriers and objective evaluation.
    pub barrier_seconds: f64,
    /// Largest number of updates by other workers between a read and the
    /// matching write.
    pub observed_tau: u64,
    pub staleness_cap: u64,
    pub staleness_flagged: bool,
    pub sampling: Sampling,
    pub final_x: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub iterates_by_epoch: Vec<Vec<f64>>,
}
