//! Multicore asynchronous proximal coordinate descent.
//!
//! Coordinates are split into contiguous slices, one per worker, and only the
//! owning worker ever writes a coordinate. Workers read the shared iterate
//! without locks while others are writing it, compute one gradient entry from
//! whatever mix of versions they saw, and write the proximal update back.
//! The only synchronization is a barrier at each epoch boundary, where the
//! coordinating thread evaluates the objective on the then-quiescent iterate.

use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Barrier;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};
use crate::problem::CompositeProblem;
use crate::record::{worker_rng, RunRecord, Sampling, SolveConfig};
use crate::serial::CoordinateStepper;
use crate::shared::{SharedIterate, SliceWriter};

/// Runs `epochs` epochs of the asynchronous solver on `threads` workers.
///
/// One epoch is one pass of every worker over its slice, i.e. `n` updates in
/// total. With `threads == 1` the run performs exactly the updates of
/// [`solve_serial`](crate::serial::solve_serial) with the same seed and
/// sampling, in the same order.
pub fn solve_async(problem: &CompositeProblem, x0: &[f64], config: &SolveConfig, threads: usize) -> Result<RunRecord> {
    config.validate()?;
    let n = problem.dim();
    if threads == 0 {
        return Err(Error::InvalidArgument("need at least one thread".into()));
    }
    if threads > n {
        return Err(Error::TooManyThreads { threads, n });
    }
    let initial_objective = problem.evaluate_objective(x0)?;
    if initial_objective.is_infinite() {
        return Err(Error::InvalidArgument(
            "x0 lies outside the regularizer's domain".into(),
        ));
    }
    let stepper = CoordinateStepper::new(problem, config.gamma)?;
    let staleness_cap = config.staleness_cap.unwrap_or(8 * threads as u64);

    let mut shared = SharedIterate::new(x0);
    let (reader, writers) = shared.partition(threads);

    let barrier = Barrier::new(threads + 1);
    let stop = AtomicBool::new(false);

    let mut objective_by_epoch = Vec::with_capacity(config.epochs);
    let mut epoch_wall_seconds = Vec::with_capacity(config.epochs);
    let mut iterates_by_epoch = Vec::new();
    let mut wall = 0.0;
    let mut barrier_seconds = 0.0;
    let mut diverged_at = None;
    let mut snapshot = vec![0.0; n];

    let observed_tau = std::thread::scope(|scope| {
        let handles: Vec<_> = writers
            .into_iter()
            .enumerate()
            .map(|(w, writer)| {
                let barrier = &barrier;
                let stop = &stop;
                let stepper = &stepper;
                let sampling = config.sampling;
                let seed = config.seed;
                scope.spawn(move || worker(problem, stepper, writer, barrier, stop, sampling, worker_rng(seed, w)))
            })
            .collect();

        for epoch in 0..config.epochs {
            let started = Instant::now();
            barrier.wait();
            barrier.wait();
            wall += started.elapsed().as_secs_f64();
            epoch_wall_seconds.push(wall);

            let started = Instant::now();
            reader.snapshot_into(&mut snapshot);
            let f = problem.objective_unchecked(&snapshot);
            barrier_seconds += started.elapsed().as_secs_f64();
            if !f.is_finite() {
                diverged_at = Some(epoch + 1);
                break;
            }
            objective_by_epoch.push(f);
            if config.keep_iterates {
                iterates_by_epoch.push(snapshot.clone());
            }
        }
        stop.store(true, Ordering::Release);
        barrier.wait();
        handles
            .into_iter()
            .map(|h| h.join().expect("worker panicked"))
            .max()
            .unwrap_or(0)
    });

    if let Some(epoch) = diverged_at {
        return Err(Error::Diverged { epoch });
    }

    Ok(RunRecord {
        seed: config.seed,
        threads,
        gamma: config.gamma,
        epochs_run: config.epochs,
        initial_objective,
        objective_by_epoch,
        epoch_wall_seconds,
        wall_seconds: wall,
        barrier_seconds,
        observed_tau,
        staleness_cap,
        staleness_flagged: observed_tau > staleness_cap,
        sampling: config.sampling,
        final_x: shared.to_vec(),
        iterates_by_epoch,
    })
}

/// Worker loop; returns the largest staleness it observed.
fn worker<R: Rng>(
    problem: &CompositeProblem,
    stepper: &CoordinateStepper<'_>,
    writer: SliceWriter<'_>,
    barrier: &Barrier,
    stop: &AtomicBool,
    sampling: Sampling,
    mut rng: R,
) -> u64 {
    let shared = writer.shared();
    let range = writer.range();
    let mut order: Vec<usize> = range.clone().collect();
    let mut max_stale = 0u64;

    let mut update = |i: usize| {
        let (grad, before) = shared.read_gradient(problem, i);
        // only this worker writes component i, so this is its current value
        let current = shared.load(i);
        let after = writer.apply_update(i, stepper.updated_coordinate(current, grad));
        max_stale = max_stale.max(after - before - 1);
    };

    loop {
        barrier.wait();
        if stop.load(Ordering::Acquire) {
            break;
        }
        if !range.is_empty() {
            match sampling {
                Sampling::ShuffledEpochs => {
                    order.shuffle(&mut rng);
                    for &i in &order {
                        update(i);
                    }
                }
                Sampling::WithReplacement => {
                    for _ in 0..range.len() {
                        update(rng.random_range(range.clone()));
                    }
                }
            }
        }
        barrier.wait();
    }
    max_stale
}
