//! Single-threaded stochastic proximal coordinate descent and a full
//! proximal-gradient reference solver.
//!
//! The serial solver is the zero-delay case of the asynchronous method: the
//! gradient entry is always evaluated at the current iterate. The reference
//! solver ([`solve_oracle`]) runs full proximal-gradient steps instead, so the
//! optimum it returns is computed along a different algorithmic path from the
//! coordinate solvers it is used to check.

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::problem::{dot, CompositeProblem};
use crate::prox::prox_full;
use crate::record::{worker_rng, RunRecord, Sampling, SolveConfig};

const ORACLE_MAX_ITERATIONS: usize = 10_000_000;
const POWER_ITERATIONS: usize = 50;
const POWER_SEED: u64 = 0x005e_ed0f_0c1e;

/// One proximal coordinate update with steplength `γ/L_max`.
#[derive(Debug, Clone, Copy)]
pub struct CoordinateStepper<'a> {
    problem: &'a CompositeProblem,
    step: f64,
}

impl<'a> CoordinateStepper<'a> {
    pub fn new(problem: &'a CompositeProblem, gamma: f64) -> Result<Self> {
        if !(gamma > 0.0) || !gamma.is_finite() {
            return Err(Error::InvalidArgument(format!("gamma must be positive, got {gamma}")));
        }
        let l_max = problem.lipschitz_info()?.l_max;
        Ok(CoordinateStepper {
            problem,
            step: gamma / l_max,
        })
    }

    /// `γ/L_max`
    pub fn step_length(&self) -> f64 {
        self.step
    }

    /// New value of coordinate `i` given the gradient entry and current `x_i`.
    #[inline]
    pub fn updated_coordinate(&self, current: f64, grad_i: f64) -> f64 {
        self.problem
            .regularizer()
            .prox_unchecked(current - self.step * grad_i, self.step)
    }

    /// Updates `x[i]` in place.
    #[inline]
    pub fn step_in_place(&self, x: &mut [f64], i: usize) {
        let g = self.problem.gradient_coordinate_unchecked(x, i);
        x[i] = self.updated_coordinate(x[i], g);
    }
}

/// `x` with coordinate `i` replaced by its proximal coordinate update.
pub fn spcd_step(problem: &CompositeProblem, x: &[f64], i: usize, gamma: f64) -> Result<Vec<f64>> {
    problem.gradient_coordinate(x, i)?;
    let stepper = CoordinateStepper::new(problem, gamma)?;
    let mut next = x.to_vec();
    stepper.step_in_place(&mut next, i);
    Ok(next)
}

/// Full proximal-gradient step `P_{(γ/L_max)g}(x − (γ/L_max)(Qx − c))`.
///
/// Coordinate `i` of the result is what [`spcd_step`] would write when it
/// picks `i`.
pub fn expected_step(problem: &CompositeProblem, x: &[f64], gamma: f64) -> Result<Vec<f64>> {
    let stepper = CoordinateStepper::new(problem, gamma)?;
    let grad = problem.gradient(x)?;
    let step = stepper.step_length();
    let y: Vec<f64> = x.iter().zip(&grad).map(|(xi, gi)| xi - step * gi).collect();
    prox_full(problem.regularizer(), &y, step)
}

fn initial_objective(problem: &CompositeProblem, x0: &[f64]) -> Result<f64> {
    let f0 = problem.evaluate_objective(x0)?;
    if f0.is_infinite() {
        return Err(Error::InvalidArgument(
            "x0 lies outside the regularizer's domain".into(),
        ));
    }
    Ok(f0)
}

/// Runs `n·epochs` coordinate steps on one thread.
pub fn solve_serial(problem: &CompositeProblem, x0: &[f64], config: &SolveConfig) -> Result<RunRecord> {
    config.validate()?;
    let n = problem.dim();
    let initial_objective = initial_objective(problem, x0)?;
    let stepper = CoordinateStepper::new(problem, config.gamma)?;
    let mut rng = worker_rng(config.seed, 0);
    let mut x = x0.to_vec();
    let mut order: Vec<usize> = (0..n).collect();

    let mut objective_by_epoch = Vec::with_capacity(config.epochs);
    let mut epoch_wall_seconds = Vec::with_capacity(config.epochs);
    let mut iterates_by_epoch = Vec::new();
    let mut wall = 0.0;
    let mut bookkeeping = 0.0;

    for epoch in 0..config.epochs {
        let started = Instant::now();
        match config.sampling {
            Sampling::WithReplacement => {
                for _ in 0..n {
                    let i = rng.random_range(0..n);
                    stepper.step_in_place(&mut x, i);
                }
            }
            Sampling::ShuffledEpochs => {
                order.shuffle(&mut rng);
                for &i in &order {
                    stepper.step_in_place(&mut x, i);
                }
            }
        }
        wall += started.elapsed().as_secs_f64();
        epoch_wall_seconds.push(wall);

        let started = Instant::now();
        let f = problem.objective_unchecked(&x);
        if !f.is_finite() {
            return Err(Error::Diverged { epoch: epoch + 1 });
        }
        objective_by_epoch.push(f);
        if config.keep_iterates {
            iterates_by_epoch.push(x.clone());
        }
        bookkeeping += started.elapsed().as_secs_f64();
    }

    Ok(RunRecord {
        seed: config.seed,
        threads: 1,
        gamma: config.gamma,
        epochs_run: config.epochs,
        initial_objective,
        objective_by_epoch,
        epoch_wall_seconds,
        wall_seconds: wall,
        barrier_seconds: bookkeeping,
        observed_tau: 0,
        staleness_cap: config.staleness_cap.unwrap_or(8),
        staleness_flagged: false,
        sampling: config.sampling,
        final_x: x,
        iterates_by_epoch,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleSolution {
    pub x_star: Vec<f64>,
    pub f_star: f64,
    pub iterations: usize,
    /// Global Lipschitz bound the iteration used as its inverse steplength.
    pub lipschitz: f64,
}

/// Largest-eigenvalue estimate of `Q` from a fixed-seed power iteration.
pub fn power_iteration_estimate(problem: &CompositeProblem, iterations: usize) -> f64 {
    let n = problem.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(POWER_SEED);
    let mut v: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let mut estimate = 0.0;
    for _ in 0..iterations {
        let norm = dot(&v, &v).sqrt();
        if norm == 0.0 {
            return 0.0;
        }
        v.iter_mut().for_each(|e| *e /= norm);
        let w: Vec<f64> = (0..n).map(|i| dot(problem.row(i), &v)).collect();
        estimate = dot(&w, &v);
        v = w;
    }
    estimate
}

/// Solves the problem to `‖x − T(x)‖∞ ≤ tol` by proximal gradient with step
/// `1/L`, starting from the origin.
///
/// `L` is 1.05 times a 50-step power-iteration estimate of `‖Q‖₂`, capped by
/// the guaranteed bound `L_res·√n`.
pub fn solve_oracle(problem: &CompositeProblem, tol: f64) -> Result<OracleSolution> {
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument(format!("tol must be positive, got {tol}")));
    }
    let n = problem.dim();
    let info = problem.lipschitz_info()?;
    let upper = info.l_res * (n as f64).sqrt();
    let lipschitz = (1.05 * power_iteration_estimate(problem, POWER_ITERATIONS))
        .min(upper)
        .max(info.l_max);
    let step = 1.0 / lipschitz;
    let reg = *problem.regularizer();

    let mut x = vec![0.0; n];
    let mut next = vec![0.0; n];
    let mut residual = f64::INFINITY;
    for it in 1..=ORACLE_MAX_ITERATIONS {
        residual = 0.0;
        for i in 0..n {
            let g = problem.gradient_coordinate_unchecked(&x, i);
            let v = reg.prox_unchecked(x[i] - step * g, step);
            residual = f64::max(residual, (v - x[i]).abs());
            next[i] = v;
        }
        std::mem::swap(&mut x, &mut next);
        if !residual.is_finite() {
            break;
        }
        if residual <= tol {
            let f_star = problem.objective_unchecked(&x);
            return Ok(OracleSolution {
                x_star: x,
                f_star,
                iterations: it,
                lipschitz,
            });
        }
    }
    Err(Error::NoConvergence {
        iterations: ORACLE_MAX_ITERATIONS,
        residual,
    })
}
