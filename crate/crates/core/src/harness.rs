//! Synthetic ℓ2-ℓ1 instances, experiment orchestration, rate certification
//! and report export.

use std::collections::BTreeSet;
use std::io::Write;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::engine::solve_async;
use crate::error::{Error, Result};
use crate::problem::CompositeProblem;
use crate::prox::SeparableRegularizer;
use crate::record::{RunRecord, SolveConfig};
use crate::serial::solve_oracle;
use crate::theory::{composite_potential, RateEnvelope, RateMode, StepPlan};

/// Refuse to generate instances needing more than this many bytes.
pub const DEFAULT_MEMORY_BUDGET: u64 = 4 << 30;

/// Multiplicative slack allowed over a theoretical envelope.
pub const CERTIFICATION_SLACK: f64 = 1.10;

/// Tolerance of the reference solve used to obtain `F*`.
pub const ORACLE_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", content = "value", rename_all = "snake_case")]
pub enum LambdaRule {
    /// `λ = 20·√(m·ln n)·σ`
    CompressedSensing,
    Explicit(f64),
}

/// `min ½‖Ax − b‖² + λ‖x‖₁` with Gaussian `A` and an `s`-sparse planted signal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InstanceSpec {
    pub m: usize,
    pub n: usize,
    pub s: usize,
    pub sigma: f64,
    pub seed: u64,
    pub lambda_rule: LambdaRule,
}

impl InstanceSpec {
    pub fn new(m: usize, n: usize, s: usize, sigma: f64, seed: u64) -> Self {
        InstanceSpec {
            m,
            n,
            s,
            sigma,
            seed,
            lambda_rule: LambdaRule::CompressedSensing,
        }
    }

    /// `m = 600, n = 1000, s = 10, σ = 0.01`.
    pub fn desk(seed: u64) -> Self {
        Self::new(600, 1000, 10, 0.01, seed)
    }

    /// `m = 6000, n = 10000, s = 10, σ = 0.01`.
    pub fn benchmark_10k(seed: u64) -> Self {
        Self::new(6000, 10_000, 10, 0.01, seed)
    }

    /// `m = 12000, n = 20000, s = 20, σ = 0.01`.
    pub fn benchmark_20k(seed: u64) -> Self {
        Self::new(12_000, 20_000, 20, 0.01, seed)
    }

    pub fn lambda(&self) -> f64 {
        match self.lambda_rule {
            LambdaRule::CompressedSensing => 20.0 * (self.m as f64 * (self.n as f64).ln()).sqrt() * self.sigma,
            LambdaRule::Explicit(v) => v,
        }
    }

    /// Bytes held at peak during generation: `A`, `Q`, `b`, `c`, `x_true`.
    pub fn required_bytes(&self) -> u64 {
        let (m, n) = (self.m as u64, self.n as u64);
        8 * (n * n + m * n + m + 2 * n)
    }

    fn validate(&self) -> Result<()> {
        if self.m == 0 || self.n == 0 {
            return Err(Error::InvalidArgument("m and n must be positive".into()));
        }
        if self.s > self.n {
            return Err(Error::SupportTooLarge { s: self.s, n: self.n });
        }
        if !(self.sigma >= 0.0) || !self.sigma.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "sigma must be >= 0, got {}",
                self.sigma
            )));
        }
        if let LambdaRule::Explicit(v) = self.lambda_rule {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::InvalidArgument(format!("lambda must be >= 0, got {v}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct GeneratedInstance {
    pub spec: InstanceSpec,
    pub problem: CompositeProblem,
    pub x_true: Vec<f64>,
    pub lambda: f64,
}

impl GeneratedInstance {
    pub fn support(&self) -> BTreeSet<usize> {
        support_of(&self.x_true, 0.0)
    }
}

pub fn generate_instance(spec: &InstanceSpec) -> Result<GeneratedInstance> {
    generate_instance_within(spec, DEFAULT_MEMORY_BUDGET)
}

/// Draws `A`, the planted signal and the noise from one ChaCha stream seeded
/// by `spec.seed`, then forms `Q = AᵀA`, `c = Aᵀb`, `constant = ½bᵀb`.
pub fn generate_instance_within(spec: &InstanceSpec, budget: u64) -> Result<GeneratedInstance> {
    spec.validate()?;
    let required = spec.required_bytes();
    if required > budget {
        return Err(Error::MemoryBudget { required, budget });
    }
    let (m, n) = (spec.m, spec.n);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    let a: Vec<f64> = (0..m * n).map(|_| StandardNormal.sample(&mut rng)).collect();
    let mut x_true = vec![0.0; n];
    let mut support: Vec<usize> = rand::seq::index::sample(&mut rng, n, spec.s).into_vec();
    support.sort_unstable();
    for &i in &support {
        x_true[i] = StandardNormal.sample(&mut rng);
    }
    let noise = Normal::new(0.0, spec.sigma).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let b: Vec<f64> = (0..m)
        .map(|r| {
            let row = &a[r * n..(r + 1) * n];
            let clean: f64 = support.iter().map(|&i| row[i] * x_true[i]).sum();
            clean + noise.sample(&mut rng)
        })
        .collect();

    let mut q = vec![0.0; n * n];
    // SAFETY: the stride arguments describe `a` as n×m (Aᵀ, column-major view
    // of the row-major m×n buffer), `a` as m×n and `q` as n×n, all within
    // their allocations.
    unsafe {
        matrixmultiply::dgemm(
            n,
            m,
            n,
            1.0,
            a.as_ptr(),
            1,
            n as isize,
            a.as_ptr(),
            n as isize,
            1,
            0.0,
            q.as_mut_ptr(),
            n as isize,
            1,
        );
    }
    for i in 0..n {
        for j in (i + 1)..n {
            q[j * n + i] = q[i * n + j];
        }
    }
    let mut c = vec![0.0; n];
    for (r, &br) in b.iter().enumerate() {
        for (ci, aij) in c.iter_mut().zip(&a[r * n..(r + 1) * n]) {
            *ci += aij * br;
        }
    }
    let constant = 0.5 * b.iter().map(|v| v * v).sum::<f64>();
    drop(a);

    let lambda = spec.lambda();
    let problem = CompositeProblem::new(q, c, constant, SeparableRegularizer::L1 { lambda })?;
    Ok(GeneratedInstance {
        spec: *spec,
        problem,
        x_true,
        lambda,
    })
}

/// Whether the lowest-objective run has nonzeros (above `1e-6·λ/L_max`)
/// exactly on the support of `x_true`. `None` without runs.
pub fn support_recovered(report: &ExperimentReport, x_true: &[f64], lambda: f64) -> Option<bool> {
    let last = |r: &RunRecord| r.objective_by_epoch.last().copied().unwrap_or(f64::INFINITY);
    let best = report.runs.iter().min_by(|a, b| last(a).total_cmp(&last(b)))?;
    Some(support_of(&best.final_x, 1e-6 * lambda / report.l_max) == support_of(x_true, 0.0))
}

/// Indices with `|x_i| > threshold`.
pub fn support_of(x: &[f64], threshold: f64) -> BTreeSet<usize> {
    x.iter()
        .enumerate()
        .filter(|(_, v)| v.abs() > threshold)
        .map(|(i, _)| i)
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunFailure {
    pub threads: usize,
    pub seed: u64,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeedupRow {
    pub threads: usize,
    pub median_wall_seconds: f64,
    /// Relative to the one-thread median; absent without a one-thread run.
    pub speedup: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochCurve {
    pub threads: usize,
    /// Median over seeds of the objective after each epoch.
    pub objective_by_epoch: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub instance_digest: String,
    pub instance: Option<InstanceSpec>,
    pub n: usize,
    pub l_max: f64,
    pub lambda_ratio: f64,
    pub gamma: f64,
    pub epochs: usize,
    pub f_star: f64,
    pub x_star: Vec<f64>,
    /// `F(x₀)` at the common start `x₀ = 0`.
    pub f0: f64,
    /// `‖x₀ − x*‖²`
    pub d0_sq: f64,
    pub runs: Vec<RunRecord>,
    pub failures: Vec<RunFailure>,
    pub speedup_table: Vec<SpeedupRow>,
    pub epoch_curves: Vec<EpochCurve>,
    pub support_recovered: Option<bool>,
}

impl ExperimentReport {
    pub fn speedup(&self, threads: usize) -> Option<f64> {
        self.speedup_table
            .iter()
            .find(|r| r.threads == threads)
            .and_then(|r| r.speedup)
    }

    pub fn curve(&self, threads: usize) -> Option<&[f64]> {
        self.epoch_curves
            .iter()
            .find(|c| c.threads == threads)
            .map(|c| c.objective_by_epoch.as_slice())
    }

    /// Largest `(F(x_final) − F*)/max(1, |F*|)` over all runs.
    pub fn worst_relative_gap(&self) -> Option<f64> {
        let scale = self.f_star.abs().max(1.0);
        self.runs
            .iter()
            .filter_map(|r| r.objective_by_epoch.last())
            .map(|f| (f - self.f_star) / scale)
            .reduce(f64::max)
    }
}

/// Generates the instance once, then runs every `(threads, seed)` cell.
pub fn run_experiment(
    spec: &InstanceSpec,
    thread_counts: &[usize],
    gamma: f64,
    epochs: usize,
    seeds: &[u64],
) -> Result<ExperimentReport> {
    let instance = generate_instance(spec)?;
    let mut report = run_on_problem(&instance.problem, thread_counts, gamma, epochs, seeds)?;
    report.instance = Some(*spec);
    report.support_recovered = support_recovered(&report, &instance.x_true, instance.lambda);
    Ok(report)
}

/// Runs the experiment grid on an existing problem from `x₀ = 0`.
///
/// Per-cell failures are collected in the report instead of aborting.
pub fn run_on_problem(
    problem: &CompositeProblem,
    thread_counts: &[usize],
    gamma: f64,
    epochs: usize,
    seeds: &[u64],
) -> Result<ExperimentReport> {
    if thread_counts.contains(&0) {
        return Err(Error::InvalidArgument("thread counts must be >= 1".into()));
    }
    let n = problem.dim();
    let info = problem.lipschitz_info()?;
    let oracle = solve_oracle(problem, ORACLE_TOL)?;
    let x0 = vec![0.0; n];
    let f0 = problem.evaluate_objective(&x0)?;
    let d0_sq = oracle.x_star.iter().map(|v| v * v).sum();

    let mut runs = Vec::new();
    let mut failures = Vec::new();
    for &threads in thread_counts {
        for &seed in seeds {
            match solve_async(problem, &x0, &SolveConfig::new(gamma, epochs).seed(seed), threads) {
                Ok(r) => runs.push(r),
                Err(e) => failures.push(RunFailure {
                    threads,
                    seed,
                    error: e.to_string(),
                }),
            }
        }
    }

    let distinct: BTreeSet<usize> = thread_counts.iter().copied().collect();
    let median_wall = |t: usize| {
        let walls: Vec<f64> = runs.iter().filter(|r| r.threads == t).map(|r| r.wall_seconds).collect();
        median(&walls)
    };
    let baseline = median_wall(1);
    let speedup_table = distinct
        .iter()
        .filter_map(|&t| {
            median_wall(t).map(|w| SpeedupRow {
                threads: t,
                median_wall_seconds: w,
                speedup: baseline.map(|b| if t == 1 { 1.0 } else { b / w }),
            })
        })
        .collect();
    let epoch_curves = distinct
        .iter()
        .filter_map(|&t| {
            let mine: Vec<&RunRecord> = runs.iter().filter(|r| r.threads == t).collect();
            if mine.is_empty() {
                return None;
            }
            let epochs_seen = mine.iter().map(|r| r.objective_by_epoch.len()).min().unwrap_or(0);
            let curve = (0..epochs_seen)
                .map(|e| {
                    let vals: Vec<f64> = mine.iter().map(|r| r.objective_by_epoch[e]).collect();
                    median(&vals).unwrap()
                })
                .collect();
            Some(EpochCurve {
                threads: t,
                objective_by_epoch: curve,
            })
        })
        .collect();

    Ok(ExperimentReport {
        instance_digest: problem.digest(),
        instance: None,
        n,
        l_max: info.l_max,
        lambda_ratio: info.lambda_ratio,
        gamma,
        epochs,
        f_star: oracle.f_star,
        x_star: oracle.x_star,
        f0,
        d0_sq,
        runs,
        failures,
        speedup_table,
        epoch_curves,
        support_recovered: None,
    })
}

/// Median of a slice; the mean of the two middle values for even lengths.
pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let mid = v.len() / 2;
    Some(if v.len() % 2 == 1 {
        v[mid]
    } else {
        0.5 * (v[mid - 1] + v[mid])
    })
}

/// Outcome of comparing a set of runs against a theoretical envelope.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Certification {
    pub mode: RateMode,
    /// True when the plan lies in the guaranteed region; otherwise the
    /// verdict is advisory only.
    pub strict: bool,
    pub passed: bool,
    /// Largest `(observed − roundoff_floor)/bound` over all epochs; passes
    /// iff it is at most `slack`.
    pub worst_margin: f64,
    pub slack: f64,
    /// Absolute excess over a bound that is attributed to rounding.
    pub roundoff_floor: f64,
    pub per_epoch: Vec<EpochCheck>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochCheck {
    pub epoch: usize,
    pub observed: f64,
    pub bound: f64,
}

/// Known optimum and start point of the problem a set of runs solved.
#[derive(Debug, Clone, Copy)]
pub struct CertificationTarget<'a> {
    pub problem: &'a CompositeProblem,
    pub x0: &'a [f64],
    pub x_star: &'a [f64],
    pub f_star: f64,
}

/// Checks seed-averaged runs against the linear (OSC) or sublinear envelope.
///
/// In OSC mode the quantity checked at epoch `e` is the mean composite
/// potential `‖x − x*‖² + (2γ/L_max)(F − F*)` against `S₀·factor^(n·e)`; this
/// needs runs recorded with iterates. Convex mode checks the mean objective
/// gap against the sublinear bound at `j = n·e`.
pub fn certify_rates(
    target: &CertificationTarget<'_>,
    plan: &StepPlan,
    records: &[RunRecord],
    mode: RateMode,
    l: Option<f64>,
) -> Result<Certification> {
    let problem = target.problem;
    let n = problem.dim();
    let gamma = common_gamma(records)?;
    let l_max = problem.lipschitz_info()?.l_max;
    let f0 = problem.evaluate_objective(target.x0)?;
    let d0_sq: f64 = target
        .x0
        .iter()
        .zip(target.x_star)
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    let envelope = build_envelope(mode, n, l, l_max, gamma, d0_sq, f0 - target.f_star)?;
    let epochs = common_epochs(records)?;

    let mut checks = Vec::with_capacity(epochs);
    for e in 0..epochs {
        let j = (n * (e + 1)) as u64;
        let (observed, bound) = match mode {
            RateMode::Osc => {
                let mut total = 0.0;
                for r in records {
                    let x = r.iterates_by_epoch.get(e).ok_or_else(|| {
                        Error::InvalidArgument("OSC certification needs runs recorded with iterates".into())
                    })?;
                    total += composite_potential(problem, x, target.x_star, target.f_star, gamma, l_max)?;
                }
                (total / records.len() as f64, envelope.potential_bound(j))
            }
            RateMode::Convex => (mean_gap(records, e, target.f_star), envelope.objective_bound(j)),
        };
        checks.push(EpochCheck {
            epoch: e + 1,
            observed,
            bound,
        });
    }
    Ok(verdict(mode, plan.feasible, checks, roundoff_floor(target.f_star)))
}

/// Certification from a saved report, using objective values only.
///
/// OSC mode uses the objective form of the linear envelope,
/// `(L_max/2γ)·S₀·factor^j`.
pub fn certify_report(
    report: &ExperimentReport,
    plan: &StepPlan,
    mode: RateMode,
    l: Option<f64>,
) -> Result<Certification> {
    let envelope = build_envelope(
        mode,
        report.n,
        l,
        report.l_max,
        report.gamma,
        report.d0_sq,
        report.f0 - report.f_star,
    )?;
    let epochs = common_epochs(&report.runs)?;
    let checks = (0..epochs)
        .map(|e| EpochCheck {
            epoch: e + 1,
            observed: mean_gap(&report.runs, e, report.f_star),
            bound: envelope.objective_bound((report.n * (e + 1)) as u64),
        })
        .collect();
    Ok(verdict(mode, plan.feasible, checks, roundoff_floor(report.f_star)))
}

fn build_envelope(
    mode: RateMode,
    n: usize,
    l: Option<f64>,
    l_max: f64,
    gamma: f64,
    d0_sq: f64,
    f0_gap: f64,
) -> Result<RateEnvelope> {
    let l = match (mode, l) {
        (RateMode::Osc, Some(l)) if l > 0.0 => l,
        (RateMode::Osc, _) => return Err(Error::MissingOscModulus),
        (RateMode::Convex, l) => l.unwrap_or(0.0),
    };
    Ok(RateEnvelope {
        mode,
        n: n as u64,
        l,
        l_max,
        gamma,
        d0_sq,
        f0_gap,
    })
}

fn common_gamma(records: &[RunRecord]) -> Result<f64> {
    let first = records
        .first()
        .ok_or_else(|| Error::InvalidArgument("no runs to certify".into()))?
        .gamma;
    if records.iter().any(|r| r.gamma != first) {
        return Err(Error::InvalidArgument("runs use different steplengths".into()));
    }
    Ok(first)
}

fn common_epochs(records: &[RunRecord]) -> Result<usize> {
    records
        .iter()
        .map(|r| r.objective_by_epoch.len())
        .min()
        .ok_or_else(|| Error::InvalidArgument("no runs to certify".into()))
}

fn mean_gap(records: &[RunRecord], epoch: usize, f_star: f64) -> f64 {
    records
        .iter()
        .map(|r| r.objective_by_epoch[epoch] - f_star)
        .sum::<f64>()
        / records.len() as f64
}

/// Absolute amount by which an observed value may exceed its bound before it
/// counts; covers rounding in `F(x) − F*` near the optimum.
fn roundoff_floor(f_star: f64) -> f64 {
    1e-12 * f_star.abs().max(1.0)
}

fn verdict(mode: RateMode, strict: bool, checks: Vec<EpochCheck>, floor: f64) -> Certification {
    let worst_margin = checks
        .iter()
        .map(|c| {
            let excess = c.observed - floor;
            if c.bound > 0.0 {
                excess.max(0.0) / c.bound
            } else if excess <= 0.0 {
                0.0
            } else {
                f64::INFINITY
            }
        })
        .fold(0.0f64, f64::max);
    Certification {
        mode,
        strict,
        passed: worst_margin <= CERTIFICATION_SLACK,
        worst_margin,
        slack: CERTIFICATION_SLACK,
        roundoff_floor: floor,
        per_epoch: checks,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Json,
}

impl ReportFormat {
    /// `.csv` → CSV, anything else → JSON.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("csv") => ReportFormat::Csv,
            _ => ReportFormat::Json,
        }
    }
}

pub const CSV_HEADER: &str = "threads,seed,epoch,objective,wall_seconds,observed_tau";

/// One CSV row per (run, epoch) sample; floats carry 17 significant digits.
pub fn write_csv<W: Write>(report: &ExperimentReport, mut w: W) -> std::io::Result<()> {
    writeln!(w, "{CSV_HEADER}")?;
    for r in &report.runs {
        for (e, (f, t)) in r.objective_by_epoch.iter().zip(&r.epoch_wall_seconds).enumerate() {
            writeln!(
                w,
                "{},{},{},{:.16e},{:.16e},{}",
                r.threads,
                r.seed,
                e + 1,
                f,
                t,
                r.observed_tau
            )?;
        }
    }
    w.flush()
}

pub fn export_report(report: &ExperimentReport, path: impl AsRef<Path>, format: ReportFormat) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    match format {
        ReportFormat::Csv => write_csv(report, &mut w).map_err(|e| Error::io(path, e)),
        ReportFormat::Json => {
            serde_json::to_writer_pretty(&mut w, report)?;
            w.flush().map_err(|e| Error::io(path, e))
        }
    }
}

pub fn import_report(path: impl AsRef<Path>) -> Result<ExperimentReport> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_reader(std::io::BufReader::new(file))?)
}
