use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use asyspcd::harness::{support_recovered, DEFAULT_MEMORY_BUDGET};
use asyspcd::theory::{evaluate_plan, half_step_rho};
use asyspcd::{
    certify_report, export_report, generate_instance_within, half_step_plan, import_report, largest_step_plan,
    manual_plan, run_on_problem, CompositeProblem, Error, ExperimentReport, InstanceSpec, LambdaRule, PlanSource,
    RateMode, ReportFormat, StepPlan,
};
use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

#[derive(Parser)]
#[command(name = "asyspcd", version, about = "Asynchronous proximal coordinate descent")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic LASSO instance file.
    Gen {
        #[arg(long)]
        m: usize,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        s: usize,
        #[arg(long)]
        sigma: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Use this λ instead of 20·√(m·ln n)·σ.
        #[arg(long)]
        lambda: Option<f64>,
        #[arg(long)]
        memory_budget_gb: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the asynchronous solver once and write a JSON report.
    Solve {
        #[arg(long)]
        instance: PathBuf,
        #[arg(long, env = "ASYSPCD_THREADS", default_value_t = 1)]
        threads: usize,
        #[arg(long, default_value_t = 1.0)]
        gamma: f64,
        #[arg(long, default_value_t = 100)]
        epochs: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print the step plan for (n, τ, Λ) as JSON.
    Plan {
        #[arg(long)]
        n: u64,
        #[arg(long)]
        tau: u64,
        #[arg(long)]
        lambda_ratio: f64,
        #[arg(long)]
        rho: Option<f64>,
        #[arg(long)]
        gamma: Option<f64>,
    },
    /// Run every (threads, seed) cell and write a CSV or JSON report.
    Bench {
        #[arg(long)]
        instance: PathBuf,
        #[arg(long, env = "ASYSPCD_THREADS", value_delimiter = ',', default_value = "1")]
        threads: Vec<usize>,
        /// Number of seeds; seeds 0..N are used.
        #[arg(long, default_value_t = 5)]
        seeds: u64,
        #[arg(long, default_value_t = 1.0)]
        gamma: f64,
        #[arg(long, default_value_t = 50)]
        epochs: usize,
        /// `.csv` for per-epoch rows, anything else for JSON.
        #[arg(long)]
        out: PathBuf,
    },
    /// Check a JSON report against the theoretical rate envelope.
    Certify {
        #[arg(long)]
        report: PathBuf,
        #[arg(long, value_enum)]
        mode: Mode,
        /// Optimal strong convexity modulus, required for `osc`.
        #[arg(long)]
        l: Option<f64>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Osc,
    Convex,
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Gen {
            m,
            n,
            s,
            sigma,
            seed,
            lambda,
            memory_budget_gb,
            out,
        } => {
            let mut spec = InstanceSpec::new(m, n, s, sigma, seed);
            if let Some(l) = lambda {
                spec.lambda_rule = LambdaRule::Explicit(l);
            }
            let budget = memory_budget_gb.map_or(DEFAULT_MEMORY_BUDGET, |gb| (gb * (1u64 << 30) as f64) as u64);
            let inst = generate_instance_within(&spec, budget)?;
            inst.problem.save(&out)?;
            let truth = json!({
                "spec": spec,
                "lambda": inst.lambda,
                "x_true": inst.x_true,
                "digest": inst.problem.digest(),
            });
            let truth_path = truth_path(&out);
            std::fs::write(&truth_path, serde_json::to_string_pretty(&truth)?)
                .with_context(|| format!("writing {}", truth_path.display()))?;
            println!(
                "{}",
                json!({ "out": out, "truth": truth_path, "lambda": inst.lambda, "digest": inst.problem.digest() })
            );
        }
        Command::Solve {
            instance,
            threads,
            gamma,
            epochs,
            seed,
            out,
        } => {
            let report = experiment(&instance, &[threads], gamma, epochs, &[seed])?;
            if let Some(f) = report.failures.first() {
                bail!("run failed: {}", f.error);
            }
            export_report(&report, &out, ReportFormat::Json)?;
            let run = &report.runs[0];
            println!(
                "{}",
                json!({
                    "final_objective": run.objective_by_epoch.last(),
                    "f_star": report.f_star,
                    "wall_seconds": run.wall_seconds,
                    "observed_tau": run.observed_tau,
                    "staleness_flagged": run.staleness_flagged,
                })
            );
        }
        Command::Plan {
            n,
            tau,
            lambda_ratio,
            rho,
            gamma,
        } => {
            let plan = step_plan(n, tau, lambda_ratio, rho, gamma)?;
            println!("{}", serde_json::to_string_pretty(&plan)?);
        }
        Command::Bench {
            instance,
            threads,
            seeds,
            gamma,
            epochs,
            out,
        } => {
            let seeds: Vec<u64> = (0..seeds).collect();
            let report = experiment(&instance, &threads, gamma, epochs, &seeds)?;
            export_report(&report, &out, ReportFormat::from_path(&out))?;
            println!(
                "{}",
                json!({
                    "speedup": report.speedup_table,
                    "failures": report.failures,
                    "support_recovered": report.support_recovered,
                })
            );
        }
        Command::Certify { report, mode, l } => {
            let report = import_report(&report)?;
            let tau = report.runs.iter().map(|r| r.observed_tau).max().unwrap_or(0);
            let n = report.n as u64;
            let plan = evaluate_plan(
                half_step_rho(n, tau, report.lambda_ratio),
                tau,
                n,
                report.lambda_ratio,
                report.gamma,
                PlanSource::Manual,
            )?;
            let mode = match mode {
                Mode::Osc => RateMode::Osc,
                Mode::Convex => RateMode::Convex,
            };
            let cert = certify_report(&report, &plan, mode, l)?;
            println!("{}", serde_json::to_string_pretty(&cert)?);
            if !cert.passed {
                return Ok(ExitCode::from(1));
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

/// The `γ = ½` plan by default; the largest admissible step for an explicit
/// `ρ`; a manual plan when `γ` is given too. When the delay condition fails
/// the `γ = ½` constants are still printed, marked infeasible.
fn step_plan(n: u64, tau: u64, lambda_ratio: f64, rho: Option<f64>, gamma: Option<f64>) -> Result<StepPlan> {
    Ok(match (rho, gamma) {
        (Some(rho), Some(gamma)) => manual_plan(rho, tau, n, lambda_ratio, gamma)?,
        (Some(rho), None) => largest_step_plan(rho, tau, n, lambda_ratio)?,
        (None, gamma) => {
            let mut plan = match half_step_plan(n, tau, lambda_ratio) {
                Ok(plan) => plan,
                Err(Error::DelayBoundViolated { lhs, rhs }) => {
                    eprintln!("delay condition fails: 4eΛ(τ+1)² = {lhs:.3} > √n = {rhs:.3}");
                    evaluate_plan(
                        half_step_rho(n, tau, lambda_ratio),
                        tau,
                        n,
                        lambda_ratio,
                        0.5,
                        PlanSource::HalfStep,
                    )?
                }
                Err(e) => return Err(e.into()),
            };
            if let Some(gamma) = gamma {
                plan = manual_plan(plan.rho, tau, n, lambda_ratio, gamma)?;
            }
            plan
        }
    })
}

fn truth_path(instance: &Path) -> PathBuf {
    let mut p = instance.as_os_str().to_owned();
    p.push(".truth.json");
    PathBuf::from(p)
}

fn experiment(
    instance: &Path,
    threads: &[usize],
    gamma: f64,
    epochs: usize,
    seeds: &[u64],
) -> Result<ExperimentReport> {
    let problem = CompositeProblem::load(instance)?;
    let mut report = run_on_problem(&problem, threads, gamma, epochs, seeds)?;
    let truth_path = truth_path(instance);
    if let Ok(text) = std::fs::read_to_string(&truth_path) {
        let truth: serde_json::Value = serde_json::from_str(&text)?;
        if truth["digest"].as_str() == Some(report.instance_digest.as_str()) {
            report.instance = serde_json::from_value(truth["spec"].clone()).ok();
            let lambda = truth["lambda"].as_f64().unwrap_or(0.0);
            let x_true: Vec<f64> = serde_json::from_value(truth["x_true"].clone())?;
            report.support_recovered = support_recovered(&report, &x_true, lambda);
        }
    }
    Ok(report)
}
