//! Asynchronous proximal stochastic coordinate descent.
//!
//! Minimizes composite objectives `F(x) = ½xᵀQx − cᵀx + const + Σᵢ g(xᵢ)`
//! with a separable regularizer `g`, on one thread or on many threads that
//! share the iterate without locks.
//!
//! ```
//! use asyspcd::{CompositeProblem, SeparableRegularizer, SolveConfig, solve_async};
//!
//! # fn main() -> asyspcd::Result<()> {
//! let q = vec![2.0, 0.5, 0.5, 1.0];
//! let problem = CompositeProblem::new(q, vec![1.0, -1.0], 0.0, SeparableRegularizer::l1(0.1)?)?;
//! let record = solve_async(&problem, &[0.0, 0.0], &SolveConfig::new(1.0, 50), 2)?;
//! assert_eq!(record.objective_by_epoch.len(), 50);
//! # Ok(())
//! # }
//! ```

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod engine;
pub mod error;
pub mod harness;
pub mod interleave;
pub mod problem;
pub mod prox;
pub mod record;
pub mod serial;
pub mod shared;
pub mod theory;

pub use engine::solve_async;
pub use error::{Error, Result};
pub use harness::{
    certify_rates, certify_report, export_report, generate_instance, generate_instance_within, import_report,
    run_experiment, run_on_problem, Certification, CertificationTarget, ExperimentReport, GeneratedInstance,
    InstanceSpec, LambdaRule, ReportFormat,
};
pub use interleave::{simulate_interleaving, Action, InterleavingTrace, ScheduleScript, SnapshotOutcome};
pub use problem::{gaussian_lambda_estimate, CompositeProblem, LipschitzInfo};
pub use prox::{prox_coordinate, prox_full, soft_threshold, SeparableRegularizer};
pub use record::{RunRecord, Sampling, SolveConfig};
pub use serial::{expected_step, solve_oracle, solve_serial, spcd_step, OracleSolution};
pub use shared::SharedIterate;
pub use theory::{
    check_delay_bound, gamma_bounds, half_step_plan, high_prob_iterations, largest_step_plan, linear_rate_factor,
    manual_plan, sublinear_bound, PlanSource, RateEnvelope, RateMode, StepPlan,
};

/// The guide's code listings, compiled and run as doc-tests.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/problems.md")]
    mod problems {}
    #[doc = include_str!("../../../book/src/prox.md")]
    mod prox {}
    #[doc = include_str!("../../../book/src/serial.md")]
    mod serial {}
    #[doc = include_str!("../../../book/src/plans.md")]
    mod plans {}
    #[doc = include_str!("../../../book/src/async.md")]
    mod asynchronous {}
    #[doc = include_str!("../../../book/src/experiments.md")]
    mod experiments {}
}
