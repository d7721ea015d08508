//! Steplength plans and convergence-rate envelopes.
//!
//! A [`StepPlan`] bundles the growth parameter `ρ`, the delay bound `τ`, the
//! derived constants `θ`, `θ′`, `ψ` and a steplength `γ`, together with a
//! flag saying whether `γ` lies inside the region where the asynchronous
//! method is guaranteed to converge:
//!
//! ```text
//! θ  = (ρ^{(τ+1)/2} − ρ^{1/2}) / (ρ^{1/2} − 1)   = Σ_{t=1..τ} ρ^{t/2}
//! θ′ = (ρ^{τ+1} − ρ) / (ρ − 1)                   = Σ_{t=1..τ} ρ^t
//! ψ  = 1 + τθ′/n + 2Λθ/√n
//! γ ≤ 1/ψ   and   γ ≤ (√n(1 − 1/ρ) − 4) / (4(1 + θ)Λ)
//! ```
//!
//! When `4eΛ(τ+1)² ≤ √n` the choice `ρ = (1 + 4eΛ(τ+1)/√n)²` makes `γ = ½`
//! admissible ([`half_step_plan`]). The rate functions then give the expected
//! contraction per iteration under optimal strong convexity and the `1/j`
//! envelope for merely convex problems.

use std::f64::consts::E;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::problem::CompositeProblem;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PlanSource {
    /// Largest `γ` admissible for a chosen `ρ`.
    LargestStep,
    /// `γ = ½` with `ρ` derived from the delay condition.
    HalfStep,
    Manual,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepPlan {
    pub rho: f64,
    pub tau: u64,
    pub n: u64,
    pub lambda_ratio: f64,
    pub theta: f64,
    pub theta_prime: f64,
    pub psi: f64,
    pub gamma: f64,
    /// `1/ψ`
    pub gamma_psi: f64,
    /// `(√n(1 − 1/ρ) − 4) / (4(1 + θ)Λ)`
    pub gamma_rho: f64,
    pub feasible: bool,
    pub source: PlanSource,
}

/// `(θ, θ′)` in closed form.
pub fn geometric_constants(rho: f64, tau: u64) -> Result<(f64, f64)> {
    if !(rho > 1.0) || !rho.is_finite() {
        return Err(Error::InvalidRho { rho, min: 1.0 });
    }
    let t = tau as f64;
    let sqrt_rho = rho.sqrt();
    let theta = (rho.powf((t + 1.0) / 2.0) - sqrt_rho) / (sqrt_rho - 1.0);
    let theta_prime = (rho.powf(t + 1.0) - rho) / (rho - 1.0);
    Ok((theta, theta_prime))
}

/// `ψ = 1 + τθ′/n + 2Λθ/√n`.
pub fn psi_value(rho: f64, tau: u64, n: u64, lambda_ratio: f64) -> Result<f64> {
    check_dims(n, lambda_ratio)?;
    let (theta, theta_prime) = geometric_constants(rho, tau)?;
    let nf = n as f64;
    Ok(1.0 + tau as f64 * theta_prime / nf + 2.0 * lambda_ratio * theta / nf.sqrt())
}

/// The two upper bounds on `γ`: `(1/ψ, (√n(1 − 1/ρ) − 4)/(4(1 + θ)Λ))`.
///
/// The second bound is nonpositive when `n` is too small for `ρ`; callers
/// treat that as infeasible.
pub fn gamma_bounds(rho: f64, tau: u64, n: u64, lambda_ratio: f64) -> Result<(f64, f64)> {
    let psi = psi_value(rho, tau, n, lambda_ratio)?;
    let (theta, _) = geometric_constants(rho, tau)?;
    let gamma_rho = ((n as f64).sqrt() * (1.0 - 1.0 / rho) - 4.0) / (4.0 * (1.0 + theta) * lambda_ratio);
    Ok((1.0 / psi, gamma_rho))
}

/// Left-hand side `4eΛ(τ+1)²` of the delay condition.
pub fn delay_bound_lhs(tau: u64, lambda_ratio: f64) -> f64 {
    let t1 = tau as f64 + 1.0;
    4.0 * E * lambda_ratio * t1 * t1
}

/// `4eΛ(τ+1)² ≤ √n`, compared without slack.
pub fn check_delay_bound(n: u64, tau: u64, lambda_ratio: f64) -> bool {
    delay_bound_lhs(tau, lambda_ratio) <= (n as f64).sqrt()
}

/// Evaluates every constant for a given `(ρ, γ)` and decides feasibility.
pub fn evaluate_plan(
    rho: f64,
    tau: u64,
    n: u64,
    lambda_ratio: f64,
    gamma: f64,
    source: PlanSource,
) -> Result<StepPlan> {
    let (theta, theta_prime) = geometric_constants(rho, tau)?;
    let psi = psi_value(rho, tau, n, lambda_ratio)?;
    let (gamma_psi, gamma_rho) = gamma_bounds(rho, tau, n, lambda_ratio)?;
    let rho_ok = rho > 1.0 + 4.0 / (n as f64).sqrt();
    let feasible = rho_ok && gamma > 0.0 && gamma <= gamma_psi && gamma <= gamma_rho;
    Ok(StepPlan {
        rho,
        tau,
        n,
        lambda_ratio,
        theta,
        theta_prime,
        psi,
        gamma,
        gamma_psi,
        gamma_rho,
        feasible,
        source,
    })
}

/// Largest admissible steplength for a user-chosen `ρ > 1 + 4/√n`.
pub fn largest_step_plan(rho: f64, tau: u64, n: u64, lambda_ratio: f64) -> Result<StepPlan> {
    check_dims(n, lambda_ratio)?;
    let min = 1.0 + 4.0 / (n as f64).sqrt();
    if !(rho > min) {
        return Err(Error::InvalidRho { rho, min });
    }
    let (gamma_psi, gamma_rho) = gamma_bounds(rho, tau, n, lambda_ratio)?;
    evaluate_plan(
        rho,
        tau,
        n,
        lambda_ratio,
        gamma_psi.min(gamma_rho),
        PlanSource::LargestStep,
    )
}

/// Any `(ρ, γ)` the caller wants, e.g. the `γ = 1` runs used in practice.
pub fn manual_plan(rho: f64, tau: u64, n: u64, lambda_ratio: f64, gamma: f64) -> Result<StepPlan> {
    check_dims(n, lambda_ratio)?;
    if !(gamma > 0.0) || !gamma.is_finite() {
        return Err(Error::InvalidArgument(format!("gamma must be positive, got {gamma}")));
    }
    evaluate_plan(rho, tau, n, lambda_ratio, gamma, PlanSource::Manual)
}

/// `ρ = (1 + 4eΛ(τ+1)/√n)²`.
pub fn half_step_rho(n: u64, tau: u64, lambda_ratio: f64) -> f64 {
    let r = 1.0 + 4.0 * E * lambda_ratio * (tau as f64 + 1.0) / (n as f64).sqrt();
    r * r
}

/// The `γ = ½` plan, available whenever the delay condition holds.
pub fn half_step_plan(n: u64, tau: u64, lambda_ratio: f64) -> Result<StepPlan> {
    check_dims(n, lambda_ratio)?;
    if !check_delay_bound(n, tau, lambda_ratio) {
        return Err(Error::DelayBoundViolated {
            lhs: delay_bound_lhs(tau, lambda_ratio),
            rhs: (n as f64).sqrt(),
        });
    }
    let rho = half_step_rho(n, tau, lambda_ratio);
    let plan = evaluate_plan(rho, tau, n, lambda_ratio, 0.5, PlanSource::HalfStep)?;
    debug_assert!(rho.powf((tau as f64 + 1.0) / 2.0) <= E * (1.0 + 1e-12));
    debug_assert!(plan.psi <= 2.0);
    debug_assert!(plan.feasible);
    Ok(plan)
}

/// Per-iteration contraction `1 − lγ/(n(lγ + L_max))` of the expected
/// potential under optimal strong convexity with modulus `l`.
pub fn linear_rate_factor(n: u64, l: f64, l_max: f64, gamma: f64) -> f64 {
    let lg = l * gamma;
    1.0 - lg / (n as f64 * (lg + l_max))
}

/// `n(d0²·L_max + 2γ·(F(x₀) − F*)) / (2γ(n + j))`.
pub fn sublinear_bound(n: u64, l_max: f64, gamma: f64, d0_sq: f64, f0_gap: f64, j: u64) -> f64 {
    let nf = n as f64;
    nf * (d0_sq * l_max + 2.0 * gamma * f0_gap) / (2.0 * gamma * (nf + j as f64))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RateMode {
    Osc,
    Convex,
}

/// Iterations after which `P(F(x_j) − F* ≤ ε) ≥ 1 − η` in the `γ = ½` regime.
#[allow(clippy::too_many_arguments)]
pub fn high_prob_iterations(
    mode: RateMode,
    n: u64,
    l: f64,
    l_max: f64,
    d0_sq: f64,
    f0_gap: f64,
    epsilon: f64,
    eta: f64,
) -> Result<u64> {
    if !(epsilon > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "epsilon must be positive, got {epsilon}"
        )));
    }
    if !(eta > 0.0 && eta < 1.0) {
        return Err(Error::InvalidArgument(format!("eta must lie in (0, 1), got {eta}")));
    }
    let nf = n as f64;
    let initial = l_max * d0_sq + f0_gap;
    let j = match mode {
        RateMode::Osc => {
            if !(l > 0.0) {
                return Err(Error::MissingOscModulus);
            }
            if initial == 0.0 {
                return Ok(0);
            }
            nf * (l + 2.0 * l_max) / l * (initial / (epsilon * eta)).ln().abs()
        }
        RateMode::Convex => nf * initial / (epsilon * eta) - nf,
    };
    if !j.is_finite() {
        return Err(Error::InvalidArgument("iteration count is not finite".into()));
    }
    Ok(j.max(0.0).ceil() as u64)
}

/// `‖x − x*‖² + (2γ/L_max)(F(x) − F*)`.
pub fn composite_potential(
    problem: &CompositeProblem,
    x: &[f64],
    x_star: &[f64],
    f_star: f64,
    gamma: f64,
    l_max: f64,
) -> Result<f64> {
    if x_star.len() != x.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            found: x_star.len(),
        });
    }
    let f = problem.evaluate_objective(x)?;
    let dist: f64 = x.iter().zip(x_star).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(dist + 2.0 * gamma / l_max * (f - f_star))
}

/// Everything needed to evaluate one of the two theoretical envelopes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateEnvelope {
    pub mode: RateMode,
    pub n: u64,
    /// OSC modulus; ignored in convex mode.
    pub l: f64,
    pub l_max: f64,
    pub gamma: f64,
    /// `‖x₀ − P_S(x₀)‖²`
    pub d0_sq: f64,
    /// `F(x₀) − F*`
    pub f0_gap: f64,
}

impl RateEnvelope {
    pub fn factor(&self) -> f64 {
        match self.mode {
            RateMode::Osc => linear_rate_factor(self.n, self.l, self.l_max, self.gamma),
            RateMode::Convex => 1.0,
        }
    }

    /// `S₀`
    pub fn initial_potential(&self) -> f64 {
        self.d0_sq + 2.0 * self.gamma / self.l_max * self.f0_gap
    }

    /// Bound on the expected potential after `j` iterations (OSC mode).
    pub fn potential_bound(&self, j: u64) -> f64 {
        self.initial_potential() * self.factor().powf(j as f64)
    }

    /// Bound on `E F(x_j) − F*`.
    ///
    /// In OSC mode this drops the distance term of the potential, giving
    /// `(L_max/2γ)·S₀·factor^j`; in convex mode it is [`sublinear_bound`].
    pub fn objective_bound(&self, j: u64) -> f64 {
        match self.mode {
            RateMode::Osc => self.l_max / (2.0 * self.gamma) * self.potential_bound(j),
            RateMode::Convex => sublinear_bound(self.n, self.l_max, self.gamma, self.d0_sq, self.f0_gap, j),
        }
    }
}

fn check_dims(n: u64, lambda_ratio: f64) -> Result<()> {
    if n == 0 {
        return Err(Error::InvalidArgument("n must be positive".into()));
    }
    if !(lambda_ratio >= 1.0) || !lambda_ratio.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "Lambda must be >= 1, got {lambda_ratio}"
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prox::SeparableRegularizer;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn brute_sums(rho: f64, tau: u64) -> (f64, f64) {
        let mut a = 0.0;
        let mut b = 0.0;
        for t in 1..=tau {
            a += rho.powf(t as f64 / 2.0);
            b += rho.powi(t as i32);
        }
        (a, b)
    }

    #[test]
    fn geometric_examples() {
        let (a, b) = geometric_constants(4.0, 2).unwrap();
        assert_relative_eq!(a, 6.0, max_relative = 1e-14);
        assert_relative_eq!(b, 20.0, max_relative = 1e-14);
        assert_eq!(geometric_constants(2.0, 0).unwrap(), (0.0, 0.0));
        let (a, b) = geometric_constants(4.0, 1).unwrap();
        assert_relative_eq!(a, 2.0, max_relative = 1e-14);
        assert_relative_eq!(b, 4.0, max_relative = 1e-14);
        assert!(matches!(geometric_constants(1.0, 3), Err(Error::InvalidRho { .. })));
        assert!(geometric_constants(0.5, 3).is_err());
    }

    #[test]
    fn psi_examples() {
        assert_relative_eq!(psi_value(4.0, 1, 100, 1.0).unwrap(), 1.44, max_relative = 1e-14);
        assert_eq!(psi_value(7.3, 0, 31, 2.9).unwrap(), 1.0);
        assert_relative_eq!(psi_value(4.0, 2, 100, 2.0).unwrap(), 3.8, max_relative = 1e-14);
    }

    #[test]
    fn gamma_bound_examples() {
        let (gp, gr) = gamma_bounds(4.0, 1, 100, 1.0).unwrap();
        assert_relative_eq!(gp, 1.0 / 1.44, max_relative = 1e-14);
        assert_relative_eq!(gr, 3.5 / 12.0, max_relative = 1e-14);
        let (gp, _) = gamma_bounds(1.01, 0, 100_000_000, 1.0).unwrap();
        assert_eq!(gp, 1.0);
        let (_, gr) = gamma_bounds(2.2090, 1, 2000, 1.0).unwrap();
        // (√2000·(1 − 1/2.209) − 4) / (4·(1 + √2.209))
        let expect = (2000f64.sqrt() * (1.0 - 1.0 / 2.209) - 4.0) / (4.0 * (1.0 + 2.209f64.sqrt()));
        assert_relative_eq!(gr, expect, max_relative = 1e-12);
        assert!((gr - 2.06).abs() < 0.005);
    }

    #[test]
    fn delay_bound_examples() {
        assert!(!check_delay_bound(10_000, 10, 2.3));
        let lhs = delay_bound_lhs(10, 2.3);
        assert!((3000.0..=3060.0).contains(&lhs));
        assert!(check_delay_bound(2000, 1, 1.0));
        assert!(!check_delay_bound(16, 0, 1.0));
    }

    #[test]
    fn half_step_examples() {
        let p = half_step_plan(2000, 1, 1.0).unwrap();
        assert!((p.rho - 2.2090).abs() < 1e-3);
        assert_eq!(p.gamma, 0.5);
        assert!(p.feasible);
        assert!(p.gamma <= p.gamma_psi && p.gamma <= p.gamma_rho);
        assert_eq!(p.source, PlanSource::HalfStep);

        let p = half_step_plan(1_000_000, 0, 1.0).unwrap();
        assert_relative_eq!(p.rho, (1.0 + 4.0 * E / 1000.0).powi(2), max_relative = 1e-15);
        assert!((p.rho - 1.02186).abs() < 1e-5);

        assert!(matches!(
            half_step_plan(10_000, 10, 2.3),
            Err(Error::DelayBoundViolated { .. })
        ));
    }

    #[test]
    fn largest_step_and_manual_plans() {
        let p = largest_step_plan(4.0, 1, 100, 1.0).unwrap();
        assert_relative_eq!(p.gamma, 3.5 / 12.0, max_relative = 1e-14);
        assert!(p.feasible);
        assert!(largest_step_plan(1.3, 1, 100, 1.0).is_err());

        let m = manual_plan(4.0, 1, 100, 1.0, 1.0).unwrap();
        assert!(!m.feasible);
        assert_eq!(m.source, PlanSource::Manual);
        let m = manual_plan(4.0, 1, 100, 1.0, 0.25).unwrap();
        assert!(m.feasible);
    }

    #[test]
    fn rate_examples() {
        assert_relative_eq!(linear_rate_factor(2, 1.0, 1.0, 0.5), 5.0 / 6.0, max_relative = 1e-15);
        assert_eq!(linear_rate_factor(17, 0.0, 3.0, 0.5), 1.0);
        assert_eq!(linear_rate_factor(1, 1.0, 1.0, 1.0), 0.5);

        assert_eq!(sublinear_bound(100, 1.0, 0.5, 1.0, 1.0, 0), 2.0);
        assert_relative_eq!(sublinear_bound(100, 1.0, 0.5, 1.0, 1.0, 900), 0.2, max_relative = 1e-15);
        let mut prev = f64::INFINITY;
        for j in (0..100_000).step_by(997) {
            let b = sublinear_bound(100, 1.0, 0.5, 1.0, 1.0, j);
            assert!(b < prev);
            prev = b;
        }
    }

    #[test]
    fn high_probability_examples() {
        assert_eq!(
            high_prob_iterations(RateMode::Convex, 100, 0.0, 1.0, 1.0, 1.0, 0.1, 0.1).unwrap(),
            19900
        );
        assert_eq!(
            high_prob_iterations(RateMode::Osc, 100, 1.0, 1.0, 1.0, 1.0, 1e-3, 0.1).unwrap(),
            2972
        );
        assert_eq!(
            high_prob_iterations(RateMode::Convex, 100, 0.0, 1.0, 1.0, 1.0, 2.5, 0.8).unwrap(),
            0
        );
        assert!(matches!(
            high_prob_iterations(RateMode::Osc, 100, 0.0, 1.0, 1.0, 1.0, 1e-3, 0.1),
            Err(Error::MissingOscModulus)
        ));
        assert!(high_prob_iterations(RateMode::Convex, 100, 0.0, 1.0, 1.0, 1.0, 0.1, 1.0).is_err());
    }

    #[test]
    fn potential_examples() {
        let p = CompositeProblem::new(vec![1.0], vec![2.0], 2.0, SeparableRegularizer::L1 { lambda: 1.0 }).unwrap();
        assert_eq!(composite_potential(&p, &[1.0], &[1.0], 1.5, 0.5, 1.0).unwrap(), 0.0);
        assert_eq!(composite_potential(&p, &[0.0], &[1.0], 1.5, 0.5, 1.0).unwrap(), 1.5);
        // doubling γ doubles only the objective term
        assert_eq!(composite_potential(&p, &[0.0], &[1.0], 1.5, 1.0, 1.0).unwrap(), 2.0);
    }

    #[test]
    fn half_step_regime_grid() {
        let mut checked = 0;
        for n in [16u64, 100, 1000, 2000, 10_000, 100_000, 1_000_000, 100_000_000] {
            for tau in 0..40u64 {
                for lambda in [1.0, 1.1, 1.5, 2.0, 2.3, 3.0, 5.0, 10.0] {
                    if !check_delay_bound(n, tau, lambda) {
                        continue;
                    }
                    let p = half_step_plan(n, tau, lambda).unwrap();
                    assert!(p.psi <= 2.0);
                    assert!(p.rho.powf((tau as f64 + 1.0) / 2.0) <= E * (1.0 + 1e-12));
                    assert!(p.gamma <= p.gamma_psi.min(p.gamma_rho));
                    assert!(p.feasible);
                    checked += 1;
                }
            }
        }
        assert!(checked > 100);
    }

    proptest! {
        #[test]
        fn closed_forms_match_summation(rho in 1.001..10.0f64, tau in 0u64..=50) {
            let (a, b) = geometric_constants(rho, tau).unwrap();
            let (ea, eb) = brute_sums(rho, tau);
            prop_assert!((a - ea).abs() <= 1e-10 * ea.abs().max(f64::MIN_POSITIVE));
            prop_assert!((b - eb).abs() <= 1e-10 * eb.abs().max(f64::MIN_POSITIVE));
        }

        #[test]
        fn linear_factor_monotonicity(n in 1u64..10_000, l in 0.0..10.0f64, dl in 0.01..5.0f64, l_max in 0.1..10.0f64, gamma in 0.01..1.0f64) {
            let f = linear_rate_factor(n, l, l_max, gamma);
            prop_assert!(f > 0.0 && f <= 1.0);
            prop_assert!(linear_rate_factor(n, l + dl, l_max, gamma) < f || f == 1.0 && l + dl == 0.0);
            prop_assert!(linear_rate_factor(n + 1, l, l_max, gamma) >= f);
        }
    }
}
