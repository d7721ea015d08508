use asyspcd::theory::{composite_potential, half_step_plan, linear_rate_factor, manual_plan, RateMode};
use asyspcd::{
    certify_rates, solve_oracle, solve_serial, CertificationTarget, CompositeProblem, Error, Sampling,
    SeparableRegularizer, SolveConfig,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// `I + 0.1·GGᵀ` with Gaussian `G`, random linear term, no regularizer.
fn strongly_convex(n: usize, seed: u64) -> CompositeProblem {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g: Vec<f64> = (0..n * n).map(|_| rng.sample(StandardNormal)).collect();
    let mut q = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            let v: f64 = (0..n).map(|t| g[i * n + t] * g[j * n + t]).sum();
            q[i * n + j] = 0.1 * v + if i == j { 1.0 } else { 0.0 };
        }
    }
    let c = (0..n).map(|_| rng.sample(StandardNormal)).collect();
    CompositeProblem::new(q, c, 0.0, SeparableRegularizer::Zero).unwrap()
}

fn runs(problem: &CompositeProblem, x0: &[f64], gamma: f64, epochs: usize, seeds: u64) -> Vec<asyspcd::RunRecord> {
    (0..seeds)
        .map(|seed| {
            let cfg = SolveConfig::new(gamma, epochs)
                .seed(seed)
                .sampling(Sampling::WithReplacement)
                .keep_iterates(true);
            solve_serial(problem, x0, &cfg).unwrap()
        })
        .collect()
}

#[test]
fn serial_runs_stay_under_the_linear_envelope() {
    let p = strongly_convex(50, 5);
    let l = p.osc_modulus().unwrap();
    let info = p.lipschitz_info().unwrap();
    let oracle = solve_oracle(&p, 1e-13).unwrap();
    let x0 = vec![1.0; 50];
    let target = CertificationTarget {
        problem: &p,
        x0: &x0,
        x_star: &oracle.x_star,
        f_star: oracle.f_star,
    };
    let plan = manual_plan(1e6, 0, 50, info.lambda_ratio, 0.5).unwrap();
    let cert = certify_rates(&target, &plan, &runs(&p, &x0, 0.5, 30, 20), RateMode::Osc, Some(l)).unwrap();
    assert!(cert.strict);
    assert!(cert.passed, "worst margin {}", cert.worst_margin);

    // the bound at epoch e is S₀·factor^(n·e)
    let s0 = composite_potential(&p, &x0, &oracle.x_star, oracle.f_star, 0.5, info.l_max).unwrap();
    let factor = linear_rate_factor(50, l, info.l_max, 0.5);
    let first = &cert.per_epoch[0];
    assert!((first.bound - s0 * factor.powi(50)).abs() <= 1e-12 * s0);

    // the convex envelope is weaker, so it must hold too
    let cert = certify_rates(&target, &plan, &runs(&p, &x0, 0.5, 10, 20), RateMode::Convex, None).unwrap();
    assert!(cert.passed);
}

#[test]
fn oversized_step_fails_in_advisory_mode() {
    let p = strongly_convex(50, 6);
    let l = p.osc_modulus().unwrap();
    let info = p.lipschitz_info().unwrap();
    let oracle = solve_oracle(&p, 1e-13).unwrap();
    let x0 = vec![1.0; 50];
    let target = CertificationTarget {
        problem: &p,
        x0: &x0,
        x_star: &oracle.x_star,
        f_star: oracle.f_star,
    };
    let plan = manual_plan(1e6, 0, 50, info.lambda_ratio, 10.0).unwrap();
    assert!(!plan.feasible);
    let cert = certify_rates(&target, &plan, &runs(&p, &x0, 10.0, 2, 5), RateMode::Osc, Some(l)).unwrap();
    assert!(!cert.strict);
    assert!(!cert.passed);
    assert!(cert.worst_margin > cert.slack);
}

#[test]
fn start_at_the_optimum_passes_trivially() {
    let p = strongly_convex(10, 7);
    let oracle = solve_oracle(&p, 1e-14).unwrap();
    let target = CertificationTarget {
        problem: &p,
        x0: &oracle.x_star,
        x_star: &oracle.x_star,
        f_star: p.evaluate_objective(&oracle.x_star).unwrap(),
    };
    let plan = manual_plan(1e6, 0, 10, 1.0, 0.5).unwrap();
    let records = runs(&p, &oracle.x_star, 0.5, 3, 2);
    let cert = certify_rates(&target, &plan, &records, RateMode::Convex, None).unwrap();
    assert!(cert.passed, "{cert:?}");
}

#[test]
fn osc_mode_requires_modulus_and_iterates() {
    let p = strongly_convex(10, 8);
    let oracle = solve_oracle(&p, 1e-12).unwrap();
    let x0 = vec![0.0; 10];
    let target = CertificationTarget {
        problem: &p,
        x0: &x0,
        x_star: &oracle.x_star,
        f_star: oracle.f_star,
    };
    let plan = half_step_plan(1_000_000, 0, 1.0).unwrap();
    let records = runs(&p, &x0, 0.5, 2, 1);
    assert!(matches!(
        certify_rates(&target, &plan, &records, RateMode::Osc, None),
        Err(Error::MissingOscModulus)
    ));
    let bare: Vec<_> = (0..2)
        .map(|s| solve_serial(&p, &x0, &SolveConfig::new(0.5, 2).seed(s)).unwrap())
        .collect();
    assert!(certify_rates(&target, &plan, &bare, RateMode::Osc, Some(1.0)).is_err());
}
