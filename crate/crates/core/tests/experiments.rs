use snse_core::experiments::{
    run_consistency, run_linear_battery, run_monte_carlo, run_normality, run_residual_study, EstimatorSpec,
    ExperimentPlan, LinearBatteryConfig, McReport, ResidualStudyConfig, StudyKind,
};
use snse_core::linear::{linear_config, simulate_linear_config};
use snse_core::{Error, EstimatorKind, NoiseSpec, SolverConfig, StokesBasis, TorusSpec};

fn linear_solver(modes: usize, gamma: f64, horizon: f64, seed: u64) -> SolverConfig {
    let basis = StokesBasis::build(TorusSpec::two_pi(), modes);
    linear_config(&basis, &NoiseSpec::new(gamma, seed).unwrap(), 1.0, horizon, 1e-3).unwrap()
}

/// Wall time is the only field allowed to differ between identical runs.
fn timeless(mut report: McReport) -> McReport {
    report.wall_time_s = 0.0;
    report
}

fn all_kinds(alpha: f64) -> Vec<EstimatorSpec> {
    vec![EstimatorSpec { alpha, kinds: EstimatorKind::ALL.to_vec() }]
}

#[test]
fn linear_consistency_error_shrinks_as_n_doubles() {
    let plan = ExperimentPlan::new(linear_solver(64, 1.5, 5.0, 3), all_kinds(1.5), vec![8, 16, 32], 30);
    let report = run_consistency(&plan).unwrap();
    assert_eq!(report.succeeded, 30);
    let med = |n| report.entry(EstimatorKind::Hat, 1.5, n).unwrap().median_abs_error;
    assert!(med(8) > med(16) && med(16) > med(32), "{} {} {}", med(8), med(16), med(32));
}

#[test]
fn two_replicate_smoke_run_serializes() {
    let noise = NoiseSpec::new(1.2, 1).unwrap();
    let solver = SolverConfig::dealiased(1.0, noise, TorusSpec::two_pi(), 16, 0.05, 1e-3).unwrap();
    let plan = ExperimentPlan::new(solver, all_kinds(1.2), vec![2, 4], 2);
    let report = run_consistency(&plan).unwrap();
    assert_eq!(report.entries.len(), 6);
    assert!(report.entries.iter().all(|e| e.values.len() == 2 && e.values.iter().all(|v| v.is_finite())));
    let json = serde_json::to_string(&report).unwrap();
    let back: McReport = serde_json::from_str(&json).unwrap();
    assert!(back == timeless(report.clone()));

    let normality = run_normality(&plan).unwrap();
    let e = normality.entry(EstimatorKind::Tilde, 1.2, 4).unwrap();
    assert!(e.ks.is_none());
    assert!(e.flags.iter().any(|f| f == "insufficient_replicates"));
    let check = normality.entry(EstimatorKind::Check, 1.2, 4).unwrap();
    assert!(check.flags.iter().any(|f| f == "normality_not_established"));
}

#[test]
fn linear_normality_at_half_the_modes() {
    let plan = ExperimentPlan::new(
        linear_solver(64, 1.2, 1.0, 17),
        vec![EstimatorSpec { alpha: 1.2, kinds: vec![EstimatorKind::Tilde] }],
        vec![32],
        200,
    );
    let report = run_normality(&plan).unwrap();
    let e = report.entry(EstimatorKind::Tilde, 1.2, 32).unwrap();
    let ks = e.ks.as_ref().unwrap();
    assert!(ks.p_value > 0.01, "KS p = {}", ks.p_value);
    let ratio = e.variance_ratio.unwrap();
    assert!((0.75..=1.33).contains(&ratio), "variance ratio {ratio}");
    assert_eq!(e.variance_ratio_in_band, Some(true));
    assert!(e.predicted_variance_idealized.is_some());
}

#[test]
fn reports_do_not_depend_on_thread_count_or_batch_split() {
    let noise = NoiseSpec::new(1.2, 6).unwrap();
    let solver = SolverConfig::dealiased(1.0, noise, TorusSpec::two_pi(), 16, 0.05, 1e-3).unwrap();
    let plan = ExperimentPlan::new(solver, all_kinds(1.2), vec![2, 4], 6);
    let run = |threads: usize, plan: &ExperimentPlan| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| timeless(run_monte_carlo(plan, StudyKind::Consistency, false).unwrap().0))
    };
    let one = run(1, &plan);
    let three = run(3, &plan);
    assert!(one == three);

    let mut tail = plan.clone();
    tail.first_replicate = 3;
    tail.replicates = 3;
    let part = run(2, &tail);
    for (whole, piece) in one.entries.iter().zip(&part.entries) {
        assert_eq!(&whole.values[3..], piece.values.as_slice());
        assert_eq!(piece.replicate_ids, vec![3, 4, 5]);
    }
}

#[test]
fn failed_replicates_are_counted_not_fatal() {
    let mut solver = linear_solver(16, 1.5, 0.2, 2);
    let sup: Vec<f64> = (0..10).map(|r| simulate_linear_config(&solver, r).unwrap().sup_norm()).collect();
    let mut sorted = sup.clone();
    sorted.sort_by(f64::total_cmp);
    solver.blowup_bound = sorted[5];
    let plan = ExperimentPlan::new(solver, all_kinds(1.5), vec![4, 8], 10);
    let report = run_consistency(&plan).unwrap();
    assert!(!report.failures.is_empty() && report.succeeded > 0);
    assert_eq!(report.failures.len() + report.succeeded, 10);
    assert_eq!(report.failure_fraction + report.success_fraction, 1.0);
    assert!(report.failures.iter().all(|f| f.error.contains("blow-up")));
    assert!(report.entries.iter().all(|e| e.values.len() == report.succeeded));
}

#[test]
fn plan_validation() {
    let solver = linear_solver(16, 1.5, 0.1, 0);
    let ok = ExperimentPlan::new(solver.clone(), all_kinds(1.5), vec![4, 8], 2);
    assert!(ok.validate().is_ok());
    for (grid, reps) in [(vec![8, 4], 2), (vec![4, 4], 2), (vec![4, 9], 2), (vec![4, 8], 1)] {
        let bad = ExperimentPlan::new(solver.clone(), all_kinds(1.5), grid, reps);
        assert!(matches!(bad.validate(), Err(Error::Config { .. })));
    }
    // Consistency requires alpha > gamma - 1; normality alpha > gamma - 1/2.
    let weak = ExperimentPlan::new(solver.clone(), all_kinds(0.3), vec![4, 8], 2);
    assert!(run_consistency(&weak).is_err());
    let middle = ExperimentPlan::new(solver, all_kinds(0.8), vec![4, 8], 2);
    assert!(run_consistency(&middle).is_ok());
    assert!(run_normality(&middle).is_err());
}

fn battery(horizon: f64) -> LinearBatteryConfig {
    LinearBatteryConfig {
        torus: TorusSpec::two_pi(),
        nu: 1.0,
        gamma: 1.2,
        horizon,
        dt: 1e-3,
        replicates: 400,
        master_seed: 12,
        modes: (1..=20).collect(),
        beta: 2.2,
        n_grid: vec![16, 32, 64, 128],
    }
}

#[test]
fn linear_battery_moments_and_growth_rate() {
    let report = run_linear_battery(&battery(1.0)).unwrap();
    assert_eq!(report.rows.len(), 20);
    assert_eq!(report.count_within(4.0), 20, "{:?}", report.rows.iter().map(|r| r.z_score).collect::<Vec<_>>());
    assert!((report.target_slope - 2.0).abs() < 1e-12);
    assert!((report.fitted_slope_empirical - 2.0).abs() < 0.15, "{}", report.fitted_slope_empirical);
    assert!((report.fitted_slope_analytic - 2.0).abs() < 0.15, "{}", report.fitted_slope_analytic);
}

#[test]
fn battery_rejects_zero_horizon() {
    assert!(matches!(run_linear_battery(&battery(0.0)), Err(Error::Config { .. })));
}

#[test]
fn residual_vanishes_without_the_nonlinearity() {
    let mut solver = linear_solver(32, 1.2, 0.1, 4);
    solver.nonlinear = false;
    let study = ResidualStudyConfig {
        solver: solver.clone(),
        alpha_primes: vec![0.4],
        n_grid: vec![4, 16],
        replicates: 3,
        first_replicate: 0,
    };
    let report = run_residual_study(&study).unwrap();
    assert!(report.entries.iter().all(|e| e.residual_integral == 0.0 && e.ratio == 0.0));

    let mut bad = study;
    bad.n_grid = vec![16, 4];
    assert!(run_residual_study(&bad).is_err());
}
