//! Monte Carlo harness: consistency sweeps over the cutoff `N`, normality
//! studies, the linear moment battery and the residual regularity study.
//!
//! Replicates run concurrently on the ambient rayon pool; every replicate draws
//! its noise from keyed streams and results are aggregated in replicate order,
//! so reports do not depend on scheduling.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::basis::StokesBasis;
use crate::error::{Error, Result};
use crate::estimators::{theoretical_variance, EstimatorConfig, EstimatorKind, PathStatistics, Regime};
use crate::linear::{linear_config, linear_energy_growth, ou_time_integral_moments, simulate_linear_config, OuParams};
use crate::noise::NoiseSpec;
use crate::nse::{Solver, SolverConfig};
use crate::stats;
use crate::trajectory::Trajectory;
use crate::basis::TorusSpec;

/// Fewest replicates for which a KS p-value is reported.
pub const MIN_KS_REPLICATES: usize = 8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorSpec {
    pub alpha: f64,
    pub kinds: Vec<EstimatorKind>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentPlan {
    pub solver: SolverConfig,
    pub estimators: Vec<EstimatorSpec>,
    pub n_grid: Vec<usize>,
    pub replicates: usize,
    #[serde(default)]
    pub first_replicate: u64,
    #[serde(default = "one")]
    pub stride: usize,
    #[serde(default = "default_ks_significance")]
    pub ks_significance: f64,
    #[serde(default = "default_variance_band")]
    pub variance_ratio_band: (f64, f64),
}

fn one() -> usize {
    1
}

fn default_ks_significance() -> f64 {
    0.01
}

fn default_variance_band() -> (f64, f64) {
    (0.75, 1.33)
}

impl ExperimentPlan {
    pub fn new(solver: SolverConfig, estimators: Vec<EstimatorSpec>, n_grid: Vec<usize>, replicates: usize) -> Self {
        Self {
            solver,
            estimators,
            n_grid,
            replicates,
            first_replicate: 0,
            stride: 1,
            ks_significance: default_ks_significance(),
            variance_ratio_band: default_variance_band(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.solver.validate()?;
        if self.replicates < 2 {
            return Err(Error::config("replicates", "at least 2 replicates are required"));
        }
        if self.n_grid.is_empty() || self.n_grid.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::config("n_grid", "N grid must be non-empty and strictly increasing"));
        }
        let cap = self.solver.m_sim / 2;
        if self.n_grid[0] < 1 || *self.n_grid.last().unwrap() > cap {
            return Err(Error::config("n_grid", format!("every N must lie in 1..={cap} (M_sim/2)")));
        }
        if *self.n_grid.last().unwrap() > self.solver.recorded_modes() {
            return Err(Error::config("n_grid", "N exceeds the recorded modes"));
        }
        if self.estimators.is_empty() || self.estimators.iter().any(|e| e.kinds.is_empty()) {
            return Err(Error::config("estimators", "at least one estimator kind is required"));
        }
        if self.stride < 1 || self.solver.steps() % self.stride != 0 {
            return Err(Error::config("stride", "stride must divide the number of steps"));
        }
        if !(self.ks_significance > 0.0 && self.ks_significance < 1.0) {
            return Err(Error::config("ks_significance", "must lie in (0, 1)"));
        }
        let (lo, hi) = self.variance_ratio_band;
        if !(lo > 0.0 && lo < hi) {
            return Err(Error::config("variance_ratio_band", "need 0 < low < high"));
        }
        Ok(())
    }

    fn needs_check(&self) -> bool {
        self.estimators.iter().any(|e| e.kinds.contains(&EstimatorKind::Check))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StudyKind {
    Consistency,
    Normality,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KsSummary {
    pub statistic: f64,
    pub p_value: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McEntry {
    pub kind: EstimatorKind,
    pub alpha: f64,
    pub n: usize,
    pub regime: Regime,
    pub replicate_ids: Vec<u64>,
    pub values: Vec<f64>,
    pub mean: f64,
    pub bias: f64,
    pub sample_variance: f64,
    pub median_abs_error: f64,
    pub mean_abs_error: f64,
    /// Per-replicate correction `kappa`, aligned with `values`.
    pub kappas: Vec<f64>,
    /// Median of `|kappa|` across replicates.
    pub median_abs_kappa: f64,
    /// Predicted variance of `N (estimate - nu)` from the actual eigenvalues.
    pub predicted_variance: Option<f64>,
    /// Idealized large-`N` value of the same variance, reported for reference.
    pub predicted_variance_idealized: Option<f64>,
    /// `sample_var(N (estimate - nu)) / predicted_variance`.
    pub variance_ratio: Option<f64>,
    pub variance_ratio_in_band: Option<bool>,
    pub ks: Option<KsSummary>,
    pub flags: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateFailure {
    pub replicate: u64,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McReport {
    pub study: StudyKind,
    pub config_hash: String,
    pub basis_hash: String,
    pub nu_true: f64,
    pub gamma: f64,
    pub horizon: f64,
    pub m_sim: usize,
    pub replicates: usize,
    pub succeeded: usize,
    pub failure_fraction: f64,
    pub success_fraction: f64,
    pub failures: Vec<ReplicateFailure>,
    pub entries: Vec<McEntry>,
    /// Seconds spent; kept out of serialized reports so they stay reproducible.
    #[serde(skip)]
    pub wall_time_s: f64,
}

impl McReport {
    pub fn entry(&self, kind: EstimatorKind, alpha: f64, n: usize) -> Option<&McEntry> {
        self.entries
            .iter()
            .find(|e| e.kind == kind && e.alpha == alpha && e.n == n)
    }
}

/// Estimates of one replicate, ordered as `(estimator spec, kind, N)`.
struct ReplicateValues {
    values: Vec<f64>,
    kappas: Vec<f64>,
}

fn entry_order(plan: &ExperimentPlan) -> Vec<(f64, EstimatorKind, usize)> {
    let mut out = Vec::new();
    for spec in &plan.estimators {
        for &kind in &spec.kinds {
            for &n in &plan.n_grid {
                out.push((spec.alpha, kind, n));
            }
        }
    }
    out
}

fn run_replicate(
    plan: &ExperimentPlan,
    basis: &StokesBasis,
    order: &[(f64, EstimatorKind, usize)],
    replicate: u64,
) -> Result<(ReplicateValues, Trajectory)> {
    let mut solver = Solver::new(plan.solver.clone())?;
    let traj = solver.simulate(replicate)?;
    let max_n = *plan.n_grid.last().unwrap();
    let mut stats = PathStatistics::with_basis(&traj, basis, max_n, plan.stride)?;
    if plan.needs_check() {
        for &n in &plan.n_grid {
            stats.add_truncated_nonlinear(&traj, basis, n, plan.stride)?;
        }
    }
    let mut values = Vec::with_capacity(order.len());
    let mut kappas = Vec::with_capacity(order.len());
    for &(alpha, kind, n) in order {
        let r = stats.estimate(kind, alpha, n)?;
        if !r.value.is_finite() {
            return Err(Error::DegenerateDenominator(r.denominator));
        }
        values.push(r.value);
        kappas.push(r.kappa);
    }
    Ok((ReplicateValues { values, kappas }, traj))
}

/// Runs every replicate and aggregates; optionally returns the trajectories.
pub fn run_monte_carlo(
    plan: &ExperimentPlan,
    study: StudyKind,
    keep_trajectories: bool,
) -> Result<(McReport, Vec<Trajectory>)> {
    plan.validate()?;
    let gamma = plan.solver.noise.gamma;
    for spec in &plan.estimators {
        let regime = Regime::classify(spec.alpha, gamma);
        match study {
            StudyKind::Consistency if regime == Regime::Unsupported => {
                return Err(Error::config("estimators.alpha", "consistency requires alpha > gamma - 1"));
            }
            StudyKind::Normality if regime != Regime::Normal => {
                return Err(Error::config("estimators.alpha", "normality requires alpha > gamma - 1/2"));
            }
            _ => {}
        }
    }

    let started = std::time::Instant::now();
    let basis = plan.solver.basis();
    let order = entry_order(plan);
    let ids: Vec<u64> = (0..plan.replicates as u64).map(|r| plan.first_replicate + r).collect();
    let outcomes: Vec<Result<(ReplicateValues, Option<Trajectory>)>> = ids
        .par_iter()
        .map(|&id| {
            run_replicate(plan, &basis, &order, id)
                .map(|(v, t)| (v, keep_trajectories.then_some(t)))
        })
        .collect();

    let mut successes = Vec::new();
    let mut failures = Vec::new();
    let mut trajectories = Vec::new();
    for (&id, outcome) in ids.iter().zip(outcomes) {
        match outcome {
            Ok((v, t)) => {
                successes.push((id, v));
                trajectories.extend(t);
            }
            Err(e) => failures.push(ReplicateFailure {
                replicate: id,
                error: e.to_string(),
            }),
        }
    }

    let nu = plan.solver.nu;
    let horizon = plan.solver.horizon;
    let entries = order
        .iter()
        .enumerate()
        .map(|(j, &(alpha, kind, n))| {
            let replicate_ids: Vec<u64> = successes.iter().map(|(id, _)| *id).collect();
            let values: Vec<f64> = successes.iter().map(|(_, v)| v.values[j]).collect();
            let kappas: Vec<f64> = successes.iter().map(|(_, v)| v.kappas[j]).collect();
            summarize(plan, study, &basis, alpha, kind, n, nu, gamma, horizon, replicate_ids, values, kappas)
        })
        .collect();

    let total = plan.replicates as f64;
    let report = McReport {
        study,
        config_hash: plan.solver.hash(),
        basis_hash: basis.hash(),
        nu_true: nu,
        gamma,
        horizon,
        m_sim: plan.solver.m_sim,
        replicates: plan.replicates,
        succeeded: successes.len(),
        failure_fraction: failures.len() as f64 / total,
        success_fraction: successes.len() as f64 / total,
        failures,
        entries,
        wall_time_s: started.elapsed().as_secs_f64(),
    };
    Ok((report, trajectories))
}

#[allow(clippy::too_many_arguments)]
fn summarize(
    plan: &ExperimentPlan,
    study: StudyKind,
    basis: &StokesBasis,
    alpha: f64,
    kind: EstimatorKind,
    n: usize,
    nu: f64,
    gamma: f64,
    horizon: f64,
    replicate_ids: Vec<u64>,
    values: Vec<f64>,
    kappas: Vec<f64>,
) -> McEntry {
    let regime = Regime::classify(alpha, gamma);
    let abs_kappas: Vec<f64> = kappas.iter().map(|k| k.abs()).collect();
    let errors: Vec<f64> = values.iter().map(|v| (v - nu).abs()).collect();
    let mean = stats::mean(&values);
    let mut flags = Vec::new();

    let predicted = theoretical_variance(basis, &EstimatorConfig::new(alpha, n), nu, gamma, horizon).ok();
    let scaled: Vec<f64> = values.iter().map(|v| n as f64 * (v - nu)).collect();
    let variance_ratio = predicted.map(|p| stats::sample_variance(&scaled) / p.finite_n);
    let (lo, hi) = plan.variance_ratio_band;
    let variance_ratio_in_band = variance_ratio.map(|r| r >= lo && r <= hi);

    let ks = match (study, predicted) {
        (StudyKind::Normality, Some(p)) => {
            if values.len() < MIN_KS_REPLICATES {
                flags.push("insufficient_replicates".to_string());
                None
            } else {
                let z: Vec<f64> = scaled.iter().map(|s| s / p.finite_n.sqrt()).collect();
                let out = stats::ks_standard_normal(&z);
                Some(KsSummary {
                    statistic: out.statistic,
                    p_value: out.p_value,
                    passed: out.p_value > plan.ks_significance,
                })
            }
        }
        _ => None,
    };
    if kind == EstimatorKind::Check && study == StudyKind::Normality {
        flags.push("normality_not_established".to_string());
    }

    McEntry {
        kind,
        alpha,
        n,
        regime,
        replicate_ids,
        mean,
        bias: mean - nu,
        sample_variance: stats::sample_variance(&values),
        median_abs_error: stats::median(&errors),
        mean_abs_error: stats::mean(&errors),
        median_abs_kappa: stats::median(&abs_kappas),
        kappas,
        predicted_variance: predicted.map(|p| p.finite_n),
        predicted_variance_idealized: predicted.map(|p| p.idealized),
        variance_ratio,
        variance_ratio_in_band,
        ks,
        flags,
        values,
    }
}

/// Estimator sweep over the `N` grid; reports median absolute errors per `N`.
pub fn run_consistency(plan: &ExperimentPlan) -> Result<McReport> {
    Ok(run_monte_carlo(plan, StudyKind::Consistency, false)?.0)
}

/// Studentized errors `N (estimate - nu) / sqrt(finite_N)` against the standard normal.
pub fn run_normality(plan: &ExperimentPlan) -> Result<McReport> {
    Ok(run_monte_carlo(plan, StudyKind::Normality, false)?.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearBatteryConfig {
    pub torus: TorusSpec,
    pub nu: f64,
    pub gamma: f64,
    pub horizon: f64,
    pub dt: f64,
    pub replicates: usize,
    pub master_seed: u64,
    /// 1-based mode numbers whose moments are checked.
    pub modes: Vec<usize>,
    pub beta: f64,
    /// Cutoffs for the growth-rate fit.
    pub n_grid: Vec<usize>,
}

impl LinearBatteryConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.horizon.is_finite() && self.horizon > 0.0) {
            return Err(Error::config("horizon", "T must be positive"));
        }
        if self.replicates < 2 {
            return Err(Error::config("replicates", "at least 2 replicates are required"));
        }
        if self.modes.is_empty() || self.modes.contains(&0) {
            return Err(Error::config("modes", "mode numbers are 1-based and non-empty"));
        }
        if self.n_grid.len() < 2 || self.n_grid.windows(2).any(|w| w[0] >= w[1]) || self.n_grid[0] < 1 {
            return Err(Error::config("n_grid", "need at least two increasing cutoffs"));
        }
        if self.beta <= self.gamma {
            return Err(Error::ExponentOutOfRange(format!(
                "beta = {} must exceed gamma = {}",
                self.beta, self.gamma
            )));
        }
        NoiseSpec::new(self.gamma, self.master_seed)?;
        Ok(())
    }

    fn mode_count(&self) -> usize {
        (*self.modes.iter().max().unwrap()).max(*self.n_grid.last().unwrap())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeMoment {
    pub mode: usize,
    pub lambda: f64,
    pub empirical_mean: f64,
    pub analytic_mean: f64,
    pub std_error: f64,
    pub z_score: f64,
    pub empirical_variance: f64,
    pub analytic_variance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrowthPoint {
    pub n: usize,
    pub empirical: f64,
    pub analytic: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearBatteryReport {
    pub rows: Vec<ModeMoment>,
    pub growth: Vec<GrowthPoint>,
    pub target_slope: f64,
    pub fitted_slope_empirical: f64,
    pub fitted_slope_analytic: f64,
}

impl LinearBatteryReport {
    pub fn count_within(&self, z: f64) -> usize {
        self.rows.iter().filter(|r| r.z_score.abs() < z).count()
    }
}

/// Empirical versus exact moments of `int u_k^2 dt` on the stochastic Stokes
/// system, and the growth rate of `E int |A^beta Ubar^N|^2 dt` in `N`.
pub fn run_linear_battery(config: &LinearBatteryConfig) -> Result<LinearBatteryReport> {
    config.validate()?;
    let count = config.mode_count();
    let basis = StokesBasis::build(config.torus, count);
    let noise = NoiseSpec::new(config.gamma, config.master_seed)?;
    let solver_cfg = linear_config(&basis, &noise, config.nu, config.horizon, config.dt)?;

    let integrals: Vec<Vec<f64>> = (0..config.replicates as u64)
        .into_par_iter()
        .map(|r| {
            let traj = simulate_linear_config(&solver_cfg, r)?;
            Ok((0..count).map(|k| traj.mode_square_integral(k)).collect())
        })
        .collect::<Result<_>>()?;

    let per_mode = |k: usize| -> Vec<f64> { integrals.iter().map(|row| row[k]).collect() };
    let rows = config
        .modes
        .iter()
        .map(|&mode| {
            let k = mode - 1;
            let samples = per_mode(k);
            let lambda = basis.lambda(k);
            let (analytic_mean, analytic_variance) = ou_time_integral_moments(
                &OuParams { nu: config.nu, lambda, gamma: config.gamma },
                config.horizon,
            );
            let empirical_mean = stats::mean(&samples);
            let empirical_variance = stats::sample_variance(&samples);
            let std_error = (empirical_variance / samples.len() as f64).sqrt();
            ModeMoment {
                mode,
                lambda,
                empirical_mean,
                analytic_mean,
                std_error,
                z_score: (empirical_mean - analytic_mean) / std_error,
                empirical_variance,
                analytic_variance,
            }
        })
        .collect();

    let mean_by_mode: Vec<f64> = (0..count).map(|k| stats::mean(&per_mode(k))).collect();
    let growth: Vec<GrowthPoint> = config
        .n_grid
        .iter()
        .map(|&n| {
            let empirical = (0..n)
                .map(|k| basis.lambda(k).powf(2.0 * config.beta) * mean_by_mode[k])
                .sum();
            let analytic = linear_energy_growth(&basis, config.nu, config.gamma, config.horizon, config.beta, n)?;
            Ok(GrowthPoint { n, empirical, analytic })
        })
        .collect::<Result<_>>()?;
    let ns: Vec<f64> = growth.iter().map(|g| g.n as f64).collect();
    let emp: Vec<f64> = growth.iter().map(|g| g.empirical).collect();
    let ana: Vec<f64> = growth.iter().map(|g| g.analytic).collect();

    Ok(LinearBatteryReport {
        rows,
        target_slope: 2.0 * config.beta - 2.0 * config.gamma,
        fitted_slope_empirical: stats::log_log_slope(&ns, &emp),
        fitted_slope_analytic: stats::log_log_slope(&ns, &ana),
        growth,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualStudyConfig {
    pub solver: SolverConfig,
    pub alpha_primes: Vec<f64>,
    pub n_grid: Vec<usize>,
    pub replicates: usize,
    #[serde(default)]
    pub first_replicate: u64,
}

impl ResidualStudyConfig {
    pub fn validate(&self) -> Result<()> {
        self.solver.validate()?;
        if self.replicates < 1 {
            return Err(Error::config("replicates", "at least one replicate is required"));
        }
        if self.n_grid.is_empty() || self.n_grid.windows(2).any(|w| w[0] >= w[1]) || self.n_grid[0] < 1 {
            return Err(Error::config("n_grid", "N grid must be non-empty and strictly increasing"));
        }
        if *self.n_grid.last().unwrap() > self.solver.recorded_modes() {
            return Err(Error::config("n_grid", "N exceeds the recorded modes"));
        }
        let gamma = self.solver.noise.gamma;
        if self.alpha_primes.is_empty() || self.alpha_primes.iter().any(|a| 1.0 + a <= gamma) {
            return Err(Error::ExponentOutOfRange("each alpha' needs 1 + alpha' > gamma".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualEntry {
    pub alpha_prime: f64,
    pub n: usize,
    /// Mean over replicates of `int |A^{1+a'} R^N|^2 dt`.
    pub residual_integral: f64,
    /// `E int |A^{1+a'} Ubar^N|^2 dt`, exact.
    pub linear_expectation: f64,
    /// `residual_integral / linear_expectation`.
    pub ratio: f64,
    pub ratio_median: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualStudyReport {
    pub config_hash: String,
    pub entries: Vec<ResidualEntry>,
    /// Per alpha': ratio at the smallest N divided by the ratio at the largest N.
    pub decay_factors: Vec<(f64, f64)>,
}

/// Tracks `R = U - Ubar` and compares its high-order energy with the linear part's.
pub fn run_residual_study(config: &ResidualStudyConfig) -> Result<ResidualStudyReport> {
    config.validate()?;
    let mut solver_cfg = config.solver.clone();
    solver_cfg.track_residual = true;
    solver_cfg.record_nonlinear = false;
    let basis = solver_cfg.basis();
    let gamma = solver_cfg.noise.gamma;

    let per_replicate: Vec<Vec<f64>> = (0..config.replicates as u64)
        .into_par_iter()
        .map(|r| {
            let traj = Solver::new(solver_cfg.clone())?.simulate(config.first_replicate + r)?;
            let mut row = Vec::new();
            for &a in &config.alpha_primes {
                for &n in &config.n_grid {
                    row.push(traj.residual_energy_integral(&basis, 1.0 + a, n).unwrap());
                }
            }
            Ok(row)
        })
        .collect::<Result<_>>()?;

    let mut entries = Vec::new();
    let mut decay_factors = Vec::new();
    let mut j = 0;
    for &a in &config.alpha_primes {
        let first = entries.len();
        for &n in &config.n_grid {
            let samples: Vec<f64> = per_replicate.iter().map(|row| row[j]).collect();
            j += 1;
            let linear_expectation =
                linear_energy_growth(&basis, solver_cfg.nu, gamma, solver_cfg.horizon, 1.0 + a, n)?;
            let residual_integral = stats::mean(&samples);
            let ratios: Vec<f64> = samples.iter().map(|s| s / linear_expectation).collect();
            entries.push(ResidualEntry {
                alpha_prime: a,
                n,
                residual_integral,
                linear_expectation,
                ratio: residual_integral / linear_expectation,
                ratio_median: stats::median(&ratios),
            });
        }
        let last: &ResidualEntry = entries.last().unwrap();
        decay_factors.push((a, entries[first].ratio / last.ratio));
    }

    Ok(ResidualStudyReport {
        config_hash: solver_cfg.hash(),
        entries,
        decay_factors,
    })
}
