//! The stochastic Stokes system: every mode is an independent OU process
//! `du + nu lambda u dt = lambda^-gamma dW`, sampled with its exact Gaussian
//! transition, plus closed-form moments of `int_0^T u^2 dt`.

use crate::basis::StokesBasis;
use crate::error::{Error, Result};
use crate::noise::NoiseSpec;
use crate::nse::{InitialCondition, Solver, SolverConfig, DEFAULT_BLOWUP_BOUND};
use crate::trajectory::Trajectory;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OuParams {
    pub nu: f64,
    pub lambda: f64,
    pub gamma: f64,
}

/// Exact transition `u -> decay * u + spread * xi` over one step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OuTransition {
    pub decay: f64,
    pub spread: f64,
}

impl OuParams {
    pub fn rate(&self) -> f64 {
        self.nu * self.lambda
    }

    /// Stationary variance `lambda^-2gamma / (2 nu lambda)`.
    pub fn stationary_variance(&self) -> f64 {
        self.lambda.powf(-2.0 * self.gamma) / (2.0 * self.rate())
    }

    pub fn transition(&self, dt: f64) -> OuTransition {
        let a = self.rate();
        let decay = (-a * dt).exp();
        let spread = self.lambda.powf(-self.gamma) * (-(-2.0 * a * dt).exp_m1() / (2.0 * a)).sqrt();
        OuTransition { decay, spread }
    }
}

/// Samples `u(t + dt)` given `u(t) = u` from a standard normal draw `xi`.
pub fn ou_exact_step(p: &OuParams, u: f64, dt: f64, xi: f64) -> f64 {
    let t = p.transition(dt);
    t.decay * u + t.spread * xi
}

/// Mean and variance of `int_0^T u(t)^2 dt` for the OU mode started at 0.
///
/// With `a = nu lambda` and `v = lambda^-2gamma / 2a` the covariance is
/// `c(s,t) = v (e^{-a|t-s|} - e^{-a(t+s)})`; the variance is `2 int int c^2`.
pub fn ou_time_integral_moments(p: &OuParams, horizon: f64) -> (f64, f64) {
    let a = p.rate();
    let v = p.stationary_variance();
    let t = horizon;
    // (1 - e^{-2aT}) / 2a
    let g = -(-2.0 * a * t).exp_m1() / (2.0 * a);
    let mean = v * (t - g);

    let diagonal = (t - g) / a;
    let product = g * g;
    let x = 2.0 * a * t;
    let cross = (-(-x).exp_m1() - x * (-x).exp()) / (a * a);
    let variance = 2.0 * v * v * (diagonal - cross + product);
    (mean, variance.max(0.0))
}

/// `E int_0^T |A^beta Ubar^N|^2 dt = sum_{k<=N} lambda_k^{2 beta} E int u_k^2`, exact.
pub fn linear_energy_growth(
    basis: &StokesBasis,
    nu: f64,
    gamma: f64,
    horizon: f64,
    beta: f64,
    n: usize,
) -> Result<f64> {
    if beta <= gamma {
        return Err(Error::ExponentOutOfRange(format!(
            "beta = {beta} must exceed gamma = {gamma}"
        )));
    }
    assert!(n >= 1 && n <= basis.len());
    Ok(basis
        .lambdas()
        .take(n)
        .map(|lambda| {
            let (mean, _) = ou_time_integral_moments(&OuParams { nu, lambda, gamma }, horizon);
            lambda.powf(2.0 * beta) * mean
        })
        .sum())
}

/// Large-`N` form `T lambda_1^{2b-2g-1} N^{2b-2g} / (2 nu (2b-2g))` for reference.
pub fn linear_energy_growth_asymptotic(lambda_1: f64, nu: f64, gamma: f64, horizon: f64, beta: f64, n: usize) -> f64 {
    let s = 2.0 * beta - 2.0 * gamma;
    horizon * lambda_1.powf(s - 1.0) / (2.0 * nu * s) * (n as f64).powf(s)
}

/// Configuration of the stochastic Stokes system on the first `basis.len()` modes.
pub fn linear_config(basis: &StokesBasis, noise: &NoiseSpec, nu: f64, horizon: f64, dt: f64) -> Result<SolverConfig> {
    let kmax = basis.max_component(basis.len());
    let cfg = SolverConfig {
        nu,
        noise: *noise,
        torus: basis.torus(),
        grid_n: crate::nse::minimal_dealiased_grid(kmax.max(1)),
        m_sim: basis.len(),
        horizon,
        dt,
        initial: InitialCondition::Zero,
        track_residual: false,
        nonlinear: false,
        noise_enabled: true,
        blowup_bound: DEFAULT_BLOWUP_BOUND,
        record_modes: None,
        record_nonlinear: false,
    };
    cfg.validate()?;
    Ok(cfg)
}

/// Exact-transition simulation of every mode from `Ubar(0) = 0` for one replicate.
pub fn simulate_linear(
    basis: &StokesBasis,
    noise: &NoiseSpec,
    nu: f64,
    horizon: f64,
    dt: f64,
    replicate: u64,
) -> Result<Trajectory> {
    let cfg = linear_config(basis, noise, nu, horizon, dt)?;
    simulate_linear_config(&cfg, replicate)
}

/// Like [`simulate_linear`] for an arbitrary configuration; the nonlinearity is ignored.
pub fn simulate_linear_config(config: &SolverConfig, replicate: u64) -> Result<Trajectory> {
    let mut cfg = config.clone();
    cfg.nonlinear = false;
    cfg.track_residual = false;
    let mut solver = Solver::new(cfg)?;
    solver.simulate(replicate)
}
