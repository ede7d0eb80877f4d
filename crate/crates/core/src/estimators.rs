//! Spectral estimators of the viscosity from one observed sample path.
//!
//! With `N` observed modes and a free weight exponent `alpha`:
//!
//! ```text
//! tilde = -( sum_k l_k^{1+2a} int u_k du_k + sum_k l_k^{1+2a} int u_k b_k(U) dt ) / D
//! check = -( sum_k l_k^{1+2a} int u_k du_k + sum_k l_k^{1+2a} int u_k b_k(U^N) dt ) / D
//! hat   = -( sum_k l_k^{1+2a} int u_k du_k ) / D,           D = sum_k l_k^{2+2a} int u_k^2 dt
//! kappa = -( sum_k l_k^{1+2a} int u_k b_k(U) dt ) / D,      hat = tilde - kappa
//! ```
//!
//! The Ito integrals use the analytic quadratic-variation correction
//! `int u_k du_k = (u_k(T)^2 - u_k(0)^2 - T l_k^{-2 gamma}) / 2`; time integrals are
//! left-endpoint Riemann sums on the observation grid.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::basis::StokesBasis;
use crate::error::{Error, Result};
use crate::nse::NonlinearOperator;
use crate::trajectory::Trajectory;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EstimatorKind {
    Tilde,
    Check,
    Hat,
}

impl EstimatorKind {
    pub const ALL: [EstimatorKind; 3] = [EstimatorKind::Tilde, EstimatorKind::Check, EstimatorKind::Hat];

    pub fn as_str(self) -> &'static str {
        match self {
            EstimatorKind::Tilde => "tilde",
            EstimatorKind::Check => "check",
            EstimatorKind::Hat => "hat",
        }
    }
}

impl std::str::FromStr for EstimatorKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tilde" => Ok(EstimatorKind::Tilde),
            "check" => Ok(EstimatorKind::Check),
            "hat" => Ok(EstimatorKind::Hat),
            other => Err(Error::config("kind", format!("unknown estimator `{other}`"))),
        }
    }
}

/// Which asymptotic statements hold for a given `(alpha, gamma)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    /// `alpha <= gamma - 1`: no consistency guarantee.
    Unsupported,
    /// `gamma - 1 < alpha <= gamma - 1/2`: consistent.
    Consistent,
    /// `alpha > gamma - 1/2`: consistent and asymptotically normal with rate `N`.
    Normal,
}

impl Regime {
    pub fn classify(alpha: f64, gamma: f64) -> Self {
        if alpha > gamma - 0.5 {
            Regime::Normal
        } else if alpha > gamma - 1.0 {
            Regime::Consistent
        } else {
            Regime::Unsupported
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimatorConfig {
    pub alpha: f64,
    /// Observation cutoff `N`.
    pub n: usize,
    /// Use every `stride`-th stored time as an observation.
    #[serde(default = "default_stride")]
    pub stride: usize,
}

fn default_stride() -> usize {
    1
}

impl EstimatorConfig {
    pub fn new(alpha: f64, n: usize) -> Self {
        Self { alpha, n, stride: 1 }
    }

    pub fn regime(&self, gamma: f64) -> Regime {
        Regime::classify(self.alpha, gamma)
    }

    /// Checks `N <= M_sim / 2` and the stride against a trajectory.
    pub fn validate_for(&self, traj: &Trajectory) -> Result<()> {
        if self.n < 1 {
            return Err(Error::config("n", "observation cutoff must be at least 1"));
        }
        if self.n > traj.config.m_sim / 2 && self.n != traj.config.m_sim {
            return Err(Error::config(
                "n",
                format!("N = {} exceeds M_sim/2 = {}", self.n, traj.config.m_sim / 2),
            ));
        }
        if self.n > traj.recorded_modes {
            return Err(Error::config("n", "N exceeds the recorded modes"));
        }
        if self.stride < 1 || traj.steps() % self.stride != 0 {
            return Err(Error::config("stride", "stride must divide the number of steps"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimatorResult {
    pub kind: EstimatorKind,
    pub alpha: f64,
    pub n: usize,
    pub value: f64,
    pub numerator_ito: f64,
    pub numerator_nonlinear: f64,
    pub denominator: f64,
    /// Nonlinear-to-denominator ratio. For `check` it uses `B(U^N)`, otherwise `B(U)`.
    pub kappa: f64,
}

/// Per-mode sufficient statistics of one observed path, shared by every
/// `(alpha, N, kind)` evaluation.
#[derive(Debug, Clone)]
pub struct PathStatistics {
    lambdas: Vec<f64>,
    gamma: f64,
    horizon: f64,
    dt: f64,
    /// `(u_k(T)^2 - u_k(0)^2 - T l_k^{-2 gamma}) / 2`
    ito: Vec<f64>,
    /// `sum u_k(t_i) (u_k(t_{i+1}) - u_k(t_i))`
    ito_sum: Vec<f64>,
    /// `sum (u_k(t_{i+1}) - u_k(t_i))^2`
    quadratic_variation: Vec<f64>,
    /// `sum u_k(t_i)^2 dt`
    square: Vec<f64>,
    /// `sum u_k(t_i) b_k(U(t_i)) dt`
    cross_full: Vec<f64>,
    /// Per cutoff `N`: `sum u_k(t_i) b_k(U^N(t_i)) dt`, `k < N`.
    cross_truncated: BTreeMap<usize, Vec<f64>>,
}

impl PathStatistics {
    /// Statistics of the first `modes` coefficients observed every `stride` steps.
    pub fn new(traj: &Trajectory, modes: usize, stride: usize) -> Result<Self> {
        let basis = traj.config.basis();
        Self::with_basis(traj, &basis, modes, stride)
    }

    pub fn with_basis(traj: &Trajectory, basis: &StokesBasis, modes: usize, stride: usize) -> Result<Self> {
        assert!(modes >= 1 && modes <= traj.recorded_modes);
        if stride < 1 || traj.steps() % stride != 0 {
            return Err(Error::config("stride", "stride must divide the number of steps"));
        }
        let gamma = traj.config.noise.gamma;
        let obs = traj.steps() / stride;
        let dt = traj.dt * stride as f64;
        let horizon = obs as f64 * dt;
        let lambdas: Vec<f64> = basis.lambdas().take(modes).collect();

        let mut ito_sum = vec![0.0; modes];
        let mut quadratic_variation = vec![0.0; modes];
        let mut square = vec![0.0; modes];
        let mut cross_full = vec![0.0; modes];

        let mut full_op = None;
        let mut b = vec![0.0; traj.config.m_sim];
        for j in 0..obs {
            let i = j * stride;
            let u = &traj.state(i)[..modes];
            let next = &traj.state(i + stride)[..modes];
            for k in 0..modes {
                let du = next[k] - u[k];
                ito_sum[k] += u[k] * du;
                quadratic_variation[k] += du * du;
                square[k] += u[k] * u[k];
            }
            if !traj.config.nonlinear {
                continue;
            }
            let bk: &[f64] = match traj.nonlinear_row(i) {
                Some(row) => row,
                None => {
                    if traj.recorded_modes < traj.config.m_sim {
                        return Err(Error::Format(
                            "trajectory has neither the nonlinear record nor all simulated modes".into(),
                        ));
                    }
                    let op = match full_op.as_mut() {
                        Some(op) => op,
                        None => full_op.insert(NonlinearOperator::new(basis, traj.config.m_sim, traj.config.grid_n)?),
                    };
                    op.apply(traj.state(i), &mut b);
                    &b
                }
            };
            for k in 0..modes {
                cross_full[k] += u[k] * bk[k];
            }
        }
        square.iter_mut().for_each(|s| *s *= dt);
        cross_full.iter_mut().for_each(|s| *s *= dt);

        let first = traj.state(0);
        let last = traj.state(obs * stride);
        let ito = (0..modes)
            .map(|k| 0.5 * (last[k] * last[k] - first[k] * first[k] - horizon * lambdas[k].powf(-2.0 * gamma)))
            .collect();

        Ok(Self {
            lambdas,
            gamma,
            horizon,
            dt,
            ito,
            ito_sum,
            quadratic_variation,
            square,
            cross_full,
            cross_truncated: BTreeMap::new(),
        })
    }

    pub fn modes(&self) -> usize {
        self.lambdas.len()
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    /// Adds the `b_k(U^N)` cross integrals needed by the `check` estimator at cutoff `n`.
    pub fn add_truncated_nonlinear(&mut self, traj: &Trajectory, basis: &StokesBasis, n: usize, stride: usize) -> Result<()> {
        if self.cross_truncated.contains_key(&n) {
            return Ok(());
        }
        assert!(n <= self.modes());
        let mut cross = vec![0.0; n];
        if traj.config.nonlinear {
            let mut op = NonlinearOperator::minimal(basis, n)?;
            let mut b = vec![0.0; n];
            let obs = traj.steps() / stride;
            for j in 0..obs {
                let u = &traj.state(j * stride)[..n];
                op.apply(u, &mut b);
                for k in 0..n {
                    cross[k] += u[k] * b[k];
                }
            }
            cross.iter_mut().for_each(|s| *s *= self.dt);
        }
        self.cross_truncated.insert(n, cross);
        Ok(())
    }

    fn weight_ito(&self, k: usize, alpha: f64) -> f64 {
        self.lambdas[k].powf(1.0 + 2.0 * alpha)
    }

    /// `lambda_k^{1+2 alpha} int u_k du_k` with the analytic Ito correction.
    pub fn ito_mode_integral(&self, k: usize, alpha: f64) -> f64 {
        self.weight_ito(k, alpha) * self.ito[k]
    }

    /// Same integral written as the left-endpoint Ito sum plus the
    /// (analytic minus realized) quadratic-variation correction.
    pub fn ito_mode_integral_sum_form(&self, k: usize, alpha: f64) -> f64 {
        let correction = 0.5 * (self.quadratic_variation[k] - self.horizon * self.lambdas[k].powf(-2.0 * self.gamma));
        self.weight_ito(k, alpha) * (self.ito_sum[k] + correction)
    }

    /// Left-endpoint Ito sum alone, `lambda_k^{1+2 alpha} sum u du`.
    pub fn ito_mode_integral_realized(&self, k: usize, alpha: f64) -> f64 {
        self.weight_ito(k, alpha) * self.ito_sum[k]
    }

    pub fn numerator_ito(&self, alpha: f64, n: usize) -> f64 {
        (0..n).map(|k| self.ito_mode_integral(k, alpha)).sum()
    }

    pub fn numerator_nonlinear_full(&self, alpha: f64, n: usize) -> f64 {
        (0..n).map(|k| self.weight_ito(k, alpha) * self.cross_full[k]).sum()
    }

    pub fn numerator_nonlinear_truncated(&self, alpha: f64, n: usize) -> Option<f64> {
        let cross = self.cross_truncated.get(&n)?;
        Some((0..n).map(|k| self.weight_ito(k, alpha) * cross[k]).sum())
    }

    /// `int_0^T |A^{1+alpha} U^N|^2 dt`; errors unless strictly positive.
    pub fn denominator(&self, alpha: f64, n: usize) -> Result<f64> {
        let d: f64 = (0..n)
            .map(|k| self.lambdas[k].powf(2.0 + 2.0 * alpha) * self.square[k])
            .sum();
        if d > 0.0 && d.is_finite() {
            Ok(d)
        } else {
            Err(Error::DegenerateDenominator(d))
        }
    }

    pub fn kappa(&self, alpha: f64, n: usize) -> Result<f64> {
        Ok(-self.numerator_nonlinear_full(alpha, n) / self.denominator(alpha, n)?)
    }

    pub fn estimate(&self, kind: EstimatorKind, alpha: f64, n: usize) -> Result<EstimatorResult> {
        assert!(n >= 1 && n <= self.modes());
        let denominator = self.denominator(alpha, n)?;
        let numerator_ito = self.numerator_ito(alpha, n);
        let full = self.numerator_nonlinear_full(alpha, n);
        let kappa = -full / denominator;
        let (numerator_nonlinear, value, kappa) = match kind {
            EstimatorKind::Tilde => (full, -(numerator_ito + full) / denominator, kappa),
            EstimatorKind::Hat => (0.0, -numerator_ito / denominator, kappa),
            EstimatorKind::Check => {
                let nl = self.numerator_nonlinear_truncated(alpha, n).ok_or_else(|| {
                    Error::Format(format!("truncated nonlinear term for N = {n} was not computed"))
                })?;
                (nl, -(numerator_ito + nl) / denominator, -nl / denominator)
            }
        };
        Ok(EstimatorResult {
            kind,
            alpha,
            n,
            value,
            numerator_ito,
            numerator_nonlinear,
            denominator,
            kappa,
        })
    }
}

fn statistics_for(traj: &Trajectory, cfg: &EstimatorConfig, truncated: bool) -> Result<PathStatistics> {
    cfg.validate_for(traj)?;
    let basis = traj.config.basis();
    let mut stats = PathStatistics::with_basis(traj, &basis, cfg.n, cfg.stride)?;
    if truncated {
        stats.add_truncated_nonlinear(traj, &basis, cfg.n, cfg.stride)?;
    }
    Ok(stats)
}

/// `lambda_k^{1+2 alpha} int_0^T u_k du_k` (analytic Ito correction) for mode `k` of `traj`.
pub fn ito_mode_integral(traj: &Trajectory, k: usize, alpha: f64) -> Result<f64> {
    let stats = PathStatistics::new(traj, k + 1, 1)?;
    Ok(stats.ito_mode_integral(k, alpha))
}

/// `int_0^T |A^{1+alpha} U^N|^2 dt`.
pub fn denominator(traj: &Trajectory, alpha: f64, n: usize) -> Result<f64> {
    PathStatistics::new(traj, n, 1)?.denominator(alpha, n)
}

pub fn estimate_tilde(traj: &Trajectory, cfg: &EstimatorConfig) -> Result<EstimatorResult> {
    statistics_for(traj, cfg, false)?.estimate(EstimatorKind::Tilde, cfg.alpha, cfg.n)
}

pub fn estimate_check(traj: &Trajectory, cfg: &EstimatorConfig) -> Result<EstimatorResult> {
    statistics_for(traj, cfg, true)?.estimate(EstimatorKind::Check, cfg.alpha, cfg.n)
}

pub fn estimate_hat(traj: &Trajectory, cfg: &EstimatorConfig) -> Result<EstimatorResult> {
    statistics_for(traj, cfg, false)?.estimate(EstimatorKind::Hat, cfg.alpha, cfg.n)
}

pub fn kappa(traj: &Trajectory, cfg: &EstimatorConfig) -> Result<f64> {
    statistics_for(traj, cfg, false)?.kappa(cfg.alpha, cfg.n)
}

/// All three estimators for one configuration, sharing the path statistics.
pub fn estimate_all(traj: &Trajectory, cfg: &EstimatorConfig) -> Result<Vec<EstimatorResult>> {
    let stats = statistics_for(traj, cfg, true)?;
    EstimatorKind::ALL
        .iter()
        .map(|&kind| stats.estimate(kind, cfg.alpha, cfg.n))
        .collect()
}

/// Predicted variance of `N (tilde - nu)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TheoreticalVariance {
    /// From the actual eigenvalues `lambda_1..lambda_N`.
    pub finite_n: f64,
    /// Limit under `lambda_k ~ lambda_1 k`: `2 nu (a-g+1)^2 / (lambda_1 T (a-g+1/2))`.
    pub idealized: f64,
}

/// `finite_N = N^2 S_2 / ((T/2nu) S_1^2)` with `S_2 = sum lambda_k^{1+4a-4g}` and
/// `S_1 = sum lambda_k^{1+2a-2g}` over the first `N` eigenvalues.
pub fn theoretical_variance(
    basis: &StokesBasis,
    cfg: &EstimatorConfig,
    nu: f64,
    gamma: f64,
    horizon: f64,
) -> Result<TheoreticalVariance> {
    let lambdas: Vec<f64> = basis.lambdas().take(cfg.n).collect();
    theoretical_variance_for(&lambdas, basis.lambda_1(), cfg.alpha, nu, gamma, horizon)
}

/// [`theoretical_variance`] for an explicit eigenvalue list.
pub fn theoretical_variance_for(
    lambdas: &[f64],
    lambda_1: f64,
    alpha: f64,
    nu: f64,
    gamma: f64,
    horizon: f64,
) -> Result<TheoreticalVariance> {
    if alpha <= gamma - 0.5 {
        return Err(Error::ExponentOutOfRange(format!(
            "asymptotic normality needs alpha > gamma - 1/2 (alpha = {alpha}, gamma = {gamma})"
        )));
    }
    let n = lambdas.len() as f64;
    let scale = horizon / (2.0 * nu);
    let s2: f64 = lambdas.iter().map(|l| l.powf(1.0 + 4.0 * alpha - 4.0 * gamma)).sum();
    let s1: f64 = lambdas.iter().map(|l| l.powf(1.0 + 2.0 * alpha - 2.0 * gamma)).sum();
    let finite_n = n * n * scale * s2 / (scale * s1).powi(2);
    let c = alpha - gamma + 1.0;
    let idealized = 2.0 * nu * c * c / (lambda_1 * horizon * (alpha - gamma + 0.5));
    Ok(TheoreticalVariance { finite_n, idealized })
}
