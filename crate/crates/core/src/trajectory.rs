use crate::basis::{SpectralState, StokesBasis};
use crate::nse::SolverConfig;

/// A simulated sample path on the uniform grid `t_i = i * dt`, `i = 0..=steps`.
///
/// Per-time records are stored row-major with `recorded_modes` columns.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub config: SolverConfig,
    pub replicate: u64,
    pub dt: f64,
    pub recorded_modes: usize,
    /// `(steps + 1) x recorded_modes`; row 0 is the initial condition.
    pub states: Vec<f64>,
    /// `steps x recorded_modes` Brownian increments consumed by the solver.
    pub noise: Option<Vec<f64>>,
    /// `steps x recorded_modes` nonlinear coefficients `b_k(U(t_i))` at the left endpoints.
    pub nonlinear: Option<Vec<f64>>,
    /// `(steps + 1) x recorded_modes` residual `R = U - Ubar`.
    pub residual: Option<Vec<f64>>,
}

impl Trajectory {
    pub fn steps(&self) -> usize {
        self.states.len() / self.recorded_modes - 1
    }

    pub fn horizon(&self) -> f64 {
        self.steps() as f64 * self.dt
    }

    pub fn time(&self, i: usize) -> f64 {
        i as f64 * self.dt
    }

    pub fn times(&self) -> Vec<f64> {
        (0..=self.steps()).map(|i| self.time(i)).collect()
    }

    pub fn state(&self, i: usize) -> &[f64] {
        let m = self.recorded_modes;
        &self.states[i * m..(i + 1) * m]
    }

    pub fn spectral_state(&self, i: usize) -> SpectralState {
        self.state(i).to_vec().into()
    }

    pub fn final_state(&self) -> &[f64] {
        self.state(self.steps())
    }

    pub fn noise_row(&self, i: usize) -> Option<&[f64]> {
        let m = self.recorded_modes;
        self.noise.as_ref().map(|v| &v[i * m..(i + 1) * m])
    }

    pub fn nonlinear_row(&self, i: usize) -> Option<&[f64]> {
        let m = self.recorded_modes;
        self.nonlinear.as_ref().map(|v| &v[i * m..(i + 1) * m])
    }

    pub fn residual_row(&self, i: usize) -> Option<&[f64]> {
        let m = self.recorded_modes;
        self.residual.as_ref().map(|v| &v[i * m..(i + 1) * m])
    }

    /// Coefficient `k` over time.
    pub fn mode_path(&self, k: usize) -> Vec<f64> {
        (0..=self.steps()).map(|i| self.state(i)[k]).collect()
    }

    /// Left-endpoint Riemann sum of `u_k(t)^2`.
    pub fn mode_square_integral(&self, k: usize) -> f64 {
        (0..self.steps())
            .map(|i| self.state(i)[k].powi(2))
            .sum::<f64>()
            * self.dt
    }

    /// Left-endpoint Riemann sum of `|A^beta P_n U|^2`.
    pub fn sobolev_energy_integral(&self, basis: &StokesBasis, beta: f64, n: usize) -> f64 {
        weighted_square_integral(self, |i| self.state(i), basis, beta, n)
    }

    /// Left-endpoint Riemann sum of `|A^beta P_n R|^2`, if the residual was tracked.
    pub fn residual_energy_integral(&self, basis: &StokesBasis, beta: f64, n: usize) -> Option<f64> {
        self.residual.as_ref()?;
        Some(weighted_square_integral(
            self,
            |i| self.residual_row(i).unwrap(),
            basis,
            beta,
            n,
        ))
    }

    /// Largest coefficient magnitude over the whole path.
    pub fn sup_norm(&self) -> f64 {
        self.states.iter().fold(0.0f64, |m, x| m.max(x.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.states.iter().all(|x| x.is_finite())
    }
}

fn weighted_square_integral<'a>(
    traj: &'a Trajectory,
    row: impl Fn(usize) -> &'a [f64],
    basis: &StokesBasis,
    beta: f64,
    n: usize,
) -> f64 {
    assert!(n <= traj.recorded_modes, "cutoff {n} above recorded modes");
    let weights: Vec<f64> = basis.lambdas().take(n).map(|l| l.powf(2.0 * beta)).collect();
    let mut total = 0.0;
    for i in 0..traj.steps() {
        total += row(i)[..n]
            .iter()
            .zip(&weights)
            .map(|(u, w)| w * u * u)
            .sum::<f64>();
    }
    total * traj.dt
}
