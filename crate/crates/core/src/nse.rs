//! Spectral time stepping of the stochastic Navier-Stokes system
//! `dU + (nu A U + B(U)) dt = sigma dW` on the torus.
//!
//! The nonlinear term is evaluated pseudo-spectrally on a grid satisfying the
//! 2/3 rule, so the Galerkin coefficients `b_k = (B(U), Phi_k)` are exact for
//! every retained mode. Time stepping is exponential Euler-Maruyama: the linear
//! part and the stochastic convolution variance are integrated exactly, the
//! nonlinear term is frozen at the left endpoint.

use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::basis::{dealiased_kmax, Parity, SpectralState, StokesBasis, TorusSpec};
use crate::error::{Error, Result};
use crate::fft::{wrap, Fft2};
use crate::linear::OuParams;
use crate::noise::{sample_increments, NoiseIncrementBlock, NoiseSpec};
use crate::trajectory::Trajectory;

pub const DEFAULT_DT: f64 = 1e-3;
pub const DEFAULT_BLOWUP_BOUND: f64 = 1e12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitialCondition {
    Zero,
    /// Prescribed amplitudes `(mode index, value)`; all other modes start at 0.
    Modes { amplitudes: Vec<(usize, f64)> },
}

impl InitialCondition {
    pub fn state(&self, m_sim: usize) -> SpectralState {
        let mut u = SpectralState::zeros(m_sim);
        if let InitialCondition::Modes { amplitudes } = self {
            for &(k, a) in amplitudes {
                u[k] = a;
            }
        }
        u
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    /// True viscosity `nu`.
    pub nu: f64,
    pub noise: NoiseSpec,
    pub torus: TorusSpec,
    /// Real-space grid points per axis for the pseudo-spectral product.
    pub grid_n: usize,
    /// Number of simulated modes `M_sim`.
    pub m_sim: usize,
    pub horizon: f64,
    pub dt: f64,
    pub initial: InitialCondition,
    pub track_residual: bool,
    /// Switches the nonlinear term off, leaving the stochastic Stokes system.
    pub nonlinear: bool,
    /// Switches the forcing off (deterministic runs).
    pub noise_enabled: bool,
    pub blowup_bound: f64,
    /// Keep only the first modes of every per-time record. `None` keeps all.
    pub record_modes: Option<usize>,
    /// Store `b_k(U(t_i))` alongside the states.
    pub record_nonlinear: bool,
}

impl SolverConfig {
    /// A configuration simulating every mode a `grid_n` grid carries after dealiasing.
    pub fn dealiased(nu: f64, noise: NoiseSpec, torus: TorusSpec, grid_n: usize, horizon: f64, dt: f64) -> Result<Self> {
        let m_sim = StokesBasis::dealiased(torus, grid_n)?.len();
        let cfg = Self {
            nu,
            noise,
            torus,
            grid_n,
            m_sim,
            horizon,
            dt,
            initial: InitialCondition::Zero,
            track_residual: false,
            nonlinear: true,
            noise_enabled: true,
            blowup_bound: DEFAULT_BLOWUP_BOUND,
            record_modes: None,
            record_nonlinear: true,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.nu.is_finite() && self.nu > 0.0) {
            return Err(Error::config("nu", "viscosity must be positive"));
        }
        if !(self.noise.gamma.is_finite() && self.noise.gamma > 1.0) {
            return Err(Error::config("gamma", "gamma must exceed 1"));
        }
        if !(self.torus.length.is_finite() && self.torus.length > 0.0) {
            return Err(Error::config("torus.length", "period length must be positive"));
        }
        if !(self.horizon.is_finite() && self.horizon > 0.0) {
            return Err(Error::config("horizon", "T must be positive"));
        }
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(Error::config("dt", "time step must be positive"));
        }
        let ratio = self.horizon / self.dt;
        if ratio.round() < 1.0 || (ratio - ratio.round()).abs() > 1e-9 * ratio.max(1.0) {
            return Err(Error::config("dt", "T/dt must be a positive integer"));
        }
        self.noise.refinement_level(self.dt)?;
        if self.m_sim < 1 {
            return Err(Error::config("m_sim", "at least one mode is required"));
        }
        let kmax = StokesBasis::build(self.torus, self.m_sim).max_component(self.m_sim);
        if dealiased_kmax(self.grid_n) < kmax {
            return Err(Error::config(
                "grid_n",
                format!(
                    "grid of {} points does not dealias wavevector component {kmax} (need grid_n > {})",
                    self.grid_n,
                    3 * kmax
                ),
            ));
        }
        if let InitialCondition::Modes { amplitudes } = &self.initial {
            if let Some(&(k, _)) = amplitudes.iter().find(|(k, a)| *k >= self.m_sim || !a.is_finite()) {
                return Err(Error::config("initial.amplitudes", format!("mode {k} outside 0..{} or non-finite", self.m_sim)));
            }
        }
        if !(self.blowup_bound > 0.0) {
            return Err(Error::config("blowup_bound", "must be positive"));
        }
        if let Some(r) = self.record_modes {
            if r < 1 || r > self.m_sim {
                return Err(Error::config("record_modes", "must lie in 1..=m_sim"));
            }
        }
        Ok(())
    }

    pub fn steps(&self) -> usize {
        (self.horizon / self.dt).round() as usize
    }

    pub fn basis(&self) -> StokesBasis {
        StokesBasis::build(self.torus, self.m_sim)
    }

    pub fn recorded_modes(&self) -> usize {
        self.record_modes.unwrap_or(self.m_sim)
    }

    /// Digest of the canonical JSON encoding.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(json))
    }
}

#[derive(Debug, Clone, Copy)]
struct ModeSlot {
    plus: usize,
    minus: usize,
    sign: f64,
    parity: Parity,
    e: [f64; 2],
    k: [f64; 2],
}

/// Pseudo-spectral evaluator of `P_M B(U, U)` for the first `M` modes of a basis.
#[derive(Debug, Clone)]
pub struct NonlinearOperator {
    slots: Vec<ModeSlot>,
    length: f64,
    fft: Fft2,
    velocity: Vec<Complex64>,
    grad1: Vec<Complex64>,
    grad2: Vec<Complex64>,
}

/// Smallest grid that dealiases quadratic products of wavevectors up to `kmax`.
pub fn minimal_dealiased_grid(kmax: i64) -> usize {
    let n = (3 * kmax + 1) as usize;
    n + n % 2
}

impl NonlinearOperator {
    pub fn new(basis: &StokesBasis, count: usize, grid_n: usize) -> Result<Self> {
        assert!(count >= 1 && count <= basis.len());
        let kmax = basis.max_component(count);
        if dealiased_kmax(grid_n) < kmax {
            let worst = basis.modes()[..count]
                .iter()
                .max_by_key(|m| m.max_component())
                .unwrap();
            return Err(Error::UnresolvedMode {
                n1: worst.n1,
                n2: worst.n2,
                grid_n,
                needed: format!("grid_n > {}", 3 * kmax),
            });
        }
        let unit = basis.torus().wavenumber_unit();
        let slots = basis.modes()[..count]
            .iter()
            .map(|m| ModeSlot {
                plus: wrap(m.n1, grid_n) * grid_n + wrap(m.n2, grid_n),
                minus: wrap(-m.n1, grid_n) * grid_n + wrap(-m.n2, grid_n),
                sign: if (m.n1 + m.n2).rem_euclid(2) == 0 { 1.0 } else { -1.0 },
                parity: m.parity,
                e: m.orientation,
                k: [unit * m.n1 as f64, unit * m.n2 as f64],
            })
            .collect();
        let cells = grid_n * grid_n;
        Ok(Self {
            slots,
            length: basis.torus().length,
            fft: Fft2::new(grid_n),
            velocity: vec![Complex64::default(); cells],
            grad1: vec![Complex64::default(); cells],
            grad2: vec![Complex64::default(); cells],
        })
    }

    /// Operator on the first `count` modes using the smallest admissible grid.
    pub fn minimal(basis: &StokesBasis, count: usize) -> Result<Self> {
        let grid = minimal_dealiased_grid(basis.max_component(count).max(1));
        Self::new(basis, count, grid)
    }

    pub fn mode_count(&self) -> usize {
        self.slots.len()
    }

    pub fn grid_n(&self) -> usize {
        self.fft.size()
    }

    /// Writes `b_k = (B(U), Phi_k)` for the retained modes into `out`.
    /// `coeffs` may be shorter than the mode count (missing modes are zero).
    pub fn apply(&mut self, coeffs: &[f64], out: &mut [f64]) {
        let m = self.slots.len();
        assert!(coeffs.len() <= m && out.len() >= m);
        let n = self.fft.size();
        let amp = 2f64.sqrt() / self.length;

        for buf in [&mut self.velocity, &mut self.grad1, &mut self.grad2] {
            buf.iter_mut().for_each(|z| *z = Complex64::default());
        }
        for (slot, &a) in self.slots.iter().zip(coeffs) {
            if a == 0.0 {
                continue;
            }
            // Complex amplitude of the scalar profile at +n; cos -> a/2, sin -> -i a/2.
            let c0 = match slot.parity {
                Parity::Cosine => Complex64::new(0.5 * amp * slot.sign * a, 0.0),
                Parity::Sine => Complex64::new(0.0, -0.5 * amp * slot.sign * a),
            };
            for (idx, c, k1, k2) in [
                (slot.plus, c0, slot.k[0], slot.k[1]),
                (slot.minus, c0.conj(), -slot.k[0], -slot.k[1]),
            ] {
                let pack = Complex64::new(slot.e[0], slot.e[1]);
                let grad = Complex64::new(-k2, k1);
                self.velocity[idx] += c * pack;
                self.grad1[idx] += c * slot.e[0] * grad;
                self.grad2[idx] += c * slot.e[1] * grad;
            }
        }

        self.fft.inverse(&mut self.velocity);
        self.fft.inverse(&mut self.grad1);
        self.fft.inverse(&mut self.grad2);

        // (U . grad) U, packed as w1 + i w2.
        for ((v, g1), g2) in self.velocity.iter_mut().zip(&self.grad1).zip(&self.grad2) {
            let (u1, u2) = (v.re, v.im);
            let w1 = u1 * g1.re + u2 * g1.im;
            let w2 = u1 * g2.re + u2 * g2.im;
            *v = Complex64::new(w1, w2);
        }
        self.fft.forward(&mut self.velocity);

        // Projecting on the divergence-free direction e is the Leray projection
        // restricted to this wavevector.
        let scale = 1.0 / (n * n) as f64;
        for (slot, b) in self.slots.iter().zip(out.iter_mut()) {
            let zp = self.velocity[slot.plus] * scale;
            let zm = self.velocity[slot.minus].conj() * scale;
            let w1 = 0.5 * (zp + zm);
            let w2 = (zp - zm) * Complex64::new(0.0, -0.5);
            let q = w1 * slot.e[0] + w2 * slot.e[1];
            let factor = slot.sign * 2f64.sqrt() * self.length;
            *b = match slot.parity {
                Parity::Cosine => factor * q.re,
                Parity::Sine => -factor * q.im,
            };
        }
    }

    pub fn evaluate(&mut self, coeffs: &[f64]) -> SpectralState {
        let mut out = vec![0.0; self.slots.len()];
        self.apply(coeffs, &mut out);
        out.into()
    }
}

/// `P_M B(U)` for a state on the first `state.len()` modes of `basis`, on the smallest dealiasing grid.
pub fn nonlinear_term(basis: &StokesBasis, state: &SpectralState) -> Result<SpectralState> {
    Ok(NonlinearOperator::minimal(basis, state.len())?.evaluate(state))
}

/// `|A^a U| = (sum_k lambda_k^{2a} u_k^2)^{1/2}`.
pub fn sobolev_norm(basis: &StokesBasis, state: &[f64], exponent: f64) -> f64 {
    state
        .iter()
        .zip(basis.lambdas())
        .map(|(u, l)| l.powf(2.0 * exponent) * u * u)
        .sum::<f64>()
        .sqrt()
}

/// Per-mode factors of one exponential Euler-Maruyama step.
#[derive(Debug, Clone)]
pub(crate) struct StepFactors {
    pub decay: Vec<f64>,
    pub forcing: Vec<f64>,
    pub spread: Vec<f64>,
}

impl StepFactors {
    pub fn new(basis: &StokesBasis, count: usize, nu: f64, gamma: f64, dt: f64) -> Self {
        let mut decay = Vec::with_capacity(count);
        let mut forcing = Vec::with_capacity(count);
        let mut spread = Vec::with_capacity(count);
        for lambda in basis.lambdas().take(count) {
            let p = OuParams { nu, lambda, gamma };
            let t = p.transition(dt);
            decay.push(t.decay);
            spread.push(t.spread);
            let rate = nu * lambda;
            forcing.push(-(-rate * dt).exp_m1() / rate);
        }
        Self { decay, forcing, spread }
    }
}

/// Time stepper for one configuration; holds the basis and FFT workspace.
#[derive(Debug, Clone)]
pub struct Solver {
    config: SolverConfig,
    basis: StokesBasis,
    factors: StepFactors,
    operator: Option<NonlinearOperator>,
    sqrt_dt: f64,
}

impl Solver {
    pub fn new(config: SolverConfig) -> Result<Self> {
        config.validate()?;
        let basis = config.basis();
        let factors = StepFactors::new(&basis, config.m_sim, config.nu, config.noise.gamma, config.dt);
        let operator = if config.nonlinear {
            Some(NonlinearOperator::new(&basis, config.m_sim, config.grid_n)?)
        } else {
            None
        };
        Ok(Self {
            sqrt_dt: config.dt.sqrt(),
            config,
            basis,
            factors,
            operator,
        })
    }

    pub fn config(&self) -> &SolverConfig {
        &self.config
    }

    pub fn basis(&self) -> &StokesBasis {
        &self.basis
    }

    /// `b(U)` on all simulated modes (zero when the nonlinearity is disabled).
    pub fn nonlinear_term(&mut self, state: &[f64]) -> SpectralState {
        match self.operator.as_mut() {
            Some(op) => op.evaluate(state),
            None => SpectralState::zeros(self.config.m_sim),
        }
    }

    /// One exponential Euler-Maruyama step with a precomputed nonlinear term.
    fn advance(&self, state: &mut [f64], nonlinear: Option<&[f64]>, increments: &[f64]) {
        let f = &self.factors;
        for k in 0..state.len() {
            let xi = increments[k] / self.sqrt_dt;
            let mut u = f.decay[k] * state[k];
            if let Some(b) = nonlinear {
                u -= f.forcing[k] * b[k];
            }
            state[k] = u + f.spread[k] * xi;
        }
    }

    /// Exact OU step of the linear part, shared with [`crate::linear`].
    pub(crate) fn advance_linear(&self, state: &mut [f64], increments: &[f64]) {
        self.advance(state, None, increments);
    }

    pub fn step(&mut self, state: &SpectralState, block: &NoiseIncrementBlock) -> Result<SpectralState> {
        assert_eq!(block.mode_count(), self.config.m_sim, "increment block size mismatch");
        let b = self.operator.as_mut().map(|op| op.evaluate(state));
        let mut next = state.clone();
        self.advance(&mut next, b.as_deref(), &block.increments);
        self.check_bounds(&next, block.step)?;
        Ok(next)
    }

    fn check_bounds(&self, state: &[f64], step: usize) -> Result<()> {
        let bound = self.config.blowup_bound;
        if let Some((mode, &value)) = state
            .iter()
            .enumerate()
            .find(|(_, x)| !x.is_finite() || x.abs() > bound)
        {
            return Err(Error::BlowUp { step, mode, value, bound });
        }
        Ok(())
    }

    fn increments(&self, replicate: u64, step: usize) -> Result<NoiseIncrementBlock> {
        if self.config.noise_enabled {
            sample_increments(&self.config.noise, replicate, step, self.config.dt, self.config.m_sim)
        } else {
            Ok(NoiseIncrementBlock::zeros(step, self.config.dt, self.config.m_sim))
        }
    }

    /// Full trajectory for one replicate.
    pub fn simulate(&mut self, replicate: u64) -> Result<Trajectory> {
        let m = self.config.m_sim;
        let rec = self.config.recorded_modes();
        let steps = self.config.steps();

        let mut state = self.config.initial.state(m);
        let mut linear = SpectralState::zeros(m);
        let mut states = Vec::with_capacity((steps + 1) * rec);
        let mut noise = Vec::with_capacity(steps * rec);
        let mut nonlinear = (self.config.nonlinear && self.config.record_nonlinear)
            .then(|| Vec::with_capacity(steps * rec));
        let mut residual = self.config.track_residual.then(|| Vec::with_capacity((steps + 1) * rec));

        states.extend_from_slice(&state[..rec]);
        if let Some(r) = residual.as_mut() {
            r.extend(state[..rec].iter().zip(&linear[..rec]).map(|(u, l)| u - l));
        }
        let mut b = vec![0.0; m];
        for step in 0..steps {
            let block = self.increments(replicate, step)?;
            let b_ref = match self.operator.as_mut() {
                Some(op) => {
                    op.apply(&state, &mut b);
                    if let Some(rec_b) = nonlinear.as_mut() {
                        rec_b.extend_from_slice(&b[..rec]);
                    }
                    Some(b.as_slice())
                }
                None => None,
            };
            self.advance(&mut state, b_ref, &block.increments);
            self.check_bounds(&state, step)?;
            noise.extend_from_slice(&block.increments[..rec]);
            states.extend_from_slice(&state[..rec]);
            if let Some(r) = residual.as_mut() {
                self.advance_linear(&mut linear, &block.increments);
                r.extend(state[..rec].iter().zip(&linear[..rec]).map(|(u, l)| u - l));
            }
        }

        Ok(Trajectory {
            config: self.config.clone(),
            replicate,
            dt: self.config.dt,
            recorded_modes: rec,
            states,
            noise: Some(noise),
            nonlinear,
            residual,
        })
    }
}

/// One exponential Euler-Maruyama step of `state` for `config`.
pub fn step_spde(config: &SolverConfig, state: &SpectralState, block: &NoiseIncrementBlock) -> Result<SpectralState> {
    Solver::new(config.clone())?.step(state, block)
}

/// Simulates one replicate of `config`.
pub fn simulate(config: &SolverConfig, replicate: u64) -> Result<Trajectory> {
    Solver::new(config.clone())?.simulate(replicate)
}
