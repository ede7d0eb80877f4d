//! Divergence-free Fourier eigenbasis of the Stokes operator on the periodic
//! square `[-L/2, L/2]^2`.
//!
//! Each half-lattice wavevector `n = (n1, n2)` (with `n1 > 0`, or `n1 == 0` and
//! `n2 > 0`) carries two real eigenfunctions
//!
//! ```text
//! Phi_cos(x) = e_n * sqrt(2)/L * cos(k.x),   Phi_sin(x) = e_n * sqrt(2)/L * sin(k.x)
//! ```
//!
//! with `k = 2 pi n / L` and `e_n = (-n2, n1)/|n|`. Both have eigenvalue
//! `|k|^2` and unit L2 norm.

use std::f64::consts::PI;
use std::ops::{Deref, DerefMut};

use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::fft::{unwrap, Fft2};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TorusSpec {
    /// Period length `L`.
    pub length: f64,
}

impl TorusSpec {
    pub fn new(length: f64) -> Result<Self> {
        if !(length.is_finite() && length > 0.0) {
            return Err(Error::config("torus.length", "period length must be positive"));
        }
        Ok(Self { length })
    }

    /// The standard `2 pi` torus, whose smallest eigenvalue is 1.
    pub fn two_pi() -> Self {
        Self { length: 2.0 * PI }
    }

    pub fn wavenumber_unit(&self) -> f64 {
        2.0 * PI / self.length
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Parity {
    Cosine,
    Sine,
}

impl Parity {
    pub fn as_str(self) -> &'static str {
        match self {
            Parity::Cosine => "cos",
            Parity::Sine => "sin",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StokesMode {
    pub n1: i64,
    pub n2: i64,
    pub parity: Parity,
    pub lambda: f64,
    /// Unit vector orthogonal to the wavevector.
    pub orientation: [f64; 2],
}

impl StokesMode {
    fn new(n1: i64, n2: i64, parity: Parity, torus: &TorusSpec) -> Self {
        let norm = ((n1 * n1 + n2 * n2) as f64).sqrt();
        let unit = torus.wavenumber_unit();
        Self {
            n1,
            n2,
            parity,
            lambda: unit * unit * (n1 * n1 + n2 * n2) as f64,
            orientation: [-(n2 as f64) / norm, n1 as f64 / norm],
        }
    }

    pub fn norm_sq(&self) -> i64 {
        self.n1 * self.n1 + self.n2 * self.n2
    }

    pub fn max_component(&self) -> i64 {
        self.n1.abs().max(self.n2.abs())
    }

    fn sort_key(&self) -> (i64, i64, i64, i64, Parity) {
        (
            self.norm_sq(),
            self.n1.abs() + self.n2.abs(),
            self.n1,
            self.n2,
            self.parity,
        )
    }
}

/// Real mode coefficients `u_k = (U, Phi_k)` at one instant.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SpectralState(pub Vec<f64>);

impl SpectralState {
    pub fn zeros(len: usize) -> Self {
        Self(vec![0.0; len])
    }

    /// Euclidean norm of the coefficients, i.e. the L2 norm of the field.
    pub fn norm(&self) -> f64 {
        self.0.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn dot(&self, other: &[f64]) -> f64 {
        self.0.iter().zip(other).map(|(a, b)| a * b).sum()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl From<Vec<f64>> for SpectralState {
    fn from(v: Vec<f64>) -> Self {
        Self(v)
    }
}

impl Deref for SpectralState {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl DerefMut for SpectralState {
    fn deref_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StokesBasis {
    torus: TorusSpec,
    modes: Vec<StokesMode>,
}

impl StokesBasis {
    /// First `count` eigenpairs in ascending eigenvalue order. Ties are broken by
    /// `(|n1|+|n2|, n1, n2, parity)`.
    pub fn build(torus: TorusSpec, count: usize) -> Self {
        assert!(count >= 1, "a basis needs at least one mode");
        let mut radius = ((count as f64 / PI).sqrt().ceil() as i64).max(1) + 2;
        loop {
            let modes = enumerate_disk(&torus, radius * radius);
            if modes.len() >= count {
                return Self {
                    torus,
                    modes: modes.into_iter().take(count).collect(),
                };
            }
            radius *= 2;
        }
    }

    /// All modes a `grid_n x grid_n` grid carries under the 2/3 rule: wavevectors
    /// in the disk of radius `kmax`, where `kmax` is the largest integer with
    /// `3 kmax < grid_n`.
    pub fn dealiased(torus: TorusSpec, grid_n: usize) -> Result<Self> {
        let kmax = dealiased_kmax(grid_n);
        if kmax < 1 {
            return Err(Error::config("grid_n", "grid must have at least 4 points per axis"));
        }
        Ok(Self {
            torus,
            modes: enumerate_disk(&torus, kmax * kmax),
        })
    }

    pub fn torus(&self) -> TorusSpec {
        self.torus
    }

    pub fn len(&self) -> usize {
        self.modes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.modes.is_empty()
    }

    pub fn modes(&self) -> &[StokesMode] {
        &self.modes
    }

    pub fn mode(&self, k: usize) -> &StokesMode {
        &self.modes[k]
    }

    pub fn lambda(&self, k: usize) -> f64 {
        self.modes[k].lambda
    }

    pub fn lambdas(&self) -> impl Iterator<Item = f64> + '_ {
        self.modes.iter().map(|m| m.lambda)
    }

    pub fn lambda_1(&self) -> f64 {
        let unit = self.torus.wavenumber_unit();
        unit * unit
    }

    /// The first `count` modes as a basis of their own.
    pub fn truncated(&self, count: usize) -> Self {
        assert!(count >= 1 && count <= self.len());
        Self {
            torus: self.torus,
            modes: self.modes[..count].to_vec(),
        }
    }

    /// Largest wavevector component among the first `count` modes.
    pub fn max_component(&self, count: usize) -> i64 {
        self.modes[..count]
            .iter()
            .map(StokesMode::max_component)
            .max()
            .unwrap_or(0)
    }

    /// `A^a u`: multiplies coefficient `k` by `lambda_k^a`.
    pub fn apply_fractional_power(&self, exponent: f64, state: &SpectralState) -> SpectralState {
        assert!(state.len() <= self.len(), "state longer than basis");
        state
            .iter()
            .zip(&self.modes)
            .map(|(u, m)| u * m.lambda.powf(exponent))
            .collect::<Vec<_>>()
            .into()
    }

    /// Samples eigenfunction `k` on the `grid_n x grid_n` grid
    /// `x_j = -L/2 + j L / grid_n`.
    pub fn eval_eigenfunction(&self, k: usize, grid_n: usize) -> Result<VelocityField> {
        let mode = &self.modes[k];
        if grid_n as i64 <= 2 * mode.max_component() {
            return Err(Error::UnresolvedMode {
                n1: mode.n1,
                n2: mode.n2,
                grid_n,
                needed: format!("grid_n > {}", 2 * mode.max_component()),
            });
        }
        let length = self.torus.length;
        let unit = self.torus.wavenumber_unit();
        let amp = 2f64.sqrt() / length;
        let h = length / grid_n as f64;
        let mut u1 = Vec::with_capacity(grid_n * grid_n);
        let mut u2 = Vec::with_capacity(grid_n * grid_n);
        for j1 in 0..grid_n {
            let x1 = -0.5 * length + j1 as f64 * h;
            for j2 in 0..grid_n {
                let x2 = -0.5 * length + j2 as f64 * h;
                let phase = unit * (mode.n1 as f64 * x1 + mode.n2 as f64 * x2);
                let s = amp
                    * match mode.parity {
                        Parity::Cosine => phase.cos(),
                        Parity::Sine => phase.sin(),
                    };
                u1.push(s * mode.orientation[0]);
                u2.push(s * mode.orientation[1]);
            }
        }
        Ok(VelocityField {
            grid_n,
            length,
            u1,
            u2,
        })
    }

    /// Digest of the torus and the ordered mode list.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.torus.length.to_bits().to_le_bytes());
        for m in &self.modes {
            h.update(m.n1.to_le_bytes());
            h.update(m.n2.to_le_bytes());
            h.update([m.parity as u8]);
        }
        hex::encode(h.finalize())
    }
}

/// Largest retained wavevector component for a dealiased grid of size `grid_n`.
pub fn dealiased_kmax(grid_n: usize) -> i64 {
    (grid_n as i64 - 1) / 3
}

fn enumerate_disk(torus: &TorusSpec, radius_sq: i64) -> Vec<StokesMode> {
    let r = (radius_sq as f64).sqrt().floor() as i64;
    let mut modes = Vec::new();
    for n1 in 0..=r {
        for n2 in -r..=r {
            if (n1 == 0 && n2 <= 0) || n1 * n1 + n2 * n2 > radius_sq {
                continue;
            }
            modes.push(StokesMode::new(n1, n2, Parity::Cosine, torus));
            modes.push(StokesMode::new(n1, n2, Parity::Sine, torus));
        }
    }
    modes.sort_by_key(StokesMode::sort_key);
    modes
}

/// `P_N u`: keeps the first `n` coefficients.
pub fn project(state: &SpectralState, n: usize) -> SpectralState {
    assert!(n >= 1 && n <= state.len(), "cutoff {n} outside 1..={}", state.len());
    let mut out = state.clone();
    out[n..].iter_mut().for_each(|x| *x = 0.0);
    out
}

/// `Q_N u = u - P_N u`.
pub fn project_complement(state: &SpectralState, n: usize) -> SpectralState {
    assert!(n >= 1 && n <= state.len(), "cutoff {n} outside 1..={}", state.len());
    let mut out = state.clone();
    out[..n].iter_mut().for_each(|x| *x = 0.0);
    out
}

/// A velocity field sampled on a uniform periodic grid, row-major in `(x1, x2)`.
#[derive(Debug, Clone)]
pub struct VelocityField {
    pub grid_n: usize,
    pub length: f64,
    pub u1: Vec<f64>,
    pub u2: Vec<f64>,
}

impl VelocityField {
    /// Trapezoidal (exact for trigonometric polynomials) L2 inner product.
    pub fn inner(&self, other: &VelocityField) -> f64 {
        let cell = (self.length / self.grid_n as f64).powi(2);
        let s: f64 = self
            .u1
            .iter()
            .zip(&other.u1)
            .chain(self.u2.iter().zip(&other.u2))
            .map(|(a, b)| a * b)
            .sum();
        s * cell
    }

    pub fn l2_norm(&self) -> f64 {
        self.inner(self).sqrt()
    }

    /// Max modulus of `i k . u_hat` over all resolved wavevectors.
    pub fn spectral_divergence(&self) -> f64 {
        let n = self.grid_n;
        let mut fft = Fft2::new(n);
        let mut a: Vec<Complex64> = self.u1.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        let mut b: Vec<Complex64> = self.u2.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        fft.forward(&mut a);
        fft.forward(&mut b);
        let unit = 2.0 * PI / self.length;
        let scale = 1.0 / (n * n) as f64;
        let mut worst = 0.0f64;
        for i1 in 0..n {
            for i2 in 0..n {
                let idx = i1 * n + i2;
                let k1 = unit * unwrap(i1, n) as f64;
                let k2 = unit * unwrap(i2, n) as f64;
                let div = (a[idx] * k1 + b[idx] * k2) * scale;
                worst = worst.max(div.norm());
            }
        }
        worst
    }
}
