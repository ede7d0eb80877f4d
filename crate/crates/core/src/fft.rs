//! Square 2D complex FFT on row-major buffers, built from 1D `rustfft` plans.

use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

pub struct Fft2 {
    n: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    scratch: Vec<Complex64>,
}

impl std::fmt::Debug for Fft2 {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Fft2").field("n", &self.n).finish()
    }
}

impl Clone for Fft2 {
    fn clone(&self) -> Self {
        Self {
            n: self.n,
            forward: Arc::clone(&self.forward),
            inverse: Arc::clone(&self.inverse),
            scratch: vec![Complex64::default(); self.scratch.len()],
        }
    }
}

impl Fft2 {
    pub fn new(n: usize) -> Self {
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(n);
        let inverse = planner.plan_fft_inverse(n);
        let len = forward
            .get_inplace_scratch_len()
            .max(inverse.get_inplace_scratch_len());
        Self {
            n,
            forward,
            inverse,
            scratch: vec![Complex64::default(); len],
        }
    }

    pub fn size(&self) -> usize {
        self.n
    }

    /// Unnormalized forward transform, `X[m] = sum_j x[j] exp(-2 pi i m.j / n)`.
    pub fn forward(&mut self, data: &mut [Complex64]) {
        let plan = Arc::clone(&self.forward);
        self.run(plan.as_ref(), data);
    }

    /// Unnormalized inverse transform, `x[j] = sum_m X[m] exp(+2 pi i m.j / n)`.
    pub fn inverse(&mut self, data: &mut [Complex64]) {
        let plan = Arc::clone(&self.inverse);
        self.run(plan.as_ref(), data);
    }

    fn run(&mut self, plan: &dyn Fft<f64>, data: &mut [Complex64]) {
        let n = self.n;
        assert_eq!(data.len(), n * n, "buffer is not {n}x{n}");
        plan.process_with_scratch(data, &mut self.scratch);
        transpose(data, n);
        plan.process_with_scratch(data, &mut self.scratch);
        transpose(data, n);
    }
}

fn transpose(data: &mut [Complex64], n: usize) {
    for i in 0..n {
        for j in (i + 1)..n {
            data.swap(i * n + j, j * n + i);
        }
    }
}

/// Index of the signed integer wavenumber `k` in an FFT axis of length `n`.
pub fn wrap(k: i64, n: usize) -> usize {
    k.rem_euclid(n as i64) as usize
}

/// Signed wavenumber stored at FFT index `i`.
pub fn unwrap(i: usize, n: usize) -> i64 {
    if i <= n / 2 {
        i as i64
    } else {
        i as i64 - n as i64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_recovers_input() {
        let n = 12;
        let mut fft = Fft2::new(n);
        let orig: Vec<Complex64> = (0..n * n)
            .map(|i| Complex64::new((i as f64).sin(), (i as f64 * 0.3).cos()))
            .collect();
        let mut data = orig.clone();
        fft.forward(&mut data);
        fft.inverse(&mut data);
        for (a, b) in data.iter().zip(&orig) {
            assert!((a / (n * n) as f64 - b).norm() < 1e-13);
        }
    }

    #[test]
    fn single_plane_wave_lands_on_one_bin() {
        let n = 8;
        let (k1, k2) = (2i64, -3i64);
        let mut data: Vec<Complex64> = (0..n * n)
            .map(|idx| {
                let (j1, j2) = ((idx / n) as f64, (idx % n) as f64);
                let phase = 2.0 * std::f64::consts::PI * (k1 as f64 * j1 + k2 as f64 * j2) / n as f64;
                Complex64::from_polar(1.0, phase)
            })
            .collect();
        Fft2::new(n).forward(&mut data);
        let hit = wrap(k1, n) * n + wrap(k2, n);
        for (i, v) in data.iter().enumerate() {
            let expect = if i == hit { (n * n) as f64 } else { 0.0 };
            assert!((v.re - expect).abs() < 1e-10 && v.im.abs() < 1e-10);
        }
        assert_eq!(unwrap(wrap(-3, n), n), -3);
    }
}
