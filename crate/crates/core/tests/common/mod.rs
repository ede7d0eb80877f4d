//! Independent reference computations shared by the integration tests.
#![allow(dead_code)]

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use snse_core::{Parity, StokesBasis};

/// Real-space quadrature of `((U . grad) U, Phi_k)` for every mode of `basis`.
///
/// The velocity and its gradient are summed mode by mode from the analytic
/// eigenfunctions at the nodes `x_j = -L/2 + j L/q`. The integrand is a
/// trigonometric polynomial of degree at most `3 kmax` per axis, so the
/// rectangle rule with `q > 3 kmax` nodes is exact.
pub fn brute_force_nonlinear(basis: &StokesBasis, coeffs: &[f64]) -> Vec<f64> {
    let length = basis.torus().length;
    let kmax = basis.max_component(basis.len());
    let q = (3 * kmax + 2) as usize;
    let h = length / q as f64;
    let amp = 2f64.sqrt() / length;
    let unit = 2.0 * PI / length;

    // (direction e, wavevector k, parity) of every mode, rebuilt from (n1, n2).
    let modes: Vec<([f64; 2], [f64; 2], Parity)> = basis
        .modes()
        .iter()
        .map(|m| {
            let r = ((m.n1 * m.n1 + m.n2 * m.n2) as f64).sqrt();
            ([-(m.n2 as f64) / r, m.n1 as f64 / r], [unit * m.n1 as f64, unit * m.n2 as f64], m.parity)
        })
        .collect();
    // Value and derivative of the scalar profile at phase theta.
    let profile = |p: Parity, theta: f64| match p {
        Parity::Cosine => (theta.cos(), -theta.sin()),
        Parity::Sine => (theta.sin(), theta.cos()),
    };

    let mut out = vec![0.0; basis.len()];
    for i in 0..q {
        for j in 0..q {
            let x = [-length / 2.0 + i as f64 * h, -length / 2.0 + j as f64 * h];
            let mut u = [0.0; 2];
            let mut grad = [[0.0; 2]; 2]; // grad[c][d] = d_d u_c
            for ((e, k, p), &a) in modes.iter().zip(coeffs) {
                let (f, df) = profile(*p, k[0] * x[0] + k[1] * x[1]);
                for c in 0..2 {
                    u[c] += a * amp * e[c] * f;
                    for d in 0..2 {
                        grad[c][d] += a * amp * e[c] * df * k[d];
                    }
                }
            }
            let w = [
                u[0] * grad[0][0] + u[1] * grad[0][1],
                u[0] * grad[1][0] + u[1] * grad[1][1],
            ];
            for ((e, k, p), o) in modes.iter().zip(out.iter_mut()) {
                let (f, _) = profile(*p, k[0] * x[0] + k[1] * x[1]);
                *o += (w[0] * e[0] + w[1] * e[1]) * amp * f * h * h;
            }
        }
    }
    out
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normals(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

pub fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

pub fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}
