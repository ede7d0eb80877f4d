//! Keyed generation of the Brownian increments driving every mode.
//!
//! Every increment is a pure function of `(master_seed, replicate, step, mode)`,
//! so replicates can be simulated in any order or concurrently. When the step
//! is a dyadic refinement of `base_dt`, the coarse increments are split with a
//! keyed Brownian bridge, which keeps the same underlying path across step sizes.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::basis::{SpectralState, StokesBasis};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    /// Spectral decay exponent of the noise covariance, `gamma > 1`.
    pub gamma: f64,
    pub master_seed: u64,
    /// Step of the coarsest Brownian grid. `None` means the solver step itself.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub base_dt: Option<f64>,
}

impl NoiseSpec {
    pub fn new(gamma: f64, master_seed: u64) -> Result<Self> {
        if !(gamma.is_finite() && gamma > 1.0) {
            return Err(Error::config("gamma", "gamma must exceed 1"));
        }
        Ok(Self {
            gamma,
            master_seed,
            base_dt: None,
        })
    }

    pub fn with_base_dt(mut self, base_dt: f64) -> Self {
        self.base_dt = Some(base_dt);
        self
    }

    /// Number of bridge halvings between `base_dt` and `dt`.
    pub fn refinement_level(&self, dt: f64) -> Result<u32> {
        let Some(base) = self.base_dt else {
            return Ok(0);
        };
        let ratio = base / dt;
        let rounded = ratio.round();
        if rounded < 1.0 || (ratio - rounded).abs() > 1e-9 * rounded {
            return Err(Error::config("dt", "noise base_dt must be a power-of-two multiple of dt"));
        }
        let r = rounded as u64;
        if !r.is_power_of_two() {
            return Err(Error::config("dt", "noise base_dt must be a power-of-two multiple of dt"));
        }
        Ok(r.trailing_zeros())
    }
}

/// Brownian increments `Delta W_k` of one time step.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseIncrementBlock {
    pub step: usize,
    pub dt: f64,
    pub increments: Vec<f64>,
}

impl NoiseIncrementBlock {
    pub fn zeros(step: usize, dt: f64, mode_count: usize) -> Self {
        Self {
            step,
            dt,
            increments: vec![0.0; mode_count],
        }
    }

    pub fn mode_count(&self) -> usize {
        self.increments.len()
    }
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn keyed_rng(master_seed: u64, replicate: u64, level: u32, index: u64) -> ChaCha8Rng {
    let mut seed = [0u8; 32];
    let mut state = splitmix(master_seed) ^ splitmix(replicate.wrapping_add(0x5851_f42d_4c95_7f2d));
    for chunk in seed.chunks_exact_mut(8) {
        state = splitmix(state);
        chunk.copy_from_slice(&state.to_le_bytes());
    }
    let mut rng = ChaCha8Rng::from_seed(seed);
    rng.set_stream(((level as u64) << 56) | index);
    rng
}

fn standard_normals(rng: &mut ChaCha8Rng, count: usize) -> impl Iterator<Item = f64> + '_ {
    (0..count).map(move |_| rng.sample::<f64, _>(StandardNormal))
}

/// Increments of step `step` (covering `[step*dt, (step+1)*dt]`) for `mode_count` modes.
pub fn sample_increments(
    spec: &NoiseSpec,
    replicate: u64,
    step: usize,
    dt: f64,
    mode_count: usize,
) -> Result<NoiseIncrementBlock> {
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Error::config("dt", "time step must be positive"));
    }
    let level = spec.refinement_level(dt)?;
    let base = dt * (1u64 << level) as f64;

    let coarse_index = (step as u64) >> level;
    let mut rng = keyed_rng(spec.master_seed, replicate, 0, coarse_index);
    let sd = base.sqrt();
    let mut increments: Vec<f64> = standard_normals(&mut rng, mode_count).map(|z| sd * z).collect();

    let mut width = base;
    for l in 1..=level {
        let parent = (step as u64) >> (level - l + 1);
        let child = (step as u64) >> (level - l);
        let left = child % 2 == 0;
        let half_sd = 0.5 * width.sqrt();
        let mut rng = keyed_rng(spec.master_seed, replicate, l, parent);
        for (inc, z) in increments.iter_mut().zip(standard_normals(&mut rng, mode_count)) {
            let half = 0.5 * *inc;
            *inc = if left { half + half_sd * z } else { half - half_sd * z };
        }
        width *= 0.5;
    }

    Ok(NoiseIncrementBlock {
        step,
        dt,
        increments,
    })
}

/// `sigma Delta W`: entry `k` is `lambda_k^-gamma Delta W_k`.
pub fn color(spec: &NoiseSpec, basis: &StokesBasis, block: &NoiseIncrementBlock) -> SpectralState {
    assert!(block.mode_count() <= basis.len(), "block has more modes than the basis");
    block
        .increments
        .iter()
        .zip(basis.lambdas())
        .map(|(dw, lambda)| lambda.powf(-spec.gamma) * dw)
        .collect::<Vec<_>>()
        .into()
}
