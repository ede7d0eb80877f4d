mod common;

use common::{max_abs, normals, rng};
use proptest::prelude::*;
use snse_core::linear::simulate_linear_config;
use snse_core::nse::DEFAULT_BLOWUP_BOUND;
use snse_core::{
    sample_increments, simulate, sobolev_norm, step_spde, Error, InitialCondition, NoiseIncrementBlock, NoiseSpec,
    OuParams, SolverConfig, SpectralState, StokesBasis, TorusSpec,
};

fn config(grid_n: usize, horizon: f64, dt: f64, seed: u64) -> SolverConfig {
    let noise = NoiseSpec::new(1.2, seed).unwrap();
    SolverConfig::dealiased(1.0, noise, TorusSpec::two_pi(), grid_n, horizon, dt).unwrap()
}

fn index_of(basis: &StokesBasis, n1: i64, n2: i64, cosine: bool) -> usize {
    basis
        .modes()
        .iter()
        .position(|m| m.n1 == n1 && m.n2 == n2 && (m.parity == snse_core::Parity::Cosine) == cosine)
        .unwrap()
}

#[test]
fn disabled_nonlinearity_reproduces_the_linear_solver_bitwise() {
    let mut cfg = config(24, 0.2, 1e-3, 9);
    cfg.nonlinear = false;
    let full = simulate(&cfg, 4).unwrap();
    let linear = simulate_linear_config(&cfg, 4).unwrap();
    assert_eq!(full.states, linear.states);
    assert_eq!(full.noise, linear.noise);
}

#[test]
fn step_with_zero_nonlinearity_is_the_exact_ou_step() {
    let mut cfg = config(16, 0.01, 1e-3, 2);
    cfg.nonlinear = false;
    let basis = cfg.basis();
    let u: SpectralState = normals(&mut rng(1), cfg.m_sim).into();
    let block = sample_increments(&cfg.noise, 0, 3, cfg.dt, cfg.m_sim).unwrap();
    let next = step_spde(&cfg, &u, &block).unwrap();
    for k in 0..cfg.m_sim {
        let p = OuParams { nu: cfg.nu, lambda: basis.lambda(k), gamma: cfg.noise.gamma };
        let xi = block.increments[k] / cfg.dt.sqrt();
        assert_eq!(next[k], snse_core::ou_exact_step(&p, u[k], cfg.dt, xi));
    }
}

#[test]
fn single_mode_decays_at_the_linear_rate() {
    let mut cfg = config(16, 0.01, 1e-3, 2);
    cfg.noise_enabled = false;
    let basis = cfg.basis();
    for k in [0, 5, 17] {
        let mut u = SpectralState::zeros(cfg.m_sim);
        u[k] = 2.5;
        let next = step_spde(&cfg, &u, &NoiseIncrementBlock::zeros(0, cfg.dt, cfg.m_sim)).unwrap();
        let expect = 2.5 * (-cfg.nu * basis.lambda(k) * cfg.dt).exp();
        assert!((next[k] - expect).abs() < 1e-14);
        let others: Vec<f64> = (0..cfg.m_sim).filter(|&j| j != k).map(|j| next[j]).collect();
        assert!(max_abs(&others) < 1e-14);
    }
}

#[test]
fn deterministic_energy_is_non_increasing() {
    let mut cfg = config(16, 0.5, 1e-3, 0);
    cfg.nu = 0.05;
    cfg.noise_enabled = false;
    let basis = cfg.basis();
    cfg.initial = InitialCondition::Modes {
        amplitudes: vec![(index_of(&basis, 1, 0, true), 1.0), (index_of(&basis, 1, 1, false), 0.8)],
    };
    let traj = simulate(&cfg, 0).unwrap();
    let energy: Vec<f64> = (0..=traj.steps()).map(|i| traj.spectral_state(i).norm().powi(2)).collect();
    let dt2 = cfg.dt * cfg.dt;
    for w in energy.windows(2) {
        assert!(w[1] - w[0] <= 10.0 * dt2 * w[0], "{} -> {}", w[0], w[1]);
    }
    assert!(energy.last().unwrap() < &energy[0]);
    // The nonlinearity must actually have moved energy between modes.
    let spread = traj.final_state().iter().filter(|x| x.abs() > 1e-8).count();
    assert!(spread > 2);
}

#[test]
fn identical_inputs_give_identical_trajectories() {
    let cfg = config(16, 0.1, 1e-3, 21);
    assert_eq!(simulate(&cfg, 3).unwrap(), simulate(&cfg, 3).unwrap());
    assert_ne!(simulate(&cfg, 3).unwrap().states, simulate(&cfg, 4).unwrap().states);
}

#[test]
fn stability_on_the_64_grid() {
    let mut cfg = config(64, 1.0, 1e-3, 1);
    cfg.record_nonlinear = false;
    assert_eq!(cfg.m_sim, 1372);
    let traj = simulate(&cfg, 0).unwrap();
    assert!(traj.is_finite());
    assert_eq!(traj.state(0), vec![0.0; cfg.m_sim].as_slice());
    // The first mode has stationary standard deviation 1/sqrt(2); paths stay O(1).
    assert!(traj.sup_norm() < 5.0, "{}", traj.sup_norm());
}

#[test]
fn residual_satisfies_its_definition_and_equation() {
    let mut cfg = config(16, 0.2, 1e-3, 5);
    cfg.track_residual = true;
    let traj = simulate(&cfg, 1).unwrap();
    let linear = simulate_linear_config(&cfg, 1).unwrap();
    let basis = cfg.basis();
    assert!(traj.residual_row(0).unwrap().iter().all(|&r| r == 0.0));
    for i in 0..=traj.steps() {
        let (u, r, l) = (traj.state(i), traj.residual_row(i).unwrap(), linear.state(i));
        for k in 0..cfg.m_sim {
            assert!((u[k] - r[k] - l[k]).abs() <= 1e-15 * (1.0 + u[k].abs()));
        }
    }
    // R_{i+1} = e^{-a dt} R_i - (1 - e^{-a dt})/a b_i: the noise cancels.
    for i in 0..traj.steps() {
        let (r0, r1, b) = (traj.residual_row(i).unwrap(), traj.residual_row(i + 1).unwrap(), traj.nonlinear_row(i).unwrap());
        for k in 0..cfg.m_sim {
            let a = cfg.nu * basis.lambda(k);
            let expect = (-a * cfg.dt).exp() * r0[k] + (-a * cfg.dt).exp_m1() / a * b[k];
            assert!((r1[k] - expect).abs() <= 1e-14 * (1.0 + max_abs(traj.state(i + 1))));
        }
    }
}

#[test]
fn oversized_coefficients_raise_blow_up() {
    let mut cfg = config(16, 0.1, 1e-3, 5);
    cfg.blowup_bound = 10.0;
    cfg.initial = InitialCondition::Modes { amplitudes: vec![(0, 100.0)] };
    match simulate(&cfg, 0) {
        Err(Error::BlowUp { step: 0, mode: 0, bound, .. }) => assert_eq!(bound, 10.0),
        other => panic!("expected BlowUp, got {other:?}"),
    }
    assert_eq!(DEFAULT_BLOWUP_BOUND, 1e12);
}

#[test]
fn invalid_configurations_are_rejected() {
    let base = config(16, 0.1, 1e-3, 5);
    let mut c = base.clone();
    c.dt = 3e-2;
    assert!(matches!(c.validate(), Err(Error::Config { .. })));
    let mut c = base.clone();
    c.grid_n = 12;
    assert!(matches!(c.validate(), Err(Error::Config { .. })));
    let mut c = base;
    c.horizon = 0.0;
    assert!(c.validate().is_err());
}

#[test]
fn sobolev_norm_examples() {
    let basis = StokesBasis::build(TorusSpec::two_pi(), 10);
    let u = [3.0, 4.0, 0.0, 0.0, 0.0];
    assert_eq!(sobolev_norm(&basis, &u, 0.0), 5.0);
    // Indices 0..4 have |n|^2 = 1, index 4 has |n|^2 = 2.
    assert_eq!(basis.lambda(4), 2.0);
    assert!((sobolev_norm(&basis, &[0.0, 0.0, 0.0, 0.0, 1.0], 1.0) - 2.0).abs() < 1e-15);
}

proptest! {
    #[test]
    fn sobolev_triangle_inequality(
        a in prop::collection::vec(-5.0f64..5.0, 20),
        b in prop::collection::vec(-5.0f64..5.0, 20),
        s in -1.0f64..2.5,
    ) {
        let basis = StokesBasis::build(TorusSpec::two_pi(), 20);
        let sum: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x + y).collect();
        let lhs = sobolev_norm(&basis, &sum, s);
        prop_assert!(lhs <= (sobolev_norm(&basis, &a, s) + sobolev_norm(&basis, &b, s)) * (1.0 + 1e-12));
    }

    #[test]
    fn poincare_inequality(
        a in prop::collection::vec(-5.0f64..5.0, 1..60),
        length in 0.5f64..20.0,
        s in 0.0f64..2.0,
    ) {
        let basis = StokesBasis::build(TorusSpec::new(length).unwrap(), a.len());
        let lhs = sobolev_norm(&basis, &a, s);
        let rhs = basis.lambda_1().powf(s) * sobolev_norm(&basis, &a, 0.0);
        prop_assert!(lhs >= rhs * (1.0 - 1e-12));
    }
}
