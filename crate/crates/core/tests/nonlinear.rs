mod common;

use common::{brute_force_nonlinear, max_abs, max_diff, normals, rng};
use proptest::prelude::*;
use snse_core::{nonlinear_term, NonlinearOperator, SpectralState, StokesBasis, TorusSpec};

fn relative_gap(fast: &[f64], slow: &[f64]) -> f64 {
    max_diff(fast, slow) / max_abs(slow).max(1e-300)
}

fn index_of(basis: &StokesBasis, n1: i64, n2: i64, cosine: bool) -> usize {
    basis
        .modes()
        .iter()
        .position(|m| m.n1 == n1 && m.n2 == n2 && (m.parity == snse_core::Parity::Cosine) == cosine)
        .unwrap()
}

#[test]
fn zero_state_gives_zero() {
    let basis = StokesBasis::build(TorusSpec::two_pi(), 40);
    let b = nonlinear_term(&basis, &SpectralState::zeros(40)).unwrap();
    assert!(b.iter().all(|&x| x == 0.0));
}

#[test]
fn single_mode_is_a_steady_solution_of_the_euler_part() {
    let basis = StokesBasis::build(TorusSpec::two_pi(), 40);
    for k in 0..40 {
        let mut u = SpectralState::zeros(40);
        u[k] = 1.7;
        let b = nonlinear_term(&basis, &u).unwrap();
        assert!(max_abs(&b) < 1e-13, "mode {k}: {}", max_abs(&b));
    }
}

#[test]
fn orthogonal_unit_modes_give_a_pure_gradient() {
    // U = a Phi_(1,0) + b Phi_(0,1) (cosines) has (U.grad)U = ab c^2 grad(sin x1 sin x2),
    // which the Leray projection removes.
    let basis = StokesBasis::build(TorusSpec::two_pi(), 12);
    let mut u = SpectralState::zeros(12);
    u[index_of(&basis, 1, 0, true)] = 0.8;
    u[index_of(&basis, 0, 1, true)] = -1.3;
    let b = nonlinear_term(&basis, &u).unwrap();
    assert!(max_abs(&b) < 1e-14);
    assert!(max_abs(&brute_force_nonlinear(&basis, &u)) < 1e-14);
}

#[test]
fn two_mode_interaction_matches_quadrature() {
    let basis = StokesBasis::build(TorusSpec::two_pi(), 24);
    let mut u = SpectralState::zeros(24);
    u[index_of(&basis, 1, 0, true)] = 1.0;
    u[index_of(&basis, 1, 1, false)] = 0.6;
    let fast = nonlinear_term(&basis, &u).unwrap();
    let slow = brute_force_nonlinear(&basis, &u);
    assert!(max_abs(&slow) > 1e-3, "interaction must be nontrivial");
    assert!(relative_gap(&fast, &slow) < 1e-10);
}

#[test]
fn frozen_reference_coefficients() {
    // (1,0) cosine and (1,1) sine on the 2 pi torus; values from the quadrature oracle.
    let basis = StokesBasis::build(TorusSpec::two_pi(), 24);
    let mut u = SpectralState::zeros(24);
    u[index_of(&basis, 1, 0, true)] = 1.0;
    u[index_of(&basis, 1, 1, false)] = 0.6;
    let fast = nonlinear_term(&basis, &u).unwrap();
    let nonzero: Vec<(i64, i64, bool, f64)> = basis
        .modes()
        .iter()
        .zip(fast.iter())
        .filter(|(_, b)| b.abs() > 1e-12)
        .map(|(m, &b)| (m.n1, m.n2, m.parity == snse_core::Parity::Cosine, b))
        .collect();
    // Closed forms of the oracle output: 0.3 / (2 pi) and 0.3 / (2 pi sqrt 5).
    let base = 0.3 / (2.0 * std::f64::consts::PI);
    let expected = [(0, 1, true, base), (2, 1, true, base / 5f64.sqrt())];
    assert_eq!(nonzero.len(), expected.len(), "{nonzero:?}");
    for (got, want) in nonzero.iter().zip(expected) {
        assert_eq!((got.0, got.1, got.2), (want.0, want.1, want.2));
        assert!((got.3 - want.3).abs() < 1e-12, "{got:?} vs {want:?}");
    }
}

#[test]
fn random_few_mode_states_match_quadrature() {
    let basis = StokesBasis::build(TorusSpec::two_pi(), 30);
    let mut r = rng(11);
    for trial in 0..5 {
        let count = 2 + trial % 2;
        let mut u = SpectralState::zeros(30);
        let picks = rand::seq::index::sample(&mut r, 30, count);
        let amps = normals(&mut r, count);
        for (k, a) in picks.iter().zip(amps) {
            u[k] = a;
        }
        let fast = nonlinear_term(&basis, &u).unwrap();
        let slow = brute_force_nonlinear(&basis, &u);
        let scale = max_abs(&slow).max(max_abs(&u) * max_abs(&u));
        assert!(max_diff(&fast, &slow) / scale < 1e-10, "trial {trial}");
    }
}

#[test]
fn dense_states_match_quadrature_on_a_non_square_period() {
    let basis = StokesBasis::build(TorusSpec::new(3.3).unwrap(), 60);
    let mut r = rng(5);
    for _ in 0..3 {
        let u: SpectralState = normals(&mut r, 60).into();
        let fast = nonlinear_term(&basis, &u).unwrap();
        let slow = brute_force_nonlinear(&basis, &u);
        assert!(relative_gap(&fast, &slow) < 1e-10);
    }
}

#[test]
fn larger_grids_give_the_same_coefficients() {
    let basis = StokesBasis::build(TorusSpec::two_pi(), 50);
    let u: SpectralState = normals(&mut rng(2), 50).into();
    let minimal = nonlinear_term(&basis, &u).unwrap();
    for grid in [32, 48, 64] {
        let b = NonlinearOperator::new(&basis, 50, grid).unwrap().evaluate(&u);
        assert!(relative_gap(&b, &minimal) < 1e-12, "grid {grid}");
    }
}

#[test]
fn aliasing_grid_is_rejected() {
    let basis = StokesBasis::build(TorusSpec::two_pi(), 50);
    let kmax = basis.max_component(50) as usize;
    assert!(NonlinearOperator::new(&basis, 50, 3 * kmax).is_err());
    assert!(NonlinearOperator::new(&basis, 50, 3 * kmax + 1).is_ok());
}

fn resolved_state(seed: u64, len: usize) -> SpectralState {
    let basis = StokesBasis::build(TorusSpec::two_pi(), len);
    let raw = normals(&mut rng(seed), len);
    // Decay like a rough field so high modes do not dominate.
    raw.iter()
        .zip(basis.lambdas())
        .map(|(x, l)| x * l.powf(-0.75))
        .collect::<Vec<_>>()
        .into()
}

#[test]
fn galerkin_cancellation_on_random_resolved_states() {
    let basis = StokesBasis::dealiased(TorusSpec::two_pi(), 32).unwrap();
    let m = basis.len();
    let mut op = NonlinearOperator::new(&basis, m, 32).unwrap();
    for seed in 0..100 {
        let u = resolved_state(seed, m);
        let b = op.evaluate(&u);
        let pairing: f64 = u.iter().zip(b.iter()).map(|(x, y)| x * y).sum();
        let scale: f64 = u.iter().zip(b.iter()).map(|(x, y)| (x * y).abs()).sum();
        assert!(pairing.abs() <= 1e-10 * scale, "seed {seed}: {pairing} vs {scale}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn cancellation_holds_for_arbitrary_states(
        coeffs in prop::collection::vec(-3.0f64..3.0, 1..80),
        length in 0.5f64..20.0,
    ) {
        let basis = StokesBasis::build(TorusSpec::new(length).unwrap(), coeffs.len());
        let u: SpectralState = coeffs.into();
        let b = nonlinear_term(&basis, &u).unwrap();
        let pairing: f64 = u.iter().zip(b.iter()).map(|(x, y)| x * y).sum();
        let scale: f64 = u.iter().zip(b.iter()).map(|(x, y)| (x * y).abs()).sum();
        prop_assert!(pairing.abs() <= 1e-10 * scale.max(1e-300));
    }

    #[test]
    fn quadratic_in_the_state(
        coeffs in prop::collection::vec(-2.0f64..2.0, 2..40),
        c in -5.0f64..5.0,
    ) {
        let basis = StokesBasis::build(TorusSpec::two_pi(), coeffs.len());
        let u: SpectralState = coeffs.clone().into();
        let scaled: SpectralState = coeffs.iter().map(|x| c * x).collect::<Vec<_>>().into();
        let b = nonlinear_term(&basis, &u).unwrap();
        let bc = nonlinear_term(&basis, &scaled).unwrap();
        let expect: Vec<f64> = b.iter().map(|x| c * c * x).collect();
        prop_assert!(max_diff(&bc, &expect) <= 1e-12 * (1.0 + max_abs(&expect)));
    }
}
