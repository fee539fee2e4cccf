use std::f64::consts::PI;

use num_complex::Complex64;
use parares::params::OscillatorParams;
use parares::quantum::{Frame, QuantumState};
use parares::wigner::{hermite_modes, reconstruct, wigner_transform, Grid, Wavefunction};
use proptest::prelude::*;

fn lab_params() -> OscillatorParams {
    OscillatorParams::new(1e-4, 0.0, 0.0).unwrap()
}

fn psi_of(amps: Vec<Complex64>, grid: &Grid) -> Wavefunction {
    let s = QuantumState::new(amps, Frame::Lab, 0.0).unwrap();
    reconstruct(&s, &lab_params(), grid).unwrap()
}

fn fock(n: usize, levels: usize) -> Vec<Complex64> {
    let mut a = vec![Complex64::default(); levels];
    a[n] = Complex64::new(1.0, 0.0);
    a
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

#[test]
fn hermite_modes_orthonormal_up_to_250() {
    let n_max = 250;
    let hw = (2.0 * n_max as f64 + 1.0).sqrt() + 8.0;
    let g = Grid::symmetric(hw, 1024).unwrap();
    let modes = hermite_modes(n_max + 1, &g).unwrap();
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>() * g.dx();
    let mut worst: f64 = 0.0;
    for (i, j) in [(0, 0), (7, 9), (100, 100), (100, 102), (249, 250), (250, 250), (248, 250), (3, 250)] {
        let expected = if i == j { 1.0 } else { 0.0 };
        worst = worst.max((dot(&modes[i], &modes[j]) - expected).abs());
    }
    assert!(worst < 1e-8, "{worst:e}");
}

#[test]
fn fock_values_at_origin() {
    for n in 0..=20 {
        let g = Grid::for_levels((n + 2).max(4));
        let w = wigner_transform(&psi_of(fock(n, (n + 2).max(4)), &g)).unwrap();
        let expected = if n % 2 == 0 { 1.0 / PI } else { -1.0 / PI };
        let got = w.nearest(0.0, 0.0);
        assert!((got - expected).abs() < 1e-5, "n={n}: {got}");
    }
}

#[test]
fn normalization_marginals_and_purity_for_fock_states() {
    for n in [0usize, 1, 8, 20] {
        let g = Grid::for_levels((n + 2).max(4));
        let psi = psi_of(fock(n, (n + 2).max(4)), &g);
        assert!((psi.norm() - 1.0).abs() < 1e-6);
        assert!(psi.edge_ratio() < 1e-8);
        let w = wigner_transform(&psi).unwrap();
        assert!((w.integral() - 1.0).abs() < 1e-6);
        assert!(max_abs_diff(&w.position_marginal(), &psi.density()) < 1e-6);
        assert!(max_abs_diff(&w.momentum_marginal(), &psi.momentum_density()) < 1e-6);
        assert!((w.purity() - 1.0).abs() < 1e-4);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn random_even_superpositions(re in prop::collection::vec(-1.0f64..1.0, 6), im in prop::collection::vec(-1.0f64..1.0, 6)) {
        let levels = 12;
        let mut amps = vec![Complex64::default(); levels];
        for k in 0..6 {
            amps[2 * k] = Complex64::new(re[k], im[k]);
        }
        let norm: f64 = amps.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
        prop_assume!(norm > 0.1);
        amps.iter_mut().for_each(|c| *c /= norm);
        let g = Grid::for_levels(levels);
        let psi = psi_of(amps, &g);
        let w = wigner_transform(&psi).unwrap();
        prop_assert!((w.integral() - 1.0).abs() < 1e-6);
        prop_assert!(max_abs_diff(&w.position_marginal(), &psi.density()) < 1e-6);
        prop_assert!(max_abs_diff(&w.momentum_marginal(), &psi.momentum_density()) < 1e-6);
        prop_assert!((w.purity() - 1.0).abs() < 1e-4);
        prop_assert!(w.point_reflection_asymmetry() < 1e-8);
    }

    #[test]
    fn random_mixed_parity_states_keep_marginals(re in prop::collection::vec(-1.0f64..1.0, 10)) {
        let mut amps: Vec<Complex64> = re.iter().map(|r| Complex64::new(*r, 0.5 * r * r)).collect();
        amps.extend([Complex64::default(); 2]);
        let norm: f64 = amps.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
        prop_assume!(norm > 0.1);
        amps.iter_mut().for_each(|c| *c /= norm);
        let g = Grid::for_levels(12);
        let psi = psi_of(amps, &g);
        let w = wigner_transform(&psi).unwrap();
        prop_assert!((w.integral() - 1.0).abs() < 1e-6);
        prop_assert!(max_abs_diff(&w.position_marginal(), &psi.density()) < 1e-6);
        prop_assert!((w.purity() - 1.0).abs() < 1e-4);
    }
}

/// The ladder-climbing state at τ = 100 is dominated by level 8, whose
/// density has nine maxima.
#[test]
fn ladder_snapshot_has_level_eight_structure() {
    use parares::params::DimensionlessParams;
    use parares::quantum::{evolve_rotating, IntegratorConfig};
    let dp = DimensionlessParams::new(5.0, 10.0, -10.0).unwrap();
    let params = dp.to_oscillator(1e-6).unwrap();
    let cfg = IntegratorConfig::plc().endpoints_only();
    let s = QuantumState::ground(cfg.n_levels, Frame::Rotating, -10.0).unwrap();
    let state = evolve_rotating(&s, &dp, 100.0, &cfg).unwrap().final_state().clone();
    let psi = reconstruct(&state, &params, &Grid::for_levels(cfg.n_levels)).unwrap();
    let d = psi.density();
    let peak = d.iter().copied().fold(0.0, f64::max);
    let maxima = (1..d.len() - 1)
        .filter(|&k| d[k] > d[k - 1] && d[k] >= d[k + 1] && d[k] > 1e-3 * peak)
        .count();
    let pops = state.populations();
    assert_eq!(maxima, 9, "populations of levels 4, 6, 8, 10: {:.3?}", [pops[4], pops[6], pops[8], pops[10]]);
}
