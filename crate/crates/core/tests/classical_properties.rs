use std::f64::consts::PI;

use parares::capture::{classical_capture_probability, ClassicalExperiment, CaptureExperiment};
use parares::classical::{
    averaged_from_classical, ensemble_mean_energy, integrate_averaged, integrate_duffing,
    run_averaged_ensemble, run_duffing_ensemble, sample_thermal_at, AveragedModel, AveragedState,
    ClassicalState, DEFAULT_DUFFING_STEP,
};
use parares::ode::{Control, Integrator, Method, OdeSystem, StepControl};
use parares::params::OscillatorParams;
use proptest::prelude::*;

/// Unmodulated Duffing oscillator for the adaptive reference integrator.
struct FreeDuffing(f64);

impl OdeSystem for FreeDuffing {
    type Elem = f64;
    fn rhs(&self, _t: f64, y: &[f64], dy: &mut [f64]) {
        dy[0] = y[1];
        dy[1] = -y[0] - self.0 * y[0].powi(3);
    }
}

/// Mean spacing of upward zero crossings of `x`, linearly interpolated.
fn mean_period(ts: &[f64], xs: &[f64]) -> f64 {
    let mut ups = Vec::new();
    for k in 1..xs.len() {
        if xs[k - 1] < 0.0 && xs[k] >= 0.0 {
            ups.push(ts[k - 1] + (ts[k] - ts[k - 1]) * (-xs[k - 1]) / (xs[k] - xs[k - 1]));
        }
    }
    (ups[ups.len() - 1] - ups[0]) / (ups.len() - 1) as f64
}

#[test]
fn linear_limit_matches_cosine_over_100_periods() {
    let p = OscillatorParams::with_t0(1e-4, 0.0, 0.0, -1.0).unwrap();
    let s = ClassicalState { x: 1.0, u: 0.0, t: 0.0 };
    let traj = integrate_duffing(&s, &p, 200.0 * PI, DEFAULT_DUFFING_STEP).unwrap();
    let err = traj
        .iter()
        .map(|st| (st.x - st.t.cos()).abs())
        .fold(0.0, f64::max);
    assert!(err < 1e-8, "max |x - cos t| = {err:e}");
}

#[test]
fn unmodulated_energy_conserved_over_1e4_periods() {
    let beta = 0.01;
    let p = OscillatorParams::with_t0(1e-4, beta, 0.0, -1.0).unwrap();
    let s = ClassicalState { x: 1.0, u: 0.0, t: 0.0 };
    let e0 = s.energy(beta);
    let mut worst: f64 = 0.0;
    // 10⁴ periods in chunks to bound memory
    let mut cur = s;
    for _ in 0..100 {
        let seg = integrate_duffing(&cur, &p, cur.t + 200.0 * PI, DEFAULT_DUFFING_STEP).unwrap();
        for st in &seg {
            worst = worst.max((st.energy(beta) - e0).abs() / e0);
        }
        cur = *seg.last().unwrap();
    }
    assert!(worst < 1e-8, "relative energy drift {worst:e}");
}

#[test]
fn anharmonic_period_matches_reference_and_first_order_shift() {
    let beta = 0.01;
    let p = OscillatorParams::with_t0(1e-4, beta, 0.0, -1.0).unwrap();
    let s = ClassicalState { x: 1.0, u: 0.0, t: 0.0 };
    let traj = integrate_duffing(&s, &p, 100.0 * PI, DEFAULT_DUFFING_STEP).unwrap();
    let ts: Vec<f64> = traj.iter().map(|s| s.t).collect();
    let xs: Vec<f64> = traj.iter().map(|s| s.x).collect();
    let rk4_period = mean_period(&ts, &xs);

    let ctrl = StepControl {
        method: Method::DormandPrince,
        rel_tol: 1e-13,
        abs_tol: 1e-13,
        ..Default::default()
    };
    let mut integ = Integrator::new(ctrl, 2).unwrap();
    let mut y = [1.0, 0.0];
    let (mut rt, mut rx) = (vec![0.0], vec![1.0]);
    let mut t = 0.0;
    for k in 1..=20_000 {
        let target = k as f64 * 100.0 * PI / 20_000.0;
        t = integ.advance(&FreeDuffing(beta), t, target, &mut y, |_, _| Control::Continue).unwrap();
        rt.push(t);
        rx.push(y[0]);
    }
    let ref_period = mean_period(&rt, &rx);
    assert!((rk4_period - ref_period).abs() / ref_period < 1e-6);

    let first_order = 2.0 * PI / (1.0 + 0.375 * beta);
    assert!((rk4_period - first_order).abs() / first_order < 1e-4);
}

#[test]
fn thermal_ensemble_without_drive_keeps_mean_energy() {
    let p = OscillatorParams::with_t0(1e-4, 0.0, 0.0, -1.0).unwrap();
    let ens = sample_thermal_at(0.5, 2000, 11, 0.0).unwrap();
    let run = run_duffing_ensemble(&ens, &p, 50.0, DEFAULT_DUFFING_STEP, Some(5.0)).unwrap();
    let series = ensemble_mean_energy(&run);
    let e0 = series[0].mean;
    for pt in &series {
        // energy of each member is conserved up to the RK4 drift
        assert!((pt.mean - e0).abs() < 1e-6);
        assert!((pt.mean - 0.5).abs() < 4.0 * pt.stderr.max(0.5 / (2000f64).sqrt()));
    }
}

#[test]
fn resting_oscillator_stays_at_rest() {
    let p = OscillatorParams::new(1e-4, 1e-3, 0.04).unwrap();
    let s = ClassicalState { x: 0.0, u: 0.0, t: p.t0 };
    let traj = integrate_duffing(&s, &p, p.t0 + 500.0, DEFAULT_DUFFING_STEP).unwrap();
    assert!(traj.iter().all(|st| st.x == 0.0 && st.u == 0.0));
}

#[test]
fn ensemble_is_independent_of_worker_count() {
    let p = OscillatorParams::new(1e-4, 1e-3, 0.03).unwrap();
    let ens = sample_thermal_at(1.0, 64, 5, p.t0).unwrap();
    let t_final = p.t0 + 2000.0;
    let run_with = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| run_duffing_ensemble(&ens, &p, t_final, DEFAULT_DUFFING_STEP, Some(100.0)).unwrap())
    };
    let a = run_with(1);
    let b = run_with(4);
    assert_eq!(a, b);
    let ma: Vec<u64> = ensemble_mean_energy(&a).iter().map(|e| e.mean.to_bits()).collect();
    let mb: Vec<u64> = ensemble_mean_energy(&b).iter().map(|e| e.mean.to_bits()).collect();
    assert_eq!(ma, mb);
}

/// The averaged system started from the same initial conditions captures the
/// same fraction of trajectories as the full equation.
#[test]
fn averaged_capture_tracks_full_dynamics() {
    let base = OscillatorParams::new(1e-4, 1e-3, 0.0).unwrap();
    let temperature = 1.0;
    let n = 200;
    let seed = 2024;
    let exp = ClassicalExperiment::new(base, temperature, n, seed);
    let drives = [0.015, 0.02, 0.025, 0.03, 0.035];
    let e_lock = exp.prepare(&drives).unwrap();
    let model = AveragedModel::derived();
    let ens = sample_thermal_at(temperature, n, seed, base.t0).unwrap();
    let mut worst: f64 = 0.0;
    for eps in drives {
        let full = exp.point(eps, &e_lock).unwrap().probability;
        let params = base.with_epsilon(eps).unwrap();
        let dp = params.to_dimensionless();
        let initial: Vec<AveragedState> = ens.states.iter().map(|s| averaged_from_classical(s, &params)).collect();
        let fin = run_averaged_ensemble(&initial, &dp, exp.tau_final, 1e-2, &model).unwrap();
        let a2: Vec<f64> = fin.iter().map(|s| s.amplitude * s.amplitude).collect();
        let (avg, _) = classical_capture_probability(&a2, model.locked_amplitude_sq(exp.tau_final)).unwrap();
        println!("eps {eps}: full {full:.3}, averaged {avg:.3}");
        worst = worst.max((full - avg).abs());
    }
    assert!(worst < 0.05, "largest capture difference {worst}");
}

/// Above threshold the averaged amplitude follows `A² ≈ τ`, with bounded
/// oscillation around the locked branch.
#[test]
fn captured_averaged_trajectory_follows_locked_branch() {
    let p = OscillatorParams::new(1e-4, 1e-3, 0.05).unwrap();
    let dp = p.to_dimensionless();
    let model = AveragedModel::derived();
    let tr = integrate_averaged(&AveragedState { amplitude: 0.3, phase: 0.0 }, &dp, 60.0, 1e-3, &model, 100).unwrap();
    let late: Vec<f64> = tr
        .iter()
        .filter(|s| s.tau > 20.0)
        .map(|s| s.state.amplitude.powi(2) - model.sweep_rate * s.tau)
        .collect();
    let spread = late.iter().copied().fold(f64::NEG_INFINITY, f64::max) - late.iter().copied().fold(f64::INFINITY, f64::min);
    assert!(late.iter().all(|d| d.abs() < 4.0 * 4.0 * dp.p1), "{late:?}");
    assert!(spread < 8.0 * 4.0 * dp.p1);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn same_seed_same_ensemble(seed in any::<u64>(), t in 0.01f64..10.0, n in 1usize..50) {
        let a = sample_thermal_at(t, n, seed, -3.0).unwrap();
        let b = sample_thermal_at(t, n, seed, -3.0).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn prefix_of_larger_ensemble_is_unchanged(seed in any::<u64>(), n in 1usize..40) {
        let small = sample_thermal_at(1.0, n, seed, 0.0).unwrap();
        let large = sample_thermal_at(1.0, n + 17, seed, 0.0).unwrap();
        prop_assert_eq!(&small.states[..], &large.states[..n]);
    }

    #[test]
    fn averaged_origin_is_fixed(phi in -10.0f64..10.0, p1 in 0.0f64..1.0) {
        let p = OscillatorParams::new(1e-4, 1e-3, 8.0 * 1e-2 * p1).unwrap();
        let tr = integrate_averaged(&AveragedState { amplitude: 0.0, phase: phi }, &p.to_dimensionless(), 5.0, 1e-2, &AveragedModel::derived(), 50).unwrap();
        prop_assert!(tr.iter().all(|s| s.state.amplitude == 0.0));
    }
}
