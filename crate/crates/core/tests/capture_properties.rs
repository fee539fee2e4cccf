use parares::capture::{
    calibrate_quantum_cutoff, fit_log_scaling, fit_threshold, linear_grid, plc_tau_final,
    quantum_capture_probability, scan_scurve, AveragedExperiment, ClassicalExperiment, DriveAxis,
    EnsembleMeta, FitMethod, QuantumExperiment, SCurve, SCurvePoint,
};
use parares::params::{DimensionlessParams, OscillatorParams};
use parares::quantum::{evolve_rotating, Frame, IntegratorConfig, QuantumState};
use parares::theory::plc_capture_total;
use proptest::prelude::*;

fn logistic(x: f64, x0: f64, d: f64) -> f64 {
    1.0 / (1.0 + (-(x - x0) / d).exp())
}

/// Small deterministic perturbation standing in for sampling noise.
fn wobble(k: usize) -> f64 {
    0.03 * ((k as f64 * 2.399).sin())
}

fn synthetic(xs: &[f64], f: impl Fn(usize, f64) -> f64) -> SCurve {
    let points = xs
        .iter()
        .enumerate()
        .map(|(k, x)| SCurvePoint {
            drive: *x,
            probability: f(k, *x).clamp(0.0, 1.0),
            stderr: 0.0,
        })
        .collect();
    SCurve::new(
        DriveAxis::Epsilon,
        points,
        EnsembleMeta {
            seed: None,
            n_traj: None,
            quantum: true,
        },
    )
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn threshold_fit_is_shift_equivariant(
        x0 in 0.01f64..0.05,
        rel_width in 0.02f64..0.2,
        shift in -0.005f64..0.005,
    ) {
        let d = rel_width * x0;
        let xs = linear_grid(x0 - 6.0 * d, x0 + 6.0 * d, 15);
        let base = fit_threshold(&synthetic(&xs, |k, x| logistic(x, x0, d) + wobble(k))).unwrap();
        let moved: Vec<f64> = xs.iter().map(|x| x + shift).collect();
        let shifted = fit_threshold(&synthetic(&moved, |k, x| logistic(x - shift, x0, d) + wobble(k))).unwrap();
        prop_assert_eq!(base.method, shifted.method);
        prop_assert!((shifted.threshold - base.threshold - shift).abs() < 1e-9 * x0);
        prop_assert!((shifted.width - base.width).abs() < 1e-7 * base.width);
    }

    #[test]
    fn exact_logistic_recovered(x0 in 0.01f64..0.05, rel_width in 0.01f64..0.1) {
        let d = rel_width * x0;
        let xs = linear_grid(x0 - 5.0 * d, x0 + 5.0 * d, 21);
        let r = fit_threshold(&synthetic(&xs, |_, x| logistic(x, x0, d))).unwrap();
        prop_assert_eq!(r.method, FitMethod::LogisticFit);
        prop_assert!((r.threshold - x0).abs() < 1e-4 * x0);
        prop_assert!((r.width - 4.0 * d).abs() < 1e-4 * d);
    }

    #[test]
    fn log_scaling_recovers_exact_coefficients(a in 0.01f64..0.05, b in 0.0f64..0.01) {
        let pts: Vec<(f64, f64)> = [0.5, 1.0, 2.0, 4.0, 8.0].iter().map(|t| (*t, a - b * f64::ln(*t))).collect();
        let f = fit_log_scaling(&pts, false).unwrap();
        prop_assert!((f.a - a).abs() < 1e-12);
        prop_assert!((f.b - b).abs() < 1e-12);
    }
}

#[test]
fn synthetic_logistic_example() {
    let xs = linear_grid(0.015, 0.025, 21);
    let r = fit_threshold(&synthetic(&xs, |_, x| logistic(x, 0.02, 0.001))).unwrap();
    assert!((r.threshold - 0.02).abs() < 1e-4);
    assert!((r.width - 0.004).abs() < 1e-4);
}

#[test]
fn classical_capture_limits() {
    let base = OscillatorParams::new(1e-4, 1e-3, 0.0).unwrap();
    let exp = ClassicalExperiment::new(base, 0.5, 100, 9);
    let zero = scan_scurve(&[0.0, 0.001, 0.002, 0.003, 0.004], &exp).unwrap();
    assert!(zero.points.iter().all(|p| p.probability < 0.1));
    assert_eq!(zero.points[0].probability, 0.0);
    let high = scan_scurve(&linear_grid(0.048, 0.06, 5), &exp).unwrap();
    assert!(high.points.iter().all(|p| p.probability > 0.9), "{:?}", high.points);
    let again = scan_scurve(&linear_grid(0.048, 0.06, 5), &exp).unwrap();
    assert_eq!(high, again);
}

#[test]
fn all_zero_grid_gives_zero_capture() {
    let dp = DimensionlessParams::new(0.0, 0.075, -10.0).unwrap();
    let exp = AveragedExperiment::new(dp, 1.0, 50, 3);
    let c = scan_scurve(&[0.0, 1e-9, 2e-9, 3e-9, 4e-9], &exp).unwrap();
    assert!(c.points.iter().all(|p| p.probability == 0.0));
    let flat = scan_scurve(&[0.0; 5], &exp).unwrap();
    assert!(flat.points.iter().all(|p| p.probability == 0.0 && p.stderr == 0.0));
}

#[test]
fn quantum_ladder_capture_examples() {
    let tau = plc_tau_final(10.0);
    let dp = DimensionlessParams::new(0.0, 10.0, -10.0).unwrap();
    let cfg = IntegratorConfig::plc().endpoints_only();
    let cut = calibrate_quantum_cutoff(&dp, 1.0, tau, &cfg).unwrap();
    let run = |p1: f64| {
        let d = dp.with_p1(p1).unwrap();
        let s = QuantumState::ground(cfg.n_levels, Frame::Rotating, -10.0).unwrap();
        let t = evolve_rotating(&s, &d, tau, &cfg).unwrap();
        quantum_capture_probability(t.final_state(), &d, &cut).unwrap()
    };
    assert_eq!(run(0.0), 0.0);
    assert!(run(5.0) > 0.99);
    let at_ref = run(0.237);
    assert!((at_ref - 0.5).abs() < 0.05, "{at_ref}");
    assert!((at_ref - plc_capture_total(0.237, 10)).abs() < 0.05);

    let exp = QuantumExperiment::new(dp, 0.0, tau, cfg);
    let c = scan_scurve(&linear_grid(0.02, 0.06, 5), &exp).unwrap();
    assert!(c.points.iter().all(|p| p.probability < 0.1));
}
