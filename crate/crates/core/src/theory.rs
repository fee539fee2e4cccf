//! Closed-form predictions: Landau-Zener cascade probabilities, the ladder
//! climbing threshold, crossing times, the PLC/PAR separator and the
//! logarithmic autoresonance threshold with quantum saturation.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::params::{effective_temperature_with, q, TeffConvention};

/// Threshold `P1` for ladder climbing as reported for the cascade product.
pub const PLC_THRESHOLD_REFERENCE: f64 = 0.237;

/// Number of product terms used by default; further terms change nothing at
/// double precision near threshold.
pub const DEFAULT_PRODUCT_TERMS: usize = 10;

/// Duration of an isolated LZ transition in slow time, `max(1, P1)`: the
/// nonadiabatic value is 1 and the adiabatic value is `P1`.
pub fn lz_duration(p1: f64) -> f64 {
    p1.max(1.0)
}

/// Probability of the `n → n+2` Landau-Zener transition,
/// `1 − exp(−2π P1² Q_{n+1})`.
pub fn lz_probability(p1: f64, n: usize) -> f64 {
    -(-2.0 * std::f64::consts::PI * p1 * p1 * q(n + 1)).exp_m1()
}

/// Capture probability into the ladder from the ground state: product of the
/// first `n_terms` transition probabilities `n = 0, 2, 4, …`.
pub fn plc_capture_total(p1: f64, n_terms: usize) -> f64 {
    (0..n_terms).map(|k| lz_probability(p1, 2 * k)).product()
}

/// Root of `plc_capture_total(p1, n_terms) = 0.5` by bisection on `[0.01, 1]`.
pub fn plc_threshold_with(n_terms: usize) -> Result<f64> {
    if n_terms == 0 {
        return Err(invalid("n_terms", "must be >= 1"));
    }
    bisect(|p| plc_capture_total(p, n_terms) - 0.5, 0.01, 1.0, 1e-6)
}

pub fn plc_threshold() -> f64 {
    plc_threshold_with(DEFAULT_PRODUCT_TERMS).expect("bracket is valid for the LZ cascade")
}

pub(crate) fn bisect<F: Fn(f64) -> f64>(f: F, mut lo: f64, mut hi: f64, tol: f64) -> Result<f64> {
    let (mut flo, fhi) = (f(lo), f(hi));
    if flo.signum() == fhi.signum() {
        return Err(Error::InsufficientData(format!(
            "no sign change on [{lo}, {hi}]"
        )));
    }
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        let fm = f(mid);
        if fm.signum() == flo.signum() {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Slow time of the `n → n+2` crossing, where the diagonal terms of the slow
/// equations are degenerate: `τ = (2n + 3) P2`.
pub fn crossing_time(n: usize, p2: f64) -> f64 {
    (2.0 * n as f64 + 3.0) * p2
}

/// Boundary `P2 = (P1 + 1)/4` between ladder climbing and autoresonance.
pub fn separator_p2(p1: f64) -> f64 {
    0.25 * (p1 + 1.0)
}

/// Coefficients of the logarithmic threshold laws
/// `ε_cr = a − b ln T` and `P1_cr = κ0 − κ1 ln(P2 T)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalingCoefficients {
    pub a: f64,
    pub b: f64,
    pub kappa0: f64,
    pub kappa1: f64,
}

impl ScalingCoefficients {
    /// Reference values: `a = 0.0217`, `b = 0.0033` at `α = 1e-4, β = 1e-3`,
    /// with `κ0 = 0.165` and `κ1 = 0.041` (the value consistent with `a, b`).
    pub const fn reference() -> Self {
        Self {
            a: 0.0217,
            b: 0.0033,
            kappa0: 0.165,
            kappa1: 0.041,
        }
    }

    /// Same as [`reference`](Self::reference) but with the printed `κ1 = 0.41`.
    pub const fn reference_printed_kappa1() -> Self {
        Self {
            kappa1: 0.41,
            ..Self::reference()
        }
    }

    /// Maps an `ε` fit at chirp rate `alpha` and anharmonicity `p2` to the
    /// `P1` law: `κ1 = b/(8√α)`, `κ0 = a/(8√α) + κ1 ln P2`.
    pub fn from_eps_fit(a: f64, b: f64, alpha: f64, p2: f64) -> Result<Self> {
        if !(alpha > 0.0) || !(p2 > 0.0) {
            return Err(invalid("alpha/p2", "must both be > 0"));
        }
        let scale = 8.0 * alpha.sqrt();
        let kappa1 = b / scale;
        Ok(Self {
            a,
            b,
            kappa0: a / scale + kappa1 * p2.ln(),
            kappa1,
        })
    }
}

/// Quantum-saturated autoresonance threshold `a − b ln T_eff(T)`.
pub fn par_threshold_eps(temperature: f64, coeffs: &ScalingCoefficients) -> Result<f64> {
    par_threshold_eps_with(temperature, coeffs, TeffConvention::default())
}

pub fn par_threshold_eps_with(
    temperature: f64,
    coeffs: &ScalingCoefficients,
    convention: TeffConvention,
) -> Result<f64> {
    let t_eff = effective_temperature_with(temperature, convention)?;
    Ok(coeffs.a - coeffs.b * t_eff.ln())
}

/// Classical (unsaturated) threshold `a − b ln T`, defined for `T > 0`.
pub fn par_threshold_eps_classical(temperature: f64, coeffs: &ScalingCoefficients) -> Result<f64> {
    if !temperature.is_finite() || temperature <= 0.0 {
        return Err(invalid("temperature", "classical law needs T > 0"));
    }
    Ok(coeffs.a - coeffs.b * temperature.ln())
}

/// `κ0 − κ1 ln(P2 · T_eff(T))`; non-positive results are outside the range
/// where the logarithmic law applies.
pub fn par_threshold_p1(p2: f64, temperature: f64, coeffs: &ScalingCoefficients) -> Result<f64> {
    if !(p2 > 0.0) || !p2.is_finite() {
        return Err(invalid("p2", "must be finite and > 0"));
    }
    let t_eff = effective_temperature_with(temperature, TeffConvention::default())?;
    par_threshold_p1_from_teff(p2, t_eff, coeffs)
}

/// As [`par_threshold_p1`] with the effective temperature given directly.
pub fn par_threshold_p1_from_teff(p2: f64, t_eff: f64, coeffs: &ScalingCoefficients) -> Result<f64> {
    let v = coeffs.kappa0 - coeffs.kappa1 * (p2 * t_eff).ln();
    if v <= 0.0 {
        return Err(Error::OutOfValidity(format!(
            "P1_cr = {v:.4} <= 0 at P2 = {p2}, T_eff = {t_eff}"
        )));
    }
    Ok(v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn lz_examples() {
        assert_eq!(lz_probability(0.0, 4), 0.0);
        assert!((lz_probability(0.237, 0) - 0.5063).abs() < 1e-4);
        assert!((lz_probability(0.237, 2) - 0.9855).abs() < 1e-4);
    }

    #[test]
    fn lz_monotone() {
        for k in 0..20 {
            let n = 2 * k;
            assert!(lz_probability(0.2, n + 2) >= lz_probability(0.2, n));
            assert!(lz_probability(0.21, n) > lz_probability(0.2, n) || lz_probability(0.2, n) == 1.0);
        }
    }

    #[test]
    fn capture_product_examples() {
        // brute-force product written out term by term
        let tp = std::f64::consts::PI * 2.0 * 0.237f64.powi(2);
        let brute = (1.0 - (-tp * 2.0).exp()) * (1.0 - (-tp * 12.0).exp()) * (1.0 - (-tp * 30.0).exp());
        assert_relative_eq!(plc_capture_total(0.237, 3), brute, epsilon = 1e-14);
        assert!((brute - 0.4990).abs() < 1e-3);
        assert_eq!(plc_capture_total(0.0, 5), 0.0);
        assert!(1.0 - plc_capture_total(2.0, 10) < 1e-20);
    }

    #[test]
    fn threshold_examples() {
        let p = plc_threshold();
        assert!((p - PLC_THRESHOLD_REFERENCE).abs() < 1e-3, "threshold {p}");
        assert_relative_eq!(plc_capture_total(p, DEFAULT_PRODUCT_TERMS), 0.5, epsilon = 1e-3);

        let single = plc_threshold_with(1).unwrap();
        let closed = (std::f64::consts::LN_2 / (4.0 * std::f64::consts::PI)).sqrt();
        assert!((single - closed).abs() < 1e-5);

        let two = plc_threshold_with(2).unwrap();
        let ten = plc_threshold_with(10).unwrap();
        assert!(((two - ten) / ten).abs() < 0.01);
        assert!(plc_threshold_with(0).is_err());
    }

    #[test]
    fn crossing_time_examples() {
        assert_eq!(crossing_time(0, 10.0), 30.0);
        assert_eq!(crossing_time(2, 10.0) - crossing_time(0, 10.0), 40.0);
        assert_eq!(crossing_time(0, 0.0), 0.0);
        for n in (0..40).step_by(2) {
            assert_relative_eq!(crossing_time(n + 2, 1.7) - crossing_time(n, 1.7), 4.0 * 1.7, epsilon = 1e-12);
        }
    }

    #[test]
    fn separator_examples() {
        assert_eq!(separator_p2(0.0), 0.25);
        assert!((separator_p2(0.237) - 0.309).abs() < 1e-3);
        assert_eq!(separator_p2(5.0), 1.5);
    }

    #[test]
    fn eps_threshold_examples() {
        let c = ScalingCoefficients::reference();
        let plateau = par_threshold_eps(0.0, &c).unwrap();
        assert_relative_eq!(plateau, 0.0217 - 0.0033 * 0.5f64.ln(), epsilon = 1e-15);
        assert!((plateau - 0.0240).abs() < 5e-5);
        assert_relative_eq!(par_threshold_eps_classical(1.0, &c).unwrap(), 0.0217);
        let at01 = par_threshold_eps(0.1, &c).unwrap();
        assert!((0.0238..=0.0248).contains(&at01));
        assert!(par_threshold_eps(-1.0, &c).is_err());
        assert!(par_threshold_eps_classical(0.0, &c).is_err());
    }

    #[test]
    fn eps_threshold_plateau_and_monotone() {
        let c = ScalingCoefficients::reference();
        let zero = par_threshold_eps(0.0, &c).unwrap();
        let mut prev = zero;
        for i in 1..=1000 {
            let t = i as f64 * 0.01;
            let v = par_threshold_eps(t, &c).unwrap();
            assert!(v <= prev + 1e-15);
            if t <= 0.1 {
                assert!((v - zero).abs() < 1e-4);
            }
            prev = v;
        }
    }

    #[test]
    fn p1_threshold_examples() {
        let c = ScalingCoefficients::reference();
        let v = par_threshold_p1_from_teff(0.075, 0.5, &c).unwrap();
        assert!((v - 0.2996).abs() < 1e-4, "{v}");

        let unit = ScalingCoefficients { kappa0: 0.2, ..c };
        assert_eq!(par_threshold_p1_from_teff(2.0, 0.5, &unit).unwrap(), 0.2);

        // evaluation chain at T = 4: T_eff = coth(1/8)/2
        let t_eff = 0.5 / (0.125f64).tanh();
        assert!((t_eff - 4.0208).abs() < 1e-4);
        let expected = 0.165 - 0.041 * (0.075 * t_eff).ln();
        assert_relative_eq!(par_threshold_p1(0.075, 4.0, &c).unwrap(), expected, epsilon = 1e-14);
        assert!((expected - 0.21415).abs() < 1e-4);

        assert!(matches!(
            par_threshold_p1(1e6, 1.0, &c),
            Err(Error::OutOfValidity(_))
        ));
    }

    #[test]
    fn eps_and_p1_parameterizations_agree() {
        let alpha: f64 = 1e-4;
        for p2 in [0.01, 0.075, 0.3] {
            let c = ScalingCoefficients::from_eps_fit(0.0217, 0.0033, alpha, p2).unwrap();
            for t in [0.0, 0.1, 0.5, 2.0, 8.0] {
                let eps = par_threshold_eps(t, &c).unwrap();
                let p1 = par_threshold_p1(p2, t, &c).unwrap();
                assert!((p1 * 8.0 * alpha.sqrt() - eps).abs() < 1e-6);
            }
        }
    }
}
