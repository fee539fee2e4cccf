//! Explicit Runge-Kutta integrators for first-order systems `y' = f(t, y)`.
//!
//! Two methods are provided: classical fixed-step RK4, and the Dormand-Prince
//! 5(4) embedded pair with step-size control. Both work on real and complex
//! state vectors through the [`Field`] trait.

use std::ops::{Add, Mul};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Scalar type of a state vector component.
pub trait Field: Copy + Default + Send + Sync + Add<Output = Self> + Mul<f64, Output = Self> {
    fn modulus(self) -> f64;
    fn is_finite(self) -> bool;
}

impl Field for f64 {
    #[inline]
    fn modulus(self) -> f64 {
        self.abs()
    }
    #[inline]
    fn is_finite(self) -> bool {
        f64::is_finite(self)
    }
}

impl Field for Complex64 {
    #[inline]
    fn modulus(self) -> f64 {
        self.norm()
    }
    #[inline]
    fn is_finite(self) -> bool {
        Complex64::is_finite(self)
    }
}

pub trait OdeSystem: Sync {
    type Elem: Field;
    fn rhs(&self, t: f64, y: &[Self::Elem], dy: &mut [Self::Elem]);
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Rk4,
    #[default]
    DormandPrince,
}

/// Step control shared by both methods. `step` is the fixed step for RK4 and
/// the initial trial step for Dormand-Prince.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepControl {
    pub method: Method,
    pub step: f64,
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub min_step: f64,
    pub max_steps: usize,
}

impl Default for StepControl {
    fn default() -> Self {
        Self {
            method: Method::DormandPrince,
            step: 1e-3,
            rel_tol: 1e-9,
            abs_tol: 1e-9,
            min_step: 1e-14,
            max_steps: 500_000_000,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct StepStats {
    pub accepted: usize,
    pub rejected: usize,
    pub rhs_evals: usize,
}

/// What an observer wants after each accepted step.
pub enum Control {
    Continue,
    Stop,
}

/// Workspace-owning integrator. One instance per trajectory.
pub struct Integrator<E: Field> {
    ctrl: StepControl,
    k: [Vec<E>; 7],
    tmp: Vec<E>,
    ynew: Vec<E>,
    h: f64,
    pub stats: StepStats,
}

#[inline]
fn lin<E: Field>(out: &mut [E], y: &[E], h: f64, terms: &[(f64, &[E])]) {
    for i in 0..out.len() {
        let mut acc = E::default();
        for &(c, k) in terms {
            acc = acc + k[i] * c;
        }
        out[i] = y[i] + acc * h;
    }
}

// Dormand-Prince 5(4) tableau.
const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

impl<E: Field> Integrator<E> {
    pub fn new(ctrl: StepControl, dim: usize) -> Result<Self> {
        if !(ctrl.step > 0.0) || !ctrl.step.is_finite() {
            return Err(crate::error::invalid("step", "must be finite and > 0"));
        }
        if ctrl.method == Method::DormandPrince && !(ctrl.rel_tol > 0.0 && ctrl.abs_tol > 0.0) {
            return Err(crate::error::invalid("tolerance", "rel_tol and abs_tol must be > 0"));
        }
        let v = || vec![E::default(); dim];
        Ok(Self {
            ctrl,
            k: [v(), v(), v(), v(), v(), v(), v()],
            tmp: v(),
            ynew: v(),
            h: ctrl.step,
            stats: StepStats::default(),
        })
    }

    /// Advances `y` from `t` to exactly `t_end`, calling `observe` after every
    /// accepted step. Returns the reached time (earlier than `t_end` only when
    /// the observer asked to stop).
    pub fn advance<S, F>(
        &mut self,
        sys: &S,
        t: f64,
        t_end: f64,
        y: &mut [E],
        mut observe: F,
    ) -> Result<f64>
    where
        S: OdeSystem<Elem = E>,
        F: FnMut(f64, &[E]) -> Control,
    {
        match self.ctrl.method {
            Method::Rk4 => self.advance_rk4(sys, t, t_end, y, &mut observe),
            Method::DormandPrince => self.advance_dopri(sys, t, t_end, y, &mut observe),
        }
    }

    fn advance_rk4<S, F>(&mut self, sys: &S, t0: f64, t_end: f64, y: &mut [E], observe: &mut F) -> Result<f64>
    where
        S: OdeSystem<Elem = E>,
        F: FnMut(f64, &[E]) -> Control,
    {
        let span = t_end - t0;
        if span == 0.0 {
            return Ok(t0);
        }
        let n_steps = (span.abs() / self.ctrl.step).ceil().max(1.0) as usize;
        let h = span / n_steps as f64;
        for i in 0..n_steps {
            let t = t0 + i as f64 * h;
            self.rk4_step(sys, t, h, y);
            let t_new = if i + 1 == n_steps { t_end } else { t0 + (i + 1) as f64 * h };
            if !y.iter().all(|v| v.is_finite()) {
                return Err(Error::Integrator {
                    time: t_new,
                    reason: "non-finite state".into(),
                });
            }
            self.stats.accepted += 1;
            if let Control::Stop = observe(t_new, y) {
                return Ok(t_new);
            }
        }
        Ok(t_end)
    }

    /// One classical RK4 step in place.
    pub fn rk4_step<S: OdeSystem<Elem = E>>(&mut self, sys: &S, t: f64, h: f64, y: &mut [E]) {
        let [k1, k2, k3, k4, ..] = &mut self.k;
        sys.rhs(t, y, k1);
        lin(&mut self.tmp, y, 0.5 * h, &[(1.0, k1)]);
        sys.rhs(t + 0.5 * h, &self.tmp, k2);
        lin(&mut self.tmp, y, 0.5 * h, &[(1.0, k2)]);
        sys.rhs(t + 0.5 * h, &self.tmp, k3);
        lin(&mut self.tmp, y, h, &[(1.0, k3)]);
        sys.rhs(t + h, &self.tmp, k4);
        for i in 0..y.len() {
            y[i] = y[i] + (k1[i] + k2[i] * 2.0 + k3[i] * 2.0 + k4[i]) * (h / 6.0);
        }
        self.stats.rhs_evals += 4;
    }

    fn advance_dopri<S, F>(&mut self, sys: &S, t0: f64, t_end: f64, y: &mut [E], observe: &mut F) -> Result<f64>
    where
        S: OdeSystem<Elem = E>,
        F: FnMut(f64, &[E]) -> Control,
    {
        let dir = if t_end >= t0 { 1.0 } else { -1.0 };
        let mut t = t0;
        if t == t_end {
            return Ok(t);
        }
        let mut h = self.h.abs().min((t_end - t0).abs()) * dir;
        // The first stage is reused across steps (FSAL), so it is computed once here.
        sys.rhs(t, y, &mut self.k[0]);
        self.stats.rhs_evals += 1;
        let mut steps = 0usize;
        loop {
            let remaining = t_end - t;
            let last = h.abs() >= remaining.abs() * (1.0 - 1e-12);
            if last {
                h = remaining;
            }
            steps += 1;
            if steps > self.ctrl.max_steps {
                return Err(Error::Integrator {
                    time: t,
                    reason: format!("exceeded {} steps", self.ctrl.max_steps),
                });
            }
            if !last && (h.abs() < self.ctrl.min_step || t + h == t) {
                return Err(Error::Integrator {
                    time: t,
                    reason: format!("step size underflow (h = {:e})", h.abs()),
                });
            }
            let err = self.dopri_trial(sys, t, h, y);
            if err <= 1.0 && err.is_finite() {
                let t_new = if last { t_end } else { t + h };
                y.copy_from_slice(&self.ynew);
                self.k.swap(0, 6);
                self.stats.accepted += 1;
                t = t_new;
                let fac = if err == 0.0 {
                    5.0
                } else {
                    (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
                };
                let proposal = h * fac;
                // Keep the unclamped step proposal for the next call so that
                // landing exactly on sample times does not shrink the step.
                if !last || proposal.abs() > self.h.abs() {
                    self.h = proposal.abs();
                }
                h = proposal;
                if let Control::Stop = observe(t, y) {
                    return Ok(t);
                }
                if last {
                    return Ok(t);
                }
            } else {
                self.stats.rejected += 1;
                let fac = if err.is_finite() {
                    (0.9 * err.powf(-0.2)).clamp(0.1, 0.9)
                } else {
                    0.1
                };
                h *= fac;
                self.h = h.abs();
                if h.abs() < self.ctrl.min_step {
                    return Err(Error::Integrator {
                        time: t,
                        reason: format!("step size underflow (h = {:e})", h.abs()),
                    });
                }
            }
        }
    }

    /// Computes a trial step into `ynew`/`k[6]`, returning the scaled error.
    fn dopri_trial<S: OdeSystem<Elem = E>>(&mut self, sys: &S, t: f64, h: f64, y: &[E]) -> f64 {
        let [k1, k2, k3, k4, k5, k6, k7] = &mut self.k;
        let tmp = &mut self.tmp;
        lin(tmp, y, h, &[(A21, k1)]);
        sys.rhs(t + C2 * h, tmp, k2);
        lin(tmp, y, h, &[(A31, k1), (A32, k2)]);
        sys.rhs(t + C3 * h, tmp, k3);
        lin(tmp, y, h, &[(A41, k1), (A42, k2), (A43, k3)]);
        sys.rhs(t + C4 * h, tmp, k4);
        lin(tmp, y, h, &[(A51, k1), (A52, k2), (A53, k3), (A54, k4)]);
        sys.rhs(t + C5 * h, tmp, k5);
        lin(tmp, y, h, &[(A61, k1), (A62, k2), (A63, k3), (A64, k4), (A65, k5)]);
        sys.rhs(t + h, tmp, k6);
        lin(&mut self.ynew, y, h, &[(B1, k1), (B3, k3), (B4, k4), (B5, k5), (B6, k6)]);
        sys.rhs(t + h, &self.ynew, k7);
        self.stats.rhs_evals += 6;

        // max-norm of the embedded error estimate
        let mut err: f64 = 0.0;
        for i in 0..y.len() {
            let e = (k1[i] * E1 + k3[i] * E3 + k4[i] * E4 + k5[i] * E5 + k6[i] * E6 + k7[i] * E7) * h;
            let scale = self.ctrl.abs_tol + self.ctrl.rel_tol * y[i].modulus().max(self.ynew[i].modulus());
            err = err.max(e.modulus() / scale);
        }
        err
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Harmonic;
    impl OdeSystem for Harmonic {
        type Elem = f64;
        fn rhs(&self, _t: f64, y: &[f64], dy: &mut [f64]) {
            dy[0] = y[1];
            dy[1] = -y[0];
        }
    }

    struct Rotor(f64);
    impl OdeSystem for Rotor {
        type Elem = Complex64;
        fn rhs(&self, _t: f64, y: &[Complex64], dy: &mut [Complex64]) {
            dy[0] = Complex64::new(0.0, -self.0) * y[0];
        }
    }

    #[test]
    fn rk4_harmonic_oscillator() {
        let h = 2.0 * std::f64::consts::PI / 200.0;
        let ctrl = StepControl {
            method: Method::Rk4,
            step: h,
            ..Default::default()
        };
        let mut integ = Integrator::new(ctrl, 2).unwrap();
        let mut y = [1.0, 0.0];
        integ.advance(&Harmonic, 0.0, 2000.0 * h, &mut y, |_, _| Control::Continue).unwrap();
        // w = x + iu obeys w' = -iw; one RK4 step multiplies it by the degree-4 Taylor polynomial
        let z = Complex64::new(0.0, -h);
        let r = 1.0 + z + z * z / 2.0 + z * z * z / 6.0 + z * z * z * z / 24.0;
        let w = r.powu(2000);
        assert!((y[0] - w.re).abs() < 1e-12 && (y[1] - w.im).abs() < 1e-12);
        assert!((y[0] - 1.0).abs() < 1e-5);
    }

    #[test]
    fn dopri_complex_rotation_lands_on_end_time() {
        let mut integ = Integrator::new(StepControl::default(), 1).unwrap();
        let mut y = [Complex64::new(1.0, 0.0)];
        let mut last_t = 0.0;
        let t = integ
            .advance(&Rotor(3.0), 0.0, 7.3, &mut y, |t, _| {
                last_t = t;
                Control::Continue
            })
            .unwrap();
        assert_eq!(t, 7.3);
        assert_eq!(last_t, 7.3);
        let exact = Complex64::from_polar(1.0, -3.0 * 7.3);
        assert!((y[0] - exact).norm() < 1e-8);
    }

    #[test]
    fn dopri_runs_backwards() {
        let mut integ = Integrator::new(StepControl::default(), 2).unwrap();
        let mut y = [1.0, 0.0];
        integ.advance(&Harmonic, 0.0, 5.0, &mut y, |_, _| Control::Continue).unwrap();
        integ.advance(&Harmonic, 5.0, 0.0, &mut y, |_, _| Control::Continue).unwrap();
        assert!((y[0] - 1.0).abs() < 1e-8 && y[1].abs() < 1e-8);
    }

    #[test]
    fn underflow_is_reported() {
        struct Blowup;
        impl OdeSystem for Blowup {
            type Elem = f64;
            fn rhs(&self, _t: f64, y: &[f64], dy: &mut [f64]) {
                dy[0] = y[0] * y[0];
            }
        }
        let ctrl = StepControl {
            min_step: 1e-10,
            ..Default::default()
        };
        let mut integ = Integrator::new(ctrl, 1).unwrap();
        let mut y = [1.0];
        let err = integ.advance(&Blowup, 0.0, 2.0, &mut y, |_, _| Control::Continue);
        assert!(matches!(err, Err(Error::Integrator { .. })));
    }
}
