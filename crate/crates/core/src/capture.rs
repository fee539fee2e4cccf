//! Capture probabilities, S-curves over the drive amplitude, 50% thresholds and
//! the logarithmic temperature scaling of the threshold.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classical::{
    integrate_duffing, run_averaged_ensemble, run_duffing_ensemble, sample_averaged_thermal,
    sample_thermal_at, AveragedModel, ClassicalState, DEFAULT_DUFFING_STEP,
};
use crate::error::{invalid, Error, Result};
use crate::params::{
    effective_temperature_with, DimensionlessParams, OscillatorParams, TeffConvention,
};
use crate::quantum::{evolve_rotating, thermal_level_weights, Frame, IntegratorConfig, QuantumState};
use crate::theory::{
    bisect, crossing_time, par_threshold_eps_classical, par_threshold_eps_with, par_threshold_p1,
    plc_threshold, separator_p2, ScalingCoefficients,
};

/// Minimum ensemble size for a classical capture estimate.
pub const MIN_CLASSICAL_TRAJECTORIES: usize = 30;
/// Residual above which the logistic fit is replaced by interpolation.
/// Attempts at doubling the classical reference drive.
const REFERENCE_DOUBLINGS: usize = 6;

pub const FIT_RESIDUAL_LIMIT: f64 = 0.1;
/// Slow time at which classical autoresonant capture is evaluated.
pub const PAR_TAU_FINAL: f64 = 30.0;
/// Slow time for quantum autoresonant capture. Shorter than the classical
/// window so that the locked state stays inside a 250-level basis.
pub const QUANTUM_PAR_TAU_FINAL: f64 = 20.0;

/// Evaluation time for ladder climbing: between the third and fourth crossing.
pub fn plc_tau_final(p2: f64) -> f64 {
    13.0 * p2
}

/// Evaluation time for a quantum threshold at anharmonicity `p2` in an
/// `n_levels` basis: the ladder-climbing window when it fits, otherwise the
/// shorter of the autoresonant window and the crossing time of level `0.6 N`.
pub fn quantum_tau_final(p2: f64, n_levels: usize) -> f64 {
    let basis_limit = (1.2 * n_levels as f64 + 3.0) * p2;
    plc_tau_final(p2).max(QUANTUM_PAR_TAU_FINAL.min(basis_limit))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DriveAxis {
    /// Physical modulation amplitude `ε`.
    Epsilon,
    /// Dimensionless drive `P1`.
    P1,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SCurvePoint {
    pub drive: f64,
    pub probability: f64,
    pub stderr: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnsembleMeta {
    pub seed: Option<u64>,
    pub n_traj: Option<usize>,
    pub quantum: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SCurve {
    pub axis: DriveAxis,
    pub points: Vec<SCurvePoint>,
    pub meta: EnsembleMeta,
}

impl SCurve {
    pub fn new(axis: DriveAxis, points: Vec<SCurvePoint>, meta: EnsembleMeta) -> Result<Self> {
        if points.windows(2).any(|w| !(w[1].drive >= w[0].drive)) {
            return Err(invalid("drive grid", "values must be non-decreasing"));
        }
        if let Some(p) = points
            .iter()
            .find(|p| !(0.0..=1.0).contains(&p.probability) || !(p.stderr >= 0.0))
        {
            return Err(invalid(
                "probability",
                format!("{} (stderr {}) at drive {} is not a valid estimate", p.probability, p.stderr, p.drive),
            ));
        }
        Ok(Self { axis, points, meta })
    }

    pub fn drives(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.drive).collect()
    }

    pub fn probabilities(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.probability).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FitMethod {
    LogisticFit,
    Bisection,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdResult {
    /// Drive at 50% capture.
    pub threshold: f64,
    /// Inverse slope at the threshold, `4Δ` for the logistic model.
    pub width: f64,
    /// RMS deviation of the logistic model from the data.
    pub fit_residual: f64,
    pub method: FitMethod,
    /// Standard error of the threshold from the fit covariance.
    pub threshold_stderr: Option<f64>,
}

impl ThresholdResult {
    /// Symmetric interval `threshold ± z·stderr`.
    pub fn interval(&self, z: f64) -> Option<(f64, f64)> {
        self.threshold_stderr
            .map(|s| (self.threshold - z * s, self.threshold + z * s))
    }
}

fn logistic(x: f64, x0: f64, delta: f64) -> f64 {
    1.0 / (1.0 + (-(x - x0) / delta).exp())
}

struct LogisticFit {
    x0: f64,
    delta: f64,
    rms: f64,
    x0_stderr: f64,
}

/// Levenberg-Marquardt on `(x0, ln Δ)`.
fn fit_logistic(xs: &[f64], ys: &[f64], x0: f64, delta: f64) -> Option<LogisticFit> {
    let n = xs.len();
    let mut p = [x0, delta.ln()];
    let sse = |p: &[f64; 2]| -> f64 {
        let d = p[1].exp();
        xs.iter().zip(ys).map(|(x, y)| (logistic(*x, p[0], d) - y).powi(2)).sum()
    };
    let jac = |p: &[f64; 2]| -> (f64, f64, f64, f64, f64) {
        // normal-equation entries (JᵀJ) and Jᵀr
        let d = p[1].exp();
        let (mut a11, mut a12, mut a22, mut g1, mut g2) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for (x, y) in xs.iter().zip(ys) {
            let f = logistic(*x, p[0], d);
            let s = f * (1.0 - f);
            let j1 = -s / d;
            let j2 = -s * (x - p[0]) / d;
            let r = f - y;
            a11 += j1 * j1;
            a12 += j1 * j2;
            a22 += j2 * j2;
            g1 += j1 * r;
            g2 += j2 * r;
        }
        (a11, a12, a22, g1, g2)
    };
    let mut lambda = 1e-3;
    let mut cur = sse(&p);
    for _ in 0..500 {
        let (a11, a12, a22, g1, g2) = jac(&p);
        let mut improved = false;
        for _ in 0..30 {
            let (b11, b22) = (a11 * (1.0 + lambda), a22 * (1.0 + lambda));
            let det = b11 * b22 - a12 * a12;
            if det.abs() < 1e-300 {
                lambda *= 10.0;
                continue;
            }
            let d0 = -(b22 * g1 - a12 * g2) / det;
            let d1 = -(b11 * g2 - a12 * g1) / det;
            let trial = [p[0] + d0, p[1] + d1.clamp(-2.0, 2.0)];
            let s = sse(&trial);
            if s.is_finite() && s <= cur {
                let converged = (cur - s) <= 1e-15 * cur.max(1e-300) + 1e-30;
                p = trial;
                cur = s;
                lambda = (lambda * 0.3).max(1e-12);
                improved = !converged;
                break;
            }
            lambda *= 10.0;
        }
        if !improved {
            break;
        }
    }
    let delta = p[1].exp();
    if !(p[0].is_finite() && delta.is_finite() && delta > 0.0) {
        return None;
    }
    let (a11, a12, a22, _, _) = jac(&p);
    let det = a11 * a22 - a12 * a12;
    let dof = n.saturating_sub(2).max(1) as f64;
    let x0_var = if det > 0.0 { cur / dof * a22 / det } else { f64::INFINITY };
    Some(LogisticFit {
        x0: p[0],
        delta,
        rms: (cur / n as f64).sqrt(),
        x0_stderr: x0_var.sqrt(),
    })
}

/// First drive at which the piecewise-linear curve reaches `level`.
fn crossing(xs: &[f64], ys: &[f64], level: f64) -> Option<f64> {
    if ys[0] >= level {
        return Some(xs[0]);
    }
    xs.windows(2).zip(ys.windows(2)).find_map(|(x, y)| {
        (y[0] < level && y[1] >= level).then(|| x[0] + (level - y[0]) / (y[1] - y[0]) * (x[1] - x[0]))
    })
}

/// Interpolation estimate on the running-maximum envelope of the curve.
fn interpolated_threshold(xs: &[f64], ys: &[f64], fit_residual: f64) -> Result<ThresholdResult> {
    let mut env = ys.to_vec();
    for i in 1..env.len() {
        env[i] = env[i].max(env[i - 1]);
    }
    let thr = crossing(xs, &env, 0.5).ok_or_else(|| Error::InsufficientData("curve never reaches 0.5".into()))?;
    let lo = crossing(xs, &env, 0.25).unwrap_or(thr);
    let hi = crossing(xs, &env, 0.75).unwrap_or(thr);
    // x(0.75) − x(0.25) = 2Δ ln 3 for the logistic shape
    let min_gap = xs.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min);
    let width = (2.0 * (hi - lo) / 3f64.ln()).max(min_gap * 1e-3);
    Ok(ThresholdResult {
        threshold: thr,
        width,
        fit_residual,
        method: FitMethod::Bisection,
        threshold_stderr: None,
    })
}

/// Threshold and width of an S-curve from a least-squares logistic fit
/// `P = 1/(1 + exp(−(x − x_cr)/Δ))`, falling back to interpolation when the
/// fit is poor, degenerate or lands outside the scanned range.
pub fn fit_threshold(curve: &SCurve) -> Result<ThresholdResult> {
    let xs = curve.drives();
    let ys = curve.probabilities();
    if xs.len() < 3 {
        return Err(Error::InsufficientData(format!("need at least 3 points, got {}", xs.len())));
    }
    let (lo, hi) = (xs[0], xs[xs.len() - 1]);
    let span = hi - lo;
    let p_min = ys.iter().copied().fold(f64::INFINITY, f64::min);
    let p_max = ys.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if p_min >= 0.25 || p_max <= 0.75 {
        return Err(Error::NeedsWiderScan {
            p_min,
            p_max,
            // drives stay positive
            suggested_lo: if p_min >= 0.25 { (lo - span).max(0.25 * lo) } else { lo },
            suggested_hi: if p_max <= 0.75 { hi + span } else { hi },
        });
    }
    let guess = interpolated_threshold(&xs, &ys, f64::NAN)?;
    let min_gap = xs.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min);
    let delta0 = (guess.width / 4.0).max(0.25 * min_gap);
    let Some(fit) = fit_logistic(&xs, &ys, guess.threshold, delta0) else {
        return interpolated_threshold(&xs, &ys, f64::NAN);
    };
    let degenerate = fit.delta < 0.05 * min_gap;
    let outside = fit.x0 < lo || fit.x0 > hi;
    if fit.rms > FIT_RESIDUAL_LIMIT || degenerate || outside {
        return interpolated_threshold(&xs, &ys, fit.rms);
    }
    Ok(ThresholdResult {
        threshold: fit.x0,
        width: 4.0 * fit.delta,
        fit_residual: fit.rms,
        method: FitMethod::LogisticFit,
        threshold_stderr: fit.x0_stderr.is_finite().then_some(fit.x0_stderr),
    })
}

/// Result of regressing `ε_cr` on `−ln T` (or `−ln T_eff`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogScalingFit {
    pub a: f64,
    pub b: f64,
    pub a_stderr: f64,
    pub b_stderr: f64,
    pub rms: f64,
    pub saturated: bool,
}

impl LogScalingFit {
    pub fn predict(&self, temperature: f64) -> Result<f64> {
        let x = if self.saturated {
            effective_temperature_with(temperature, TeffConvention::default())?
        } else {
            temperature
        };
        Ok(self.a - self.b * x.ln())
    }

    /// Coefficients of the `P1` law at chirp rate `alpha` and anharmonicity `p2`.
    pub fn coefficients(&self, alpha: f64, p2: f64) -> Result<ScalingCoefficients> {
        ScalingCoefficients::from_eps_fit(self.a, self.b, alpha, p2)
    }
}

/// Fits `ε_cr = a − b ln T` (with `T → T_eff(T)` when `saturated`).
pub fn fit_log_scaling(points: &[(f64, f64)], saturated: bool) -> Result<LogScalingFit> {
    if let Some((t, _)) = points.iter().find(|(t, _)| !(*t > 0.0) || !t.is_finite()) {
        return Err(invalid("temperature", format!("must be > 0, got {t}")));
    }
    let mut temps: Vec<f64> = points.iter().map(|p| p.0).collect();
    temps.sort_by(f64::total_cmp);
    temps.dedup();
    if temps.len() < 4 {
        return Err(Error::InsufficientData(format!(
            "need at least 4 temperatures, got {}",
            temps.len()
        )));
    }
    if temps[temps.len() - 1] / temps[0] < 10.0 {
        return Err(Error::InsufficientData("temperatures must span at least one decade".into()));
    }
    let xs: Vec<f64> = points
        .iter()
        .map(|(t, _)| {
            let v = if saturated {
                effective_temperature_with(*t, TeffConvention::default())?
            } else {
                *t
            };
            Ok(-v.ln())
        })
        .collect::<Result<_>>()?;
    let ys: Vec<f64> = points.iter().map(|p| p.1).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let b = sxy / sxx;
    let a = my - b * mx;
    let sse: f64 = xs.iter().zip(&ys).map(|(x, y)| (y - a - b * x).powi(2)).sum();
    let s2 = if xs.len() > 2 { sse / (n - 2.0) } else { 0.0 };
    Ok(LogScalingFit {
        a,
        b,
        a_stderr: (s2 * (1.0 / n + mx * mx / sxx)).sqrt(),
        b_stderr: (s2 / sxx).sqrt(),
        rms: (sse / n).sqrt(),
        saturated,
    })
}

/// Sum of `|B_n|²` over `n ≥ n_cut`, relative to the total norm.
pub fn captured_population(state: &QuantumState, n_cut: usize) -> f64 {
    let pops = state.populations();
    let total: f64 = pops.iter().sum();
    pops.iter().skip(n_cut).sum::<f64>() / total
}

/// Level cutoff separating captured from uncaptured population.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuantumCutoff {
    pub tau_final: f64,
    pub reference_p1: f64,
    /// Mean level of the strongly driven reference at `tau_final`.
    pub n_lock: f64,
    pub n_cut: usize,
}

fn require_past_first_crossing(p2: f64, tau_final: f64) -> Result<()> {
    let first = crossing_time(0, p2);
    if tau_final < first {
        return Err(Error::UndefinedCapture {
            tau_final,
            first_crossing: first,
        });
    }
    Ok(())
}

/// Runs a ground-state reference at `reference_p1` and sets
/// `n_cut = ⌈n_lock / 2⌉`.
pub fn calibrate_quantum_cutoff(
    dp: &DimensionlessParams,
    reference_p1: f64,
    tau_final: f64,
    config: &IntegratorConfig,
) -> Result<QuantumCutoff> {
    require_past_first_crossing(dp.p2, tau_final)?;
    let reference = dp.with_p1(reference_p1)?;
    let start = QuantumState::ground(config.n_levels, Frame::Rotating, dp.tau0)?;
    let cfg = config.endpoints_only();
    let traj = evolve_rotating(&start, &reference, tau_final, &cfg)?;
    if !traj.is_complete() {
        return Err(Error::Calibration(format!(
            "reference run at P1 = {reference_p1} left the {}-level basis; use more levels or an earlier tau_final",
            config.n_levels
        )));
    }
    let n_lock = traj.final_state().mean_level();
    if n_lock < 2.0 {
        return Err(Error::Calibration(format!(
            "reference run at P1 = {reference_p1} was not captured (mean level {n_lock:.3})"
        )));
    }
    Ok(QuantumCutoff {
        tau_final,
        reference_p1,
        n_lock,
        n_cut: (0.5 * n_lock).ceil() as usize,
    })
}

/// Captured population of a rotating-frame state at the end of a sweep.
pub fn quantum_capture_probability(
    final_state: &QuantumState,
    dp: &DimensionlessParams,
    cutoff: &QuantumCutoff,
) -> Result<f64> {
    if final_state.frame != Frame::Rotating {
        return Err(invalid("frame", "capture is evaluated on rotating-frame amplitudes"));
    }
    require_past_first_crossing(dp.p2, final_state.time)?;
    Ok(captured_population(final_state, cutoff.n_cut))
}

/// Fraction of final energies at or above `½ e_lock`, with its binomial
/// standard error.
pub fn classical_capture_probability(final_energies: &[f64], e_lock: f64) -> Result<(f64, f64)> {
    let n = final_energies.len();
    if n < MIN_CLASSICAL_TRAJECTORIES {
        return Err(Error::InsufficientData(format!(
            "need at least {MIN_CLASSICAL_TRAJECTORIES} trajectories, got {n}"
        )));
    }
    let hits = final_energies.iter().filter(|e| **e >= 0.5 * e_lock).count();
    let p = hits as f64 / n as f64;
    Ok((p, (p * (1.0 - p) / n as f64).sqrt()))
}

/// Energy `2αt/(3β)` of the trajectory locked to the chirped drive.
pub fn locked_energy(params: &OscillatorParams, t: f64) -> f64 {
    2.0 * params.alpha * t / (3.0 * params.beta)
}

/// Final energy of a single reference trajectory driven at `reference_eps`,
/// started with energy `max(T, 0.5)`.
pub fn calibrate_lock_energy(
    params: &OscillatorParams,
    reference_eps: f64,
    temperature: f64,
    t_final: f64,
    step: f64,
) -> Result<f64> {
    if !(params.beta > 0.0) {
        return Err(invalid("beta", "autoresonant capture needs beta > 0"));
    }
    let reference = params.with_epsilon(reference_eps)?;
    let x0 = (2.0 * temperature.max(0.5)).sqrt();
    let start = ClassicalState {
        x: x0,
        u: 0.0,
        t: params.t0,
    };
    let traj = integrate_duffing(&start, &reference, t_final, step)?;
    let e_ref = traj.last().expect("non-empty").energy(params.beta);
    let expected = locked_energy(params, t_final);
    if e_ref < 0.25 * expected {
        return Err(Error::Calibration(format!(
            "reference at eps = {reference_eps} ended with energy {e_ref:.4}, below a quarter of the locked value {expected:.4}"
        )));
    }
    Ok(e_ref)
}

/// A drive-amplitude scan of one capture model. `prepare` computes whatever
/// is shared across the grid; `point` evaluates one drive value.
pub trait CaptureExperiment: Sync {
    type Calibration: Sync;

    fn axis(&self) -> DriveAxis;
    fn meta(&self) -> EnsembleMeta;
    fn prepare(&self, drives: &[f64]) -> Result<Self::Calibration>;
    fn point(&self, drive: f64, calibration: &Self::Calibration) -> Result<SCurvePoint>;
}

/// Thermal ensemble of full Duffing trajectories; drive axis `ε`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassicalExperiment {
    /// `α`, `β` and `t0`; `ε` is replaced by the scanned value.
    pub params: OscillatorParams,
    pub temperature: f64,
    pub n_traj: usize,
    pub seed: u64,
    pub tau_final: f64,
    pub step: f64,
    /// Reference drive for the lock-energy calibration. When unset, twice the
    /// largest scanned drive, doubled until the reference is captured.
    pub reference_eps: Option<f64>,
}

impl ClassicalExperiment {
    pub fn new(params: OscillatorParams, temperature: f64, n_traj: usize, seed: u64) -> Self {
        Self {
            params,
            temperature,
            n_traj,
            seed,
            tau_final: PAR_TAU_FINAL,
            step: DEFAULT_DUFFING_STEP,
            reference_eps: None,
        }
    }

    pub fn t_final(&self) -> f64 {
        self.params.lab_time(self.tau_final)
    }

    /// Capture probability and the per-trajectory final energies.
    pub fn run_point(&self, eps: f64, e_lock: f64) -> Result<(SCurvePoint, Vec<f64>)> {
        let params = self.params.with_epsilon(eps)?;
        let ensemble = sample_thermal_at(self.temperature, self.n_traj, self.seed, self.params.t0)?;
        let run = run_duffing_ensemble(&ensemble, &params, self.t_final(), self.step, None)?;
        let energies = run.final_energies();
        let (p, se) = classical_capture_probability(&energies, e_lock)?;
        Ok((
            SCurvePoint {
                drive: eps,
                probability: p,
                stderr: se,
            },
            energies,
        ))
    }
}

impl CaptureExperiment for ClassicalExperiment {
    type Calibration = f64;

    fn axis(&self) -> DriveAxis {
        DriveAxis::Epsilon
    }

    fn meta(&self) -> EnsembleMeta {
        EnsembleMeta {
            seed: Some(self.seed),
            n_traj: Some(self.n_traj),
            quantum: false,
        }
    }

    fn prepare(&self, drives: &[f64]) -> Result<f64> {
        let max = drives.iter().copied().fold(0.0, f64::max);
        if let Some(eps) = self.reference_eps {
            return calibrate_lock_energy(&self.params, eps, self.temperature, self.t_final(), self.step);
        }
        // a grid lying wholly below threshold still needs a captured reference
        let mut reference = 2.0 * max;
        let mut last = None;
        for _ in 0..REFERENCE_DOUBLINGS {
            match calibrate_lock_energy(&self.params, reference, self.temperature, self.t_final(), self.step) {
                Ok(e) => return Ok(e),
                Err(Error::Calibration(msg)) => last = Some(msg),
                Err(e) => return Err(e),
            }
            reference *= 2.0;
        }
        Err(Error::Calibration(last.unwrap_or_default()))
    }

    fn point(&self, drive: f64, e_lock: &f64) -> Result<SCurvePoint> {
        if drive == 0.0 {
            // no modulation, no parametric growth
            return Ok(SCurvePoint {
                drive,
                probability: 0.0,
                stderr: 0.0,
            });
        }
        self.run_point(drive, *e_lock).map(|r| r.0)
    }
}

/// Thermal mixture of Fock states evolved with the slow quantum equations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuantumExperiment {
    /// `P2` and `τ0`; `P1` is replaced by the scanned value.
    pub base: DimensionlessParams,
    /// Chirp rate for an `ε` axis (`P1 = ε/(8√α)`); `None` scans `P1`.
    pub alpha: Option<f64>,
    pub temperature: f64,
    pub tau_final: f64,
    pub config: IntegratorConfig,
    /// Reference drive for the cutoff calibration; defaults to twice the
    /// largest scanned `P1`, and at least 0.5.
    pub reference_p1: Option<f64>,
    /// Boltzmann weight left out of the mixture.
    pub weight_tail: f64,
}

impl QuantumExperiment {
    pub fn new(base: DimensionlessParams, temperature: f64, tau_final: f64, config: IntegratorConfig) -> Self {
        Self {
            base,
            alpha: None,
            temperature,
            tau_final,
            config,
            reference_p1: None,
            weight_tail: 1e-4,
        }
    }

    pub fn with_epsilon_axis(mut self, alpha: f64) -> Self {
        self.alpha = Some(alpha);
        self
    }

    fn p1_of(&self, drive: f64) -> f64 {
        match self.alpha {
            Some(alpha) => drive / (8.0 * alpha.sqrt()),
            None => drive,
        }
    }

    /// `β` implied by `P2` when the chirp rate is known, used for the level
    /// spacing of the thermal weights.
    fn beta(&self) -> f64 {
        self.alpha.map_or(0.0, |a| 4.0 * self.base.p2 * a.sqrt() / 3.0)
    }

    pub fn level_weights(&self) -> Result<Vec<f64>> {
        thermal_level_weights(self.temperature, self.beta(), self.config.n_levels / 4, self.weight_tail)
    }

    /// Weighted captured population at one `P1`.
    pub fn capture_at_p1(&self, p1: f64, cutoff: &QuantumCutoff) -> Result<f64> {
        let dp = self.base.with_p1(p1)?;
        let weights = self.level_weights()?;
        let cfg = self.config.endpoints_only();
        let parts: Vec<Result<f64>> = weights
            .par_iter()
            .enumerate()
            .map(|(n, w)| {
                let start = QuantumState::fock(n, cfg.n_levels, Frame::Rotating, dp.tau0)?;
                let traj = evolve_rotating(&start, &dp, self.tau_final, &cfg)?.require_complete()?;
                Ok(w * quantum_capture_probability(traj.final_state(), &dp, cutoff)?)
            })
            .collect();
        let total: f64 = weights.iter().sum();
        let mut acc = 0.0;
        for p in parts {
            acc += p?;
        }
        Ok((acc / total).clamp(0.0, 1.0))
    }
}

impl CaptureExperiment for QuantumExperiment {
    type Calibration = QuantumCutoff;

    fn axis(&self) -> DriveAxis {
        if self.alpha.is_some() {
            DriveAxis::Epsilon
        } else {
            DriveAxis::P1
        }
    }

    fn meta(&self) -> EnsembleMeta {
        EnsembleMeta {
            seed: None,
            n_traj: None,
            quantum: true,
        }
    }

    fn prepare(&self, drives: &[f64]) -> Result<QuantumCutoff> {
        let max = drives.iter().map(|d| self.p1_of(*d)).fold(0.0, f64::max);
        let reference = self.reference_p1.unwrap_or((2.0 * max).max(0.5));
        calibrate_quantum_cutoff(&self.base, reference, self.tau_final, &self.config)
    }

    fn point(&self, drive: f64, cutoff: &QuantumCutoff) -> Result<SCurvePoint> {
        Ok(SCurvePoint {
            drive,
            probability: self.capture_at_p1(self.p1_of(drive), cutoff)?,
            stderr: 0.0,
        })
    }
}

/// Thermal ensemble of the averaged amplitude-phase system; drive axis `P1`,
/// or `ε` when `alpha` is set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AveragedExperiment {
    pub base: DimensionlessParams,
    pub alpha: Option<f64>,
    pub temperature: f64,
    pub n_traj: usize,
    pub seed: u64,
    pub tau_final: f64,
    pub step: f64,
    pub model: AveragedModel,
}

impl AveragedExperiment {
    pub fn new(base: DimensionlessParams, temperature: f64, n_traj: usize, seed: u64) -> Self {
        Self {
            base,
            alpha: None,
            temperature,
            n_traj,
            seed,
            tau_final: PAR_TAU_FINAL,
            step: 1e-2,
            model: AveragedModel::default(),
        }
    }
}

impl CaptureExperiment for AveragedExperiment {
    type Calibration = ();

    fn axis(&self) -> DriveAxis {
        if self.alpha.is_some() {
            DriveAxis::Epsilon
        } else {
            DriveAxis::P1
        }
    }

    fn meta(&self) -> EnsembleMeta {
        EnsembleMeta {
            seed: Some(self.seed),
            n_traj: Some(self.n_traj),
            quantum: false,
        }
    }

    fn prepare(&self, _drives: &[f64]) -> Result<()> {
        if self.n_traj < MIN_CLASSICAL_TRAJECTORIES {
            return Err(Error::InsufficientData(format!(
                "need at least {MIN_CLASSICAL_TRAJECTORIES} trajectories, got {}",
                self.n_traj
            )));
        }
        Ok(())
    }

    fn point(&self, drive: f64, _: &()) -> Result<SCurvePoint> {
        let p1 = self.alpha.map_or(drive, |a| drive / (8.0 * a.sqrt()));
        let dp = self.base.with_p1(p1)?;
        let initial = sample_averaged_thermal(self.temperature, &dp, self.n_traj, self.seed, &self.model)?;
        let finals = run_averaged_ensemble(&initial, &dp, self.tau_final, self.step, &self.model)?;
        let lock = self.model.locked_amplitude_sq(self.tau_final);
        let energies: Vec<f64> = finals.iter().map(|s| s.amplitude * s.amplitude).collect();
        let (p, se) = classical_capture_probability(&energies, lock)?;
        Ok(SCurvePoint {
            drive,
            probability: p,
            stderr: se,
        })
    }
}

/// Evaluates `experiment` at every drive value. All points reuse the same
/// random stream, so neighbouring points differ only through the drive.
pub fn scan_scurve<E: CaptureExperiment>(drives: &[f64], experiment: &E) -> Result<SCurve> {
    if drives.len() < 5 {
        return Err(Error::InsufficientData(format!(
            "an S-curve needs at least 5 drive values, got {}",
            drives.len()
        )));
    }
    if drives.windows(2).any(|w| !(w[1] >= w[0])) || drives.iter().any(|d| !(*d >= 0.0)) {
        return Err(invalid("drive grid", "values must be >= 0 and non-decreasing"));
    }
    let calibration = if drives.iter().all(|d| *d == 0.0) {
        None
    } else {
        Some(experiment.prepare(drives)?)
    };
    let points: Vec<Result<SCurvePoint>> = drives
        .par_iter()
        .map(|d| match &calibration {
            Some(c) => experiment.point(*d, c),
            None => Ok(SCurvePoint {
                drive: *d,
                probability: 0.0,
                stderr: 0.0,
            }),
        })
        .collect();
    SCurve::new(
        experiment.axis(),
        points.into_iter().collect::<Result<_>>()?,
        experiment.meta(),
    )
}

/// Scans and fits, re-scanning over the suggested range (same number of
/// points) up to `max_widen` times while the curve misses the 50% level.
pub fn scan_threshold<E: CaptureExperiment>(
    drives: &[f64],
    experiment: &E,
    max_widen: usize,
) -> Result<(SCurve, ThresholdResult)> {
    let mut grid = drives.to_vec();
    let mut widened = 0;
    loop {
        let curve = scan_scurve(&grid, experiment)?;
        match fit_threshold(&curve) {
            Ok(fit) => return Ok((curve, fit)),
            Err(Error::NeedsWiderScan {
                suggested_lo,
                suggested_hi,
                ..
            }) if widened < max_widen => {
                log::info!("widening scan to [{suggested_lo:.4e}, {suggested_hi:.4e}]");
                grid = linear_grid(suggested_lo, suggested_hi, grid.len());
                widened += 1;
            }
            Err(e) => return Err(e),
        }
    }
}

/// `n` evenly spaced values on `[lo, hi]`.
pub fn linear_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..n).map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64).collect(),
    }
}

/// `n` log-spaced values on `[lo, hi]`.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    linear_grid(lo.ln(), hi.ln(), n).into_iter().map(f64::exp).collect()
}

/// One temperature row of the threshold-versus-temperature table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TemperatureRow {
    pub temperature: f64,
    pub eps_cr_classical: Option<f64>,
    pub eps_cr_quantum: Option<f64>,
    pub theory_unsaturated: Option<f64>,
    pub theory_saturated: f64,
}

pub fn temperature_table(
    temperatures: &[f64],
    classical: &[Option<f64>],
    quantum: &[Option<f64>],
    coeffs: &ScalingCoefficients,
    convention: TeffConvention,
) -> Result<Vec<TemperatureRow>> {
    temperatures
        .iter()
        .enumerate()
        .map(|(i, t)| {
            Ok(TemperatureRow {
                temperature: *t,
                eps_cr_classical: classical.get(i).copied().flatten(),
                eps_cr_quantum: quantum.get(i).copied().flatten(),
                theory_unsaturated: par_threshold_eps_classical(*t, coeffs).ok(),
                theory_saturated: par_threshold_eps_with(*t, coeffs, convention)?,
            })
        })
        .collect()
}

/// One anharmonicity row of the threshold-versus-`P2` table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnharmonicityRow {
    pub p2: f64,
    pub p1_cr_quantum: Option<f64>,
    pub p1_cr_classical: Option<f64>,
    pub plc_line: f64,
    pub par_line: Option<f64>,
    /// `P1` on the separator `P2 = (P1 + 1)/4`, when positive.
    pub separator: Option<f64>,
}

pub fn anharmonicity_table(
    p2_values: &[f64],
    quantum: &[Option<f64>],
    classical: &[Option<f64>],
    temperature: f64,
    coeffs: &ScalingCoefficients,
) -> Vec<AnharmonicityRow> {
    let plc = plc_threshold();
    p2_values
        .iter()
        .enumerate()
        .map(|(i, p2)| {
            let sep = 4.0 * p2 - 1.0;
            debug_assert!((separator_p2(sep) - p2).abs() < 1e-12);
            AnharmonicityRow {
                p2: *p2,
                p1_cr_quantum: quantum.get(i).copied().flatten(),
                p1_cr_classical: classical.get(i).copied().flatten(),
                plc_line: plc,
                par_line: par_threshold_p1(*p2, temperature, coeffs).ok(),
                separator: (sep > 0.0).then_some(sep),
            }
        })
        .collect()
}

/// Drive value at which `f` crosses one half on `[lo, hi]`, by bisection.
pub fn half_crossing<F: Fn(f64) -> f64>(f: F, lo: f64, hi: f64, tol: f64) -> Result<f64> {
    bisect(|x| f(x) - 0.5, lo, hi, tol)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::theory::plc_capture_total;
    use approx::assert_relative_eq;

    fn curve(xs: &[f64], f: impl Fn(f64) -> f64) -> SCurve {
        let pts = xs
            .iter()
            .map(|x| SCurvePoint {
                drive: *x,
                probability: f(*x),
                stderr: 0.0,
            })
            .collect();
        SCurve::new(
            DriveAxis::Epsilon,
            pts,
            EnsembleMeta {
                seed: None,
                n_traj: None,
                quantum: true,
            },
        )
        .unwrap()
    }

    #[test]
    fn logistic_recovered() {
        let xs = linear_grid(0.015, 0.025, 21);
        let r = fit_threshold(&curve(&xs, |x| logistic(x, 0.02, 0.001))).unwrap();
        assert_eq!(r.method, FitMethod::LogisticFit);
        assert!((r.threshold - 0.02).abs() < 1e-4);
        assert!((r.width - 0.004).abs() < 1e-4);
        assert!(r.fit_residual < 1e-10);
    }

    #[test]
    fn step_data_falls_back() {
        let xs = linear_grid(0.015, 0.025, 11);
        let r = fit_threshold(&curve(&xs, |x| if x >= 0.02 - 1e-12 { 1.0 } else { 0.0 })).unwrap();
        let h = 0.001;
        assert!((r.threshold - 0.02).abs() <= h);
        assert!(r.width > 0.0 && r.width <= 2.0 * h);
    }

    #[test]
    fn narrow_scan_rejected() {
        let xs = linear_grid(0.03, 0.04, 6);
        match fit_threshold(&curve(&xs, |x| logistic(x, 0.02, 0.001))) {
            Err(Error::NeedsWiderScan { suggested_lo, .. }) => assert!(suggested_lo < 0.03),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn scurve_validates() {
        let pt = |d, p| SCurvePoint {
            drive: d,
            probability: p,
            stderr: 0.0,
        };
        let meta = EnsembleMeta {
            seed: Some(1),
            n_traj: Some(30),
            quantum: false,
        };
        assert!(SCurve::new(DriveAxis::P1, vec![pt(0.2, 0.1), pt(0.1, 0.2)], meta).is_err());
        assert!(SCurve::new(DriveAxis::P1, vec![pt(0.1, 1.2)], meta).is_err());
    }

    #[test]
    fn log_scaling_exact() {
        let pts: Vec<(f64, f64)> = [0.5, 1.0, 2.0, 4.0, 8.0]
            .iter()
            .map(|t| (*t, 0.0217 - 0.0033 * f64::ln(*t)))
            .collect();
        let f = fit_log_scaling(&pts, false).unwrap();
        assert_relative_eq!(f.a, 0.0217, epsilon = 1e-12);
        assert_relative_eq!(f.b, 0.0033, epsilon = 1e-12);
        assert!(fit_log_scaling(&pts[..3], false).is_err());
        assert!(fit_log_scaling(&[(0.0, 0.1), (1.0, 0.1), (2.0, 0.1), (10.0, 0.1)], false).is_err());
        assert!(fit_log_scaling(&[(1.0, 0.1), (2.0, 0.1), (3.0, 0.1), (4.0, 0.1)], false).is_err());
    }

    #[test]
    fn classical_probability_counts() {
        let e: Vec<f64> = (0..40).map(|i| if i < 10 { 5.0 } else { 0.1 }).collect();
        let (p, se) = classical_capture_probability(&e, 4.0).unwrap();
        assert_eq!(p, 0.25);
        assert_relative_eq!(se, (0.25f64 * 0.75 / 40.0).sqrt(), epsilon = 1e-15);
        assert!(classical_capture_probability(&e[..29], 4.0).is_err());
    }

    #[test]
    fn capture_needs_first_crossing() {
        let dp = DimensionlessParams::new(0.5, 10.0, -10.0).unwrap();
        let cfg = IntegratorConfig::plc();
        assert!(matches!(
            calibrate_quantum_cutoff(&dp, 1.0, 25.0, &cfg),
            Err(Error::UndefinedCapture { .. })
        ));
    }

    #[test]
    fn plc_capture_matches_cascade() {
        let dp = DimensionlessParams::new(0.3, 10.0, -10.0).unwrap();
        let cfg = IntegratorConfig::plc().with_levels(24);
        let tau = plc_tau_final(10.0);
        let cut = calibrate_quantum_cutoff(&dp, 1.0, tau, &cfg).unwrap();
        // between the first transitions and the top of the ladder at τ = 130
        assert!((3..=4).contains(&cut.n_cut), "{cut:?}");
        let exp = QuantumExperiment::new(dp, 0.0, tau, cfg);
        let p = exp.capture_at_p1(0.3, &cut).unwrap();
        assert!((p - plc_capture_total(0.3, 10)).abs() < 0.05, "{p}");
        assert_eq!(exp.capture_at_p1(0.0, &cut).unwrap(), 0.0);
    }

    #[test]
    fn tables_have_expected_lines() {
        let c = ScalingCoefficients::reference();
        let rows = temperature_table(&[0.0, 1.0], &[None, Some(0.02)], &[], &c, TeffConvention::default()).unwrap();
        assert_eq!(rows[0].theory_unsaturated, None);
        assert_relative_eq!(rows[1].theory_unsaturated.unwrap(), 0.0217, epsilon = 1e-15);
        assert_relative_eq!(rows[0].theory_saturated, 0.0217 - 0.0033 * 0.5f64.ln(), epsilon = 1e-15);
        let t = anharmonicity_table(&[0.1, 5.0], &[], &[], 0.0, &c);
        assert_eq!(t[0].separator, None);
        assert_eq!(t[1].separator, Some(19.0));
        assert_relative_eq!(t[1].plc_line, plc_threshold(), epsilon = 0.0);
    }

    #[test]
    fn grids() {
        assert_eq!(linear_grid(0.0, 1.0, 3), vec![0.0, 0.5, 1.0]);
        let g = log_grid(0.01, 1.0, 3);
        assert_relative_eq!(g[1], 0.1, epsilon = 1e-15);
        assert!((quantum_tau_final(10.0, 40) - 130.0).abs() < 1e-12);
        assert!((quantum_tau_final(0.075, 250) - 20.0).abs() < 1e-12);
    }
}
