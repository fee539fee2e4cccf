//! Classical dynamics: the modulated Duffing equation
//! `x'' + (1 + ε cos φ) x + β x³ = 0` over thermal Monte Carlo ensembles, and
//! the single-resonance averaged system for the slow amplitude and phase
//! mismatch.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::params::{modulation_phase, DimensionlessParams, OscillatorParams};

/// Default fixed step for the Duffing integrator, 200 steps per linear period.
pub const DEFAULT_DUFFING_STEP: f64 = 2.0 * PI / 200.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassicalState {
    pub x: f64,
    /// Velocity `dx/dt`.
    pub u: f64,
    pub t: f64,
}

impl ClassicalState {
    /// Unmodulated energy `u²/2 + x²/2 + βx⁴/4`.
    pub fn energy(&self, beta: f64) -> f64 {
        let x2 = self.x * self.x;
        0.5 * self.u * self.u + 0.5 * x2 + 0.25 * beta * x2 * x2
    }

    fn is_finite(&self) -> bool {
        self.x.is_finite() && self.u.is_finite()
    }
}

/// Independent RNG stream for one trajectory of an ensemble.
pub fn trajectory_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassicalEnsemble {
    pub seed: u64,
    pub temperature: f64,
    pub states: Vec<ClassicalState>,
}

impl ClassicalEnsemble {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }
}

/// Draws `n_traj` initial conditions from `f(x, u) ∝ exp(−(x² + u²)/(2T))`,
/// all starting at time `t0`.
pub fn sample_thermal_at(temperature: f64, n_traj: usize, seed: u64, t0: f64) -> Result<ClassicalEnsemble> {
    if !temperature.is_finite() || temperature <= 0.0 {
        return Err(invalid(
            "temperature",
            format!("classical ensembles need T > 0 (got {temperature}); zero energy is a fixed point"),
        ));
    }
    if n_traj == 0 {
        return Err(invalid("n_traj", "must be >= 1"));
    }
    let sd = temperature.sqrt();
    let states = (0..n_traj)
        .map(|i| {
            let mut rng = trajectory_rng(seed, i);
            let x: f64 = rng.sample(StandardNormal);
            let u: f64 = rng.sample(StandardNormal);
            ClassicalState {
                x: sd * x,
                u: sd * u,
                t: t0,
            }
        })
        .collect();
    Ok(ClassicalEnsemble {
        seed,
        temperature,
        states,
    })
}

pub fn sample_thermal(temperature: f64, n_traj: usize, seed: u64) -> Result<ClassicalEnsemble> {
    sample_thermal_at(temperature, n_traj, seed, 0.0)
}

/// Precomputed `cos φ` on the half-step grid of a fixed-step RK4 run, shared
/// by every trajectory of an ensemble.
struct DriveTable {
    t0: f64,
    h: f64,
    n_steps: usize,
    cos_half: Vec<f64>,
}

impl DriveTable {
    fn new(t0: f64, t_final: f64, step: f64, alpha: f64) -> Self {
        let span = t_final - t0;
        let n_steps = (span / step).ceil().max(1.0) as usize;
        let h = span / n_steps as f64;
        let cos_half = (0..=2 * n_steps)
            .map(|k| modulation_phase(t0 + 0.5 * h * k as f64, alpha).cos())
            .collect();
        Self {
            t0,
            h,
            n_steps,
            cos_half,
        }
    }

    fn time(&self, k: usize) -> f64 {
        if k == self.n_steps {
            self.t0 + self.h * self.n_steps as f64
        } else {
            self.t0 + self.h * k as f64
        }
    }
}

#[inline(always)]
fn duffing_accel(x: f64, eps: f64, beta: f64, c: f64) -> f64 {
    -(1.0 + eps * c) * x - beta * x * x * x
}

#[inline(always)]
fn duffing_rk4_step(x: &mut f64, u: &mut f64, h: f64, eps: f64, beta: f64, c0: f64, cm: f64, c1: f64) {
    let (x0, u0) = (*x, *u);
    let k1x = u0;
    let k1u = duffing_accel(x0, eps, beta, c0);
    let k2x = u0 + 0.5 * h * k1u;
    let k2u = duffing_accel(x0 + 0.5 * h * k1x, eps, beta, cm);
    let k3x = u0 + 0.5 * h * k2u;
    let k3u = duffing_accel(x0 + 0.5 * h * k2x, eps, beta, cm);
    let k4x = u0 + h * k3u;
    let k4u = duffing_accel(x0 + h * k3x, eps, beta, c1);
    *x = x0 + h / 6.0 * (k1x + 2.0 * k2x + 2.0 * k3x + k4x);
    *u = u0 + h / 6.0 * (k1u + 2.0 * k2u + 2.0 * k3u + k4u);
}

/// Runs one trajectory over the table, calling `sample` at every step index
/// that is a multiple of `every` (and at the end).
fn run_on_table<F: FnMut(usize, &ClassicalState)>(
    state: &ClassicalState,
    params: &OscillatorParams,
    table: &DriveTable,
    every: usize,
    mut sample: F,
) -> Result<ClassicalState> {
    let (mut x, mut u) = (state.x, state.u);
    let (eps, beta, h) = (params.epsilon, params.beta, table.h);
    sample(0, state);
    for k in 0..table.n_steps {
        let c = &table.cos_half[2 * k..2 * k + 3];
        duffing_rk4_step(&mut x, &mut u, h, eps, beta, c[0], c[1], c[2]);
        let kk = k + 1;
        if kk % every == 0 || kk == table.n_steps {
            let s = ClassicalState {
                x,
                u,
                t: table.time(kk),
            };
            if !s.is_finite() {
                return Err(Error::Integrator {
                    time: s.t,
                    reason: "non-finite Duffing state".into(),
                });
            }
            sample(kk, &s);
        }
    }
    Ok(ClassicalState {
        x,
        u,
        t: table.time(table.n_steps),
    })
}

/// Integrates the Duffing equation with fixed-step RK4 from `state.t` to
/// `t_final`, returning the state after every step.
pub fn integrate_duffing(
    state: &ClassicalState,
    params: &OscillatorParams,
    t_final: f64,
    step: f64,
) -> Result<Vec<ClassicalState>> {
    integrate_duffing_sampled(state, params, t_final, step, 1)
}

/// Like [`integrate_duffing`] but keeps only every `every`-th step.
pub fn integrate_duffing_sampled(
    state: &ClassicalState,
    params: &OscillatorParams,
    t_final: f64,
    step: f64,
    every: usize,
) -> Result<Vec<ClassicalState>> {
    check_duffing_args(state, t_final, step)?;
    let table = DriveTable::new(state.t, t_final, step, params.alpha);
    let mut out = Vec::with_capacity(table.n_steps / every.max(1) + 2);
    run_on_table(state, params, &table, every.max(1), |_, s| out.push(*s))?;
    Ok(out)
}

fn check_duffing_args(state: &ClassicalState, t_final: f64, step: f64) -> Result<()> {
    if !state.is_finite() || !state.t.is_finite() {
        return Err(Error::Integrator {
            time: state.t,
            reason: "non-finite initial state".into(),
        });
    }
    if !(step > 0.0) || step > 2.0 * PI / 100.0 {
        return Err(invalid("step", format!("must be in (0, 2π/100], got {step}")));
    }
    if !(t_final > state.t) {
        return Err(invalid("t_final", "must be after the initial time"));
    }
    Ok(())
}

/// Per-trajectory energies of an ensemble on a common time grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleRun {
    pub times: Vec<f64>,
    /// `energies[i][k]` is trajectory `i` at `times[k]`.
    pub energies: Vec<Vec<f64>>,
    pub final_states: Vec<ClassicalState>,
}

impl EnsembleRun {
    pub fn final_energies(&self) -> Vec<f64> {
        self.energies.iter().map(|e| *e.last().expect("non-empty")).collect()
    }
}

/// Propagates every member of `ensemble` to `t_final` in parallel, recording
/// energies roughly every `sample_interval` lab time units (endpoints only
/// when `None`). Results are ordered by trajectory index and independent of
/// the worker count.
pub fn run_duffing_ensemble(
    ensemble: &ClassicalEnsemble,
    params: &OscillatorParams,
    t_final: f64,
    step: f64,
    sample_interval: Option<f64>,
) -> Result<EnsembleRun> {
    let first = ensemble
        .states
        .first()
        .ok_or_else(|| invalid("ensemble", "must hold at least one trajectory"))?;
    check_duffing_args(first, t_final, step)?;
    if ensemble.states.iter().any(|s| s.t != first.t) {
        return Err(invalid("ensemble", "all trajectories must share the start time"));
    }
    let table = DriveTable::new(first.t, t_final, step, params.alpha);
    let every = match sample_interval {
        Some(dt) if dt > 0.0 => ((dt / table.h).round() as usize).max(1),
        _ => table.n_steps,
    };
    let mut times = vec![table.time(0)];
    let mut k = every;
    while k < table.n_steps {
        times.push(table.time(k));
        k += every;
    }
    times.push(table.time(table.n_steps));

    let beta = params.beta;
    let results: Vec<Result<(Vec<f64>, ClassicalState)>> = ensemble
        .states
        .par_iter()
        .map(|s| {
            let mut e = Vec::with_capacity(times.len());
            let fin = run_on_table(s, params, &table, every, |_, st| e.push(st.energy(beta)))?;
            Ok((e, fin))
        })
        .collect();
    let mut energies = Vec::with_capacity(results.len());
    let mut final_states = Vec::with_capacity(results.len());
    for r in results {
        let (e, f) = r?;
        energies.push(e);
        final_states.push(f);
    }
    Ok(EnsembleRun {
        times,
        energies,
        final_states,
    })
}

/// Summation by recursive halving; the result does not depend on how the
/// values were produced, only on their order.
pub fn pairwise_sum(v: &[f64]) -> f64 {
    if v.len() <= 8 {
        return v.iter().sum();
    }
    let mid = v.len() / 2;
    pairwise_sum(&v[..mid]) + pairwise_sum(&v[mid..])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyPoint {
    pub time: f64,
    pub mean: f64,
    pub stderr: f64,
}

/// Pointwise ensemble mean of the unmodulated energy with its standard error.
pub fn ensemble_mean_energy(run: &EnsembleRun) -> Vec<EnergyPoint> {
    let n = run.energies.len();
    run.times
        .iter()
        .enumerate()
        .map(|(k, &time)| {
            let col: Vec<f64> = run.energies.iter().map(|e| e[k]).collect();
            let mean = pairwise_sum(&col) / n as f64;
            let var = if n > 1 {
                let dev: Vec<f64> = col.iter().map(|e| (e - mean) * (e - mean)).collect();
                pairwise_sum(&dev) / (n - 1) as f64
            } else {
                0.0
            };
            EnergyPoint {
                time,
                mean,
                stderr: (var / n as f64).sqrt(),
            }
        })
        .collect()
}

/// Slow amplitude `A = √P2 · a` and phase mismatch `2θ − φ` of the averaged
/// system.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AveragedState {
    pub amplitude: f64,
    pub phase: f64,
}

impl AveragedState {
    /// Phase wrapped to `(−π, π]`.
    pub fn wrapped_phase(&self) -> f64 {
        let mut p = self.phase.rem_euclid(2.0 * PI);
        if p > PI {
            p -= 2.0 * PI;
        }
        p
    }
}

/// Normalization of the averaged system
/// `dA/dτ = 2P1 A sin ϕ`, `dϕ/dτ = A² − s τ + 4P1 cos ϕ`, with thermal
/// amplitudes Rayleigh-distributed with `σ² = v · P2 · T`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AveragedModel {
    /// Sweep coefficient `s`.
    pub sweep_rate: f64,
    /// Variance factor `v`.
    pub variance_factor: f64,
}

impl AveragedModel {
    /// Averaging the Duffing equation with `x = a cos θ`, `A = √P2 a` and
    /// `ω = 2 + αt` gives `s = 1` and, for `x, u ~ N(0, T)`, `σ² = P2 T`.
    pub const fn derived() -> Self {
        Self {
            sweep_rate: 1.0,
            variance_factor: 1.0,
        }
    }

    /// `s = 2`, `σ² = P2 T / 2`.
    pub const fn as_printed() -> Self {
        Self {
            sweep_rate: 2.0,
            variance_factor: 0.5,
        }
    }

    pub fn sigma_sq(&self, temperature: f64, p2: f64) -> f64 {
        self.variance_factor * p2 * temperature
    }

    /// Locked amplitude squared, `A² ≈ s τ`, once phase locking is established.
    pub fn locked_amplitude_sq(&self, tau: f64) -> f64 {
        self.sweep_rate * tau
    }
}

impl Default for AveragedModel {
    fn default() -> Self {
        Self::derived()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AveragedSample {
    pub tau: f64,
    pub state: AveragedState,
}

#[inline(always)]
fn averaged_rhs(tau: f64, a: f64, ph: f64, p1: f64, s: f64) -> (f64, f64) {
    let (sin, cos) = ph.sin_cos();
    (2.0 * p1 * a * sin, a * a - s * tau + 4.0 * p1 * cos)
}

/// Integrates the averaged system with fixed-step RK4 from `dp.tau0` to
/// `tau_final`, keeping every `every`-th step.
pub fn integrate_averaged(
    initial: &AveragedState,
    dp: &DimensionlessParams,
    tau_final: f64,
    step: f64,
    model: &AveragedModel,
    every: usize,
) -> Result<Vec<AveragedSample>> {
    if !(initial.amplitude >= 0.0) || !initial.phase.is_finite() {
        return Err(invalid("amplitude", "must be finite and >= 0"));
    }
    if !(step > 0.0) || !step.is_finite() {
        return Err(invalid("step", "must be finite and > 0"));
    }
    if !(tau_final > dp.tau0) {
        return Err(invalid("tau_final", "must be after tau0"));
    }
    let n_steps = ((tau_final - dp.tau0) / step).ceil() as usize;
    let h = (tau_final - dp.tau0) / n_steps as f64;
    if h < 1e-12 {
        return Err(Error::Integrator {
            time: dp.tau0,
            reason: "step size underflow".into(),
        });
    }
    let every = every.max(1);
    let (p1, s) = (dp.p1, model.sweep_rate);
    let (mut a, mut ph) = (initial.amplitude, initial.phase);
    let mut out = vec![AveragedSample {
        tau: dp.tau0,
        state: *initial,
    }];
    for k in 0..n_steps {
        let t = dp.tau0 + h * k as f64;
        let (a1, b1) = averaged_rhs(t, a, ph, p1, s);
        let (a2, b2) = averaged_rhs(t + 0.5 * h, a + 0.5 * h * a1, ph + 0.5 * h * b1, p1, s);
        let (a3, b3) = averaged_rhs(t + 0.5 * h, a + 0.5 * h * a2, ph + 0.5 * h * b2, p1, s);
        let (a4, b4) = averaged_rhs(t + h, a + h * a3, ph + h * b3, p1, s);
        a += h / 6.0 * (a1 + 2.0 * a2 + 2.0 * a3 + a4);
        ph += h / 6.0 * (b1 + 2.0 * b2 + 2.0 * b3 + b4);
        if !(a.is_finite() && ph.is_finite()) {
            return Err(Error::Integrator {
                time: t + h,
                reason: "non-finite averaged state".into(),
            });
        }
        let kk = k + 1;
        if kk % every == 0 || kk == n_steps {
            out.push(AveragedSample {
                tau: if kk == n_steps { tau_final } else { dp.tau0 + h * kk as f64 },
                state: AveragedState { amplitude: a, phase: ph },
            });
        }
    }
    Ok(out)
}

/// Averaged variables of a Duffing state: `x = a cos θ`, `u = −a sin θ`,
/// `A = √P2 a`, phase mismatch `2θ − φ(t)`.
pub fn averaged_from_classical(state: &ClassicalState, params: &OscillatorParams) -> AveragedState {
    let dp = params.to_dimensionless();
    let a = state.x.hypot(state.u);
    let theta = (-state.u).atan2(state.x);
    AveragedState {
        amplitude: dp.p2.sqrt() * a,
        phase: 2.0 * theta - modulation_phase(state.t, params.alpha),
    }
}

/// Thermal initial conditions for the averaged system: Rayleigh amplitudes of
/// scale `σ` and uniform phases.
pub fn sample_averaged_thermal(
    temperature: f64,
    dp: &DimensionlessParams,
    n_traj: usize,
    seed: u64,
    model: &AveragedModel,
) -> Result<Vec<AveragedState>> {
    if !temperature.is_finite() || temperature <= 0.0 {
        return Err(invalid("temperature", format!("must be > 0, got {temperature}")));
    }
    if !(dp.p2 > 0.0) {
        return Err(invalid("p2", "must be > 0"));
    }
    if n_traj == 0 {
        return Err(invalid("n_traj", "must be >= 1"));
    }
    let sigma = model.sigma_sq(temperature, dp.p2).sqrt();
    Ok((0..n_traj)
        .map(|i| {
            let mut rng = trajectory_rng(seed, i);
            let g1: f64 = rng.sample(StandardNormal);
            let g2: f64 = rng.sample(StandardNormal);
            let phase = rng.random::<f64>() * 2.0 * PI;
            AveragedState {
                amplitude: sigma * g1.hypot(g2),
                phase,
            }
        })
        .collect())
}

/// Final states of an averaged-system ensemble, computed in parallel.
pub fn run_averaged_ensemble(
    initial: &[AveragedState],
    dp: &DimensionlessParams,
    tau_final: f64,
    step: f64,
    model: &AveragedModel,
) -> Result<Vec<AveragedState>> {
    initial
        .par_iter()
        .map(|s| {
            integrate_averaged(s, dp, tau_final, step, model, usize::MAX)
                .map(|tr| tr.last().expect("non-empty").state)
        })
        .collect()
}
