//! Truncated-basis Schrödinger dynamics of the chirped parametric oscillator.
//!
//! Two frames are supported:
//!
//! * the lab frame, amplitudes `c_n` in the unmodulated energy basis with the
//!   full `cos φ` parametric coupling;
//! * the rotating frame, slow amplitudes `B_n(τ)` obtained after the rotating
//!   wave approximation, with `i dB_n/dτ = Γ_n B_n + P1 (√Q_{n+1} B_{n+2} + √Q_{n−1} B_{n−2})`.
//!
//! Only `n ↔ n ± 2` couplings exist, so even and odd ladders never mix.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::ode::{Control, Integrator, Method, OdeSystem, StepControl, StepStats};
use crate::params::{energy_level, modulation_phase, q, DimensionlessParams, OscillatorParams};

const I: Complex64 = Complex64::new(0.0, 1.0);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Frame {
    /// Lab-frame `c_n`; `time` is lab time `t`.
    Lab,
    /// Slow amplitudes `B_n`; `time` is slow time `τ`.
    Rotating,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantumState {
    pub amplitudes: Vec<Complex64>,
    pub frame: Frame,
    pub time: f64,
}

impl QuantumState {
    pub fn new(amplitudes: Vec<Complex64>, frame: Frame, time: f64) -> Result<Self> {
        if amplitudes.len() < 4 {
            return Err(invalid("n_levels", format!("need at least 4 levels, got {}", amplitudes.len())));
        }
        if !time.is_finite() || amplitudes.iter().any(|c| !c.is_finite()) {
            return Err(invalid("state", "non-finite amplitude or time"));
        }
        Ok(Self {
            amplitudes,
            frame,
            time,
        })
    }

    /// Pure Fock state `|n⟩` in a basis of `n_levels` levels.
    pub fn fock(n: usize, n_levels: usize, frame: Frame, time: f64) -> Result<Self> {
        if n >= n_levels {
            return Err(invalid("n", format!("level {n} outside truncation {n_levels}")));
        }
        let mut amps = vec![Complex64::default(); n_levels];
        amps[n] = Complex64::new(1.0, 0.0);
        Self::new(amps, frame, time)
    }

    pub fn ground(n_levels: usize, frame: Frame, time: f64) -> Result<Self> {
        Self::fock(0, n_levels, frame, time)
    }

    pub fn n_levels(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes.iter().map(|c| c.norm_sqr()).sum()
    }

    pub fn populations(&self) -> Vec<f64> {
        self.amplitudes.iter().map(|c| c.norm_sqr()).collect()
    }

    /// Population of the top two levels, watched by the truncation guard.
    pub fn tail_population(&self) -> f64 {
        tail_population(&self.amplitudes)
    }

    pub fn mean_level(&self) -> f64 {
        self.amplitudes
            .iter()
            .enumerate()
            .map(|(n, c)| n as f64 * c.norm_sqr())
            .sum()
    }

    /// Maps a rotating-frame state back to lab-frame amplitudes by reattaching
    /// the diagonal phases, `c_n = B_n exp(i ∫Γ̃_n dt − i E_n t)` with the
    /// phase integrals anchored at `t = 0`.
    pub fn to_lab_frame(&self, params: &OscillatorParams) -> QuantumState {
        match self.frame {
            Frame::Lab => self.clone(),
            Frame::Rotating => {
                let t = params.lab_time(self.time);
                let gamma = params.gamma();
                let amplitudes = self
                    .amplitudes
                    .iter()
                    .enumerate()
                    .map(|(n, b)| {
                        let nf = n as f64;
                        let theta = gamma * q(n) * t - 0.25 * nf * params.alpha * t * t;
                        let phase = theta - params.energy_level(n) * t;
                        b * Complex64::from_polar(1.0, phase)
                    })
                    .collect();
                QuantumState {
                    amplitudes,
                    frame: Frame::Lab,
                    time: t,
                }
            }
        }
    }
}

fn tail_population(amps: &[Complex64]) -> f64 {
    let n = amps.len();
    amps[n - 1].norm_sqr() + amps[n - 2].norm_sqr()
}

pub fn level_populations(state: &QuantumState) -> Vec<f64> {
    state.populations()
}

/// `Σ |c_n|² E_n` with the perturbative level energies.
pub fn mean_energy(state: &QuantumState, params: &OscillatorParams) -> f64 {
    state
        .amplitudes
        .iter()
        .enumerate()
        .map(|(n, c)| c.norm_sqr() * params.energy_level(n))
        .sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegratorConfig {
    pub method: Method,
    /// Fixed step (RK4) or initial trial step (adaptive), in the frame's time unit.
    pub step: f64,
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub n_levels: usize,
    /// Slow-time spacing of stored samples; `None` keeps only the endpoints.
    pub sample_stride: Option<f64>,
    /// Upper bound on the population of the top two levels.
    pub truncation_guard: f64,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self {
            method: Method::DormandPrince,
            step: 1e-3,
            rel_tol: 1e-9,
            abs_tol: 1e-9,
            n_levels: 40,
            sample_stride: Some(0.05),
            truncation_guard: 1e-6,
        }
    }
}

impl IntegratorConfig {
    /// Ladder-climbing defaults (40 levels). Tolerances are a decade below the
    /// generic default, which lets the norm drift past 1e-8 per unit time at
    /// strong drive.
    pub fn plc() -> Self {
        Self {
            rel_tol: 1e-10,
            abs_tol: 1e-10,
            ..Self::default()
        }
    }

    /// Autoresonance defaults (250 levels).
    pub fn par() -> Self {
        Self {
            n_levels: 250,
            ..Self::plc()
        }
    }

    pub fn with_levels(mut self, n_levels: usize) -> Self {
        self.n_levels = n_levels;
        self
    }

    pub fn endpoints_only(mut self) -> Self {
        self.sample_stride = None;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_levels < 4 {
            return Err(invalid("n_levels", "must be >= 4"));
        }
        if !(self.step > 0.0) || !self.step.is_finite() {
            return Err(invalid("step", "must be finite and > 0"));
        }
        if !(self.rel_tol > 0.0 && self.abs_tol > 0.0) {
            return Err(invalid("tolerance", "rel_tol and abs_tol must be > 0"));
        }
        if let Some(s) = self.sample_stride {
            if !(s > 0.0) || !s.is_finite() {
                return Err(invalid("sample_stride", "must be finite and > 0"));
            }
        }
        if !(self.truncation_guard > 0.0) {
            return Err(invalid("truncation_guard", "must be > 0"));
        }
        Ok(())
    }

    fn step_control(&self, time_scale: f64) -> StepControl {
        StepControl {
            method: self.method,
            step: self.step * time_scale,
            rel_tol: self.rel_tol,
            abs_tol: self.abs_tol,
            min_step: 1e-13 * time_scale,
            ..StepControl::default()
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub steps: StepStats,
    /// Largest `|Σ|c_n|² − N₀|/N₀` seen over accepted steps.
    pub max_norm_deviation: f64,
    /// Largest `|Σ|c_n|² − N₀|/N₀` divided by the elapsed slow time at that step.
    pub max_norm_drift_rate: f64,
    /// Largest population of the top two levels.
    pub max_tail_population: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Outcome {
    Completed,
    /// The top two levels exceeded the guard; integration stopped at `time`.
    TruncationExceeded { time: f64, tail: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub samples: Vec<QuantumState>,
    pub diagnostics: Diagnostics,
    pub outcome: Outcome,
}

impl Trajectory {
    pub fn final_state(&self) -> &QuantumState {
        self.samples.last().expect("trajectory always holds the initial state")
    }

    pub fn is_complete(&self) -> bool {
        matches!(self.outcome, Outcome::Completed)
    }

    /// Turns a truncated run into an error.
    pub fn require_complete(self) -> Result<Self> {
        match self.outcome {
            Outcome::Completed => Ok(self),
            Outcome::TruncationExceeded { time, tail } => Err(Error::Integrator {
                time,
                reason: format!(
                    "truncation guard exceeded: top-level population {tail:e} with {} levels",
                    self.final_state().n_levels()
                ),
            }),
        }
    }

    pub fn times(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.time).collect()
    }

    /// State closest to the requested time.
    pub fn state_at(&self, time: f64) -> &QuantumState {
        self.samples
            .iter()
            .min_by(|a, b| (a.time - time).abs().total_cmp(&(b.time - time).abs()))
            .expect("non-empty")
    }
}

fn sqrt_q_table(n_levels: usize) -> Vec<f64> {
    (0..=n_levels + 1).map(|n| q(n).sqrt()).collect()
}

/// Slow equations in the rotating frame.
pub struct RotatingSystem {
    p1: f64,
    dp: DimensionlessParams,
    sqrt_q: Vec<f64>,
}

impl RotatingSystem {
    pub fn new(dp: DimensionlessParams, n_levels: usize) -> Self {
        Self {
            p1: dp.p1,
            dp,
            sqrt_q: sqrt_q_table(n_levels),
        }
    }
}

impl OdeSystem for RotatingSystem {
    type Elem = Complex64;

    fn rhs(&self, tau: f64, b: &[Complex64], db: &mut [Complex64]) {
        let n_levels = b.len();
        for n in 0..n_levels {
            let mut h = b[n] * self.dp.diagonal(n, tau);
            if n + 2 < n_levels {
                h += b[n + 2] * (self.p1 * self.sqrt_q[n + 1]);
            }
            if n >= 2 {
                h += b[n - 2] * (self.p1 * self.sqrt_q[n - 1]);
            }
            db[n] = -I * h;
        }
    }
}

/// Slow equations in the interaction picture `b_n = B_n e^{iθ_n(τ)}` with
/// `θ_n = ∫₀^τ Γ_n = (n/2)(P2 (n+1) τ − τ²/2)`. Only pair detunings remain,
/// so the step size no longer follows the largest diagonal frequency.
pub struct InteractionSystem {
    p1: f64,
    p2: f64,
    sqrt_q: Vec<f64>,
}

impl InteractionSystem {
    pub fn new(dp: DimensionlessParams, n_levels: usize) -> Self {
        Self {
            p1: dp.p1,
            p2: dp.p2,
            sqrt_q: sqrt_q_table(n_levels),
        }
    }

    /// `θ_n(τ)`.
    pub fn phase(&self, n: usize, tau: f64) -> f64 {
        let nf = n as f64;
        0.5 * nf * (self.p2 * (nf + 1.0) * tau - 0.5 * tau * tau)
    }

    /// Maps slow amplitudes `B_n` at `tau` to interaction-picture amplitudes.
    pub fn to_interaction(&self, tau: f64, b: &mut [Complex64]) {
        for (n, v) in b.iter_mut().enumerate() {
            *v *= Complex64::from_polar(1.0, self.phase(n, tau));
        }
    }

    pub fn from_interaction(&self, tau: f64, b: &mut [Complex64]) {
        for (n, v) in b.iter_mut().enumerate() {
            *v *= Complex64::from_polar(1.0, -self.phase(n, tau));
        }
    }
}

impl OdeSystem for InteractionSystem {
    type Elem = Complex64;

    fn rhs(&self, tau: f64, b: &[Complex64], db: &mut [Complex64]) {
        let n_levels = b.len();
        // u_m = exp(−i(θ_{m+2} − θ_m)), θ_{m+2} − θ_m = τ((2m + 3) P2 − τ/2)
        let step = Complex64::from_polar(1.0, -2.0 * self.p2 * tau);
        let mut u = Complex64::from_polar(1.0, -tau * (3.0 * self.p2 - 0.5 * tau));
        let mut prev = [Complex64::default(); 2];
        for n in 0..n_levels {
            let mut h = Complex64::default();
            if n + 2 < n_levels {
                h += u * b[n + 2] * (self.p1 * self.sqrt_q[n + 1]);
            }
            if n >= 2 {
                h += prev[n % 2].conj() * b[n - 2] * (self.p1 * self.sqrt_q[n - 1]);
            }
            prev[n % 2] = u;
            u *= step;
            db[n] = -I * h;
        }
    }
}

/// Lab-frame equations with the full `cos φ` modulation.
pub struct LabSystem {
    energies: Vec<f64>,
    half_eps: f64,
    alpha: f64,
    sqrt_q: Vec<f64>,
}

impl LabSystem {
    pub fn new(params: &OscillatorParams, n_levels: usize) -> Self {
        Self {
            energies: (0..n_levels).map(|n| energy_level(n, params.beta)).collect(),
            half_eps: 0.25 * params.epsilon,
            alpha: params.alpha,
            sqrt_q: sqrt_q_table(n_levels),
        }
    }
}

impl OdeSystem for LabSystem {
    type Elem = Complex64;

    fn rhs(&self, t: f64, c: &[Complex64], dc: &mut [Complex64]) {
        let n_levels = c.len();
        let drive = self.half_eps * modulation_phase(t, self.alpha).cos();
        for n in 0..n_levels {
            let mut coupling = c[n] * (2.0 * n as f64 + 1.0);
            if n + 2 < n_levels {
                coupling += c[n + 2] * self.sqrt_q[n + 1];
            }
            if n >= 2 {
                coupling += c[n - 2] * self.sqrt_q[n - 1];
            }
            dc[n] = -I * (c[n] * self.energies[n] + coupling * drive);
        }
    }
}

/// Integrates `sys` from `initial` to `t_final`, storing samples on a grid of
/// spacing `stride` (frame time units) and enforcing the truncation guard.
fn propagate<S: OdeSystem<Elem = Complex64>>(
    sys: &S,
    initial: &QuantumState,
    t_final: f64,
    config: &IntegratorConfig,
    time_scale: f64,
) -> Result<Trajectory> {
    config.validate()?;
    if initial.n_levels() != config.n_levels {
        return Err(invalid(
            "n_levels",
            format!(
                "state has {} levels, config expects {}",
                initial.n_levels(),
                config.n_levels
            ),
        ));
    }
    if !t_final.is_finite() || t_final == initial.time {
        return Err(invalid("t_final", "must be finite and differ from the initial time"));
    }
    let t0 = initial.time;
    let dir = (t_final - t0).signum();
    let mut integ = Integrator::new(config.step_control(time_scale), initial.n_levels())?;
    let mut y = initial.amplitudes.clone();
    let norm0 = initial.norm_sqr();
    let mut diag = Diagnostics {
        max_tail_population: tail_population(&y),
        ..Diagnostics::default()
    };
    let mut samples = vec![initial.clone()];

    let mut targets = Vec::new();
    if let Some(stride) = config.sample_stride {
        let stride = stride * time_scale;
        let n = ((t_final - t0).abs() / stride).floor() as usize;
        for k in 1..=n {
            let t = t0 + dir * k as f64 * stride;
            if (t - t_final).abs() > 1e-9 * stride {
                targets.push(t);
            }
        }
    }
    targets.push(t_final);

    let guard = config.truncation_guard;
    let mut t = t0;
    let mut violation: Option<(f64, f64)> = None;
    for &target in &targets {
        let reached = integ.advance(sys, t, target, &mut y, |tt, yy| {
            let norm = yy.iter().map(|c| c.norm_sqr()).sum::<f64>();
            let dev = (norm / norm0 - 1.0).abs();
            diag.max_norm_deviation = diag.max_norm_deviation.max(dev);
            let elapsed = (tt - t0).abs() / time_scale;
            if elapsed > 0.0 {
                diag.max_norm_drift_rate = diag.max_norm_drift_rate.max(dev / elapsed.max(1.0));
            }
            let tail = tail_population(yy);
            diag.max_tail_population = diag.max_tail_population.max(tail);
            if tail >= guard {
                violation = Some((tt, tail));
                Control::Stop
            } else {
                Control::Continue
            }
        })?;
        t = reached;
        samples.push(QuantumState {
            amplitudes: y.clone(),
            frame: initial.frame,
            time: t,
        });
        if violation.is_some() {
            break;
        }
    }
    diag.steps = integ.stats;
    let outcome = match violation {
        None => Outcome::Completed,
        Some((time, tail)) => Outcome::TruncationExceeded { time, tail },
    };
    Ok(Trajectory {
        samples,
        diagnostics: diag,
        outcome,
    })
}

/// Integrates the slow rotating-frame equations from `initial.time` to `tau_final`.
pub fn evolve_rotating(
    initial: &QuantumState,
    dp: &DimensionlessParams,
    tau_final: f64,
    config: &IntegratorConfig,
) -> Result<Trajectory> {
    if initial.frame != Frame::Rotating {
        return Err(invalid("frame", "evolve_rotating needs a rotating-frame state"));
    }
    let sys = InteractionSystem::new(*dp, initial.n_levels());
    let mut start = initial.clone();
    sys.to_interaction(start.time, &mut start.amplitudes);
    let mut traj = propagate(&sys, &start, tau_final, config, 1.0)?;
    for s in &mut traj.samples {
        sys.from_interaction(s.time, &mut s.amplitudes);
    }
    Ok(traj)
}

/// As [`evolve_rotating`], integrating `Γ_n` directly instead of removing it
/// analytically. Much slower for large bases; kept as a cross-check.
pub fn evolve_rotating_direct(
    initial: &QuantumState,
    dp: &DimensionlessParams,
    tau_final: f64,
    config: &IntegratorConfig,
) -> Result<Trajectory> {
    if initial.frame != Frame::Rotating {
        return Err(invalid("frame", "evolve_rotating needs a rotating-frame state"));
    }
    let sys = RotatingSystem::new(*dp, initial.n_levels());
    propagate(&sys, initial, tau_final, config, 1.0)
}

/// Integrates the lab-frame equations from `initial.time` to `t_final` (lab
/// time). Step sizes and the sample stride in `config` are given in slow time.
pub fn evolve_lab(
    initial: &QuantumState,
    params: &OscillatorParams,
    t_final: f64,
    config: &IntegratorConfig,
) -> Result<Trajectory> {
    if initial.frame != Frame::Lab {
        return Err(invalid("frame", "evolve_lab needs a lab-frame state"));
    }
    let sys = LabSystem::new(params, initial.n_levels());
    let mut cfg = *config;
    // The lab equations oscillate at the level frequencies, so the trial step
    // is capped in lab units regardless of the slow-time request.
    cfg.step = config.step.min(0.01 * params.alpha.sqrt());
    propagate(&sys, initial, t_final, &cfg, 1.0 / params.alpha.sqrt())
}

/// A detected `n → n+2` ladder transition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub lower: usize,
    pub time: f64,
}

/// Pairs carrying less population than this are ignored by the detector.
pub const TRANSITION_MIN_PAIR_WEIGHT: f64 = 0.1;

/// Times at which `|B_{n+2}|²` first exceeds `|B_n|²`, for each even `n`
/// whose pair holds at least [`TRANSITION_MIN_PAIR_WEIGHT`] of the population.
pub fn detect_transition_times(trajectory: &Trajectory) -> Vec<Transition> {
    detect_transition_times_with(trajectory, TRANSITION_MIN_PAIR_WEIGHT)
}

pub fn detect_transition_times_with(trajectory: &Trajectory, min_pair_weight: f64) -> Vec<Transition> {
    let Some(first) = trajectory.samples.first() else {
        return Vec::new();
    };
    let n_levels = first.n_levels();
    let mut found: Vec<Option<f64>> = vec![None; n_levels];
    for s in &trajectory.samples {
        let p: Vec<f64> = s.populations();
        for n in 0..n_levels.saturating_sub(2) {
            if found[n].is_none() && p[n + 2] > p[n] && p[n] + p[n + 2] >= min_pair_weight {
                found[n] = Some(s.time);
            }
        }
    }
    // A pair that already satisfies the condition at the first sample has no
    // transition inside the window.
    let p0 = first.populations();
    let mut out: Vec<Transition> = found
        .into_iter()
        .enumerate()
        .filter_map(|(n, t)| t.map(|time| Transition { lower: n, time }))
        .filter(|tr| {
            !(tr.time == first.time
                && p0[tr.lower + 2] > p0[tr.lower]
                && p0[tr.lower] + p0[tr.lower + 2] >= min_pair_weight)
        })
        .collect();
    out.sort_by(|a, b| a.time.total_cmp(&b.time));
    out
}

/// Boltzmann weights of the unmodulated levels at temperature `t`, truncated
/// once the remaining weight drops below `tail`. At `t = 0` only the ground
/// state is occupied.
pub fn thermal_level_weights(temperature: f64, beta: f64, max_levels: usize, tail: f64) -> Result<Vec<f64>> {
    if !temperature.is_finite() || temperature < 0.0 {
        return Err(invalid("temperature", "must be finite and >= 0"));
    }
    if temperature == 0.0 {
        return Ok(vec![1.0]);
    }
    let e0 = energy_level(0, beta);
    let raw: Vec<f64> = (0..max_levels)
        .map(|n| (-(energy_level(n, beta) - e0) / temperature).exp())
        .collect();
    let z: f64 = raw.iter().sum();
    let mut weights = Vec::new();
    let mut acc = 0.0;
    for w in raw {
        let w = w / z;
        weights.push(w);
        acc += w;
        if 1.0 - acc < tail {
            break;
        }
    }
    Ok(weights)
}
