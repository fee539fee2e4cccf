//! Physical and dimensionless parameters of the chirped parametric oscillator
//! `H = p²/2 + (1 + ε cos φ) x²/2 + β x⁴/4` with `dφ/dt = 2 + αt`.
//!
//! Level structure, `x²` matrix elements in the harmonic basis, the effective
//! temperature of the thermal Wigner state and the PLC/PAR regime classifier
//! all live here.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Above this modulation amplitude the weak-coupling model is questionable.
pub const EPSILON_WARN_THRESHOLD: f64 = 0.2;

/// Lower edge of the crossover band, as a multiple of the separator `(P1 + 1)/4`.
pub const CROSSOVER_LOW: f64 = 0.5;
/// Upper edge of the crossover band, as a multiple of the separator `(P1 + 1)/4`.
pub const CROSSOVER_HIGH: f64 = 2.0;

/// Physical knobs of the modulated Duffing oscillator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OscillatorParams {
    /// Chirp rate of the modulation frequency, `ω = 2 + αt`.
    pub alpha: f64,
    /// Quartic anharmonicity.
    pub beta: f64,
    /// Modulation amplitude.
    pub epsilon: f64,
    /// Start time of the sweep (lab time, negative).
    pub t0: f64,
}

impl OscillatorParams {
    /// Builds a parameter set starting at the conventional `t0 = -10/√α`.
    pub fn new(alpha: f64, beta: f64, epsilon: f64) -> Result<Self> {
        if !alpha.is_finite() || alpha <= 0.0 {
            return Err(invalid("alpha", format!("must be finite and > 0, got {alpha}")));
        }
        Self::with_t0(alpha, beta, epsilon, -10.0 / alpha.sqrt())
    }

    pub fn with_t0(alpha: f64, beta: f64, epsilon: f64, t0: f64) -> Result<Self> {
        if !alpha.is_finite() || alpha <= 0.0 {
            return Err(invalid("alpha", format!("must be finite and > 0, got {alpha}")));
        }
        if !beta.is_finite() || beta < 0.0 {
            return Err(invalid("beta", format!("must be finite and >= 0, got {beta}")));
        }
        if !epsilon.is_finite() || epsilon < 0.0 {
            return Err(invalid("epsilon", format!("must be finite and >= 0, got {epsilon}")));
        }
        if !t0.is_finite() || t0 >= 0.0 {
            return Err(invalid("t0", format!("must be finite and < 0, got {t0}")));
        }
        if epsilon > EPSILON_WARN_THRESHOLD {
            log::warn!(
                "epsilon = {epsilon} exceeds {EPSILON_WARN_THRESHOLD}; the weak-coupling level model may be inaccurate"
            );
        }
        Ok(Self {
            alpha,
            beta,
            epsilon,
            t0,
        })
    }

    /// Same oscillator, different modulation amplitude.
    pub fn with_epsilon(&self, epsilon: f64) -> Result<Self> {
        Self::with_t0(self.alpha, self.beta, epsilon, self.t0)
    }

    /// Anharmonic level shift `γ = 3β/8`.
    pub fn gamma(&self) -> f64 {
        0.375 * self.beta
    }

    pub fn to_dimensionless(&self) -> DimensionlessParams {
        let sa = self.alpha.sqrt();
        DimensionlessParams {
            p1: self.epsilon / (8.0 * sa),
            p2: 2.0 * self.gamma() / sa,
            tau0: sa * self.t0,
        }
    }

    /// Slow time `τ = √α t` for a lab time.
    pub fn slow_time(&self, t: f64) -> f64 {
        self.alpha.sqrt() * t
    }

    /// Lab time for a slow time.
    pub fn lab_time(&self, tau: f64) -> f64 {
        tau / self.alpha.sqrt()
    }

    pub fn energy_level(&self, n: usize) -> f64 {
        energy_level(n, self.beta)
    }
}

/// The dimensionless pair `(P1, P2)` controlling the slow dynamics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DimensionlessParams {
    /// Drive parameter `ε/(8√α)`.
    pub p1: f64,
    /// Anharmonicity parameter `2γ/√α = 3β/(4√α)`.
    pub p2: f64,
    /// Start of the sweep in slow time.
    pub tau0: f64,
}

impl DimensionlessParams {
    pub fn new(p1: f64, p2: f64, tau0: f64) -> Result<Self> {
        if !p1.is_finite() || p1 < 0.0 {
            return Err(invalid("p1", format!("must be finite and >= 0, got {p1}")));
        }
        if !p2.is_finite() || p2 < 0.0 {
            return Err(invalid("p2", format!("must be finite and >= 0, got {p2}")));
        }
        if !tau0.is_finite() {
            return Err(invalid("tau0", "must be finite"));
        }
        Ok(Self { p1, p2, tau0 })
    }

    pub fn with_p1(&self, p1: f64) -> Result<Self> {
        Self::new(p1, self.p2, self.tau0)
    }

    /// Inverts [`OscillatorParams::to_dimensionless`] for a given chirp rate.
    pub fn to_oscillator(&self, alpha: f64) -> Result<OscillatorParams> {
        if !alpha.is_finite() || alpha <= 0.0 {
            return Err(invalid("alpha", format!("must be finite and > 0, got {alpha}")));
        }
        let sa = alpha.sqrt();
        OscillatorParams::with_t0(
            alpha,
            self.p2 * sa * 4.0 / 3.0,
            self.p1 * 8.0 * sa,
            self.tau0 / sa,
        )
    }

    /// Diagonal of the slow equations, `Γ_n(τ) = (n/2)(P2(n+1) − τ)`.
    pub fn diagonal(&self, n: usize, tau: f64) -> f64 {
        let n = n as f64;
        0.5 * n * (self.p2 * (n + 1.0) - tau)
    }
}

pub fn to_dimensionless(params: &OscillatorParams) -> DimensionlessParams {
    params.to_dimensionless()
}

/// Perturbative level energy `E_n = n + 1/2 + γ(n² + n) + 3β/16`.
pub fn energy_level(n: usize, beta: f64) -> f64 {
    let nf = n as f64;
    let gamma = 0.375 * beta;
    nf + 0.5 + gamma * (nf * nf + nf) + 3.0 / 16.0 * beta
}

/// `Q_n = n(n+1)`.
#[inline]
pub fn q(n: usize) -> f64 {
    let n = n as f64;
    n * (n + 1.0)
}

/// Harmonic-basis matrix element `⟨ψ_k| x² |ψ_n⟩`.
pub fn coupling_element(k: usize, n: usize) -> f64 {
    match k.abs_diff(n) {
        0 => 0.5 * (2.0 * n as f64 + 1.0),
        2 => 0.5 * q(k.min(n) + 1).sqrt(),
        _ => 0.0,
    }
}

/// Which functional form of the effective temperature to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TeffConvention {
    /// `½ coth(1/(2T))`: the thermal Wigner width of a unit oscillator.
    #[default]
    HalfCothHalfInverse,
    /// `½ coth(1/T)`, kept for sensitivity checks.
    HalfCothInverse,
}

pub fn effective_temperature(temperature: f64) -> Result<f64> {
    effective_temperature_with(temperature, TeffConvention::default())
}

pub fn effective_temperature_with(temperature: f64, convention: TeffConvention) -> Result<f64> {
    if !temperature.is_finite() || temperature < 0.0 {
        return Err(invalid(
            "temperature",
            format!("must be finite and >= 0, got {temperature}"),
        ));
    }
    if temperature == 0.0 {
        return Ok(0.5);
    }
    let arg = match convention {
        TeffConvention::HalfCothHalfInverse => 0.5 / temperature,
        TeffConvention::HalfCothInverse => 1.0 / temperature,
    };
    Ok(0.5 / arg.tanh())
}

/// Temperature of a thermal initial state together with its effective value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThermalSpec {
    pub temperature: f64,
    pub t_eff: f64,
}

impl ThermalSpec {
    pub fn new(temperature: f64) -> Result<Self> {
        Ok(Self {
            temperature,
            t_eff: effective_temperature(temperature)?,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Regime {
    LadderClimbing,
    Autoresonance,
    Crossover,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegimeClass {
    pub tag: Regime,
    /// `P2 − (P1 + 1)/4`.
    pub margin: f64,
}

pub fn classify_regime(dp: &DimensionlessParams) -> RegimeClass {
    let sep = 0.25 * (dp.p1 + 1.0);
    let tag = if dp.p2 > CROSSOVER_HIGH * sep {
        Regime::LadderClimbing
    } else if dp.p2 < CROSSOVER_LOW * sep {
        Regime::Autoresonance
    } else {
        Regime::Crossover
    };
    RegimeClass {
        tag,
        margin: dp.p2 - sep,
    }
}

/// Modulation phase `φ(t) = 2t + αt²/2`, zero at the linear resonance.
pub fn modulation_phase(t: f64, alpha: f64) -> f64 {
    2.0 * t + 0.5 * alpha * t * t
}
