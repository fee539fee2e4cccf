//! Position-space reconstruction from energy-basis amplitudes and the Wigner
//! phase-space distribution
//! `W(x, p) = (1/π) ∫ ψ*(x + y) ψ(x − y) e^{2ipy} dy`.
//!
//! The `y` integral reuses the uniform `x` grid, so for each row `x_j` the
//! sum over `y = k·dx` is a single inverse FFT of length `n_x`. The induced
//! momentum grid has spacing `π/(n_x dx)` and spans `[−π/(2dx), π/(2dx))`.

use std::f64::consts::{FRAC_1_SQRT_2, PI};
use std::io::{self, Write};
use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::params::OscillatorParams;
use crate::quantum::QuantumState;

/// Uniform grid `x_j = x_min + j dx`, `j = 0..n`, with `dx = (x_max − x_min)/n`.
/// The right end point is excluded so that a symmetric window contains `x = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub x_min: f64,
    pub x_max: f64,
    pub n: usize,
}

impl Grid {
    pub fn new(x_min: f64, x_max: f64, n: usize) -> Result<Self> {
        if !(x_max > x_min) || !x_min.is_finite() || !x_max.is_finite() {
            return Err(invalid("grid", "need finite x_min < x_max"));
        }
        if !n.is_power_of_two() || n < 8 {
            return Err(invalid("grid", format!("n_x must be a power of two >= 8, got {n}")));
        }
        Ok(Self { x_min, x_max, n })
    }

    pub fn symmetric(half_width: f64, n: usize) -> Result<Self> {
        Self::new(-half_width, half_width, n)
    }

    /// Default window `±(√(2N + 1) + 8)` with 1024 points for a basis of `N` levels.
    pub fn for_levels(n_levels: usize) -> Self {
        let hw = (2.0 * n_levels as f64 + 1.0).sqrt() + 8.0;
        Self::symmetric(hw, 1024).expect("valid default grid")
    }

    pub fn dx(&self) -> f64 {
        (self.x_max - self.x_min) / self.n as f64
    }

    pub fn x(&self, j: usize) -> f64 {
        self.x_min + self.dx() * j as f64
    }

    pub fn points(&self) -> Vec<f64> {
        (0..self.n).map(|j| self.x(j)).collect()
    }

    fn half_width(&self) -> f64 {
        self.x_min.abs().min(self.x_max.abs())
    }
}

/// Required half-width for harmonic level `n`: turning point plus margin.
fn required_half_width(n: usize) -> f64 {
    (2.0 * n as f64 + 1.0).sqrt() + 6.0
}

/// Harmonic-oscillator eigenfunction `ψ_n` on the grid, from the recurrence
/// `ψ_n = √(2/n) x ψ_{n−1} − √((n−1)/n) ψ_{n−2}`.
pub fn hermite_mode(n: usize, grid: &Grid) -> Result<Vec<f64>> {
    Ok(hermite_modes(n + 1, grid)?.pop().expect("n + 1 >= 1 modes"))
}

/// All modes `ψ_0 … ψ_{count−1}` on the grid.
pub fn hermite_modes(count: usize, grid: &Grid) -> Result<Vec<Vec<f64>>> {
    if count == 0 {
        return Ok(Vec::new());
    }
    let top = count - 1;
    let required = required_half_width(top);
    if grid.half_width() < required {
        return Err(Error::DomainTooSmall {
            level: top,
            half_width: grid.half_width(),
            required,
        });
    }
    let xs = grid.points();
    let norm0 = PI.powf(-0.25);
    let mut modes: Vec<Vec<f64>> = Vec::with_capacity(count);
    modes.push(xs.iter().map(|x| norm0 * (-0.5 * x * x).exp()).collect());
    if count > 1 {
        modes.push(xs.iter().zip(&modes[0]).map(|(x, p0)| 2f64.sqrt() * x * p0).collect());
    }
    for n in 2..count {
        let a = (2.0 / n as f64).sqrt();
        let b = ((n - 1) as f64 / n as f64).sqrt();
        let next: Vec<f64> = xs
            .iter()
            .enumerate()
            .map(|(j, x)| a * x * modes[n - 1][j] - b * modes[n - 2][j])
            .collect();
        modes.push(next);
    }
    Ok(modes)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Wavefunction {
    pub grid: Grid,
    pub values: Vec<Complex64>,
}

impl Wavefunction {
    pub fn density(&self) -> Vec<f64> {
        self.values.iter().map(|v| v.norm_sqr()).collect()
    }

    /// `∫|ψ|² dx` by the trapezoid rule.
    pub fn norm(&self) -> f64 {
        let d = self.density();
        let dx = self.grid.dx();
        let inner: f64 = d.iter().sum();
        dx * (inner - 0.5 * (d[0] + d[d.len() - 1]))
    }

    /// `max(|ψ(x_min)|, |ψ(x_last)|) / max |ψ|`; small when the window holds the state.
    pub fn edge_ratio(&self) -> f64 {
        let peak = self.values.iter().map(|v| v.norm()).fold(0.0, f64::max);
        let edge = self.values[0].norm().max(self.values[self.values.len() - 1].norm());
        edge / peak
    }

    /// Momentum-space density `|ψ̃(p)|²` on the Wigner momentum grid of the
    /// same position grid, `ψ̃(p) = (2π)^{-1/2} Σ_j ψ_j e^{−ipx_j} dx`.
    pub fn momentum_density(&self) -> Vec<f64> {
        let m = self.grid.n;
        let dx = self.grid.dx();
        let x0 = self.grid.x_min;
        // p_k = k π/(m dx) on a length-2m transform
        let mut buf = vec![Complex64::default(); 2 * m];
        buf[..m].copy_from_slice(&self.values);
        FftPlanner::new().plan_fft_forward(2 * m).process(&mut buf);
        let pgrid = MomentumGrid::for_position(&self.grid);
        (0..m)
            .map(|i| {
                let k = i as isize - (m / 2) as isize;
                let idx = k.rem_euclid(2 * m as isize) as usize;
                let p = pgrid.p(i);
                let phase = Complex64::from_polar(1.0, -p * x0);
                (buf[idx] * phase * dx).norm_sqr() / (2.0 * PI)
            })
            .collect()
    }
}

/// Synthesizes `ψ(x) = Σ_n c_n ψ_n(x)`. Rotating-frame states are first mapped
/// back to the lab frame.
pub fn reconstruct(state: &QuantumState, params: &OscillatorParams, grid: &Grid) -> Result<Wavefunction> {
    let lab = state.to_lab_frame(params);
    // levels with no population do not constrain the grid
    let support = lab
        .amplitudes
        .iter()
        .rposition(|c| c.norm_sqr() > 1e-30)
        .map_or(1, |n| n + 1);
    let modes = hermite_modes(support, grid)?;
    let mut values = vec![Complex64::default(); grid.n];
    for (n, mode) in modes.iter().enumerate() {
        let c = lab.amplitudes[n];
        if c == Complex64::default() {
            continue;
        }
        for (v, m) in values.iter_mut().zip(mode) {
            *v += c * *m;
        }
    }
    Ok(Wavefunction { grid: *grid, values })
}

/// Momentum grid `p_i = (i − m/2) π/(m dx)` induced by a position grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentumGrid {
    pub p_min: f64,
    pub dp: f64,
    pub n: usize,
}

impl MomentumGrid {
    pub fn for_position(grid: &Grid) -> Self {
        let m = grid.n;
        let dp = PI / (m as f64 * grid.dx());
        Self {
            p_min: -((m / 2) as f64) * dp,
            dp,
            n: m,
        }
    }

    pub fn p(&self, i: usize) -> f64 {
        self.p_min + self.dp * i as f64
    }

    pub fn p_max(&self) -> f64 {
        self.p(self.n - 1)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WignerGrid {
    pub x: Grid,
    pub p: MomentumGrid,
    /// Row-major, `values[j * p.n + i] = W(x_j, p_i)`.
    pub values: Vec<f64>,
}

impl WignerGrid {
    pub fn at(&self, j: usize, i: usize) -> f64 {
        self.values[j * self.p.n + i]
    }

    /// Value at the grid point nearest to `(x, p)`.
    pub fn nearest(&self, x: f64, p: f64) -> f64 {
        let j = (((x - self.x.x_min) / self.x.dx()).round().max(0.0) as usize).min(self.x.n - 1);
        let i = (((p - self.p.p_min) / self.p.dp).round().max(0.0) as usize).min(self.p.n - 1);
        self.at(j, i)
    }

    fn cell(&self) -> f64 {
        self.x.dx() * self.p.dp
    }

    pub fn integral(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.cell()
    }

    /// `∫ W dp` for every `x_j`.
    pub fn position_marginal(&self) -> Vec<f64> {
        self.values
            .chunks(self.p.n)
            .map(|row| row.iter().sum::<f64>() * self.p.dp)
            .collect()
    }

    /// `∫ W dx` for every `p_i`.
    pub fn momentum_marginal(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.p.n];
        for row in self.values.chunks(self.p.n) {
            for (o, w) in out.iter_mut().zip(row) {
                *o += w;
            }
        }
        out.iter_mut().for_each(|o| *o *= self.x.dx());
        out
    }

    /// `2π ∫∫ W²`, equal to one for pure states.
    pub fn purity(&self) -> f64 {
        2.0 * PI * self.values.iter().map(|w| w * w).sum::<f64>() * self.cell()
    }

    /// Location and value of the global maximum.
    pub fn argmax(&self) -> (f64, f64, f64) {
        let (k, w) = self
            .values
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .expect("non-empty grid");
        let (j, i) = (k / self.p.n, k % self.p.n);
        (self.x.x(j), self.p.p(i), *w)
    }

    /// Largest `|W(x, p) − W(−x, −p)|` over points whose reflection is on the grid.
    pub fn point_reflection_asymmetry(&self) -> f64 {
        let (nx, np) = (self.x.n, self.p.n);
        // x_j ↔ x_{n−j} and p_i ↔ p_{n−i} for symmetric grids with the origin at n/2
        let mut worst: f64 = 0.0;
        for j in 1..nx {
            for i in 1..np {
                let a = self.at(j, i);
                let b = self.at(nx - j, np - i);
                worst = worst.max((a - b).abs());
            }
        }
        worst
    }

    /// Husimi distribution: `W` convolved with the vacuum Gaussian
    /// `e^{−x²−p²}/π`. Non-negative and free of interference fringes.
    pub fn husimi(&self) -> WignerGrid {
        let (nx, np) = (self.x.n, self.p.n);
        let kernel = |h: f64| -> Vec<f64> {
            // unit-variance-½ Gaussian truncated at 8 standard deviations
            let reach = ((8.0 * FRAC_1_SQRT_2) / h).ceil() as usize;
            (0..=reach).map(|k| (-(k as f64 * h).powi(2)).exp() * h / PI.sqrt()).collect()
        };
        let (kx, kp) = (kernel(self.x.dx()), kernel(self.p.dp));
        let smooth = |src: &[f64], len: usize, k: &[f64], out: &mut [f64]| {
            for (m, o) in out.iter_mut().enumerate() {
                let mut acc = k[0] * src[m];
                for (d, w) in k.iter().enumerate().skip(1) {
                    if m >= d {
                        acc += w * src[m - d];
                    }
                    if m + d < len {
                        acc += w * src[m + d];
                    }
                }
                *o = acc;
            }
        };
        let mut rows = vec![0.0; nx * np];
        rows.par_chunks_mut(np)
            .zip(self.values.par_chunks(np))
            .for_each(|(out, row)| smooth(row, np, &kp, out));
        let mut values = vec![0.0; nx * np];
        let cols: Vec<Vec<f64>> = (0..np)
            .into_par_iter()
            .map(|i| {
                let col: Vec<f64> = (0..nx).map(|j| rows[j * np + i]).collect();
                let mut out = vec![0.0; nx];
                smooth(&col, nx, &kx, &mut out);
                out
            })
            .collect();
        for (i, col) in cols.iter().enumerate() {
            for (j, v) in col.iter().enumerate() {
                values[j * np + i] = *v;
            }
        }
        WignerGrid {
            x: self.x,
            p: self.p,
            values,
        }
    }

    /// Strict interior local maxima (8-neighbourhood) at or above
    /// `min_fraction` of the global maximum, as `(x, p, value)` sorted by
    /// decreasing value.
    pub fn local_maxima(&self, min_fraction: f64) -> Vec<(f64, f64, f64)> {
        let (nx, np) = (self.x.n, self.p.n);
        let floor = min_fraction * self.argmax().2;
        let mut out = Vec::new();
        for j in 1..nx - 1 {
            for i in 1..np - 1 {
                let v = self.at(j, i);
                if v < floor {
                    continue;
                }
                let is_peak = (j - 1..=j + 1)
                    .flat_map(|jj| (i - 1..=i + 1).map(move |ii| (jj, ii)))
                    .filter(|&(jj, ii)| (jj, ii) != (j, i))
                    .all(|(jj, ii)| self.at(jj, ii) < v);
                if is_peak {
                    out.push((self.x.x(j), self.p.p(i), v));
                }
            }
        }
        out.sort_by(|a, b| b.2.total_cmp(&a.2));
        out
    }
}

/// Grid description written next to exported values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WignerHeader {
    pub x_min: f64,
    pub x_max: f64,
    pub n_x: usize,
    pub p_min: f64,
    pub p_max: f64,
    pub n_p: usize,
    pub tau: Option<f64>,
    pub parameters: serde_json::Value,
    /// Layout of the value file.
    pub layout: String,
}

impl WignerGrid {
    pub fn header(&self, tau: Option<f64>, parameters: serde_json::Value, layout: &str) -> WignerHeader {
        WignerHeader {
            x_min: self.x.x_min,
            x_max: self.x.x(self.x.n - 1),
            n_x: self.x.n,
            p_min: self.p.p_min,
            p_max: self.p.p_max(),
            n_p: self.p.n,
            tau,
            parameters,
            layout: layout.to_string(),
        }
    }

    /// Tidy `x,p,w` rows.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "x,p,w")?;
        for j in 0..self.x.n {
            let x = self.x.x(j);
            for i in 0..self.p.n {
                writeln!(out, "{:.16e},{:.16e},{:.16e}", x, self.p.p(i), self.at(j, i))?;
            }
        }
        Ok(())
    }

    /// Row-major little-endian `f64` values, `x` outer.
    pub fn write_binary<W: Write>(&self, mut out: W) -> io::Result<()> {
        for v in &self.values {
            out.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }
}

fn plan(n: usize) -> Arc<dyn Fft<f64>> {
    FftPlanner::new().plan_fft_inverse(n)
}

/// Wigner transform of a wavefunction sampled on a uniform grid.
pub fn wigner_transform(psi: &Wavefunction) -> Result<WignerGrid> {
    let m = psi.grid.n;
    if psi.values.len() != m {
        return Err(invalid("wavefunction", "sample count does not match the grid"));
    }
    let norm = psi.norm();
    if !((norm - 1.0).abs() < 1e-3) {
        return Err(invalid("wavefunction", format!("expected a normalized state, norm = {norm}")));
    }
    let dx = psi.grid.dx();
    let fft = plan(m);
    let half = (m / 2) as isize;
    let rows: Vec<Vec<f64>> = (0..m)
        .into_par_iter()
        .map(|j| {
            let mut buf = vec![Complex64::default(); m];
            for k in -half..half {
                let a = j as isize + k;
                let b = j as isize - k;
                if a < 0 || b < 0 || a >= m as isize || b >= m as isize {
                    continue;
                }
                buf[k.rem_euclid(m as isize) as usize] = psi.values[a as usize].conj() * psi.values[b as usize];
            }
            fft.process(&mut buf);
            (0..m)
                .map(|i| {
                    let kk = (i as isize - half).rem_euclid(m as isize) as usize;
                    buf[kk].re * dx / PI
                })
                .collect()
        })
        .collect();
    Ok(WignerGrid {
        x: psi.grid,
        p: MomentumGrid::for_position(&psi.grid),
        values: rows.concat(),
    })
}

/// Thermal Wigner function of the linearized oscillator,
/// `W = (2π T_eff)^{-1} exp(−(x² + p²)/(2 T_eff))`.
pub fn thermal_wigner(t_eff: f64, x: f64, p: f64) -> f64 {
    (-(x * x + p * p) / (2.0 * t_eff)).exp() / (2.0 * PI * t_eff)
}
