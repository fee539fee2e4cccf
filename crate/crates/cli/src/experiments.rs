use anyhow::{anyhow, Context, Result};
use parares::capture::{
    anharmonicity_table, fit_log_scaling, fit_threshold, linear_grid, locked_energy, log_grid,
    quantum_tau_final, scan_scurve, scan_threshold, temperature_table, AveragedExperiment,
    ClassicalExperiment, QuantumExperiment, SCurve, ThresholdResult, PAR_TAU_FINAL,
};
use parares::classical::{
    ensemble_mean_energy, run_averaged_ensemble, run_duffing_ensemble, sample_averaged_thermal,
    sample_thermal_at,
};
use parares::params::{classify_regime, effective_temperature_with, DimensionlessParams, OscillatorParams};
use parares::quantum::{detect_transition_times, evolve_rotating, mean_energy, Frame, IntegratorConfig, QuantumState};
use parares::theory::{crossing_time, par_threshold_eps_classical, par_threshold_eps_with, par_threshold_p1, plc_threshold};
use parares::wigner::{reconstruct, wigner_transform, Grid};
use serde_json::json;

use crate::config::{ExperimentConfig, ExperimentKind, Model, WignerSource};
use crate::output::{Cell, Outputs, Table};

const PLC_RUN_TAU_FINAL: f64 = 130.0;
const PAR_RUN_TAU_FINAL: f64 = 15.0;
const DEFAULT_ENSEMBLE: usize = 300;
const DEFAULT_SCAN_ENSEMBLE: usize = 200;
const DEFAULT_SCAN_POINTS: usize = 12;
const DEFAULT_MAX_WIDEN: usize = 2;
const DEFAULT_ALPHA: f64 = 1e-4;
/// Chirp rate assumed for ladder-climbing snapshots given only `P1, P2`.
const DEFAULT_PLC_ALPHA: f64 = 1e-6;
const LOBE_FRACTION: f64 = 0.5;

pub fn run(cfg: &ExperimentConfig) -> Result<Outputs> {
    match cfg.experiment {
        ExperimentKind::PlcRun => quantum_run(cfg, false),
        ExperimentKind::ParRun => quantum_run(cfg, true),
        ExperimentKind::ClassicalEnsemble => classical_ensemble(cfg),
        ExperimentKind::AveragedEnsemble => averaged_ensemble(cfg),
        ExperimentKind::WignerSnapshot => wigner_snapshot(cfg),
        ExperimentKind::Scurve => scurve(cfg),
        ExperimentKind::ThresholdVsT => threshold_vs_t(cfg),
        ExperimentKind::ThresholdVsP2 => threshold_vs_p2(cfg),
        ExperimentKind::TheoryTable => theory_table(cfg),
    }
}

fn oscillator(cfg: &ExperimentConfig) -> Result<Option<OscillatorParams>> {
    cfg.oscillator().transpose().context("invalid oscillator parameters")
}

fn quantum_config(cfg: &ExperimentConfig, base: IntegratorConfig) -> Result<IntegratorConfig> {
    let c = cfg.integrator(base);
    c.validate()?;
    Ok(c)
}

fn quantum_run(cfg: &ExperimentConfig, par: bool) -> Result<Outputs> {
    let dp = cfg.dimensionless()?;
    let osc = oscillator(cfg)?;
    let icfg = quantum_config(cfg, if par { IntegratorConfig::par() } else { IntegratorConfig::plc() })?;
    let tau_final = cfg
        .run
        .tau_final
        .unwrap_or(if par { PAR_RUN_TAU_FINAL } else { PLC_RUN_TAU_FINAL });
    let start = QuantumState::ground(icfg.n_levels, Frame::Rotating, dp.tau0)?;
    let traj = evolve_rotating(&start, &dp, tau_final, &icfg)?;

    let mut energy = Table::new("energy", &["tau", "mean_level", "energy"]).with_plot(
        "mean energy",
        "tau",
        &[if osc.is_some() { "energy" } else { "mean_level" }],
        false,
    );
    let mut pops = Table::new("populations", &["tau", "level", "population"])
        .with_plot("level populations", "tau", &["population"], false)
        .grouped_by("level");
    let mut amp_cols = vec!["tau".to_string()];
    for n in 0..icfg.n_levels {
        amp_cols.push(format!("re_c{n}"));
        amp_cols.push(format!("im_c{n}"));
    }
    let mut amps = Table {
        name: "amplitudes".into(),
        columns: amp_cols,
        rows: Vec::with_capacity(traj.samples.len()),
        plot: None,
    };
    for s in &traj.samples {
        energy.push(vec![
            s.time.into(),
            s.mean_level().into(),
            osc.as_ref().map(|p| mean_energy(s, p)).into(),
        ]);
        for (n, p) in s.populations().into_iter().enumerate() {
            if n % 2 == 0 {
                pops.push(vec![s.time.into(), n.into(), p.into()]);
            }
        }
        let mut row = vec![Cell::from(s.time)];
        for c in &s.amplitudes {
            row.push(c.re.into());
            row.push(c.im.into());
        }
        amps.push(row);
    }

    let mut transitions = Table::new("transitions", &["lower", "upper", "tau", "predicted"]);
    for t in detect_transition_times(&traj) {
        transitions.push(vec![
            t.lower.into(),
            (t.lower + 2).into(),
            t.time.into(),
            crossing_time(t.lower, dp.p2).into(),
        ]);
    }

    let mut out = Outputs::default();
    out.table(energy);
    out.table(pops);
    out.table(transitions);
    out.table(amps);
    out.document(
        "trajectory",
        &json!({
            "dimensionless": dp,
            "oscillator": osc,
            "regime": classify_regime(&dp),
            "initial_state": "ground",
            "tau0": dp.tau0,
            "tau_final": tau_final,
            "integrator": icfg,
            "diagnostics": traj.diagnostics,
            "outcome": traj.outcome,
            "samples": traj.samples.len(),
        }),
    );
    if let Err(e) = traj.require_complete() {
        out.failure = Some(e.to_string());
    }
    Ok(out)
}

fn n_traj(cfg: &ExperimentConfig, default: usize) -> usize {
    cfg.ensemble.n_traj.unwrap_or(default)
}

fn seed(cfg: &ExperimentConfig) -> Result<u64> {
    cfg.ensemble.seed.ok_or_else(|| anyhow!("ensemble.seed is required"))
}

fn classical_ensemble(cfg: &ExperimentConfig) -> Result<Outputs> {
    let osc = oscillator(cfg)?.ok_or_else(|| anyhow!("classical-ensemble needs alpha"))?;
    let temperature = cfg.temperature();
    let n = n_traj(cfg, DEFAULT_ENSEMBLE);
    let seed = seed(cfg)?;
    let tau_final = cfg.run.tau_final.unwrap_or(PAR_TAU_FINAL);
    let t_final = osc.lab_time(tau_final);
    let stride = cfg.integrator.sample_stride.unwrap_or(0.5) / osc.alpha.sqrt();

    let ensemble = sample_thermal_at(temperature, n, seed, osc.t0)?;
    let run = run_duffing_ensemble(&ensemble, &osc, t_final, cfg.classical_step(), Some(stride))?;

    let mut energy = Table::new("energy", &["tau", "t", "mean_energy", "stderr"])
        .with_plot("ensemble mean energy", "tau", &["mean_energy"], false);
    for p in ensemble_mean_energy(&run) {
        energy.push(vec![osc.slow_time(p.time).into(), p.time.into(), p.mean.into(), p.stderr.into()]);
    }
    let finals = run.final_energies();
    let mut states = Table::new("final_states", &["index", "x", "u", "energy"]);
    for (i, (s, e)) in run.final_states.iter().zip(&finals).enumerate() {
        states.push(vec![i.into(), s.x.into(), s.u.into(), (*e).into()]);
    }

    let e_lock = (osc.beta > 0.0).then(|| locked_energy(&osc, t_final));
    let captured = e_lock.map(|el| finals.iter().filter(|e| **e >= 0.5 * el).count());
    let fraction = captured.map(|c| c as f64 / n as f64);
    let mut out = Outputs::default();
    out.table(energy);
    out.table(states);
    out.document(
        "summary",
        &json!({
            "oscillator": osc,
            "dimensionless": osc.to_dimensionless(),
            "temperature": temperature,
            "n_traj": n,
            "seed": seed,
            "tau_final": tau_final,
            "t_final": t_final,
            "step": cfg.classical_step(),
            "locked_energy": e_lock,
            "capture_rule": "final energy >= locked_energy / 2",
            "capture_fraction": fraction,
            "capture_stderr": fraction.map(|p| (p * (1.0 - p) / n as f64).sqrt()),
        }),
    );
    Ok(out)
}

fn averaged_ensemble(cfg: &ExperimentConfig) -> Result<Outputs> {
    let dp = cfg.dimensionless()?;
    let model = cfg.averaged_model();
    let temperature = cfg.temperature();
    let n = n_traj(cfg, DEFAULT_ENSEMBLE);
    let seed = seed(cfg)?;
    let tau_final = cfg.run.tau_final.unwrap_or(PAR_TAU_FINAL);

    let initial = sample_averaged_thermal(temperature, &dp, n, seed, &model)?;
    let finals = run_averaged_ensemble(&initial, &dp, tau_final, cfg.averaged_step(), &model)?;
    let lock = model.locked_amplitude_sq(tau_final);

    let mut states = Table::new(
        "final_states",
        &["index", "initial_amplitude", "initial_phase", "amplitude", "phase"],
    );
    let mut captured = 0usize;
    for (i, (a, b)) in initial.iter().zip(&finals).enumerate() {
        if b.amplitude * b.amplitude >= 0.5 * lock {
            captured += 1;
        }
        states.push(vec![
            i.into(),
            a.amplitude.into(),
            a.phase.into(),
            b.amplitude.into(),
            b.wrapped_phase().into(),
        ]);
    }
    let p = captured as f64 / n as f64;
    let mut out = Outputs::default();
    out.table(states);
    out.document(
        "summary",
        &json!({
            "dimensionless": dp,
            "model": model,
            "temperature": temperature,
            "n_traj": n,
            "seed": seed,
            "tau_final": tau_final,
            "step": cfg.averaged_step(),
            "locked_amplitude_sq": lock,
            "capture_rule": "A^2 >= s tau_final / 2",
            "capture_fraction": p,
            "capture_stderr": (p * (1.0 - p) / n as f64).sqrt(),
        }),
    );
    Ok(out)
}

fn wigner_snapshot(cfg: &ExperimentConfig) -> Result<Outputs> {
    let source = cfg.wigner.state.ok_or_else(|| anyhow!("wigner.state is required"))?;
    let (state, params, tau) = match source {
        WignerSource::Fock => {
            let n = cfg.wigner.n.unwrap_or(0);
            let levels = (n + 2).max(4);
            let params = match oscillator(cfg)? {
                Some(p) => p,
                None => OscillatorParams::new(DEFAULT_ALPHA, 0.0, 0.0)?,
            };
            (QuantumState::fock(n, levels, Frame::Lab, 0.0)?, params, None)
        }
        WignerSource::Plc | WignerSource::Par => {
            let par = source == WignerSource::Par;
            let dp = cfg.dimensionless()?;
            let params = match oscillator(cfg)? {
                Some(p) => p,
                None => dp.to_oscillator(if par { DEFAULT_ALPHA } else { DEFAULT_PLC_ALPHA })?,
            };
            let icfg = quantum_config(cfg, if par { IntegratorConfig::par() } else { IntegratorConfig::plc() })?
                .endpoints_only();
            let tau = cfg.wigner.tau.unwrap_or(if par { 10.0 } else { 100.0 });
            let start = QuantumState::ground(icfg.n_levels, Frame::Rotating, dp.tau0)?;
            let traj = evolve_rotating(&start, &dp, tau, &icfg)?.require_complete()?;
            (traj.final_state().clone(), params, Some(tau))
        }
    };

    let auto = Grid::for_levels(state.n_levels());
    let grid = match (cfg.wigner.half_width, cfg.wigner.n_x) {
        (None, None) => auto,
        (hw, n) => Grid::symmetric(hw.unwrap_or(auto.x_max), n.unwrap_or(auto.n))?,
    };
    let psi = reconstruct(&state, &params, &grid)?;
    let w = wigner_transform(&psi)?;

    let mut density = Table::new("density", &["x", "density"]).with_plot("position density", "x", &["density"], false);
    for (j, d) in psi.density().into_iter().enumerate() {
        density.push(vec![grid.x(j).into(), d.into()]);
    }
    let lobes: Vec<_> = w
        .husimi()
        .local_maxima(LOBE_FRACTION)
        .into_iter()
        .map(|(x, p, v)| json!({ "x": x, "p": p, "value": v }))
        .collect();
    let (ax, ap, av) = w.argmax();
    let header = w.header(tau, serde_json::to_value(params)?, "");

    let mut out = Outputs::default();
    out.table(density);
    out.document(
        "diagnostics",
        &json!({
            "source": source,
            "tau": tau,
            "oscillator": params,
            "n_levels": state.n_levels(),
            "mean_level": state.mean_level(),
            "integral": w.integral(),
            "purity": w.purity(),
            "reflection_asymmetry": w.point_reflection_asymmetry(),
            "origin_value": w.nearest(0.0, 0.0),
            "argmax": { "x": ax, "p": ap, "value": av },
            "edge_ratio": psi.edge_ratio(),
            "husimi_lobes": lobes,
            "lobe_fraction": LOBE_FRACTION,
        }),
    );
    out.wigner = Some((w, header));
    Ok(out)
}

/// One of the three capture models, configured for a drive scan.
enum Scanner {
    Classical(ClassicalExperiment),
    Quantum(QuantumExperiment),
    Averaged(AveragedExperiment),
}

impl Scanner {
    /// `alpha` switches quantum and averaged scans to the `ε` axis; classical
    /// scans are always in `ε` and require it.
    fn build(
        cfg: &ExperimentConfig,
        model: Model,
        dp: DimensionlessParams,
        alpha: Option<f64>,
        temperature: f64,
        seed_offset: u64,
    ) -> Result<Self> {
        let seed = || seed(cfg).map(|s| s.wrapping_add(seed_offset));
        Ok(match model {
            Model::Classical => {
                let alpha = alpha.or(cfg.parameters.alpha).ok_or_else(|| anyhow!("classical scans need alpha"))?;
                let mut e = ClassicalExperiment::new(
                    dp.to_oscillator(alpha)?.with_epsilon(0.0)?,
                    temperature,
                    n_traj(cfg, DEFAULT_SCAN_ENSEMBLE),
                    seed()?,
                );
                e.tau_final = cfg.run.tau_final.unwrap_or(PAR_TAU_FINAL);
                e.step = cfg.classical_step();
                Scanner::Classical(e)
            }
            Model::Quantum => {
                let levels = if dp.p2 >= 2.0 { 40 } else { 250 };
                let icfg = quantum_config(cfg, IntegratorConfig::par().with_levels(levels))?.endpoints_only();
                let tau_final = cfg.run.tau_final.unwrap_or(quantum_tau_final(dp.p2, icfg.n_levels));
                let e = QuantumExperiment::new(dp, temperature, tau_final, icfg);
                Scanner::Quantum(match alpha {
                    Some(a) => e.with_epsilon_axis(a),
                    None => e,
                })
            }
            Model::Averaged => {
                let mut e = AveragedExperiment::new(dp, temperature, n_traj(cfg, DEFAULT_SCAN_ENSEMBLE), seed()?);
                e.alpha = alpha;
                e.tau_final = cfg.run.tau_final.unwrap_or(PAR_TAU_FINAL);
                e.step = cfg.averaged_step();
                e.model = cfg.averaged_model();
                Scanner::Averaged(e)
            }
        })
    }

    fn scan(&self, drives: &[f64]) -> parares::Result<SCurve> {
        match self {
            Scanner::Classical(e) => scan_scurve(drives, e),
            Scanner::Quantum(e) => scan_scurve(drives, e),
            Scanner::Averaged(e) => scan_scurve(drives, e),
        }
    }

    fn threshold(&self, drives: &[f64], widen: usize) -> parares::Result<(SCurve, ThresholdResult)> {
        match self {
            Scanner::Classical(e) => scan_threshold(drives, e, widen),
            Scanner::Quantum(e) => scan_threshold(drives, e, widen),
            Scanner::Averaged(e) => scan_threshold(drives, e, widen),
        }
    }
}

fn explicit_drives(cfg: &ExperimentConfig) -> Option<Vec<f64>> {
    let s = &cfg.scan;
    s.drives.clone().or_else(|| match (s.lo, s.hi) {
        (Some(lo), Some(hi)) => Some(linear_grid(lo, hi, s.points.unwrap_or(DEFAULT_SCAN_POINTS))),
        _ => None,
    })
}

fn drives_around(cfg: &ExperimentConfig, predicted: f64) -> Vec<f64> {
    explicit_drives(cfg).unwrap_or_else(|| {
        linear_grid(0.3 * predicted, 2.2 * predicted, cfg.scan.points.unwrap_or(DEFAULT_SCAN_POINTS))
    })
}

fn scurve_table() -> Table {
    Table::new("scurve", &["drive", "probability", "stderr"]).with_plot("capture probability", "drive", &["probability"], false)
}

fn push_curve(table: &mut Table, prefix: &[Cell], curve: &SCurve) {
    for p in &curve.points {
        let mut row = prefix.to_vec();
        row.extend([p.drive.into(), p.probability.into(), p.stderr.into()]);
        table.push(row);
    }
}

fn scurve(cfg: &ExperimentConfig) -> Result<Outputs> {
    let model = cfg.run.model.ok_or_else(|| anyhow!("run.model is required"))?;
    let drives = explicit_drives(cfg).ok_or_else(|| anyhow!("scan.drives or scan.lo/hi is required"))?;
    let dp = cfg.dimensionless()?;
    let eps_axis = model == Model::Classical || cfg.scan.axis.as_deref() == Some("epsilon");
    let alpha = if eps_axis {
        Some(cfg.parameters.alpha.ok_or_else(|| anyhow!("an epsilon-axis scan needs alpha"))?)
    } else {
        None
    };
    let scanner = Scanner::build(cfg, model, dp, alpha, cfg.temperature(), 0)?;
    let curve = scanner.scan(&drives)?;

    let mut table = scurve_table();
    push_curve(&mut table, &[], &curve);
    let fit = fit_threshold(&curve);
    let mut out = Outputs::default();
    out.table(table);
    out.document(
        "threshold",
        &json!({
            "model": model.name(),
            "axis": curve.axis,
            "meta": curve.meta,
            "temperature": cfg.temperature(),
            "fit": fit.as_ref().ok(),
            "fit_error": fit.as_ref().err().map(|e| e.to_string()),
        }),
    );
    Ok(out)
}

struct ThresholdRecord {
    model: Model,
    key: f64,
    fit: Option<ThresholdResult>,
    error: Option<String>,
}

fn thresholds_table(key: &str, records: &[ThresholdRecord]) -> Table {
    let mut t = Table::new("thresholds", &["model", key, "threshold", "stderr", "width", "fit_residual", "method"])
        .with_plot("capture threshold", key, &["threshold"], true)
        .grouped_by("model");
    for r in records {
        let f = r.fit.as_ref();
        t.push(vec![
            r.model.name().into(),
            r.key.into(),
            f.map(|f| f.threshold).into(),
            f.and_then(|f| f.threshold_stderr).into(),
            f.map(|f| f.width).into(),
            f.map(|f| f.fit_residual).into(),
            f.map_or(Cell::Empty, |f| serde_json::to_value(f.method).unwrap().as_str().unwrap_or("").into()),
        ]);
    }
    t
}

fn errors_json(records: &[ThresholdRecord], key: &str) -> Vec<serde_json::Value> {
    records
        .iter()
        .filter_map(|r| r.error.as_ref().map(|e| json!({ "model": r.model.name(), key: r.key, "error": e })))
        .collect()
}

fn column(records: &[ThresholdRecord], model: Model, keys: &[f64]) -> Vec<Option<f64>> {
    keys.iter()
        .map(|k| {
            records
                .iter()
                .find(|r| r.model == model && r.key == *k)
                .and_then(|r| r.fit.map(|f| f.threshold))
        })
        .collect()
}

fn threshold_vs_t(cfg: &ExperimentConfig) -> Result<Outputs> {
    let osc = oscillator(cfg)?.ok_or_else(|| anyhow!("threshold-vs-T needs alpha"))?;
    let dp = osc.to_dimensionless();
    let temps = cfg.threshold_temperatures();
    let coeffs = cfg.coefficients();
    let convention = cfg.thermal.convention;
    let widen = cfg.scan.max_widen.unwrap_or(DEFAULT_MAX_WIDEN);

    let mut curves = Table::new("scurves", &["model", "temperature", "drive", "probability", "stderr"]);
    let mut records = Vec::new();
    for model in cfg.models() {
        for (k, &t) in temps.iter().enumerate() {
            let predicted = match model {
                Model::Quantum => par_threshold_eps_with(t, &coeffs, convention),
                _ => par_threshold_eps_classical(t, &coeffs).or_else(|_| par_threshold_eps_with(t, &coeffs, convention)),
            }?;
            let drives = drives_around(cfg, predicted);
            let result = Scanner::build(cfg, model, dp, Some(osc.alpha), t, k as u64)
                .and_then(|s| Ok(s.threshold(&drives, widen)?));
            let (fit, error) = match result {
                Ok((curve, fit)) => {
                    push_curve(&mut curves, &[model.name().into(), t.into()], &curve);
                    (Some(fit), None)
                }
                Err(e) => {
                    log::warn!("{} threshold at T = {t} failed: {e:#}", model.name());
                    (None, Some(format!("{e:#}")))
                }
            };
            records.push(ThresholdRecord { model, key: t, fit, error });
        }
    }

    let rows = temperature_table(
        &temps,
        &column(&records, Model::Classical, &temps),
        &column(&records, Model::Quantum, &temps),
        &coeffs,
        convention,
    )?;
    let mut table = Table::new(
        "table",
        &["temperature", "t_eff", "eps_cr_classical", "eps_cr_quantum", "theory_unsaturated", "theory_saturated"],
    )
    .with_plot("threshold vs temperature", "temperature", &["eps_cr_classical", "eps_cr_quantum", "theory_unsaturated", "theory_saturated"], true);
    for r in &rows {
        table.push(vec![
            r.temperature.into(),
            effective_temperature_with(r.temperature, convention).ok().into(),
            r.eps_cr_classical.into(),
            r.eps_cr_quantum.into(),
            r.theory_unsaturated.into(),
            r.theory_saturated.into(),
        ]);
    }

    let mut fits = serde_json::Map::new();
    for model in cfg.models() {
        let pts: Vec<(f64, f64)> = records
            .iter()
            .filter(|r| r.model == model && r.key > 0.0)
            .filter_map(|r| r.fit.map(|f| (r.key, f.threshold)))
            .collect();
        let fit = fit_log_scaling(&pts, model == Model::Quantum);
        let value = match &fit {
            Ok(f) => json!({
                "fit": f,
                "p1_coefficients": f.coefficients(osc.alpha, dp.p2).ok(),
            }),
            Err(e) => json!({ "error": e.to_string(), "points": pts.len() }),
        };
        fits.insert(model.name().into(), value);
    }

    let mut out = Outputs::default();
    out.table(thresholds_table("temperature", &records));
    out.table(table);
    out.table(curves);
    out.document(
        "fit",
        &json!({
            "oscillator": osc,
            "dimensionless": dp,
            "reference_coefficients": coeffs,
            "convention": convention,
            "fits": fits,
            "errors": errors_json(&records, "temperature"),
        }),
    );
    Ok(out)
}

fn threshold_vs_p2(cfg: &ExperimentConfig) -> Result<Outputs> {
    let p2s = cfg.threshold_p2_values();
    let temperature = cfg.temperature();
    let coeffs = cfg.coefficients();
    let alpha = cfg.parameters.alpha.unwrap_or(DEFAULT_ALPHA);
    let eps_scale = 8.0 * alpha.sqrt();
    let widen = cfg.scan.max_widen.unwrap_or(DEFAULT_MAX_WIDEN);

    let mut curves = Table::new("scurves", &["model", "p2", "drive", "probability", "stderr"]);
    let mut records = Vec::new();
    for model in cfg.models() {
        for (k, &p2) in p2s.iter().enumerate() {
            let predicted = par_threshold_p1(p2, temperature, &coeffs).unwrap_or(0.0).max(plc_threshold());
            let classical = model == Model::Classical;
            let drives: Vec<f64> = drives_around(cfg, predicted)
                .into_iter()
                .map(|d| if classical { d * eps_scale } else { d })
                .collect();
            let result = DimensionlessParams::new(0.0, p2, cfg.tau0())
                .map_err(anyhow::Error::from)
                .and_then(|dp| Scanner::build(cfg, model, dp, classical.then_some(alpha), temperature, k as u64))
                .and_then(|s| Ok(s.threshold(&drives, widen)?));
            let (fit, error) = match result {
                Ok((mut curve, mut fit)) => {
                    if classical {
                        // report classical thresholds on the P1 axis as well
                        for p in &mut curve.points {
                            p.drive /= eps_scale;
                        }
                        fit.threshold /= eps_scale;
                        fit.width /= eps_scale;
                        fit.threshold_stderr = fit.threshold_stderr.map(|s| s / eps_scale);
                    }
                    push_curve(&mut curves, &[model.name().into(), p2.into()], &curve);
                    (Some(fit), None)
                }
                Err(e) => {
                    log::warn!("{} threshold at P2 = {p2} failed: {e:#}", model.name());
                    (None, Some(format!("{e:#}")))
                }
            };
            records.push(ThresholdRecord { model, key: p2, fit, error });
        }
    }

    let quantum = column(&records, Model::Quantum, &p2s);
    let mut classical = column(&records, Model::Classical, &p2s);
    if !cfg.models().contains(&Model::Classical) {
        classical = column(&records, Model::Averaged, &p2s);
    }
    let rows = anharmonicity_table(&p2s, &quantum, &classical, temperature, &coeffs);
    let mut table = Table::new(
        "table",
        &["p2", "p1_cr_quantum", "p1_cr_classical", "plc_line", "par_line", "separator"],
    )
    .with_plot("threshold vs anharmonicity", "p2", &["p1_cr_quantum", "p1_cr_classical", "plc_line", "par_line", "separator"], true);
    for r in &rows {
        table.push(vec![
            r.p2.into(),
            r.p1_cr_quantum.into(),
            r.p1_cr_classical.into(),
            r.plc_line.into(),
            r.par_line.into(),
            r.separator.into(),
        ]);
    }

    let mut out = Outputs::default();
    out.table(thresholds_table("p2", &records));
    out.table(table);
    out.table(curves);
    out.document(
        "fit",
        &json!({
            "temperature": temperature,
            "alpha": alpha,
            "coefficients": coeffs,
            "errors": errors_json(&records, "p2"),
        }),
    );
    Ok(out)
}

pub const DEFAULT_THEORY_P2_RANGE: (f64, f64, usize) = (0.0035, 7.1, 25);
pub const DEFAULT_THEORY_TEMPERATURES: [f64; 7] = [0.01, 0.1, 0.5, 1.0, 2.0, 4.0, 8.0];

fn theory_table(cfg: &ExperimentConfig) -> Result<Outputs> {
    let coeffs = cfg.coefficients();
    let convention = cfg.thermal.convention;
    let temperature = cfg.temperature();
    let (lo, hi, n) = DEFAULT_THEORY_P2_RANGE;
    let p2s = cfg.theory.p2_values.clone().unwrap_or_else(|| log_grid(lo, hi, n));
    let temps = cfg.theory.temperatures.clone().unwrap_or_else(|| DEFAULT_THEORY_TEMPERATURES.to_vec());

    let mut theory = Table::new("theory", &["p2", "plc_line", "par_line", "separator"])
        .with_plot("threshold lines", "p2", &["plc_line", "par_line", "separator"], true);
    for r in anharmonicity_table(&p2s, &[], &[], temperature, &coeffs) {
        theory.push(vec![r.p2.into(), r.plc_line.into(), r.par_line.into(), r.separator.into()]);
    }
    let mut temp = Table::new("temperature", &["temperature", "t_eff", "eps_classical", "eps_saturated"])
        .with_plot("threshold vs temperature", "temperature", &["eps_classical", "eps_saturated"], true);
    for r in temperature_table(&temps, &[], &[], &coeffs, convention)? {
        temp.push(vec![
            r.temperature.into(),
            effective_temperature_with(r.temperature, convention).ok().into(),
            r.theory_unsaturated.into(),
            r.theory_saturated.into(),
        ]);
    }
    let mut out = Outputs::default();
    out.table(theory);
    out.table(temp);
    out.document(
        "constants",
        &json!({
            "plc_threshold": plc_threshold(),
            "coefficients": coeffs,
            "convention": convention,
            "temperature": temperature,
            "separator": "P2 = (P1 + 1) / 4",
            "par_line": "P1 = kappa0 - kappa1 ln(P2 T_eff)",
        }),
    );
    Ok(out)
}

/// Lines printed by the `theory` subcommand.
pub fn theory_summary(out: &Outputs) -> Vec<String> {
    let mut lines = Vec::new();
    if let Some((_, c)) = out.documents.iter().find(|(n, _)| n == "constants") {
        lines.push(format!("ladder-climbing threshold P1_cr = {:.5}", c["plc_threshold"].as_f64().unwrap_or(f64::NAN)));
        let k = &c["coefficients"];
        lines.push(format!(
            "autoresonance law: eps_cr = {} - {} ln T_eff; P1_cr = {} - {} ln(P2 T_eff)",
            k["a"], k["b"], k["kappa0"], k["kappa1"]
        ));
    }
    if let Some(t) = out.tables.iter().find(|t| t.name == "theory") {
        lines.push(format!("{:>10} {:>10} {:>10} {:>10}", "P2", "PLC", "PAR", "separator"));
        for row in &t.rows {
            let f = |c: &Cell| match c {
                Cell::Float(v) => format!("{v:10.5}"),
                _ => format!("{:>10}", "-"),
            };
            lines.push(format!("{} {} {} {}", f(&row[0]), f(&row[1]), f(&row[2]), f(&row[3])));
        }
    }
    lines
}
