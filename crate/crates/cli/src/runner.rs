use std::collections::BTreeMap;
use std::path::PathBuf;
use std::time::Instant;

use anyhow::Result;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;
use sha2::{Digest, Sha256};

use crate::config::{resolve_alias, ConfigError, ConfigSource, ExperimentConfig, Format};
use crate::experiments;
use crate::gnuplot;
use crate::output::{Cell, Manifest, Outputs, RunDir, Table};

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub out: PathBuf,
    pub gnuplot: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Ok,
    Failed,
    Partial,
}

pub struct RunReport {
    pub dir: PathBuf,
    pub status: Status,
    pub error: Option<String>,
    pub outputs: Option<Outputs>,
}

pub fn run_dir_name(cfg: &ExperimentConfig) -> String {
    format!("{}-{}", cfg.experiment.name(), &cfg.hash()[..12])
}

fn write_gnuplot(dir: &mut RunDir, outputs: &Outputs) -> Result<()> {
    for t in &outputs.tables {
        if let Some(script) = gnuplot::script(t, &format!("{}.csv", t.name)) {
            dir.write(&format!("{}.gp", t.name), script.as_bytes())?;
        }
    }
    Ok(())
}

/// Runs one experiment into `dir`, always leaving a manifest behind.
pub fn run_into(cfg: &ExperimentConfig, dir: PathBuf, gnuplot: bool) -> Result<RunReport> {
    let start = Instant::now();
    let format = cfg.format();
    let mut run_dir = RunDir::create(dir.clone())?;
    run_dir.write("config.toml", cfg.to_toml().as_bytes())?;

    let (status, error, outputs) = match experiments::run(cfg) {
        Ok(outputs) => {
            run_dir.write_outputs(&outputs, format)?;
            if gnuplot && format == Format::Csv {
                write_gnuplot(&mut run_dir, &outputs)?;
            }
            match outputs.failure.clone() {
                Some(e) => (Status::Failed, Some(e), Some(outputs)),
                None => (Status::Ok, None, Some(outputs)),
            }
        }
        Err(e) => (Status::Failed, Some(format!("{e:#}")), None),
    };
    if let Some(e) = &error {
        log::error!("{} in {}: {e}", cfg.experiment.name(), dir.display());
    }
    Manifest {
        experiment: cfg.experiment.name().into(),
        config_hash: cfg.hash(),
        version: env!("CARGO_PKG_VERSION").into(),
        wall_time_s: start.elapsed().as_secs_f64(),
        threads: rayon::current_num_threads(),
        status: serde_json::to_value(&status)?.as_str().unwrap_or_default().into(),
        error: error.clone(),
        files: Vec::new(),
        config: serde_json::to_value(cfg)?,
    }
    .write(&mut run_dir)?;
    Ok(RunReport {
        dir,
        status,
        error,
        outputs,
    })
}

pub fn run(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<RunReport> {
    run_into(cfg, opts.out.join(run_dir_name(cfg)), opts.gnuplot)
}

fn axis_cell(raw: &str) -> Cell {
    raw.parse::<f64>().map_or_else(|_| Cell::Text(raw.to_string()), Cell::Float)
}

/// Resolves one member config per axis value. Invalid members are returned
/// as errors and later reported as failed runs.
pub fn sweep_members(
    template: &ConfigSource,
    axis: &str,
    values: &[String],
) -> Vec<std::result::Result<ExperimentConfig, ConfigError>> {
    let key = resolve_alias(axis);
    values
        .iter()
        .map(|v| {
            let mut src = template.clone();
            src.set(&format!("{key}={v}")).map_err(|mut e| {
                e.origin = format!("sweep {axis}={v}");
                e
            })?;
            src.resolve().map_err(|mut e| {
                if e.line.is_none() {
                    e.origin = format!("sweep {axis}={v}");
                }
                e
            })
        })
        .collect()
}

fn sweep_hash(template: &ConfigSource, axis: &str, values: &[String]) -> String {
    let mut canonical = template.table.clone();
    if let Some(o) = canonical.get_mut("output").and_then(|v| v.as_table_mut()) {
        o.remove("dir");
    }
    let doc = json!({ "template": canonical, "axis": resolve_alias(axis), "values": values });
    hex::encode(Sha256::digest(serde_json::to_vec(&doc).expect("serializable")))
}

#[derive(Serialize)]
struct MemberEntry {
    index: usize,
    value: String,
    dir: Option<String>,
    config_hash: Option<String>,
    status: Status,
    error: Option<String>,
}

/// Runs every member in parallel and merges their tables in index order.
pub fn sweep(
    template: &ConfigSource,
    members: &[std::result::Result<ExperimentConfig, ConfigError>],
    axis: &str,
    values: &[String],
    opts: &RunOptions,
) -> Result<(PathBuf, Status)> {
    let start = Instant::now();
    let experiment = template
        .table
        .get("experiment")
        .and_then(|v| v.as_str())
        .unwrap_or("sweep")
        .to_string();
    let hash = sweep_hash(template, axis, values);
    let root = opts.out.join(format!("sweep-{experiment}-{}", &hash[..12]));
    let mut dir = RunDir::create(root.clone())?;
    let format = members
        .iter()
        .find_map(|m| m.as_ref().ok())
        .map(|c| c.format())
        .unwrap_or_default();

    let reports: Vec<Result<RunReport>> = members
        .par_iter()
        .enumerate()
        .map(|(i, member)| match member {
            Ok(cfg) => run_into(cfg, root.join(format!("{i:03}")), opts.gnuplot),
            Err(e) => Err(anyhow::anyhow!("invalid member config: {e}")),
        })
        .collect();

    let mut merged: BTreeMap<String, (usize, Table)> = BTreeMap::new();
    let mut entries = Vec::new();
    let prefix_cols = vec!["index".to_string(), axis.to_string()];
    for (i, (report, value)) in reports.into_iter().zip(values).enumerate() {
        let (status, error, outputs) = match report {
            Ok(r) => (r.status, r.error, r.outputs),
            Err(e) => (Status::Failed, Some(format!("{e:#}")), None),
        };
        if status == Status::Ok {
            for t in outputs.iter().flat_map(|o| &o.tables) {
                let mut table = t.prefixed(&prefix_cols, &[i.into(), axis_cell(value)]);
                let rows = std::mem::take(&mut table.rows);
                let order = merged.len();
                merged.entry(t.name.clone()).or_insert((order, table)).1.rows.extend(rows);
            }
        }
        entries.push(MemberEntry {
            index: i,
            value: value.clone(),
            dir: members[i].is_ok().then(|| format!("{i:03}")),
            config_hash: members[i].as_ref().ok().map(|c| c.hash()),
            status,
            error,
        });
    }

    let mut tables: Vec<(usize, Table)> = merged.into_values().collect();
    tables.sort_by_key(|(order, _)| *order);
    for (_, t) in &tables {
        dir.write_table(t, format)?;
        if opts.gnuplot && format == Format::Csv {
            let mut t = t.clone();
            if let Some(p) = t.plot.as_mut() {
                p.group = Some(axis.to_string());
            }
            if let Some(script) = gnuplot::script(&t, &format!("{}.csv", t.name)) {
                dir.write(&format!("{}.gp", t.name), script.as_bytes())?;
            }
        }
    }

    let failed = entries.iter().filter(|e| e.status != Status::Ok).count();
    let status = if failed == 0 { Status::Ok } else { Status::Partial };
    dir.write_json("members.json", &entries)?;
    Manifest {
        experiment: format!("sweep:{experiment}"),
        config_hash: hash,
        version: env!("CARGO_PKG_VERSION").into(),
        wall_time_s: start.elapsed().as_secs_f64(),
        threads: rayon::current_num_threads(),
        status: serde_json::to_value(&status)?.as_str().unwrap_or_default().into(),
        error: (failed > 0).then(|| format!("{failed} of {} members failed", entries.len())),
        files: Vec::new(),
        config: json!({
            "template": serde_json::to_value(&template.table)?,
            "axis": resolve_alias(axis),
            "values": values,
        }),
    }
    .write(&mut dir)?;
    Ok((root, status))
}
