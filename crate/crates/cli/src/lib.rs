//! Batch experiments over the pinning-model library.
//!
//! An [`ExperimentSpec`] names a command, its parameters and a master seed.
//! [`run`] validates it, executes it on a dedicated worker pool and writes a
//! CSV table plus a JSON sidecar. The CSV depends only on the resolved
//! parameters and the seed, so reruns are byte-identical for any worker
//! count; timing and build metadata go to the sidecar.

// `!(x > 0.0)` rejects NaN along with non-positive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod error;
pub mod spec;
pub mod table;

pub use commands::Outcome;
pub use error::{CliError, CliResult};
pub use spec::{parse_assignment, Command, ExperimentSpec, Params};
pub use table::{Cell, Table};

use rwpmlab_core::Stream;
use serde_json::{json, Value};
use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::time::Instant;

/// Version plus `git describe` output when the build had one.
pub const BUILD_ID: &str = env!("RWPMLAB_BUILD_ID");

/// Files written by a run and its verdict.
#[derive(Clone, Debug)]
pub struct RunReport {
    pub csv: PathBuf,
    pub sidecar: PathBuf,
    pub rows: usize,
    /// None for pure measurements, Some(false) if any check row failed.
    pub pass: Option<bool>,
}

impl RunReport {
    pub fn exit_code(&self) -> i32 {
        if self.pass == Some(false) {
            2
        } else {
            0
        }
    }
}

/// 0 on success, 2 when a check failed, 1 on any error.
pub fn exit_code(result: &CliResult<RunReport>) -> i32 {
    match result {
        Ok(r) => r.exit_code(),
        Err(_) => 1,
    }
}

/// Seed for sweep point `index`.
pub fn sub_seed(seed: u64, index: usize) -> u64 {
    Stream::new(seed).child(index as u64).id
}

/// Sidecar path: the CSV path with a `.json` extension.
pub fn sidecar_path(csv: &Path) -> PathBuf {
    csv.with_extension("json")
}

fn pool(workers: Option<usize>) -> CliResult<rayon::ThreadPool> {
    let n = workers.unwrap_or_else(|| std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1));
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build()
        .map_err(|e| CliError::Config(format!("cannot start {n} workers: {e}")))
}

fn spec_echo(spec: &ExperimentSpec, params: &Params) -> Value {
    json!({
        "command": spec.command.name(),
        "params": params.to_json(),
        "seed": spec.seed,
        "out_path": spec.out_path,
        "workers": spec.workers,
        "grid_step": spec.grid_step,
    })
}

fn header_comment(cmd: Command, seed: u64, params: &Params) -> String {
    format!("rwpmlab {} seed={} params={}", cmd.name(), seed, params.to_json())
}

fn write_outputs(spec: &ExperimentSpec, table: &Table, comments: &[String], meta: Value) -> CliResult<(PathBuf, PathBuf)> {
    let csv = spec.out_path.clone();
    if let Some(dir) = csv.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    table.write_csv(BufWriter::new(File::create(&csv)?), comments)?;
    let side = sidecar_path(&csv);
    serde_json::to_writer_pretty(BufWriter::new(File::create(&side)?), &meta)?;
    Ok((csv, side))
}

/// Run one experiment and write its outputs.
pub fn run(spec: &ExperimentSpec) -> CliResult<RunReport> {
    let params = spec.resolve()?;
    let start = Instant::now();
    let outcome = pool(spec.workers)?.install(|| commands::dispatch(spec.command, &params, spec.seed))?;
    let meta = json!({
        "spec": spec_echo(spec, &params),
        "build_id": BUILD_ID,
        "wall_time_s": start.elapsed().as_secs_f64(),
        "rows": outcome.table.rows.len(),
        "pass": outcome.pass,
    });
    let comments = [header_comment(spec.command, spec.seed, &params)];
    let (csv, sidecar) = write_outputs(spec, &outcome.table, &comments, meta)?;
    Ok(RunReport { csv, sidecar, rows: outcome.table.rows.len(), pass: outcome.pass })
}

/// Run the spec once per value of `axis` into a single CSV whose rows are
/// prefixed by the axis value and the derived sub-seed.
pub fn emit_sweep(spec: &ExperimentSpec, axis: &str, values: &[f64]) -> CliResult<RunReport> {
    if values.is_empty() {
        return error::config("sweep needs at least one value");
    }
    let schema = spec.command.schema();
    let integer = match schema.iter().find(|(k, _)| *k == axis) {
        Some((_, v)) if v.is_number() => v.is_u64(),
        Some(_) => return error::config(format!("sweep axis '{axis}' is not a numeric parameter of {}", spec.command.name())),
        None => return error::config(format!("unknown sweep axis '{axis}' for {}", spec.command.name())),
    };
    if let Some(v) = values.iter().find(|v| !v.is_finite() || (integer && (v.fract() != 0.0 || **v < 0.0))) {
        return error::config(format!("sweep value {v} is not valid for '{axis}'"));
    }
    let base = spec.resolve()?;
    let start = Instant::now();
    let workers = pool(spec.workers)?;
    let mut merged: Option<Table> = None;
    let mut pass: Option<bool> = None;
    for (i, &v) in values.iter().enumerate() {
        let mut sub = spec.clone();
        let value = if integer { json!(v as u64) } else { json!(v) };
        sub.params.insert(axis.to_string(), value);
        if spec.command.grid_param() == Some(axis) {
            sub.grid_step = None;
        }
        sub.seed = sub_seed(spec.seed, i);
        let params = sub.resolve()?;
        let o = workers.install(|| commands::dispatch(sub.command, &params, sub.seed))?;
        if let Some(p) = o.pass {
            pass = Some(pass.unwrap_or(true) && p);
        }
        let m = merged.get_or_insert_with(|| {
            let mut h = vec![axis.to_string(), "sub_seed".to_string()];
            h.extend(o.table.header.iter().cloned());
            Table { header: h, rows: Vec::new() }
        });
        for r in o.table.rows {
            let mut full = vec![Cell::Num(v), Cell::Text(sub.seed.to_string())];
            full.extend(r);
            m.rows.push(full);
        }
    }
    let table = merged.expect("at least one sweep value");
    let mut echo = spec_echo(spec, &base);
    echo["sweep"] = json!({ "axis": axis, "values": values });
    let meta = json!({
        "spec": echo,
        "build_id": BUILD_ID,
        "wall_time_s": start.elapsed().as_secs_f64(),
        "rows": table.rows.len(),
        "pass": pass,
    });
    let comments = [
        header_comment(spec.command, spec.seed, &base),
        format!("sweep axis={axis} values={}", json!(values)),
    ];
    let (csv, sidecar) = write_outputs(spec, &table, &comments, meta)?;
    Ok(RunReport { csv, sidecar, rows: table.rows.len(), pass })
}
