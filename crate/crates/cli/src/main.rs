use clap::Parser;
use rwpmlab_cli::{emit_sweep, exit_code, parse_assignment, run, CliError, CliResult, Command, ExperimentSpec, RunReport};
use std::path::PathBuf;
use std::process::ExitCode;

/// Seeded, reproducible experiments on the random walk pinning model.
///
/// Exit status: 0 on success, 2 when a check fails, 1 on errors.
/// RWPMLAB_CACHE names a directory for cached kernel tables.
#[derive(Parser, Debug)]
#[command(name = "rwpmlab", version = rwpmlab_cli::BUILD_ID)]
struct Cli {
    /// Experiment to run; may come from --config instead.
    #[arg(value_enum)]
    command: Option<Command>,
    /// JSON experiment file {command, params, seed, out_path}.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed (required here or in the config).
    #[arg(long)]
    seed: Option<u64>,
    /// Output CSV; the sidecar goes next to it with a .json extension.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (default: available parallelism).
    #[arg(long)]
    workers: Option<usize>,
    /// Time step of the numerical grid, where the command has one.
    #[arg(long)]
    grid_step: Option<f64>,
    /// Parameter override, key=value; repeatable.
    #[arg(long = "param", short = 'p', value_name = "KEY=VALUE")]
    params: Vec<String>,
    /// Sweep one numeric parameter: axis=v1,v2,...
    #[arg(long, value_name = "AXIS=V1,V2,...")]
    sweep: Option<String>,
}

fn build_spec(cli: &Cli) -> CliResult<ExperimentSpec> {
    let file = cli.config.as_deref().map(ExperimentSpec::from_file).transpose()?;
    let command = match (cli.command, &file) {
        (Some(c), Some(f)) if c != f.command => {
            return Err(CliError::Config(format!("command {} conflicts with {} in the config", c.name(), f.command.name())))
        }
        (Some(c), _) => c,
        (None, Some(f)) => f.command,
        (None, None) => return Err(CliError::Config("no command given".into())),
    };
    let seed = match (cli.seed, &file) {
        (Some(s), _) => s,
        (None, Some(f)) => f.seed,
        (None, None) => return Err(CliError::Config("a seed is required (--seed N)".into())),
    };
    let out = cli
        .out
        .clone()
        .or_else(|| file.as_ref().map(|f| f.out_path.clone()))
        .unwrap_or_else(|| PathBuf::from(format!("{}.csv", command.name())));
    let mut spec = ExperimentSpec::new(command, seed, out);
    if let Some(f) = &file {
        spec.params = f.params.clone();
        spec.workers = f.workers;
        spec.grid_step = f.grid_step;
    }
    spec.workers = cli.workers.or(spec.workers);
    spec.grid_step = cli.grid_step.or(spec.grid_step);
    for a in &cli.params {
        let (k, v) = parse_assignment(a)?;
        spec.params.insert(k, v);
    }
    Ok(spec)
}

fn parse_sweep(text: &str) -> CliResult<(String, Vec<f64>)> {
    let Some((axis, list)) = text.split_once('=') else {
        return Err(CliError::Config(format!("expected axis=v1,v2,..., got '{text}'")));
    };
    let values = list
        .split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| s.trim().parse::<f64>().map_err(|e| CliError::Config(format!("bad sweep value '{s}': {e}"))))
        .collect::<CliResult<Vec<f64>>>()?;
    Ok((axis.trim().to_string(), values))
}

fn execute(cli: &Cli) -> CliResult<RunReport> {
    let spec = build_spec(cli)?;
    match &cli.sweep {
        Some(s) => {
            let (axis, values) = parse_sweep(s)?;
            emit_sweep(&spec, &axis, &values)
        }
        None => run(&spec),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = execute(&cli);
    match &result {
        Ok(r) => {
            let verdict = match r.pass {
                Some(true) => "pass",
                Some(false) => "FAIL",
                None => "done",
            };
            eprintln!("{verdict}: {} rows -> {} (+ {})", r.rows, r.csv.display(), r.sidecar.display());
        }
        Err(e) => eprintln!("error: {e}"),
    }
    ExitCode::from(exit_code(&result) as u8)
}
