//! Command-line front end: config loading, dispatch and artifact writing.
//!
//! Artifacts are CSV (header row, `#` comment lines carrying the version,
//! seed and the fully defaulted config, floats with 17 significant digits) or
//! a single JSON object. Both are pure functions of the config and seed.

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::{json, Map, Value};

use crate::analysis::{
    ergodic_decay, invariant_measure_estimate, moment_curves, spatial_error_sweep, weak_error_sweep, RateFit,
    WeakErrorReport,
};
use crate::config::{ExperimentConfig, OutputFormat};
use crate::error::Error;
use crate::noise::RngStream;
use crate::scheme::Simulation;
use crate::selftest::run_self_test;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub const EXIT_OK: i32 = 0;
pub const EXIT_IO: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_BLOWUP: i32 = 3;
pub const EXIT_SELF_TEST: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "sace", version, about = "Tamed exponential Euler solver for the stochastic Allen-Cahn equation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    /// Experiment config (TOML); defaults apply when omitted.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Overrides `run.seed`.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Worker threads (default: available cores). Never changes results.
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    /// Output file (default: `run.output`, else stdout).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,

    #[arg(long, global = true, value_enum)]
    pub format: Option<FormatArg>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum FormatArg {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, Subcommand)]
pub enum Command {
    /// One sample path; saves every `save_stride` steps.
    Simulate,
    /// Temporal weak errors over `tau_list` against `tau_ref`.
    WeakError,
    /// Spatial weak errors over `n_list` against `n_ref`.
    SpatialError,
    /// Moment curves `E ||V_k||_inf^p` for `moment_p`.
    Moments,
    /// Decay of `E Phi` between two initial states.
    Ergodic,
    /// Time and ensemble averages of `Phi` after burn-in.
    Invariant,
    /// Algebraic and oracle checks.
    SelfTest,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::WeakError => "weak-error",
            Command::SpatialError => "spatial-error",
            Command::Moments => "moments",
            Command::Ergodic => "ergodic",
            Command::Invariant => "invariant",
            Command::SelfTest => "self-test",
        }
    }
}

/// A rendered artifact: summary fields plus a table.
struct Artifact {
    summary: Vec<(&'static str, Value)>,
    columns: Vec<String>,
    rows: Vec<Vec<Value>>,
}

impl Artifact {
    fn new(columns: &[&str]) -> Self {
        Self { summary: Vec::new(), columns: columns.iter().map(|c| c.to_string()).collect(), rows: Vec::new() }
    }
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    match execute(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Io(_) => EXIT_IO,
        Error::BlowUp { .. } | Error::Numerical(_) => EXIT_BLOWUP,
        Error::Domain(_) | Error::Precondition(_) | Error::Assumption(_) | Error::Config(_) => EXIT_CONFIG,
    }
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig, Error> {
    let mut cfg = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
            ExperimentConfig::parse(&text)?
        }
        None => ExperimentConfig::default().resolved()?,
    };
    if let Some(seed) = cli.seed {
        cfg.run.seed = seed;
    }
    if let Some(format) = cli.format {
        cfg.run.format = match format {
            FormatArg::Csv => OutputFormat::Csv,
            FormatArg::Json => OutputFormat::Json,
        };
    }
    if let Some(out) = &cli.out {
        cfg.run.output = Some(out.display().to_string());
    }
    Ok(cfg)
}

fn execute(cli: &Cli) -> Result<i32, Error> {
    let cfg = load_config(cli)?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Error::Config("--threads must be positive".into()));
        }
        builder = builder.num_threads(n);
    }
    let pool = builder.build().map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    let (artifact, code) = pool.install(|| dispatch(cli.command, &cfg))?;
    let text = match cfg.run.format {
        OutputFormat::Csv => render_csv(cli.command, &cfg, &artifact),
        OutputFormat::Json => render_json(cli.command, &cfg, &artifact),
    };
    match &cfg.run.output {
        Some(path) => std::fs::write(path, text)?,
        None => std::io::stdout().lock().write_all(text.as_bytes())?,
    }
    Ok(code)
}

fn dispatch(command: Command, cfg: &ExperimentConfig) -> Result<(Artifact, i32), Error> {
    let artifact = match command {
        Command::Simulate => simulate(cfg)?,
        Command::WeakError => {
            let setup = cfg.mc_setup()?;
            let tau_ref = cfg.run.tau_ref.ok_or_else(|| Error::Config("weak-error needs run.tau_ref".into()))?;
            let tau_list = required(&cfg.run.tau_list, "run.tau_list")?;
            let report = weak_error_sweep(&setup, tau_list, cfg.scheme.n_modes, tau_ref, cfg.horizon())?;
            sweep_artifact(&report)
        }
        Command::SpatialError => {
            let mut setup = cfg.mc_setup()?;
            let n_list = required(&cfg.run.n_list, "run.n_list")?;
            let n_ref = cfg.run.n_ref.ok_or_else(|| Error::Config("spatial-error needs run.n_ref".into()))?;
            setup.spectrum = setup.spectrum.with_modes(n_ref);
            let report = spatial_error_sweep(&setup, n_list, cfg.scheme.tau, n_ref, cfg.horizon())?;
            sweep_artifact(&report)
        }
        Command::Moments => moments(cfg)?,
        Command::Ergodic => {
            let setup = cfg.mc_setup()?;
            let report = ergodic_decay(&cfg.scheme_config()?, &setup, &cfg.initial_state()?, &cfg.compare_state()?)?;
            let mut a = Artifact::new(&["time", "gap", "gap_stderr"]);
            a.summary.push(("rho", opt_f64(report.rho())));
            a.summary.push(("rho_halfwidth", opt_f64(report.rate.map(|r| r.halfwidth))));
            a.summary.push(("fit_points", json!(report.rate.map_or(0, |r| r.points))));
            a.summary.push(("mixing_rate_floor", json!(report.theoretical_floor)));
            for k in 0..report.times.len() {
                a.rows.push(vec![json!(report.times[k]), json!(report.gaps[k]), json!(report.gap_stderr[k])]);
            }
            a
        }
        Command::Invariant => {
            let setup = cfg.mc_setup()?;
            let scheme = cfg.scheme_config()?;
            let burn_in = cfg.run.burn_in.unwrap_or(5.0 / setup.drift.mixing_rate());
            let est = invariant_measure_estimate(&scheme, &setup, burn_in)?;
            if est.burn_in_warning {
                eprintln!("warning: burn-in {burn_in} is shorter than five mixing times");
            }
            let mut a = Artifact::new(&[
                "time_average",
                "time_average_stderr",
                "ensemble_average",
                "ensemble_average_stderr",
                "gap",
                "gap_stderr",
            ]);
            a.summary.push(("burn_in", json!(burn_in)));
            a.summary.push(("burn_in_warning", json!(est.burn_in_warning)));
            a.rows.push(vec![
                json!(est.time_average.mean),
                json!(est.time_average.standard_error),
                json!(est.ensemble_average.mean),
                json!(est.ensemble_average.standard_error),
                json!(est.gap),
                json!(est.gap_stderr),
            ]);
            a
        }
        Command::SelfTest => {
            let report = run_self_test();
            let mut a = Artifact::new(&["check", "passed", "detail"]);
            a.summary.push(("passed", json!(report.passed())));
            for c in &report.checks {
                a.rows.push(vec![json!(c.name), json!(c.passed), json!(c.detail)]);
            }
            let code = if report.passed() { EXIT_OK } else { EXIT_SELF_TEST };
            return Ok((a, code));
        }
    };
    Ok((artifact, EXIT_OK))
}

fn required<'a, T>(list: &'a [T], key: &str) -> Result<&'a [T], Error> {
    if list.is_empty() {
        Err(Error::Config(format!("{key} must be a nonempty list")))
    } else {
        Ok(list)
    }
}

fn opt_f64(x: Option<f64>) -> Value {
    x.map_or(Value::Null, |v| json!(v))
}

fn simulate(cfg: &ExperimentConfig) -> Result<Artifact, Error> {
    let scheme = cfg.scheme_config()?;
    let stride = cfg.run.save_stride.unwrap_or(scheme.n_steps.max(1));
    let functional = cfg.functional();
    let mut sim = Simulation::new(&scheme, cfg.drift()?, &cfg.spectrum()?, &cfg.initial_state()?, RngStream::new(cfg.run.seed, 0))?;
    let mut columns = vec!["step".to_string(), "time".to_string(), "phi".to_string(), "sup_norm".to_string()];
    columns.extend((1..=scheme.n_modes).map(|k| format!("c{k}")));
    let mut a = Artifact { summary: Vec::new(), columns, rows: Vec::new() };
    for k in 1..=scheme.n_steps {
        sim.advance()?;
        if k % stride == 0 {
            let mut row = vec![json!(k), json!(sim.time()), json!(functional.eval(sim.state())), json!(sim.sup_norm())];
            row.extend(sim.state().iter().map(|c| json!(c)));
            a.rows.push(row);
        }
    }
    a.summary.push(("saved_states", json!(a.rows.len())));
    Ok(a)
}

fn moments(cfg: &ExperimentConfig) -> Result<Artifact, Error> {
    let scheme = cfg.scheme_config()?;
    let curves = moment_curves(&scheme, &cfg.mc_setup()?, &cfg.run.moment_p)?;
    let mut columns = vec!["time".to_string()];
    for c in &curves {
        columns.push(format!("m{}", c.p));
        columns.push(format!("m{}_stderr", c.p));
    }
    let mut a = Artifact { summary: Vec::new(), columns, rows: Vec::new() };
    if let Some(first) = curves.first() {
        a.summary.push(("max_sup_norm", json!(first.max_sup)));
        for k in 0..first.times.len() {
            let mut row = vec![json!(first.times[k])];
            for c in &curves {
                row.push(json!(c.estimates[k]));
                row.push(json!(c.standard_errors[k]));
            }
            a.rows.push(row);
        }
    }
    for c in &curves {
        let key: &'static str = match c.p {
            2 => "flatness_p2",
            4 => "flatness_p4",
            _ => "flatness_p8",
        };
        a.summary.push((key, json!(c.flatness)));
    }
    Ok(a)
}

fn sweep_artifact(report: &WeakErrorReport) -> Artifact {
    let mut a = Artifact::new(&["tau", "N", "mean", "stderr", "error_vs_ref", "error_stderr"]);
    a.summary.push(("reference_tau", json!(report.reference_tau)));
    a.summary.push(("reference_n_modes", json!(report.reference_n_modes)));
    a.summary.push(("reference_mean", json!(report.reference.mean)));
    a.summary.push(("reference_stderr", json!(report.reference.standard_error)));
    let (slope, halfwidth, points) = match report.rate {
        Some(RateFit { slope, halfwidth, points }) => (json!(slope), json!(halfwidth), json!(points)),
        None => (Value::Null, Value::Null, json!(0)),
    };
    a.summary.push(("rate", slope));
    a.summary.push(("rate_halfwidth", halfwidth));
    a.summary.push(("fit_points", points));
    for r in &report.rows {
        a.rows.push(vec![
            json!(r.tau),
            json!(r.n_modes),
            json!(r.mean),
            json!(r.stderr),
            json!(r.error_vs_ref),
            json!(r.error_stderr),
        ]);
    }
    a
}

fn csv_cell(v: &Value) -> String {
    match v {
        Value::Null => String::new(),
        Value::Number(n) if n.is_f64() => format_float(n.as_f64().unwrap_or(f64::NAN)),
        Value::Number(n) => n.to_string(),
        Value::Bool(b) => b.to_string(),
        Value::String(s) if s.contains([',', '"', '\n']) => format!("\"{}\"", s.replace('"', "\"\"")),
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

/// 17 significant digits, enough to round-trip any `f64`.
pub fn format_float(x: f64) -> String {
    format!("{x:.16e}")
}

fn render_csv(command: Command, cfg: &ExperimentConfig, a: &Artifact) -> String {
    let mut out = String::new();
    out.push_str(&format!("# sace {VERSION}\n# command = {}\n# seed = {}\n", command.name(), cfg.run.seed));
    for (key, value) in &a.summary {
        out.push_str(&format!("# {key} = {}\n", csv_cell(value)));
    }
    out.push_str("# config:\n");
    for line in cfg.to_toml().lines() {
        if line.is_empty() {
            out.push_str("#\n");
        } else {
            out.push_str(&format!("#   {line}\n"));
        }
    }
    out.push_str(&a.columns.join(","));
    out.push('\n');
    for row in &a.rows {
        let cells: Vec<String> = row.iter().map(csv_cell).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

fn render_json(command: Command, cfg: &ExperimentConfig, a: &Artifact) -> String {
    let mut obj = Map::new();
    obj.insert("version".into(), json!(VERSION));
    obj.insert("command".into(), json!(command.name()));
    obj.insert("seed".into(), json!(cfg.run.seed));
    obj.insert("config".into(), json!(cfg.to_toml()));
    for (key, value) in &a.summary {
        obj.insert((*key).into(), value.clone());
    }
    let rows = a
        .rows
        .iter()
        .map(|row| Value::Object(a.columns.iter().cloned().zip(row.iter().cloned()).collect()))
        .collect();
    obj.insert("rows".into(), Value::Array(rows));
    let mut text = serde_json::to_string_pretty(&Value::Object(obj)).expect("json");
    text.push('\n');
    text
}
