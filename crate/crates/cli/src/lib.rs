//! Command-line driver for the volcast pipeline.
//!
//! Every subcommand writes its results plus a `manifest.json` recording the
//! resolved options, the seed and SHA-256 digests of inputs and outputs.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{ArgMatches, Args, CommandFactory, FromArgMatches, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use volcast_core::epa::{self, EpaError, GwInstruments, HacOptions, TestKind};
use volcast_core::features::{build_design, standardize_dropping, ModelSpec};
use volcast_core::forecast::{run_panel, ForecastRun, Loss, ModelChoice, Scheme, SchemeConfig};
use volcast_core::panel::{load_intraday, load_panel, summarize, write_intraday, write_measure_panel};
use volcast_core::report::{render_summary, render_tables, Cell, EpaTable, Format};
use volcast_core::shrinkage::{
    adaptive_weights, cross_validate, fit_penalized, pilot_coefficients, CvOptions, CvResult, FoldScheme, PenaltyKind,
    PenaltySpec,
};
use volcast_core::simulate::{simulate_paths, DgpConfig};
use volcast_core::{Error as CoreError, ErrorKind};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_NUMERICAL: i32 = 4;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] CoreError),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Io { .. } => EXIT_DATA,
            CliError::Core(e) => match e.kind() {
                ErrorKind::Config => EXIT_CONFIG,
                ErrorKind::Data => EXIT_DATA,
                ErrorKind::Numerical => EXIT_NUMERICAL,
            },
        }
    }
}

fn core<E: Into<CoreError>>(e: E) -> CliError {
    CliError::Core(e.into())
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "volcast",
    version,
    about = "Realized-volatility forecasting and forecast comparison"
)]
#[command(args_override_self = true)]
pub struct Cli {
    /// Base seed for every random choice.
    #[arg(long, global = true, default_value_t = 7)]
    pub seed: u64,
    /// Worker threads (defaults to the number of cores).
    #[arg(long, global = true, env = "VOLCAST_THREADS")]
    pub threads: Option<usize>,
    /// Output directory (output file for `measures`).
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    /// Flat `key = value` file with default options; command-line flags win.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Daily realized measures from intraday returns.
    Measures(MeasuresArgs),
    /// Penalized HAR fit on the full sample of one firm.
    Fit(FitArgs),
    /// Rolling or expanding out-of-sample forecasts.
    Forecast(ForecastArgs),
    /// DM, CW and GW tests on forecast runs.
    Test(TestArgs),
    /// Simulated intraday panels with known integrated and jump variation.
    Simulate(SimulateArgs),
    /// Summary statistics of a daily panel.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct MeasuresArgs {
    /// Intraday CSV with header `date,firm,seq,return`.
    #[arg(long = "in")]
    pub input: PathBuf,
}

#[derive(Debug, Args, Clone)]
pub struct PenaltyArgs {
    /// Number of cross-validation folds.
    #[arg(long, default_value_t = 5)]
    pub cv: usize,
    /// Points on the λ grid.
    #[arg(long, default_value_t = 100)]
    pub grid: usize,
    /// Smallest λ as a fraction of λ_max.
    #[arg(long, default_value_t = 1e-4)]
    pub ratio: f64,
    /// Elastic-net ℓ₁ share.
    #[arg(long, default_value_t = 0.5)]
    pub eta: f64,
    /// Adaptive-lasso weight exponent.
    #[arg(long, default_value_t = 1.0)]
    pub gamma: f64,
    /// Shuffle rows before forming folds instead of contiguous blocks.
    #[arg(long)]
    pub shuffle_folds: bool,
}

impl PenaltyArgs {
    fn cv_options(&self, seed: u64) -> CvOptions {
        CvOptions {
            folds: self.cv,
            scheme: if self.shuffle_folds {
                FoldScheme::Shuffled { seed }
            } else {
                FoldScheme::Contiguous
            },
            n_grid: self.grid,
            ratio: self.ratio,
            ..CvOptions::default()
        }
    }

    fn apply(&self, choice: &mut ModelChoice, seed: u64) {
        choice.eta = self.eta;
        choice.gamma = self.gamma;
        choice.cv = self.cv_options(seed);
    }
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// Daily panel (wide RV or measure panel).
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Target firm.
    #[arg(long)]
    pub firm: String,
    /// HAR variant, or a full `variant:penalty[:scope]` string.
    #[arg(long, default_value = "har")]
    pub spec: String,
    /// ols, lasso, alasso or enet; overrides the penalty inside `--spec`.
    #[arg(long)]
    pub penalty: Option<String>,
    /// Forecast horizon in days.
    #[arg(long, default_value_t = 1)]
    pub h: usize,
    /// Fixed penalty level; cross-validated when absent.
    #[arg(long)]
    pub lambda: Option<f64>,
    #[command(flatten)]
    pub tuning: PenaltyArgs,
}

#[derive(Debug, Args)]
pub struct ForecastArgs {
    /// Daily panel (wide RV or measure panel).
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Benchmark model.
    #[arg(long, default_value = "har:ols")]
    pub bench: String,
    /// Alternative model(s); repeat or separate with commas.
    #[arg(long, value_delimiter = ',', default_value = "har:lasso")]
    pub model: Vec<String>,
    /// rolling or expanding.
    #[arg(long, default_value = "rolling")]
    pub scheme: String,
    /// Estimation window in rows.
    #[arg(long, default_value_t = 252)]
    pub window: usize,
    /// Forecast horizon in days.
    #[arg(long, default_value_t = 1)]
    pub h: usize,
    /// `all` or a comma-separated list of firms.
    #[arg(long, default_value = "all")]
    pub firms: String,
    /// squared or absolute.
    #[arg(long, default_value = "squared")]
    pub loss: String,
    /// Re-run cross-validation every this many windows.
    #[arg(long, default_value_t = 1)]
    pub cv_refresh: usize,
    /// Clamp negative forecasts at zero.
    #[arg(long)]
    pub floor_zero: bool,
    #[command(flatten)]
    pub tuning: PenaltyArgs,
}

#[derive(Debug, Args)]
pub struct TestArgs {
    /// Directory with forecast runs.
    #[arg(long)]
    pub runs: PathBuf,
    /// Tests to run.
    #[arg(long, value_delimiter = ',', default_value = "dm,cw,gw")]
    pub tests: Vec<String>,
    /// Significance level for flagging.
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    /// GW instruments: lagged (1, ΔL_t) or constant.
    #[arg(long, default_value = "lagged")]
    pub gw_instruments: String,
    /// Small-sample DM correction.
    #[arg(long)]
    pub harvey: bool,
    /// Output formats.
    #[arg(long, value_delimiter = ',', default_value = "text,csv,json")]
    pub format: Vec<String>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// sv, sv-jumps, constant or constant-jumps.
    #[arg(long, default_value = "sv-jumps")]
    pub preset: String,
    /// Number of firms.
    #[arg(long = "N")]
    pub n_firms: Option<usize>,
    /// Number of days.
    #[arg(long = "T")]
    pub n_days: Option<usize>,
    /// Intraday returns per day.
    #[arg(long = "M")]
    pub m: Option<usize>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Daily panel (wide RV or measure panel).
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Output formats.
    #[arg(long, value_delimiter = ',', default_value = "text,csv,json")]
    pub format: Vec<String>,
}

/// Reproducibility record written next to every output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub seed: u64,
    pub options: BTreeMap<String, String>,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

pub fn sha256_file(path: &Path) -> Result<String, CliError> {
    let bytes = std::fs::read(path).map_err(io_err(path))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

fn digest(path: &Path, shown: String) -> Result<FileDigest, CliError> {
    Ok(FileDigest {
        path: shown,
        sha256: sha256_file(path)?,
    })
}

/// Reads `key = value` lines; `#` starts a comment.
pub fn parse_config(text: &str) -> Result<Vec<(String, String)>, CliError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("config line {}: expected key = value", i + 1)))?;
        let k = k.trim().replace('_', "-");
        if k.is_empty() {
            return Err(CliError::Config(format!("config line {}: empty key", i + 1)));
        }
        out.push((k, v.trim().to_string()));
    }
    Ok(out)
}

// Global flags stay on the command line so the config cannot redirect output.
const GLOBAL_KEYS: [&str; 4] = ["seed", "threads", "out", "config"];

/// Turns config entries into flags placed before the user's own flags, so the
/// command line wins. Unknown keys are rejected.
fn config_args(entries: &[(String, String)], subcommand: &str) -> Result<Vec<OsString>, CliError> {
    let cmd = Cli::command();
    let sub = cmd
        .find_subcommand(subcommand)
        .ok_or_else(|| CliError::Config(format!("unknown subcommand `{subcommand}`")))?;
    let mut args = Vec::new();
    for (k, v) in entries {
        let arg = sub
            .get_arguments()
            .find(|a| a.get_long() == Some(k.as_str()) && !GLOBAL_KEYS.contains(&k.as_str()));
        let Some(arg) = arg else {
            return Err(CliError::Config(format!("unknown config key `{k}` for `{subcommand}`")));
        };
        let is_flag = matches!(arg.get_action(), clap::ArgAction::SetTrue);
        if is_flag {
            match v.as_str() {
                "true" | "1" | "yes" => args.push(OsString::from(format!("--{k}"))),
                "false" | "0" | "no" => {}
                _ => return Err(CliError::Config(format!("config key `{k}` expects true or false"))),
            }
        } else {
            args.push(OsString::from(format!("--{k}")));
            args.push(OsString::from(v));
        }
    }
    Ok(args)
}

fn subcommand_position(argv: &[OsString]) -> Option<(usize, String)> {
    let cmd = Cli::command();
    let names: Vec<String> = cmd.get_subcommands().map(|s| s.get_name().to_string()).collect();
    argv.iter().enumerate().skip(1).find_map(|(i, a)| {
        a.to_str()
            .filter(|s| names.iter().any(|n| n == s))
            .map(|s| (i, s.to_string()))
    })
}

/// Options as resolved after merging, for the manifest. Thread count and
/// output location do not affect results and are left out.
fn resolved_options(matches: &ArgMatches) -> BTreeMap<String, String> {
    let mut out = BTreeMap::new();
    let Some((_, sub)) = matches.subcommand() else {
        return out;
    };
    for id in sub.ids() {
        let key = id.as_str();
        if matches!(key, "threads" | "out" | "config" | "seed") {
            continue;
        }
        if let Ok(Some(vals)) = sub.try_get_raw(key) {
            let v: Vec<String> = vals.map(|s| s.to_string_lossy().into_owned()).collect();
            out.insert(key.replace('_', "-"), v.join(","));
        }
    }
    out
}

/// Parses arguments (merging any config file) without running anything.
pub fn parse_args<I, T>(argv: I) -> Result<(Cli, BTreeMap<String, String>), clap::Error>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let argv: Vec<OsString> = argv.into_iter().map(Into::into).collect();
    let first = Cli::command().try_get_matches_from(&argv)?;
    let cli = Cli::from_arg_matches(&first)?;
    let Some(path) = cli.config.clone() else {
        return Ok((cli, resolved_options(&first)));
    };
    let fail = |msg: String| Cli::command().error(clap::error::ErrorKind::InvalidValue, msg);
    let text =
        std::fs::read_to_string(&path).map_err(|e| fail(format!("cannot read config {}: {e}", path.display())))?;
    let entries = parse_config(&text).map_err(|e| fail(e.to_string()))?;
    let (pos, name) = subcommand_position(&argv).ok_or_else(|| fail("no subcommand".into()))?;
    let injected = config_args(&entries, &name).map_err(|e| fail(e.to_string()))?;
    let mut merged: Vec<OsString> = argv[..=pos].to_vec();
    merged.extend(injected);
    merged.extend(argv[pos + 1..].iter().cloned());
    let matches = Cli::command().try_get_matches_from(&merged)?;
    let cli = Cli::from_arg_matches(&matches)?;
    Ok((cli, resolved_options(&matches)))
}

/// Entry point used by the binary: returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let (cli, options) = match parse_args(argv) {
        Ok(v) => v,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    match execute(&cli, options) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

/// Runs a parsed command inside a thread pool of the requested size.
pub fn execute(cli: &Cli, options: BTreeMap<String, String>) -> Result<(), CliError> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Config("--threads must be at least 1".into()));
        }
        builder = builder.num_threads(n);
    }
    let pool = builder
        .build()
        .map_err(|e| CliError::Config(format!("cannot start thread pool: {e}")))?;
    pool.install(|| dispatch(cli, options))
}

struct Ctx<'a> {
    cli: &'a Cli,
    command: &'static str,
    options: BTreeMap<String, String>,
    inputs: Vec<FileDigest>,
}

impl Ctx<'_> {
    fn add_input(&mut self, path: &Path) -> Result<(), CliError> {
        self.inputs.push(digest(path, path.display().to_string())?);
        Ok(())
    }

    fn write_manifest(self, manifest_path: &Path, outputs: &[PathBuf]) -> Result<(), CliError> {
        let base = manifest_path.parent().unwrap_or(Path::new(""));
        let outputs = outputs
            .iter()
            .map(|p| {
                let shown = p.strip_prefix(base).unwrap_or(p).display().to_string();
                digest(p, shown)
            })
            .collect::<Result<Vec<_>, _>>()?;
        let manifest = Manifest {
            tool: "volcast".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: self.command.into(),
            seed: self.cli.seed,
            options: self.options,
            inputs: self.inputs,
            outputs,
        };
        let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        std::fs::write(manifest_path, text + "\n").map_err(io_err(manifest_path))
    }
}

fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(io_err(dir))
}

fn parse_formats(list: &[String]) -> Result<Vec<Format>, CliError> {
    list.iter()
        .map(|f| f.parse::<Format>().map_err(|e| CliError::Config(e.to_string())))
        .collect()
}

fn parse_model(s: &str) -> Result<ModelChoice, CliError> {
    ModelChoice::parse(s).map_err(|e| CliError::Config(e.to_string()))
}

fn dispatch(cli: &Cli, options: BTreeMap<String, String>) -> Result<(), CliError> {
    let command = match &cli.command {
        Command::Measures(_) => "measures",
        Command::Fit(_) => "fit",
        Command::Forecast(_) => "forecast",
        Command::Test(_) => "test",
        Command::Simulate(_) => "simulate",
        Command::Report(_) => "report",
    };
    let ctx = Ctx {
        cli,
        command,
        options,
        inputs: Vec::new(),
    };
    match &cli.command {
        Command::Measures(a) => cmd_measures(ctx, a),
        Command::Fit(a) => cmd_fit(ctx, a),
        Command::Forecast(a) => cmd_forecast(ctx, a),
        Command::Test(a) => cmd_test(ctx, a),
        Command::Simulate(a) => cmd_simulate(ctx, a),
        Command::Report(a) => cmd_report(ctx, a),
    }
}

fn cmd_measures(mut ctx: Ctx, a: &MeasuresArgs) -> Result<(), CliError> {
    ctx.add_input(&a.input)?;
    let intraday = load_intraday(&a.input).map_err(core)?;
    let panel = intraday.realize().map_err(core)?;
    let out = ctx.cli.out.clone();
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        ensure_dir(parent)?;
    }
    write_measure_panel(&panel, &out).map_err(core)?;
    log::info!(
        "wrote {} firms × {} days to {}",
        panel.n_firms(),
        panel.n_days(),
        out.display()
    );
    let mut name = out.file_name().unwrap_or_default().to_os_string();
    name.push(".manifest.json");
    let manifest = out.with_file_name(name);
    ctx.write_manifest(&manifest, &[out])
}

#[derive(Debug, Serialize, Deserialize)]
struct FitReport {
    firm: String,
    model: String,
    horizon: usize,
    n_rows: usize,
    lambda: Option<f64>,
    intercept: f64,
    coefficients: Vec<NamedCoefficient>,
    cv: Option<CvResult>,
}

#[derive(Debug, Serialize, Deserialize)]
struct NamedCoefficient {
    name: String,
    value: f64,
    active: bool,
}

fn fit_model_string(spec: &str, penalty: Option<&str>) -> String {
    let mut parts: Vec<&str> = spec.split(':').collect();
    match (parts.len(), penalty) {
        (1, p) => parts.push(p.unwrap_or("lasso")),
        (_, Some(p)) => parts[1] = p,
        _ => {}
    }
    parts.join(":")
}

fn cmd_fit(mut ctx: Ctx, a: &FitArgs) -> Result<(), CliError> {
    if a.lambda.is_some_and(|l| !(l >= 0.0 && l.is_finite())) {
        return Err(CliError::Config("--lambda must be a finite non-negative number".into()));
    }
    ctx.add_input(&a.input)?;
    let panel = load_panel(&a.input).map_err(core)?;
    let choice = parse_model(&fit_model_string(&a.spec, a.penalty.as_deref()))?;
    let spec = ModelSpec::new(choice.variant, choice.scope, a.h);
    let design = build_design(&panel, &a.firm, &spec, None).map_err(core)?;
    let st = standardize_dropping(&design.x, Some(&design.column_names)).map_err(core)?;
    let mut penalty = match choice.penalty {
        PenaltyKind::None => PenaltySpec::ols(),
        PenaltyKind::Lasso => PenaltySpec::lasso(0.0),
        PenaltyKind::ElasticNet => PenaltySpec::elastic_net(0.0, a.tuning.eta),
        PenaltyKind::AdaptiveLasso => {
            let pilot = pilot_coefficients(&st.x, &design.y).map_err(core)?;
            PenaltySpec {
                gamma: a.tuning.gamma,
                ..PenaltySpec::adaptive_lasso(0.0, adaptive_weights(&pilot, a.tuning.gamma))
            }
        }
    };
    let cv_opts = a.tuning.cv_options(ctx.cli.seed);
    let (lambda, cv) = match (choice.penalty, a.lambda) {
        (PenaltyKind::None, _) => (None, None),
        (_, Some(l)) => (Some(l), None),
        (_, None) => {
            let cv = cross_validate(&st.x, &design.y, &penalty, &cv_opts).map_err(core)?;
            (Some(cv.best_lambda), Some(cv))
        }
    };
    penalty.lambda = lambda.unwrap_or(0.0);
    let fit = fit_penalized(&st.x, &design.y, &penalty, &cv_opts.solver).map_err(core)?;
    let (intercept, beta) = st.destandardize(fit.intercept, &fit.coefficients);
    let report = FitReport {
        firm: a.firm.clone(),
        model: choice.label(),
        horizon: a.h,
        n_rows: design.n_rows(),
        lambda,
        intercept,
        coefficients: design
            .column_names
            .iter()
            .zip(&beta)
            .map(|(n, b)| NamedCoefficient {
                name: n.clone(),
                value: *b,
                active: *b != 0.0,
            })
            .collect(),
        cv,
    };
    let dir = ctx.cli.out.clone();
    ensure_dir(&dir)?;
    let json = dir.join("fit.json");
    let csv = dir.join("fit.csv");
    let text = serde_json::to_string_pretty(&report).expect("fit report serializes");
    std::fs::write(&json, text + "\n").map_err(io_err(&json))?;
    let mut rows = format!("name,coefficient,active\nintercept,{},true\n", report.intercept);
    for c in &report.coefficients {
        rows.push_str(&format!("{},{},{}\n", c.name, c.value, c.active));
    }
    std::fs::write(&csv, rows).map_err(io_err(&csv))?;
    ctx.write_manifest(&dir.join("manifest.json"), &[json, csv])
}

fn file_tag(label: &str) -> String {
    label.replace(':', "-")
}

fn cmd_forecast(mut ctx: Ctx, a: &ForecastArgs) -> Result<(), CliError> {
    ctx.add_input(&a.input)?;
    let panel = load_panel(&a.input).map_err(core)?;
    let seed = ctx.cli.seed;
    let mut bench = parse_model(&a.bench)?;
    a.tuning.apply(&mut bench, seed);
    let models = a
        .model
        .iter()
        .map(|m| {
            let mut c = parse_model(m)?;
            a.tuning.apply(&mut c, seed);
            Ok(c)
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    let cfg = SchemeConfig {
        scheme: a
            .scheme
            .parse::<Scheme>()
            .map_err(|e| CliError::Config(e.to_string()))?,
        window: a.window,
        horizon: a.h,
        loss: a.loss.parse::<Loss>().map_err(|e| CliError::Config(e.to_string()))?,
        cv_refresh: a.cv_refresh,
        floor_zero: a.floor_zero,
    };
    let firms: Vec<String> = if a.firms == "all" {
        panel.firms().to_vec()
    } else {
        a.firms.split(',').map(|s| s.trim().to_string()).collect()
    };
    for f in &firms {
        panel.firm_index(f).map_err(core)?;
    }
    let dir = ctx.cli.out.clone();
    ensure_dir(&dir)?;
    let mut outputs = Vec::new();
    for model in &models {
        let runs = run_panel(&panel, &firms, &bench, model, &cfg).map_err(core)?;
        for run in &runs {
            let stem = format!("{}__{}", run.firm, file_tag(&run.model));
            let csv = dir.join(format!("{stem}.csv"));
            let json = dir.join(format!("{stem}.json"));
            run.write_csv(&csv).map_err(core)?;
            run.write_json(&json).map_err(core)?;
            log::info!("{}: {} forecasts, model {}", run.firm, run.len(), run.model);
            outputs.push(csv);
            outputs.push(json);
        }
    }
    ctx.write_manifest(&dir.join("manifest.json"), &outputs)
}

fn run_files(dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(io_err(dir))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "json") && p.file_name().is_some_and(|n| n != "manifest.json"))
        .collect();
    paths.sort();
    Ok(paths)
}

/// Loads every forecast run in `dir`, sorted by file name.
pub fn load_runs(dir: &Path) -> Result<Vec<ForecastRun>, CliError> {
    run_files(dir)?
        .iter()
        .map(|p| ForecastRun::read_json(p).map_err(core))
        .collect()
}

fn tolerated(e: &EpaError) -> bool {
    matches!(
        e,
        EpaError::DegenerateSeries | EpaError::SingularOmega | EpaError::ExpandingSchemeRejected
    )
}

/// Builds one table per requested test from a set of runs.
pub fn epa_tables(
    runs: &[ForecastRun],
    tests: &[TestKind],
    alpha: f64,
    instruments: GwInstruments,
    harvey: bool,
) -> Result<Vec<EpaTable>, CliError> {
    let mut columns: Vec<String> = runs.iter().map(|r| r.model.clone()).collect();
    columns.sort();
    columns.dedup();
    let mut firms: Vec<String> = runs.iter().map(|r| r.firm.clone()).collect();
    firms.sort();
    firms.dedup();
    let hac = HacOptions {
        bandwidth: None,
        harvey,
    };
    let mut tables = Vec::new();
    for &test in tests {
        let mut table = EpaTable::new(test, alpha, columns.clone());
        for firm in &firms {
            let mut cells = Vec::with_capacity(columns.len());
            for col in &columns {
                let Some(run) = runs.iter().find(|r| &r.firm == firm && &r.model == col) else {
                    cells.push(None);
                    continue;
                };
                let res = match test {
                    TestKind::Dm => epa::dm_test_with(&run.l1, &run.l2, run.horizon, &hac),
                    TestKind::Cw => epa::cw_test(&run.e1, &run.e2, &run.f1, &run.f2, run.horizon),
                    TestKind::Gw => epa::gw_test(&run.d, instruments, run.horizon, run.scheme),
                };
                match res {
                    Ok(r) => cells.push(Some(Cell::from(&r))),
                    Err(e) if tolerated(&e) => {
                        log::warn!("{test} undefined for firm {firm}, model {col}: {e}");
                        cells.push(None);
                    }
                    Err(e) => {
                        log::error!("{test} failed for firm {firm}, model {col}");
                        return Err(core(e));
                    }
                }
            }
            table.push_row(firm.clone(), cells);
        }
        tables.push(table);
    }
    Ok(tables)
}

fn cmd_test(mut ctx: Ctx, a: &TestArgs) -> Result<(), CliError> {
    let tests = a
        .tests
        .iter()
        .map(|t| t.parse::<TestKind>().map_err(CliError::Config))
        .collect::<Result<Vec<_>, _>>()?;
    let instruments = match a.gw_instruments.as_str() {
        "lagged" => GwInstruments::LaggedLoss,
        "constant" => GwInstruments::Constant,
        other => return Err(CliError::Config(format!("unknown GW instruments `{other}`"))),
    };
    if !(a.alpha > 0.0 && a.alpha < 1.0) {
        return Err(CliError::Config(format!("alpha must lie in (0, 1), got {}", a.alpha)));
    }
    let formats = parse_formats(&a.format)?;
    let runs = load_runs(&a.runs)?;
    if runs.is_empty() {
        return Err(core(volcast_core::report::ReportError::EmptyResults));
    }
    for p in run_files(&a.runs)? {
        ctx.add_input(&p)?;
    }
    let tables = epa_tables(&runs, &tests, a.alpha, instruments, a.harvey)?;
    let dir = ctx.cli.out.clone();
    ensure_dir(&dir)?;
    let mut outputs = Vec::new();
    for t in &tables {
        let stem = t.test.to_string().to_ascii_lowercase();
        outputs.extend(render_tables(t, &formats, &dir, &stem).map_err(core)?);
        if formats.contains(&Format::Text) {
            print!("{}", t.render_text().map_err(core)?);
        }
    }
    ctx.write_manifest(&dir.join("manifest.json"), &outputs)
}

fn cmd_simulate(ctx: Ctx, a: &SimulateArgs) -> Result<(), CliError> {
    let mut cfg = DgpConfig::preset(&a.preset).map_err(core)?;
    cfg.seed = ctx.cli.seed;
    if let Some(n) = a.n_firms {
        cfg.n_firms = n;
    }
    if let Some(t) = a.n_days {
        cfg.n_days = t;
    }
    if let Some(m) = a.m {
        cfg.m = m;
    }
    let (panel, truth) = simulate_paths(&cfg).map_err(core)?;
    let dir = ctx.cli.out.clone();
    ensure_dir(&dir)?;
    let intraday = dir.join("intraday.csv");
    write_intraday(&panel, &intraday).map_err(core)?;
    let truth_path = dir.join("truth.csv");
    let mut text = String::from("date,firm,iv,jv,jumps\n");
    for (f, firm) in panel.firms().iter().enumerate() {
        for (d, day) in panel.days().iter().enumerate() {
            text.push_str(&format!(
                "{},{},{},{},{}\n",
                volcast_core::panel::format_date(*day),
                firm,
                truth.iv[f][d],
                truth.jv[f][d],
                truth.jump_counts[f][d]
            ));
        }
    }
    std::fs::write(&truth_path, text).map_err(io_err(&truth_path))?;
    ctx.write_manifest(&dir.join("manifest.json"), &[intraday, truth_path])
}

fn cmd_report(mut ctx: Ctx, a: &ReportArgs) -> Result<(), CliError> {
    ctx.add_input(&a.input)?;
    let formats = parse_formats(&a.format)?;
    let panel = load_panel(&a.input).map_err(core)?;
    let rows = summarize(&panel).map_err(core)?;
    let dir = ctx.cli.out.clone();
    ensure_dir(&dir)?;
    let mut outputs = Vec::new();
    for f in formats {
        let path = dir.join(format!("summary.{}", f.extension()));
        let text = render_summary(&rows, f).map_err(core)?;
        if f == Format::Text {
            print!("{text}");
        }
        std::fs::write(&path, text).map_err(io_err(&path))?;
        outputs.push(path);
    }
    ctx.write_manifest(&dir.join("manifest.json"), &outputs)
}
