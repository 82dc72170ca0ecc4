//! Batch command-line front end: reproducible experiments over grids of
//! environments, with flat key-value configs and machine-readable outputs.
//!
//! Every run is fully determined by its resolved configuration; outputs
//! embed that configuration as `# key = value` comment lines so a result
//! file can be re-parsed as the config that produced it. Command-line flags
//! override config-file entries, which override the `COPOLY_SEED`
//! environment fallback for the seed.

use crate::analysis::{self, FitCriterion};
use crate::disorder::{self, Environment};
use crate::engine::{self, SweepOptions, Window};
use crate::model::{self, ChargeLaw, PolymerParams};
use crate::stats::{self, Direction, Sample};
use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use std::collections::BTreeMap;
use std::io::Write;
use std::path::PathBuf;

const EXIT_CONFIG: i32 = 2;
const EXIT_NUMERIC: i32 = 3;

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Failure(String),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "config error: {m}"),
            CliError::Failure(m) => write!(f, "{m}"),
        }
    }
}

impl CliError {
    fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Failure(_) => EXIT_NUMERIC,
        }
    }
}

macro_rules! from_failure {
    ($($t:ty),*) => {$(
        impl From<$t> for CliError {
            fn from(e: $t) -> Self { CliError::Failure(e.to_string()) }
        }
    )*};
}
from_failure!(
    engine::EngineError,
    disorder::DisorderError,
    analysis::AnalysisError,
    stats::StatsError,
    model::ModelError,
    std::io::Error
);

#[derive(Parser, Debug)]
#[command(name = "copoly", version, about = "Copolymer-at-interface simulation toolkit")]
pub struct Cli {
    /// Flat key-value config file; command-line flags override its entries.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// One transfer-matrix sweep: pinned/free log-values, optional profile
    /// and growth trace.
    Sweep(SweepArgs),
    /// Concentration-based localization test over independent environments.
    Loctest(LoctestArgs),
    /// Meander distance of the endpoint profile over independent environments.
    Meander(MeanderArgs),
    /// Critical-curve estimate over a coupling grid, with the slope fit.
    Critcurve(CritcurveArgs),
    /// Atypical-stretch stopping times and the localization certificate.
    Stretch(StretchArgs),
    /// Infinite-coupling limit model sweep (binary charges).
    Limit(LimitArgs),
}

#[derive(Args, Debug, Default)]
struct SweepArgs {
    #[arg(long)]
    law: Option<ChargeLaw>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    h: Option<f64>,
    /// System size (number of monomers, even).
    #[arg(long = "N", value_parser = parse_count)]
    n_size: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    sample_index: Option<u64>,
    /// Checkpoint grid: `none`, `log10`, or `linear:<step>`.
    #[arg(long)]
    grid: Option<String>,
    /// Run the full O(N^2) recurrence instead of the windowed lower bound.
    #[arg(long)]
    full: bool,
    /// Window as `A,B,N0` (default 3,8,1000).
    #[arg(long)]
    window: Option<String>,
    /// Read the environment from a binary file instead of generating it.
    #[arg(long)]
    env_in: Option<PathBuf>,
    #[arg(long)]
    profile_out: Option<PathBuf>,
    #[arg(long)]
    trace_out: Option<PathBuf>,
    /// Lattice rescaling trigger.
    #[arg(long)]
    threshold: Option<f64>,
}

#[derive(Args, Debug, Default)]
struct LoctestArgs {
    #[arg(long)]
    law: Option<ChargeLaw>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    h: Option<f64>,
    /// Bias from the bound-curve family: h = h^(m)(lambda).
    #[arg(long)]
    m: Option<f64>,
    /// Half system size N; the tested statistic is log Z_(2N)(0).
    #[arg(long = "N", value_parser = parse_count)]
    n_half: Option<usize>,
    /// Number of independent environments.
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    direction: Option<String>,
    /// Scan a doubling grid of N, reporting the positive/negative crossing.
    #[arg(long)]
    scan: bool,
    #[arg(long = "N-max", value_parser = parse_count)]
    n_max: Option<usize>,
    /// Error level the scan must reach before reporting a crossing size.
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    full: bool,
    #[arg(long)]
    jobs: Option<usize>,
    /// JSON report path.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug, Default)]
struct MeanderArgs {
    #[arg(long)]
    law: Option<ChargeLaw>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    h: Option<f64>,
    /// System size (number of monomers, even).
    #[arg(long = "N", value_parser = parse_count)]
    n_size: Option<usize>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    confidence: Option<f64>,
    #[arg(long)]
    full: bool,
    #[arg(long)]
    jobs: Option<usize>,
    /// CSV of per-environment distances.
    #[arg(long)]
    out: Option<PathBuf>,
    /// JSON summary (median and its confidence interval).
    #[arg(long)]
    summary_out: Option<PathBuf>,
}

#[derive(Args, Debug, Default)]
struct CritcurveArgs {
    #[arg(long)]
    law: Option<ChargeLaw>,
    /// Coupling grid: comma list `0.2,0.6,1` or range `lo:hi:count`
    /// (log-spaced).
    #[arg(long)]
    lambdas: Option<String>,
    /// Half system size N; the root of Z_(2N)(0) = 1 is estimated.
    #[arg(long = "N", value_parser = parse_count)]
    n_half: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    sample_index: Option<u64>,
    #[arg(long)]
    tol: Option<f64>,
    /// Anchor the slope fit at this coupling; default is the max-ratio fit.
    #[arg(long)]
    anchor: Option<f64>,
    #[arg(long)]
    full: bool,
    #[arg(long)]
    jobs: Option<usize>,
    /// CSV of (lambda, h_hat, width, size, saturated).
    #[arg(long)]
    out: Option<PathBuf>,
    /// CSV of per-point relative errors of the fitted curve.
    #[arg(long)]
    errors_out: Option<PathBuf>,
}

#[derive(Args, Debug, Default)]
struct StretchArgs {
    #[arg(long)]
    law: Option<ChargeLaw>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    h: Option<f64>,
    /// Scan start length A (even).
    #[arg(long = "A", value_parser = parse_count)]
    a: Option<usize>,
    #[arg(long)]
    eps: Option<f64>,
    /// Stretch level; defaults to the optimally tilted mean.
    #[arg(long)]
    q: Option<f64>,
    #[arg(long, value_parser = parse_count)]
    cap: Option<usize>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    full: bool,
    #[arg(long)]
    jobs: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug, Default)]
struct LimitArgs {
    /// Slope parameter of the limit weight 2^(1/m) per submerged monomer.
    #[arg(long)]
    m: Option<f64>,
    /// System size (number of monomers, even).
    #[arg(long = "N", value_parser = parse_count)]
    n_size: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    sample_index: Option<u64>,
    #[arg(long)]
    grid: Option<String>,
    #[arg(long)]
    full: bool,
    #[arg(long)]
    window: Option<String>,
    #[arg(long)]
    profile_out: Option<PathBuf>,
    #[arg(long)]
    trace_out: Option<PathBuf>,
}

/// Counts may be written in scientific notation (`2.5e5`).
fn parse_count(s: &str) -> Result<usize, String> {
    if let Ok(v) = s.parse::<usize>() {
        return Ok(v);
    }
    let f: f64 = s.parse().map_err(|_| format!("`{s}` is not a number"))?;
    if f < 0.0 || f.fract() != 0.0 || f > u64::MAX as f64 {
        return Err(format!("`{s}` is not a non-negative integer"));
    }
    Ok(f as usize)
}

/// Flat `key = value` config: blank lines and `#` comments are skipped,
/// except that comment lines of the form `# key = value` (as embedded in
/// result files) are read back as entries.
fn parse_config(text: &str) -> BTreeMap<String, String> {
    let mut map = BTreeMap::new();
    for line in text.lines() {
        let mut s = line.trim();
        if let Some(rest) = s.strip_prefix('#') {
            let rest = rest.trim();
            let looks_like_entry = rest
                .split_once('=')
                .map(|(k, _)| {
                    let k = k.trim();
                    !k.is_empty() && k.chars().all(|c| c.is_ascii_alphanumeric() || c == '_')
                })
                .unwrap_or(false);
            if !looks_like_entry {
                continue;
            }
            s = rest;
        }
        if let Some((k, v)) = s.split_once('=') {
            map.insert(k.trim().to_string(), v.trim().to_string());
        }
    }
    map
}

/// Resolution context: CLI flag, then config file, then default.
struct Ctx {
    file: BTreeMap<String, String>,
    /// Resolved entries, recorded for embedding into outputs.
    resolved: std::cell::RefCell<BTreeMap<String, String>>,
}

impl Ctx {
    fn load(path: Option<&PathBuf>) -> Result<Ctx, CliError> {
        let file = match path {
            None => BTreeMap::new(),
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| CliError::Config(format!("cannot read {}: {e}", p.display())))?;
                parse_config(&text)
            }
        };
        Ok(Ctx { file, resolved: Default::default() })
    }

    fn record(&self, key: &str, value: String) {
        self.resolved.borrow_mut().insert(key.to_string(), value);
    }

    fn lookup<T: std::str::FromStr>(&self, cli: Option<T>, key: &str) -> Result<Option<T>, CliError>
    where
        T: ToString,
    {
        let v = match cli {
            Some(v) => Some(v),
            None => match self.file.get(key) {
                None => None,
                Some(raw) => Some(
                    raw.parse::<T>()
                        .map_err(|_| CliError::Config(format!("field `{key}`: bad value `{raw}`")))?,
                ),
            },
        };
        if let Some(ref v) = v {
            self.record(key, v.to_string());
        }
        Ok(v)
    }

    fn lookup_count(&self, cli: Option<usize>, key: &str) -> Result<Option<usize>, CliError> {
        let v = match cli {
            Some(v) => Some(v),
            None => match self.file.get(key) {
                None => None,
                Some(raw) => Some(
                    parse_count(raw)
                        .map_err(|e| CliError::Config(format!("field `{key}`: {e}")))?,
                ),
            },
        };
        if let Some(v) = v {
            self.record(key, v.to_string());
        }
        Ok(v)
    }

    fn require<T: std::str::FromStr + ToString>(&self, cli: Option<T>, key: &str) -> Result<T, CliError> {
        self.lookup(cli, key)?
            .ok_or_else(|| CliError::Config(format!("field `{key}` is required")))
    }

    fn require_count(&self, cli: Option<usize>, key: &str) -> Result<usize, CliError> {
        self.lookup_count(cli, key)?
            .ok_or_else(|| CliError::Config(format!("field `{key}` is required")))
    }

    fn or_default_count(&self, cli: Option<usize>, key: &str, default: usize) -> Result<usize, CliError> {
        match self.lookup_count(cli, key)? {
            Some(v) => Ok(v),
            None => {
                self.record(key, default.to_string());
                Ok(default)
            }
        }
    }

    fn or_default<T: std::str::FromStr + ToString>(&self, cli: Option<T>, key: &str, default: T) -> Result<T, CliError> {
        match self.lookup(cli, key)? {
            Some(v) => Ok(v),
            None => {
                self.record(key, default.to_string());
                Ok(default)
            }
        }
    }

    fn seed(&self, cli: Option<u64>) -> Result<u64, CliError> {
        if let Some(v) = self.lookup(cli, "seed")? {
            return Ok(v);
        }
        if let Ok(raw) = std::env::var("COPOLY_SEED") {
            let v = raw
                .parse::<u64>()
                .map_err(|_| CliError::Config(format!("COPOLY_SEED: bad value `{raw}`")))?;
            self.record("seed", v.to_string());
            return Ok(v);
        }
        self.record("seed", "0".to_string());
        Ok(0)
    }

    fn flag(&self, cli: bool, key: &str) -> Result<bool, CliError> {
        if cli {
            self.record(key, "true".to_string());
            return Ok(true);
        }
        match self.file.get(key) {
            None => Ok(false),
            Some(raw) => {
                let v = raw
                    .parse::<bool>()
                    .map_err(|_| CliError::Config(format!("field `{key}`: bad value `{raw}`")))?;
                self.record(key, v.to_string());
                Ok(v)
            }
        }
    }

    /// Window resolution shared by the sweep-like commands.
    fn window(&self, full: bool, spec: Option<String>) -> Result<Option<Window>, CliError> {
        if self.flag(full, "full")? {
            return Ok(None);
        }
        let w = match self.lookup(spec, "window")? {
            None => Window::PAPER,
            Some(s) => {
                let parts: Vec<&str> = s.split(',').map(str::trim).collect();
                if parts.len() != 3 {
                    return Err(CliError::Config(format!("field `window`: expected `A,B,N0`, got `{s}`")));
                }
                let a = parts[0].parse().map_err(|_| CliError::Config("field `window`: bad A".into()))?;
                let b = parts[1].parse().map_err(|_| CliError::Config("field `window`: bad B".into()))?;
                let n0 = parse_count(parts[2]).map_err(|e| CliError::Config(format!("field `window`: {e}")))?;
                Window { a, b, n0 }
            }
        };
        Ok(Some(w))
    }

    fn header(&self, command: &str) -> String {
        let mut s = format!("# command = {command}\n");
        for (k, v) in self.resolved.borrow().iter() {
            s.push_str(&format!("# {k} = {v}\n"));
        }
        s
    }

    fn config_json(&self, command: &str) -> serde_json::Value {
        let mut map = serde_json::Map::new();
        map.insert("command".into(), command.into());
        for (k, v) in self.resolved.borrow().iter() {
            map.insert(k.clone(), v.clone().into());
        }
        serde_json::Value::Object(map)
    }
}

fn even_or_config_error(v: usize, key: &str) -> Result<usize, CliError> {
    if v % 2 != 0 {
        return Err(CliError::Config(format!("field `{key}` must be even, got {v}")));
    }
    Ok(v)
}

fn parse_grid(spec: &str, n_max: usize) -> Result<Vec<usize>, CliError> {
    let even = |x: f64| -> usize { ((x / 2.0).round() as usize * 2).max(2) };
    match spec {
        "none" => Ok(vec![]),
        "log10" => {
            let mut grid: Vec<usize> = Vec::new();
            let mut exp = 1.0f64;
            while 10f64.powf(exp / 20.0) < n_max as f64 {
                let v = even(10f64.powf(exp / 20.0));
                if v <= n_max {
                    grid.push(v);
                }
                exp += 1.0;
            }
            grid.push(n_max);
            grid.sort_unstable();
            grid.dedup();
            Ok(grid)
        }
        other => {
            let step = other
                .strip_prefix("linear:")
                .and_then(|s| parse_count(s).ok())
                .filter(|&s| s > 0 && s % 2 == 0)
                .ok_or_else(|| {
                    CliError::Config(format!("field `grid`: expected none|log10|linear:<even step>, got `{other}`"))
                })?;
            Ok((1..=n_max / step).map(|i| i * step).collect())
        }
    }
}

fn parse_lambdas(spec: &str) -> Result<Vec<f64>, CliError> {
    let bad = |m: String| CliError::Config(format!("field `lambdas`: {m}"));
    if spec.contains(':') {
        let parts: Vec<&str> = spec.split(':').collect();
        if parts.len() < 2 || parts.len() > 3 {
            return Err(bad(format!("expected `lo:hi[:count]`, got `{spec}`")));
        }
        let lo: f64 = parts[0].parse().map_err(|_| bad("bad lower bound".into()))?;
        let hi: f64 = parts[1].parse().map_err(|_| bad("bad upper bound".into()))?;
        let count: usize = if parts.len() == 3 {
            parts[2].parse().map_err(|_| bad("bad count".into()))?
        } else {
            8
        };
        if !(lo > 0.0 && hi > lo && count >= 2) {
            return Err(bad("need 0 < lo < hi and count >= 2".into()));
        }
        let ratio = (hi / lo).powf(1.0 / (count - 1) as f64);
        Ok((0..count).map(|i| lo * ratio.powi(i as i32)).collect())
    } else {
        spec.split(',')
            .map(|s| s.trim().parse::<f64>().map_err(|_| bad(format!("bad entry `{s}`"))))
            .collect()
    }
}

fn write_output(path: &PathBuf, contents: &str) -> Result<(), CliError> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir)?;
        }
    }
    std::fs::write(path, contents)?;
    Ok(())
}

fn thread_pool(jobs: Option<usize>) -> Result<rayon::ThreadPool, CliError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.unwrap_or(0))
        .build()
        .map_err(|e| CliError::Failure(e.to_string()))
}

/// Entry point used by `main`; returns the process exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            // clap prints its own help/usage text
            let _ = write!(out, "{e}");
            return if e.use_stderr() { EXIT_CONFIG } else { 0 };
        }
    };
    let ctx = match Ctx::load(cli.config.as_ref()) {
        Ok(ctx) => ctx,
        Err(e) => {
            let _ = writeln!(out, "{e}");
            return e.exit_code();
        }
    };
    let result = match cli.command {
        Command::Sweep(a) => cmd_sweep(a, &ctx, out),
        Command::Loctest(a) => cmd_loctest(a, &ctx, out),
        Command::Meander(a) => cmd_meander(a, &ctx, out),
        Command::Critcurve(a) => cmd_critcurve(a, &ctx, out),
        Command::Stretch(a) => cmd_stretch(a, &ctx, out),
        Command::Limit(a) => cmd_limit(a, &ctx, out),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(out, "{e}");
            e.exit_code()
        }
    }
}

fn load_or_generate_env(
    ctx: &Ctx,
    env_in: Option<PathBuf>,
    law: ChargeLaw,
    size: usize,
    seed: u64,
    sample_index: u64,
) -> Result<Environment, CliError> {
    match ctx.lookup(env_in.map(|p| p.display().to_string()), "env_in")? {
        Some(path) => {
            let file = std::fs::File::open(&path)
                .map_err(|e| CliError::Config(format!("field `env_in`: cannot open {path}: {e}")))?;
            let env = Environment::read_binary(std::io::BufReader::new(file))?;
            if env.len() < size {
                return Err(CliError::Config(format!(
                    "field `env_in`: environment holds {} charges, need {size}",
                    env.len()
                )));
            }
            Ok(env)
        }
        None => Ok(disorder::generate(law, size, seed, sample_index)?),
    }
}

fn cmd_sweep(a: SweepArgs, ctx: &Ctx, out: &mut dyn Write) -> Result<(), CliError> {
    let law = ctx.or_default(a.law, "law", ChargeLaw::BernoulliSymmetric)?;
    let lambda = ctx.require(a.lambda, "lambda")?;
    let h = ctx.or_default(a.h, "h", 0.0)?;
    let size = even_or_config_error(ctx.require_count(a.n_size, "N")?, "N")?;
    let seed = ctx.seed(a.seed)?;
    let sample_index = ctx.or_default(a.sample_index, "sample_index", 0)?;
    let window = ctx.window(a.full, a.window)?;
    let threshold = ctx.or_default(a.threshold, "threshold", 1e100)?;
    let grid_spec = ctx.or_default(a.grid, "grid", "none".to_string())?;
    let grid = parse_grid(&grid_spec, size)?;

    let params =
        PolymerParams::new(lambda, h, law).map_err(|e| CliError::Config(e.to_string()))?;
    let env = load_or_generate_env(ctx, a.env_in, law, size, seed, sample_index)?;
    let opts = SweepOptions {
        window,
        want_profile: a.profile_out.is_some(),
        checkpoints: grid,
        rescale_threshold: threshold,
    };
    let result = engine::sweep(env.view(), &params, size, &opts)?;

    writeln!(out, "pinned_log = {:.16e}", result.pinned_log)?;
    writeln!(out, "free_log = {:.16e}", result.free_log)?;

    if let Some(path) = &a.trace_out {
        let trace = result.crossing_trace.clone().unwrap_or_default();
        let mut buf = Vec::new();
        engine::write_trace_csv(&trace, &mut buf)?;
        write_output(path, &format!("{}{}", ctx.header("sweep"), String::from_utf8_lossy(&buf)))?;
    }
    if let Some(path) = &a.profile_out {
        let profile = result.profile.as_ref().expect("profile requested");
        let mut buf = Vec::new();
        profile.write_csv(&mut buf)?;
        write_output(path, &format!("{}{}", ctx.header("sweep"), String::from_utf8_lossy(&buf)))?;
    }
    Ok(())
}

fn resolve_bias(ctx: &Ctx, law: ChargeLaw, lambda: f64, h: Option<f64>, m: Option<f64>) -> Result<f64, CliError> {
    let m = ctx.lookup(m, "m")?;
    let h = ctx.lookup(h, "h")?;
    match (h, m) {
        (Some(h), None) => Ok(h),
        (None, Some(m)) => {
            let h = model::h_m(law, m, lambda).map_err(|e| CliError::Config(e.to_string()))?;
            ctx.record("h", format!("{h:.16e}"));
            Ok(h)
        }
        (Some(_), Some(_)) => Err(CliError::Config("fields `h` and `m` are mutually exclusive".into())),
        (None, None) => Err(CliError::Config("one of `h` or `m` is required".into())),
    }
}

fn pinned_sample(
    pool: &rayon::ThreadPool,
    law: ChargeLaw,
    params: &PolymerParams,
    size: usize,
    n: usize,
    seed: u64,
    index_base: u64,
    window: Option<Window>,
) -> Result<Vec<f64>, CliError> {
    let opts = SweepOptions { window, ..Default::default() };
    pool.install(|| {
        (0..n)
            .into_par_iter()
            .map(|i| {
                let env = disorder::generate(law, size, seed, index_base + i as u64)?;
                let r = engine::sweep(env.view(), params, size, &opts)?;
                Ok::<f64, CliError>(r.pinned_log)
            })
            .collect()
    })
}

fn cmd_loctest(a: LoctestArgs, ctx: &Ctx, out: &mut dyn Write) -> Result<(), CliError> {
    let law = ctx.or_default(a.law, "law", ChargeLaw::BernoulliSymmetric)?;
    let lambda = ctx.require(a.lambda, "lambda")?;
    if !(lambda > 0.0) {
        return Err(CliError::Config("field `lambda` must be positive for the test".into()));
    }
    let h = resolve_bias(ctx, law, lambda, a.h, a.m)?;
    let n_half = ctx.require_count(a.n_half, "N")?;
    let n = ctx.or_default(a.n, "n", 100)?;
    if n < 1 {
        return Err(CliError::Config("field `n` must be at least 1".into()));
    }
    let seed = ctx.seed(a.seed)?;
    let window = ctx.window(a.full, None)?;
    let jobs = ctx.lookup_count(a.jobs, "jobs")?;
    let scan = ctx.flag(a.scan, "scan")?;
    let params = PolymerParams::new(lambda, h, law).map_err(|e| CliError::Config(e.to_string()))?;
    let pool = thread_pool(jobs)?;

    let report_json = |r: &stats::TestReport| serde_json::to_value(r).expect("report serializes");

    let payload = if scan {
        let n_max = ctx.require_count(a.n_max, "N_max")?;
        let alpha = ctx.or_default(a.alpha, "alpha", 1e-2)?;
        let mut rows = Vec::new();
        let mut n_plus: Option<usize> = None;
        let mut n_minus: Option<usize> = None;
        let mut half = n_half.max(1);
        let mut step = 0u64;
        while half <= n_max {
            let size = 2 * half;
            let values = pinned_sample(&pool, law, &params, size, n, seed, step * n as u64, window)?;
            let sample = Sample::from_params(values, &params, half)?;
            let up = stats::localization_test(&sample, lambda, half, Direction::UpperTail)?;
            let down = stats::localization_test(&sample, lambda, half, Direction::LowerTail)?;
            if down.verdict == stats::Verdict::RejectH0 && down.p_value_bound <= alpha {
                n_minus = Some(half);
            }
            if n_plus.is_none() && up.verdict == stats::Verdict::RejectH0 && up.p_value_bound <= alpha {
                n_plus = Some(half);
            }
            writeln!(
                out,
                "N = {half}: u_hat = {:.6}, upper p <= {:.3e}, lower p <= {:.3e}",
                up.u_hat, up.p_value_bound, down.p_value_bound
            )?;
            rows.push(serde_json::json!({
                "N": half,
                "upper": report_json(&up),
                "lower": report_json(&down),
            }));
            if n_plus.is_some() {
                break;
            }
            half *= 2;
            step += 1;
        }
        serde_json::json!({
            "config": ctx.config_json("loctest"),
            "scan": rows,
            "first_positive_N": n_plus,
            "last_negative_N": n_minus,
        })
    } else {
        let direction = match ctx.or_default(a.direction, "direction", "upper".to_string())?.as_str() {
            "upper" => Direction::UpperTail,
            "lower" => Direction::LowerTail,
            other => {
                return Err(CliError::Config(format!(
                    "field `direction`: expected upper|lower, got `{other}`"
                )))
            }
        };
        let values = pinned_sample(&pool, law, &params, 2 * n_half, n, seed, 0, window)?;
        let sample = Sample::from_params(values, &params, n_half)?;
        let report = stats::localization_test(&sample, lambda, n_half, direction)?;
        writeln!(out, "{}", report.summary())?;
        serde_json::json!({
            "config": ctx.config_json("loctest"),
            "report": report_json(&report),
        })
    };

    if let Some(path) = &a.out {
        write_output(path, &format!("{:#}\n", payload))?;
    }
    Ok(())
}

fn cmd_meander(a: MeanderArgs, ctx: &Ctx, out: &mut dyn Write) -> Result<(), CliError> {
    let law = ctx.or_default(a.law, "law", ChargeLaw::BernoulliSymmetric)?;
    let lambda = ctx.require(a.lambda, "lambda")?;
    let h = ctx.require(a.h, "h")?;
    let size = even_or_config_error(ctx.require_count(a.n_size, "N")?, "N")?;
    let n = ctx.or_default(a.n, "n", 100)?;
    let seed = ctx.seed(a.seed)?;
    let confidence = ctx.or_default(a.confidence, "confidence", 0.95)?;
    let window = ctx.window(a.full, None)?;
    let jobs = ctx.lookup_count(a.jobs, "jobs")?;
    let params = PolymerParams::new(lambda, h, law).map_err(|e| CliError::Config(e.to_string()))?;
    let pool = thread_pool(jobs)?;

    let rows: Vec<analysis::MeanderDistanceResult> = pool.install(|| {
        (0..n)
            .into_par_iter()
            .map(|i| {
                let env = disorder::generate(law, size, seed, i as u64)?;
                Ok::<_, CliError>(analysis::meander_distance(&env, &params, size, window)?)
            })
            .collect::<Result<Vec<_>, _>>()
    })?;

    let distances: Vec<f64> = rows.iter().map(|r| r.distance).collect();
    let med = stats::median(&distances);
    let ci = stats::median_ci(&distances, confidence).ok();
    writeln!(out, "median distance = {med:.6e} over {n} environments")?;
    if let Some((lo, hi)) = ci {
        writeln!(out, "median {:.0}% CI = [{lo:.6e}, {hi:.6e}]", confidence * 100.0)?;
    }

    if let Some(path) = &a.out {
        let mut buf = Vec::new();
        analysis::write_meander_csv(&rows, &mut buf)?;
        write_output(path, &format!("{}{}", ctx.header("meander"), String::from_utf8_lossy(&buf)))?;
    }
    if let Some(path) = &a.summary_out {
        let payload = serde_json::json!({
            "config": ctx.config_json("meander"),
            "median": med,
            "median_ci": ci,
            "n": n,
        });
        write_output(path, &format!("{payload:#}\n"))?;
    }
    Ok(())
}

fn cmd_critcurve(a: CritcurveArgs, ctx: &Ctx, out: &mut dyn Write) -> Result<(), CliError> {
    let law = ctx.or_default(a.law, "law", ChargeLaw::BernoulliSymmetric)?;
    let lambdas = parse_lambdas(&ctx.require(a.lambdas, "lambdas")?)?;
    let n_half = ctx.require_count(a.n_half, "N")?;
    let size = 2 * n_half;
    let seed = ctx.seed(a.seed)?;
    let sample_index = ctx.or_default(a.sample_index, "sample_index", 0)?;
    let tol = ctx.or_default(a.tol, "tol", 1e-6)?;
    let anchor = ctx.lookup(a.anchor, "anchor")?;
    let window = ctx.window(a.full, None)?;
    let jobs = ctx.lookup_count(a.jobs, "jobs")?;
    let pool = thread_pool(jobs)?;

    // One fixed charge realization across the whole coupling grid.
    let env = disorder::generate(law, size, seed, sample_index)?;
    let points: Vec<analysis::CriticalCurvePoint> = pool.install(|| {
        lambdas
            .par_iter()
            .map(|&l| Ok::<_, CliError>(analysis::estimate_h_hat(&env, l, size, tol, None, window)?))
            .collect::<Result<Vec<_>, _>>()
    })?;

    let criterion = match anchor {
        Some(l0) => FitCriterion::AnchorAtLambda(l0),
        None => FitCriterion::MaxRatio,
    };
    let fit = analysis::fit_m(&points, law, criterion)?;
    writeln!(out, "fitted m = {:.6}", fit.m)?;
    for p in &points {
        writeln!(out, "lambda = {:<8} h_hat = {:.8} (width {:.1e}{})",
            p.lambda, p.h_hat, p.bisection_width, if p.saturated { ", saturated" } else { "" })?;
    }

    if let Some(path) = &a.out {
        let mut buf = Vec::new();
        analysis::write_critical_curve_csv(&points, &mut buf)?;
        write_output(path, &format!("{}{}", ctx.header("critcurve"), String::from_utf8_lossy(&buf)))?;
    }
    if let Some(path) = &a.errors_out {
        let mut buf = Vec::new();
        analysis::write_relative_errors_csv(&fit.relative_errors, &mut buf)?;
        write_output(path, &format!("{}{}", ctx.header("critcurve"), String::from_utf8_lossy(&buf)))?;
    }
    Ok(())
}

fn cmd_stretch(a: StretchArgs, ctx: &Ctx, out: &mut dyn Write) -> Result<(), CliError> {
    let law = ctx.or_default(a.law, "law", ChargeLaw::BernoulliSymmetric)?;
    let lambda = ctx.require(a.lambda, "lambda")?;
    let h = ctx.require(a.h, "h")?;
    let scan_len = even_or_config_error(ctx.require_count(a.a, "A")?, "A")?;
    let eps = ctx.or_default(a.eps, "eps", 0.05)?;
    let q = ctx.lookup(a.q, "q")?;
    let cap = even_or_config_error(ctx.or_default_count(a.cap, "cap", 1_000_000)?, "cap")?;
    let n = ctx.or_default(a.n, "n", 20)?;
    let seed = ctx.seed(a.seed)?;
    let window = ctx.window(a.full, None)?;
    let jobs = ctx.lookup_count(a.jobs, "jobs")?;
    let params = PolymerParams::new(lambda, h, law).map_err(|e| CliError::Config(e.to_string()))?;
    let pool = thread_pool(jobs)?;

    let certs: Vec<analysis::StretchCertificate> = pool.install(|| {
        (0..n)
            .into_par_iter()
            .map(|i| {
                let env = disorder::generate(law, cap, seed, i as u64)?;
                Ok::<_, CliError>(analysis::stretch_certificate(
                    &env, &params, q, scan_len, eps, cap, window,
                )?)
            })
            .collect::<Result<Vec<_>, _>>()
    })?;

    let finite = certs.iter().filter(|c| !c.record.censored()).count();
    let positive = certs.iter().filter(|c| c.measured_positive).count();
    let bound = certs.first().map(|c| c.analytic_bound).unwrap_or(f64::NAN);
    writeln!(out, "analytic bound exponent = {bound:.6}")?;
    writeln!(out, "{finite}/{n} stopping times found below cap {cap}; {positive} with positive measured log Z(0)")?;

    if let Some(path) = &a.out {
        let mut buf = String::new();
        buf.push_str(&ctx.header("stretch"));
        buf.push_str("sample_index,q,tau,r,ell,t,log_z_at_t,analytic_bound,measured_positive\n");
        for (i, c) in certs.iter().enumerate() {
            let opt = |v: Option<usize>| v.map_or(String::from("censored"), |x| x.to_string());
            let logz = c.log_z_at_t.map_or(String::from("censored"), |x| format!("{x:.16e}"));
            buf.push_str(&format!(
                "{},{:.16e},{},{},{},{},{},{:.16e},{}\n",
                i,
                c.record.q,
                opt(c.record.tau),
                opt(c.record.r),
                opt(c.record.ell),
                opt(c.record.t),
                logz,
                c.analytic_bound,
                c.measured_positive
            ));
        }
        write_output(path, &buf)?;
    }
    Ok(())
}

fn cmd_limit(a: LimitArgs, ctx: &Ctx, out: &mut dyn Write) -> Result<(), CliError> {
    let m = ctx.require(a.m, "m")?;
    let size = even_or_config_error(ctx.require_count(a.n_size, "N")?, "N")?;
    let seed = ctx.seed(a.seed)?;
    let sample_index = ctx.or_default(a.sample_index, "sample_index", 0)?;
    let window = ctx.window(a.full, a.window)?;
    let grid_spec = ctx.or_default(a.grid, "grid", "none".to_string())?;
    let grid = parse_grid(&grid_spec, size)?;

    let env = disorder::generate(ChargeLaw::BernoulliSymmetric, size, seed, sample_index)?;
    let opts = SweepOptions {
        window,
        want_profile: a.profile_out.is_some(),
        checkpoints: grid,
        rescale_threshold: 1e100,
    };
    let result = engine::limit_model_sweep(&env, m, size, &opts)?;
    writeln!(out, "pinned_log = {:.16e}", result.pinned_log)?;
    writeln!(out, "free_log = {:.16e}", result.free_log)?;

    if let Some(path) = &a.trace_out {
        let trace = result.crossing_trace.clone().unwrap_or_default();
        let mut buf = Vec::new();
        engine::write_trace_csv(&trace, &mut buf)?;
        write_output(path, &format!("{}{}", ctx.header("limit"), String::from_utf8_lossy(&buf)))?;
    }
    if let Some(path) = &a.profile_out {
        let profile = result.profile.as_ref().expect("profile requested");
        let mut buf = Vec::new();
        profile.write_csv(&mut buf)?;
        write_output(path, &format!("{}{}", ctx.header("limit"), String::from_utf8_lossy(&buf)))?;
    }
    Ok(())
}
