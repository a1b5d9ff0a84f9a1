//! Command-line front end.
//!
//! Every invocation is described by a [`RunConfig`], which is written as
//! `run.json` into the output directory. A stored config can be replayed with
//! `--config run.json`; flags given on the command line override its values.
//!
//! Exit codes: 0 success, 2 domain error, 3 numerical failure, 64 usage.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::parser::ValueSource;
use clap::{ArgMatches, Args, CommandFactory, FromArgMatches, Parser, Subcommand, ValueEnum};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::dynamics::{
    evolve, evolve_backward, free_propagate, AlarmPolicy, EvolutionConfig, EvolutionTrace,
};
use crate::error::Error;
use crate::fields::{embed_with_threshold, io, ComplexField};
use crate::groundstate::SolitonCache;
use crate::random_fields::mixture;
use crate::rescaling::{log_grid, rescaled_soliton, RegionMap, Solver, DEFAULT_GRID_POINTS, DEFAULT_OMEGA_MAX, DEFAULT_OMEGA_MIN};
use crate::varmin::{minimize_e_on_constraints, run_suite, young_gap, MinimizerConfig, SuiteConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_DOMAIN: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;
pub const EXIT_USAGE: i32 = 64;

/// Environment variable naming the solver cache root.
pub const CACHE_ENV: &str = "CQNLS_CACHE";
pub const DEFAULT_CACHE_DIR: &str = ".cqnls-cache";
pub const DEFAULT_TOL: f64 = 1e-9;

/// Box side for a radial profile: this multiple of its decay radius.
const BOX_FACTOR: f64 = 2.1;

#[derive(Debug, Parser)]
#[command(name = "cqnls", version, about = "Cubic-quintic NLS laboratory")]
struct Cli {
    /// JSON run configuration; flags given explicitly override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker thread cap for all parallel sections.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Solver tolerance.
    #[arg(long, global = true)]
    tol: Option<f64>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Solver cache root (default: $CQNLS_CACHE, else .cqnls-cache).
    #[arg(long, global = true)]
    cache_dir: Option<PathBuf>,
    #[arg(long, global = true)]
    output_dir: Option<PathBuf>,
    #[command(subcommand)]
    command: CommandArgs,
}

#[derive(Debug, Subcommand)]
enum CommandArgs {
    /// Solve for the ground state at one frequency.
    Groundstate(GroundstateParams),
    /// Trace both mass-energy curves and locate the landmark masses.
    Atlas(AtlasParams),
    /// Evolve initial data with the split-step scheme.
    Evolve(EvolveParams),
    /// Run a named check suite.
    Check(CheckParams),
    /// Minimize the energy at fixed mass on the zero-virial set.
    Minimize(MinimizeParams),
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct GroundstateParams {
    #[arg(long)]
    pub omega: f64,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct AtlasParams {
    #[arg(long, default_value_t = DEFAULT_OMEGA_MIN)]
    pub omega_min: f64,
    #[arg(long, default_value_t = DEFAULT_OMEGA_MAX)]
    pub omega_max: f64,
    /// Number of log-spaced frequencies.
    #[arg(long, default_value_t = DEFAULT_GRID_POINTS)]
    pub points: usize,
    /// Explicit comma-separated frequencies, replacing the log grid.
    #[arg(long, value_delimiter = ',')]
    #[serde(default)]
    pub omegas: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlarmArg {
    Halt,
    Flag,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct EvolveParams {
    /// gaussian[:A[,w]] | soliton:ω | rescaled:ω | file:path
    #[arg(long)]
    pub init: String,
    /// Box side; radial data default to a multiple of the decay radius.
    #[arg(long)]
    pub length: Option<f64>,
    #[arg(long, default_value_t = 64)]
    pub n: usize,
    #[arg(long, default_value_t = 0.01)]
    pub dt: f64,
    #[arg(long, default_value_t = 1.0)]
    pub t_end: f64,
    /// Time window a:b with a ≤ 0 ≤ b; replaces [0, t_end] and prints ∫V dt.
    #[arg(long, allow_hyphen_values = true)]
    pub window: Option<String>,
    #[arg(long, default_value_t = 10)]
    pub cadence: usize,
    #[arg(long)]
    #[serde(default)]
    pub linear_only: bool,
    #[arg(long, value_enum, default_value_t = AlarmArg::Halt)]
    pub alarm: AlarmArg,
    /// Relative decay required before a radial profile is embedded.
    #[arg(long, default_value_t = 1e-6)]
    pub embed_threshold: f64,
    #[arg(long)]
    pub checkpoint_every: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Suite {
    Gnh,
    Young,
    VirialIdentity,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct CheckParams {
    #[arg(value_enum)]
    pub suite: Suite,
    /// Number of samples.
    #[arg(long, default_value_t = 1000)]
    pub n: u64,
    /// Reference mass; computed from the atlas when absent.
    #[arg(long)]
    pub m0: Option<f64>,
    /// Lattice points per side.
    #[arg(long, default_value_t = 128)]
    pub grid: usize,
    #[arg(long, default_value_t = 40.0)]
    pub length: f64,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct MinimizeParams {
    #[arg(long)]
    pub mass: f64,
    #[arg(long, default_value_t = 2001)]
    pub nodes: usize,
    #[arg(long, default_value_t = 150.0)]
    pub r_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", content = "params", rename_all = "snake_case")]
pub enum Command {
    Groundstate(GroundstateParams),
    Atlas(AtlasParams),
    Evolve(EvolveParams),
    Check(CheckParams),
    Minimize(MinimizeParams),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Groundstate(_) => "groundstate",
            Command::Atlas(_) => "atlas",
            Command::Evolve(_) => "evolve",
            Command::Check(_) => "check",
            Command::Minimize(_) => "minimize",
        }
    }
}

/// Complete description of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    #[serde(flatten)]
    pub command: Command,
    pub tol: f64,
    pub seed: u64,
    pub cache_dir: PathBuf,
    pub output_dir: PathBuf,
    pub threads: Option<usize>,
}

impl RunConfig {
    pub fn to_json(&self) -> crate::Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> crate::Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

/// A failure carrying its exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Self {
        Failure { code: EXIT_USAGE, message: message.into() }
    }

    fn numerical(message: impl Into<String>) -> Self {
        Failure { code: EXIT_NUMERICAL, message: message.into() }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::OutOfRange { .. }
            | Error::InfeasibleAtMass { .. }
            | Error::InsufficientGrid(_)
            | Error::InvalidArgument(_)
            | Error::InvalidGrid(_)
            | Error::WrapAround { .. }
            | Error::OutsideTracedRange { .. } => EXIT_DOMAIN,
            _ => EXIT_NUMERICAL,
        };
        Failure { code, message: e.to_string() }
    }
}

type Outcome = std::result::Result<(), Failure>;

fn explicit(matches: &ArgMatches, id: &str) -> bool {
    matches.try_get_raw(id).ok().flatten().is_some() && matches.value_source(id) == Some(ValueSource::CommandLine)
}

/// Overlay the explicitly given subcommand flags on the stored parameters.
fn merge_params<T: Serialize>(stored: serde_json::Value, cli: &T, matches: &ArgMatches) -> crate::Result<serde_json::Value> {
    let mut merged = stored;
    let given = serde_json::to_value(cli)?;
    if let (Some(target), serde_json::Value::Object(source)) = (merged.as_object_mut(), given) {
        for (key, value) in source {
            if explicit(matches, &key) {
                target.insert(key, value);
            }
        }
    }
    Ok(merged)
}

fn command_from_cli(args: CommandArgs) -> Command {
    match args {
        CommandArgs::Groundstate(p) => Command::Groundstate(p),
        CommandArgs::Atlas(p) => Command::Atlas(p),
        CommandArgs::Evolve(p) => Command::Evolve(p),
        CommandArgs::Check(p) => Command::Check(p),
        CommandArgs::Minimize(p) => Command::Minimize(p),
    }
}

fn resolve(cli: Cli, matches: &ArgMatches) -> std::result::Result<RunConfig, Failure> {
    let stored = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Failure::usage(format!("cannot read {}: {e}", path.display())))?;
            Some(RunConfig::from_json(&text).map_err(|e| Failure::usage(format!("bad config: {e}")))?)
        }
        None => None,
    };
    let from_cli = command_from_cli(cli.command);
    let (sub_name, sub_matches) = matches.subcommand().expect("subcommand is required");
    let command = match &stored {
        Some(cfg) if cfg.command.name() == sub_name => {
            let stored_value = serde_json::to_value(&cfg.command).map_err(|e| Failure::usage(e.to_string()))?;
            let params = stored_value["params"].clone();
            let cli_value = serde_json::to_value(&from_cli).map_err(|e| Failure::usage(e.to_string()))?;
            let merged = merge_params(params, &cli_value["params"], sub_matches)
                .map_err(|e| Failure::usage(e.to_string()))?;
            serde_json::from_value(serde_json::json!({ "command": sub_name, "params": merged }))
                .map_err(|e| Failure::usage(format!("bad config: {e}")))?
        }
        Some(cfg) => {
            return Err(Failure::usage(format!(
                "config describes `{}`, not `{sub_name}`",
                cfg.command.name()
            )))
        }
        None => from_cli,
    };
    let base = stored.as_ref();
    let cache_dir = cli
        .cache_dir
        .or_else(|| std::env::var_os(CACHE_ENV).map(PathBuf::from))
        .or_else(|| base.map(|c| c.cache_dir.clone()))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_CACHE_DIR));
    Ok(RunConfig {
        command,
        tol: cli.tol.or(base.map(|c| c.tol)).unwrap_or(DEFAULT_TOL),
        seed: cli.seed.or(base.map(|c| c.seed)).unwrap_or(0),
        cache_dir,
        output_dir: cli.output_dir.or_else(|| base.map(|c| c.output_dir.clone())).unwrap_or_else(|| PathBuf::from(".")),
        threads: cli.threads.or(base.and_then(|c| c.threads)),
    })
}

/// Parse `args` (including the program name), run, and return the exit code.
pub fn run_from_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let matches = match Cli::command().try_get_matches_from(args) {
        Ok(m) => m,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_USAGE,
            };
        }
    };
    let cli = match Cli::from_arg_matches(&matches) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return EXIT_USAGE;
        }
    };
    let outcome = resolve(cli, &matches).and_then(|cfg| execute(&cfg));
    match outcome {
        Ok(()) => EXIT_OK,
        Err(f) => {
            eprintln!("error: {}", f.message);
            f.code
        }
    }
}

/// Run a resolved configuration.
pub fn execute(cfg: &RunConfig) -> Outcome {
    if let Some(threads) = cfg.threads {
        // a pool may already exist when called repeatedly in one process
        let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
    }
    std::fs::create_dir_all(&cfg.output_dir).map_err(Error::from)?;
    io::write_atomic(&cfg.output_dir.join("run.json"), cfg.to_json()?.as_bytes())?;
    match &cfg.command {
        Command::Groundstate(p) => cmd_groundstate(cfg, p),
        Command::Atlas(p) => cmd_atlas(cfg, p),
        Command::Evolve(p) => cmd_evolve(cfg, p),
        Command::Check(p) => cmd_check(cfg, p),
        Command::Minimize(p) => cmd_minimize(cfg, p),
    }
}

fn cache(cfg: &RunConfig) -> SolitonCache {
    SolitonCache::new(&cfg.cache_dir)
}

fn solver(cfg: &RunConfig) -> Solver {
    Solver::with_cache(cfg.tol, cache(cfg))
}

fn write(path: &Path, bytes: &[u8]) -> Outcome {
    io::write_atomic(path, bytes)?;
    println!("wrote {}", path.display());
    Ok(())
}

fn cmd_groundstate(cfg: &RunConfig, p: &GroundstateParams) -> Outcome {
    let (rec, hit) = cache(cfg).get_or_solve(p.omega, cfg.tol)?;
    let stem = format!("groundstate_{:.16e}", p.omega);
    write(&cfg.output_dir.join(format!("{stem}.json")), &serde_json::to_vec_pretty(&rec.meta()).map_err(Error::from)?)?;
    write(&cfg.output_dir.join(format!("{stem}.{}", io::EXTENSION)), &io::radial_to_bytes(&rec.profile)?)?;
    println!("source {}", if hit { "cache" } else { "solver" });
    println!("omega {:.16e}", rec.omega);
    println!("M {:.16e}", rec.report.mass);
    println!("E {:.16e}", rec.report.energy);
    println!("beta {:.16e}", rec.beta);
    println!("stationarity_residual {:.16e}", rec.residuals.stationarity);
    Ok(())
}

fn atlas_grid(p: &AtlasParams) -> Vec<f64> {
    if p.omegas.is_empty() {
        log_grid(p.omega_min, p.omega_max, p.points)
    } else {
        p.omegas.clone()
    }
}

fn cmd_atlas(cfg: &RunConfig, p: &AtlasParams) -> Outcome {
    let map = RegionMap::build(&atlas_grid(p), &solver(cfg))?;
    write(&cfg.output_dir.join("atlas.json"), map.to_json()?.as_bytes())?;
    write(&cfg.output_dir.join("curves.csv"), map.curves_csv().as_bytes())?;
    println!("m0 {:.16e}", map.m0);
    for w in &map.omega_set {
        println!("omega_star {w:.16e}");
    }
    for m in &map.m1_candidates {
        println!("m1_candidate {m:.16e}");
    }
    match map.m1 {
        Some(m) => println!("m1 {m:.16e}"),
        None => println!("m1 none"),
    }
    println!("m2 {:.16e}", map.m2);
    println!("landmark_ratio {:.16e}", map.landmark_ratio);
    let mut failed = Vec::new();
    for c in map.landmark_checks() {
        println!("{} {} = {:.16e}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.value);
        if !c.passed {
            failed.push(c.name);
        }
    }
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Failure::numerical(format!("landmark checks failed: {}", failed.join("; "))))
    }
}

/// Parsed `--init` value.
#[derive(Debug, Clone, PartialEq)]
pub enum InitSpec {
    Gaussian { amplitude: f64, width: f64 },
    Soliton(f64),
    Rescaled(f64),
    File(PathBuf),
}

impl std::str::FromStr for InitSpec {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let (kind, arg) = match s.split_once(':') {
            Some((k, a)) => (k, Some(a)),
            None => (s, None),
        };
        let number = |a: Option<&str>| -> std::result::Result<f64, String> {
            let a = a.ok_or_else(|| format!("`{kind}` needs a value, as in `{kind}:0.1`"))?;
            a.trim().parse::<f64>().map_err(|_| format!("`{a}` is not a number"))
        };
        match kind {
            "gaussian" => {
                let values = match arg {
                    None => Vec::new(),
                    Some(a) => a
                        .split(',')
                        .map(|v| v.trim().parse::<f64>().map_err(|_| format!("`{v}` is not a number")))
                        .collect::<std::result::Result<Vec<_>, _>>()?,
                };
                match values[..] {
                    [] => Ok(InitSpec::Gaussian { amplitude: 1.0, width: 1.0 }),
                    [a] => Ok(InitSpec::Gaussian { amplitude: a, width: 1.0 }),
                    [a, w] if w > 0.0 => Ok(InitSpec::Gaussian { amplitude: a, width: w }),
                    _ => Err(format!("gaussian takes `gaussian[:A[,w]]` with w > 0, got `{s}`")),
                }
            }
            "soliton" => Ok(InitSpec::Soliton(number(arg)?)),
            "rescaled" => Ok(InitSpec::Rescaled(number(arg)?)),
            "file" => match arg {
                Some(path) if !path.is_empty() => Ok(InitSpec::File(PathBuf::from(path))),
                _ => Err("`file` needs a path, as in `file:u0.cqf`".into()),
            },
            _ => Err(format!("unknown initial data `{s}`; expected gaussian, soliton:ω, rescaled:ω or file:path")),
        }
    }
}

/// Parse `a:b` with `a ≤ 0 ≤ b` and `a < b`.
pub fn parse_window(s: &str) -> std::result::Result<(f64, f64), String> {
    let (a, b) = s.split_once(':').ok_or_else(|| format!("window must be `a:b`, got `{s}`"))?;
    let parse = |v: &str| v.trim().parse::<f64>().map_err(|_| format!("`{v}` is not a number"));
    let (a, b) = (parse(a)?, parse(b)?);
    if !(a <= 0.0 && b >= 0.0 && a < b) {
        return Err(format!("window must satisfy a ≤ 0 ≤ b and a < b, got {a}:{b}"));
    }
    Ok((a, b))
}

fn initial_field(cfg: &RunConfig, p: &EvolveParams, spec: &InitSpec) -> std::result::Result<ComplexField, Failure> {
    let radial = |profile: &crate::fields::RadialProfile| -> std::result::Result<ComplexField, Failure> {
        let length = p.length.unwrap_or_else(|| BOX_FACTOR * profile.decay_radius(p.embed_threshold));
        Ok(embed_with_threshold(profile, length, p.n, p.embed_threshold)?)
    };
    match spec {
        InitSpec::Gaussian { amplitude, width } => {
            let length = p.length.unwrap_or(40.0);
            let (a, w) = (*amplitude, *width);
            Ok(ComplexField::from_fn(length, p.n, |x, y, z| {
                Complex64::new(a * (-(x * x + y * y + z * z) / (2.0 * w * w)).exp(), 0.0)
            })?)
        }
        InitSpec::Soliton(omega) => radial(&cache(cfg).get_or_solve(*omega, cfg.tol)?.0.profile),
        InitSpec::Rescaled(omega) => {
            let rec = cache(cfg).get_or_solve(*omega, cfg.tol)?.0;
            radial(&rescaled_soliton(&rec)?)
        }
        InitSpec::File(path) => {
            let u = io::read_field(path)?;
            if p.length.is_some_and(|l| l != u.length()) || u.n() != p.n {
                println!("note: grid taken from {} (L = {}, N = {})", path.display(), u.length(), u.n());
            }
            Ok(u)
        }
    }
}

fn evolution_config(p: &EvolveParams, t_end: f64, dir: Option<PathBuf>) -> EvolutionConfig {
    let mut ec = EvolutionConfig::new(p.dt, t_end);
    ec.cadence = p.cadence;
    ec.linear_only = p.linear_only;
    ec.alarm = match p.alarm {
        AlarmArg::Halt => AlarmPolicy::Halt,
        AlarmArg::Flag => AlarmPolicy::Flag,
    };
    ec.checkpoint_every = p.checkpoint_every;
    ec.checkpoint_dir = dir;
    ec
}

fn run_leg(
    u0: &ComplexField,
    ec: &EvolutionConfig,
    backward: bool,
    out: &Path,
) -> std::result::Result<(ComplexField, EvolutionTrace), Failure> {
    let result = if backward { evolve_backward(u0, ec) } else { evolve(u0, ec) };
    match result {
        Ok(r) => Ok(r),
        Err(Error::BoundaryContamination { time, fraction, trace, field }) => {
            let tag = if backward { "backward" } else { "forward" };
            write(&out.join(format!("trace_{tag}_partial.csv")), trace.to_csv().as_bytes())?;
            write(&out.join(format!("halted_{tag}.{}", io::EXTENSION)), &io::field_to_bytes(&field)?)?;
            Err(Error::BoundaryContamination { time, fraction, trace, field }.into())
        }
        Err(e) => Err(e.into()),
    }
}

fn cmd_evolve(cfg: &RunConfig, p: &EvolveParams) -> Outcome {
    let spec: InitSpec = p.init.parse().map_err(Failure::usage)?;
    let (a, b) = match &p.window {
        Some(w) => parse_window(w).map_err(Failure::usage)?,
        None => (0.0, p.t_end),
    };
    let u0 = initial_field(cfg, p, &spec)?;
    let out = &cfg.output_dir;
    let checkpoints = p.checkpoint_every.map(|_| out.join("checkpoints"));
    if let Some(dir) = &checkpoints {
        std::fs::create_dir_all(dir).map_err(Error::from)?;
    }
    let mut rows = Vec::new();
    let mut last = u0.clone();
    if a < 0.0 {
        let (u, back) = run_leg(&u0, &evolution_config(p, -a, None), true, out)?;
        rows.extend(back.rows);
        last = u;
    }
    let mut forward_end = None;
    if b > 0.0 {
        let (u, fwd) = run_leg(&u0, &evolution_config(p, b, checkpoints), false, out)?;
        let skip = usize::from(!rows.is_empty());
        rows.extend(fwd.rows.into_iter().skip(skip));
        forward_end = Some(u.clone());
        last = u;
    }
    let trace = EvolutionTrace { dt: p.dt, rows };
    write(&out.join("trace.csv"), trace.to_csv().as_bytes())?;
    write(&out.join(format!("final.{}", io::EXTENSION)), &io::field_to_bytes(&last)?)?;
    println!("mass_drift {:.16e}", trace.mass_drift());
    println!("energy_drift {:.16e}", trace.energy_drift());
    if p.linear_only {
        if let Some(u) = &forward_end {
            let exact = free_propagate(&u0, b)?;
            let err = u.sub(&exact)?.h1_norm() / u0.h1_norm().max(f64::MIN_POSITIVE);
            println!("free_propagator_error {err:.16e}");
            if err > 1e-10 {
                return Err(Failure::numerical(format!("linear flow departs from the free propagator by {err:e}")));
            }
        }
    }
    if p.window.is_some() {
        let integral = trace.integrated_virial();
        println!("integrated_virial {integral:.16e}");
        if matches!(spec, InitSpec::Rescaled(_)) && !(integral > 0.0) {
            return Err(Failure::numerical(format!("integrated virial {integral:e} is not positive")));
        }
    }
    Ok(())
}

fn reference_mass(cfg: &RunConfig, given: Option<f64>) -> std::result::Result<f64, Failure> {
    match given {
        Some(m) => Ok(m),
        None => {
            let map = RegionMap::build(&crate::rescaling::default_grid(), &solver(cfg))?;
            println!("m0 {:.16e} (from atlas)", map.m0);
            Ok(map.m0)
        }
    }
}

fn cmd_check(cfg: &RunConfig, p: &CheckParams) -> Outcome {
    match p.suite {
        Suite::Gnh => check_gnh(cfg, p),
        Suite::Young => check_young(cfg, p),
        Suite::VirialIdentity => check_virial_identity(cfg, p),
    }
}

fn check_gnh(cfg: &RunConfig, p: &CheckParams) -> Outcome {
    let m0 = reference_mass(cfg, p.m0)?;
    let mut sc = SuiteConfig::new(cfg.seed, p.n, m0);
    sc.length = p.length;
    sc.n = p.grid;
    let (report, checks) = run_suite(&sc)?;
    let mut csv = String::from("index,M,K,F,S,slack,relative_slack,quotient,virial_gap,decomposition_error\n");
    for c in &checks {
        csv.push_str(&format!(
            "{},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}\n",
            c.index,
            c.report.mass,
            c.report.kinetic,
            c.report.quartic,
            c.report.sextic,
            c.gnh_slack,
            c.relative_slack,
            c.quotient,
            c.decomposition.gap,
            c.decomposition.relative_error
        ));
    }
    write(&cfg.output_dir.join("check_gnh.csv"), csv.as_bytes())?;
    write(
        &cfg.output_dir.join("check_gnh.json"),
        &serde_json::to_vec_pretty(&report).map_err(Error::from)?,
    )?;
    let ok = p.n - report.gnh_violations.len() as u64;
    println!("{ok}/{} slack >= -{:e}·(K+S)", p.n, sc.gnh_tolerance);
    println!("{}/{} virial gap >= 0", p.n - report.virial_violations.len() as u64, p.n);
    println!("C {:.16e}", report.c_opt);
    println!("min_relative_slack {:.16e}", report.min_relative_slack);
    println!("max_quotient_ratio {:.16e}", report.max_quotient_ratio);
    println!("max_decomposition_error {:.16e}", report.max_decomposition_error);
    if report.passed() {
        Ok(())
    } else {
        Err(Failure::numerical("random-field checks failed"))
    }
}

fn check_young(cfg: &RunConfig, p: &CheckParams) -> Outcome {
    use rand::{Rng, SeedableRng};
    let count = p.n.max(1);
    let mut worst_equality: f64 = 0.0;
    for i in 0..count {
        let a = 10f64.powf(-3.0 + 6.0 * i as f64 / count.saturating_sub(1).max(1) as f64);
        let b = (a.powf(4.0 / 3.0) / 3.0).powf(0.25);
        let scale = 0.75 * (a.powf(4.0 / 3.0) + b.powi(4));
        worst_equality = worst_equality.max(young_gap(a, b)?.abs() / scale);
    }
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut min_random = f64::INFINITY;
    for _ in 0..count {
        let a = 10f64.powf(rng.gen_range(-3.0..3.0));
        let b = 10f64.powf(rng.gen_range(-3.0..3.0));
        let scale = 0.75 * (a.powf(4.0 / 3.0) + b.powi(4));
        min_random = min_random.min(young_gap(a, b)? / scale);
    }
    println!("max relative gap at a^(4/3) = 3b^4: {worst_equality:.16e}");
    println!("min relative gap at random samples: {min_random:.16e}");
    if worst_equality <= 1e-12 && min_random >= -1e-15 {
        Ok(())
    } else {
        Err(Failure::numerical("Young inequality check failed"))
    }
}

fn check_virial_identity(cfg: &RunConfig, p: &CheckParams) -> Outcome {
    const TOLERANCE: f64 = 1e-3;
    let gaussian = ComplexField::from_fn(p.length, p.grid.min(64), |x, y, z| {
        Complex64::new((-(x * x + y * y + z * z) / 2.0).exp(), 0.0)
    })?;
    let mut fields = vec![("gaussian".to_string(), gaussian)];
    for index in 0..p.n.min(2) {
        let mut m = mixture(cfg.seed, index, p.length);
        for c in &mut m.components {
            c.center = [0.0; 3];
        }
        fields.push((format!("mixture_{index}"), m.sample(p.grid.min(64))?));
    }
    let mut worst: f64 = 0.0;
    for (name, u0) in &fields {
        let mut ec = EvolutionConfig::new(2e-3, 1.0);
        ec.cadence = 25;
        ec.action_rate = true;
        ec.alarm = AlarmPolicy::Flag;
        let (_, trace) = evolve(u0, &ec)?;
        let err = trace.virial_identity_error().unwrap_or(f64::NAN);
        println!("{name} max |dA/dt - V|/|V| = {err:.16e}");
        worst = if err.is_nan() { f64::NAN } else { worst.max(err) };
    }
    println!("max relative error {worst:.16e}");
    if worst <= TOLERANCE {
        Ok(())
    } else {
        Err(Failure::numerical(format!("virial identity error {worst:e} exceeds {TOLERANCE:e}")))
    }
}

fn cmd_minimize(cfg: &RunConfig, p: &MinimizeParams) -> Outcome {
    let mc = MinimizerConfig { nodes: p.nodes, r_max: p.r_max, ..MinimizerConfig::default() };
    let res = minimize_e_on_constraints(p.mass, &mc)?;
    let stem = format!("minimizer_{:.16e}", p.mass);
    write(&cfg.output_dir.join(format!("{stem}.json")), &serde_json::to_vec_pretty(&res).map_err(Error::from)?)?;
    write(&cfg.output_dir.join(format!("{stem}.{}", io::EXTENSION)), &io::radial_to_bytes(&res.minimizer)?)?;
    println!("m {:.16e}", res.m);
    println!("e_min {:.16e}", res.e_min);
    println!("iterations {}", res.iterations);
    println!("virial_residual {:.16e}", res.virial_residual);
    if res.converged {
        Ok(())
    } else {
        Err(Failure::numerical("minimization did not converge"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn init_specs_parse() {
        assert_eq!("gaussian".parse(), Ok(InitSpec::Gaussian { amplitude: 1.0, width: 1.0 }));
        assert_eq!("gaussian:2,0.5".parse(), Ok(InitSpec::Gaussian { amplitude: 2.0, width: 0.5 }));
        assert_eq!("soliton:0.1".parse(), Ok(InitSpec::Soliton(0.1)));
        assert_eq!("rescaled:0.05".parse(), Ok(InitSpec::Rescaled(0.05)));
        assert_eq!("file:a/b.cqf".parse(), Ok(InitSpec::File("a/b.cqf".into())));
        for bad in ["", "soliton", "soliton:x", "rescaled:", "file:", "gauss", "gaussian:1,-2", "gaussian:1,2,3"] {
            assert!(bad.parse::<InitSpec>().is_err(), "{bad}");
        }
    }

    #[test]
    fn windows_parse() {
        assert_eq!(parse_window("-1:1"), Ok((-1.0, 1.0)));
        assert_eq!(parse_window("0:2"), Ok((0.0, 2.0)));
        for bad in ["1:2", "-1:-0.5", "0:0", "1", "a:b"] {
            assert!(parse_window(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn run_config_round_trips() {
        let cfg = RunConfig {
            command: Command::Evolve(EvolveParams {
                init: "rescaled:0.1".into(),
                length: Some(80.25),
                n: 64,
                dt: 0.1 + 0.2,
                t_end: 1.0,
                window: Some("-1:1".into()),
                cadence: 10,
                linear_only: false,
                alarm: AlarmArg::Flag,
                embed_threshold: 1e-4,
                checkpoint_every: None,
            }),
            tol: 1e-9,
            seed: 7,
            cache_dir: "cache".into(),
            output_dir: "out".into(),
            threads: Some(1),
        };
        let json = cfg.to_json().unwrap();
        let back = RunConfig::from_json(&json).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.to_json().unwrap(), json);
    }

    #[test]
    fn malformed_usage_exits_64() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().to_str().unwrap();
        assert_eq!(run_from_args(["cqnls", "frobnicate"]), EXIT_USAGE);
        assert_eq!(run_from_args(["cqnls", "evolve", "--init", "banana", "--output-dir", out]), EXIT_USAGE);
        assert_eq!(run_from_args(["cqnls", "evolve", "--init", "gaussian", "--window", "2:3", "--output-dir", out]), EXIT_USAGE);
    }

    #[test]
    fn out_of_range_frequency_is_a_domain_error() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().to_str().unwrap();
        assert_eq!(run_from_args(["cqnls", "groundstate", "--omega", "0.2", "--output-dir", out, "--cache-dir", out]), EXIT_DOMAIN);
    }

    #[test]
    fn young_check_passes() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().to_str().unwrap();
        assert_eq!(run_from_args(["cqnls", "check", "young", "--n", "500", "--output-dir", out]), EXIT_OK);
    }

    #[test]
    fn config_replay_with_override() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("a");
        let out_s = out.to_str().unwrap();
        assert_eq!(run_from_args(["cqnls", "check", "young", "--n", "10", "--seed", "3", "--output-dir", out_s]), EXIT_OK);
        let stored = out.join("run.json");
        let out2 = dir.path().join("b");
        let code = run_from_args([
            "cqnls",
            "--config",
            stored.to_str().unwrap(),
            "--output-dir",
            out2.to_str().unwrap(),
            "check",
            "young",
            "--n",
            "20",
        ]);
        assert_eq!(code, EXIT_OK);
        let replay = RunConfig::from_json(&std::fs::read_to_string(out2.join("run.json")).unwrap()).unwrap();
        assert_eq!(replay.seed, 3);
        match replay.command {
            Command::Check(c) => {
                assert_eq!(c.n, 20);
                assert_eq!(c.suite, Suite::Young);
            }
            other => panic!("{other:?}"),
        }
    }
}
