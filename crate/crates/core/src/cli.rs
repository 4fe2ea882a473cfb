//! Command-line front end: configuration resolution, subcommand dispatch and
//! run metadata.
//!
//! Configuration is layered: built-in defaults, then `--preset`, then the
//! JSON file given by `--config`, then each `--set key.path=value`.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::asymptotics;
use crate::dynamics::ModelParams;
use crate::error::{Error, Result};
use crate::growth::GrowthFn;
use crate::radial::{self, RadialConfig};
use crate::steady::{self, InitialGuess};
use crate::sweep::{self, SweepSettings, Tolerances};

/// Environment variable naming the default output directory.
pub const OUTPUT_DIR_ENV: &str = "EXCLUSION_OUTPUT_DIR";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSettings {
    /// `None` applies the default spacing rule.
    pub max_spacing: Option<f64>,
    pub min_pred: usize,
}

impl Default for GridSettings {
    fn default() -> Self {
        GridSettings { max_spacing: None, min_pred: 11 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSettings {
    pub rtol: f64,
    pub atol: f64,
    /// `None` uses `max(50/γ, 20 L²/d_u)`.
    pub t_end: Option<f64>,
    pub max_extension: f64,
    pub n_coarse: usize,
    pub n_tail: usize,
}

impl Default for SolverSettings {
    fn default() -> Self {
        let s = SweepSettings::default();
        SolverSettings {
            rtol: s.rtol,
            atol: s.atol,
            t_end: None,
            max_extension: s.max_extension,
            n_coarse: s.n_coarse,
            n_tail: s.n_tail,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitKind {
    Dynamics,
    Subsolution,
    Homogeneous,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SteadySettings {
    pub init: InitKind,
    /// Horizon of the dynamics used as initial guess; `None` uses the solver horizon.
    pub t_end: Option<f64>,
    pub tol: f64,
}

impl Default for SteadySettings {
    fn default() -> Self {
        SteadySettings { init: InitKind::Dynamics, t_end: None, tol: 1e-11 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepBlock {
    /// Number of interior points `L k/(n+1)` when `a_values` is absent.
    pub n: usize,
    pub a_values: Option<Vec<f64>>,
}

impl Default for SweepBlock {
    fn default() -> Self {
        SweepBlock { n: 40, a_values: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ThinLimitBlock {
    #[serde(rename = "L_values")]
    pub l_values: Vec<f64>,
    pub nodes: usize,
}

impl Default for ThinLimitBlock {
    fn default() -> Self {
        ThinLimitBlock { l_values: vec![5.0, 10.0, 20.0, 40.0], nodes: 4001 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RadialBlock {
    #[serde(rename = "N")]
    pub dim: usize,
    pub rho: f64,
    #[serde(rename = "R")]
    pub big_r: f64,
    pub sigma: f64,
    /// `None` takes `d_u` from the model parameters.
    pub d_u: Option<f64>,
    pub spacing: f64,
    pub eta: f64,
    pub r_max: f64,
    pub ball_nodes: usize,
}

impl Default for RadialBlock {
    fn default() -> Self {
        RadialBlock {
            dim: 2,
            rho: 1.0,
            big_r: 8.0,
            sigma: 6.0,
            d_u: None,
            spacing: 0.05,
            eta: 0.05,
            r_max: 40.0,
            ball_nodes: 201,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub params: ModelParams,
    #[serde(default)]
    pub grid: GridSettings,
    #[serde(default)]
    pub solver: SolverSettings,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub steady: SteadySettings,
    #[serde(default)]
    pub sweep: SweepBlock,
    #[serde(default)]
    pub thinlimit: ThinLimitBlock,
    #[serde(default)]
    pub radial: RadialBlock,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            params: preset("settled").expect("built-in preset"),
            grid: GridSettings::default(),
            solver: SolverSettings::default(),
            tolerances: Tolerances::default(),
            steady: SteadySettings::default(),
            sweep: SweepBlock::default(),
            thinlimit: ThinLimitBlock::default(),
            radial: RadialBlock::default(),
            output_dir: None,
        }
    }
}

pub const PRESETS: [&str; 5] = ["settled", "cycling", "hump", "fast-growth", "low-mortality"];

/// Named parameter sets. Sweep presets carry `a = L/2`.
pub fn preset(name: &str) -> Option<ModelParams> {
    let mk = |length: f64, a: f64, alpha: f64, beta: f64, gamma: f64, theta: f64, r: f64, d_u: f64, d_v: f64| ModelParams {
        alpha,
        beta,
        gamma,
        d_u,
        d_v,
        growth: GrowthFn::cubic(r, theta).expect("preset growth is valid"),
        a,
        length,
    };
    Some(match name {
        "settled" => mk(1.0, 0.4, 14.0, 12.0, 5.0, 0.05, 1.0, 0.1, 0.05),
        "cycling" => mk(1.0, 0.8, 14.0, 12.0, 5.0, 0.05, 1.0, 0.1, 0.05),
        "hump" => mk(1.0, 0.5, 13.9, 10.0, 5.0, 0.04, 0.904, 1.0, 0.52),
        "fast-growth" => mk(5.0, 2.5, 3.0, 3.0, 0.9, 0.3, 30.0, 1.0, 1.0),
        "low-mortality" => mk(5.0, 2.5, 1.0, 3.0, 0.05, 0.3, 1.0, 1.0, 1.0),
        _ => return None,
    })
}

fn merge(base: &mut Value, over: Value) {
    match (base, over) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) if slot.is_object() && v.is_object() => merge(slot, v),
                    _ => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (b, o) => *b = o,
    }
}

/// Applies `key.path=value`; the value is read as JSON, else as a string.
fn apply_set(root: &mut Value, assignment: &str) -> std::result::Result<(), String> {
    let (path, raw) = assignment
        .split_once('=')
        .ok_or_else(|| format!("--set expects key=value, got `{assignment}`"))?;
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let keys: Vec<&str> = path.split('.').collect();
    if keys.iter().any(|k| k.is_empty()) {
        return Err(format!("--set: malformed key path `{path}`"));
    }
    let mut node = root;
    for k in &keys[..keys.len() - 1] {
        let obj = node.as_object_mut().ok_or_else(|| format!("--set: `{path}` descends into a non-object"))?;
        node = obj.entry(k.to_string()).or_insert_with(|| Value::Object(Default::default()));
        if node.is_null() {
            *node = Value::Object(Default::default());
        }
    }
    let obj = node.as_object_mut().ok_or_else(|| format!("--set: `{path}` descends into a non-object"))?;
    obj.insert(keys[keys.len() - 1].to_string(), value);
    Ok(())
}

impl RunConfig {
    /// Layers preset, file and overrides over the defaults and validates the result.
    pub fn resolve(preset_name: Option<&str>, file: Option<&Path>, sets: &[String]) -> Result<RunConfig> {
        let mut root = serde_json::to_value(RunConfig::default()).map_err(|e| Error::Config(vec![e.to_string()]))?;
        let mut errs = Vec::new();
        if let Some(name) = preset_name {
            match preset(name) {
                Some(p) => root["params"] = serde_json::to_value(p).map_err(|e| Error::Config(vec![e.to_string()]))?,
                None => errs.push(format!("unknown preset `{name}` (known: {})", PRESETS.join(", "))),
            }
        }
        if let Some(path) = file {
            match std::fs::read_to_string(path) {
                Ok(text) => match serde_json::from_str::<Value>(&text) {
                    Ok(v) if v.is_object() => merge(&mut root, v),
                    Ok(_) => errs.push(format!("{}: top level must be an object", path.display())),
                    Err(e) => errs.push(format!("{}: {e}", path.display())),
                },
                Err(e) => errs.push(format!("{}: {e}", path.display())),
            }
        }
        for s in sets {
            if let Err(e) = apply_set(&mut root, s) {
                errs.push(e);
            }
        }
        if !errs.is_empty() {
            return Err(Error::Config(errs));
        }
        let cfg: RunConfig = serde_json::from_value(root).map_err(|e| Error::Config(vec![e.to_string()]))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_json(text: &str) -> Result<RunConfig> {
        let mut root = serde_json::to_value(RunConfig::default()).map_err(|e| Error::Config(vec![e.to_string()]))?;
        let v: Value = serde_json::from_str(text).map_err(|e| Error::Config(vec![e.to_string()]))?;
        merge(&mut root, v);
        let cfg: RunConfig = serde_json::from_value(root).map_err(|e| Error::Config(vec![e.to_string()]))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Every violated constraint, prefixed by its field path.
    pub fn violations(&self) -> Vec<String> {
        let mut errs: Vec<String> = self.params.violations().into_iter().map(|e| format!("params: {e}")).collect();
        let mut check = |ok: bool, msg: String| {
            if !ok {
                errs.push(msg);
            }
        };
        let s = &self.solver;
        check(s.rtol > 0.0 && s.rtol < 1.0, format!("solver.rtol must lie in (0, 1), got {}", s.rtol));
        check(s.atol > 0.0, format!("solver.atol must be positive, got {}", s.atol));
        if let Some(t) = s.t_end {
            check(t > 0.0 && t.is_finite(), format!("solver.t_end must be positive, got {t}"));
        }
        check(s.max_extension >= 1.0, format!("solver.max_extension must be at least 1, got {}", s.max_extension));
        check(s.n_coarse >= 1, "solver.n_coarse must be at least 1".into());
        check(
            s.n_tail >= sweep::MIN_TAIL_SAMPLES,
            format!("solver.n_tail must be at least {}, got {}", sweep::MIN_TAIL_SAMPLES, s.n_tail),
        );
        let t = &self.tolerances;
        check(t.tol_eq > 0.0, format!("tolerances.tol_eq must be positive, got {}", t.tol_eq));
        check(t.tol_ext > 0.0, format!("tolerances.tol_ext must be positive, got {}", t.tol_ext));
        check(t.tail_frac > 0.0 && t.tail_frac <= 1.0, format!("tolerances.tail_frac must lie in (0, 1], got {}", t.tail_frac));
        if let Some(h) = self.grid.max_spacing {
            check(h > 0.0, format!("grid.max_spacing must be positive, got {h}"));
        }
        check(self.grid.min_pred >= 3, format!("grid.min_pred must be at least 3, got {}", self.grid.min_pred));
        check(self.steady.tol > 0.0, format!("steady.tol must be positive, got {}", self.steady.tol));
        if let Some(t) = self.steady.t_end {
            check(t > 0.0, format!("steady.t_end must be positive, got {t}"));
        }
        match &self.sweep.a_values {
            Some(a) => {
                check(!a.is_empty(), "sweep.a_values is empty".into());
                check(a.windows(2).all(|w| w[1] > w[0]), "sweep.a_values must be strictly increasing".into());
                check(
                    a.iter().all(|&x| x > 0.0 && x < self.params.length),
                    format!("sweep.a_values must lie in (0, L = {})", self.params.length),
                );
            }
            None => check(self.sweep.n >= 1, "sweep.n must be at least 1".into()),
        }
        let tl = &self.thinlimit;
        check(!tl.l_values.is_empty(), "thinlimit.L_values is empty".into());
        check(tl.l_values.iter().all(|&l| l > 0.0), "thinlimit.L_values must be positive".into());
        check(tl.nodes >= 11, format!("thinlimit.nodes must be at least 11, got {}", tl.nodes));
        let rc = self.radial_config();
        errs.extend(rc.violations().into_iter().map(|e| format!("radial: {e}")));
        let r = &self.radial;
        let mut check = |ok: bool, msg: String| {
            if !ok {
                errs.push(msg);
            }
        };
        check(r.eta > 0.0 && r.eta < 1.0, format!("radial.eta must lie in (0, 1), got {}", r.eta));
        check(r.r_max > r.rho, format!("radial.r_max must exceed rho, got {}", r.r_max));
        check(r.ball_nodes >= 2, "radial.ball_nodes must be at least 2".into());
        errs
    }

    pub fn validate(&self) -> Result<()> {
        let errs = self.violations();
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(errs))
        }
    }

    pub fn sweep_settings(&self) -> SweepSettings {
        let s = &self.solver;
        SweepSettings {
            rtol: s.rtol,
            atol: s.atol,
            t_end: s.t_end,
            max_extension: s.max_extension,
            n_coarse: s.n_coarse,
            n_tail: s.n_tail,
            max_spacing: self.grid.max_spacing,
            min_pred: self.grid.min_pred,
            tol: self.tolerances,
        }
    }

    pub fn radial_config(&self) -> RadialConfig {
        let r = &self.radial;
        RadialConfig {
            dim: r.dim,
            rho: r.rho,
            big_r: r.big_r,
            sigma: r.sigma,
            d_u: r.d_u.unwrap_or(self.params.d_u),
            growth: self.params.growth,
            spacing: r.spacing,
        }
    }

    pub fn a_grid(&self) -> Vec<f64> {
        self.sweep.a_values.clone().unwrap_or_else(|| sweep::interior_a_grid(self.params.length, self.sweep.n))
    }
}

#[derive(Debug, Parser)]
#[command(name = "exclusion-zone", version, about = "Predator–prey dynamics with a predator exclusion zone")]
pub struct Cli {
    /// JSON configuration file layered over the defaults.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Built-in parameter set: settled, cycling, hump, fast-growth, low-mortality.
    #[arg(long, global = true)]
    pub preset: Option<String>,
    /// Override a configuration value, e.g. `--set params.a=0.6`.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    pub set: Vec<String>,
    /// Output directory (default: $EXCLUSION_OUTPUT_DIR, else ./out).
    #[arg(long, short = 'o', global = true)]
    pub output_dir: Option<PathBuf>,
    /// Worker threads for sweeps.
    #[arg(long, short = 'j', global = true)]
    pub jobs: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    /// Time-march one parameter set and classify the tail.
    Simulate,
    /// Newton steady state with eigenvalue and mass-balance certificates.
    Steady,
    /// Limiting profile over a grid of exclusion-zone sizes.
    Sweep,
    /// Thin-limit coefficients V0, V1 over a list of domain lengths.
    Thinlimit,
    /// Radial ball and annulus profiles and the threshold radius.
    Radial,
    /// Classify a stored `t,U,V` trajectory.
    Classify {
        /// Totals CSV as written by `simulate`.
        input: PathBuf,
    },
    /// Print the resolved configuration.
    Config,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::Steady => "steady",
            Command::Sweep => "sweep",
            Command::Thinlimit => "thinlimit",
            Command::Radial => "radial",
            Command::Classify { .. } => "classify",
            Command::Config => "config",
        }
    }
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) => 2,
        _ => 1,
    }
}

fn write_json(path: &Path, v: &impl Serialize) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    serde_json::to_writer_pretty(&mut f, v).map_err(|e| Error::Io(e.to_string()))?;
    writeln!(f)?;
    f.flush()?;
    Ok(())
}

fn output_dir(cli: &Cli, cfg: &RunConfig) -> PathBuf {
    cli.output_dir
        .clone()
        .or_else(|| cfg.output_dir.clone())
        .or_else(|| std::env::var_os(OUTPUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"))
}

/// Parses `args` and runs; returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let cfg = match RunConfig::resolve(cli.preset.as_deref(), cli.config.as_deref(), &cli.set) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return exit_code(&e);
        }
    };
    if let Command::Config = cli.command {
        println!("{}", cfg.to_json());
        return 0;
    }
    if cli.jobs == Some(0) {
        eprintln!("error: {}", Error::Config(vec!["--jobs must be at least 1".into()]));
        return 2;
    }
    let dir = output_dir(&cli, &cfg);
    if let Err(e) = std::fs::create_dir_all(&dir) {
        eprintln!("error: cannot create {}: {e}", dir.display());
        return 1;
    }
    let argv: Vec<String> = args.iter().map(|a| a.to_string_lossy().into_owned()).collect();
    let mut meta = serde_json::json!({
        "tool": "exclusion-zone",
        "version": env!("CARGO_PKG_VERSION"),
        "command": cli.command.name(),
        "args": argv,
        "jobs": cli.jobs,
        "parallel": cfg!(feature = "parallel"),
        "config": cfg,
        "status": "running",
    });
    let meta_path = dir.join("metadata.json");
    if let Err(e) = write_json(&meta_path, &meta) {
        eprintln!("error: {e}");
        return 1;
    }
    let result = with_jobs(cli.jobs, || dispatch(&cli.command, &cfg, &dir));
    let code = match &result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            meta["error"] = Value::String(e.to_string());
            exit_code(e)
        }
    };
    meta["status"] = Value::String(if code == 0 { "ok" } else { "failed" }.into());
    if let Err(e) = write_json(&meta_path, &meta) {
        eprintln!("error: {e}");
        return 1;
    }
    code
}

#[cfg(feature = "parallel")]
fn with_jobs<R: Send>(jobs: Option<usize>, f: impl FnOnce() -> R + Send) -> R {
    match jobs {
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(f),
            Err(_) => f(),
        },
        None => f(),
    }
}

#[cfg(not(feature = "parallel"))]
fn with_jobs<R>(_jobs: Option<usize>, f: impl FnOnce() -> R) -> R {
    f()
}

fn dispatch(cmd: &Command, cfg: &RunConfig, dir: &Path) -> Result<()> {
    match cmd {
        Command::Simulate => run_simulate(cfg, dir),
        Command::Steady => run_steady(cfg, dir),
        Command::Sweep => run_sweep(cfg, dir),
        Command::Thinlimit => run_thinlimit(cfg, dir),
        Command::Radial => run_radial(cfg, dir),
        Command::Classify { input } => run_classify(cfg, input, dir),
        Command::Config => Ok(()),
    }
}

fn run_simulate(cfg: &RunConfig, dir: &Path) -> Result<()> {
    let s = cfg.sweep_settings();
    let (traj, st, o) = sweep::run_classified(&cfg.params, &s)?;
    traj.write_totals_csv(&dir.join("totals.csv"))?;
    let n = traj.snapshots.len();
    let mut which: Vec<usize> = (0..=20).map(|k| k * (n - 1) / 20).collect();
    which.dedup();
    traj.write_fields_csv(&dir.join("fields_u.csv"), &dir.join("fields_v.csv"), &which)?;
    write_json(
        &dir.join("classification.json"),
        &serde_json::json!({
            "a": cfg.params.a,
            "t_end": traj.last().t,
            "stats": st,
            "outcome": o,
            "solver_stats": traj.solver_stats,
        }),
    )?;
    println!("{} (V̄ = {:.6}, t_end = {})", o.class, st.v_bar, traj.last().t);
    Ok(())
}

fn run_steady(cfg: &RunConfig, dir: &Path) -> Result<()> {
    let p = &cfg.params;
    let grid = cfg.sweep_settings().grid(p)?;
    let how = match cfg.steady.init {
        InitKind::Dynamics => InitialGuess::FromDynamics {
            t_end: cfg.steady.t_end.or(cfg.solver.t_end).unwrap_or_else(|| p.default_t_end()),
        },
        InitKind::Subsolution => InitialGuess::FromSubsolution,
        InitKind::Homogeneous => InitialGuess::Homogeneous,
    };
    let init = steady::initial_guess(&grid, p, how)?;
    let st = steady::newton_steady(&grid, p, &init, cfg.steady.tol)?;
    st.write_csv(&grid, &dir.join("steady_u.csv"), &dir.join("steady_v.csv"))?;
    let mut cert = st.certificate(&grid, p)?;
    cert["U"] = serde_json::json!(grid.integrate_u(&st.u)?);
    cert["V"] = serde_json::json!(grid.integrate_v(&st.v)?);
    cert["homogeneous_equilibrium"] = serde_json::json!(steady::homogeneous_equilibrium(p));
    write_json(&dir.join("certificates.json"), &cert)?;
    println!(
        "residual {:.3e}, λ[u] {:.3e}, V {:.6}",
        st.residual_inf,
        st.lambda_u,
        cert["V"].as_f64().unwrap_or(f64::NAN)
    );
    Ok(())
}

fn run_sweep(cfg: &RunConfig, dir: &Path) -> Result<()> {
    let prof = sweep::limiting_profile(&cfg.params, &cfg.a_grid(), &cfg.sweep_settings())?;
    prof.write_csv(&dir.join("profile.csv"))?;
    write_json(&dir.join("profile.json"), &prof.summary_json())?;
    let show = |m: Option<sweep::Marker>| m.map(|m| format!("{:.4} ± {:.4}", m.a, m.uncertainty)).unwrap_or_else(|| "none".into());
    println!(
        "{} rows ({} failed); a_hopf {}, a_ext {}, a_max {}",
        prof.rows.len(),
        prof.rows.iter().filter(|r| r.error.is_some()).count(),
        show(prof.markers.a_hopf),
        show(prof.markers.a_ext),
        show(prof.markers.a_max)
    );
    Ok(())
}

fn run_thinlimit(cfg: &RunConfig, dir: &Path) -> Result<()> {
    let p = &cfg.params;
    let target = asymptotics::large_l_slope(p);
    let mut coeffs = Vec::new();
    let mut w = std::io::BufWriter::new(std::fs::File::create(dir.join("thinlimit.csv"))?);
    writeln!(w, "L,q,V0,V1,V1_limit,abs_err,rel_err")?;
    println!("{:>8} {:>14} {:>14} {:>12}", "L", "V0", "V1", "rel_err");
    for &l in &cfg.thinlimit.l_values {
        let c = asymptotics::thin_limit_coeffs(p, l, cfg.thinlimit.nodes)?;
        let err = c.v1_excess.abs();
        writeln!(w, "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}", l, c.q, c.v0, c.v1, target, err, err / target.abs())?;
        println!("{:>8} {:>14.8} {:>14.8} {:>12.4e}", l, c.v0, c.v1, err / target.abs());
        coeffs.push(c);
    }
    w.flush()?;
    if let Some(&l) = cfg.thinlimit.l_values.iter().max_by(|a, b| a.total_cmp(b)) {
        let w1p = asymptotics::w1(l, p, cfg.thinlimit.nodes)?;
        let w2p = asymptotics::w2(l, p, &w1p)?;
        asymptotics::write_profiles_csv(&dir.join("profiles.csv"), &w1p, &w2p, None)?;
    }
    write_json(&dir.join("thinlimit.json"), &serde_json::json!({ "V1_limit": target, "coefficients": coeffs }))?;
    Ok(())
}

fn run_radial(cfg: &RunConfig, dir: &Path) -> Result<()> {
    let rc = cfg.radial_config();
    let zeta = radial::annulus_zeta(&rc, radial::DEFAULT_T_RELAX)?;
    zeta.write_csv(&dir.join("annulus.csv"), "zeta")?;
    let ball = radial::ball_solution(&rc, cfg.radial.ball_nodes)?;
    if let Some(b) = &ball {
        b.write_csv(&dir.join("ball.csv"), "V")?;
    }
    let threshold = radial::threshold_radius(&rc, cfg.radial.eta, cfg.radial.r_max, 1e-2)?;
    let zr = *zeta.value.last().expect("profile is never empty");
    write_json(
        &dir.join("radial.json"),
        &serde_json::json!({
            "config": rc,
            "zeta_R_at_R": zr,
            "ball_center_value": ball.as_ref().map(|b| b.value[0]),
            "eta": cfg.radial.eta,
            "threshold_radius": threshold,
        }),
    )?;
    println!(
        "ζ_R(R) = {zr:.8}; ball {}; threshold R0 = {}",
        ball.map(|b| format!("V(0) = {:.8}", b.value[0])).unwrap_or_else(|| "none".into()),
        threshold.map(|r| format!("{r:.3}")).unwrap_or_else(|| format!("not found below {}", cfg.radial.r_max))
    );
    Ok(())
}

/// Reads a `t,U,V` CSV with a header line.
pub fn read_totals_csv(path: &Path) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>)> {
    let text = std::fs::read_to_string(path)?;
    let (mut t, mut u, mut v) = (Vec::new(), Vec::new(), Vec::new());
    for (k, line) in text.lines().enumerate().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split(',').collect();
        let parse = |s: &str| {
            s.trim()
                .parse::<f64>()
                .map_err(|e| Error::Io(format!("{}:{}: {e}", path.display(), k + 1)))
        };
        if cols.len() < 3 {
            return Err(Error::Io(format!("{}:{}: expected 3 columns", path.display(), k + 1)));
        }
        t.push(parse(cols[0])?);
        u.push(parse(cols[1])?);
        v.push(parse(cols[2])?);
    }
    Ok((t, u, v))
}

fn run_classify(cfg: &RunConfig, input: &Path, dir: &Path) -> Result<()> {
    let (t, u, v) = read_totals_csv(input)?;
    let (st, o) = sweep::classify_series(&t, &u, &v, cfg.params.length, &cfg.tolerances)?;
    write_json(
        &dir.join("classification.json"),
        &serde_json::json!({ "input": input, "stats": st, "outcome": o, "tolerances": cfg.tolerances }),
    )?;
    println!("{}", o.class);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_is_fully_defaulted() {
        let text = r#"{"params": {"alpha": 14, "beta": 12, "gamma": 5, "d_u": 0.1, "d_v": 0.05,
            "growth": {"r": 1, "theta": 0.05}, "a": 0.4, "L": 1}}"#;
        let cfg = RunConfig::from_json(text).unwrap();
        assert_eq!(cfg, RunConfig::default());
        assert_eq!(cfg.params, preset("settled").unwrap());
    }

    #[test]
    fn round_trip() {
        let mut cfg = RunConfig::default();
        cfg.params = preset("low-mortality").unwrap();
        cfg.sweep.a_values = Some(vec![0.1, 0.2]);
        cfg.solver.t_end = Some(12.5);
        let back = RunConfig::from_json(&cfg.to_json()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn geometry_error_is_reported_with_others() {
        let sets = ["params.a=1.5".to_string(), "solver.rtol=-1".to_string()];
        match RunConfig::resolve(None, None, &sets) {
            Err(Error::Config(errs)) => {
                assert!(errs.iter().any(|e| e.contains("0 < a < L")), "{errs:?}");
                assert!(errs.iter().any(|e| e.contains("solver.rtol")), "{errs:?}");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn overrides_and_presets_layer() {
        let cfg = RunConfig::resolve(Some("hump"), None, &["params.a=0.3".into(), "sweep.n=5".into()]).unwrap();
        assert_eq!(cfg.params.alpha, 13.9);
        assert_eq!(cfg.params.a, 0.3);
        assert_eq!(cfg.a_grid().len(), 5);
        assert!(matches!(RunConfig::resolve(Some("nope"), None, &[]), Err(Error::Config(_))));
        assert!(matches!(RunConfig::resolve(None, None, &["novalue".into()]), Err(Error::Config(_))));
        assert!(matches!(RunConfig::resolve(None, None, &["bogus.key=1".into()]), Err(Error::Config(_))));
    }

    #[test]
    fn every_preset_is_valid() {
        for name in PRESETS {
            let p = preset(name).unwrap();
            assert!(p.violations().is_empty(), "{name}");
        }
    }

    #[test]
    fn exit_codes() {
        assert_eq!(exit_code(&Error::Config(vec![])), 2);
        assert_eq!(exit_code(&Error::StiffnessFailure { t: 0.0, h: 0.0 }), 1);
    }
}
