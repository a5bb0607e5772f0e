//! Batch command-line front end.
//!
//! Every subcommand reads a JSON config (unknown keys rejected), applies
//! `--set key.path=value` overrides, computes all artifacts in memory and only
//! then writes them, so a failed run leaves no partial output. Exit codes:
//! 0 success, 2 input error, 3 numerical failure.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::calibration::{self, CalibrationConfig, OptionType, Side};
use crate::dynamics::{self, GridConfig, InitSpec, SimConfig};
use crate::error::Error;
use crate::hetero::{self, HeterogeneousMarket};
use crate::mean_field::{self, Stability};
use crate::phase;
use crate::potential::{self, Potential, PotentialParams};

#[derive(Debug, Parser)]
#[command(name = "mfmarket", version, about = "Mean-field interacting-asset market model")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// JSON config file.
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory (created if missing).
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
    /// Worker threads for parallel sections; results do not depend on it.
    #[arg(long)]
    pub threads: Option<usize>,
    /// Seed override for `simulate` and `calibrate`.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Config override `key.path=value`; the value is parsed as JSON when possible.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Potential, its derivative and the stationary density on a grid.
    Potential(Common),
    /// All roots of the self-consistency equation.
    Selfconsist(Common),
    /// Landau free energy over a range of m.
    FreeEnergy(Common),
    /// Root structure over a range of h.
    Bifurcate(Common),
    /// Critical volatility, exponent, specific-heat jump and susceptibility.
    PhaseDiagnostics(Common),
    /// Heterogeneous linear response.
    Hetero(Common),
    /// Finite-N Langevin particle simulation.
    Simulate(Common),
    /// McKean-Vlasov density evolution.
    #[command(name = "mckean-vlasov")]
    MckeanVlasov(Common),
    /// Calibrate effective parameters to an option chain.
    Calibrate(Common),
    /// Price European options under the stationary density.
    Price(Common),
}

impl Command {
    fn parts(&self) -> (&'static str, &Common) {
        match self {
            Command::Potential(c) => ("potential", c),
            Command::Selfconsist(c) => ("selfconsist", c),
            Command::FreeEnergy(c) => ("free-energy", c),
            Command::Bifurcate(c) => ("bifurcate", c),
            Command::PhaseDiagnostics(c) => ("phase-diagnostics", c),
            Command::Hetero(c) => ("hetero", c),
            Command::Simulate(c) => ("simulate", c),
            Command::MckeanVlasov(c) => ("mckean-vlasov", c),
            Command::Calibrate(c) => ("calibrate", c),
            Command::Price(c) => ("price", c),
        }
    }
}

/// Failure reported on stderr as one JSON line.
#[derive(Debug, Clone, PartialEq)]
pub struct Failure {
    pub code: i32,
    pub name: String,
    pub message: String,
}

impl Failure {
    fn input(name: &str, message: impl Into<String>) -> Self {
        Self { code: 2, name: name.into(), message: message.into() }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Self { code: if e.is_input_error() { 2 } else { 3 }, name: e.name().into(), message: e.to_string() }
    }
}

type CliResult<T> = std::result::Result<T, Failure>;

/// Parses `args` (including the program name), runs the command and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(f) => {
            eprintln!("{}", json!({ "error": f.name, "message": f.message, "exit_code": f.code }));
            f.code
        }
    }
}

/// Runs a parsed command and writes its artifacts.
pub fn execute(cli: &Cli) -> CliResult<()> {
    let (name, common) = cli.command.parts();
    let artifacts = match common.threads {
        Some(0) => return Err(Failure::input("InvalidInput", "--threads must be at least 1")),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Failure::input("InvalidInput", format!("thread pool: {e}")))?;
            pool.install(|| produce(&cli.command, name, common))?
        }
        None => produce(&cli.command, name, common)?,
    };
    write_artifacts(&common.out, &artifacts)
}

/// A finished output file.
#[derive(Debug, Clone, PartialEq)]
pub struct Artifact {
    pub file_name: String,
    pub bytes: Vec<u8>,
}

enum Payload {
    Json(Value),
    Csv { suffix: &'static str, header: Vec<&'static str>, rows: Vec<Vec<String>> },
}

fn produce(command: &Command, name: &'static str, common: &Common) -> CliResult<Vec<Artifact>> {
    let text = fs::read_to_string(&common.config)
        .map_err(|e| Failure::input("InvalidInput", format!("cannot read {}: {e}", common.config.display())))?;
    let mut raw: Value =
        serde_json::from_str(&text).map_err(|e| Failure::input("InvalidConfig", format!("{}: {e}", common.config.display())))?;
    if let Some(seed) = common.seed {
        let path = match command {
            Command::Simulate(_) => "sim.seed",
            Command::Calibrate(_) => "calibration.seed",
            _ => return Err(Failure::input("InvalidInput", format!("--seed is not used by {name}"))),
        };
        apply_override(&mut raw, &format!("{path}={seed}"))?;
    }
    for ov in &common.set {
        apply_override(&mut raw, ov)?;
    }
    let base = common.config.parent().map(Path::to_path_buf).unwrap_or_default();
    let (resolved, payloads) = match command {
        Command::Potential(_) => cmd_potential(raw)?,
        Command::Selfconsist(_) => cmd_selfconsist(raw)?,
        Command::FreeEnergy(_) => cmd_free_energy(raw)?,
        Command::Bifurcate(_) => cmd_bifurcate(raw)?,
        Command::PhaseDiagnostics(_) => cmd_phase(raw)?,
        Command::Hetero(_) => cmd_hetero(raw)?,
        Command::Simulate(_) => cmd_simulate(raw)?,
        Command::MckeanVlasov(_) => cmd_mckean_vlasov(raw)?,
        Command::Calibrate(_) => cmd_calibrate(raw, &base)?,
        Command::Price(_) => cmd_price(raw)?,
    };
    Ok(finish(name, &resolved, payloads))
}

fn apply_override(root: &mut Value, spec: &str) -> CliResult<()> {
    let (key, value) = spec
        .split_once('=')
        .ok_or_else(|| Failure::input("InvalidInput", format!("override '{spec}' is not KEY=VALUE")))?;
    let parsed = serde_json::from_str(value).unwrap_or_else(|_| Value::String(value.to_string()));
    let mut node = root;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let obj = node
            .as_object_mut()
            .ok_or_else(|| Failure::input("InvalidInput", format!("override '{key}' does not address an object")))?;
        if i + 1 == parts.len() {
            obj.insert(part.to_string(), parsed);
            return Ok(());
        }
        node = obj.entry(part.to_string()).or_insert_with(|| json!({}));
    }
    Ok(())
}

fn parse<T: DeserializeOwned>(raw: Value) -> CliResult<T> {
    serde_json::from_value(raw).map_err(|e| Failure::input("InvalidConfig", e.to_string()))
}

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("serializable")
}

/// Hex SHA-256 of the compact JSON encoding of the resolved config.
pub fn config_hash(resolved: &Value) -> String {
    let digest = Sha256::digest(serde_json::to_vec(resolved).expect("serializable"));
    let mut s = String::with_capacity(64);
    for b in digest.iter() {
        let _ = write!(s, "{b:02x}");
    }
    s
}

fn finish(name: &str, resolved: &Value, payloads: Vec<Payload>) -> Vec<Artifact> {
    let hash = config_hash(resolved);
    let version = env!("CARGO_PKG_VERSION");
    let metadata = json!({ "tool": "mfmarket", "version": version, "command": name, "config_sha256": hash, "config": resolved });
    payloads
        .into_iter()
        .map(|p| match p {
            Payload::Json(result) => {
                let doc = json!({ "metadata": metadata, "result": result });
                let mut bytes = serde_json::to_vec_pretty(&doc).expect("serializable");
                bytes.push(b'\n');
                Artifact { file_name: format!("{name}.json"), bytes }
            }
            Payload::Csv { suffix, header, rows } => {
                let mut bytes = format!("# mfmarket {version} command={name} config_sha256={hash}\n").into_bytes();
                {
                    let mut w = csv::Writer::from_writer(&mut bytes);
                    w.write_record(&header).expect("in-memory write");
                    for r in &rows {
                        w.write_record(r).expect("in-memory write");
                    }
                    w.flush().expect("in-memory write");
                }
                Artifact { file_name: format!("{name}{suffix}.csv"), bytes }
            }
        })
        .collect()
}

fn write_artifacts(out: &Path, artifacts: &[Artifact]) -> CliResult<()> {
    let io = |e: std::io::Error| Failure::input("IoError", format!("{}: {e}", out.display()));
    fs::create_dir_all(out).map_err(io)?;
    let mut staged = Vec::with_capacity(artifacts.len());
    for a in artifacts {
        let tmp = out.join(format!(".{}.tmp{}", a.file_name, std::process::id()));
        if let Err(e) = fs::write(&tmp, &a.bytes) {
            let _ = fs::remove_file(&tmp);
            for (t, _) in &staged {
                let _ = fs::remove_file(t);
            }
            return Err(io(e));
        }
        staged.push((tmp, out.join(&a.file_name)));
    }
    for (tmp, dest) in &staged {
        fs::rename(tmp, dest).map_err(io)?;
    }
    Ok(())
}

fn num(x: f64) -> String {
    format!("{x}")
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Range {
    pub min: f64,
    pub max: f64,
    pub points: usize,
}

impl Range {
    fn validate(&self, what: &str) -> CliResult<Vec<f64>> {
        if !(self.max > self.min) || self.points < 2 || self.points > 10_000_000 {
            return Err(Failure::input("InvalidInput", format!("{what}: need max > min and 2 <= points")));
        }
        Ok(linspace(self.min, self.max, self.points))
    }
}

fn default_y_range(p: &PotentialParams) -> Range {
    let pad = 6.0 * p.sigma_max() * p.t.sqrt();
    Range {
        min: (p.mu1 * p.t).min(p.mu2 * p.t) - pad,
        max: (p.mu1 * p.t).max(p.mu2 * p.t) + pad,
        points: 401,
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PotentialCmd {
    params: PotentialParams,
    #[serde(default)]
    grid: Option<Range>,
}

fn cmd_potential(raw: Value) -> CliResult<(Value, Vec<Payload>)> {
    let mut c: PotentialCmd = parse(raw)?;
    c.params.validate()?;
    let grid = *c.grid.get_or_insert(default_y_range(&c.params));
    let ys = grid.validate("grid")?;
    let pot = Potential::new(&c.params);
    let stat = potential::stationary_density(&c.params);
    let rows = ys
        .iter()
        .map(|&y| vec![num(y), num(pot.value(y)), num(pot.derivative(y)), num(stat.pdf(y))])
        .collect();
    let result = json!({
        "v0": pot.v0,
        "argmin": pot.argmin,
        "stationary": stat,
        "stationary_mean": stat.mean(),
        "stationary_variance": stat.variance(),
        "symmetric_decomposition": potential::symmetrize(&c.params),
    });
    Ok((
        to_value(&c),
        vec![Payload::Json(result), Payload::Csv { suffix: "", header: vec!["y", "V", "dV", "density"], rows }],
    ))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SelfConsistCmd {
    params: PotentialParams,
    g: f64,
    #[serde(rename = "B", default)]
    b: f64,
}

fn cmd_selfconsist(raw: Value) -> CliResult<(Value, Vec<Payload>)> {
    let c: SelfConsistCmd = parse(raw)?;
    c.params.validate()?;
    let r = mean_field::solve_self_consistency(&c.params, c.g, c.b)?;
    let ground = r.ground_state().copied();
    let result = json!({ "roots": r.roots, "m_max": r.m_max, "ground_state": ground });
    Ok((to_value(&c), vec![Payload::Json(result)]))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FreeEnergyCmd {
    params: PotentialParams,
    g: f64,
    #[serde(rename = "B", default)]
    b: f64,
    #[serde(default)]
    m: Option<Range>,
}

fn cmd_free_energy(raw: Value) -> CliResult<(Value, Vec<Payload>)> {
    let mut c: FreeEnergyCmd = parse(raw)?;
    c.params.validate()?;
    if !(c.g >= 0.0) {
        return Err(Error::InvalidParams("g must be non-negative".into()).into());
    }
    let bound = mean_field::root_search_bound(&c.params, c.b);
    let range = *c.m.get_or_insert(Range { min: -bound, max: bound, points: 401 });
    let ms = range.validate("m")?;
    let f0 = mean_field::free_energy(&c.params, c.g, 0.0, c.b);
    let rows = ms
        .iter()
        .map(|&m| {
            let f = mean_field::free_energy(&c.params, c.g, m, c.b);
            vec![
                num(m),
                num(f),
                num(f - f0),
                num(mean_field::self_consistency_rhs(&c.params, c.g, m, c.b) - m),
            ]
        })
        .collect();
    let roots = mean_field::solve_self_consistency(&c.params, c.g, c.b)?;
    Ok((
        to_value(&c),
        vec![
            Payload::Json(json!({ "F_at_zero": f0, "roots": roots.roots })),
            Payload::Csv { suffix: "", header: vec!["m", "F", "F_minus_F0", "rhs_minus_m"], rows },
        ],
    ))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BifurcateCmd {
    params: PotentialParams,
    g: f64,
    h: Range,
}

fn cmd_bifurcate(raw: Value) -> CliResult<(Value, Vec<Payload>)> {
    let c: BifurcateCmd = parse(raw)?;
    c.params.validate()?;
    let hs = c.h.validate("h")?;
    let sweep = phase::bifurcation_sweep(&c.params, c.g, &hs)?;
    let mut rows = Vec::new();
    let mut counts = Vec::with_capacity(sweep.len());
    for bp in &sweep {
        match &bp.roots {
            Ok(roots) => {
                counts.push(json!({ "h": bp.h, "branches": roots.len() }));
                for (i, r) in roots.iter().enumerate() {
                    let stab = match r.stability {
                        Stability::Stable => "stable",
                        Stability::Unstable => "unstable",
                    };
                    rows.push(vec![num(bp.h), roots.len().to_string(), i.to_string(), num(r.m), stab.into(), num(r.free_energy)]);
                }
            }
            Err(msg) => {
                counts.push(json!({ "h": bp.h, "branches": null, "error": msg }));
                rows.push(vec![num(bp.h), String::new(), String::new(), String::new(), String::new(), String::new()]);
            }
        }
    }
    let critical = if c.params.is_symmetric() {
        phase::critical_volatility(c.params.mu1, c.params.sigma1, c.params.t, c.g).ok().map(|cp| cp.h_c)
    } else {
        None
    };
    Ok((
        to_value(&c),
        vec![
            Payload::Json(json!({ "h_c": critical, "branch_counts": counts })),
            Payload::Csv { suffix: "", header: vec!["h", "branches", "root_index", "m", "stability", "free_energy"], rows },
        ],
    ))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PhaseCmd {
    params: PotentialParams,
    g: f64,
    #[serde(default)]
    chi_h: Option<f64>,
}

fn cmd_phase(raw: Value) -> CliResult<(Value, Vec<Payload>)> {
    let c: PhaseCmd = parse(raw)?;
    c.params.validate()?;
    let d = phase::phase_diagnostics(&c.params, c.g, c.chi_h)?;
    Ok((to_value(&c), vec![Payload::Json(to_value(&d))]))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct HeteroCmd {
    market: HeterogeneousMarket,
    #[serde(default)]
    local_mean_fields: bool,
}

fn cmd_hetero(raw: Value) -> CliResult<(Value, Vec<Payload>)> {
    let c: HeteroCmd = parse(raw)?;
    let lr = hetero::linear_response(&c.market)?;
    let fluct = if c.market.is_homogeneous() { hetero::fluctuation_response_check(&c.market).ok() } else { None };
    let local = if c.local_mean_fields { Some(hetero::solve_local_mean_fields(&c.market)?) } else { None };
    let n = c.market.n();
    let mut rows = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            rows.push(vec![i.to_string(), j.to_string(), num(lr.g_inv[(i, j)]), num(lr.chi[(i, j)]), num(lr.cov[(i, j)])]);
        }
    }
    let result = json!({
        "A": lr.a,
        "A_over_g": lr.a_over_g,
        "mean_A": lr.mean_a,
        "convention": lr.convention,
        "fluctuation_response": fluct,
        "local_mean_fields": local,
    });
    Ok((
        to_value(&c),
        vec![Payload::Json(result), Payload::Csv { suffix: "", header: vec!["i", "j", "G_inv", "chi", "cov"], rows }],
    ))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SimSpec {
    #[serde(rename = "N")]
    n: usize,
    steps: usize,
    #[serde(default)]
    seed: u64,
    #[serde(default)]
    dt: Option<f64>,
    #[serde(default)]
    burn_in: Option<usize>,
    init: InitSpec,
    #[serde(default)]
    record_every: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SimulateCmd {
    params: PotentialParams,
    g: f64,
    sim: SimSpec,
}

#[derive(Serialize)]
struct SimulateResolved {
    params: PotentialParams,
    g: f64,
    sim: SimConfig,
}

fn cmd_simulate(raw: Value) -> CliResult<(Value, Vec<Payload>)> {
    let c: SimulateCmd = parse(raw)?;
    c.params.validate()?;
    let std_cfg = SimConfig::standard(&c.params, c.sim.n, c.sim.steps, c.sim.seed, c.sim.init);
    let cfg = SimConfig {
        dt: c.sim.dt.unwrap_or(std_cfg.dt),
        burn_in: c.sim.burn_in.unwrap_or(std_cfg.burn_in),
        record_every: c.sim.record_every.unwrap_or(std_cfg.record_every),
        ..std_cfg
    };
    let r = dynamics::simulate_particles(&c.params, c.g, &cfg)?;
    let rows = r.series.iter().map(|s| vec![num(s.t), num(s.mean), num(s.var)]).collect();
    let resolved = to_value(&SimulateResolved { params: c.params, g: c.g, sim: cfg });
    Ok((
        resolved,
        vec![
            Payload::Json(json!({ "stationary": r.stats })),
            Payload::Csv { suffix: "", header: vec!["t", "m_hat", "var_hat"], rows },
        ],
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
enum DensityInit {
    Gaussian { mean: f64, sd: f64 },
    Boltzmann { m: f64 },
}

fn default_n_cells() -> usize {
    401
}
fn default_record() -> usize {
    1000
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MckeanVlasovCmd {
    params: PotentialParams,
    g: f64,
    #[serde(default)]
    grid: Option<GridConfig>,
    #[serde(default = "default_n_cells")]
    n_cells: usize,
    init: DensityInit,
    t_end: f64,
    #[serde(default = "default_record")]
    record_every: usize,
}

fn cmd_mckean_vlasov(raw: Value) -> CliResult<(Value, Vec<Payload>)> {
    let mut c: MckeanVlasovCmd = parse(raw)?;
    c.params.validate()?;
    if c.grid.is_none() && c.n_cells < 3 {
        return Err(Failure::input("InvalidInput", "n_cells must be at least 3"));
    }
    let grid = *c.grid.get_or_insert_with(|| GridConfig::covering(&c.params, c.g, c.n_cells, 0.5));
    grid.validate(&c.params)?;
    let init = match c.init {
        DensityInit::Gaussian { mean, sd } => {
            if !(sd > 0.0) {
                return Err(Failure::input("InvalidInput", "initial sd must be positive"));
            }
            dynamics::gaussian_density(mean, sd, &grid)
        }
        DensityInit::Boltzmann { m } => dynamics::boltzmann_density(&c.params, c.g, m, &grid),
    };
    let tr = dynamics::evolve_mckean_vlasov(&c.params, c.g, &grid, &init, c.t_end, c.record_every)?;
    let target = dynamics::boltzmann_density(&c.params, c.g, tr.final_mean, &grid);
    let l1 = dynamics::l1_distance(&tr.density, &target, &grid);
    let nearest = mean_field::solve_self_consistency(&c.params, c.g, 0.0)
        .ok()
        .and_then(|r| r.roots.iter().map(|x| x.m).min_by(|a, b| (a - tr.final_mean).abs().total_cmp(&(b - tr.final_mean).abs())));
    let density_rows =
        tr.y.iter().zip(&tr.density).zip(&target).map(|((y, p), q)| vec![num(*y), num(*p), num(*q)]).collect();
    let snap_rows = tr.snapshots.iter().map(|s| vec![num(s.t), num(s.mean), num(s.mass)]).collect();
    let result = json!({
        "steps": tr.steps,
        "final_mean": tr.final_mean,
        "nearest_root": nearest,
        "l1_to_boltzmann_at_final_mean": l1,
        "max_mass_drift": tr.max_mass_drift,
        "min_density": tr.min_density,
        "max_courant": tr.max_courant,
    });
    Ok((
        to_value(&c),
        vec![
            Payload::Json(result),
            Payload::Csv { suffix: "", header: vec!["y", "density", "boltzmann"], rows: density_rows },
            Payload::Csv { suffix: "_snapshots", header: vec!["t", "mean", "mass"], rows: snap_rows },
        ],
    ))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CalibrateCmd {
    /// Quote CSV, relative to the config file.
    quotes: String,
    side: Side,
    calibration: CalibrationConfig,
    #[serde(default)]
    grid: Option<Range>,
}

fn cmd_calibrate(raw: Value, base: &Path) -> CliResult<(Value, Vec<Payload>)> {
    let c: CalibrateCmd = parse(raw)?;
    let path = base.join(&c.quotes);
    let file = fs::File::open(&path).map_err(|e| Failure::input("InvalidInput", format!("cannot read {}: {e}", path.display())))?;
    let quotes = calibration::read_quotes(file)?;
    let r = calibration::calibrate(&quotes, c.side, &c.calibration)?;
    let grid = c.grid.unwrap_or_else(|| default_y_range(&r.barred));
    let ys = grid.validate("grid")?;
    let pot = Potential::new(&r.barred);
    let rows = ys.iter().map(|&y| vec![num(y), num(pot.value(y))]).collect();
    Ok((
        to_value(&c),
        vec![Payload::Json(to_value(&r)), Payload::Csv { suffix: "", header: vec!["y", "V_eff"], rows }],
    ))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PriceCmd {
    /// Effective parameters; `T` is the tenor.
    params: PotentialParams,
    spot: f64,
    rate: f64,
    #[serde(rename = "type")]
    option_type: OptionType,
    strikes: Vec<f64>,
}

fn cmd_price(raw: Value) -> CliResult<(Value, Vec<Payload>)> {
    let c: PriceCmd = parse(raw)?;
    c.params.validate()?;
    if !(c.spot > 0.0) || !c.rate.is_finite() || c.strikes.iter().any(|k| !(*k > 0.0)) {
        return Err(Failure::input("InvalidInput", "need spot > 0, finite rate and positive strikes"));
    }
    let prices: Vec<f64> =
        c.strikes.iter().map(|&k| calibration::price_european(&c.params, c.spot, c.rate, k, c.option_type)).collect();
    let rows = c.strikes.iter().zip(&prices).map(|(k, p)| vec![num(*k), num(*p)]).collect();
    let result = json!({
        "forward": calibration::mixture_forward(&c.params, c.spot),
        "discount": (-c.rate * c.params.t).exp(),
        "prices": prices,
    });
    Ok((to_value(&c), vec![Payload::Json(result), Payload::Csv { suffix: "", header: vec!["strike", "price"], rows }]))
}
