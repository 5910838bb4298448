//! Command-line front end: `count`, `simulate`, `nf-compare`, `illpose` and `probe`.
//!
//! Every command reads an optional JSON config (`--config`) with one section per
//! command; flags override config values. Exit codes: 0 on success, 2 on usage or
//! config errors, 3 when a runtime guard trips (blow-up, non-convergence).

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::field::{fl_norm, FlNormParams, SpectralField};
use crate::lattice::{empirical_count_constant, ModulusSign};
use crate::normal_form::{nf_solve, ConvergenceReport, NormalFormParams};
use crate::probe::{b_p, modulation_sum_bound, modulation_sum_s, threshold_scan};
use crate::solver::{illposedness_slope, integrate, Scheme, SimConfig};

/// Version of the table mapping operators in this crate to their defining formulas.
pub const EQUATION_MAP_VERSION: &str = "1";

const VERSION: &str = concat!(env!("CARGO_PKG_VERSION"), " (build ", env!("CARGO_PKG_NAME"), "-", env!("CARGO_PKG_VERSION"), ", equation map v1)");

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "hnls-lab", version = VERSION, about = "Experiments for the cubic hyperbolic Schrödinger equation on the 2-torus")]
pub struct Cli {
    /// JSON file with one section per command; flags take precedence.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Worker threads for the parallel kernels.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Empirical constant of the resonance counting bound.
    Count(CountArgs),
    /// Direct Galerkin integration, JSON-lines trajectory.
    Simulate(SimulateArgs),
    /// Normal-form Picard solve against direct integration.
    NfCompare(NfCompareArgs),
    /// Growth of the second Picard iterate on `f_N`.
    Illpose(IllposeArgs),
    /// Kernel threshold scan or modulation sums.
    Probe(ProbeArgs),
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CountArgs {
    #[arg(long)]
    pub sign: Option<ModulusSign>,
    #[arg(long)]
    pub radius: Option<i64>,
    #[arg(long)]
    pub theta: Option<f64>,
    #[arg(long)]
    pub samples: Option<u64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<String>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateArgs {
    /// Field file: JSON array of `{j, k, re, im}`.
    #[arg(long)]
    pub init: Option<PathBuf>,
    #[arg(long)]
    pub radius: Option<i64>,
    #[arg(long)]
    pub dt: Option<f64>,
    #[arg(long = "T")]
    #[serde(rename = "T")]
    pub t_end: Option<f64>,
    #[arg(long)]
    pub record_every: Option<usize>,
    #[arg(long, value_parser = parse_scheme)]
    pub scheme: Option<Scheme>,
    /// Norms to record, as `s:p` pairs separated by commas.
    #[arg(long)]
    pub norms: Option<String>,
    /// Directory receiving one field file per recorded step.
    #[arg(long)]
    pub snapshots: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<String>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NfCompareArgs {
    #[arg(long)]
    pub init: Option<PathBuf>,
    #[arg(long)]
    pub radius: Option<i64>,
    #[arg(long = "T")]
    #[serde(rename = "T")]
    pub t_end: Option<f64>,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long = "Jmax")]
    #[serde(rename = "Jmax")]
    pub j_max: Option<usize>,
    /// Defaults to `max(1, ‖u0‖_{FL^{s,p}})`.
    #[arg(long = "K")]
    #[serde(rename = "K")]
    pub k: Option<f64>,
    #[arg(long)]
    pub p: Option<f64>,
    #[arg(long)]
    pub s: Option<f64>,
    #[arg(long)]
    pub sign: Option<ModulusSign>,
    #[arg(long)]
    pub out: Option<String>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IllposeArgs {
    #[arg(long)]
    pub s: Option<f64>,
    #[arg(long)]
    pub p: Option<f64>,
    #[arg(long)]
    pub t: Option<f64>,
    /// Comma-separated list, e.g. `16,32,64,128`.
    #[arg(long = "N", value_delimiter = ',')]
    #[serde(rename = "N")]
    pub n: Option<Vec<i64>>,
    #[arg(long)]
    pub out: Option<String>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbeArgs {
    #[arg(long)]
    pub p: Option<f64>,
    #[arg(long = "s-list", value_delimiter = ',', allow_hyphen_values = true)]
    pub s_list: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    pub radii: Option<Vec<i64>>,
    #[arg(long = "sigma0-range")]
    pub sigma0_range: Option<i64>,
    #[arg(long)]
    pub epsilon: Option<f64>,
    /// Emit truncated modulation sums for these generations instead of a scan.
    #[arg(long = "modulation-j", value_delimiter = ',')]
    pub modulation_j: Option<Vec<usize>>,
    #[arg(long = "K")]
    #[serde(rename = "K")]
    pub k: Option<f64>,
    #[arg(long = "alpha-radius")]
    pub alpha_radius: Option<i64>,
    #[arg(long)]
    pub out: Option<String>,
}

fn parse_scheme(s: &str) -> std::result::Result<Scheme, String> {
    serde_json::from_value(serde_json::Value::String(s.to_string())).map_err(|_| format!("unknown scheme '{s}' (rk4_interaction_picture, picard_only)"))
}

/// Per-command config sections.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub count: CountArgs,
    #[serde(default)]
    pub simulate: SimulateArgs,
    #[serde(default, rename = "nf-compare")]
    pub nf_compare: NfCompareArgs,
    #[serde(default)]
    pub illpose: IllposeArgs,
    #[serde(default)]
    pub probe: ProbeArgs,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }
}

macro_rules! overlay {
    ($flags:expr, $file:expr, $($f:ident),+) => {{
        let mut merged = $file;
        $( if $flags.$f.is_some() { merged.$f = $flags.$f.clone(); } )+
        merged
    }};
}

fn need<T: Clone>(v: &Option<T>, name: &str) -> Result<T> {
    v.clone().ok_or_else(|| invalid(format!("missing required option --{name}")))
}

fn exit_code(e: &Error) -> i32 {
    match e {
        Error::BlowUp { .. } | Error::NonConvergence { .. } => EXIT_RUNTIME,
        _ => EXIT_USAGE,
    }
}

/// Destination for a command's payload.
fn with_output<W: Write>(out: &Option<String>, stdout: &mut W, f: impl FnOnce(&mut dyn Write) -> Result<()>) -> Result<()> {
    match out.as_deref() {
        None | Some("-") => {
            f(stdout)?;
            stdout.flush()?;
        }
        Some(path) => {
            let mut file = std::io::BufWriter::new(fs::File::create(path)?);
            f(&mut file)?;
            file.flush()?;
        }
    }
    Ok(())
}

/// Parses the process arguments and runs the command. Returns the exit code.
pub fn run() -> i32 {
    let stdout = std::io::stdout();
    let stderr = std::io::stderr();
    run_with(std::env::args_os(), &mut stdout.lock(), &mut stderr.lock())
}

/// [`run`] with explicit arguments and streams.
pub fn run_with<I, T, W, E>(args: I, stdout: &mut W, stderr: &mut E) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
    W: Write,
    E: Write,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = e.exit_code();
            let text = e.render().to_string();
            if code == 0 {
                let _ = write!(stdout, "{text}");
            } else {
                let _ = write!(stderr, "{text}");
            }
            return if code == 0 { EXIT_OK } else { EXIT_USAGE };
        }
    };
    match dispatch(cli, stdout) {
        Ok(()) => EXIT_OK,
        Err((code, e)) => {
            let _ = writeln!(stderr, "error: {e}");
            code
        }
    }
}

fn dispatch<W: Write>(cli: Cli, stdout: &mut W) -> std::result::Result<(), (i32, Error)> {
    let usage = |e: Error| (exit_code(&e), e);
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(usage(invalid("--threads must be positive")));
        }
        // Fails only if the pool was already built, in which case it is kept.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let config = match &cli.config {
        Some(path) => ExperimentConfig::load(path).map_err(|e| (EXIT_USAGE, e))?,
        None => ExperimentConfig::default(),
    };
    match cli.command {
        Command::Count(a) => cmd_count(overlay!(a, config.count, sign, radius, theta, samples, seed, out), stdout).map_err(usage),
        Command::Simulate(a) => {
            cmd_simulate(overlay!(a, config.simulate, init, radius, dt, t_end, record_every, scheme, norms, snapshots, out), stdout)
        }
        Command::NfCompare(a) => cmd_nf_compare(overlay!(a, config.nf_compare, init, radius, t_end, steps, j_max, k, p, s, sign, out), stdout),
        Command::Illpose(a) => cmd_illpose(overlay!(a, config.illpose, s, p, t, n, out), stdout).map_err(usage),
        Command::Probe(a) => {
            cmd_probe(overlay!(a, config.probe, p, s_list, radii, sigma0_range, epsilon, modulation_j, k, alpha_radius, out), stdout)
                .map_err(usage)
        }
    }
}

pub fn cmd_count<W: Write>(a: CountArgs, stdout: &mut W) -> Result<()> {
    let report = empirical_count_constant(
        a.sign.unwrap_or(ModulusSign::Hyperbolic),
        need(&a.theta, "theta")?,
        need(&a.radius, "radius")?,
        a.samples.unwrap_or(1000),
        a.seed.unwrap_or(0),
    )?;
    with_output(&a.out, stdout, |w| {
        serde_json::to_writer_pretty(&mut *w, &report)?;
        writeln!(w)?;
        Ok(())
    })
}

fn load_field(path: &Path, radius: i64) -> Result<SpectralField> {
    let text = fs::read_to_string(path).map_err(|e| invalid(format!("cannot read {}: {e}", path.display())))?;
    SpectralField::from_json(&text, Some(radius))
}

/// Parses `s:p,s:p,…`.
fn parse_norms(spec: &str) -> Result<Vec<FlNormParams>> {
    spec.split(',')
        .map(|item| {
            let (s, p) = item.split_once(':').ok_or_else(|| invalid(format!("norm '{item}' is not of the form s:p")))?;
            let s: f64 = s.trim().parse().map_err(|_| invalid(format!("bad s in '{item}'")))?;
            let p: f64 = p.trim().parse().map_err(|_| invalid(format!("bad p in '{item}'")))?;
            FlNormParams::new(s, p)
        })
        .collect()
}

#[derive(Serialize)]
struct TrajectoryRecord {
    t: f64,
    field_ref: String,
    mass: f64,
    hamiltonian: f64,
    fl_norms: BTreeMap<String, f64>,
}

pub fn cmd_simulate<W: Write>(a: SimulateArgs, stdout: &mut W) -> std::result::Result<(), (i32, Error)> {
    let usage = |e: Error| (EXIT_USAGE, e);
    let cfg = SimConfig {
        radius: need(&a.radius, "radius").map_err(usage)?,
        dt: need(&a.dt, "dt").map_err(usage)?,
        t_end: need(&a.t_end, "T").map_err(usage)?,
        scheme: a.scheme.unwrap_or(Scheme::Rk4InteractionPicture),
        record_every: a.record_every.unwrap_or(1),
    };
    cfg.validate().map_err(usage)?;
    let norms = parse_norms(a.norms.as_deref().unwrap_or("0:2")).map_err(usage)?;
    let u0 = load_field(&need(&a.init, "init").map_err(usage)?, cfg.radius).map_err(usage)?;
    let traj = integrate(&u0, &cfg).map_err(|e| (exit_code(&e), e))?;
    if let Some(dir) = &a.snapshots {
        fs::create_dir_all(dir).map_err(|e| usage(e.into()))?;
    }
    with_output(&a.out, stdout, |w| {
        for (idx, (t, u)) in traj.samples.iter().enumerate() {
            let step = (t / cfg.dt).round() as u64;
            let fl_norms = norms.iter().map(|&q| (format!("s={},p={}", q.s, q.p), fl_norm(u, q))).collect();
            let rec = TrajectoryRecord {
                t: *t,
                field_ref: format!("step:{step}"),
                mass: traj.conserved.mass[idx],
                hamiltonian: traj.conserved.hamiltonian[idx],
                fl_norms,
            };
            serde_json::to_writer(&mut *w, &rec)?;
            writeln!(w)?;
            if let Some(dir) = &a.snapshots {
                fs::write(dir.join(format!("step_{step}.json")), u.to_json())?;
            }
        }
        Ok(())
    })
    .map_err(usage)?;
    match traj.blowup {
        Some(b) => Err((EXIT_RUNTIME, Error::BlowUp { t: b.t, magnitude: b.magnitude })),
        None => Ok(()),
    }
}

#[derive(Serialize)]
struct DistanceRow {
    t: f64,
    distance: f64,
}

#[derive(Serialize)]
struct NfCompareReport {
    norm: FlNormParams,
    max_distance: f64,
    distances: Vec<DistanceRow>,
    convergence: ConvergenceReport,
}

pub fn cmd_nf_compare<W: Write>(a: NfCompareArgs, stdout: &mut W) -> std::result::Result<(), (i32, Error)> {
    let usage = |e: Error| (EXIT_USAGE, e);
    let radius = need(&a.radius, "radius").map_err(usage)?;
    let t_end = need(&a.t_end, "T").map_err(usage)?;
    let steps = need(&a.steps, "steps").map_err(usage)?;
    let j_max = need(&a.j_max, "Jmax").map_err(usage)?;
    if j_max < 2 {
        return Err(usage(invalid("--Jmax must be at least 2")));
    }
    let p = a.p.unwrap_or(2.0);
    let s = a.s.unwrap_or(1.0);
    let u0 = load_field(&need(&a.init, "init").map_err(usage)?, radius).map_err(usage)?;
    let k = a.k.unwrap_or_else(|| NormalFormParams::default_k(&u0, s, p));
    let params = NormalFormParams { k, p, s, j_max, radius, sign: a.sign.unwrap_or(ModulusSign::Hyperbolic) };
    params.validate().map_err(usage)?;
    if params.sign != ModulusSign::Hyperbolic {
        return Err(usage(invalid("direct integration is only available for the hyperbolic sign")));
    }
    if steps == 0 || !(t_end > 0.0) {
        return Err(usage(invalid("need --steps >= 1 and --T > 0")));
    }
    let nf = nf_solve(&u0, t_end, steps, &params).map_err(usage)?;
    let cfg = SimConfig { radius, dt: t_end / steps as f64, t_end, scheme: Scheme::Rk4InteractionPicture, record_every: 1 };
    let direct = integrate(&u0, &cfg).map_err(|e| (exit_code(&e), e))?;
    let norm = params.diagnostic_norm();
    let distances: Vec<DistanceRow> = nf
        .trajectory
        .iter()
        .zip(&direct.samples)
        .map(|((t, a), (_, b))| DistanceRow { t: *t, distance: fl_norm(&a.sub(b), norm) })
        .collect();
    let max_distance = distances.iter().map(|d| d.distance).fold(0.0, crate::normal_form::nan_max);
    let converged = nf.report.converged;
    let (iterations, delta) = (nf.report.iterations, nf.report.final_delta);
    let report = NfCompareReport { norm, max_distance, distances, convergence: nf.report };
    with_output(&a.out, stdout, |w| {
        serde_json::to_writer_pretty(&mut *w, &report)?;
        writeln!(w)?;
        Ok(())
    })
    .map_err(usage)?;
    if converged {
        Ok(())
    } else {
        Err((EXIT_RUNTIME, Error::NonConvergence { iterations, delta }))
    }
}

#[derive(Serialize)]
struct IllposeRow {
    #[serde(rename = "N")]
    n: i64,
    norm: f64,
    slope: f64,
    expected: f64,
}

pub fn cmd_illpose<W: Write>(a: IllposeArgs, stdout: &mut W) -> Result<()> {
    let n_list = a.n.clone().unwrap_or_else(|| vec![16, 32, 64, 128]);
    let report = illposedness_slope(need(&a.s, "s")?, need(&a.p, "p")?, a.t.unwrap_or(1.0), &n_list)?;
    with_output(&a.out, stdout, |w| {
        let mut wr = csv::Writer::from_writer(w);
        for &(n, norm) in &report.points {
            wr.serialize(IllposeRow { n, norm, slope: report.slope, expected: report.expected })?;
        }
        wr.flush()?;
        Ok(())
    })
}

#[derive(Serialize)]
struct ModulationRow {
    j: usize,
    #[serde(rename = "K")]
    k: f64,
    p: f64,
    alpha_radius: i64,
    value: f64,
    bound: f64,
    b_p: f64,
}

pub fn cmd_probe<W: Write>(a: ProbeArgs, stdout: &mut W) -> Result<()> {
    let p = need(&a.p, "p")?;
    if let Some(js) = &a.modulation_j {
        let k = a.k.unwrap_or(1.0);
        let alpha_radius = a.alpha_radius.unwrap_or(100_000);
        let bp = b_p(p)?;
        let mut rows = Vec::new();
        for &j in js {
            rows.push(ModulationRow { j, k, p, alpha_radius, value: modulation_sum_s(j, k, p, alpha_radius)?, bound: modulation_sum_bound(j, k, p)?, b_p: bp });
        }
        return with_output(&a.out, stdout, |w| {
            let mut wr = csv::Writer::from_writer(w);
            for r in &rows {
                wr.serialize(r)?;
            }
            wr.flush()?;
            Ok(())
        });
    }
    let s_list = need(&a.s_list, "s-list")?;
    let radii = a.radii.clone().unwrap_or_else(|| vec![8, 16, 32, 64]);
    let report = threshold_scan(p, &s_list, &radii, a.sigma0_range.unwrap_or(8), a.epsilon.unwrap_or(0.1))?;
    with_output(&a.out, stdout, |w| report.write_csv(w))
}
