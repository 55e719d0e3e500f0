//! The `edrlab` command line.
//!
//! Every command builds one measuring process from the shared flags and
//! writes CSV (default) or JSON to `--out` or stdout. Exit codes: 0 on
//! success, 2 for configuration errors, 3 when an invariant is violated.
//! `EDRLAB_NUM_THREADS` caps the number of threads used by `sweep`.

use std::fmt::Write as _;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Deserialize;
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::grid::GridSpec;
use crate::hilbert::{CVector, QState, C64};
use crate::meter::{min_delta_f, min_delta_unbiased_f, solve_unbiased_f, MeterFunction};
use crate::models::{self, ModelSpec, ProbeSpec};
use crate::povm::{born_check, extract_povm};
use crate::process::{EdrReport, MeasurementProcess};
use crate::tolerances::Tolerances;

#[derive(Parser, Debug, Clone)]
#[command(name = "edrlab", version, about = "Error, resolution and disturbance of indirect position measurements")]
pub struct RunConfig {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub opts: Options,
}

#[derive(Subcommand, Debug, Clone)]
pub enum Command {
    /// epsilon, delta, eta and the uncertainty products for one process.
    Report,
    /// One report per value of a single model parameter.
    Sweep {
        #[arg(long, value_enum)]
        param: SweepParam,
        #[arg(long)]
        from: f64,
        #[arg(long)]
        to: f64,
        #[arg(long, default_value_t = 11)]
        steps: usize,
    },
    /// Outcome values and POVM element summaries.
    Povm,
    /// Whether the POVM equals the spectral measure of x.
    BornCheck,
    /// Least-squares search for an unbiasing meter function.
    SearchF,
    /// Canned model and state with an annotated report.
    Demo {
        #[arg(value_enum)]
        name: DemoName,
    },
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepParam {
    Lambda,
    ProbeSigma,
    ProbeOffset,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum DemoName {
    Swap,
    Vonneumann,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Args, Debug, Clone)]
pub struct Options {
    /// vonneumann, swap, identity, random, or a model file path.
    #[arg(long, global = true, default_value = "vonneumann")]
    pub model: String,
    /// Object state: `x0,p0,sigma` for a Gaussian, or a JSON file `{"re": [...], "im": [...]}`.
    /// Defaults to a centered Gaussian of spread n*dx/8.
    #[arg(long, global = true)]
    pub psi: Option<String>,
    #[arg(long, global = true)]
    pub hbar: Option<f64>,
    #[arg(long = "grid-n", global = true, default_value_t = 16)]
    pub grid_n: usize,
    /// Probe grid size; defaults to 4 * grid-n for vonneumann, grid-n otherwise.
    #[arg(long = "probe-grid-n", global = true)]
    pub probe_grid_n: Option<usize>,
    #[arg(long, global = true, default_value_t = 1.0)]
    pub dx: f64,
    #[arg(long, global = true, default_value_t = 1.0)]
    pub lambda: f64,
    /// Probe spread; 0 selects a position eigenstate. Defaults to n*dx/16.
    #[arg(long = "probe-sigma", global = true)]
    pub probe_sigma: Option<f64>,
    #[arg(long = "probe-offset", global = true, default_value_t = 0.0)]
    pub probe_offset: f64,
    /// identity, affine:A,B, poly:C0,C1,... or solve.
    #[arg(long = "f", global = true, default_value = "identity")]
    pub f: String,
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Tolerance override, repeatable.
    #[arg(long = "tol", global = true, value_name = "KEY=VAL")]
    pub tol: Vec<String>,
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,
}

/// Entry point of the binary; returns the process exit code.
pub fn main() -> i32 {
    let config = match RunConfig::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match run(&config) {
        Ok(text) => match write_output(&config.opts.out, &text) {
            Ok(()) => 0,
            Err(e) => report_error(&e),
        },
        Err(e) => report_error(&e),
    }
}

fn write_output(out: &Option<PathBuf>, text: &str) -> Result<()> {
    match out {
        Some(path) => std::fs::write(path, text)?,
        None => {
            use std::io::Write;
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(text.as_bytes())?;
            stdout.flush()?;
        }
    }
    Ok(())
}

fn report_error(e: &Error) -> i32 {
    let code = exit_code(e);
    if code == 3 {
        eprintln!("error: {e}");
    } else {
        eprintln!("error [{}]: {e}", e.code());
    }
    code
}

/// 2 for bad input or configuration, 3 for invariant violations and
/// failures of numerical preconditions.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) | Error::Parse(_) | Error::Io(_) | Error::InvalidGrid(_) | Error::GridFit(_) => 2,
        _ => 3,
    }
}

/// Execute a parsed configuration and return the rendered output.
pub fn run(config: &RunConfig) -> Result<String> {
    let opts = &config.opts;
    let tol = tolerances(opts)?;
    let format = opts.format.unwrap_or(Format::Csv);
    match &config.command {
        Command::Report => {
            let setup = Setup::new(opts, &tol)?;
            let f = setup.meter_function(opts)?;
            let report = setup.proc.edr_report(&setup.psi, &f)?;
            Ok(match format {
                Format::Csv => report_table(None, &[(0.0, report)]),
                Format::Json => to_json(&json!({
                    "command": "report",
                    "model": opts.model,
                    "f": f,
                    "report": report,
                })),
            })
        }
        Command::Sweep { param, from, to, steps } => sweep(opts, &tol, *param, *from, *to, *steps, format),
        Command::Povm => {
            let setup = Setup::new(opts, &tol)?;
            povm(&setup, opts, format)
        }
        Command::BornCheck => {
            let setup = Setup::new(opts, &tol)?;
            let check = born_check(&setup.proc);
            Ok(match format {
                Format::Csv => format!("max_deviation[1],is_born\n{},{}\n", num(check.max_deviation), check.is_born),
                Format::Json => to_json(&json!({
                    "command": "born-check",
                    "model": opts.model,
                    "max_deviation": check.max_deviation,
                    "is_born": check.is_born,
                })),
            })
        }
        Command::SearchF => {
            let setup = Setup::new(opts, &tol)?;
            search_f(&setup, opts, format)
        }
        Command::Demo { name } => demo(*name, &tol, opts.format),
    }
}

fn tolerances(opts: &Options) -> Result<Tolerances> {
    let mut tol = Tolerances::default();
    for spec in &opts.tol {
        tol.apply_override(spec)?;
    }
    Ok(tol)
}

// ---------------------------------------------------------------------------
// Model and state assembly
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
enum ModelChoice {
    VonNeumann,
    Swap,
    Identity,
    Random,
    File(PathBuf),
}

impl ModelChoice {
    fn parse(s: &str) -> Self {
        match s.to_ascii_lowercase().as_str() {
            "vonneumann" | "von-neumann" | "vn" => Self::VonNeumann,
            "swap" => Self::Swap,
            "identity" => Self::Identity,
            "random" => Self::Random,
            _ => Self::File(PathBuf::from(s)),
        }
    }
}

enum FChoice {
    Given(MeterFunction),
    Solve,
}

fn parse_f(s: &str) -> Result<FChoice> {
    if s == "solve" {
        Ok(FChoice::Solve)
    } else {
        MeterFunction::parse(s).map(FChoice::Given)
    }
}

struct Setup {
    proc: MeasurementProcess,
    psi: QState,
}

impl Setup {
    fn new(opts: &Options, tol: &Tolerances) -> Result<Self> {
        let choice = ModelChoice::parse(&opts.model);
        let mut proc = match &choice {
            ModelChoice::File(path) => {
                let proc = models::load_custom_with(path, *tol)?;
                if let Some(h) = opts.hbar {
                    if h != proc.hbar() {
                        return Err(Error::Config(format!(
                            "--hbar {h} disagrees with the model file's hbar {}",
                            proc.hbar()
                        )));
                    }
                }
                proc
            }
            ModelChoice::Random => {
                let obj = object_grid(opts)?;
                let probe = GridSpec::new(opts.probe_grid_n.unwrap_or(opts.grid_n), opts.dx, obj.hbar)?;
                let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
                models::random_process(obj, probe, &mut rng)?
            }
            _ => models::build(&builtin_spec(opts, &choice, None)?)?,
        };
        proc.set_tolerances(*tol);
        let grid = GridSpec::new(proc.dims().object, opts.dx, proc.hbar())?;
        let psi = object_state(opts, &grid, tol)?;
        Ok(Self { proc, psi })
    }

    fn meter_function(&self, opts: &Options) -> Result<MeterFunction> {
        meter_function_for(&self.proc, opts)
    }
}

fn meter_function_for(proc: &MeasurementProcess, opts: &Options) -> Result<MeterFunction> {
    Ok(match parse_f(&opts.f)? {
        FChoice::Given(f) => f,
        FChoice::Solve => solve_unbiased_f(proc)?.f_star,
    })
}

fn object_grid(opts: &Options) -> Result<GridSpec> {
    GridSpec::new(opts.grid_n, opts.dx, opts.hbar.unwrap_or(1.0))
}

/// Spec of a built-in model, with one parameter optionally overridden.
fn builtin_spec(opts: &Options, choice: &ModelChoice, sweep: Option<(SweepParam, f64)>) -> Result<ModelSpec> {
    let obj = object_grid(opts)?;
    let mut lambda = opts.lambda;
    let mut sigma = opts.probe_sigma.unwrap_or(obj.window() / 16.0);
    let mut offset = opts.probe_offset;
    match sweep {
        Some((SweepParam::Lambda, v)) => lambda = v,
        Some((SweepParam::ProbeSigma, v)) => sigma = v,
        Some((SweepParam::ProbeOffset, v)) => offset = v,
        None => {}
    }
    let probe = if sigma == 0.0 {
        ProbeSpec::Sharp { x0: offset }
    } else {
        ProbeSpec::Gaussian { x0: offset, p0: 0.0, sigma }
    };
    let probe_grid = |default: usize| GridSpec::new(opts.probe_grid_n.unwrap_or(default), opts.dx, obj.hbar);
    Ok(match choice {
        ModelChoice::VonNeumann => ModelSpec::von_neumann(obj, probe_grid(4 * obj.n)?, lambda, probe),
        ModelChoice::Swap => {
            let spec = ModelSpec::swap(obj, probe);
            ModelSpec { grid_probe: probe_grid(obj.n)?, ..spec }
        }
        ModelChoice::Identity => ModelSpec::identity(obj, probe_grid(obj.n)?, probe),
        ModelChoice::Random | ModelChoice::File(_) => {
            return Err(Error::Config("this operation needs a built-in model".into()))
        }
    })
}

#[derive(Deserialize)]
struct StateFile {
    re: Vec<f64>,
    im: Vec<f64>,
}

fn object_state(opts: &Options, grid: &GridSpec, tol: &Tolerances) -> Result<QState> {
    let Some(spec) = &opts.psi else {
        return grid.gaussian_state(0.0, 0.0, grid.window() / 8.0);
    };
    let parts: Vec<&str> = spec.split(',').collect();
    if parts.len() == 3 {
        let vals: std::result::Result<Vec<f64>, _> = parts.iter().map(|s| s.trim().parse::<f64>()).collect();
        if let Ok(v) = vals {
            return grid.gaussian_state(v[0], v[1], v[2]);
        }
    }
    let text = std::fs::read_to_string(spec)?;
    let file: StateFile = serde_json::from_str(&text).map_err(|e| Error::Parse(format!("state file: {e}")))?;
    if file.re.len() != file.im.len() || file.re.len() != grid.n {
        return Err(Error::DimMismatch(format!(
            "state file has {} real and {} imaginary parts; the object has dim {}",
            file.re.len(),
            file.im.len(),
            grid.n
        )));
    }
    let amps = CVector::from_iterator(grid.n, file.re.iter().zip(&file.im).map(|(&r, &i)| C64::new(r, i)));
    QState::with_tolerance(amps, tol)
}

// ---------------------------------------------------------------------------
// Commands
// ---------------------------------------------------------------------------

fn thread_pool() -> Result<rayon::ThreadPool> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var("EDRLAB_NUM_THREADS") {
        let n: usize = v
            .trim()
            .parse()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| Error::Config(format!("EDRLAB_NUM_THREADS must be a positive integer, got {v:?}")))?;
        builder = builder.num_threads(n);
    }
    builder.build().map_err(|e| Error::Config(format!("thread pool: {e}")))
}

fn sweep_values(from: f64, to: f64, steps: usize) -> Result<Vec<f64>> {
    if steps == 0 || !from.is_finite() || !to.is_finite() {
        return Err(Error::Config("sweep needs finite bounds and at least one step".into()));
    }
    if steps == 1 {
        return Ok(vec![from]);
    }
    let h = (to - from) / (steps - 1) as f64;
    Ok((0..steps).map(|i| if i + 1 == steps { to } else { from + i as f64 * h }).collect())
}

fn sweep(
    opts: &Options,
    tol: &Tolerances,
    param: SweepParam,
    from: f64,
    to: f64,
    steps: usize,
    format: Format,
) -> Result<String> {
    let choice = ModelChoice::parse(&opts.model);
    if param == SweepParam::Lambda && choice != ModelChoice::VonNeumann {
        return Err(Error::Config("a lambda sweep needs the vonneumann model".into()));
    }
    let values = sweep_values(from, to, steps)?;
    // fail fast on a bad base configuration before spawning work
    builtin_spec(opts, &choice, None)?;
    parse_f(&opts.f)?;

    let point = |v: f64| -> Result<EdrReport> {
        let mut proc = models::build(&builtin_spec(opts, &choice, Some((param, v)))?)?;
        proc.set_tolerances(*tol);
        let grid = GridSpec::new(proc.dims().object, opts.dx, proc.hbar())?;
        let psi = object_state(opts, &grid, tol)?;
        let f = meter_function_for(&proc, opts)?;
        proc.edr_report(&psi, &f)
    };
    let results: Vec<Result<EdrReport>> = thread_pool()?.install(|| values.par_iter().map(|&v| point(v)).collect());
    let mut rows = Vec::with_capacity(values.len());
    for (v, r) in values.iter().zip(results) {
        rows.push((*v, r?));
    }
    let (name, unit) = match param {
        SweepParam::Lambda => ("lambda", "1"),
        SweepParam::ProbeSigma => ("probe_sigma", "length"),
        SweepParam::ProbeOffset => ("probe_offset", "length"),
    };
    Ok(match format {
        Format::Csv => report_table(Some(&format!("{name}[{unit}]")), &rows),
        Format::Json => to_json(&json!({
            "command": "sweep",
            "model": opts.model,
            "param": name,
            "points": rows.iter().map(|(v, r)| json!({ "value": v, "report": r })).collect::<Vec<_>>(),
        })),
    })
}

fn povm(setup: &Setup, opts: &Options, format: Format) -> Result<String> {
    let set = extract_povm(&setup.proc);
    let probs = set.probabilities(&setup.psi);
    let traces: Vec<f64> = set.outcomes.iter().map(|o| o.element.matrix().trace().re).collect();
    let norms: Vec<f64> = set.outcomes.iter().map(|o| o.element.operator_norm()).collect();
    Ok(match format {
        Format::Csv => {
            let mut s = String::from("index,value[length],probability[1],trace[1],norm[1]\n");
            for (k, o) in set.outcomes.iter().enumerate() {
                let _ = writeln!(s, "{k},{},{},{},{}", num(o.value), num(probs[k]), num(traces[k]), num(norms[k]));
            }
            s
        }
        Format::Json => to_json(&json!({
            "command": "povm",
            "model": opts.model,
            "completeness_deviation": set.completeness_deviation(),
            "min_eigenvalue": set.min_eigenvalue(),
            "outcomes": set.outcomes.iter().enumerate().map(|(k, o)| json!({
                "value": o.value,
                "probability": probs[k],
                "trace": traces[k],
                "norm": norms[k],
            })).collect::<Vec<_>>(),
        })),
    })
}

fn search_f(setup: &Setup, opts: &Options, format: Format) -> Result<String> {
    let (proc, psi) = (&setup.proc, &setup.psi);
    let (constrained, sol) = min_delta_unbiased_f(proc, psi)?;
    let free = min_delta_f(proc, psi)?;
    let delta_at = proc.delta(psi, &sol.f_star)?;
    let values = proc.meter_spectrum().cluster_values();
    Ok(match format {
        Format::Csv => {
            let mut s = String::from(
                "m[length],f_star[length],f_min_delta_unbiased[length],f_min_delta[length],\
                 residual[length],feasible,delta_at_f_star[length],delta_min_unbiased[length],delta_min[length]\n",
            );
            for (k, m) in values.iter().enumerate() {
                let _ = writeln!(
                    s,
                    "{},{},{},{},{},{},{},{},{}",
                    num(*m),
                    num(sol.coefficients[k]),
                    num(constrained.coefficients[k]),
                    num(free.coefficients[k]),
                    num(sol.residual),
                    sol.feasible,
                    num(delta_at.value),
                    num(constrained.delta_min.value),
                    num(free.delta_min.value),
                );
            }
            s
        }
        Format::Json => to_json(&json!({
            "command": "search-f",
            "model": opts.model,
            "residual": sol.residual,
            "feasible": sol.feasible,
            "f_star": sol.f_star,
            "delta_at_f_star": delta_at,
            "min_delta_unbiased": { "f": constrained.f_star, "delta": constrained.delta_min },
            "min_delta": { "f": free.f_star, "delta": free.delta_min },
        })),
    })
}

fn demo(name: DemoName, tol: &Tolerances, format: Option<Format>) -> Result<String> {
    let grid = GridSpec::new(16, 1.0, 1.0)?;
    let (spec, psi, title) = match name {
        DemoName::Swap => (
            ModelSpec::swap(grid, ProbeSpec::gaussian(1.0, 1.3)),
            grid.gaussian_state(-1.0, 0.3, 1.5)?,
            "swap: the probe and object exchange states",
        ),
        DemoName::Vonneumann => {
            let grid = GridSpec::new(32, 1.0, 1.0)?;
            (
                ModelSpec::von_neumann_padded(grid, 1.0, ProbeSpec::gaussian(0.0, 1.0))?,
                grid.gaussian_state(0.0, 0.0, 3.0)?,
                "von Neumann: probe shifted by lambda * x, minimal-uncertainty probe",
            )
        }
    };
    let mut proc = models::build(&spec)?;
    proc.set_tolerances(*tol);
    let f = MeterFunction::identity();
    let report = proc.edr_report(&psi, &f)?;
    let born = born_check(&proc);

    let mut notes = Vec::new();
    match name {
        DemoName::Swap => {
            notes.push(format!(
                "epsilon = {:.3e}: the reading reproduces the distribution of x in every state",
                report.epsilon
            ));
            notes.push(format!("born check: is_born = {} (max deviation {:.3e})", born.is_born, born.max_deviation));
            notes.push(format!(
                "delta = {:.4}: yet the resolution is bad, the object ends in the probe's initial state \
                 so the reading does not predict the final position",
                report.delta
            ));
        }
        DemoName::Vonneumann => {
            let ratio = report.prod_delta_eta / report.hbar_half;
            notes.push(format!(
                "delta * eta = {:.6} = {:.4} hbar/2: the predictive bound delta * eta >= hbar/2 is saturated",
                report.prod_delta_eta, ratio
            ));
            notes.push(format!(
                "unbiasedness deficit = {:.3e}: the identity meter function is unbiased",
                report.unbiasedness_deficit
            ));
            notes.push(format!(
                "epsilon * eta = {:.6} against h = {:.6}: reported only, no bound is asserted",
                report.prod_eps_eta, report.h
            ));
        }
    }

    let demo_name = match name {
        DemoName::Swap => "swap",
        DemoName::Vonneumann => "vonneumann",
    };
    Ok(match format {
        Some(Format::Json) => to_json(&json!({
            "command": "demo",
            "demo": demo_name,
            "report": report,
            "born_check": born,
            "notes": notes,
        })),
        Some(Format::Csv) => report_table(None, &[(0.0, report)]),
        None => {
            let mut s = format!("demo {demo_name}: {title}\n\n");
            for (k, v) in REPORT_COLUMNS.iter().zip(report_values(&report)) {
                let _ = writeln!(s, "  {k:<28} {v:.6e}");
            }
            s.push('\n');
            for n in notes {
                let _ = writeln!(s, "* {n}");
            }
            s
        }
    })
}

// ---------------------------------------------------------------------------
// Rendering
// ---------------------------------------------------------------------------

fn num(x: f64) -> String {
    format!("{x:e}")
}

fn to_json(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("JSON values always serialize");
    s.push('\n');
    s
}

const REPORT_COLUMNS: [&str; 13] = [
    "epsilon[length]",
    "delta[length]",
    "eta[momentum]",
    "epsilon_sq[length^2]",
    "delta_sq[length^2]",
    "eta_sq[momentum^2]",
    "sigma_x[length]",
    "sigma_p[momentum]",
    "prod_eps_eta[action]",
    "prod_delta_eta[action]",
    "unbiasedness_deficit[length]",
    "hbar_half[action]",
    "h[action]",
];

fn report_values(r: &EdrReport) -> [f64; 13] {
    [
        r.epsilon,
        r.delta,
        r.eta,
        r.epsilon_sq,
        r.delta_sq,
        r.eta_sq,
        r.sigma_x,
        r.sigma_p,
        r.prod_eps_eta,
        r.prod_delta_eta,
        r.unbiasedness_deficit,
        r.hbar_half,
        r.h,
    ]
}

fn report_table(param: Option<&str>, rows: &[(f64, EdrReport)]) -> String {
    let mut header: Vec<&str> = param.into_iter().collect();
    header.extend(REPORT_COLUMNS);
    let mut s = header.join(",");
    s.push('\n');
    for (v, r) in rows {
        let mut cells: Vec<String> = param.iter().map(|_| num(*v)).collect();
        cells.extend(report_values(r).iter().map(|x| num(*x)));
        s.push_str(&cells.join(","));
        s.push('\n');
    }
    s
}
