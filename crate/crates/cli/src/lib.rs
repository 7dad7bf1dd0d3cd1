//! `rankdist`: hat matrices, exact and approximate rank distortions, and the
//! Monte Carlo oracle from the command line.
//!
//! Every subcommand takes a design, given either as a CSV file or as a builder
//! spec `poly:<n>:<degree>[:<a>:<b>]` (equispaced points on `[a, b]`, default
//! `[0, 1]`). Indices on the command line and in the output are 1-based.

use std::fmt;
use std::fs;
use std::io::{self, Write};
use std::path::PathBuf;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use rank_distortion::approx::{approx_cov, heuristic_cov, ApproxReport};
use rank_distortion::design::{equispaced, load_csv, polynomial_design, write_matrix};
use rank_distortion::exact::{
    exact_cov_with_stats, exact_matrix, exact_matrix_with_workers, exact_var_with_stats,
};
use rank_distortion::oracle::{simulate, simulate_with_workers};
use rank_distortion::projection::compute_hat_matrix;
use rank_distortion::{
    ClampStats, DesignMatrix, DistortionMatrix, Error, HatMatrix, SimulationConfig,
    SimulationResult,
};

/// Largest tolerated `|exact - empirical| / se` in `compare`.
pub const Z_LIMIT: f64 = 4.0;

/// Below this, `exact - empirical` counts as zero when the standard error is 0.
const ZERO_SE_TOLERANCE: f64 = 1e-9;

#[derive(Parser, Debug)]
#[command(
    name = "rankdist",
    version,
    about = "Rank distortions of least-squares residuals"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Hat matrix of the design.
    Hat(Options),
    /// Exact covariance matrix of the rank distortions.
    Exact(Options),
    /// Small-leverage approximation and its rms lines.
    Approx(Options),
    /// Monte Carlo estimate of the covariance matrix.
    Simulate(Options),
    /// Exact, approximate, heuristic and simulated values side by side.
    Compare(Options),
    /// Per-observation leverage, exact rms distortion and both rms lines.
    Figure(Options),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Hat(_) => "hat",
            Command::Exact(_) => "exact",
            Command::Approx(_) => "approx",
            Command::Simulate(_) => "simulate",
            Command::Compare(_) => "compare",
            Command::Figure(_) => "figure",
        }
    }

    pub fn options(&self) -> &Options {
        match self {
            Command::Hat(o)
            | Command::Exact(o)
            | Command::Approx(o)
            | Command::Simulate(o)
            | Command::Compare(o)
            | Command::Figure(o) => o,
        }
    }
}

#[derive(Args, Debug, Clone)]
pub struct Options {
    /// CSV file or `poly:<n>:<degree>[:<a>:<b>]`.
    pub input: Input,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
    /// Write to this file instead of stdout.
    #[arg(short, long)]
    pub output: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Monte Carlo replications.
    #[arg(long, default_value_t = 100_000)]
    pub reps: u64,
    /// Restrict to row `i` (1-based); requires `--j`.
    #[arg(long, requires = "j")]
    pub i: Option<usize>,
    /// Restrict to column `j` (1-based); requires `--i`.
    #[arg(long, requires = "i")]
    pub j: Option<usize>,
    /// Worker threads for the parallel kernels (default: all cores).
    #[arg(long)]
    pub workers: Option<usize>,
}

impl Options {
    fn pair(&self) -> Option<(usize, usize)> {
        self.i.zip(self.j)
    }

    fn exact_matrix(&self, h: &HatMatrix) -> Result<DistortionMatrix, Failure> {
        Ok(match self.workers {
            Some(w) => exact_matrix_with_workers(h, w)?,
            None => exact_matrix(h)?,
        })
    }

    fn simulate(&self, design: DesignMatrix) -> Result<SimulationResult, Failure> {
        let cfg = SimulationConfig::new(design, self.reps, self.seed);
        Ok(match self.workers {
            Some(w) => simulate_with_workers(&cfg, w)?,
            None => simulate(&cfg)?,
        })
    }
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Json,
}

impl fmt::Display for Format {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Format::Csv => "csv",
            Format::Json => "json",
        })
    }
}

/// Where the design comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum Input {
    Poly {
        n: usize,
        degree: usize,
        a: f64,
        b: f64,
    },
    Csv(PathBuf),
}

impl FromStr for Input {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let Some(rest) = s.strip_prefix("poly:") else {
            return Ok(Input::Csv(PathBuf::from(s)));
        };
        let parts: Vec<&str> = rest.split(':').collect();
        if parts.len() != 2 && parts.len() != 4 {
            return Err(format!("expected poly:<n>:<degree>[:<a>:<b>], got {s:?}"));
        }
        let n = parts[0]
            .parse()
            .map_err(|_| format!("invalid n {:?}", parts[0]))?;
        let degree = parts[1]
            .parse()
            .map_err(|_| format!("invalid degree {:?}", parts[1]))?;
        let (a, b) = if parts.len() == 4 {
            let a = parts[2]
                .parse()
                .map_err(|_| format!("invalid a {:?}", parts[2]))?;
            let b = parts[3]
                .parse()
                .map_err(|_| format!("invalid b {:?}", parts[3]))?;
            (a, b)
        } else {
            (0.0, 1.0)
        };
        Ok(Input::Poly { n, degree, a, b })
    }
}

impl fmt::Display for Input {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Input::Poly { n, degree, a, b } => write!(f, "poly:{n}:{degree}:{a}:{b}"),
            Input::Csv(path) => write!(f, "{}", path.display()),
        }
    }
}

impl Input {
    pub fn resolve(&self) -> Result<DesignMatrix, Failure> {
        match self {
            Input::Poly { n, degree, a, b } => {
                let x = equispaced(*n, *a, *b).map_err(|e| Failure::Usage(e.to_string()))?;
                Ok(polynomial_design(&x, *degree)?)
            }
            Input::Csv(path) => load_csv(path).map_err(|e| match Failure::from(e) {
                Failure::Io(m) => Failure::Io(format!("{}: {m}", path.display())),
                other => other,
            }),
        }
    }
}

/// A failed run, classified by exit status.
#[derive(Debug, Clone, PartialEq)]
pub enum Failure {
    /// Bad flags or arguments (exit 1).
    Usage(String),
    /// A numerical gate or precondition failed (exit 2).
    Gate(String),
    /// Reading input or writing output failed (exit 3).
    Io(String),
}

impl Failure {
    pub fn exit_code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Gate(_) => 2,
            Failure::Io(_) => 3,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Usage(m) => write!(f, "usage error: {m}"),
            Failure::Gate(m) => write!(f, "{m}"),
            Failure::Io(m) => write!(f, "i/o error: {m}"),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let msg = e.to_string();
        match e {
            Error::Io(_) | Error::Parse { .. } => Failure::Io(msg),
            Error::IndexOutOfRange { .. }
            | Error::SameIndex(_)
            | Error::InvalidRange { .. }
            | Error::InvalidConfig(_) => Failure::Usage(msg),
            _ => Failure::Gate(msg),
        }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Io(e.to_string())
    }
}

/// Parses `args` and runs the command, returning the process exit status.
pub fn run<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match execute(&cli.command) {
        Ok(()) => 0,
        Err(failure) => {
            eprintln!("rankdist: {failure}");
            failure.exit_code()
        }
    }
}

/// Runs one command and writes its output to `--output` or stdout.
pub fn execute(command: &Command) -> Result<(), Failure> {
    let opts = command.options();
    let mut out = Vec::new();
    let outcome = render(command, &mut out);
    // compare still writes its table when the z-score gate fails
    if outcome.is_ok() || !out.is_empty() {
        emit(opts, &out)?;
    }
    outcome
}

fn emit(opts: &Options, bytes: &[u8]) -> Result<(), Failure> {
    match &opts.output {
        Some(path) => {
            fs::write(path, bytes).map_err(|e| Failure::Io(format!("{}: {e}", path.display())))
        }
        None => {
            let mut stdout = io::stdout().lock();
            stdout.write_all(bytes)?;
            stdout.flush()?;
            Ok(())
        }
    }
}

/// Produces the output of `command` into `out`.
pub fn render(command: &Command, out: &mut Vec<u8>) -> Result<(), Failure> {
    let opts = command.options();
    let design = opts.input.resolve()?;
    log::info!(
        "{}: design {}x{}",
        command.name(),
        design.nrows(),
        design.ncols()
    );
    let h = compute_hat_matrix(&design)?;
    if let Some((i, j)) = opts.pair() {
        h.get(i, j)?;
    }
    let provenance = provenance(command);
    match command {
        Command::Hat(_) => hat(opts, &h, provenance, out),
        Command::Exact(_) => exact(opts, &h, provenance, out),
        Command::Approx(_) => approx(opts, &h, provenance, out),
        Command::Simulate(_) => simulation(opts, design, provenance, out),
        Command::Compare(_) => compare(opts, design, &h, provenance, out),
        Command::Figure(_) => figure(opts, &h, provenance, out),
    }
}

fn provenance(command: &Command) -> Value {
    let o = command.options();
    json!({
        "subcommand": command.name(),
        "input": o.input.to_string(),
        "flags": {
            "format": o.format.to_string(),
            "output": o.output.as_ref().map(|p| p.display().to_string()),
            "seed": o.seed,
            "reps": o.reps,
            "i": o.i,
            "j": o.j,
            "workers": o.workers,
        },
        "seed": o.seed,
        "version": env!("CARGO_PKG_VERSION"),
    })
}

fn write_json(out: &mut Vec<u8>, value: &Value) -> Result<(), Failure> {
    serde_json::to_writer_pretty(&mut *out, value).map_err(|e| Failure::Io(e.to_string()))?;
    out.push(b'\n');
    Ok(())
}

fn write_table(out: &mut Vec<u8>, header: &[&str], rows: &[Vec<String>]) -> Result<(), Failure> {
    writeln!(out, "{}", header.join(","))?;
    for row in rows {
        writeln!(out, "{}", row.join(","))?;
    }
    Ok(())
}

fn clamp_json(stats: ClampStats) -> Value {
    json!({ "clamped": stats.clamped, "max_excursion": stats.max_excursion })
}

/// Pairs `(i, j)` with `i <= j` (0-based), or the single requested pair.
fn pairs(n: usize, pair: Option<(usize, usize)>) -> Vec<(usize, usize)> {
    match pair {
        Some((i, j)) => vec![(i - 1, j - 1)],
        None => (0..n).flat_map(|i| (i..n).map(move |j| (i, j))).collect(),
    }
}

fn hat(opts: &Options, h: &HatMatrix, provenance: Value, out: &mut Vec<u8>) -> Result<(), Failure> {
    let ties = h.tie_report();
    match opts.format {
        Format::Csv => match opts.pair() {
            Some((i, j)) => write_table(
                out,
                &["i", "j", "h"],
                &[vec![i.to_string(), j.to_string(), h.get(i, j)?.to_string()]],
            ),
            None => Ok(write_matrix(&mut *out, h.entries(), None)?),
        },
        Format::Json => {
            let matrix: Vec<Vec<f64>> = h
                .entries()
                .row_iter()
                .map(|r| r.iter().copied().collect())
                .collect();
            write_json(
                out,
                &json!({
                    "provenance": provenance,
                    "n": h.n(),
                    "p": h.p(),
                    "eta": h.eta(),
                    "leverages": h.leverages(),
                    "hat": matrix,
                    "constant_in_span": h.contains_constant(),
                    "ties": {
                        "leverage_condition": ties.leverage_condition,
                        "pairwise": ties.pairwise,
                        "tie_pair": ties.tie_pair.map(|(a, b)| [a, b]),
                    },
                }),
            )
        }
    }
}

fn exact(
    opts: &Options,
    h: &HatMatrix,
    provenance: Value,
    out: &mut Vec<u8>,
) -> Result<(), Failure> {
    if let Some((i, j)) = opts.pair() {
        let (value, stats) = if i == j {
            exact_var_with_stats(h, i)?
        } else {
            exact_cov_with_stats(h, i, j)?
        };
        return match opts.format {
            Format::Csv => write_table(
                out,
                &["i", "j", "exact"],
                &[vec![i.to_string(), j.to_string(), value.to_string()]],
            ),
            Format::Json => write_json(
                out,
                &json!({
                    "provenance": provenance,
                    "i": i,
                    "j": j,
                    "exact": value,
                    "clamp": clamp_json(stats),
                }),
            ),
        };
    }
    let m = opts.exact_matrix(h)?;
    match opts.format {
        Format::Csv => Ok(write_matrix(&mut *out, m.cov(), None)?),
        Format::Json => write_json(
            out,
            &json!({
                "provenance": provenance,
                "n": m.n(),
                "cov": m.to_rows(),
                "rms": m.rms(),
                "clamp": clamp_json(m.clamp_stats()),
            }),
        ),
    }
}

fn approx(
    opts: &Options,
    h: &HatMatrix,
    provenance: Value,
    out: &mut Vec<u8>,
) -> Result<(), Failure> {
    if let Some((i, j)) = opts.pair() {
        let a = approx_cov(h, i, j)?;
        let heuristic = heuristic_cov(h, i, j)?;
        return match opts.format {
            Format::Csv => write_table(
                out,
                &["i", "j", "approx", "heuristic"],
                &[vec![
                    i.to_string(),
                    j.to_string(),
                    a.to_string(),
                    heuristic.to_string(),
                ]],
            ),
            Format::Json => write_json(
                out,
                &json!({
                    "provenance": provenance,
                    "i": i,
                    "j": j,
                    "approx": a,
                    "heuristic": heuristic,
                    "constant_in_span": h.contains_constant(),
                }),
            ),
        };
    }
    let report = ApproxReport::new(h);
    match opts.format {
        Format::Csv => {
            let rows: Vec<Vec<String>> = (0..report.n())
                .map(|k| {
                    vec![
                        (k + 1).to_string(),
                        h.leverages()[k].to_string(),
                        report.approx_cov[(k, k)].to_string(),
                        report.rms_with_intercept[k].to_string(),
                        report.rms_raw[k].to_string(),
                        report.floored[k].to_string(),
                    ]
                })
                .collect();
            write_table(
                out,
                &[
                    "i",
                    "leverage",
                    "approx_var",
                    "rms_line1",
                    "rms_line2",
                    "floored",
                ],
                &rows,
            )
        }
        Format::Json => {
            let matrix: Vec<Vec<f64>> = report
                .approx_cov
                .row_iter()
                .map(|r| r.iter().copied().collect())
                .collect();
            write_json(
                out,
                &json!({
                    "provenance": provenance,
                    "n": report.n(),
                    "eta": report.eta,
                    "constant_in_span": report.constant_in_span,
                    "approx_cov": matrix,
                    "rms_line1": report.rms_with_intercept,
                    "rms_line2": report.rms_raw,
                    "floored": report.floored,
                }),
            )
        }
    }
}

fn simulation(
    opts: &Options,
    design: DesignMatrix,
    provenance: Value,
    out: &mut Vec<u8>,
) -> Result<(), Failure> {
    let n = design.nrows();
    let sim = opts.simulate(design)?;
    let pairs = pairs(n, opts.pair());
    match opts.format {
        Format::Csv => {
            let rows: Vec<Vec<String>> = pairs
                .iter()
                .map(|&(i, j)| {
                    vec![
                        (i + 1).to_string(),
                        (j + 1).to_string(),
                        sim.mean_cov[(i, j)].to_string(),
                        sim.se_cov[(i, j)].to_string(),
                    ]
                })
                .collect();
            write_table(out, &["i", "j", "mean", "se"], &rows)
        }
        Format::Json => {
            let entries: Vec<Value> = pairs
                .iter()
                .map(|&(i, j)| {
                    json!({
                        "i": i + 1,
                        "j": j + 1,
                        "mean": sim.mean_cov[(i, j)],
                        "se": sim.se_cov[(i, j)],
                    })
                })
                .collect();
            write_json(
                out,
                &json!({
                    "provenance": provenance,
                    "n": n,
                    "replications": sim.replications,
                    "tie_events": sim.tie_events,
                    "entries": entries,
                }),
            )
        }
    }
}

/// `(exact - empirical) / se`, with a zero standard error treated as exact
/// agreement up to [`ZERO_SE_TOLERANCE`].
pub fn z_score(exact: f64, empirical: f64, se: f64) -> f64 {
    let diff = exact - empirical;
    if se > 0.0 {
        diff / se
    } else if diff.abs() <= ZERO_SE_TOLERANCE {
        0.0
    } else {
        diff.signum() * f64::INFINITY
    }
}

fn compare(
    opts: &Options,
    design: DesignMatrix,
    h: &HatMatrix,
    provenance: Value,
    out: &mut Vec<u8>,
) -> Result<(), Failure> {
    h.require_tie_free()?;
    let n = h.n();
    let pairs = pairs(n, opts.pair());
    let exact_values: Vec<f64> = match opts.pair() {
        Some((i, j)) if i == j => vec![exact_var_with_stats(h, i)?.0],
        Some((i, j)) => vec![exact_cov_with_stats(h, i, j)?.0],
        None => {
            let m = opts.exact_matrix(h)?;
            pairs.iter().map(|&(i, j)| m.cov()[(i, j)]).collect()
        }
    };
    let sim = opts.simulate(design)?;
    let mut records = Vec::with_capacity(pairs.len());
    let mut worst: f64 = 0.0;
    for (&(i, j), &exact) in pairs.iter().zip(&exact_values) {
        let a = approx_cov(h, i + 1, j + 1)?;
        let heuristic = heuristic_cov(h, i + 1, j + 1)?;
        let (mean, se) = (sim.mean_cov[(i, j)], sim.se_cov[(i, j)]);
        let z = z_score(exact, mean, se);
        worst = worst.max(z.abs());
        records.push((i + 1, j + 1, exact, a, heuristic, mean, se, z));
    }
    match opts.format {
        Format::Csv => {
            let rows: Vec<Vec<String>> = records
                .iter()
                .map(|r| {
                    vec![
                        r.0.to_string(),
                        r.1.to_string(),
                        r.2.to_string(),
                        r.3.to_string(),
                        r.4.to_string(),
                        r.5.to_string(),
                        r.6.to_string(),
                        r.7.to_string(),
                    ]
                })
                .collect();
            write_table(
                out,
                &[
                    "i",
                    "j",
                    "exact",
                    "approx",
                    "heuristic",
                    "empirical",
                    "se",
                    "z",
                ],
                &rows,
            )?;
        }
        Format::Json => {
            let entries: Vec<Value> = records
                .iter()
                .map(|r| {
                    json!({
                        "i": r.0, "j": r.1, "exact": r.2, "approx": r.3,
                        "heuristic": r.4, "empirical": r.5, "se": r.6,
                        "z": if r.7.is_finite() { json!(r.7) } else { json!(r.7.to_string()) },
                    })
                })
                .collect();
            write_json(
                out,
                &json!({
                    "provenance": provenance,
                    "n": n,
                    "replications": sim.replications,
                    "tie_events": sim.tie_events,
                    "max_abs_z": if worst.is_finite() { json!(worst) } else { json!(worst.to_string()) },
                    "z_limit": Z_LIMIT,
                    "entries": entries,
                }),
            )?;
        }
    }
    if worst > Z_LIMIT {
        return Err(Failure::Gate(format!(
            "max |z| = {worst} exceeds {Z_LIMIT}"
        )));
    }
    Ok(())
}

fn figure(
    opts: &Options,
    h: &HatMatrix,
    provenance: Value,
    out: &mut Vec<u8>,
) -> Result<(), Failure> {
    h.require_tie_free()?;
    let report = ApproxReport::new(h);
    let rms_exact = (1..=h.n())
        .map(|i| Ok(exact_var_with_stats(h, i)?.0.max(0.0).sqrt()))
        .collect::<Result<Vec<f64>, Failure>>()?;
    match opts.format {
        Format::Csv => {
            let rows: Vec<Vec<String>> = (0..h.n())
                .map(|k| {
                    vec![
                        (k + 1).to_string(),
                        h.leverages()[k].to_string(),
                        rms_exact[k].to_string(),
                        report.rms_with_intercept[k].to_string(),
                        report.rms_raw[k].to_string(),
                    ]
                })
                .collect();
            write_table(
                out,
                &["i", "leverage", "rms_exact", "rms_line1", "rms_line2"],
                &rows,
            )
        }
        Format::Json => write_json(
            out,
            &json!({
                "provenance": provenance,
                "n": h.n(),
                "leverage": h.leverages(),
                "rms_exact": rms_exact,
                "rms_line1": report.rms_with_intercept,
                "rms_line2": report.rms_raw,
                "floored": report.floored,
            }),
        ),
    }
}
