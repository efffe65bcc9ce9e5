//! Command-line front end.
//!
//! [`run`] parses arguments, executes one subcommand and returns the process
//! exit code: 0 on success, 1 for usage or validation errors and 2 when no
//! verified solution exists.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::builder::{build_all, NlpInstance};
use crate::error::{Error, Result};
use crate::lti::{ProblemFile, ProblemSpec};
use crate::parallel::with_threads;
use crate::sequences::{
    brute_force_candidates, count_all_candidates, enumerate_candidates, plus_part, Level,
    BRUTE_FORCE_MAX_ORDER,
};
use crate::simulator::{propagate, SwitchingSchedule};
use crate::solver::{solve_report, solve_time_fuel, SolveReport, SolverOptions};

/// Environment variable capping the worker pool.
pub const THREADS_ENV: &str = "TIMEFUEL_THREADS";

const SAMPLES_PER_SEGMENT: usize = 20;

#[derive(Debug, Parser)]
#[command(name = "timefuel", version, about = "Time-fuel optimal bang-off-bang control of diagonal LTI systems")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Text,
    Json,
    Csv,
}

#[derive(Debug, clap::Args)]
pub struct SolveArgs {
    /// Problem file (JSON).
    #[arg(long)]
    pub problem: PathBuf,
    /// Random starts per instance.
    #[arg(long, default_value_t = 64)]
    pub starts: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Upper bound on the final time; defaults to 50 / min |lambda|.
    #[arg(long = "max-time")]
    pub max_time: Option<f64>,
}

impl SolveArgs {
    fn options(&self) -> SolverOptions {
        SolverOptions {
            starts: self.starts,
            seed: self.seed,
            t_max: self.max_time,
            ..SolverOptions::default()
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// List candidate switching sequences.
    Enumerate {
        #[arg(long)]
        n: usize,
        #[arg(long = "max-switches")]
        max_switches: Option<usize>,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
    },
    /// Compare the closed-form candidate count with brute force.
    Count {
        #[arg(long)]
        n: usize,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
    },
    /// Write every optimization instance of a problem as JSON.
    Build {
        #[arg(long)]
        problem: PathBuf,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Solve a problem and write the report.
    Solve {
        #[command(flatten)]
        args: SolveArgs,
        /// Report path; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Integrate a schedule and export the trajectory.
    Simulate {
        #[arg(long)]
        problem: PathBuf,
        /// Schedule file: {"breakpoints": [...], "levels": [...]}.
        #[arg(long)]
        schedule: PathBuf,
        /// CSV path; stdout when omitted.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Solve for several time weights and print one row each.
    Table {
        #[command(flatten)]
        args: SolveArgs,
        /// Time weight; repeat for several rows.
        #[arg(long = "k")]
        k: Vec<f64>,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// One row of the performance table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TableRow {
    pub k: f64,
    pub cost: f64,
    pub final_time: f64,
    pub on_duration: f64,
    pub sparsity: f64,
    pub sequence: String,
}

#[derive(Serialize)]
struct ConstraintSpec<'a> {
    common_denominator: i64,
    time_weight: f64,
    levels: &'a [Level],
    cost_coefficients: &'a [f64],
    ordering_constraints: usize,
    equalities: Vec<EqualitySpec>,
}

#[derive(Serialize)]
struct EqualitySpec {
    state: usize,
    numerator: i64,
    b: f64,
    x0: f64,
    breakpoint_coefficients: Vec<f64>,
}

#[derive(Serialize)]
struct InstanceRecord<'a> {
    id: &'a str,
    variant: &'static str,
    start_sign: &'static str,
    signs: Vec<i8>,
    n_vars: usize,
    constraint_spec: ConstraintSpec<'a>,
}

fn instance_record(inst: &NlpInstance) -> InstanceRecord<'_> {
    InstanceRecord {
        id: &inst.id,
        variant: inst.template.variant.name(),
        start_sign: inst.template.start_sign.name(),
        signs: inst.signs.values(),
        n_vars: inst.n_vars(),
        constraint_spec: ConstraintSpec {
            common_denominator: inst.common_denominator(),
            time_weight: inst.k,
            levels: &inst.levels,
            cost_coefficients: inst.cost_gradient(),
            ordering_constraints: inst.ordering_constraint_count(),
            equalities: inst
                .equality_constraints
                .iter()
                .map(|c| EqualitySpec {
                    state: c.state,
                    numerator: c.c,
                    b: c.b,
                    x0: c.x0,
                    breakpoint_coefficients: c.breakpoint_coefficients.clone(),
                })
                .collect(),
        },
    }
}

/// Formats `x` with at most nine significant digits.
pub fn sig9(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return if x == 0.0 { "0".into() } else { x.to_string() };
    }
    let rounded: f64 = format!("{x:.8e}").parse().unwrap_or(x);
    rounded.to_string()
}

fn load(problem: &Path) -> Result<ProblemSpec> {
    ProblemFile::read(problem)?.into_spec()
}

fn write_output(path: Option<&Path>, out: &mut dyn Write, bytes: &[u8]) -> Result<()> {
    match path {
        Some(p) => fs::write(p, bytes).map_err(|e| Error::Io(format!("{}: {e}", p.display()))),
        None => Ok(out.write_all(bytes)?),
    }
}

fn to_json<T: Serialize>(value: &T) -> Result<Vec<u8>> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    Ok(bytes)
}

fn csv_error(e: csv::Error) -> Error {
    Error::Io(e.to_string())
}

fn enumerate(n: usize, r: Option<usize>, format: Format, out: &mut dyn Write) -> Result<()> {
    if n == 0 {
        return Err(Error::OrderTooSmall { n, min: 1 });
    }
    if let Some(r) = r {
        if r == 0 || r > 2 * n {
            return Err(Error::InvalidMaxSwitches { value: r, max: 2 * n });
        }
    }
    let set = enumerate_candidates(n, r);
    match format {
        Format::Json => {
            let values: Vec<Vec<i8>> = set.iter().map(|s| s.values()).collect();
            out.write_all(&to_json(&values)?)?;
        }
        _ => {
            for s in &set {
                writeln!(out, "{s}")?;
            }
        }
    }
    Ok(())
}

fn count(n: usize, format: Format, out: &mut dyn Write) -> Result<()> {
    if n == 0 {
        return Err(Error::OrderTooSmall { n, min: 1 });
    }
    let formula = count_all_candidates(n);
    let brute = if n <= BRUTE_FORCE_MAX_ORDER {
        Some(plus_part(&brute_force_candidates(n)?).len() as u64)
    } else {
        None
    };
    match format {
        Format::Json => {
            #[derive(Serialize)]
            struct Counts {
                n: usize,
                formula: u64,
                brute_force: Option<u64>,
            }
            out.write_all(&to_json(&Counts { n, formula, brute_force: brute })?)?;
        }
        _ => match brute {
            Some(b) => writeln!(out, "formula: {formula}, brute-force: {b}")?,
            None => writeln!(out, "formula: {formula}, brute-force: skipped (n > {BRUTE_FORCE_MAX_ORDER})")?,
        },
    }
    Ok(())
}

fn build(problem: &Path, dir: &Path, out: &mut dyn Write) -> Result<()> {
    let spec = load(problem)?;
    fs::create_dir_all(dir).map_err(|e| Error::Io(format!("{}: {e}", dir.display())))?;
    let instances = build_all(&spec);
    for inst in &instances {
        let path = dir.join(format!("{}.json", inst.id));
        write_output(Some(&path), out, &to_json(&instance_record(inst))?)?;
    }
    writeln!(out, "wrote {} instances to {}", instances.len(), dir.display())?;
    Ok(())
}

fn infeasible(report: &SolveReport) -> Error {
    let best_residual = report
        .per_instance
        .iter()
        .map(|s| s.constraint_residual)
        .fold(f64::INFINITY, f64::min);
    Error::InfeasibleProblem { best_residual }
}

fn solve(args: &SolveArgs, path: Option<&Path>, out: &mut dyn Write) -> Result<()> {
    let spec = load(&args.problem)?;
    let report = solve_report(&spec, &args.options())?;
    write_output(path, out, &to_json(&report)?)?;
    if report.best.is_none() {
        return Err(infeasible(&report));
    }
    Ok(())
}

/// Trajectory rows `t, x1..xn, u` with the level held on the interval that
/// ends at each sample.
pub fn trajectory_rows(spec: &ProblemSpec, schedule: &SwitchingSchedule) -> Result<Vec<Vec<f64>>> {
    let tr = propagate(&spec.system, &spec.initial_state, schedule, SAMPLES_PER_SEGMENT)?;
    let mut inputs = vec![schedule.levels().first().map_or(0.0, |l| l.as_f64())];
    for level in schedule.levels() {
        inputs.extend(std::iter::repeat_n(level.as_f64(), SAMPLES_PER_SEGMENT));
    }
    Ok(tr
        .sample_times
        .iter()
        .zip(&tr.states)
        .zip(&inputs)
        .map(|((t, x), u)| {
            let mut row = Vec::with_capacity(x.len() + 2);
            row.push(*t);
            row.extend_from_slice(x);
            row.push(*u);
            row
        })
        .collect())
}

fn simulate(problem: &Path, schedule: &Path, path: Option<&Path>, out: &mut dyn Write) -> Result<()> {
    let spec = load(problem)?;
    let text = fs::read_to_string(schedule)
        .map_err(|e| Error::Io(format!("{}: {e}", schedule.display())))?;
    let schedule: SwitchingSchedule = serde_json::from_str(&text)?;
    let rows = trajectory_rows(&spec, &schedule)?;

    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["t".to_string()];
    header.extend((1..=spec.order()).map(|i| format!("x{i}")));
    header.push("u".into());
    w.write_record(&header).map_err(csv_error)?;
    for row in &rows {
        w.write_record(row.iter().map(|v| sig9(*v))).map_err(csv_error)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.to_string()))?;
    write_output(path, out, &bytes)
}

/// Solves `spec` once per time weight.
pub fn table_rows(spec: &ProblemSpec, ks: &[f64], options: &SolverOptions) -> Result<Vec<TableRow>> {
    if ks.is_empty() {
        return Err(Error::DomainError("at least one --k is required".into()));
    }
    ks.iter()
        .map(|&k| {
            let report = solve_time_fuel(&spec.with_time_weight(k)?, options)?;
            let best = report.best.expect("solve_time_fuel returns a solution");
            Ok(TableRow {
                k,
                cost: best.cost,
                final_time: best.final_time,
                on_duration: best.on_duration,
                sparsity: best.sparsity,
                sequence: best.sequence.to_string(),
            })
        })
        .collect()
}

fn table(args: &SolveArgs, ks: &[f64], format: Format, path: Option<&Path>, out: &mut dyn Write) -> Result<()> {
    if ks.is_empty() {
        return Err(Error::DomainError("at least one --k is required".into()));
    }
    let spec = load(&args.problem)?;
    let rows = table_rows(&spec, ks, &args.options())?;
    let bytes = match format {
        Format::Json => to_json(&rows)?,
        Format::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(["k", "J", "t_f", "on", "sparsity", "sequence"])
                .map_err(csv_error)?;
            for r in &rows {
                w.write_record([
                    sig9(r.k),
                    sig9(r.cost),
                    sig9(r.final_time),
                    sig9(r.on_duration),
                    sig9(r.sparsity),
                    r.sequence.clone(),
                ])
                .map_err(csv_error)?;
            }
            w.into_inner().map_err(|e| Error::Io(e.to_string()))?
        }
        Format::Text => {
            let mut s = format!(
                "{:>8} {:>10} {:>10} {:>10} {:>10}  {}\n",
                "k", "J", "t_f", "on", "sparsity", "sequence"
            );
            for r in &rows {
                s.push_str(&format!(
                    "{:>8} {:>10.4} {:>10.4} {:>10.4} {:>10.4}  ({})\n",
                    r.k, r.cost, r.final_time, r.on_duration, r.sparsity, r.sequence
                ));
            }
            s.into_bytes()
        }
    };
    write_output(path, out, &bytes)
}

fn threads_from_env() -> Result<Option<usize>> {
    match std::env::var(THREADS_ENV) {
        Ok(v) if !v.trim().is_empty() => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(Error::DomainError(format!("{THREADS_ENV} must be a positive integer, got {v:?}"))),
        },
        _ => Ok(None),
    }
}

fn execute(command: &Command, out: &mut dyn Write) -> Result<()> {
    match command {
        Command::Enumerate { n, max_switches, format } => enumerate(*n, *max_switches, *format, out),
        Command::Count { n, format } => count(*n, *format, out),
        Command::Build { problem, out: dir } => build(problem, dir, out),
        Command::Solve { args, out: path } => solve(args, path.as_deref(), out),
        Command::Simulate { problem, schedule, csv } => simulate(problem, schedule, csv.as_deref(), out),
        Command::Table { args, k, format, out: path } => table(args, k, *format, path.as_deref(), out),
    }
}

/// Exit code for an error.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::InfeasibleProblem { .. } => 2,
        _ => 1,
    }
}

/// Runs the command line `args` (program name first).
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let text = e.render().to_string();
            let _ = if code == 0 { write!(out, "{text}") } else { write!(err, "{text}") };
            return code;
        }
    };
    let mut buffer = Vec::new();
    let result = threads_from_env()
        .and_then(|threads| with_threads(threads, || execute(&cli.command, &mut buffer)));
    let _ = out.write_all(&buffer);
    match result {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            exit_code(&e)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run_capture(args: &[&str]) -> (i32, String, String) {
        let mut out = Vec::new();
        let mut err = Vec::new();
        let code = run(args.iter().copied(), &mut out, &mut err);
        (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
    }

    #[test]
    fn sig9_rounds_to_nine_digits() {
        assert_eq!(sig9(1.0 / 3.0), "0.333333333");
        assert_eq!(sig9(0.0), "0");
        assert_eq!(sig9(-2.5), "-2.5");
        assert_eq!(sig9(123456789.87), "123456790");
    }

    #[test]
    fn count_and_enumerate() {
        let (code, out, _) = run_capture(&["timefuel", "count", "--n", "4"]);
        assert_eq!(code, 0);
        assert_eq!(out.trim(), "formula: 23, brute-force: 23");
        let (code, out, _) = run_capture(&["timefuel", "enumerate", "--n", "2"]);
        assert_eq!(code, 0);
        assert!(out.lines().any(|l| l == "-1,0,1"));
    }

    #[test]
    fn usage_errors_exit_one() {
        assert_eq!(run_capture(&["timefuel"]).0, 1);
        assert_eq!(run_capture(&["timefuel", "count"]).0, 1);
        assert_eq!(run_capture(&["timefuel", "enumerate", "--n", "2", "--max-switches", "9"]).0, 1);
        assert_eq!(run_capture(&["timefuel", "--help"]).0, 0);
    }
}
