//! The `tsvar` command line.
//!
//! Exit codes: 0 success, 1 verification failure, 2 solver did not converge,
//! 3 constraint infeasible, 64 usage or parse error, 65 trajectory does not
//! match the scale, 66 residual form not applicable, 70 evaluation error,
//! 74 I/O error.

pub mod manifest;
pub mod problem;

use std::ffi::OsString;
use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};

use crate::fmt::g12;
use crate::solver::{
    consistency_solve, solve, solve_isoperimetric, ConsistencyOutcome, SolveError, SolveReport, DEFAULT_SEED,
};
use crate::variational::{
    el_residual_1, el_residual_2, eval_j_delta, eval_j_nabla, iso_natural_bc, iso_residual, natural_bc_residual_a,
    natural_bc_residual_b, ResidualForm, Trajectory, VariationalError, VariationalProblem,
};
use manifest::{parse_manifest, run_case, CheckOutcome, ProblemSource, BUNDLED_MANIFEST};
use problem::{parse_problem, ProblemFile};

pub const EXIT_VERIFY_FAILED: i32 = 1;
pub const EXIT_USAGE: i32 = 64;
pub const EXIT_SCALE_MISMATCH: i32 = 65;
pub const EXIT_NOT_APPLICABLE: i32 = 66;
pub const EXIT_EVAL: i32 = 70;
pub const EXIT_IO: i32 = 74;

#[derive(Debug, Parser)]
#[command(name = "tsvar", version, about = "Delta-nabla variational problems on finite time scales")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum FormArg {
    El1,
    El2,
    Iso1,
    Iso2,
    Nbc,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Print J_delta, J_nabla and J along a trajectory.
    Eval {
        #[arg(long)]
        problem: PathBuf,
        #[arg(long)]
        trajectory: PathBuf,
    },
    /// Euler–Lagrange, isoperimetric or natural boundary residual along a trajectory.
    Residual {
        #[arg(long)]
        problem: PathBuf,
        #[arg(long)]
        trajectory: PathBuf,
        #[arg(long, value_enum)]
        form: FormArg,
        #[arg(long, allow_hyphen_values = true)]
        lambda0: Option<f64>,
        #[arg(long, allow_hyphen_values = true)]
        lambda: Option<f64>,
        /// Write the residual CSV here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Extremize the functional and write report.txt and trajectory.csv.
    Solve {
        #[arg(long)]
        problem: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Run the bundled example suite (or another manifest).
    Verify {
        #[arg(long = "case")]
        case: Option<String>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        manifest: Option<PathBuf>,
    },
}

#[derive(Debug)]
struct Failure {
    code: i32,
    message: String,
}

fn fail(code: i32, message: impl Into<String>) -> Failure {
    Failure { code, message: message.into() }
}

impl From<VariationalError> for Failure {
    fn from(e: VariationalError) -> Self {
        let code = match e {
            VariationalError::ScaleMismatch | VariationalError::PartialTrajectory => EXIT_SCALE_MISMATCH,
            VariationalError::NotApplicable(_)
            | VariationalError::NoConstraint
            | VariationalError::ZeroMultipliers
            | VariationalError::EndpointNotFree(_) => EXIT_NOT_APPLICABLE,
            _ => EXIT_EVAL,
        };
        fail(code, e.to_string())
    }
}

impl From<SolveError> for Failure {
    fn from(e: SolveError) -> Self {
        match e {
            SolveError::Variational(v) => v.into(),
            SolveError::NotApplicable(m) => fail(EXIT_NOT_APPLICABLE, m),
            SolveError::InvalidConfig(m) => fail(EXIT_USAGE, m),
        }
    }
}

/// Runs the command line and returns the process exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let text = e.render().to_string();
            return if e.use_stderr() {
                let _ = write!(err, "{text}");
                EXIT_USAGE
            } else {
                let _ = write!(out, "{text}");
                0
            };
        }
    };
    let result = match cli.command {
        Command::Eval { problem, trajectory } => cmd_eval(&problem, &trajectory, out),
        Command::Residual { problem, trajectory, form, lambda0, lambda, out: path } => {
            cmd_residual(&problem, &trajectory, form, lambda0, lambda, path.as_deref(), out)
        }
        Command::Solve { problem, seed, out: dir } => cmd_solve(&problem, seed, &dir, out),
        Command::Verify { case, seed, manifest } => cmd_verify(case.as_deref(), seed, manifest.as_deref(), out),
    };
    match result {
        Ok(code) => code,
        Err(f) => {
            let _ = writeln!(err, "error: {}", f.message);
            f.code
        }
    }
}

fn read(path: &Path) -> Result<String, Failure> {
    std::fs::read_to_string(path).map_err(|e| fail(EXIT_IO, format!("{}: {e}", path.display())))
}

fn load_problem(path: &Path) -> Result<ProblemFile, Failure> {
    parse_problem(&read(path)?).map_err(|e| fail(EXIT_USAGE, format!("{}: {e}", path.display())))
}

/// Reads a two-column `t,<name>` CSV whose `t` column must reproduce the
/// problem's scale exactly.
pub fn read_trajectory(p: &VariationalProblem, text: &str) -> Result<Trajectory, String> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines.next().ok_or("empty trajectory file")?;
    if header.split(',').map(str::trim).next() != Some("t") || header.split(',').count() != 2 {
        return Err(format!("expected a `t,<value>` header, got `{header}`"));
    }
    let mut ts = Vec::new();
    let mut ys = Vec::new();
    for (i, line) in lines.enumerate() {
        let (t, y) = line.split_once(',').ok_or_else(|| format!("row {}: expected two columns", i + 1))?;
        let num = |s: &str| s.trim().parse::<f64>().map_err(|_| format!("row {}: not a number: `{}`", i + 1, s.trim()));
        ts.push(num(t)?);
        ys.push(num(y)?);
    }
    if ts.as_slice() != p.scale().points() {
        return Err(SCALE_MISMATCH.into());
    }
    p.trajectory(ys).map_err(|e| e.to_string())
}

const SCALE_MISMATCH: &str = "trajectory points do not match the time scale";

fn load_trajectory(p: &VariationalProblem, path: &Path) -> Result<Trajectory, Failure> {
    read_trajectory(p, &read(path)?).map_err(|e| {
        let code = if e == SCALE_MISMATCH { EXIT_SCALE_MISMATCH } else { EXIT_USAGE };
        fail(code, format!("{}: {e}", path.display()))
    })
}

fn cmd_eval(problem: &Path, trajectory: &Path, out: &mut dyn Write) -> Result<i32, Failure> {
    let file = load_problem(problem)?;
    let p = &file.problem;
    let y = load_trajectory(p, trajectory)?;
    let jd = eval_j_delta(p, &y)?;
    let jn = eval_j_nabla(p, &y)?;
    emit(out, &format!("J_delta={} J_nabla={} J={}\n", g12(jd), g12(jn), g12(jd * jn)))?;
    Ok(0)
}

fn emit(out: &mut dyn Write, text: &str) -> Result<(), Failure> {
    out.write_all(text.as_bytes()).map_err(|e| fail(EXIT_IO, e.to_string()))
}

fn cmd_residual(
    problem: &Path,
    trajectory: &Path,
    form: FormArg,
    lambda0: Option<f64>,
    lambda: Option<f64>,
    csv_path: Option<&Path>,
    out: &mut dyn Write,
) -> Result<i32, Failure> {
    let file = load_problem(problem)?;
    let p = &file.problem;
    let y = load_trajectory(p, trajectory)?;
    let multipliers = || match (lambda0, lambda) {
        (Some(a), Some(b)) => Ok((a, b)),
        _ => Err(fail(EXIT_NOT_APPLICABLE, "isoperimetric forms need --lambda0 and --lambda")),
    };
    let (csv, defect) = match form {
        FormArg::El1 | FormArg::El2 => {
            let r = if form == FormArg::El1 { el_residual_1(p, &y)? } else { el_residual_2(p, &y)? };
            (r.to_csv(), r.defect)
        }
        FormArg::Iso1 | FormArg::Iso2 => {
            if p.constraint().is_none() {
                return Err(fail(EXIT_NOT_APPLICABLE, "problem has no [constraint] section"));
            }
            let (l0, l) = multipliers()?;
            let which = if form == FormArg::Iso1 { ResidualForm::Iso1 } else { ResidualForm::Iso2 };
            let r = iso_residual(p, &y, l0, l, which)?;
            (r.to_csv(), r.defect)
        }
        FormArg::Nbc => {
            if !p.bc_a().is_free() && !p.bc_b().is_free() {
                return Err(fail(EXIT_NOT_APPLICABLE, "nbc needs a free endpoint"));
            }
            let (at_a, at_b) = if p.constraint().is_some() && (lambda0.is_some() || lambda.is_some()) {
                let (l0, l) = multipliers()?;
                iso_natural_bc(p, &y, l0, l)?
            } else {
                let a = if p.bc_a().is_free() { natural_bc_residual_a(p, &y)? } else { 0.0 };
                let b = if p.bc_b().is_free() { natural_bc_residual_b(p, &y)? } else { 0.0 };
                (a, b)
            };
            let ts = p.scale();
            let mut csv = String::from("t,residual\n");
            let mut defect: f64 = 0.0;
            for (free, t, r) in [(p.bc_a().is_free(), ts.a(), at_a), (p.bc_b().is_free(), ts.b(), at_b)] {
                if free {
                    let _ = writeln!(csv, "{},{}", crate::fmt::g17(t), crate::fmt::g17(r));
                    defect = defect.max(r.abs());
                }
            }
            (csv, defect)
        }
    };
    match csv_path {
        Some(path) => std::fs::write(path, csv).map_err(|e| fail(EXIT_IO, format!("{}: {e}", path.display())))?,
        None => emit(out, &csv)?,
    }
    emit(out, &format!("defect={}\n", g12(defect)))?;
    Ok(0)
}

/// `--seed`, then the problem file, then `TSVAR_SEED`, then the default.
fn resolve_seed(flag: Option<u64>, file: &ProblemFile) -> Result<u64, Failure> {
    if let Some(s) = flag {
        return Ok(s);
    }
    if file.seed_set {
        return Ok(file.config.seed);
    }
    env_seed().map(|s| s.unwrap_or(DEFAULT_SEED))
}

fn env_seed() -> Result<Option<u64>, Failure> {
    match std::env::var("TSVAR_SEED") {
        Ok(v) => v
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| fail(EXIT_USAGE, format!("TSVAR_SEED is not an unsigned integer: `{v}`"))),
        Err(_) => Ok(None),
    }
}

fn consistency_text(c: &ConsistencyOutcome) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "consistency_roots={}", c.roots.len());
    for (i, r) in c.roots.iter().enumerate() {
        let _ = writeln!(s, "root_{}_a={}\nroot_{}_b={}\nroot_{}_c={}", i + 1, g12(r.a), i + 1, g12(r.b), i + 1, g12(r.c));
    }
    if let Some(r) = &c.closest {
        let _ = writeln!(
            s,
            "closest_a={}\nclosest_b={}\nclosest_residual={}",
            g12(r.a),
            g12(r.b),
            g12(r.residual_norm)
        );
    }
    s
}

fn outcome_line(r: &SolveReport, c: Option<&ConsistencyOutcome>) -> String {
    let mut line = format!("status={} J={}", r.status.as_str(), g12(r.j));
    if let Some(l) = r.lambda {
        let _ = write!(line, " lambda0={} lambda={}", g12(r.lambda0.unwrap_or(1.0)), g12(l));
    }
    if r.abnormal {
        line.push_str(" abnormal=true");
    }
    if r.extension {
        line.push_str(" extension=true");
    }
    if let Some(c) = c {
        match c.roots.as_slice() {
            [] => line.push_str("; no self-consistent extremal found"),
            roots => {
                let _ = write!(line, "; {} self-consistent root(s)", roots.len());
                for root in roots {
                    let _ = write!(line, " (A={}, B={})", g12(root.a), g12(root.b));
                }
            }
        }
    }
    line.push('\n');
    line
}

fn cmd_solve(problem: &Path, seed: Option<u64>, dir: &Path, out: &mut dyn Write) -> Result<i32, Failure> {
    let file = load_problem(problem)?;
    let mut cfg = file.config.clone();
    cfg.seed = resolve_seed(seed, &file)?;
    let p = &file.problem;
    let report = if p.constraint().is_some() { solve_isoperimetric(p, &cfg)? } else { solve(p, &cfg)? };
    let consistency = if p.constraint().is_none() { consistency_solve(p, &cfg).ok() } else { None };

    let mut text = report.to_key_value();
    if let Some(c) = &consistency {
        text.push_str(&consistency_text(c));
    }
    let io = |e: std::io::Error| fail(EXIT_IO, format!("{}: {e}", dir.display()));
    std::fs::create_dir_all(dir).map_err(io)?;
    std::fs::write(dir.join("report.txt"), text).map_err(io)?;
    std::fs::write(dir.join("trajectory.csv"), report.trajectory.to_csv()).map_err(io)?;
    emit(out, &outcome_line(&report, consistency.as_ref()))?;
    Ok(report.status.exit_code())
}

fn cmd_verify(filter: Option<&str>, seed: Option<u64>, manifest: Option<&Path>, out: &mut dyn Write) -> Result<i32, Failure> {
    let (text, source) = match manifest {
        Some(path) => {
            let dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
            (read(path)?, ProblemSource::Dir(dir))
        }
        None => (BUNDLED_MANIFEST.to_string(), ProblemSource::Bundled),
    };
    let cases = parse_manifest(&text).map_err(|e| fail(EXIT_USAGE, e.to_string()))?;
    let selected: Vec<_> = cases.iter().filter(|c| filter.is_none_or(|f| c.id == f)).collect();
    if selected.is_empty() {
        return Err(fail(EXIT_USAGE, format!("no case named `{}`", filter.unwrap_or(""))));
    }
    let seed = match seed {
        Some(s) => Some(s),
        None => env_seed()?,
    };
    let outcomes: Vec<CheckOutcome> = selected.iter().flat_map(|c| run_case(c, &source, seed)).collect();
    emit(out, &verify_table(&outcomes))?;
    let failed_cases = selected
        .iter()
        .filter(|c| outcomes.iter().any(|o| o.case == c.id && !o.passed))
        .count();
    emit(out, &format!("{} of {} cases passed\n", selected.len() - failed_cases, selected.len()))?;
    Ok(if failed_cases == 0 { 0 } else { EXIT_VERIFY_FAILED })
}

fn verify_table(outcomes: &[CheckOutcome]) -> String {
    let rows: Vec<[String; 7]> = outcomes
        .iter()
        .map(|o| {
            let note = match &o.error {
                Some(e) => format!("{} [error: {e}]", o.check.note),
                None => o.check.note.clone(),
            };
            [
                o.case.clone(),
                o.check.quantity.clone(),
                g12(o.check.expected),
                g12(o.got),
                g12(o.check.tol),
                if o.passed { "PASS" } else { "FAIL" }.to_string(),
                note,
            ]
        })
        .collect();
    let header = ["case", "quantity", "expected", "got", "tol", "result", "provenance"].map(String::from);
    let mut widths = [0usize; 6];
    for row in std::iter::once(&header).chain(&rows) {
        for (w, cell) in widths.iter_mut().zip(row.iter()) {
            *w = (*w).max(cell.chars().count());
        }
    }
    let mut s = String::new();
    for row in std::iter::once(&header).chain(&rows) {
        for (w, cell) in widths.iter().zip(row.iter()) {
            let _ = write!(s, "{cell:<w$}  ");
        }
        let _ = writeln!(s, "{}", row[6]);
    }
    s
}
