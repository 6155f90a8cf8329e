//! Verification manifests.
//!
//! ```text
//! [case ex1]
//! problem = ex1.problem
//! check = node_error(t) 0 1e-7 | straight line is the candidate minimizer
//! ```
//!
//! A check passes when `|got - expected| <= tol`. Quantities come from
//! solving the case's problem or from the `(A, B)` consistency search.

use std::path::{Path, PathBuf};

use thiserror::Error;

use super::problem::{parse_problem, ProblemFile};
use crate::expr::{Binding, Expr};
use crate::solver::{consistency_solve, solve, solve_isoperimetric, ConsistencyOutcome, SolveReport, SolverConfig};
use crate::variational::Trajectory;

pub const BUNDLED_MANIFEST: &str = include_str!("../../problems/manifest.ini");

pub const BUNDLED_PROBLEMS: &[(&str, &str)] = &[
    ("ex1.problem", include_str!("../../problems/ex1.problem")),
    ("ex1_q.problem", include_str!("../../problems/ex1_q.problem")),
    ("free_end.problem", include_str!("../../problems/free_end.problem")),
    ("product_3pt.problem", include_str!("../../problems/product_3pt.problem")),
    ("product_R.problem", include_str!("../../problems/product_R.problem")),
    ("iso_M2.problem", include_str!("../../problems/iso_M2.problem")),
    ("iso_M3.problem", include_str!("../../problems/iso_M3.problem")),
    ("iso_M4.problem", include_str!("../../problems/iso_M4.problem")),
];

#[derive(Debug, Clone, PartialEq, Error)]
#[error("manifest line {line}: {message}")]
pub struct ManifestError {
    pub line: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub quantity: String,
    pub expected: f64,
    pub tol: f64,
    pub note: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerifyCase {
    pub id: String,
    pub problem: String,
    pub checks: Vec<Check>,
}

pub fn parse_manifest(text: &str) -> Result<Vec<VerifyCase>, ManifestError> {
    let mut cases: Vec<VerifyCase> = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let fail = |message: String| ManifestError { line, message };
        let s = raw.trim();
        if s.is_empty() || s.starts_with('#') {
            continue;
        }
        if let Some(header) = s.strip_prefix('[') {
            let id = header
                .strip_suffix(']')
                .and_then(|h| h.trim().strip_prefix("case "))
                .map(str::trim)
                .filter(|id| !id.is_empty())
                .ok_or_else(|| fail(format!("expected `[case <id>]`, got `{s}`")))?;
            if cases.iter().any(|c| c.id == id) {
                return Err(fail(format!("duplicate case `{id}`")));
            }
            cases.push(VerifyCase { id: id.to_string(), problem: String::new(), checks: Vec::new() });
            continue;
        }
        let case = cases.last_mut().ok_or_else(|| fail("entry outside of a case".into()))?;
        let (key, value) = s.split_once('=').ok_or_else(|| fail("expected `key = value`".into()))?;
        match key.trim() {
            "problem" if case.problem.is_empty() => case.problem = value.trim().to_string(),
            "problem" => return Err(fail("duplicate `problem`".into())),
            "check" => {
                let (spec, note) = value.split_once('|').ok_or_else(|| fail("check needs `| <note>`".into()))?;
                let note = note.trim();
                if note.is_empty() {
                    return Err(fail("empty note".into()));
                }
                let mut parts = spec.trim().rsplitn(3, char::is_whitespace);
                let (Some(tol), Some(expected), Some(quantity)) = (parts.next(), parts.next(), parts.next()) else {
                    return Err(fail("check needs `<quantity> <expected> <tol>`".into()));
                };
                let num = |s: &str| s.parse::<f64>().map_err(|_| fail(format!("not a number: `{s}`")));
                let (expected, tol) = (num(expected)?, num(tol)?);
                if !(tol >= 0.0) {
                    return Err(fail(format!("negative tolerance {tol}")));
                }
                case.checks.push(Check { quantity: quantity.trim().to_string(), expected, tol, note: note.to_string() });
            }
            other => return Err(fail(format!("unknown key `{other}`"))),
        }
    }
    if let Some(c) = cases.iter().find(|c| c.problem.is_empty() || c.checks.is_empty()) {
        return Err(ManifestError { line: 0, message: format!("case `{}` needs a problem and at least one check", c.id) });
    }
    Ok(cases)
}

/// Where problem files named in a manifest are looked up.
#[derive(Debug, Clone)]
pub enum ProblemSource {
    Bundled,
    /// Relative to this directory first, then the bundled set.
    Dir(PathBuf),
}

impl ProblemSource {
    pub fn load(&self, name: &str) -> Result<String, String> {
        if let ProblemSource::Dir(dir) = self {
            let path = dir.join(name);
            if path.exists() {
                return std::fs::read_to_string(&path).map_err(|e| format!("{}: {e}", path.display()));
            }
        }
        if Path::new(name).is_absolute() {
            return std::fs::read_to_string(name).map_err(|e| format!("{name}: {e}"));
        }
        BUNDLED_PROBLEMS
            .iter()
            .find(|(n, _)| *n == name)
            .map(|(_, text)| text.to_string())
            .ok_or_else(|| format!("problem file `{name}` not found"))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckOutcome {
    pub case: String,
    pub check: Check,
    pub got: f64,
    pub passed: bool,
    /// Set when the quantity could not be computed.
    pub error: Option<String>,
}

struct Outputs<'a> {
    file: &'a ProblemFile,
    config: SolverConfig,
    solved: Option<Result<SolveReport, String>>,
    consistency: Option<Result<ConsistencyOutcome, String>>,
}

impl Outputs<'_> {
    fn report(&mut self) -> Result<&SolveReport, String> {
        let (p, cfg) = (&self.file.problem, &self.config);
        self.solved
            .get_or_insert_with(|| {
                if p.constraint().is_some() { solve_isoperimetric(p, cfg) } else { solve(p, cfg) }.map_err(|e| e.to_string())
            })
            .as_ref()
            .map_err(Clone::clone)
    }

    fn consistency(&mut self) -> Result<&ConsistencyOutcome, String> {
        let (p, cfg) = (&self.file.problem, &self.config);
        self.consistency
            .get_or_insert_with(|| consistency_solve(p, cfg).map_err(|e| e.to_string()))
            .as_ref()
            .map_err(Clone::clone)
    }
}

fn node_error(y: &Trajectory, closed_form: &str) -> Result<f64, String> {
    let f = Expr::parse(closed_form).map_err(|e| e.to_string())?;
    let mut worst: f64 = 0.0;
    for (_, t, v) in y.iter() {
        let want = f.eval(&Binding::new(t, 0.0, 0.0)).map_err(|e| e.to_string())?;
        worst = worst.max((v - want).abs());
    }
    Ok(worst)
}

fn flag(b: bool) -> f64 {
    if b { 1.0 } else { 0.0 }
}

fn quantity(out: &mut Outputs<'_>, name: &str) -> Result<f64, String> {
    let missing = |what: &str| format!("`{name}` is not available: {what}");
    if let Some(arg) = name.strip_prefix("node_error(").and_then(|s| s.strip_suffix(')')) {
        return node_error(&out.report()?.trajectory, arg);
    }
    if let Some(arg) = name.strip_prefix("closest_node_error(").and_then(|s| s.strip_suffix(')')) {
        let c = out.consistency()?.closest.as_ref().ok_or_else(|| missing("no iterate"))?;
        return node_error(&c.trajectory, arg);
    }
    Ok(match name {
        "j" => out.report()?.j,
        "j_delta" => out.report()?.j_delta,
        "j_nabla" => out.report()?.j_nabla,
        "converged" => flag(out.report()?.converged()),
        "lambda" => out.report()?.lambda.ok_or_else(|| missing("unconstrained"))?,
        "lambda0" => out.report()?.lambda0.ok_or_else(|| missing("unconstrained"))?,
        "abnormal" => flag(out.report()?.abnormal),
        "k_error" => {
            let k = out.file.problem.constraint().ok_or_else(|| missing("unconstrained"))?.k;
            (out.report()?.k_value.ok_or_else(|| missing("unconstrained"))? - k).abs()
        }
        "el_defect" => {
            let r = out.report()?;
            r.el_defect_1.max(r.el_defect_2)
        }
        "iso_defect" => {
            let r = out.report()?;
            r.iso_defect_1.ok_or_else(|| missing("unconstrained"))?.max(r.iso_defect_2.unwrap_or(0.0))
        }
        "bc_residual_a" => out.report()?.bc_residual_a.ok_or_else(|| missing("a is fixed"))?.abs(),
        "bc_residual_b" => out.report()?.bc_residual_b.ok_or_else(|| missing("b is fixed"))?.abs(),
        "max_abs_y" => out.report()?.trajectory.values().iter().fold(0.0, |m: f64, v| m.max(v.abs())),
        "roots" => out.consistency()?.roots.len() as f64,
        "root_a" | "root_b" => {
            let root = out.consistency()?.roots.first().ok_or_else(|| missing("no root"))?;
            if name == "root_a" { root.a } else { root.b }
        }
        "closest_a" | "closest_b" => {
            let c = out.consistency()?.closest.as_ref().ok_or_else(|| missing("no iterate"))?;
            if name == "closest_a" { c.a } else { c.b }
        }
        _ => return Err(format!("unknown quantity `{name}`")),
    })
}

/// Runs one case. `seed` overrides the problem file's seed when given.
pub fn run_case(case: &VerifyCase, source: &ProblemSource, seed: Option<u64>) -> Vec<CheckOutcome> {
    let fail_all = |message: String| {
        case.checks
            .iter()
            .map(|c| CheckOutcome { case: case.id.clone(), check: c.clone(), got: f64::NAN, passed: false, error: Some(message.clone()) })
            .collect()
    };
    let file = match source.load(&case.problem).and_then(|text| parse_problem(&text).map_err(|e| e.to_string())) {
        Ok(f) => f,
        Err(e) => return fail_all(e),
    };
    let mut config = file.config.clone();
    if let Some(s) = seed {
        if !file.seed_set {
            config.seed = s;
        }
    }
    let mut out = Outputs { file: &file, config, solved: None, consistency: None };
    case.checks
        .iter()
        .map(|c| {
            let (got, error) = match quantity(&mut out, &c.quantity) {
                Ok(v) => (v, None),
                Err(e) => (f64::NAN, Some(e)),
            };
            CheckOutcome {
                case: case.id.clone(),
                check: c.clone(),
                got,
                passed: (got - c.expected).abs() <= c.tol,
                error,
            }
        })
        .collect()
}
