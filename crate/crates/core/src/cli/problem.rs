//! Problem files.
//!
//! ```text
//! [timescale]
//! scale = explicit [0, 0.5, 1] | uniform a b n | hz a b h | qscale q kmin kmax
//!
//! [lagrangian]
//! delta = v^2
//! nabla = v^2 + v
//!
//! [boundary]
//! a = fixed:0
//! b = free
//!
//! [constraint]      # optional
//! delta = t*v
//! nabla = 1/3
//! k = 1
//!
//! [solver]          # optional, any subset
//! grad_tol = 1e-9
//! ```
//!
//! `#` and `;` start a comment that runs to the end of the line. Every section and key is
//! checked; anything unknown, duplicated or missing is an error.

use std::collections::BTreeMap;
use std::sync::Arc;

use thiserror::Error;

use crate::solver::SolverConfig;
use crate::timescale::TimeScale;
use crate::variational::{Boundary, Constraint, Lagrangian, VariationalProblem};

#[derive(Debug, Clone, PartialEq, Error)]
#[error("line {line}: {message}")]
pub struct ProblemFileError {
    /// 1-based; 0 for errors about the file as a whole.
    pub line: usize,
    pub message: String,
}

fn err(line: usize, message: impl Into<String>) -> ProblemFileError {
    ProblemFileError { line, message: message.into() }
}

const SECTIONS: &[(&str, &[&str])] = &[
    ("timescale", &["scale"]),
    ("lagrangian", &["delta", "nabla"]),
    ("boundary", &["a", "b"]),
    ("constraint", &["delta", "nabla", "k"]),
    (
        "solver",
        &[
            "grad_tol",
            "constraint_tol",
            "max_iter",
            "multistarts",
            "seed",
            "penalty_growth",
            "consistency_starts",
            "search_box",
        ],
    ),
];

#[derive(Debug, Clone)]
pub struct ProblemFile {
    pub problem: VariationalProblem,
    /// Solver settings with the file's `[solver]` overrides applied.
    pub config: SolverConfig,
    /// Whether the file set `seed` explicitly.
    pub seed_set: bool,
}

type Entries = BTreeMap<String, BTreeMap<String, (usize, String)>>;

fn split_sections(text: &str) -> Result<Entries, ProblemFileError> {
    let mut entries: Entries = BTreeMap::new();
    let mut current: Option<String> = None;
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.split(['#', ';']).next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('[') {
            let name = rest
                .strip_suffix(']')
                .ok_or_else(|| err(line_no, "unterminated section header"))?
                .trim();
            if !SECTIONS.iter().any(|(s, _)| *s == name) {
                return Err(err(line_no, format!("unknown section [{name}]")));
            }
            if entries.contains_key(name) {
                return Err(err(line_no, format!("duplicate section [{name}]")));
            }
            entries.insert(name.to_string(), BTreeMap::new());
            current = Some(name.to_string());
            continue;
        }
        let section = current.as_ref().ok_or_else(|| err(line_no, "key outside of any section"))?;
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| err(line_no, "expected `key = value`"))?;
        let (key, value) = (key.trim(), value.trim());
        let allowed = SECTIONS.iter().find(|(s, _)| s == section).map(|(_, k)| *k).unwrap_or(&[]);
        if !allowed.contains(&key) {
            return Err(err(line_no, format!("unknown key `{key}` in [{section}]")));
        }
        if value.is_empty() {
            return Err(err(line_no, format!("empty value for `{key}`")));
        }
        let map = entries.get_mut(section).expect("section registered");
        if map.insert(key.to_string(), (line_no, value.to_string())).is_some() {
            return Err(err(line_no, format!("duplicate key `{key}` in [{section}]")));
        }
    }
    Ok(entries)
}

fn number(line: usize, s: &str) -> Result<f64, ProblemFileError> {
    let v: f64 = s.parse().map_err(|_| err(line, format!("not a number: `{s}`")))?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(err(line, format!("not a finite number: `{s}`")))
    }
}

fn integer<T: std::str::FromStr>(line: usize, s: &str) -> Result<T, ProblemFileError> {
    s.parse().map_err(|_| err(line, format!("not an integer: `{s}`")))
}

/// Parses the right-hand side of `scale = ...`.
pub fn parse_scale(line: usize, value: &str) -> Result<TimeScale, ProblemFileError> {
    let (kind, rest) = value.split_once(char::is_whitespace).unwrap_or((value, ""));
    let args: Vec<&str> = rest.split(|c: char| c.is_whitespace() || c == ',').filter(|s| !s.is_empty()).collect();
    let arity = |n: usize| {
        if args.len() == n {
            Ok(())
        } else {
            Err(err(line, format!("`{kind}` takes {n} arguments, got {}", args.len())))
        }
    };
    let scale = match kind {
        "explicit" => {
            let inner = rest
                .trim()
                .strip_prefix('[')
                .and_then(|s| s.strip_suffix(']'))
                .ok_or_else(|| err(line, "explicit points must be written as [p0, p1, ...]"))?;
            let points = inner
                .split(',')
                .map(|s| number(line, s.trim()))
                .collect::<Result<Vec<_>, _>>()?;
            TimeScale::from_points(points)
        }
        "uniform" => {
            arity(3)?;
            TimeScale::uniform(number(line, args[0])?, number(line, args[1])?, integer(line, args[2])?)
        }
        "hz" => {
            arity(3)?;
            TimeScale::h_integers(number(line, args[0])?, number(line, args[1])?, number(line, args[2])?)
        }
        "qscale" => {
            arity(3)?;
            TimeScale::q_scale(number(line, args[0])?, integer(line, args[1])?, integer(line, args[2])?)
        }
        other => return Err(err(line, format!("unknown time scale kind `{other}`"))),
    };
    scale.map_err(|e| err(line, e.to_string()))
}

fn parse_boundary(line: usize, value: &str) -> Result<Boundary, ProblemFileError> {
    if value == "free" {
        return Ok(Boundary::Free);
    }
    let v = value
        .strip_prefix("fixed:")
        .ok_or_else(|| err(line, format!("boundary must be `fixed:<value>` or `free`, got `{value}`")))?;
    Ok(Boundary::Fixed(number(line, v.trim())?))
}

fn parse_lagrangian(line: usize, value: &str) -> Result<Lagrangian, ProblemFileError> {
    Lagrangian::parse(value).map_err(|e| err(line, format!("{e} in `{value}`")))
}

pub fn parse_problem(text: &str) -> Result<ProblemFile, ProblemFileError> {
    let entries = split_sections(text)?;
    let section = |name: &str| entries.get(name).ok_or_else(|| err(0, format!("missing section [{name}]")));
    let field = |name: &str, key: &str| -> Result<(usize, &str), ProblemFileError> {
        section(name)?
            .get(key)
            .map(|(l, v)| (*l, v.as_str()))
            .ok_or_else(|| err(0, format!("missing key `{key}` in [{name}]")))
    };

    let (l, v) = field("timescale", "scale")?;
    let scale = parse_scale(l, v)?;
    let (l, v) = field("lagrangian", "delta")?;
    let l_delta = parse_lagrangian(l, v)?;
    let (l, v) = field("lagrangian", "nabla")?;
    let l_nabla = parse_lagrangian(l, v)?;
    let (l, v) = field("boundary", "a")?;
    let bc_a = parse_boundary(l, v)?;
    let (l, v) = field("boundary", "b")?;
    let bc_b = parse_boundary(l, v)?;
    let mut problem = VariationalProblem::new(Arc::new(scale), l_delta, l_nabla, bc_a, bc_b)
        .map_err(|e| err(0, e.to_string()))?;

    if entries.contains_key("constraint") {
        let (l, v) = field("constraint", "delta")?;
        let k_delta = parse_lagrangian(l, v)?;
        let (l, v) = field("constraint", "nabla")?;
        let k_nabla = parse_lagrangian(l, v)?;
        let (l, v) = field("constraint", "k")?;
        let k = number(l, v)?;
        problem = problem
            .with_constraint(Constraint { k_delta, k_nabla, k })
            .map_err(|e| err(l, e.to_string()))?;
    }

    let mut config = SolverConfig::default();
    let mut seed_set = false;
    if let Some(solver) = entries.get("solver") {
        for (key, (l, v)) in solver {
            let l = *l;
            match key.as_str() {
                "grad_tol" => config.grad_tol = number(l, v)?,
                "constraint_tol" => config.constraint_tol = number(l, v)?,
                "max_iter" => config.max_iter = integer(l, v)?,
                "multistarts" => config.multistarts = integer(l, v)?,
                "seed" => {
                    config.seed = integer(l, v)?;
                    seed_set = true;
                }
                "penalty_growth" => config.penalty_growth = number(l, v)?,
                "consistency_starts" => config.consistency_starts = integer(l, v)?,
                "search_box" => config.search_box = number(l, v)?,
                _ => unreachable!("keys are checked while splitting"),
            }
        }
        config.validate().map_err(|e| err(0, e.to_string()))?;
    }
    Ok(ProblemFile { problem, config, seed_set })
}
