//! Direct extremization of the discretized functional.
//!
//! The unknowns are the node values that are not pinned by a boundary
//! condition. `J` is a smooth function of them and its gradient is assembled
//! exactly from the symbolic partials, so stationarity of the discrete problem
//! can be driven to roundoff and the Euler–Lagrange residuals checked as a
//! consequence rather than imposed.

mod bfgs;
mod consistency;
mod iso;
mod linalg;
mod probe;

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::fmt::g12;
use crate::variational::{
    pair_gradient, pair_nbc, residual_1, residual_2, defect_and_mean, Boundary, Trajectory,
    VariationalError, VariationalProblem,
};

pub use consistency::{consistency_solve, ConsistencyOutcome, ConsistencyRoot};
pub use iso::solve_isoperimetric;
pub use probe::{probe_extremal_type, ExtremalType};

use bfgs::{l1, minimize, BfgsOptions, BfgsResult};

/// Default seed when none is given on the command line or in `TSVAR_SEED`.
pub const DEFAULT_SEED: u64 = 20_100_607;

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    /// Stationarity tolerance on `‖∇J‖₁ / (1 + |J|)`.
    pub grad_tol: f64,
    /// Feasibility tolerance on `|K(y) - k|`.
    pub constraint_tol: f64,
    pub max_iter: usize,
    pub multistarts: usize,
    pub seed: u64,
    /// Factor applied to the penalty parameter when feasibility stalls.
    pub penalty_growth: f64,
    /// Number of seeded starts for the `(A, B)` root search.
    pub consistency_starts: usize,
    /// Half-width of the `(A, B)` search box.
    pub search_box: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            grad_tol: 1e-9,
            constraint_tol: 1e-8,
            max_iter: 10_000,
            multistarts: 8,
            seed: DEFAULT_SEED,
            penalty_growth: 10.0,
            consistency_starts: 64,
            search_box: 10.0,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<(), SolveError> {
        let positive = self.grad_tol > 0.0
            && self.constraint_tol > 0.0
            && self.max_iter > 0
            && self.multistarts > 0
            && self.penalty_growth > 1.0
            && self.consistency_starts > 0
            && self.search_box > 0.0;
        if positive && self.grad_tol.is_finite() && self.search_box.is_finite() {
            Ok(())
        } else {
            Err(SolveError::InvalidConfig(format!("{self:?}")))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SolveError {
    #[error(transparent)]
    Variational(#[from] VariationalError),
    #[error("{0}")]
    NotApplicable(String),
    #[error("invalid solver configuration: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Converged,
    NotConverged,
    Infeasible,
}

impl SolveStatus {
    pub fn exit_code(self) -> i32 {
        match self {
            SolveStatus::Converged => 0,
            SolveStatus::NotConverged => 2,
            SolveStatus::Infeasible => 3,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            SolveStatus::Converged => "converged",
            SolveStatus::NotConverged => "not_converged",
            SolveStatus::Infeasible => "infeasible",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveReport {
    pub trajectory: Trajectory,
    pub j_delta: f64,
    pub j_nabla: f64,
    pub j: f64,
    pub lambda0: Option<f64>,
    pub lambda: Option<f64>,
    /// `K(y)` when the problem is constrained.
    pub k_value: Option<f64>,
    pub abnormal: bool,
    /// Free endpoints combined with an isoperimetric constraint.
    pub extension: bool,
    pub el_defect_1: f64,
    pub el_defect_2: f64,
    pub iso_defect_1: Option<f64>,
    pub iso_defect_2: Option<f64>,
    pub bc_residual_a: Option<f64>,
    pub bc_residual_b: Option<f64>,
    /// `‖∇‖₁` of `J` (or of `λ₀J - λK`) over the free node values.
    pub grad_norm: f64,
    pub status: SolveStatus,
    pub iterations: usize,
    pub multistart_index: usize,
}

impl SolveReport {
    pub fn converged(&self) -> bool {
        self.status == SolveStatus::Converged
    }

    /// Flat `key=value` text, one entry per line, 12 significant digits.
    pub fn to_key_value(&self) -> String {
        let mut out = String::new();
        let mut put = |k: &str, v: String| {
            let _ = writeln!(out, "{k}={v}");
        };
        put("status", self.status.as_str().into());
        put("converged", self.converged().to_string());
        put("j_delta", g12(self.j_delta));
        put("j_nabla", g12(self.j_nabla));
        put("j", g12(self.j));
        if let Some(v) = self.lambda0 {
            put("lambda0", g12(v));
        }
        if let Some(v) = self.lambda {
            put("lambda", g12(v));
        }
        if let Some(v) = self.k_value {
            put("k_value", g12(v));
        }
        if self.lambda.is_some() {
            put("abnormal", self.abnormal.to_string());
        }
        put("extension", self.extension.to_string());
        put("el_defect_1", g12(self.el_defect_1));
        put("el_defect_2", g12(self.el_defect_2));
        if let Some(v) = self.iso_defect_1 {
            put("iso_defect_1", g12(v));
        }
        if let Some(v) = self.iso_defect_2 {
            put("iso_defect_2", g12(v));
        }
        if let Some(v) = self.bc_residual_a {
            put("bc_residual_a", g12(v));
        }
        if let Some(v) = self.bc_residual_b {
            put("bc_residual_b", g12(v));
        }
        put("grad_norm", g12(self.grad_norm));
        put("iterations", self.iterations.to_string());
        put("multistart_index", self.multistart_index.to_string());
        out
    }
}

/// Which node values are unknowns, and the pinned values of the others.
#[derive(Debug, Clone)]
pub(crate) struct Layout {
    base: Vec<f64>,
    free: Vec<usize>,
}

impl Layout {
    pub fn new(p: &VariationalProblem) -> Self {
        let ts = p.scale();
        let n = ts.len();
        let alpha = p.bc_a().fixed_value();
        let beta = p.bc_b().fixed_value();
        let (a, b) = (ts.a(), ts.b());
        let base = ts
            .points()
            .iter()
            .map(|&t| match (alpha, beta) {
                (Some(al), Some(be)) => al + (be - al) * (t - a) / (b - a),
                (Some(al), None) => al,
                (None, Some(be)) => be,
                (None, None) => 0.0,
            })
            .collect::<Vec<_>>();
        let mut base = base;
        if let Some(al) = alpha {
            base[0] = al;
        }
        if let Some(be) = beta {
            base[n - 1] = be;
        }
        let first = if p.bc_a().is_free() { 0 } else { 1 };
        let last = if p.bc_b().is_free() { n } else { n - 1 };
        Self {
            base,
            free: (first..last).collect(),
        }
    }

    pub fn dim(&self) -> usize {
        self.free.len()
    }

    pub fn nodes(&self, x: &[f64]) -> Vec<f64> {
        let mut y = self.base.clone();
        for (&i, &v) in self.free.iter().zip(x) {
            y[i] = v;
        }
        y
    }

    pub fn project(&self, full: &[f64]) -> Vec<f64> {
        self.free.iter().map(|&i| full[i]).collect()
    }

    /// Start `index`: the interpolant for index 0, otherwise a seeded uniform
    /// perturbation of amplitude `0.5 (|α| + |β| + 1)`.
    pub fn start(&self, p: &VariationalProblem, seed: u64, index: usize) -> Vec<f64> {
        let x = self.project(&self.base);
        if index == 0 {
            return x;
        }
        let value = |bc: Boundary| bc.fixed_value().unwrap_or(0.0).abs();
        let amp = 0.5 * (value(p.bc_a()) + value(p.bc_b()) + 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(index as u64));
        x.into_iter().map(|v| v + amp * rng.gen_range(-1.0..=1.0)).collect()
    }
}

/// `(J, ∇J over free nodes)` at `x`.
pub(crate) fn objective_at(p: &VariationalProblem, layout: &Layout, x: &[f64], sign: f64) -> Option<(f64, Vec<f64>)> {
    let y = layout.nodes(x);
    let e = p.objective().evaluate(p.scale(), &y).ok()?;
    let j = e.j();
    if !j.is_finite() {
        return None;
    }
    let g = layout.project(&pair_gradient(p.scale(), &e));
    Some((sign * j, g.into_iter().map(|v| sign * v).collect()))
}

pub(crate) fn bfgs_options(cfg: &SolverConfig, grad_tol: f64) -> BfgsOptions {
    BfgsOptions {
        grad_tol,
        max_iter: cfg.max_iter,
        polish: true,
        divergence: 1e15,
    }
}

pub(crate) fn run_starts<F>(cfg: &SolverConfig, f: F) -> Vec<BfgsResult>
where
    F: Fn(usize) -> BfgsResult + Sync + Send,
{
    (0..cfg.multistarts).into_par_iter().map(f).collect()
}

/// Lowest objective among converged runs, earliest start on ties.
pub(crate) fn best_converged(runs: &[BfgsResult]) -> Option<usize> {
    runs.iter()
        .enumerate()
        .filter(|(_, r)| r.converged && r.f.is_finite())
        .min_by(|(i, a), (j, b)| a.f.total_cmp(&b.f).then(i.cmp(j)))
        .map(|(i, _)| i)
}

/// Smallest gradient among finite runs, earliest start on ties.
fn best_effort(runs: &[BfgsResult]) -> Option<usize> {
    runs.iter()
        .enumerate()
        .filter(|(_, r)| r.f.is_finite() && !r.diverged)
        .min_by(|(i, a), (j, b)| l1(&a.grad).total_cmp(&l1(&b.grad)).then(i.cmp(j)))
        .map(|(i, _)| i)
}

/// Levenberg–Marquardt on `∇J = 0` with a finite-difference Hessian. Finds
/// saddle-type stationary points that neither minimization nor maximization
/// can reach.
fn stationarity_search(p: &VariationalProblem, layout: &Layout, x0: Vec<f64>, cfg: &SolverConfig) -> Option<BfgsResult> {
    let eval = |x: &[f64]| objective_at(p, layout, x, 1.0);
    let done = |x: &[f64], g: &[f64]| eval(x).is_some_and(|(f, _)| l1(g) <= cfg.grad_tol * (1.0 + f.abs()));
    let lm = linalg::lm_solve(|x| eval(x).map(|(_, g)| g), x0, cfg.max_iter.min(200), done)?;
    let (f, grad) = eval(&lm.x)?;
    Some(BfgsResult {
        x: lm.x,
        f,
        grad,
        converged: lm.solved,
        diverged: false,
        iterations: lm.iterations,
    })
}

/// Largest number of unknowns for which the dense stationarity search runs.
const STATIONARITY_SEARCH_LIMIT: usize = 300;

/// Extremizes `J` over the free node values of an unconstrained problem.
///
/// Every start first minimizes `J`. When no start converges the same starts
/// maximize `J`, and failing that a Levenberg–Marquardt search for `∇J = 0`
/// runs from the best iterate. Without any stationary point the report
/// carries the iterate with the smallest gradient and status
/// [`SolveStatus::NotConverged`].
pub fn solve(p: &VariationalProblem, cfg: &SolverConfig) -> Result<SolveReport, SolveError> {
    cfg.validate()?;
    if p.constraint().is_some() {
        return Err(SolveError::NotApplicable(
            "problem has an isoperimetric constraint; use solve_isoperimetric".into(),
        ));
    }
    let layout = Layout::new(p);
    // Surface expression errors at the interpolant directly.
    p.objective().evaluate(p.scale(), &layout.nodes(&layout.start(p, cfg.seed, 0)))?;

    let tol = cfg.grad_tol;
    let run = |sign: f64| {
        let obj = |x: &[f64]| objective_at(p, &layout, x, sign);
        run_starts(cfg, |i| minimize(&obj, layout.start(p, cfg.seed, i), bfgs_options(cfg, tol)))
    };

    let minima = run(1.0);
    if let Some(i) = best_converged(&minima) {
        return report_from(p, &layout, &minima[i], i, SolveStatus::Converged);
    }
    let maxima = run(-1.0);
    let maxima: Vec<BfgsResult> = maxima
        .into_iter()
        .map(|mut r| {
            r.f = -r.f;
            r.grad.iter_mut().for_each(|v| *v = -*v);
            r
        })
        .collect();
    if let Some(i) = maxima
        .iter()
        .enumerate()
        .filter(|(_, r)| r.converged && r.f.is_finite())
        .max_by(|(i, a), (j, b)| a.f.total_cmp(&b.f).then(j.cmp(i)))
        .map(|(i, _)| i)
    {
        return report_from(p, &layout, &maxima[i], i, SolveStatus::Converged);
    }

    let mut candidates: Vec<(usize, BfgsResult)> = Vec::new();
    if let Some(i) = best_effort(&minima) {
        candidates.push((i, minima[i].clone()));
    }
    if let Some(i) = best_effort(&maxima) {
        candidates.push((i, maxima[i].clone()));
    }
    if layout.dim() <= STATIONARITY_SEARCH_LIMIT {
        let x0 = layout.start(p, cfg.seed, 0);
        if let Some(r) = stationarity_search(p, &layout, x0, cfg) {
            if r.converged {
                return report_from(p, &layout, &r, 0, SolveStatus::Converged);
            }
            candidates.push((0, r));
        }
    }
    let best = candidates
        .into_iter()
        .min_by(|(i, a), (j, b)| l1(&a.grad).total_cmp(&l1(&b.grad)).then(i.cmp(j)));
    match best {
        Some((i, r)) => report_from(p, &layout, &r, i, SolveStatus::NotConverged),
        None => {
            let x0 = layout.start(p, cfg.seed, 0);
            let (f, grad) = objective_at(p, &layout, &x0, 1.0).unwrap_or((f64::NAN, vec![f64::NAN; x0.len()]));
            let r = BfgsResult { x: x0, f, grad, converged: false, diverged: true, iterations: 0 };
            report_from(p, &layout, &r, 0, SolveStatus::NotConverged)
        }
    }
}

fn report_from(
    p: &VariationalProblem,
    layout: &Layout,
    run: &BfgsResult,
    index: usize,
    status: SolveStatus,
) -> Result<SolveReport, SolveError> {
    let ts = p.scale();
    let nodes = layout.nodes(&run.x);
    let e = p.objective().evaluate(ts, &nodes)?;
    let (d1, _) = defect_and_mean(&residual_1(ts, &e));
    let (d2, _) = defect_and_mean(&residual_2(ts, &e));
    let (nbc_a, nbc_b) = pair_nbc(ts, &e);
    let grad = layout.project(&pair_gradient(ts, &e));
    Ok(SolveReport {
        trajectory: p.trajectory(nodes)?,
        j_delta: e.j_delta,
        j_nabla: e.j_nabla,
        j: e.j(),
        lambda0: None,
        lambda: None,
        k_value: None,
        abnormal: false,
        extension: false,
        el_defect_1: d1,
        el_defect_2: d2,
        iso_defect_1: None,
        iso_defect_2: None,
        bc_residual_a: p.bc_a().is_free().then_some(nbc_a),
        bc_residual_b: p.bc_b().is_free().then_some(nbc_b),
        grad_norm: l1(&grad),
        status,
        iterations: run.iterations,
        multistart_index: index,
    })
}
