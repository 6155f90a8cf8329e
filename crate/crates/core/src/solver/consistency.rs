//! The `(A, B)` system for problems whose Euler–Lagrange equation is affine
//! in the derivative.
//!
//! With `A = J_∇(y)` and `B = J_Δ(y)` frozen, the second residual form reads
//! `A ∂₃L_Δ(tᵢ, ·, dᵢ) + B ∂₃L_∇(tᵢ₊₁, ·, dᵢ) = C` for the forward
//! differences `dᵢ`. When `∂₃L = p(t) + q(t) v` and neither Lagrangian
//! depends on the state, each `dᵢ` is affine in `C`, and the boundary values
//! fix `C`. What remains is the two-dimensional root problem
//! `(J_∇(y(A, B)) - A, J_Δ(y(A, B)) - B) = 0`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::linalg::lm_solve;
use super::{SolveError, SolverConfig};
use crate::expr::{Binding, Var};
use crate::variational::{Lagrangian, Trajectory, VariationalProblem};

/// Roots closer than this are the same root.
const DEDUP_DISTANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct ConsistencyRoot {
    pub a: f64,
    pub b: f64,
    /// The constant value of the residual.
    pub c: f64,
    pub trajectory: Trajectory,
    /// `‖(J_∇(y) - A, J_Δ(y) - B)‖₂`.
    pub residual_norm: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConsistencyOutcome {
    /// Distinct roots inside the search box, sorted by `A` then `B`.
    pub roots: Vec<ConsistencyRoot>,
    /// Start whose final iterate had the smallest residual, root or not.
    pub closest: Option<ConsistencyRoot>,
}

impl ConsistencyOutcome {
    pub fn is_empty(&self) -> bool {
        self.roots.is_empty()
    }
}

/// `∂₃L(t, ·, v) = p(t) + q(t) v` tabulated at the nodes.
struct Affine {
    p: Vec<f64>,
    q: Vec<f64>,
}

fn affine(l: &Lagrangian, points: &[f64], which: &str) -> Result<Affine, SolveError> {
    let not_affine = |why: &str| SolveError::NotApplicable(format!("{which} Lagrangian {why}"));
    if l.expr().depends_on(Var::Y) {
        return Err(not_affine("depends on the state"));
    }
    let curvature = l.d_v().differentiate(Var::V);
    if curvature.depends_on(Var::Y) || curvature.depends_on(Var::V) {
        return Err(not_affine("is not quadratic in the derivative"));
    }
    let mut p = Vec::with_capacity(points.len());
    let mut q = Vec::with_capacity(points.len());
    for &t in points {
        let at = |v| l.d_v().eval(&Binding::new(t, 0.0, v)).map_err(|e| not_affine(&e.to_string()));
        let p0 = at(0.0)?;
        p.push(p0);
        q.push(at(1.0)? - p0);
    }
    Ok(Affine { p, q })
}

struct System<'a> {
    problem: &'a VariationalProblem,
    delta: Affine,
    nabla: Affine,
    alpha: f64,
    beta: f64,
}

impl System<'_> {
    /// Trajectory and `C` for frozen `(A, B)`, or `None` when the linear
    /// equation is singular.
    fn trajectory(&self, a: f64, b: f64) -> Option<(Vec<f64>, f64)> {
        let ts = self.problem.scale();
        let n = ts.len();
        let mut s = Vec::with_capacity(n - 1);
        let mut r = Vec::with_capacity(n - 1);
        for i in 0..n - 1 {
            s.push(a * self.delta.q[i] + b * self.nabla.q[i + 1]);
            r.push(a * self.delta.p[i] + b * self.nabla.p[i + 1]);
        }
        if s.iter().any(|&v| v == 0.0 || !v.is_finite()) {
            return None;
        }
        let (mut weight, mut shift) = (0.0, 0.0);
        for i in 0..n - 1 {
            let mu = ts.mu_at(i);
            weight += mu / s[i];
            shift += mu * r[i] / s[i];
        }
        if weight == 0.0 {
            return None;
        }
        let c = (self.beta - self.alpha + shift) / weight;
        let mut y = Vec::with_capacity(n);
        y.push(self.alpha);
        for i in 0..n - 1 {
            let d = (c - r[i]) / s[i];
            y.push(y[i] + ts.mu_at(i) * d);
        }
        // The sum reproduces β up to rounding; pin it exactly.
        y[n - 1] = self.beta;
        y.iter().all(|v| v.is_finite()).then_some((y, c))
    }

    fn residual(&self, ab: &[f64]) -> Option<Vec<f64>> {
        let (y, _) = self.trajectory(ab[0], ab[1])?;
        let (jd, jn) = self.problem.objective().values(self.problem.scale(), &y).ok()?;
        let r = vec![jn - ab[0], jd - ab[1]];
        r.iter().all(|v| v.is_finite()).then_some(r)
    }

    fn root(&self, ab: &[f64], residual: &[f64]) -> Option<ConsistencyRoot> {
        let (y, c) = self.trajectory(ab[0], ab[1])?;
        Some(ConsistencyRoot {
            a: ab[0],
            b: ab[1],
            c,
            trajectory: self.problem.trajectory(y).ok()?,
            residual_norm: residual.iter().map(|v| v * v).sum::<f64>().sqrt(),
        })
    }
}

fn is_root(ab: &[f64], r: &[f64]) -> bool {
    let norm = r.iter().map(|v| v * v).sum::<f64>().sqrt();
    norm <= 1e-10 * (1.0 + ab[0].abs() + ab[1].abs())
}

/// Searches the box `[-search_box, search_box]²` for self-consistent
/// `(A, B)` from `consistency_starts` seeded starting points.
pub fn consistency_solve(p: &VariationalProblem, cfg: &SolverConfig) -> Result<ConsistencyOutcome, SolveError> {
    cfg.validate()?;
    let (Some(alpha), Some(beta)) = (p.bc_a().fixed_value(), p.bc_b().fixed_value()) else {
        return Err(SolveError::NotApplicable("both endpoints must be fixed".into()));
    };
    let points = p.scale().points();
    let system = System {
        problem: p,
        delta: affine(p.l_delta(), points, "delta")?,
        nabla: affine(p.l_nabla(), points, "nabla")?,
        alpha,
        beta,
    };
    let width = cfg.search_box;
    let finals: Vec<Option<(Vec<f64>, Vec<f64>)>> = (0..cfg.consistency_starts)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(i as u64));
            let x0 = vec![rng.gen_range(-width..=width), rng.gen_range(-width..=width)];
            let lm = lm_solve(|ab| system.residual(ab), x0, 200, is_root)?;
            Some((lm.x, lm.r))
        })
        .collect();

    let mut roots: Vec<ConsistencyRoot> = Vec::new();
    let mut closest: Option<ConsistencyRoot> = None;
    for (ab, r) in finals.iter().flatten() {
        let Some(candidate) = system.root(ab, r) else { continue };
        if closest.as_ref().is_none_or(|c| candidate.residual_norm < c.residual_norm) {
            closest = Some(candidate.clone());
        }
        let inside = ab.iter().all(|v| v.abs() <= width);
        let duplicate = roots.iter().any(|q| (q.a - ab[0]).hypot(q.b - ab[1]) <= DEDUP_DISTANCE);
        if is_root(ab, r) && inside && !duplicate {
            roots.push(candidate);
        }
    }
    roots.sort_by(|x, y| x.a.total_cmp(&y.a).then(x.b.total_cmp(&y.b)));
    Ok(ConsistencyOutcome { roots, closest })
}
