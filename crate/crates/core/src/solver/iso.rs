//! Isoperimetric problems by augmented Lagrangian.
//!
//! Each start minimizes `λ₀J - λ(K - k) + ρ/2 (K - k)²` for a sequence of
//! multiplier estimates, then the first-order system `λ₀∇J - λ∇K = 0,
//! K = k` is polished by Levenberg–Marquardt in `(y, λ)`.

use super::bfgs::{l1, minimize};
use super::linalg::lm_solve;
use super::{bfgs_options, Layout, SolveError, SolveReport, SolveStatus, SolverConfig};
use crate::variational::{
    defect_and_mean, is_k_extremal, iso_natural_bc, iso_residual, pair_gradient, residual_1, residual_2,
    ResidualForm, VariationalProblem,
};
use rayon::prelude::*;

const MAX_OUTER: usize = 50;
const MAX_PENALTY: f64 = 1e8;

struct Point {
    j: f64,
    c: f64,
    gj: Vec<f64>,
    gk: Vec<f64>,
}

fn point(p: &VariationalProblem, layout: &Layout, x: &[f64]) -> Option<Point> {
    let ts = p.scale();
    let y = layout.nodes(x);
    let (kpair, k) = p.constraint_pair().ok()?;
    let je = p.objective().evaluate(ts, &y).ok()?;
    let ke = kpair.evaluate(ts, &y).ok()?;
    let (j, kv) = (je.j(), ke.j());
    if !j.is_finite() || !kv.is_finite() {
        return None;
    }
    Some(Point {
        j,
        c: kv - k,
        gj: layout.project(&pair_gradient(ts, &je)),
        gk: layout.project(&pair_gradient(ts, &ke)),
    })
}

fn lagrangian_grad(pt: &Point, lambda0: f64, lambda: f64) -> Vec<f64> {
    pt.gj.iter().zip(&pt.gk).map(|(a, b)| lambda0 * a - lambda * b).collect()
}

fn stationary(cfg: &SolverConfig, pt: &Point, lambda0: f64, lambda: f64) -> bool {
    l1(&lagrangian_grad(pt, lambda0, lambda)) <= cfg.grad_tol * (1.0 + pt.j.abs() + lambda.abs())
}

#[derive(Clone)]
struct Run {
    x: Vec<f64>,
    lambda: f64,
    j: f64,
    c: f64,
    stationary: bool,
    iterations: usize,
}

impl Run {
    fn feasible(&self, cfg: &SolverConfig) -> bool {
        self.c.abs() <= cfg.constraint_tol
    }

    fn converged(&self, cfg: &SolverConfig) -> bool {
        self.stationary && self.feasible(cfg)
    }
}

fn run(p: &VariationalProblem, layout: &Layout, x0: Vec<f64>, lambda0: f64, cfg: &SolverConfig) -> Option<Run> {
    let mut x = x0;
    let mut lambda = 0.0;
    let mut rho = 10.0;
    let mut previous = f64::INFINITY;
    let mut iterations = 0;
    for _ in 0..MAX_OUTER {
        let phi = |x: &[f64]| {
            let pt = point(p, layout, x)?;
            let f = lambda0 * pt.j - lambda * pt.c + 0.5 * rho * pt.c * pt.c;
            let scale = rho * pt.c - lambda;
            let g = pt.gj.iter().zip(&pt.gk).map(|(a, b)| lambda0 * a + scale * b).collect();
            Some((f, g))
        };
        let r = minimize(&phi, x.clone(), bfgs_options(cfg, 0.1 * cfg.grad_tol));
        iterations += r.iterations;
        if !r.f.is_finite() || r.diverged {
            break;
        }
        x = r.x;
        let Some(pt) = point(p, layout, &x) else { break };
        lambda -= rho * pt.c;
        if pt.c.abs() <= 0.01 * cfg.constraint_tol && stationary(cfg, &pt, lambda0, lambda) {
            break;
        }
        if pt.c.abs() > 0.25 * previous {
            rho = (rho * cfg.penalty_growth).min(MAX_PENALTY);
        }
        previous = pt.c.abs();
    }
    let pt = point(p, layout, &x)?;
    let mut best = Run {
        stationary: stationary(cfg, &pt, lambda0, lambda),
        x,
        lambda,
        j: pt.j,
        c: pt.c,
        iterations,
    };
    if let Some(polished) = polish(p, layout, &best, lambda0, cfg) {
        if polished.converged(cfg) || !best.converged(cfg) && polished.c.abs() <= best.c.abs() {
            best = polished;
        }
    }
    Some(best)
}

fn polish(p: &VariationalProblem, layout: &Layout, start: &Run, lambda0: f64, cfg: &SolverConfig) -> Option<Run> {
    let n = layout.dim();
    let resid = |z: &[f64]| {
        let pt = point(p, layout, &z[..n])?;
        let mut r = lagrangian_grad(&pt, lambda0, z[n]);
        r.push(pt.c);
        Some(r)
    };
    let done = |z: &[f64], r: &[f64]| {
        point(p, layout, &z[..n]).is_some_and(|pt| {
            r[n].abs() <= 0.01 * cfg.constraint_tol
                && l1(&r[..n]) <= 0.1 * cfg.grad_tol * (1.0 + pt.j.abs() + z[n].abs())
        })
    };
    let mut z = start.x.clone();
    z.push(start.lambda);
    let lm = lm_solve(resid, z, cfg.max_iter.min(200), done)?;
    let (x, lambda) = (lm.x[..n].to_vec(), lm.x[n]);
    let pt = point(p, layout, &x)?;
    Some(Run {
        stationary: stationary(cfg, &pt, lambda0, lambda),
        x,
        lambda,
        j: pt.j,
        c: pt.c,
        iterations: start.iterations + lm.iterations,
    })
}

fn runs(p: &VariationalProblem, layout: &Layout, lambda0: f64, cfg: &SolverConfig) -> Vec<Option<Run>> {
    (0..cfg.multistarts)
        .into_par_iter()
        .map(|i| run(p, layout, layout.start(p, cfg.seed, i), lambda0, cfg))
        .collect()
}

/// Converged run with the lowest `J`, else the feasible run with the smallest
/// Lagrangian gradient, else the run closest to feasibility.
fn pick(runs: &[Option<Run>], cfg: &SolverConfig) -> Option<(usize, Run)> {
    fn lowest<'r>(it: impl Iterator<Item = (usize, &'r Run)>, key: impl Fn(&Run) -> f64) -> Option<(usize, &'r Run)> {
        it.min_by(|(i, a), (j, b)| key(a).total_cmp(&key(b)).then(i.cmp(j)))
    }
    let all = || runs.iter().enumerate().filter_map(|(i, r)| r.as_ref().map(|r| (i, r)));
    lowest(all().filter(|(_, r)| r.converged(cfg)), |r| r.j)
        .or_else(|| lowest(all().filter(|(_, r)| r.feasible(cfg)), |r| if r.stationary { 0.0 } else { 1.0 }))
        .or_else(|| lowest(all(), |r| r.c.abs()))
        .map(|(i, r)| (i, r.clone()))
}

/// Extremizes `J` subject to `K(y) = k`.
///
/// The normal case `λ₀ = 1` is tried first. When the incumbent is an
/// extremal of `K` itself the report switches to `λ₀ = 0, λ = 1` and flags
/// `abnormal`. Free endpoints are allowed and reported with `extension`.
pub fn solve_isoperimetric(p: &VariationalProblem, cfg: &SolverConfig) -> Result<SolveReport, SolveError> {
    cfg.validate()?;
    let (kpair, k) = p.constraint_pair()?;
    let layout = Layout::new(p);
    let probe = layout.nodes(&layout.start(p, cfg.seed, 0));
    p.objective().evaluate(p.scale(), &probe)?;
    kpair.evaluate(p.scale(), &probe)?;

    let normal = runs(p, &layout, 1.0, cfg);
    let Some((mut index, mut best)) = pick(&normal, cfg) else {
        return Err(SolveError::NotApplicable("objective undefined at every start".into()));
    };
    let kext_tol = 10.0 * cfg.grad_tol * (1.0 + k.abs());
    let mut abnormal = is_k_extremal(p, &p.trajectory(layout.nodes(&best.x))?, kext_tol)?;
    if !best.converged(cfg) && !abnormal {
        let feasibility = runs(p, &layout, 0.0, cfg);
        let candidate = feasibility.iter().enumerate().find_map(|(i, r)| {
            let r = r.as_ref()?;
            let traj = p.trajectory(layout.nodes(&r.x)).ok()?;
            (r.feasible(cfg) && is_k_extremal(p, &traj, kext_tol).ok()?).then(|| (i, r.clone()))
        });
        if let Some((i, r)) = candidate {
            index = i;
            best = r;
            abnormal = true;
        }
    }
    let (lambda0, lambda) = if abnormal { (0.0, 1.0) } else { (1.0, best.lambda) };
    let pt = point(p, &layout, &best.x).expect("incumbent is finite");
    let converged = best.feasible(cfg) && stationary(cfg, &pt, lambda0, lambda);
    let status = if converged {
        SolveStatus::Converged
    } else if normal.iter().flatten().any(|r| r.feasible(cfg)) || best.feasible(cfg) {
        SolveStatus::NotConverged
    } else {
        SolveStatus::Infeasible
    };

    let ts = p.scale();
    let nodes = layout.nodes(&best.x);
    let trajectory = p.trajectory(nodes.clone())?;
    let e = p.objective().evaluate(ts, &nodes)?;
    let (d1, _) = defect_and_mean(&residual_1(ts, &e));
    let (d2, _) = defect_and_mean(&residual_2(ts, &e));
    let iso1 = iso_residual(p, &trajectory, lambda0, lambda, ResidualForm::Iso1)?;
    let iso2 = iso_residual(p, &trajectory, lambda0, lambda, ResidualForm::Iso2)?;
    let (bc_a, bc_b) = iso_natural_bc(p, &trajectory, lambda0, lambda)?;
    let free = p.bc_a().is_free() || p.bc_b().is_free();
    Ok(SolveReport {
        trajectory,
        j_delta: e.j_delta,
        j_nabla: e.j_nabla,
        j: e.j(),
        lambda0: Some(lambda0),
        lambda: Some(lambda),
        k_value: Some(best.c + k),
        abnormal,
        extension: free,
        el_defect_1: d1,
        el_defect_2: d2,
        iso_defect_1: Some(iso1.defect),
        iso_defect_2: Some(iso2.defect),
        bc_residual_a: p.bc_a().is_free().then_some(bc_a),
        bc_residual_b: p.bc_b().is_free().then_some(bc_b),
        grad_norm: l1(&lagrangian_grad(&pt, lambda0, lambda)),
        status,
        iterations: best.iterations,
        multistart_index: index,
    })
}
