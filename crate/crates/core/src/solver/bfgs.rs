//! Dense BFGS with Armijo backtracking.
//!
//! The problems here have at most a few thousand unknowns, so the inverse
//! Hessian approximation is stored densely.

/// Objective returning `(f, ∇f)`, or `None` where `f` is undefined.
pub(crate) type Objective<'a> = dyn Fn(&[f64]) -> Option<(f64, Vec<f64>)> + Sync + 'a;

#[derive(Debug, Clone, Copy)]
pub(crate) struct BfgsOptions {
    /// Converged once `‖∇f‖₁ ≤ grad_tol · (1 + |f|)`.
    pub grad_tol: f64,
    pub max_iter: usize,
    /// Keep iterating after convergence until no further decrease is possible.
    pub polish: bool,
    /// Give up once `|f|` exceeds `divergence · (1 + |f(x0)|)` (unbounded
    /// objective).
    pub divergence: f64,
}

#[derive(Debug, Clone)]
pub(crate) struct BfgsResult {
    pub x: Vec<f64>,
    pub f: f64,
    pub grad: Vec<f64>,
    pub converged: bool,
    pub diverged: bool,
    pub iterations: usize,
}

pub(crate) fn l1(v: &[f64]) -> f64 {
    v.iter().map(|x| x.abs()).sum()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn minimize(obj: &Objective<'_>, x0: Vec<f64>, opts: BfgsOptions) -> BfgsResult {
    let n = x0.len();
    let Some((mut f, mut g)) = obj(&x0) else {
        return BfgsResult {
            x: x0,
            f: f64::NAN,
            grad: vec![f64::NAN; n],
            converged: false,
            diverged: false,
            iterations: 0,
        };
    };
    let mut x = x0;
    let limit = opts.divergence * (1.0 + f.abs());
    let small = |f: f64, g: &[f64]| l1(g) <= opts.grad_tol * (1.0 + f.abs());
    if n == 0 {
        return BfgsResult {
            x,
            f,
            grad: g,
            converged: true,
            diverged: false,
            iterations: 0,
        };
    }

    let identity = |scale: f64| {
        let mut h = vec![0.0; n * n];
        for i in 0..n {
            h[i * n + i] = scale;
        }
        h
    };
    let mut h = identity(1.0);
    let mut fresh = true;
    let mut converged = small(f, &g);
    let mut diverged = false;
    let mut iterations = 0;
    let polish_budget = 50 + 2 * n;
    let mut polished = 0;

    while iterations < opts.max_iter {
        if f.abs() > limit {
            diverged = true;
            break;
        }
        if converged && (!opts.polish || polished >= polish_budget) {
            break;
        }
        if converged {
            polished += 1;
        }
        iterations += 1;

        let mut d: Vec<f64> = (0..n).map(|i| -dot(&h[i * n..(i + 1) * n], &g)).collect();
        let mut slope = dot(&g, &d);
        if !(slope < 0.0) {
            h = identity(1.0);
            fresh = true;
            d = g.iter().map(|v| -v).collect();
            slope = -dot(&g, &g);
            if slope == 0.0 {
                break;
            }
        }
        if fresh {
            // Unit steps along a raw gradient can be wildly off-scale.
            let norm = dot(&d, &d).sqrt();
            let cap = 1.0 + dot(&x, &x).sqrt();
            if norm > cap {
                let s = cap / norm;
                d.iter_mut().for_each(|v| *v *= s);
                slope *= s;
            }
        }

        let mut alpha = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let trial: Vec<f64> = x.iter().zip(&d).map(|(xi, di)| xi + alpha * di).collect();
            if let Some((ft, gt)) = obj(&trial) {
                if ft.is_finite() && ft <= f + 1e-4 * alpha * slope && ft < f {
                    accepted = Some((trial, ft, gt));
                    break;
                }
            }
            alpha *= 0.5;
        }
        if accepted.is_none() && converged {
            // Near the optimum the decrease in f drops below rounding; accept
            // steps that shrink the gradient while f stays flat.
            let flat = f + 16.0 * f64::EPSILON * (1.0 + f.abs());
            let mut alpha = 1.0;
            for _ in 0..20 {
                let trial: Vec<f64> = x.iter().zip(&d).map(|(xi, di)| xi + alpha * di).collect();
                if let Some((ft, gt)) = obj(&trial) {
                    if ft.is_finite() && ft <= flat && l1(&gt) < l1(&g) {
                        accepted = Some((trial, ft, gt));
                        break;
                    }
                }
                alpha *= 0.5;
            }
        }
        let Some((xn, fn_, gn)) = accepted else {
            if fresh {
                break;
            }
            h = identity(1.0);
            fresh = true;
            continue;
        };

        let s: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
        let yv: Vec<f64> = gn.iter().zip(&g).map(|(a, b)| a - b).collect();
        let step = dot(&s, &s).sqrt();
        let xnorm = dot(&xn, &xn).sqrt();
        x = xn;
        f = fn_;
        g = gn;

        let sy = dot(&s, &yv);
        if sy > 1e-300 && sy > 1e-14 * step * dot(&yv, &yv).sqrt() {
            if fresh {
                h = identity(sy / dot(&yv, &yv));
                fresh = false;
            }
            let rho = 1.0 / sy;
            let hy: Vec<f64> = (0..n).map(|i| dot(&h[i * n..(i + 1) * n], &yv)).collect();
            let yhy = dot(&yv, &hy);
            let coef = (1.0 + rho * yhy) * rho;
            for i in 0..n {
                for j in 0..n {
                    h[i * n + j] += coef * s[i] * s[j] - rho * (hy[i] * s[j] + s[i] * hy[j]);
                }
            }
        }

        converged = converged || small(f, &g);
        if converged && step <= 1e-15 * (1.0 + xnorm) {
            break;
        }
    }

    diverged = diverged || f.abs() > limit;
    BfgsResult {
        x,
        f,
        grad: g,
        converged: converged && !diverged,
        diverged,
        iterations,
    }
}
