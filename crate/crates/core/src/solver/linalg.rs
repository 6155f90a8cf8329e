/// Solves the dense system `a x = b` (row-major `a`) by Gaussian elimination
/// with partial pivoting. Returns `None` for a numerically singular matrix.
pub(crate) fn solve_dense(mut a: Vec<f64>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    debug_assert_eq!(a.len(), n * n);
    let scale = a.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if scale == 0.0 || !scale.is_finite() {
        return None;
    }
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| a[i * n + col].abs().total_cmp(&a[j * n + col].abs()))
            .expect("non-empty range");
        if a[pivot * n + col].abs() <= 1e-14 * scale {
            return None;
        }
        if pivot != col {
            for k in 0..n {
                a.swap(pivot * n + k, col * n + k);
            }
            b.swap(pivot, col);
        }
        let diag = a[col * n + col];
        for row in col + 1..n {
            let factor = a[row * n + col] / diag;
            if factor != 0.0 {
                for k in col..n {
                    a[row * n + k] -= factor * a[col * n + k];
                }
                b[row] -= factor * b[col];
            }
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let mut acc = b[row];
        for k in row + 1..n {
            acc -= a[row * n + k] * x[k];
        }
        x[row] = acc / a[row * n + row];
    }
    x.iter().all(|v| v.is_finite()).then_some(x)
}

/// One Levenberg–Marquardt step for the residual `r` with Jacobian `jac`
/// (`m × n`, row-major): solves `(JᵀJ + damping · diag(JᵀJ)) δ = -Jᵀr`.
pub(crate) fn lm_step(jac: &[f64], r: &[f64], n: usize, damping: f64) -> Option<Vec<f64>> {
    let m = r.len();
    let mut jtj = vec![0.0; n * n];
    let mut jtr = vec![0.0; n];
    for i in 0..m {
        let row = &jac[i * n..(i + 1) * n];
        for p in 0..n {
            jtr[p] -= row[p] * r[i];
            for q in 0..n {
                jtj[p * n + q] += row[p] * row[q];
            }
        }
    }
    for p in 0..n {
        let d = jtj[p * n + p];
        jtj[p * n + p] += damping * d.max(1e-12);
    }
    solve_dense(jtj, jtr)
}

pub(crate) struct LmResult {
    pub x: Vec<f64>,
    pub r: Vec<f64>,
    pub iterations: usize,
    /// `done` accepted the final iterate.
    pub solved: bool,
}

/// Damped Gauss–Newton on `resid(x) = 0` with a central-difference Jacobian.
/// Stops when `done(x, r)` holds, when no damping yields a decrease of `‖r‖₂`,
/// or after `max_iter` steps.
pub(crate) fn lm_solve<R, D>(resid: R, x0: Vec<f64>, max_iter: usize, done: D) -> Option<LmResult>
where
    R: Fn(&[f64]) -> Option<Vec<f64>>,
    D: Fn(&[f64], &[f64]) -> bool,
{
    let n = x0.len();
    let mut x = x0;
    let mut r = resid(&x)?;
    let norm2 = |v: &[f64]| v.iter().map(|a| a * a).sum::<f64>();
    let mut damping = 1e-3;
    let mut iterations = 0;
    while iterations < max_iter && !done(&x, &r) {
        iterations += 1;
        let m = r.len();
        let mut jac = vec![0.0; m * n];
        for k in 0..n {
            let h = 1e-6 * (1.0 + x[k].abs());
            let mut xp = x.clone();
            xp[k] += h;
            let mut xm = x.clone();
            xm[k] -= h;
            let (Some(rp), Some(rm)) = (resid(&xp), resid(&xm)) else {
                return Some(LmResult { x, r, iterations, solved: false });
            };
            for i in 0..m {
                jac[i * n + k] = (rp[i] - rm[i]) / (2.0 * h);
            }
        }
        let current = norm2(&r);
        let mut improved = false;
        for _ in 0..40 {
            if let Some(step) = lm_step(&jac, &r, n, damping) {
                let trial: Vec<f64> = x.iter().zip(&step).map(|(a, b)| a + b).collect();
                if let Some(rt) = resid(&trial) {
                    if rt.iter().all(|v| v.is_finite()) && norm2(&rt) < current {
                        x = trial;
                        r = rt;
                        damping = (damping * 0.3).max(1e-15);
                        improved = true;
                        break;
                    }
                }
            }
            damping *= 10.0;
        }
        if !improved {
            break;
        }
    }
    let solved = done(&x, &r);
    Some(LmResult { x, r, iterations, solved })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_with_pivoting() {
        let a = vec![0.0, 2.0, 1.0, 1.0, 1.0, 0.0, 3.0, 0.0, 1.0];
        let x = solve_dense(a, vec![5.0, 3.0, 4.0]).unwrap();
        for (got, want) in x.iter().zip([1.0, 2.0, 1.0]) {
            assert!((got - want).abs() < 1e-14);
        }
        assert!(solve_dense(vec![1.0, 2.0, 2.0, 4.0], vec![1.0, 2.0]).is_none());
    }

    #[test]
    fn lm_finds_circle_line_intersection() {
        let resid = |x: &[f64]| Some(vec![x[0] * x[0] + x[1] * x[1] - 2.0, x[0] - x[1]]);
        let r = lm_solve(resid, vec![3.0, 0.5], 100, |_, r| r.iter().all(|v| v.abs() < 1e-13)).unwrap();
        assert!(r.solved);
        assert!((r.x[0] - 1.0).abs() < 1e-12 && (r.x[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn lm_stalls_without_root() {
        let resid = |x: &[f64]| Some(vec![x[0] * x[0] + 1.0]);
        let r = lm_solve(resid, vec![2.0], 100, |_, r| r[0].abs() < 1e-12).unwrap();
        assert!(!r.solved);
        assert!(r.x[0].abs() < 1e-3);
    }
}
