//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use tsvar::cli::manifest::BUNDLED_PROBLEMS;
use tsvar::cli::problem::{parse_problem, ProblemFile};
use tsvar::solver::{consistency_solve, solve, solve_isoperimetric, SolveReport, SolverConfig};
use tsvar::variational::{self as var, ReducedBc};
use tsvar::{Boundary, Constraint, GridFunction, Lagrangian, TimeScale, VariationalProblem};

struct Outcome {
    pass: bool,
    detail: String,
}

fn bundled(name: &str) -> ProblemFile {
    let text = BUNDLED_PROBLEMS
        .iter()
        .find(|(n, _)| *n == name)
        .unwrap_or_else(|| panic!("no bundled problem {name}"))
        .1;
    parse_problem(text).unwrap_or_else(|e| panic!("{name}: {e}"))
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn within(elapsed: Duration, limit_s: f64) -> bool {
    elapsed.as_secs_f64() < limit_s
}

// ---------------------------------------------------------------------------
// Criterion 1: calculus identities on random scales.

fn random_scale(rng: &mut ChaCha8Rng) -> TimeScale {
    let n = rng.gen_range(3..=200usize);
    match rng.gen_range(0..4) {
        0 => {
            let mut t = rng.gen_range(-5.0..5.0);
            let mut pts = Vec::with_capacity(n);
            for _ in 0..n {
                pts.push(t);
                t += 10f64.powf(rng.gen_range(-2.0..1.0));
            }
            TimeScale::from_points(pts).unwrap()
        }
        1 => {
            let a = rng.gen_range(-5.0..5.0);
            TimeScale::uniform(a, a + rng.gen_range(0.1..20.0), n).unwrap()
        }
        2 => {
            let h = [0.125, 0.25, 0.5, 1.0, 2.0][rng.gen_range(0..5)];
            let a = h * rng.gen_range(-10..10) as f64;
            TimeScale::h_integers(a, a + h * (n - 1) as f64, h).unwrap()
        }
        _ => {
            // Keep q^(n-1) below about 1e6.
            let q = 1.0 + rng.gen_range(0.001..(13.8 / (n - 1) as f64).min(1.0));
            let kmin = rng.gen_range(-5..5);
            TimeScale::q_scale(q, kmin, kmin + n as i32 - 1).unwrap()
        }
    }
}

fn random_values(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let amp = 10f64.powf(rng.gen_range(-2.0..2.0));
    (0..n).map(|_| amp * rng.gen_range(-1.0..1.0)).collect()
}

/// Worst relative error over all checks, with a reference magnitude that
/// covers the individual terms so cancellation does not inflate the ratio.
#[derive(Default)]
struct Tally {
    worst: f64,
    worst_name: &'static str,
    checks: usize,
    failures: usize,
}

impl Tally {
    fn check(&mut self, name: &'static str, lhs: f64, rhs: f64, magnitude: f64) {
        let scale = lhs.abs().max(rhs.abs()).max(magnitude).max(f64::MIN_POSITIVE);
        let rel = (lhs - rhs).abs() / scale;
        self.checks += 1;
        if rel > self.worst {
            self.worst = rel;
            self.worst_name = name;
        }
    }

    fn truth(&mut self, ok: bool) {
        self.checks += 1;
        if !ok {
            self.failures += 1;
        }
    }
}

fn abs_fn(f: &GridFunction) -> GridFunction {
    f.map(|_, v| v.abs()).unwrap()
}

fn identities_on(ts: Arc<TimeScale>, rng: &mut ChaCha8Rng, tally: &mut Tally) {
    let n = ts.len();
    let f = GridFunction::new(ts.clone(), random_values(rng, n)).unwrap();
    let g = GridFunction::new(ts.clone(), random_values(rng, n)).unwrap();
    let fd = f.delta_derivative().unwrap();
    let gd = g.delta_derivative().unwrap();
    let fn_ = f.nabla_derivative().unwrap();
    let gn = g.nabla_derivative().unwrap();
    let fs = f.shift_sigma().unwrap();
    let gs = g.shift_sigma().unwrap();
    let fr = f.shift_rho().unwrap();
    let gr = g.shift_rho().unwrap();
    let fg = f.mul(&g).unwrap();
    let fgd = fg.delta_derivative().unwrap();
    let fgn = fg.nabla_derivative().unwrap();
    let (alpha, beta) = (rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0));
    let lin = f.scaled(alpha).unwrap().add(&g.scaled(beta).unwrap()).unwrap();
    let lind = lin.delta_derivative().unwrap();
    let linn = lin.nabla_derivative().unwrap();
    let fdr = fd.shift_rho().unwrap();
    let fns = fn_.shift_sigma().unwrap();

    for i in 0..n - 1 {
        let (mu, t) = (ts.mu_at(i), i);
        tally.check("sigma formula", fs.at(t), f.at(i) + mu * fd.at(i), f.at(i).abs() + (mu * fd.at(i)).abs());
        let p1 = fd.at(i) * gs.at(i) + f.at(i) * gd.at(i);
        let p2 = fd.at(i) * g.at(i) + fs.at(i) * gd.at(i);
        let m1 = (fd.at(i) * gs.at(i)).abs() + (f.at(i) * gd.at(i)).abs();
        let m2 = (fd.at(i) * g.at(i)).abs() + (fs.at(i) * gd.at(i)).abs();
        tally.check("delta product rule", fgd.at(i), p1, m1);
        tally.check("delta product rule", fgd.at(i), p2, m2);
        tally.check(
            "delta linearity",
            lind.at(i),
            alpha * fd.at(i) + beta * gd.at(i),
            (alpha * fd.at(i)).abs() + (beta * gd.at(i)).abs(),
        );
        tally.check("delta from nabla", fd.at(i), fns.at(i), fd.at(i).abs());
    }
    for i in 1..n {
        let nu = ts.nu_at(i);
        tally.check("rho formula", fr.at(i), f.at(i) - nu * fn_.at(i), f.at(i).abs() + (nu * fn_.at(i)).abs());
        let p1 = fn_.at(i) * g.at(i) + fr.at(i) * gn.at(i);
        let p2 = fn_.at(i) * gr.at(i) + f.at(i) * gn.at(i);
        let m1 = (fn_.at(i) * g.at(i)).abs() + (fr.at(i) * gn.at(i)).abs();
        let m2 = (fn_.at(i) * gr.at(i)).abs() + (f.at(i) * gn.at(i)).abs();
        tally.check("nabla product rule", fgn.at(i), p1, m1);
        tally.check("nabla product rule", fgn.at(i), p2, m2);
        tally.check(
            "nabla linearity",
            linn.at(i),
            alpha * fn_.at(i) + beta * gn.at(i),
            (alpha * fn_.at(i)).abs() + (beta * gn.at(i)).abs(),
        );
        tally.check("nabla from delta", fn_.at(i), fdr.at(i), fn_.at(i).abs());
    }

    // Integration by parts, conversions and splitting over a random [a, b].
    let p = rng.gen_range(0..n - 1);
    let q = rng.gen_range(p + 1..n);
    let boundary = fg.at(q) - fg.at(p);
    let bmag = fg.at(q).abs() + fg.at(p).abs();
    let di = |h: &GridFunction| h.delta_integral_idx(p, q).unwrap();
    let ni = |h: &GridFunction| h.nabla_integral_idx(p, q).unwrap();
    let ibp = [
        (fs.mul(&gd).unwrap(), fd.mul(&g).unwrap(), true),
        (f.mul(&gd).unwrap(), fd.mul(&gs).unwrap(), true),
        (fr.mul(&gn).unwrap(), fn_.mul(&g).unwrap(), false),
        (f.mul(&gn).unwrap(), fn_.mul(&gr).unwrap(), false),
    ];
    for (lhs, rhs, delta) in &ibp {
        let int = |h: &GridFunction| if *delta { di(h) } else { ni(h) };
        let mag = int(&abs_fn(lhs)) + int(&abs_fn(rhs)) + bmag;
        tally.check("integration by parts", int(lhs), boundary - int(rhs), mag);
    }
    tally.check("delta to nabla integral", di(&f), ni(&fr), di(&abs_fn(&f)));
    tally.check("nabla to delta integral", ni(&f), di(&fs), ni(&abs_fn(&f)));

    let (ta, tb) = (ts.point(p), ts.point(q));
    let (sa, rb) = (ts.sigma_index(p), ts.rho_index(q));
    let fa = abs_fn(&f);
    let m_d = di(&fa);
    let m_n = ni(&fa);
    tally.check(
        "delta split at rho(b)",
        di(&f),
        f.delta_integral_idx(p, rb).unwrap() + (tb - ts.point(rb)) * fr.at(q),
        m_d,
    );
    tally.check(
        "delta split at sigma(a)",
        di(&f),
        (ts.point(sa) - ta) * f.at(p) + f.delta_integral_idx(sa, q).unwrap(),
        m_d,
    );
    tally.check(
        "nabla split at rho(b)",
        ni(&f),
        f.nabla_integral_idx(p, rb).unwrap() + (tb - ts.point(rb)) * f.at(q),
        m_n,
    );
    tally.check(
        "nabla split at sigma(a)",
        ni(&f),
        (ts.point(sa) - ta) * fs.at(p) + f.nabla_integral_idx(sa, q).unwrap(),
        m_n,
    );

    // Integral properties for both calculi.
    let c = rng.gen_range(p..=q);
    let sum = f.add(&g).unwrap();
    let ga = abs_fn(&g);
    for delta in [true, false] {
        let int = |h: &GridFunction, i: usize, j: usize| {
            if delta {
                h.delta_integral_idx(i, j).unwrap()
            } else {
                h.nabla_integral_idx(i, j).unwrap()
            }
        };
        let mag = int(&fa, p, q) + int(&ga, p, q);
        tally.check("integral additivity", int(&sum, p, q), int(&f, p, q) + int(&g, p, q), mag);
        tally.check("integral homogeneity", int(&f.scaled(alpha).unwrap(), p, q), alpha * int(&f, p, q), alpha.abs() * mag);
        tally.check("integral antisymmetry", int(&f, p, q), -int(&f, q, p), mag);
        tally.truth(int(&f, p, p) == 0.0);
        tally.check("integral splitting", int(&f, p, q), int(&f, p, c) + int(&f, c, q), mag);
        let positive = fa.map(|_, v| v + 1e-3).unwrap();
        tally.truth(int(&positive, p, q) > 0.0);
        if delta {
            for i in 0..n - 1 {
                tally.check("delta single step", int(&f, i, i + 1), ts.mu_at(i) * f.at(i), 0.0);
            }
        } else {
            for i in 1..n {
                tally.check("nabla single step", int(&f, i - 1, i), ts.nu_at(i) * f.at(i), 0.0);
            }
        }
    }

    // Antiderivatives.
    let origin = rng.gen_range(0..n);
    let fdelta = f.restrict(0..n - 1).unwrap();
    let fnabla = f.restrict(1..n).unwrap();
    let big_d = fdelta.cumulative_delta(ts.point(origin)).unwrap();
    let big_n = fnabla.cumulative_nabla(ts.point(origin)).unwrap();
    tally.truth(big_d.at(origin) == 0.0 && big_n.at(origin) == 0.0);
    let bd = big_d.delta_derivative().unwrap();
    let bn = big_n.nabla_derivative().unwrap();
    let spread_d = big_d.values().iter().map(|v| v.abs()).fold(0.0, f64::max);
    let spread_n = big_n.values().iter().map(|v| v.abs()).fold(0.0, f64::max);
    for i in 0..n - 1 {
        tally.check("delta antiderivative", bd.at(i), f.at(i), 2.0 * spread_d / ts.mu_at(i));
    }
    for i in 1..n {
        tally.check("nabla antiderivative", bn.at(i), f.at(i), 2.0 * spread_n / ts.nu_at(i));
    }
    tally.check("delta integral via antiderivative", di(&f), big_d.at(q) - big_d.at(p), m_d + spread_d);
    tally.check("nabla integral via antiderivative", ni(&f), big_n.at(q) - big_n.at(p), m_n + spread_n);
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut tally = Tally::default();
    for _ in 0..200 {
        let ts = Arc::new(random_scale(&mut rng));
        identities_on(ts, &mut rng, &mut tally);
    }
    let elapsed = start.elapsed();
    Outcome {
        pass: tally.worst <= 1e-12 && tally.failures == 0 && within(elapsed, 10.0),
        detail: format!(
            "200 scales, {} checks, worst relative error {:.2e} ({}), {} boolean failures, {:.2} s",
            tally.checks,
            tally.worst,
            tally.worst_name,
            tally.failures,
            elapsed.as_secs_f64()
        ),
    }
}

// ---------------------------------------------------------------------------
// Criterion 2: straight-line example.

fn criterion_2() -> Outcome {
    let start = Instant::now();
    let mut pass = true;
    let mut parts = Vec::new();
    for name in ["ex1.problem", "ex1_q.problem"] {
        let pf = bundled(name);
        let r = solve(&pf.problem, &pf.config).expect("solve");
        let ts = pf.problem.scale();
        let err = max_abs_diff(r.trajectory.values(), ts.points());
        let ok = r.converged() && err <= 1e-7 && r.el_defect_1 <= 1e-8 && r.el_defect_2 <= 1e-8;
        pass &= ok;
        parts.push(format!(
            "{name}: node error {err:.1e}, defects {:.1e}/{:.1e}",
            r.el_defect_1, r.el_defect_2
        ));
    }
    let elapsed = start.elapsed();
    pass &= within(elapsed, 5.0);
    Outcome {
        pass,
        detail: format!("{}, {:.2} s", parts.join("; "), elapsed.as_secs_f64()),
    }
}

// ---------------------------------------------------------------------------
// Criterion 3: product example on fine uniform grids.

fn product_on(n: usize) -> ProblemFile {
    let text = format!(
        "[timescale]\nscale = uniform 0 1 {n}\n[lagrangian]\ndelta = t*v\nnabla = v^2\n[boundary]\na = fixed:0\nb = fixed:1\n"
    );
    parse_problem(&text).unwrap()
}

fn parabola_deviation(y: &GridFunction) -> f64 {
    y.iter().map(|(_, t, v)| (v - (2.0 * t - t * t)).abs()).fold(0.0, f64::max)
}

fn criterion_3() -> Outcome {
    let start = Instant::now();
    let mut pass = true;
    let mut parts = Vec::new();
    for n in [11usize, 101, 1001] {
        let pf = product_on(n);
        let out = consistency_solve(&pf.problem, &pf.config).expect("consistency_solve");
        let tol = 5.0 / n as f64;
        let hit = out.roots.iter().find(|r| {
            (r.a - 4.0 / 3.0).abs() + (r.b - 1.0 / 3.0).abs() <= tol && parabola_deviation(&r.trajectory) <= tol
        });
        pass &= hit.is_some();
        let closest = out
            .closest
            .as_ref()
            .map(|c| {
                format!(
                    "closest (A,B)=({:.5},{:.5}) residual {:.1e} deviation {:.1e}",
                    c.a,
                    c.b,
                    c.residual_norm,
                    parabola_deviation(&c.trajectory)
                )
            })
            .unwrap_or_else(|| "no closest approach".into());
        parts.push(format!("n={n}: {} root(s), {closest}", out.roots.len()));
    }
    let elapsed = start.elapsed();
    pass &= within(elapsed, 60.0);
    Outcome {
        pass,
        detail: format!("{}; {:.2} s", parts.join("; "), elapsed.as_secs_f64()),
    }
}

// ---------------------------------------------------------------------------
// Criterion 4: product example on {0, 1/2, 1}.

fn criterion_4() -> Outcome {
    let start = Instant::now();
    let pf = bundled("product_3pt.problem");
    let mut cfg = pf.config.clone();
    cfg.consistency_starts = 64;
    cfg.search_box = 10.0;
    let first = consistency_solve(&pf.problem, &cfg).expect("consistency_solve");
    let second = consistency_solve(&pf.problem, &cfg).expect("consistency_solve");
    let key = |o: &tsvar::solver::ConsistencyOutcome| o.closest.as_ref().map(|c| (c.a.to_bits(), c.b.to_bits()));
    let deterministic = first.roots.len() == second.roots.len() && key(&first) == key(&second);
    let elapsed = start.elapsed();
    Outcome {
        pass: first.is_empty() && deterministic && within(elapsed, 5.0),
        detail: format!(
            "{} root(s) with 64 starts in [-10,10]^2, repeat identical: {deterministic}, {:.2} s",
            first.roots.len(),
            elapsed.as_secs_f64()
        ),
    }
}

// ---------------------------------------------------------------------------
// Criterion 5: free right endpoint.

fn criterion_5() -> Outcome {
    let pf = bundled("free_end.problem");
    let r = solve(&pf.problem, &pf.config).expect("solve");
    let max_y = r.trajectory.values().iter().map(|v| v.abs()).fold(0.0, f64::max);
    let nbc = var::natural_bc_residual_b(&pf.problem, &r.trajectory).unwrap().abs();
    Outcome {
        pass: r.converged() && max_y <= 1e-7 && r.j <= 1e-14 && nbc <= 1e-8,
        detail: format!("max|y| {max_y:.1e}, J {:.1e}, NBC at b {nbc:.1e}", r.j),
    }
}

// ---------------------------------------------------------------------------
// Criterion 6: isoperimetric example.

fn iso_closed_form(m: f64, t: f64) -> f64 {
    (4.0 * m * m - 7.0 * m - 3.0 * m * t + 6.0 * t) * t / (m * (m - 1.0))
}

/// Constrained minimum of `J` for `M = 3` over `(y(1), y(2))` by lattice
/// search, written out by hand from the problem data.
fn iso3_lattice_oracle() -> (f64, f64) {
    let j = |y1: f64, y2: f64| {
        let d = [y1, y2 - y1, 3.0 - y2];
        let jd: f64 = d.iter().map(|v| v * v).sum();
        let jn: f64 = d.iter().map(|v| v * v + v).sum();
        jd * jn
    };
    // K = (0·d0 + 1·d1 + 2·d2) · (3 · 1/3).
    let k = |y1: f64, y2: f64| (y2 - y1) + 2.0 * (3.0 - y2);
    let (mut c1, mut c2, mut half) = (0.0, 0.0, 10.0);
    for _ in 0..3 {
        let steps = 2000;
        let h = 2.0 * half / steps as f64;
        let mut best = (f64::INFINITY, c1, c2);
        for i in 0..=steps {
            let y1 = c1 - half + h * i as f64;
            for jx in 0..=steps {
                let y2 = c2 - half + h * jx as f64;
                if (k(y1, y2) - 1.0).abs() > h {
                    continue;
                }
                let v = j(y1, y2);
                if v < best.0 {
                    best = (v, y1, y2);
                }
            }
        }
        c1 = best.1;
        c2 = best.2;
        half = 10.0 * h;
    }
    (c1, c2)
}

fn criterion_6() -> (Outcome, Outcome) {
    let mut pass = true;
    let mut corrected_pass = true;
    let mut parts = Vec::new();
    let mut corrected = Vec::new();
    let mut m3 = None;
    for m in [2usize, 3, 4] {
        let pf = bundled(&format!("iso_M{m}.problem"));
        let r = solve_isoperimetric(&pf.problem, &pf.config).expect("solve_isoperimetric");
        let mf = m as f64;
        let nodes = r
            .trajectory
            .iter()
            .map(|(_, t, v)| (v - iso_closed_form(mf, t)).abs())
            .fold(0.0, f64::max);
        let k_err = (var::eval_k(&pf.problem, &r.trajectory).unwrap() - 1.0).abs();
        let (a, b) = (r.j_nabla, r.j_delta);
        let lambda = r.lambda.unwrap_or(f64::NAN);
        let printed = -(a + b) * (mf - 2.0) / (12.0 * mf * (mf - 1.0));
        let stationary = -12.0 * (a + b) * (mf - 2.0) / (mf * (mf - 1.0));
        let k_extremal = var::is_k_extremal(&pf.problem, &r.trajectory, 1e-8).unwrap();
        let ok_nodes = r.converged() && nodes <= 1e-6 && k_err <= 1e-8 && !k_extremal && !r.abnormal;
        let ok_lambda = (lambda - printed).abs() <= 1e-6;
        pass &= ok_nodes && ok_lambda;
        corrected_pass &= ok_nodes && (lambda - stationary).abs() <= 1e-6;
        parts.push(format!(
            "M={m}: nodes {nodes:.1e}, |K-1| {k_err:.1e}, K-extremal {k_extremal}, lambda {lambda:.6} vs {printed:.6}{}",
            if ok_lambda { "" } else { " MISMATCH" }
        ));
        corrected.push(format!("M={m}: lambda {lambda:.6} vs {stationary:.6}"));
        if m == 3 {
            m3 = Some(r.trajectory.values().to_vec());
        }
    }
    let (o1, o2) = iso3_lattice_oracle();
    let y = m3.expect("M=3 solved");
    let oracle_err = (y[1] - o1).abs().max((y[2] - o2).abs());
    pass &= oracle_err <= 1e-3;
    parts.push(format!("M=3 lattice oracle ({o1:.6},{o2:.6}) differs by {oracle_err:.1e}"));
    (
        Outcome { pass, detail: parts.join("; ") },
        Outcome {
            pass: corrected_pass,
            detail: format!("multiplier from the Lagrange condition at the closed form: {}", corrected.join("; ")),
        },
    )
}

// ---------------------------------------------------------------------------
// Criterion 7: reductions.

fn quadratic_lagrangian(rng: &mut ChaCha8Rng) -> Lagrangian {
    let mut c = || rng.gen_range(-2.0..2.0f64);
    let text = format!(
        "({:?})*v^2 + ({:?})*y*v + ({:?})*y^2 + ({:?})*t*v + ({:?})*y + ({:?})*t + ({:?})",
        c(),
        c(),
        c(),
        c(),
        c(),
        c(),
        c()
    );
    Lagrangian::parse(&text).unwrap()
}

fn small_scale(rng: &mut ChaCha8Rng, max_n: usize) -> Arc<TimeScale> {
    let ts = random_scale(rng);
    if ts.len() <= max_n {
        return Arc::new(ts);
    }
    let n = rng.gen_range(3..=max_n);
    let mut t = rng.gen_range(-2.0..2.0);
    let mut pts = Vec::with_capacity(n);
    for _ in 0..n {
        pts.push(t);
        t += rng.gen_range(0.05..1.0);
    }
    Arc::new(TimeScale::from_points(pts).unwrap())
}

fn criterion_7() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst: f64 = 0.0;
    let mut exact = true;
    let mut cases = 0;
    let rel = |x: f64, y: f64| (x - y).abs() / (1.0 + x.abs().max(y.abs()));
    for case in 0..40 {
        let ts = small_scale(&mut rng, 40);
        let n = ts.len();
        let unit = Lagrangian::constant(1.0 / (ts.b() - ts.a()));
        let other = quadratic_lagrangian(&mut rng);
        let delta_side = case % 2 == 0;
        let (ld, ln) = if delta_side { (other, unit) } else { (unit, other) };
        let p = VariationalProblem::new(ts.clone(), ld, ln, Boundary::Free, Boundary::Free).unwrap();
        let y = GridFunction::new(ts.clone(), random_values(&mut rng, n)).unwrap();
        let j = var::eval_j(&p, &y).unwrap();
        let r1 = var::el_residual_1(&p, &y).unwrap();
        let r2 = var::el_residual_2(&p, &y).unwrap();
        let nbc_a = var::natural_bc_residual_a(&p, &y).unwrap();
        let nbc_b = var::natural_bc_residual_b(&p, &y).unwrap();
        let nbc_b_bare = var::natural_bc_residual_b_unweighted(&p, &y).unwrap();
        if delta_side {
            exact &= j == var::eval_j_delta(&p, &y).unwrap();
            let cor = var::delta_corollary_residual(&p, &y).unwrap();
            for (x, z) in cor.residual.values().iter().zip(r2.residual.values()) {
                worst = worst.max(rel(*x, *z));
            }
            worst = worst.max(rel(cor.defect, r2.defect));
            let da = var::natural_bc_reduced(&p, &y, ReducedBc::DeltaA).unwrap();
            let db = var::natural_bc_reduced(&p, &y, ReducedBc::DeltaB).unwrap();
            worst = worst.max(rel(da, nbc_a)).max(rel(db, nbc_b)).max(rel(db, nbc_b_bare));
        } else {
            exact &= j == var::eval_j_nabla(&p, &y).unwrap();
            let cor = var::nabla_corollary_residual(&p, &y).unwrap();
            for (x, z) in cor.residual.values().iter().zip(r1.residual.values()) {
                worst = worst.max(rel(*x, *z));
            }
            worst = worst.max(rel(cor.defect, r1.defect));
            let na = var::natural_bc_reduced(&p, &y, ReducedBc::NablaA).unwrap();
            let nap = var::natural_bc_reduced(&p, &y, ReducedBc::NablaAProduct).unwrap();
            let nb = var::natural_bc_reduced(&p, &y, ReducedBc::NablaB).unwrap();
            worst = worst
                .max(rel(na, nbc_a))
                .max(rel(nap, nbc_a))
                .max(rel(nb, nbc_b))
                .max(rel(nb, nbc_b_bare));
        }
        cases += 1;
    }
    Outcome {
        pass: exact && worst <= 1e-10,
        detail: format!("{cases} random problems, J equals the reduced functional exactly: {exact}, worst residual gap {worst:.1e}"),
    }
}

// ---------------------------------------------------------------------------
// Criterion 8: gradient and first variation against finite differences.

fn criterion_8() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut worst_grad: f64 = 0.0;
    let mut worst_var: f64 = 0.0;
    for _ in 0..100 {
        let ts = small_scale(&mut rng, 30);
        let n = ts.len();
        let p = VariationalProblem::new(
            ts.clone(),
            quadratic_lagrangian(&mut rng),
            quadratic_lagrangian(&mut rng),
            Boundary::Free,
            Boundary::Free,
        )
        .unwrap();
        let yv: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let y = GridFunction::new(ts.clone(), yv.clone()).unwrap();
        let grad = var::gradient(&p, &y).unwrap();
        let j_at = |v: Vec<f64>| var::eval_j(&p, &GridFunction::new(ts.clone(), v).unwrap()).unwrap();
        let mut fd = Vec::with_capacity(n);
        for k in 0..n {
            let h = 1e-5 * (1.0 + yv[k].abs());
            let mut up = yv.clone();
            let mut down = yv.clone();
            up[k] += h;
            down[k] -= h;
            fd.push((j_at(up) - j_at(down)) / (2.0 * h));
        }
        let norm = grad.iter().map(|v| v.abs()).fold(0.0, f64::max).max(1e-300);
        worst_grad = worst_grad.max(max_abs_diff(&grad, &fd) / norm);

        let eta_v: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let eta = GridFunction::new(ts.clone(), eta_v.clone()).unwrap();
        let pairing = var::first_variation(&p, &y, &eta).unwrap();
        let eps = 1e-5;
        let shifted = |s: f64| yv.iter().zip(&eta_v).map(|(a, b)| a + s * b).collect::<Vec<_>>();
        let directional = (j_at(shifted(eps)) - j_at(shifted(-eps))) / (2.0 * eps);
        let scale = pairing.abs().max(directional.abs()).max(1e-300);
        worst_var = worst_var.max((pairing - directional).abs() / scale);
    }
    Outcome {
        pass: worst_grad <= 1e-5 && worst_var <= 1e-5,
        detail: format!(
            "100 random problems, worst gradient relative error {worst_grad:.1e}, worst first-variation relative error {worst_var:.1e}"
        ),
    }
}

// ---------------------------------------------------------------------------
// Criterion 9: converged solves are stationary in both forms.

fn positive_quadratic(rng: &mut ChaCha8Rng) -> Lagrangian {
    let text = format!(
        "({:?})*v^2 + ({:?})*y^2 + ({:?})*t*v + ({:?})",
        rng.gen_range(0.2..2.0),
        rng.gen_range(0.0..1.0),
        rng.gen_range(-0.5..0.5),
        rng.gen_range(1.0..3.0)
    );
    Lagrangian::parse(&text).unwrap()
}

fn defects(r: &SolveReport, iso: bool) -> (f64, f64) {
    if iso {
        (r.iso_defect_1.unwrap_or(f64::NAN), r.iso_defect_2.unwrap_or(f64::NAN))
    } else {
        (r.el_defect_1, r.el_defect_2)
    }
}

fn criterion_9() -> Outcome {
    let mut checked = 0;
    let mut skipped = Vec::new();
    let mut violations = Vec::new();
    let mut run = |label: String, p: &VariationalProblem, cfg: &SolverConfig| {
        let iso = p.constraint().is_some();
        let r = if iso { solve_isoperimetric(p, cfg) } else { solve(p, cfg) }.expect("solve");
        if !r.converged() {
            skipped.push(label);
            return;
        }
        checked += 1;
        let bound = 10.0 * cfg.grad_tol * (1.0 + r.j.abs());
        let (d1, d2) = defects(&r, iso);
        if !(d1 <= bound && d2 <= bound) {
            violations.push(format!("{label}: {d1:.1e}/{d2:.1e} > {bound:.1e}"));
        }
    };
    for (name, _) in BUNDLED_PROBLEMS {
        let pf = bundled(name);
        run(name.to_string(), &pf.problem, &pf.config);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let cfg = SolverConfig::default();
    for i in 0..20 {
        let ts = small_scale(&mut rng, 25);
        let bc = |rng: &mut ChaCha8Rng| {
            if rng.gen_bool(0.3) {
                Boundary::Free
            } else {
                Boundary::Fixed(rng.gen_range(-2.0..2.0))
            }
        };
        let (a, b) = (bc(&mut rng), bc(&mut rng));
        let mut p =
            VariationalProblem::new(ts.clone(), positive_quadratic(&mut rng), positive_quadratic(&mut rng), a, b).unwrap();
        if i % 5 == 4 {
            p = p
                .with_constraint(Constraint {
                    k_delta: Lagrangian::parse("v").unwrap(),
                    k_nabla: Lagrangian::parse("y^2 + 1").unwrap(),
                    k: rng.gen_range(1.0..3.0),
                })
                .unwrap();
        }
        run(format!("random #{i}"), &p, &cfg);
    }
    let mut detail = format!(
        "{checked} converged solves checked, not converged and skipped: [{}]",
        skipped.join(", ")
    );
    if !violations.is_empty() {
        detail += &format!("; violations: {}", violations.join("; "));
    }
    Outcome {
        pass: violations.is_empty() && checked > 0,
        detail,
    }
}

fn main() {
    let mut failed = 0;
    let mut report = |label: &str, o: Outcome| {
        println!("{label}: {} ({})", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        if !o.pass {
            failed += 1;
        }
    };
    report("criterion 1 (calculus identities)", criterion_1());
    report("criterion 2 (straight-line example)", criterion_2());
    report("criterion 3 (product example, uniform grids)", criterion_3());
    report("criterion 4 (product example, three points)", criterion_4());
    report("criterion 5 (free endpoint)", criterion_5());
    let (six, six_corrected) = criterion_6();
    report("criterion 6 (isoperimetric example)", six);
    report("criterion 6, informational (isoperimetric multiplier)", six_corrected);
    report("criterion 7 (reductions)", criterion_7());
    report("criterion 8 (gradient and first variation)", criterion_8());
    report("criterion 9 (stationarity of converged solves)", criterion_9());
    if failed > 0 {
        println!("{failed} acceptance line(s) failed");
        std::process::exit(1);
    }
}
