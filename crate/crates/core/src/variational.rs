//! Delta-nabla variational problems: the product functional
//! `J(y) = J_Δ(y) · J_∇(y)` with
//!
//! ```text
//! J_Δ(y) = ∫_a^b L_Δ(t, y^σ(t), y^Δ(t)) Δt,    J_∇(y) = ∫_a^b L_∇(t, y^ρ(t), y^∇(t)) ∇t,
//! ```
//!
//! its Euler–Lagrange residuals, natural boundary conditions and the
//! isoperimetric multiplier conditions.
//!
//! On a scale with points `t_0 < ... < t_{N-1}` write `d_i = y^Δ(t_i)` and
//!
//! ```text
//! F(t) = ∂₃L_Δ[y](t) - ∫_a^t ∂₂L_Δ[y] Δτ     (t in T^κ)
//! G(t) = ∂₃L_∇{y}(t) - ∫_a^t ∂₂L_∇{y} ∇τ     (t in T_κ)
//! ```
//!
//! The first Euler–Lagrange form is `J_∇ F(ρ(t)) + J_Δ G(t)` on `T_κ`, the
//! second `J_∇ F(t) + J_Δ G(σ(t))` on `T^κ`. Both are constant along an
//! extremal; the gradient of `J` with respect to an interior node value is
//! exactly the difference of two consecutive residual values.

use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use crate::calculus::{to_csv_with_header, CalculusError, GridFunction};
use crate::expr::{Binding, EvalError, Expr, ParseError, Var};
use crate::fmt::g17;
use crate::timescale::TimeScale;

/// A candidate `y`, defined on every point of the scale.
pub type Trajectory = GridFunction;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum VariationalError {
    #[error("{which} is not defined at t = {t}: {source}")]
    Eval {
        which: &'static str,
        t: f64,
        source: EvalError,
    },
    #[error("trajectory does not live on the problem's time scale")]
    ScaleMismatch,
    #[error("trajectory must be defined at every point of the scale")]
    PartialTrajectory,
    #[error("endpoint {0} is not free")]
    EndpointNotFree(char),
    #[error("{0}")]
    NotApplicable(String),
    #[error("the problem has no isoperimetric constraint")]
    NoConstraint,
    #[error("multipliers lambda0 and lambda must not both vanish")]
    ZeroMultipliers,
    #[error("invalid problem: {0}")]
    Invalid(String),
    #[error(transparent)]
    Calculus(#[from] CalculusError),
}

/// A Lagrangian with its partials `∂₂ = d/dy` and `∂₃ = d/dv` precomputed.
#[derive(Debug, Clone, PartialEq)]
pub struct Lagrangian {
    expr: Expr,
    d_y: Expr,
    d_v: Expr,
    constant: Option<f64>,
}

impl Lagrangian {
    pub fn new(expr: Expr) -> Self {
        let d_y = expr.differentiate(Var::Y);
        let d_v = expr.differentiate(Var::V);
        let constant = expr.fold().as_const();
        Self { expr, d_y, d_v, constant }
    }

    pub fn parse(text: &str) -> Result<Self, ParseError> {
        Ok(Self::new(Expr::parse(text)?))
    }

    /// The constant Lagrangian `c`.
    pub fn constant(c: f64) -> Self {
        Self::new(Expr::Const(c))
    }

    pub fn expr(&self) -> &Expr {
        &self.expr
    }

    pub fn d_y(&self) -> &Expr {
        &self.d_y
    }

    pub fn d_v(&self) -> &Expr {
        &self.d_v
    }

    /// True when the Lagrangian depends on `t` alone, so both partials fold
    /// to zero.
    pub fn is_state_free(&self) -> bool {
        self.d_y.is_zero() && self.d_v.is_zero()
    }

    /// `∫_a^b c` over either calculus when the Lagrangian is a constant `c`.
    /// A result within a few ulps of one is the normalising constant
    /// `1/(b - a)` and is returned as exactly one, so a functional scaled by
    /// it is left bit-for-bit unchanged.
    fn constant_integral(&self, ts: &TimeScale) -> Option<f64> {
        let v = self.constant? * (ts.b() - ts.a());
        Some(if (v - 1.0).abs() <= 4.0 * f64::EPSILON { 1.0 } else { v })
    }
}

impl fmt::Display for Lagrangian {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.expr.fmt(f)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Boundary {
    Fixed(f64),
    Free,
}

impl Boundary {
    pub fn is_free(self) -> bool {
        matches!(self, Boundary::Free)
    }

    pub fn fixed_value(self) -> Option<f64> {
        match self {
            Boundary::Fixed(v) => Some(v),
            Boundary::Free => None,
        }
    }
}

impl fmt::Display for Boundary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Boundary::Fixed(v) => write!(f, "fixed:{v}"),
            Boundary::Free => f.write_str("free"),
        }
    }
}

/// Isoperimetric constraint `K(y) = K_Δ(y) · K_∇(y) = k`.
#[derive(Debug, Clone, PartialEq)]
pub struct Constraint {
    pub k_delta: Lagrangian,
    pub k_nabla: Lagrangian,
    pub k: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VariationalProblem {
    scale: Arc<TimeScale>,
    l_delta: Lagrangian,
    l_nabla: Lagrangian,
    bc_a: Boundary,
    bc_b: Boundary,
    constraint: Option<Constraint>,
}

impl VariationalProblem {
    pub fn new(
        scale: Arc<TimeScale>,
        l_delta: Lagrangian,
        l_nabla: Lagrangian,
        bc_a: Boundary,
        bc_b: Boundary,
    ) -> Result<Self, VariationalError> {
        for (end, bc) in [('a', bc_a), ('b', bc_b)] {
            if let Boundary::Fixed(v) = bc {
                if !v.is_finite() {
                    return Err(VariationalError::Invalid(format!("boundary value at {end} is not finite")));
                }
            }
        }
        Ok(Self {
            scale,
            l_delta,
            l_nabla,
            bc_a,
            bc_b,
            constraint: None,
        })
    }

    pub fn with_constraint(mut self, constraint: Constraint) -> Result<Self, VariationalError> {
        if !constraint.k.is_finite() {
            return Err(VariationalError::Invalid("constraint level k is not finite".into()));
        }
        self.constraint = Some(constraint);
        Ok(self)
    }

    pub fn scale(&self) -> &Arc<TimeScale> {
        &self.scale
    }

    pub fn l_delta(&self) -> &Lagrangian {
        &self.l_delta
    }

    pub fn l_nabla(&self) -> &Lagrangian {
        &self.l_nabla
    }

    pub fn bc_a(&self) -> Boundary {
        self.bc_a
    }

    pub fn bc_b(&self) -> Boundary {
        self.bc_b
    }

    pub fn constraint(&self) -> Option<&Constraint> {
        self.constraint.as_ref()
    }

    /// `L_∇` carries no state dependence: the problem is a delta problem
    /// scaled by `J_∇`.
    pub fn is_pure_delta(&self) -> bool {
        self.l_nabla.is_state_free()
    }

    /// `L_Δ` carries no state dependence.
    pub fn is_pure_nabla(&self) -> bool {
        self.l_delta.is_state_free()
    }

    pub(crate) fn objective(&self) -> Pair<'_> {
        Pair {
            delta: &self.l_delta,
            nabla: &self.l_nabla,
            names: ["L_delta", "L_nabla"],
        }
    }

    pub(crate) fn constraint_pair(&self) -> Result<(Pair<'_>, f64), VariationalError> {
        let c = self.constraint.as_ref().ok_or(VariationalError::NoConstraint)?;
        Ok((
            Pair {
                delta: &c.k_delta,
                nabla: &c.k_nabla,
                names: ["K_delta", "K_nabla"],
            },
            c.k,
        ))
    }

    /// Checks that `y` is a full trajectory on this problem's scale and
    /// returns its node values.
    pub fn node_values<'y>(&self, y: &'y Trajectory) -> Result<&'y [f64], VariationalError> {
        if !(Arc::ptr_eq(y.scale(), &self.scale) || y.scale().points() == self.scale.points()) {
            return Err(VariationalError::ScaleMismatch);
        }
        if !y.is_full() {
            return Err(VariationalError::PartialTrajectory);
        }
        Ok(y.values())
    }

    pub fn trajectory(&self, values: Vec<f64>) -> Result<Trajectory, VariationalError> {
        Ok(GridFunction::new(self.scale.clone(), values)?)
    }
}

/// The two Lagrangians of one product functional (either `J` or `K`).
#[derive(Clone, Copy)]
pub(crate) struct Pair<'a> {
    pub delta: &'a Lagrangian,
    pub nabla: &'a Lagrangian,
    names: [&'static str; 2],
}

/// Functional values and partials along a trajectory. Delta quantities are
/// indexed by `i` in `T^κ`, nabla quantities by `i - 1` for `i` in `T_κ`.
#[derive(Debug, Clone)]
pub(crate) struct PairEval {
    pub j_delta: f64,
    pub j_nabla: f64,
    pub dy_delta: Vec<f64>,
    pub dv_delta: Vec<f64>,
    pub dy_nabla: Vec<f64>,
    pub dv_nabla: Vec<f64>,
}

impl PairEval {
    pub fn j(&self) -> f64 {
        self.j_delta * self.j_nabla
    }
}

fn eval_expr(e: &Expr, b: &Binding, which: &'static str) -> Result<f64, VariationalError> {
    e.eval(b).map_err(|source| VariationalError::Eval { which, t: b.t, source })
}

impl<'a> Pair<'a> {
    fn delta_binding(ts: &TimeScale, y: &[f64], i: usize) -> Binding {
        let d = (y[i + 1] - y[i]) / ts.mu_at(i);
        Binding::new(ts.point(i), y[i + 1], d)
    }

    fn nabla_binding(ts: &TimeScale, y: &[f64], i: usize) -> Binding {
        let d = (y[i] - y[i - 1]) / ts.nu_at(i);
        Binding::new(ts.point(i), y[i - 1], d)
    }

    /// `(J_Δ, J_∇)`.
    pub fn values(&self, ts: &TimeScale, y: &[f64]) -> Result<(f64, f64), VariationalError> {
        let n = ts.len();
        let jd = match self.delta.constant_integral(ts) {
            Some(v) => v,
            None => {
                let mut jd = 0.0;
                for i in 0..n - 1 {
                    let b = Self::delta_binding(ts, y, i);
                    jd += ts.mu_at(i) * eval_expr(self.delta.expr(), &b, self.names[0])?;
                }
                jd
            }
        };
        let jn = match self.nabla.constant_integral(ts) {
            Some(v) => v,
            None => {
                let mut jn = 0.0;
                for i in 1..n {
                    let b = Self::nabla_binding(ts, y, i);
                    jn += ts.nu_at(i) * eval_expr(self.nabla.expr(), &b, self.names[1])?;
                }
                jn
            }
        };
        Ok((jd, jn))
    }

    pub fn evaluate(&self, ts: &TimeScale, y: &[f64]) -> Result<PairEval, VariationalError> {
        let n = ts.len();
        let (j_delta, j_nabla) = self.values(ts, y)?;
        let mut out = PairEval {
            j_delta,
            j_nabla,
            dy_delta: Vec::with_capacity(n - 1),
            dv_delta: Vec::with_capacity(n - 1),
            dy_nabla: Vec::with_capacity(n - 1),
            dv_nabla: Vec::with_capacity(n - 1),
        };
        for i in 0..n - 1 {
            let b = Self::delta_binding(ts, y, i);
            out.dy_delta.push(eval_expr(self.delta.d_y(), &b, self.names[0])?);
            out.dv_delta.push(eval_expr(self.delta.d_v(), &b, self.names[0])?);
        }
        for i in 1..n {
            let b = Self::nabla_binding(ts, y, i);
            out.dy_nabla.push(eval_expr(self.nabla.d_y(), &b, self.names[1])?);
            out.dv_nabla.push(eval_expr(self.nabla.d_v(), &b, self.names[1])?);
        }
        Ok(out)
    }
}

/// `F` on `T^κ` (index `i`) and `G` on `T_κ` (index `i - 1`).
fn f_and_g(ts: &TimeScale, e: &PairEval) -> (Vec<f64>, Vec<f64>) {
    let n = ts.len();
    let mut f = Vec::with_capacity(n - 1);
    let mut acc = 0.0;
    for i in 0..n - 1 {
        f.push(e.dv_delta[i] - acc);
        acc += ts.mu_at(i) * e.dy_delta[i];
    }
    let mut g = Vec::with_capacity(n - 1);
    let mut acc = 0.0;
    for i in 1..n {
        acc += ts.nu_at(i) * e.dy_nabla[i - 1];
        g.push(e.dv_nabla[i - 1] - acc);
    }
    (f, g)
}

/// First form on `T_κ`: element `k` belongs to index `k + 1`.
pub(crate) fn residual_1(ts: &TimeScale, e: &PairEval) -> Vec<f64> {
    let (f, g) = f_and_g(ts, e);
    (0..ts.len() - 1)
        .map(|k| e.j_nabla * f[k] + e.j_delta * g[k])
        .collect()
}

/// Second form on `T^κ`: element `k` belongs to index `k`. The values are
/// the same numbers as the first form, attached one point earlier.
pub(crate) fn residual_2(ts: &TimeScale, e: &PairEval) -> Vec<f64> {
    residual_1(ts, e)
}

/// Gradient of `J_Δ · J_∇` with respect to every node value.
pub(crate) fn pair_gradient(ts: &TimeScale, e: &PairEval) -> Vec<f64> {
    let n = ts.len();
    let mut gd = vec![0.0; n];
    let mut gn = vec![0.0; n];
    for i in 0..n - 1 {
        gd[i + 1] += ts.mu_at(i) * e.dy_delta[i] + e.dv_delta[i];
        gd[i] -= e.dv_delta[i];
    }
    for i in 1..n {
        gn[i - 1] += ts.nu_at(i) * e.dy_nabla[i - 1] - e.dv_nabla[i - 1];
        gn[i] += e.dv_nabla[i - 1];
    }
    (0..n).map(|i| e.j_nabla * gd[i] + e.j_delta * gn[i]).collect()
}

/// Natural boundary quantities `(at a, at b)`; each equals `∂J/∂y` at that
/// endpoint.
pub(crate) fn pair_nbc(ts: &TimeScale, e: &PairEval) -> (f64, f64) {
    let n = ts.len();
    let r2 = residual_2(ts, e);
    let at_a = r2[0];
    let m = n - 2;
    let at_b = e.j_nabla * (e.dv_delta[m] + ts.mu_at(m) * e.dy_delta[m]) + e.j_delta * e.dv_nabla[m];
    (at_a, at_b)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ResidualForm {
    El1,
    El2,
    Iso1,
    Iso2,
}

impl fmt::Display for ResidualForm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ResidualForm::El1 => "el1",
            ResidualForm::El2 => "el2",
            ResidualForm::Iso1 => "iso1",
            ResidualForm::Iso2 => "iso2",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResidualReport {
    pub residual: GridFunction,
    /// `max |r - mean(r)|`; exactly zero iff the residual is constant.
    pub defect: f64,
    pub mean: f64,
    pub form: ResidualForm,
}

impl ResidualReport {
    fn build(scale: Arc<TimeScale>, form: ResidualForm, values: Vec<f64>) -> Result<Self, VariationalError> {
        let n = scale.len();
        let domain = match form {
            ResidualForm::El1 | ResidualForm::Iso1 => 1..n,
            ResidualForm::El2 | ResidualForm::Iso2 => 0..n - 1,
        };
        let (defect, mean) = defect_and_mean(&values);
        let residual = GridFunction::on_domain(scale, domain, values)?;
        Ok(Self {
            residual,
            defect,
            mean,
            form,
        })
    }

    /// CSV with header `t,residual`.
    pub fn to_csv(&self) -> String {
        to_csv_with_header(&self.residual, "residual")
    }

    /// `form,defect,mean` header plus one data line.
    pub fn summary_csv(&self) -> String {
        format!("form,defect,mean\n{},{},{}\n", self.form, g17(self.defect), g17(self.mean))
    }
}

/// `(max |r - mean|, mean)`, with the defect forced to zero for constant input.
pub fn defect_and_mean(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    if values.iter().all(|&v| v == values[0]) {
        return (0.0, values[0]);
    }
    let defect = values.iter().map(|v| (v - mean).abs()).fold(0.0, f64::max);
    (defect, mean)
}

pub fn eval_j_delta(p: &VariationalProblem, y: &Trajectory) -> Result<f64, VariationalError> {
    Ok(p.objective().values(p.scale(), p.node_values(y)?)?.0)
}

pub fn eval_j_nabla(p: &VariationalProblem, y: &Trajectory) -> Result<f64, VariationalError> {
    Ok(p.objective().values(p.scale(), p.node_values(y)?)?.1)
}

pub fn eval_j(p: &VariationalProblem, y: &Trajectory) -> Result<f64, VariationalError> {
    let (jd, jn) = p.objective().values(p.scale(), p.node_values(y)?)?;
    Ok(jd * jn)
}

/// `(K_Δ, K_∇)` of the constraint.
pub fn eval_k_parts(p: &VariationalProblem, y: &Trajectory) -> Result<(f64, f64), VariationalError> {
    let (pair, _) = p.constraint_pair()?;
    pair.values(p.scale(), p.node_values(y)?)
}

pub fn eval_k(p: &VariationalProblem, y: &Trajectory) -> Result<f64, VariationalError> {
    let (kd, kn) = eval_k_parts(p, y)?;
    Ok(kd * kn)
}

pub fn el_residual_1(p: &VariationalProblem, y: &Trajectory) -> Result<ResidualReport, VariationalError> {
    let e = p.objective().evaluate(p.scale(), p.node_values(y)?)?;
    ResidualReport::build(p.scale().clone(), ResidualForm::El1, residual_1(p.scale(), &e))
}

pub fn el_residual_2(p: &VariationalProblem, y: &Trajectory) -> Result<ResidualReport, VariationalError> {
    let e = p.objective().evaluate(p.scale(), p.node_values(y)?)?;
    ResidualReport::build(p.scale().clone(), ResidualForm::El2, residual_2(p.scale(), &e))
}

/// `∂₃L_Δ[y](t) - ∫_a^t ∂₂L_Δ[y] Δτ` on `T^κ`, the Euler–Lagrange
/// expression of a problem without nabla state dependence.
pub fn delta_corollary_residual(p: &VariationalProblem, y: &Trajectory) -> Result<ResidualReport, VariationalError> {
    if !p.is_pure_delta() {
        return Err(VariationalError::NotApplicable(
            "delta reduction needs a nabla Lagrangian without y or v dependence".into(),
        ));
    }
    let e = p.objective().evaluate(p.scale(), p.node_values(y)?)?;
    let (f, _) = f_and_g(p.scale(), &e);
    ResidualReport::build(p.scale().clone(), ResidualForm::El2, f)
}

/// `∂₃L_∇{y}(t) - ∫_a^t ∂₂L_∇{y} ∇τ` on `T_κ`.
pub fn nabla_corollary_residual(p: &VariationalProblem, y: &Trajectory) -> Result<ResidualReport, VariationalError> {
    if !p.is_pure_nabla() {
        return Err(VariationalError::NotApplicable(
            "nabla reduction needs a delta Lagrangian without y or v dependence".into(),
        ));
    }
    let e = p.objective().evaluate(p.scale(), p.node_values(y)?)?;
    let (_, g) = f_and_g(p.scale(), &e);
    ResidualReport::build(p.scale().clone(), ResidualForm::El1, g)
}

/// Pointwise residual of a differential Euler–Lagrange equation.
#[derive(Debug, Clone, PartialEq)]
pub struct DifferentialResidual {
    pub residual: GridFunction,
    /// The opposite Lagrangian depends on the state, so the differential form
    /// is not a necessary condition for this problem.
    pub mixed: bool,
}

/// `(Δ/Δt) ∂₃L_Δ[y](t) - ∂₂L_Δ[y](t)` on `T^{κ²}`.
pub fn el_differential_delta(p: &VariationalProblem, y: &Trajectory) -> Result<DifferentialResidual, VariationalError> {
    let ts = p.scale().clone();
    let e = p.objective().evaluate(&ts, p.node_values(y)?)?;
    let n = ts.len();
    let dv = GridFunction::on_domain(ts.clone(), 0..n - 1, e.dv_delta.clone())?;
    let dy = GridFunction::on_domain(ts, 0..n - 1, e.dy_delta)?;
    Ok(DifferentialResidual {
        residual: dv.delta_derivative()?.sub(&dy)?,
        mixed: !p.is_pure_delta(),
    })
}

/// `(∇/∇t) ∂₃L_∇{y}(t) - ∂₂L_∇{y}(t)` on `T_{κ²}`.
pub fn el_differential_nabla(p: &VariationalProblem, y: &Trajectory) -> Result<DifferentialResidual, VariationalError> {
    let ts = p.scale().clone();
    let e = p.objective().evaluate(&ts, p.node_values(y)?)?;
    let n = ts.len();
    let dv = GridFunction::on_domain(ts.clone(), 1..n, e.dv_nabla.clone())?;
    let dy = GridFunction::on_domain(ts, 1..n, e.dy_nabla)?;
    Ok(DifferentialResidual {
        residual: dv.nabla_derivative()?.sub(&dy)?,
        mixed: !p.is_pure_nabla(),
    })
}

/// Natural boundary residual at `a`:
/// `J_Δ (∂₃L_∇{y}(σ(a)) - ∫_a^{σ(a)} ∂₂L_∇ ∇τ) + J_∇ ∂₃L_Δ[y](a)`.
pub fn natural_bc_residual_a(p: &VariationalProblem, y: &Trajectory) -> Result<f64, VariationalError> {
    if !p.bc_a().is_free() {
        return Err(VariationalError::EndpointNotFree('a'));
    }
    let e = p.objective().evaluate(p.scale(), p.node_values(y)?)?;
    Ok(pair_nbc(p.scale(), &e).0)
}

/// Natural boundary residual at `b`:
/// `J_∇ (∂₃L_Δ[y](ρ(b)) + μ(ρ(b)) ∂₂L_Δ[y](ρ(b))) + J_Δ ∂₃L_∇{y}(b)`.
///
/// This is the first-form residual at `b` plus `J_∇ ∫_a^b ∂₂L_Δ Δτ + J_Δ ∫_a^b ∂₂L_∇ ∇τ`,
/// i.e. the partial derivative of `J` with respect to `y(b)`.
/// [`natural_bc_residual_b_unweighted`] adds the two integrals without the
/// functional weights instead.
pub fn natural_bc_residual_b(p: &VariationalProblem, y: &Trajectory) -> Result<f64, VariationalError> {
    if !p.bc_b().is_free() {
        return Err(VariationalError::EndpointNotFree('b'));
    }
    let e = p.objective().evaluate(p.scale(), p.node_values(y)?)?;
    Ok(pair_nbc(p.scale(), &e).1)
}

/// First-form residual at `b` plus the unweighted integrals
/// `∫_a^b ∂₂L_Δ Δτ + ∫_a^b ∂₂L_∇ ∇τ`. Agrees with
/// [`natural_bc_residual_b`] whenever each integral that does not vanish is
/// paired with a unit functional value.
pub fn natural_bc_residual_b_unweighted(p: &VariationalProblem, y: &Trajectory) -> Result<f64, VariationalError> {
    if !p.bc_b().is_free() {
        return Err(VariationalError::EndpointNotFree('b'));
    }
    let ts = p.scale();
    let e = p.objective().evaluate(ts, p.node_values(y)?)?;
    let r1 = residual_1(ts, &e);
    let n = ts.len();
    let int_delta: f64 = (0..n - 1).map(|i| ts.mu_at(i) * e.dy_delta[i]).sum();
    let int_nabla: f64 = (1..n).map(|i| ts.nu_at(i) * e.dy_nabla[i - 1]).sum();
    Ok(r1[n - 2] + int_delta + int_nabla)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReducedBc {
    /// `∂₃L_Δ[y](a)`.
    DeltaA,
    /// `∂₃L_Δ[y](ρ(b)) + (b - ρ(b)) ∂₂L_Δ[y](ρ(b))`.
    DeltaB,
    /// `∂₃L_∇{y}(σ(a)) - ∫_a^{σ(a)} ∂₂L_∇{y} ∇τ`.
    NablaA,
    /// `∂₃L_∇{y}(σ(a)) - (σ(a) - a) ∂₂L_∇{y}(σ(a))`.
    NablaAProduct,
    /// `∂₃L_∇{y}(b)`.
    NablaB,
}

/// Natural boundary condition of a delta-only or nabla-only problem.
pub fn natural_bc_reduced(p: &VariationalProblem, y: &Trajectory, which: ReducedBc) -> Result<f64, VariationalError> {
    let delta = matches!(which, ReducedBc::DeltaA | ReducedBc::DeltaB);
    if delta && !p.is_pure_delta() {
        return Err(VariationalError::NotApplicable(
            "delta boundary conditions need a nabla Lagrangian without y or v dependence".into(),
        ));
    }
    if !delta && !p.is_pure_nabla() {
        return Err(VariationalError::NotApplicable(
            "nabla boundary conditions need a delta Lagrangian without y or v dependence".into(),
        ));
    }
    let ts = p.scale();
    let e = p.objective().evaluate(ts, p.node_values(y)?)?;
    let n = ts.len();
    Ok(match which {
        ReducedBc::DeltaA => e.dv_delta[0],
        ReducedBc::DeltaB => {
            let m = n - 2;
            e.dv_delta[m] + (ts.b() - ts.point(m)) * e.dy_delta[m]
        }
        ReducedBc::NablaA => {
            let integral = GridFunction::on_domain(ts.clone(), 1..n, e.dy_nabla.clone())?.nabla_integral_idx(0, 1)?;
            e.dv_nabla[0] - integral
        }
        ReducedBc::NablaAProduct => e.dv_nabla[0] - (ts.point(1) - ts.a()) * e.dy_nabla[0],
        ReducedBc::NablaB => e.dv_nabla[n - 2],
    })
}

fn check_multipliers(lambda0: f64, lambda: f64) -> Result<(), VariationalError> {
    if lambda0 == 0.0 && lambda == 0.0 {
        Err(VariationalError::ZeroMultipliers)
    } else {
        Ok(())
    }
}

/// `λ₀ · (objective residual) - λ · (constraint residual)` in the first
/// (`El1`/`Iso1`) or second (`El2`/`Iso2`) form.
pub fn iso_residual(
    p: &VariationalProblem,
    y: &Trajectory,
    lambda0: f64,
    lambda: f64,
    form: ResidualForm,
) -> Result<ResidualReport, VariationalError> {
    check_multipliers(lambda0, lambda)?;
    let (kpair, _) = p.constraint_pair()?;
    let ts = p.scale();
    let values = p.node_values(y)?;
    let le = p.objective().evaluate(ts, values)?;
    let ke = kpair.evaluate(ts, values)?;
    let (lr, kr, form) = match form {
        ResidualForm::El1 | ResidualForm::Iso1 => (residual_1(ts, &le), residual_1(ts, &ke), ResidualForm::Iso1),
        ResidualForm::El2 | ResidualForm::Iso2 => (residual_2(ts, &le), residual_2(ts, &ke), ResidualForm::Iso2),
    };
    let combined = lr.iter().zip(&kr).map(|(l, k)| lambda0 * l - lambda * k).collect();
    ResidualReport::build(ts.clone(), form, combined)
}

/// Natural boundary residuals `(at a, at b)` of `λ₀ J - λ K`.
pub fn iso_natural_bc(
    p: &VariationalProblem,
    y: &Trajectory,
    lambda0: f64,
    lambda: f64,
) -> Result<(f64, f64), VariationalError> {
    check_multipliers(lambda0, lambda)?;
    let (kpair, _) = p.constraint_pair()?;
    let ts = p.scale();
    let values = p.node_values(y)?;
    let (la, lb) = pair_nbc(ts, &p.objective().evaluate(ts, values)?);
    let (ka, kb) = pair_nbc(ts, &kpair.evaluate(ts, values)?);
    Ok((lambda0 * la - lambda * ka, lambda0 * lb - lambda * kb))
}

/// Residuals of the constraint functional alone, both forms.
pub fn k_residuals(p: &VariationalProblem, y: &Trajectory) -> Result<(ResidualReport, ResidualReport), VariationalError> {
    let (kpair, _) = p.constraint_pair()?;
    let ts = p.scale();
    let ke = kpair.evaluate(ts, p.node_values(y)?)?;
    Ok((
        ResidualReport::build(ts.clone(), ResidualForm::El1, residual_1(ts, &ke))?,
        ResidualReport::build(ts.clone(), ResidualForm::El2, residual_2(ts, &ke))?,
    ))
}

/// True when `y` is an extremal of the constraint functional: both residual
/// forms of `K` have defect at most `tol`.
pub fn is_k_extremal(p: &VariationalProblem, y: &Trajectory, tol: f64) -> Result<bool, VariationalError> {
    let (r1, r2) = k_residuals(p, y)?;
    Ok(r1.defect <= tol && r2.defect <= tol)
}

/// `‖y1 - y2‖_{1,∞}`: sum of the sup norms of the shifts and both derivatives
/// of the difference over the interior points.
pub fn weak_norm(y1: &GridFunction, y2: &GridFunction) -> Result<f64, VariationalError> {
    let d = y1.sub(y2)?;
    if !d.is_full() {
        return Err(VariationalError::PartialTrajectory);
    }
    let ts = d.scale().clone();
    let sup = |g: &GridFunction| ts.interior_range().map(|i| g.at(i).abs()).fold(0.0, f64::max);
    Ok(sup(&d.shift_sigma()?)
        + sup(&d.shift_rho()?)
        + sup(&d.delta_derivative()?)
        + sup(&d.nabla_derivative()?))
}

/// Gradient of `J` with respect to every node value, assembled by the chain
/// rule from the symbolic partials.
pub fn gradient(p: &VariationalProblem, y: &Trajectory) -> Result<Vec<f64>, VariationalError> {
    let e = p.objective().evaluate(p.scale(), p.node_values(y)?)?;
    Ok(pair_gradient(p.scale(), &e))
}

/// Directional derivative of `J` at `y` along `eta`:
///
/// ```text
/// J_Δ ∫ (∂₂L_∇{y} η^ρ + ∂₃L_∇{y} η^∇) ∇t + J_∇ ∫ (∂₂L_Δ[y] η^σ + ∂₃L_Δ[y] η^Δ) Δt
/// ```
pub fn first_variation(p: &VariationalProblem, y: &Trajectory, eta: &GridFunction) -> Result<f64, VariationalError> {
    let ts = p.scale().clone();
    let e = p.objective().evaluate(&ts, p.node_values(y)?)?;
    let n = ts.len();
    if !eta.is_full() {
        return Err(VariationalError::PartialTrajectory);
    }
    let eta_sigma = eta.shift_sigma()?;
    let eta_rho = eta.shift_rho()?;
    let eta_delta = eta.delta_derivative()?;
    let eta_nabla = eta.nabla_derivative()?;
    let delta_integrand = GridFunction::on_domain(
        ts.clone(),
        0..n - 1,
        (0..n - 1)
            .map(|i| e.dy_delta[i] * eta_sigma.at(i) + e.dv_delta[i] * eta_delta.at(i))
            .collect(),
    )?;
    let nabla_integrand = GridFunction::on_domain(
        ts.clone(),
        1..n,
        (1..n)
            .map(|i| e.dy_nabla[i - 1] * eta_rho.at(i) + e.dv_nabla[i - 1] * eta_nabla.at(i))
            .collect(),
    )?;
    Ok(e.j_delta * nabla_integrand.nabla_integral(ts.a(), ts.b())?
        + e.j_nabla * delta_integrand.delta_integral(ts.a(), ts.b())?)
}
