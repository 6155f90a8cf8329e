//! Finite time scales `t_0 < t_1 < ... < t_{N-1}` with jump and graininess
//! operators.
//!
//! Every query exists in two flavours: by index (`sigma_index`, `mu_at`, ...)
//! which is what the numerical code uses, and by value (`sigma`, `mu`, ...)
//! which fails unless the argument is exactly one of the points.

use std::fmt;
use std::ops::Range;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScaleError {
    #[error("a time scale needs at least 3 points, got {0}")]
    TooFewPoints(usize),
    #[error("points must be finite; index {0} is not")]
    NonFinite(usize),
    #[error("points must be strictly increasing; t[{index}] = {value} does not exceed its predecessor")]
    NotIncreasing { index: usize, value: f64 },
    #[error("invalid generator: {0}")]
    InvalidGenerator(String),
    #[error("{0} is not a point of the time scale")]
    NotAPoint(f64),
}

/// Generator that produced a scale. Purely informational.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ScaleKind {
    Explicit,
    Uniform,
    HIntegers { h: f64 },
    QScale { q: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PointClass {
    RightScattered,
    RightDense,
    LeftScattered,
    LeftDense,
    /// Both left- and right-scattered.
    Isolated,
    /// Both left- and right-dense.
    Dense,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimeScale {
    points: Vec<f64>,
    kind: ScaleKind,
}

impl TimeScale {
    pub fn from_points(points: Vec<f64>) -> Result<Self, ScaleError> {
        Self::build(points, ScaleKind::Explicit)
    }

    fn build(points: Vec<f64>, kind: ScaleKind) -> Result<Self, ScaleError> {
        if points.len() < 3 {
            return Err(ScaleError::TooFewPoints(points.len()));
        }
        if let Some(i) = points.iter().position(|x| !x.is_finite()) {
            return Err(ScaleError::NonFinite(i));
        }
        for i in 1..points.len() {
            if points[i] <= points[i - 1] {
                return Err(ScaleError::NotIncreasing {
                    index: i,
                    value: points[i],
                });
            }
        }
        Ok(Self { points, kind })
    }

    /// `n` equally spaced points from `a` to `b`. The last point is `b` exactly.
    pub fn uniform(a: f64, b: f64, n: usize) -> Result<Self, ScaleError> {
        if n < 3 {
            return Err(ScaleError::TooFewPoints(n));
        }
        if !(a.is_finite() && b.is_finite() && a < b) {
            return Err(ScaleError::InvalidGenerator(format!("uniform needs a < b, got [{a}, {b}]")));
        }
        let step = (b - a) / (n - 1) as f64;
        let mut points: Vec<f64> = (0..n).map(|i| a + i as f64 * step).collect();
        points[n - 1] = b;
        Self::build(points, ScaleKind::Uniform)
    }

    /// `{a, a+h, ..., b}`; `(b - a)/h` must be an integer of at least 2.
    pub fn h_integers(a: f64, b: f64, h: f64) -> Result<Self, ScaleError> {
        if !(h > 0.0 && h.is_finite() && a.is_finite() && b.is_finite() && a < b) {
            return Err(ScaleError::InvalidGenerator(format!(
                "h-integers need a < b and h > 0, got a={a}, b={b}, h={h}"
            )));
        }
        let ratio = (b - a) / h;
        let steps = ratio.round();
        if (ratio - steps).abs() > 1e-9 * ratio.max(1.0) || steps < 2.0 {
            return Err(ScaleError::InvalidGenerator(format!(
                "(b - a)/h = {ratio} is not an integer >= 2"
            )));
        }
        let steps = steps as usize;
        let mut points: Vec<f64> = (0..=steps).map(|k| a + k as f64 * h).collect();
        points[steps] = b;
        Self::build(points, ScaleKind::HIntegers { h })
    }

    /// `{q^kmin, ..., q^kmax}`.
    pub fn q_scale(q: f64, kmin: i32, kmax: i32) -> Result<Self, ScaleError> {
        if !(q > 1.0 && q.is_finite()) {
            return Err(ScaleError::InvalidGenerator(format!("q-scale needs q > 1, got {q}")));
        }
        if kmax < kmin.saturating_add(2) {
            return Err(ScaleError::InvalidGenerator(format!(
                "q-scale needs kmax >= kmin + 2, got {kmin}..{kmax}"
            )));
        }
        let points = (kmin..=kmax).map(|k| q.powi(k)).collect();
        Self::build(points, ScaleKind::QScale { q })
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn kind(&self) -> ScaleKind {
        self.kind
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn a(&self) -> f64 {
        self.points[0]
    }

    pub fn b(&self) -> f64 {
        self.points[self.points.len() - 1]
    }

    pub fn point(&self, i: usize) -> f64 {
        self.points[i]
    }

    /// Index of `t`, which must be a point of the scale exactly.
    pub fn index_of(&self, t: f64) -> Result<usize, ScaleError> {
        self.points
            .binary_search_by(|p| p.total_cmp(&t))
            .map_err(|_| ScaleError::NotAPoint(t))
    }

    pub fn sigma_index(&self, i: usize) -> usize {
        (i + 1).min(self.len() - 1)
    }

    pub fn rho_index(&self, i: usize) -> usize {
        i.saturating_sub(1)
    }

    /// Forward graininess at index `i`; zero at the last point.
    pub fn mu_at(&self, i: usize) -> f64 {
        self.points[self.sigma_index(i)] - self.points[i]
    }

    /// Backward graininess at index `i`; zero at the first point.
    pub fn nu_at(&self, i: usize) -> f64 {
        self.points[i] - self.points[self.rho_index(i)]
    }

    pub fn sigma(&self, t: f64) -> Result<f64, ScaleError> {
        Ok(self.points[self.sigma_index(self.index_of(t)?)])
    }

    pub fn rho(&self, t: f64) -> Result<f64, ScaleError> {
        Ok(self.points[self.rho_index(self.index_of(t)?)])
    }

    pub fn mu(&self, t: f64) -> Result<f64, ScaleError> {
        Ok(self.mu_at(self.index_of(t)?))
    }

    pub fn nu(&self, t: f64) -> Result<f64, ScaleError> {
        Ok(self.nu_at(self.index_of(t)?))
    }

    /// Classification of the point at index `i`. On a finite scale every
    /// interior point is isolated; `a` is left-dense by convention
    /// (`rho(a) = a`) and `b` right-dense (`sigma(b) = b`).
    pub fn classify_at(&self, i: usize) -> PointClass {
        let right_scattered = self.sigma_index(i) != i;
        let left_scattered = self.rho_index(i) != i;
        match (left_scattered, right_scattered) {
            (true, true) => PointClass::Isolated,
            (false, true) => PointClass::RightScattered,
            (true, false) => PointClass::LeftScattered,
            (false, false) => PointClass::Dense,
        }
    }

    pub fn classify(&self, t: f64) -> Result<PointClass, ScaleError> {
        Ok(self.classify_at(self.index_of(t)?))
    }

    /// `T^κ`: every point except the maximum.
    pub fn kappa_range(&self) -> Range<usize> {
        0..self.len() - 1
    }

    /// `T_κ`: every point except the minimum.
    pub fn kappa_sub_range(&self) -> Range<usize> {
        1..self.len()
    }

    /// `T^{κ²}`: drops the two largest points.
    pub fn kappa2_range(&self) -> Range<usize> {
        0..self.len() - 2
    }

    /// `T_{κ²}`: drops the two smallest points.
    pub fn kappa2_sub_range(&self) -> Range<usize> {
        2..self.len()
    }

    /// `T_κ ∩ T^κ`: the interior points.
    pub fn interior_range(&self) -> Range<usize> {
        1..self.len() - 1
    }
}

impl fmt::Display for TimeScale {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            ScaleKind::Uniform => write!(f, "uniform {} {} {}", self.a(), self.b(), self.len()),
            ScaleKind::HIntegers { h } => write!(f, "hz {} {} {}", self.a(), self.b(), h),
            _ => {
                f.write_str("explicit [")?;
                for (i, p) in self.points.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{p}")?;
                }
                f.write_str("]")
            }
        }
    }
}
