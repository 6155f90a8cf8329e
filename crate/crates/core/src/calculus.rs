//! Delta and nabla calculus of functions defined on (a contiguous part of) a
//! finite time scale.
//!
//! A [`GridFunction`] carries the index range it is defined on, so a delta
//! derivative lives on `T^κ` and a nabla derivative on `T_κ` without any
//! padding. Operations that would need a value outside the domain fail
//! instead of extending silently.

use std::fmt::Write as _;
use std::ops::Range;
use std::sync::Arc;

use thiserror::Error;

use crate::fmt::g17;
use crate::timescale::{ScaleError, TimeScale};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CalculusError {
    #[error("grid functions live on different time scales")]
    ScaleMismatch,
    #[error("operation needs values on indices {needed:?}, function is defined on {have:?}")]
    OutsideDomain { needed: Range<usize>, have: Range<usize> },
    #[error("domain {0:?} is too small for this operation")]
    DomainTooSmall(Range<usize>),
    #[error("{len} values supplied for domain {domain:?}")]
    LengthMismatch { len: usize, domain: Range<usize> },
    #[error("value at index {0} is not finite")]
    NonFinite(usize),
    #[error(transparent)]
    Scale(#[from] ScaleError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    scale: Arc<TimeScale>,
    domain: Range<usize>,
    values: Vec<f64>,
}

fn same_scale(a: &Arc<TimeScale>, b: &Arc<TimeScale>) -> bool {
    Arc::ptr_eq(a, b) || a.points() == b.points()
}

fn covers(domain: &Range<usize>, needed: &Range<usize>) -> bool {
    needed.is_empty() || (domain.start <= needed.start && needed.end <= domain.end)
}

impl GridFunction {
    /// Function defined on every point of `scale`.
    pub fn new(scale: Arc<TimeScale>, values: Vec<f64>) -> Result<Self, CalculusError> {
        let domain = 0..scale.len();
        Self::on_domain(scale, domain, values)
    }

    pub fn on_domain(
        scale: Arc<TimeScale>,
        domain: Range<usize>,
        values: Vec<f64>,
    ) -> Result<Self, CalculusError> {
        if domain.end > scale.len() || domain.start > domain.end || values.len() != domain.len() {
            return Err(CalculusError::LengthMismatch {
                len: values.len(),
                domain,
            });
        }
        if let Some(k) = values.iter().position(|v| !v.is_finite()) {
            return Err(CalculusError::NonFinite(domain.start + k));
        }
        Ok(Self {
            scale,
            domain,
            values,
        })
    }

    /// Samples `f(t)` at every point.
    pub fn from_fn(scale: Arc<TimeScale>, f: impl Fn(f64) -> f64) -> Result<Self, CalculusError> {
        let values = scale.points().iter().map(|&t| f(t)).collect();
        Self::new(scale, values)
    }

    pub fn constant(scale: Arc<TimeScale>, c: f64) -> Result<Self, CalculusError> {
        Self::from_fn(scale, |_| c)
    }

    pub fn scale(&self) -> &Arc<TimeScale> {
        &self.scale
    }

    pub fn domain(&self) -> Range<usize> {
        self.domain.clone()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn is_full(&self) -> bool {
        self.domain == (0..self.scale.len())
    }

    /// Value at scale index `i`, if `i` is in the domain.
    pub fn get(&self, i: usize) -> Option<f64> {
        self.domain.contains(&i).then(|| self.values[i - self.domain.start])
    }

    /// Value at scale index `i`.
    ///
    /// Panics if `i` is outside the domain.
    pub fn at(&self, i: usize) -> f64 {
        self.get(i)
            .unwrap_or_else(|| panic!("index {i} outside domain {:?}", self.domain))
    }

    /// Value at the point `t`.
    pub fn value(&self, t: f64) -> Result<f64, CalculusError> {
        let i = self.scale.index_of(t)?;
        self.get(i).ok_or(CalculusError::OutsideDomain {
            needed: i..i + 1,
            have: self.domain(),
        })
    }

    /// Iterator over `(index, t, value)`.
    pub fn iter(&self) -> impl Iterator<Item = (usize, f64, f64)> + '_ {
        self.domain
            .clone()
            .zip(&self.values)
            .map(|(i, &v)| (i, self.scale.point(i), v))
    }

    fn require(&self, needed: Range<usize>) -> Result<(), CalculusError> {
        if covers(&self.domain, &needed) {
            Ok(())
        } else {
            Err(CalculusError::OutsideDomain {
                needed,
                have: self.domain(),
            })
        }
    }

    fn with_values(&self, domain: Range<usize>, values: Vec<f64>) -> Result<Self, CalculusError> {
        Self::on_domain(self.scale.clone(), domain, values)
    }

    /// Restriction to a sub-range of the current domain.
    pub fn restrict(&self, range: Range<usize>) -> Result<Self, CalculusError> {
        self.require(range.clone())?;
        let off = self.domain.start;
        Ok(Self {
            scale: self.scale.clone(),
            values: self.values[range.start - off..range.end - off].to_vec(),
            domain: range,
        })
    }

    pub fn map(&self, f: impl Fn(f64, f64) -> f64) -> Result<Self, CalculusError> {
        let values = self.iter().map(|(_, t, v)| f(t, v)).collect();
        self.with_values(self.domain(), values)
    }

    /// Pointwise combination on the intersection of both domains.
    pub fn zip_with(
        &self,
        other: &GridFunction,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<Self, CalculusError> {
        if !same_scale(&self.scale, &other.scale) {
            return Err(CalculusError::ScaleMismatch);
        }
        let domain = self.domain.start.max(other.domain.start)..self.domain.end.min(other.domain.end);
        let domain = if domain.start > domain.end { domain.start..domain.start } else { domain };
        let values = domain.clone().map(|i| f(self.at(i), other.at(i))).collect();
        self.with_values(domain, values)
    }

    pub fn add(&self, other: &GridFunction) -> Result<Self, CalculusError> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &GridFunction) -> Result<Self, CalculusError> {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn mul(&self, other: &GridFunction) -> Result<Self, CalculusError> {
        self.zip_with(other, |a, b| a * b)
    }

    pub fn scaled(&self, c: f64) -> Result<Self, CalculusError> {
        self.map(|_, v| c * v)
    }

    /// `μ(t)` as a grid function on the whole scale.
    pub fn mu(scale: Arc<TimeScale>) -> Self {
        let values = (0..scale.len()).map(|i| scale.mu_at(i)).collect();
        Self::new(scale, values).expect("graininess is finite")
    }

    /// `ν(t)` as a grid function on the whole scale.
    pub fn nu(scale: Arc<TimeScale>) -> Self {
        let values = (0..scale.len()).map(|i| scale.nu_at(i)).collect();
        Self::new(scale, values).expect("graininess is finite")
    }

    /// `f^Δ(t) = (f(σ(t)) - f(t))/μ(t)`. The result drops the last point of
    /// the domain; on a full function that is `T^κ`.
    pub fn delta_derivative(&self) -> Result<Self, CalculusError> {
        if self.domain.len() < 2 {
            return Err(CalculusError::DomainTooSmall(self.domain()));
        }
        let domain = self.domain.start..self.domain.end - 1;
        let values = domain
            .clone()
            .map(|i| (self.at(i + 1) - self.at(i)) / self.scale.mu_at(i))
            .collect();
        self.with_values(domain, values)
    }

    /// `f^∇(t) = (f(t) - f(ρ(t)))/ν(t)`. The result drops the first point of
    /// the domain; on a full function that is `T_κ`.
    pub fn nabla_derivative(&self) -> Result<Self, CalculusError> {
        if self.domain.len() < 2 {
            return Err(CalculusError::DomainTooSmall(self.domain()));
        }
        let domain = self.domain.start + 1..self.domain.end;
        let values = domain
            .clone()
            .map(|i| (self.at(i) - self.at(i - 1)) / self.scale.nu_at(i))
            .collect();
        self.with_values(domain, values)
    }

    /// `f^{ΔΔ}` on `T^{κ²}`.
    pub fn second_delta(&self) -> Result<Self, CalculusError> {
        self.delta_derivative()?.delta_derivative()
    }

    /// `f^{∇∇}` on `T_{κ²}`.
    pub fn second_nabla(&self) -> Result<Self, CalculusError> {
        self.nabla_derivative()?.nabla_derivative()
    }

    /// `f^σ = f ∘ σ`, defined wherever `σ(t)` lies in the domain of `f`.
    pub fn shift_sigma(&self) -> Result<Self, CalculusError> {
        let n = self.scale.len();
        let (s, e) = (self.domain.start, self.domain.end);
        if s == e {
            return Err(CalculusError::DomainTooSmall(self.domain()));
        }
        let end = if e == n { n } else { e - 1 };
        let domain = s.saturating_sub(1)..end;
        let values = domain
            .clone()
            .map(|i| self.at(self.scale.sigma_index(i)))
            .collect();
        self.with_values(domain, values)
    }

    /// `f^ρ = f ∘ ρ`, defined wherever `ρ(t)` lies in the domain of `f`.
    pub fn shift_rho(&self) -> Result<Self, CalculusError> {
        let n = self.scale.len();
        let (s, e) = (self.domain.start, self.domain.end);
        if s == e {
            return Err(CalculusError::DomainTooSmall(self.domain()));
        }
        let start = if s == 0 { 0 } else { s + 1 };
        let domain = start..(e + 1).min(n);
        let values = domain
            .clone()
            .map(|i| self.at(self.scale.rho_index(i)))
            .collect();
        self.with_values(domain, values)
    }

    /// `∫_{t_i}^{t_j} f Δt = Σ_{i ≤ k < j} μ(t_k) f(t_k)`, negated when `i > j`.
    pub fn delta_integral_idx(&self, i: usize, j: usize) -> Result<f64, CalculusError> {
        if i > j {
            return Ok(-self.delta_integral_idx(j, i)?);
        }
        self.require(i..j)?;
        Ok((i..j).map(|k| self.scale.mu_at(k) * self.at(k)).sum())
    }

    /// `∫_{t_i}^{t_j} f ∇t = Σ_{i < k ≤ j} ν(t_k) f(t_k)`, negated when `i > j`.
    pub fn nabla_integral_idx(&self, i: usize, j: usize) -> Result<f64, CalculusError> {
        if i > j {
            return Ok(-self.nabla_integral_idx(j, i)?);
        }
        self.require(i + 1..j + 1)?;
        Ok((i + 1..=j).map(|k| self.scale.nu_at(k) * self.at(k)).sum())
    }

    pub fn delta_integral(&self, a: f64, b: f64) -> Result<f64, CalculusError> {
        self.delta_integral_idx(self.scale.index_of(a)?, self.scale.index_of(b)?)
    }

    pub fn nabla_integral(&self, a: f64, b: f64) -> Result<f64, CalculusError> {
        self.nabla_integral_idx(self.scale.index_of(a)?, self.scale.index_of(b)?)
    }

    /// `F(t) = ∫_a^t f Δτ` on the whole scale. Needs `f` on `T^κ`.
    pub fn cumulative_delta(&self, a: f64) -> Result<Self, CalculusError> {
        let n = self.scale.len();
        self.require(0..n - 1)?;
        let origin = self.scale.index_of(a)?;
        let mut prefix = Vec::with_capacity(n);
        let mut acc = 0.0;
        prefix.push(acc);
        for k in 0..n - 1 {
            acc += self.scale.mu_at(k) * self.at(k);
            prefix.push(acc);
        }
        let base = prefix[origin];
        let values = prefix.iter().map(|p| p - base).collect();
        Self::new(self.scale.clone(), values)
    }

    /// `F(t) = ∫_a^t f ∇τ` on the whole scale. Needs `f` on `T_κ`.
    pub fn cumulative_nabla(&self, a: f64) -> Result<Self, CalculusError> {
        let n = self.scale.len();
        self.require(1..n)?;
        let origin = self.scale.index_of(a)?;
        let mut prefix = Vec::with_capacity(n);
        let mut acc = 0.0;
        prefix.push(acc);
        for k in 1..n {
            acc += self.scale.nu_at(k) * self.at(k);
            prefix.push(acc);
        }
        let base = prefix[origin];
        let values = prefix.iter().map(|p| p - base).collect();
        Self::new(self.scale.clone(), values)
    }

    /// CSV with header `t,value`, one row per domain point, 17 significant
    /// digits.
    pub fn to_csv(&self) -> String {
        to_csv_with_header(self, "value")
    }
}

/// CSV with header `t,<column>`.
pub fn to_csv_with_header(f: &GridFunction, column: &str) -> String {
    let mut out = format!("t,{column}\n");
    for (_, t, v) in f.iter() {
        let _ = writeln!(out, "{},{}", g17(t), g17(v));
    }
    out
}
