//! Space-time control fields and the admissible box.

use crate::error::{Error, Result};
use crate::grid::{Field, Grid};

/// `θ(t, x)` as one field per time step; slice `n` drives step `n → n+1`.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlField {
    slices: Vec<Field>,
}

impl ControlField {
    pub fn new(slices: Vec<Field>) -> Result<Self> {
        let first = slices
            .first()
            .ok_or_else(|| Error::ShapeMismatch("control needs at least one slice".into()))?;
        let grid = *first.grid();
        for s in &slices {
            grid.check_same(s.grid())?;
        }
        Ok(Self { slices })
    }

    pub fn zeros(grid: Grid, nt: usize) -> Self {
        Self::constant_in_time(&Field::zeros(grid), nt)
    }

    pub fn constant(grid: Grid, nt: usize, c: f64) -> Self {
        Self::constant_in_time(&Field::constant(grid, c), nt)
    }

    pub fn constant_in_time(field: &Field, nt: usize) -> Self {
        assert!(nt > 0, "control needs at least one slice");
        Self {
            slices: vec![field.clone(); nt],
        }
    }

    /// Build slice `n` from `f(n)`.
    pub fn from_slices(nt: usize, f: impl FnMut(usize) -> Field) -> Result<Self> {
        Self::new((0..nt).map(f).collect())
    }

    pub fn nt(&self) -> usize {
        self.slices.len()
    }

    pub fn grid(&self) -> &Grid {
        self.slices[0].grid()
    }

    pub fn slices(&self) -> &[Field] {
        &self.slices
    }

    pub fn slice(&self, n: usize) -> &Field {
        &self.slices[n]
    }

    pub fn map_slices(&self, f: impl Fn(&Field) -> Field) -> Self {
        Self {
            slices: self.slices.iter().map(f).collect(),
        }
    }

    fn zip_slices(&self, other: &ControlField, f: impl Fn(&Field, &Field) -> Field) -> Self {
        assert_eq!(self.nt(), other.nt(), "controls with different slice counts");
        Self {
            slices: self
                .slices
                .iter()
                .zip(&other.slices)
                .map(|(a, b)| f(a, b))
                .collect(),
        }
    }

    pub fn add(&self, other: &ControlField) -> Self {
        self.zip_slices(other, Field::add)
    }

    pub fn sub(&self, other: &ControlField) -> Self {
        self.zip_slices(other, Field::sub)
    }

    pub fn scale(&self, s: f64) -> Self {
        self.map_slices(|f| f.scale(s))
    }

    /// `self + a · other`.
    pub fn axpy(&self, a: f64, other: &ControlField) -> Self {
        self.zip_slices(other, |x, y| {
            let mut out = x.clone();
            out.add_scaled(a, y);
            out
        })
    }

    /// Space-time inner product `Σ_n ⟨a_n, b_n⟩ · dt` over all slices.
    pub fn dot(&self, other: &ControlField, dt: f64) -> f64 {
        assert_eq!(self.nt(), other.nt(), "controls with different slice counts");
        self.slices
            .iter()
            .zip(&other.slices)
            .map(|(a, b)| a.dot(b))
            .sum::<f64>()
            * dt
    }

    /// Discrete `L²(S × Ω)` norm.
    pub fn norm(&self, dt: f64) -> f64 {
        self.dot(self, dt).sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.slices.iter().all(Field::is_finite)
    }

    pub fn min(&self) -> f64 {
        self.slices.iter().map(Field::min).fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.slices.iter().map(Field::max).fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Constant box `[lower, upper]` defining the admissible set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bounds {
    lower: f64,
    upper: f64,
}

impl Bounds {
    pub fn new(lower: f64, upper: f64) -> Result<Self> {
        if lower.is_nan() || upper.is_nan() || lower > upper {
            return Err(Error::validation(
                "control.theta_min",
                format!("(A4) requires theta_min <= theta_max, got {lower} > {upper}"),
            ));
        }
        Ok(Self { lower, upper })
    }

    pub fn unbounded() -> Self {
        Self {
            lower: f64::NEG_INFINITY,
            upper: f64::INFINITY,
        }
    }

    pub fn lower(&self) -> f64 {
        self.lower
    }

    pub fn upper(&self) -> f64 {
        self.upper
    }

    pub fn clamp(&self, v: f64) -> f64 {
        v.max(self.lower).min(self.upper)
    }

    pub fn contains(&self, theta: &ControlField) -> bool {
        theta.min() >= self.lower && theta.max() <= self.upper
    }
}

/// Pointwise clamp onto the box; the `L²` orthogonal projection onto `U_ad`.
pub fn project_admissible(theta: &ControlField, bounds: &Bounds) -> ControlField {
    theta.map_slices(|f| f.map(|v| bounds.clamp(v)))
}
