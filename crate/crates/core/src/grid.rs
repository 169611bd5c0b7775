//! Periodic cell-centred grid, scalar and vector fields, and the discrete
//! differential operators every other module is built from.
//!
//! Storage is row-major with `x` fastest: the value of cell `(i, j)` lives at
//! `j * nx + i`. All reductions (`sum`, `dot`, norms) walk the cells in that
//! order, so results are bit-reproducible for a given input.
//!
//! Two gradient pairings coexist on purpose:
//!
//! * [`grad`] / [`div`] are centred (`2h`) differences. They are exact
//!   negative transposes of each other, `⟨div v, f⟩ = −⟨v, grad f⟩`, and carry
//!   the nonlocal drift.
//! * [`laplacian`] is the compact 5-point stencil. Its symmetric form is
//!   [`face_dot`], `⟨−Δ_h f, g⟩ = face_dot(f, g)`, built from one-sided
//!   differences on cell faces.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    nx: usize,
    ny: usize,
    lx: f64,
    ly: f64,
}

impl Grid {
    pub const MIN_CELLS: usize = 4;

    pub fn new(nx: usize, ny: usize, lx: f64, ly: f64) -> Result<Self> {
        if nx < Self::MIN_CELLS || ny < Self::MIN_CELLS {
            return Err(Error::InvalidGrid(format!(
                "need at least {} cells per direction, got {nx}x{ny}",
                Self::MIN_CELLS
            )));
        }
        if !(lx.is_finite() && ly.is_finite() && lx > 0.0 && ly > 0.0) {
            return Err(Error::InvalidGrid(format!(
                "edge lengths must be positive, got {lx} x {ly}"
            )));
        }
        Ok(Self { nx, ny, lx, ly })
    }

    /// Unit square with `n x n` cells.
    pub fn unit_square(n: usize) -> Result<Self> {
        Self::new(n, n, 1.0, 1.0)
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    pub fn lx(&self) -> f64 {
        self.lx
    }

    pub fn ly(&self) -> f64 {
        self.ly
    }

    pub fn hx(&self) -> f64 {
        self.lx / self.nx as f64
    }

    pub fn hy(&self) -> f64 {
        self.ly / self.ny as f64
    }

    pub fn cell_area(&self) -> f64 {
        self.hx() * self.hy()
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Cell-centre x coordinate.
    pub fn x(&self, i: usize) -> f64 {
        (i as f64 + 0.5) * self.hx()
    }

    /// Cell-centre y coordinate.
    pub fn y(&self, j: usize) -> f64 {
        (j as f64 + 0.5) * self.hy()
    }

    /// Flat index with periodic wrap-around.
    #[inline]
    pub fn index(&self, i: isize, j: isize) -> usize {
        let i = i.rem_euclid(self.nx as isize) as usize;
        let j = j.rem_euclid(self.ny as isize) as usize;
        j * self.nx + i
    }

    /// Signed periodic offset of index `i` along x: `i` if `i <= nx/2`, else `i - nx`.
    pub fn signed_x(&self, i: usize) -> isize {
        signed_offset(i, self.nx)
    }

    pub fn signed_y(&self, j: usize) -> isize {
        signed_offset(j, self.ny)
    }

    pub(crate) fn check_same(&self, other: &Grid) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(Error::GridMismatch(self.describe(), other.describe()))
        }
    }

    pub fn describe(&self) -> String {
        format!("{}x{} on {}x{}", self.nx, self.ny, self.lx, self.ly)
    }
}

fn signed_offset(i: usize, n: usize) -> isize {
    if i <= n / 2 {
        i as isize
    } else {
        i as isize - n as isize
    }
}

/// Scalar samples at cell centres.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    grid: Grid,
    values: Vec<f64>,
}

impl Field {
    pub fn zeros(grid: Grid) -> Self {
        Self::constant(grid, 0.0)
    }

    pub fn constant(grid: Grid, c: f64) -> Self {
        Self {
            grid,
            values: vec![c; grid.len()],
        }
    }

    /// Sample `f(x, y)` at the cell centres.
    pub fn from_fn(grid: Grid, f: impl Fn(f64, f64) -> f64) -> Self {
        let mut values = Vec::with_capacity(grid.len());
        for j in 0..grid.ny() {
            let y = grid.y(j);
            for i in 0..grid.nx() {
                values.push(f(grid.x(i), y));
            }
        }
        Self { grid, values }
    }

    pub fn from_values(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} values for a {} grid",
                values.len(),
                grid.describe()
            )));
        }
        Ok(Self { grid, values })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Periodic access.
    #[inline]
    pub fn at(&self, i: isize, j: isize) -> f64 {
        self.values[self.grid.index(i, j)]
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Field {
        Field {
            grid: self.grid,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Pointwise binary map. Panics if the grids differ.
    pub fn zip_map(&self, other: &Field, f: impl Fn(f64, f64) -> f64) -> Field {
        assert_eq!(self.grid, other.grid, "zip_map across different grids");
        Field {
            grid: self.grid,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }

    pub fn add(&self, other: &Field) -> Field {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Field) -> Field {
        self.zip_map(other, |a, b| a - b)
    }

    /// Pointwise product.
    pub fn mul(&self, other: &Field) -> Field {
        self.zip_map(other, |a, b| a * b)
    }

    pub fn scale(&self, s: f64) -> Field {
        self.map(|v| s * v)
    }

    /// `self += a * x`.
    pub(crate) fn add_scaled(&mut self, a: f64, x: &Field) {
        debug_assert_eq!(self.grid, x.grid);
        for (s, &v) in self.values.iter_mut().zip(&x.values) {
            *s += a * v;
        }
    }

    /// Plain sum of cell values in storage order.
    pub fn sum(&self) -> f64 {
        self.values.iter().sum()
    }

    /// Discrete integral `Σ f · hx · hy`.
    pub fn integral(&self) -> f64 {
        self.sum() * self.grid.cell_area()
    }

    /// Weighted inner product `Σ f g · hx · hy`.
    pub fn dot(&self, other: &Field) -> f64 {
        assert_eq!(self.grid, other.grid, "dot across different grids");
        let s: f64 = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a * b)
            .sum();
        s * self.grid.cell_area()
    }

    pub fn l2(&self) -> f64 {
        self.dot(self).sqrt()
    }

    /// Discrete `L¹` norm.
    pub fn l1(&self) -> f64 {
        self.values.iter().map(|v| v.abs()).sum::<f64>() * self.grid.cell_area()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Two-component field on one grid.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorField {
    pub x: Field,
    pub y: Field,
}

impl VectorField {
    pub fn new(x: Field, y: Field) -> Result<Self> {
        x.grid().check_same(y.grid())?;
        Ok(Self { x, y })
    }

    pub fn zeros(grid: Grid) -> Self {
        Self {
            x: Field::zeros(grid),
            y: Field::zeros(grid),
        }
    }

    pub fn grid(&self) -> &Grid {
        self.x.grid()
    }

    /// Scale both components pointwise by a scalar field.
    pub fn scale_by(&self, s: &Field) -> VectorField {
        VectorField {
            x: self.x.mul(s),
            y: self.y.mul(s),
        }
    }

    /// Pointwise dot product with another vector field.
    pub fn pointwise_dot(&self, other: &VectorField) -> Field {
        self.x.mul(&other.x).add(&self.y.mul(&other.y))
    }

    /// Weighted inner product `Σ (vx wx + vy wy) · hx · hy`.
    pub fn dot(&self, other: &VectorField) -> f64 {
        self.x.dot(&other.x) + self.y.dot(&other.y)
    }

    pub fn l2(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

fn stencil(f: &Field, op: impl Fn(&Field, isize, isize) -> f64) -> Field {
    let g = *f.grid();
    let mut values = Vec::with_capacity(g.len());
    for j in 0..g.ny() as isize {
        for i in 0..g.nx() as isize {
            values.push(op(f, i, j));
        }
    }
    Field { grid: g, values }
}

/// Centred periodic gradient.
pub fn grad(f: &Field) -> VectorField {
    let g = f.grid();
    let (ax, ay) = (0.5 / g.hx(), 0.5 / g.hy());
    VectorField {
        x: stencil(f, |f, i, j| (f.at(i + 1, j) - f.at(i - 1, j)) * ax),
        y: stencil(f, |f, i, j| (f.at(i, j + 1) - f.at(i, j - 1)) * ay),
    }
}

/// Centred periodic divergence; the negative transpose of [`grad`].
pub fn div(v: &VectorField) -> Field {
    let g = v.grid();
    let (ax, ay) = (0.5 / g.hx(), 0.5 / g.hy());
    let mut out = stencil(&v.x, |f, i, j| (f.at(i + 1, j) - f.at(i - 1, j)) * ax);
    let dy = stencil(&v.y, |f, i, j| (f.at(i, j + 1) - f.at(i, j - 1)) * ay);
    out.add_scaled(1.0, &dy);
    out
}

/// Compact 5-point Laplacian.
pub fn laplacian(f: &Field) -> Field {
    let g = f.grid();
    let (ax, ay) = (1.0 / (g.hx() * g.hx()), 1.0 / (g.hy() * g.hy()));
    stencil(f, |f, i, j| {
        let c = f.at(i, j);
        (f.at(i + 1, j) + f.at(i - 1, j) - 2.0 * c) * ax
            + (f.at(i, j + 1) + f.at(i, j - 1) - 2.0 * c) * ay
    })
}

/// Wide (`2h`) Laplacian, equal to `div(grad(f))`.
pub fn laplacian_wide(f: &Field) -> Field {
    let g = f.grid();
    let (ax, ay) = (0.25 / (g.hx() * g.hx()), 0.25 / (g.hy() * g.hy()));
    stencil(f, |f, i, j| {
        let c = f.at(i, j);
        (f.at(i + 2, j) + f.at(i - 2, j) - 2.0 * c) * ax
            + (f.at(i, j + 2) + f.at(i, j - 2) - 2.0 * c) * ay
    })
}

/// Face-difference pairing `Σ (D⁺ₓf D⁺ₓg + D⁺ᵧf D⁺ᵧg) · hx · hy`, which equals
/// `−⟨laplacian(f), g⟩` exactly.
pub fn face_dot(f: &Field, g: &Field) -> f64 {
    let grid = *f.grid();
    assert_eq!(grid, *g.grid(), "face_dot across different grids");
    let (ax, ay) = (1.0 / (grid.hx() * grid.hx()), 1.0 / (grid.hy() * grid.hy()));
    let mut s = 0.0;
    for j in 0..grid.ny() as isize {
        for i in 0..grid.nx() as isize {
            let fx = f.at(i + 1, j) - f.at(i, j);
            let gx = g.at(i + 1, j) - g.at(i, j);
            let fy = f.at(i, j + 1) - f.at(i, j);
            let gy = g.at(i, j + 1) - g.at(i, j);
            s += fx * gx * ax + fy * gy * ay;
        }
    }
    s * grid.cell_area()
}

/// Direct-sum circular convolution `out(p) = Σ_q k(p − q) f(q) · hx · hy`.
///
/// This is the reference semantics; `k` is indexed by periodic offset with
/// the zero offset at cell `(0, 0)`. Cost is `O((nx·ny)²)`.
pub fn circ_conv(k: &Field, f: &Field) -> Result<Field> {
    k.grid().check_same(f.grid())?;
    let g = *f.grid();
    let (nx, ny) = (g.nx() as isize, g.ny() as isize);
    let area = g.cell_area();
    let mut out = Field::zeros(g);
    for pj in 0..ny {
        for pi in 0..nx {
            let mut s = 0.0;
            for qj in 0..ny {
                for qi in 0..nx {
                    s += k.at(pi - qi, pj - qj) * f.at(qi, qj);
                }
            }
            out.values[g.index(pi, pj)] = s * area;
        }
    }
    Ok(out)
}

/// `L²`, `H¹` and `H⁻¹` norms of a field.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Norms {
    pub l2: f64,
    /// `‖f‖_{L²} + ‖grad f‖_{L²}` with the centred gradient.
    pub h1: f64,
    pub h_minus_1: f64,
}

/// `H¹` norm in the additive convention `‖f‖ + ‖∇f‖`.
pub fn h1_norm(f: &Field) -> f64 {
    f.l2() + grad(f).l2()
}

/// All three norms. The `H⁻¹` part needs a transform; see
/// [`crate::spectral::Spectral::h_minus_1`] for the convention.
pub fn norms(f: &Field) -> Norms {
    let spectral = crate::spectral::Spectral::new(*f.grid());
    spectral.norms(f)
}
