//! Interaction potential `J` and its gradient, sampled on the grid.
//!
//! The only family is the smooth compactly supported bump
//! `Ĵ(p) = exp(−1 / (1 − |p|²/r²))` for `|p| < r`. Samples are normalized so
//! that the discrete integral `Σ j · hx · hy` is exactly one, and the same
//! constant scales the closed-form gradient. The gradient samples are then
//! antisymmetrized so `gj(−p) = −gj(p)` holds bit for bit, which makes the
//! transpose of `f ↦ ∇J ∗ f` exactly `v ↦ −∇J · ∗ v`.

use std::sync::Arc;

use rustfft::num_complex::Complex64;

use crate::error::{Error, Result};
use crate::grid::{Field, Grid, VectorField};
use crate::spectral::Spectral;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelKind {
    Bump,
}

/// How convolutions against the kernel are evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ConvMethod {
    /// Direct sum over the nonzero kernel samples.
    Direct,
    #[default]
    Fft,
}

#[derive(Debug, Clone, Copy)]
struct SupportEntry {
    di: isize,
    dj: isize,
    j: f64,
    gx: f64,
    gy: f64,
}

#[derive(Debug, Clone)]
pub struct Kernel {
    j: Field,
    gj: VectorField,
    radius: f64,
    kind: KernelKind,
    normalization: f64,
    support: Vec<SupportEntry>,
    spectral: Arc<Spectral>,
    j_hat: Vec<Complex64>,
    gx_hat: Vec<Complex64>,
    gy_hat: Vec<Complex64>,
    method: ConvMethod,
}

/// Default support radius: a tenth of the shorter domain edge.
pub fn default_radius(grid: &Grid) -> f64 {
    0.1 * grid.lx().min(grid.ly())
}

impl Kernel {
    pub fn build(grid: Grid, radius: f64, kind: KernelKind) -> Result<Self> {
        Self::build_with(Arc::new(Spectral::new(grid)), radius, kind)
    }

    /// Build against an existing transform plan.
    pub fn build_with(spectral: Arc<Spectral>, radius: f64, kind: KernelKind) -> Result<Self> {
        let grid = *spectral.grid();
        let limit = grid.lx().min(grid.ly());
        if !(radius.is_finite() && 2.0 * radius < limit) {
            return Err(Error::SupportTooLarge { radius, limit });
        }
        let min = 3.0 * grid.hx().max(grid.hy());
        if radius < min * (1.0 - 1e-12) {
            return Err(Error::SupportUnresolved { radius, min });
        }

        let (nx, ny) = (grid.nx(), grid.ny());
        let r2 = radius * radius;
        let mut j = vec![0.0; grid.len()];
        let mut gx = vec![0.0; grid.len()];
        let mut gy = vec![0.0; grid.len()];
        for jj in 0..ny {
            let py = grid.signed_y(jj) as f64 * grid.hy();
            for ii in 0..nx {
                let px = grid.signed_x(ii) as f64 * grid.hx();
                let s = (px * px + py * py) / r2;
                if s < 1.0 {
                    let q = 1.0 - s;
                    let v = match kind {
                        KernelKind::Bump => (-1.0 / q).exp(),
                    };
                    // d/dp exp(-1/(1-s)) = -exp(-1/(1-s)) * 2p / (r² (1-s)²)
                    let dv = -v * 2.0 / (r2 * q * q);
                    let k = jj * nx + ii;
                    j[k] = v;
                    gx[k] = dv * px;
                    gy[k] = dv * py;
                }
            }
        }
        let total: f64 = j.iter().sum::<f64>() * grid.cell_area();
        let normalization = 1.0 / total;
        for v in j.iter_mut().chain(gx.iter_mut()).chain(gy.iter_mut()) {
            *v *= normalization;
        }
        let gx = antisymmetrize(&grid, &gx);
        let gy = antisymmetrize(&grid, &gy);

        let mut support = Vec::new();
        for jj in 0..ny {
            for ii in 0..nx {
                let k = jj * nx + ii;
                if j[k] != 0.0 || gx[k] != 0.0 || gy[k] != 0.0 {
                    support.push(SupportEntry {
                        di: grid.signed_x(ii),
                        dj: grid.signed_y(jj),
                        j: j[k],
                        gx: gx[k],
                        gy: gy[k],
                    });
                }
            }
        }

        let j = Field::from_values(grid, j)?;
        let gj = VectorField::new(Field::from_values(grid, gx)?, Field::from_values(grid, gy)?)?;
        let j_hat = spectral.kernel_symbol(&j);
        let gx_hat = spectral.kernel_symbol(&gj.x);
        let gy_hat = spectral.kernel_symbol(&gj.y);
        Ok(Self {
            j,
            gj,
            radius,
            kind,
            normalization,
            support,
            spectral,
            j_hat,
            gx_hat,
            gy_hat,
            method: ConvMethod::default(),
        })
    }

    pub fn with_method(mut self, method: ConvMethod) -> Self {
        self.method = method;
        self
    }

    pub fn method(&self) -> ConvMethod {
        self.method
    }

    pub fn grid(&self) -> &Grid {
        self.j.grid()
    }

    pub fn j(&self) -> &Field {
        &self.j
    }

    pub fn gj(&self) -> &VectorField {
        &self.gj
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn kind(&self) -> KernelKind {
        self.kind
    }

    /// Constant `C` with `j = C · Ĵ`.
    pub fn normalization(&self) -> f64 {
        self.normalization
    }

    pub fn spectral(&self) -> &Arc<Spectral> {
        &self.spectral
    }

    /// Number of cells where the kernel is nonzero.
    pub fn support_cells(&self) -> usize {
        self.support.iter().filter(|e| e.j != 0.0).count()
    }

    /// Discrete `‖∇J‖_{L¹}`.
    pub fn grad_l1(&self) -> f64 {
        let area = self.grid().cell_area();
        self.gj
            .x
            .values()
            .iter()
            .zip(self.gj.y.values())
            .map(|(a, b)| a.hypot(*b))
            .sum::<f64>()
            * area
    }

    fn direct(&self, f: &Field, pick: impl Fn(&SupportEntry) -> f64) -> Field {
        let g = *f.grid();
        let area = g.cell_area();
        let entries: Vec<(isize, isize, f64)> = self
            .support
            .iter()
            .map(|e| (e.di, e.dj, pick(e)))
            .filter(|e| e.2 != 0.0)
            .collect();
        let mut out = Vec::with_capacity(g.len());
        for pj in 0..g.ny() as isize {
            for pi in 0..g.nx() as isize {
                let s: f64 = entries.iter().map(|&(di, dj, k)| k * f.at(pi - di, pj - dj)).sum();
                out.push(s * area);
            }
        }
        Field::from_values(g, out).expect("grid sized")
    }

    /// `J ∗ f`.
    pub fn convolve(&self, f: &Field) -> Field {
        match self.method {
            ConvMethod::Direct => self.direct(f, |e| e.j),
            ConvMethod::Fft => self.spectral.apply_symbol(&self.j_hat, f),
        }
    }

    /// `∇J ∗ f`, componentwise.
    pub fn grad_convolve(&self, f: &Field) -> VectorField {
        match self.method {
            ConvMethod::Direct => VectorField {
                x: self.direct(f, |e| e.gx),
                y: self.direct(f, |e| e.gy),
            },
            ConvMethod::Fft => {
                let fh = self.spectral.forward(f);
                let apply = |sym: &[Complex64]| {
                    let prod = fh.iter().zip(sym).map(|(a, s)| a * s).collect();
                    self.spectral.inverse(prod)
                };
                VectorField {
                    x: apply(&self.gx_hat),
                    y: apply(&self.gy_hat),
                }
            }
        }
    }

    /// `∂ₓJ ∗ vₓ + ∂ᵧJ ∗ vᵧ`.
    pub fn grad_dot_convolve(&self, v: &VectorField) -> Field {
        match self.method {
            ConvMethod::Direct => {
                self.direct(&v.x, |e| e.gx).add(&self.direct(&v.y, |e| e.gy))
            }
            ConvMethod::Fft => {
                let xh = self.spectral.forward(&v.x);
                let yh = self.spectral.forward(&v.y);
                let prod = xh
                    .iter()
                    .zip(&yh)
                    .zip(self.gx_hat.iter().zip(&self.gy_hat))
                    .map(|((a, b), (sx, sy))| a * sx + b * sy)
                    .collect();
                self.spectral.inverse(prod)
            }
        }
    }

    /// Transpose of [`Kernel::grad_convolve`] under the weighted inner
    /// products: `⟨∇J ∗ f, v⟩ = ⟨f, T(v)⟩` with `T(v) = −(∇J · ∗ v)`, since
    /// the gradient samples are odd.
    pub fn grad_convolve_transpose(&self, v: &VectorField) -> Field {
        self.grad_dot_convolve(v).scale(-1.0)
    }

    pub fn report(&self) -> KernelReport {
        let g = *self.grid();
        let mut even = 0.0f64;
        let mut odd = 0.0f64;
        for j in 0..g.ny() as isize {
            for i in 0..g.nx() as isize {
                even = even.max((self.j.at(i, j) - self.j.at(-i, -j)).abs());
                odd = odd.max((self.gj.x.at(i, j) + self.gj.x.at(-i, -j)).abs());
                odd = odd.max((self.gj.y.at(i, j) + self.gj.y.at(-i, -j)).abs());
            }
        }
        KernelReport {
            radius: self.radius,
            normalization: self.normalization,
            integral: self.j.integral(),
            max_value: self.j.max(),
            support_cells: self.support_cells(),
            even_residual: even,
            odd_residual: odd,
            grad_integral_x: self.gj.x.integral(),
            grad_integral_y: self.gj.y.integral(),
            grad_l1: self.grad_l1(),
        }
    }
}

fn antisymmetrize(grid: &Grid, v: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; v.len()];
    for j in 0..grid.ny() as isize {
        for i in 0..grid.nx() as isize {
            let k = grid.index(i, j);
            out[k] = 0.5 * (v[k] - v[grid.index(-i, -j)]);
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct KernelReport {
    pub radius: f64,
    pub normalization: f64,
    pub integral: f64,
    pub max_value: f64,
    pub support_cells: usize,
    /// `max |j(p) − j(−p)|`.
    pub even_residual: f64,
    /// `max |gj(p) + gj(−p)|` over both components.
    pub odd_residual: f64,
    pub grad_integral_x: f64,
    pub grad_integral_y: f64,
    pub grad_l1: f64,
}

impl KernelReport {
    /// `key=value` lines.
    pub fn to_lines(&self) -> Vec<String> {
        vec![
            format!("radius={}", self.radius),
            format!("normalization={}", self.normalization),
            format!("integral={}", self.integral),
            format!("max_value={}", self.max_value),
            format!("support_cells={}", self.support_cells),
            format!("even_residual={}", self.even_residual),
            format!("odd_residual={}", self.odd_residual),
            format!("grad_integral_x={}", self.grad_integral_x),
            format!("grad_integral_y={}", self.grad_integral_y),
            format!("grad_l1={}", self.grad_l1),
        ]
    }
}
