//! Trigonometric transforms on the periodic grid.
//!
//! The discrete Fourier modes `e^{2πi(kx·i/nx + ky·j/ny)}` diagonalize every
//! translation-invariant periodic operator used here, in particular the
//! 5-point Laplacian and circular convolution. This module supplies the fast
//! convolution path, the exact implicit heat solve and the `H⁻¹` norm.

use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::Result;
use crate::grid::{grad, Field, Grid, Norms};

pub struct Spectral {
    grid: Grid,
    fwd_x: Arc<dyn Fft<f64>>,
    inv_x: Arc<dyn Fft<f64>>,
    fwd_y: Arc<dyn Fft<f64>>,
    inv_y: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for Spectral {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Spectral").field("grid", &self.grid).finish()
    }
}

impl Spectral {
    pub fn new(grid: Grid) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            grid,
            fwd_x: planner.plan_fft_forward(grid.nx()),
            inv_x: planner.plan_fft_inverse(grid.nx()),
            fwd_y: planner.plan_fft_forward(grid.ny()),
            inv_y: planner.plan_fft_inverse(grid.ny()),
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    fn transform(&self, buf: &mut Vec<Complex64>, fx: &Arc<dyn Fft<f64>>, fy: &Arc<dyn Fft<f64>>) {
        let (nx, ny) = (self.grid.nx(), self.grid.ny());
        // rows are contiguous
        fx.process(buf);
        let mut cols = vec![Complex64::new(0.0, 0.0); nx * ny];
        for j in 0..ny {
            for i in 0..nx {
                cols[i * ny + j] = buf[j * nx + i];
            }
        }
        fy.process(&mut cols);
        for j in 0..ny {
            for i in 0..nx {
                buf[j * nx + i] = cols[i * ny + j];
            }
        }
    }

    /// Unnormalized forward DFT, row-major like [`Field`].
    pub fn forward(&self, f: &Field) -> Vec<Complex64> {
        debug_assert_eq!(*f.grid(), self.grid);
        let mut buf: Vec<Complex64> = f.values().iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.transform(&mut buf, &self.fwd_x, &self.fwd_y);
        buf
    }

    /// Inverse DFT (with the `1/N` factor), keeping the real part.
    pub fn inverse(&self, mut spec: Vec<Complex64>) -> Field {
        self.transform(&mut spec, &self.inv_x, &self.inv_y);
        let inv_n = 1.0 / self.grid.len() as f64;
        let values = spec.into_iter().map(|c| c.re * inv_n).collect();
        Field::from_values(self.grid, values).expect("length preserved")
    }

    /// Transform of a kernel with the cell area folded in, ready for
    /// [`Spectral::apply_symbol`].
    pub fn kernel_symbol(&self, k: &Field) -> Vec<Complex64> {
        let area = self.grid.cell_area();
        self.forward(k).into_iter().map(|c| c * area).collect()
    }

    /// Multiply `f̂` by a precomputed symbol and transform back.
    pub fn apply_symbol(&self, symbol: &[Complex64], f: &Field) -> Field {
        let mut fh = self.forward(f);
        for (a, s) in fh.iter_mut().zip(symbol) {
            *a *= s;
        }
        self.inverse(fh)
    }

    /// Fast circular convolution; agrees with [`crate::grid::circ_conv`].
    pub fn circ_conv(&self, k: &Field, f: &Field) -> Result<Field> {
        self.grid.check_same(k.grid())?;
        self.grid.check_same(f.grid())?;
        Ok(self.apply_symbol(&self.kernel_symbol(k), f))
    }

    /// Eigenvalue of `−Δ_h` (5-point) on mode `(kx, ky)`.
    pub fn neg_laplacian_eigenvalue(&self, kx: usize, ky: usize) -> f64 {
        let g = &self.grid;
        let (hx, hy) = (g.hx(), g.hy());
        (2.0 / (hx * hx)) * (1.0 - (2.0 * PI * kx as f64 / g.nx() as f64).cos())
            + (2.0 / (hy * hy)) * (1.0 - (2.0 * PI * ky as f64 / g.ny() as f64).cos())
    }

    /// Continuous wavenumber `|κ|²` of mode `(kx, ky)` using the signed
    /// (aliased to `[-n/2, n/2]`) frequency.
    pub fn continuous_wavenumber_sq(&self, kx: usize, ky: usize) -> f64 {
        let g = &self.grid;
        let qx = 2.0 * PI * g.signed_x(kx) as f64 / g.lx();
        let qy = 2.0 * PI * g.signed_y(ky) as f64 / g.ly();
        qx * qx + qy * qy
    }

    /// `H⁻¹` norm.
    ///
    /// Convention: with `F_k` the unnormalized DFT and `N = nx·ny`,
    /// `‖f‖²_{H⁻¹} = (hx·hy / N) Σ_k |F_k|² / (1 + |κ_k|²)`, where `κ_k` is
    /// the continuous wavenumber of the signed mode. By Parseval the same
    /// formula without the multiplier is `‖f‖²_{L²}`, so a constant field
    /// has equal `L²` and `H⁻¹` norms.
    pub fn h_minus_1(&self, f: &Field) -> f64 {
        let fh = self.forward(f);
        let (nx, ny) = (self.grid.nx(), self.grid.ny());
        let mut s = 0.0;
        for ky in 0..ny {
            for kx in 0..nx {
                let w = 1.0 / (1.0 + self.continuous_wavenumber_sq(kx, ky));
                s += fh[ky * nx + kx].norm_sqr() * w;
            }
        }
        (s * self.grid.cell_area() / self.grid.len() as f64).sqrt()
    }

    pub fn norms(&self, f: &Field) -> Norms {
        let l2 = f.l2();
        Norms {
            l2,
            h1: l2 + grad(f).l2(),
            h_minus_1: self.h_minus_1(f),
        }
    }
}

/// Exact solver for `(I − dt·Δ_h) u = r`, diagonal in the Fourier basis.
#[derive(Debug)]
pub struct HeatSolver {
    spectral: Arc<Spectral>,
    dt: f64,
    inverse_symbol: Vec<Complex64>,
}

impl HeatSolver {
    pub fn new(spectral: Arc<Spectral>, dt: f64) -> Self {
        let (nx, ny) = (spectral.grid().nx(), spectral.grid().ny());
        let mut inverse_symbol = Vec::with_capacity(nx * ny);
        for ky in 0..ny {
            for kx in 0..nx {
                let d = 1.0 + dt * spectral.neg_laplacian_eigenvalue(kx, ky);
                inverse_symbol.push(Complex64::new(1.0 / d, 0.0));
            }
        }
        Self {
            spectral,
            dt,
            inverse_symbol,
        }
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn solve(&self, rhs: &Field) -> Field {
        self.spectral.apply_symbol(&self.inverse_symbol, rhs)
    }
}
