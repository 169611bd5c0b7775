//! Cost functional, adjoint solves and the reduced gradient.
//!
//! Quadrature: the misfit is summed over `n = 1..=nt`, the control term over
//! `n = 0..nt` (slice `n` drives step `n → n+1`), both weighted by
//! `hx·hy·dt`:
//!
//! ```text
//! J(θ) = ½ Σ_{n=1}^{nt} ‖φₙ − φ_d,ₙ‖² dt + (δ/2) Σ_{n=0}^{nt−1} ‖θₙ‖² dt
//! ```
//!
//! The discrete adjoint is the exact transpose of the tangent map. Writing
//! one tangent step as `yₙ₊₁ = H[Aₙ yₙ + dt (0, hₙ)]` with `H = (I − dtΔ_h)⁻¹`,
//! the backward sweep is `γ_nt = 0`,
//! `γₙ₋₁ = H[Aₙᵀ γₙ + dt sₙ]` for `n = nt..1`, and then
//! `Σₙ dt⟨sₙ, yₙ⟩ = Σₙ dt⟨hₙ, γ₂,ₙ⟩`. For the cost, `sₙ = (0, φₙ − φ_d,ₙ)`
//! and the gradient is `gₙ = γ₂,ₙ + δθₙ`. See `docs/discrete_adjoint.md`.

use crate::control::ControlField;
use crate::error::{Error, Result};
use crate::forward::{Model, Trajectory};
use crate::grid::{grad, Field, VectorField};

/// Desired `φ` on the time nodes `n = 1..=nt`; either one field used at
/// every node or one per node (`nt + 1` slices, slot 0 unused).
#[derive(Debug, Clone, PartialEq)]
pub struct Target {
    slices: Vec<Field>,
}

impl Target {
    pub fn constant(field: Field) -> Self {
        Self {
            slices: vec![field],
        }
    }

    /// Per-node target, indexed like a trajectory.
    pub fn from_slices(slices: Vec<Field>) -> Result<Self> {
        let first = slices
            .first()
            .ok_or_else(|| Error::ShapeMismatch("empty target".into()))?;
        let g = *first.grid();
        for s in &slices {
            g.check_same(s.grid())?;
        }
        Ok(Self { slices })
    }

    /// Twin target: the `φ` history of a forward run.
    pub fn from_trajectory(traj: &Trajectory) -> Self {
        Self {
            slices: traj.phi.clone(),
        }
    }

    pub fn at(&self, n: usize) -> &Field {
        if self.slices.len() == 1 {
            &self.slices[0]
        } else {
            &self.slices[n]
        }
    }

    pub fn is_constant(&self) -> bool {
        self.slices.len() == 1
    }

    fn check(&self, traj: &Trajectory) -> Result<()> {
        let n = self.slices.len();
        if n != 1 && n != traj.nt() + 1 {
            return Err(Error::ShapeMismatch(format!(
                "target has {n} slices, trajectory needs 1 or {}",
                traj.nt() + 1
            )));
        }
        traj.grid().check_same(self.slices[0].grid())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostBreakdown {
    /// `½ Σ ‖φₙ − φ_d,ₙ‖² dt`
    pub misfit: f64,
    /// `(δ/2) Σ ‖θₙ‖² dt`
    pub reg: f64,
}

impl CostBreakdown {
    pub fn total(&self) -> f64 {
        self.misfit + self.reg
    }
}

pub fn cost(traj: &Trajectory, target: &Target, delta: f64) -> Result<CostBreakdown> {
    target.check(traj)?;
    if traj.theta.nt() != traj.nt() {
        return Err(Error::ShapeMismatch("control and trajectory lengths differ".into()));
    }
    let dt = traj.dt;
    let misfit: f64 = (1..=traj.nt())
        .map(|n| {
            let d = traj.phi[n].sub(target.at(n));
            d.dot(&d)
        })
        .sum::<f64>()
        * 0.5
        * dt;
    let reg = 0.5 * delta * traj.theta.norm(dt).powi(2);
    Ok(CostBreakdown { misfit, reg })
}

/// `(γ₁ₙ, γ₂ₙ)` for `n = 0..=nt`, with `γ_nt = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct AdjointTrajectory {
    pub dt: f64,
    pub gamma1: Vec<Field>,
    pub gamma2: Vec<Field>,
}

impl AdjointTrajectory {
    pub fn nt(&self) -> usize {
        self.gamma1.len() - 1
    }

    /// `γ₂` on the control nodes `n = 0..nt`.
    pub fn gamma2_control(&self) -> Result<ControlField> {
        ControlField::new(self.gamma2[..self.nt()].to_vec())
    }
}

/// Variant of the discrete adjoint. `FlippedReaction` transposes the
/// reaction term with the wrong sign; it exists for mutation testing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum AdjointVariant {
    #[default]
    Exact,
    FlippedReaction,
}

/// Which adjoint equations to march.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Form {
    Discrete(AdjointVariant),
    Continuous,
}

/// Misfit sources `(0, φₙ − φ_d,ₙ)` for `n = 0..=nt` (slot 0 unused).
pub fn misfit_sources(traj: &Trajectory, target: &Target) -> Result<(Vec<Field>, Vec<Field>)> {
    target.check(traj)?;
    let g = *traj.grid();
    let s1 = vec![Field::zeros(g); traj.nt() + 1];
    let s2 = (0..=traj.nt())
        .map(|n| traj.phi[n].sub(target.at(n)))
        .collect();
    Ok((s1, s2))
}

impl Model {
    /// Backward sweep with arbitrary sources `(s₁ₙ, s₂ₙ)`, `n = 0..=nt`
    /// (slot 0 unused), returning `γ` such that
    /// `Σ_{n=1}^{nt} dt(⟨s₁ₙ, φ₁ₙ⟩ + ⟨s₂ₙ, φ₂ₙ⟩) = Σ_{n=0}^{nt−1} dt⟨hₙ, γ₂ₙ⟩`
    /// for every tangent `(φ₁, φ₂)` driven by `h`.
    pub fn adjoint_with_sources(
        &self,
        traj: &Trajectory,
        s1: &[Field],
        s2: &[Field],
        variant: AdjointVariant,
    ) -> Result<AdjointTrajectory> {
        self.sweep(traj, s1, s2, Form::Discrete(variant))
    }

    /// Exact transpose of the tangent map applied to the misfit.
    pub fn solve_adjoint_discrete(
        &self,
        traj: &Trajectory,
        target: &Target,
    ) -> Result<AdjointTrajectory> {
        self.solve_adjoint_variant(traj, target, AdjointVariant::Exact)
    }

    pub fn solve_adjoint_variant(
        &self,
        traj: &Trajectory,
        target: &Target,
        variant: AdjointVariant,
    ) -> Result<AdjointTrajectory> {
        let (s1, s2) = misfit_sources(traj, target)?;
        self.sweep(traj, &s1, &s2, Form::Discrete(variant))
    }

    /// Reference solve of the continuous adjoint system in its displayed
    /// form, marched backward with the same implicit/explicit split:
    ///
    /// ```text
    /// −∂ₜγ₁ = Δγ₁ − 4βm̂ ĉ·∇γ₁ + 2β(φ̂ − m̂²)(∇J ∗ ∇γ₁)
    ///          + 2β(1 − φ̂) ĉ·∇γ₂ + 2βm̂(1 − φ̂)(∇J ∗ ∇γ₂)
    /// −∂ₜγ₂ = Δγ₂ − 2β ĉ·∇γ₁ − 2βm̂ ĉ·∇γ₂ − αγ₂ + (φ̂ − φ_d)
    /// ```
    ///
    /// with `∇J ∗ ∇γ = Σᵢ ∂ᵢJ ∗ ∂ᵢγ`. The coefficients multiply the
    /// convolution from outside, as displayed; the exact transpose puts them
    /// inside. The reaction enters as `−αγ₂`, the sign obtained by
    /// transposing the linearized `−αφ₂`.
    pub fn solve_adjoint_continuous(
        &self,
        traj: &Trajectory,
        target: &Target,
    ) -> Result<AdjointTrajectory> {
        let (s1, s2) = misfit_sources(traj, target)?;
        self.sweep(traj, &s1, &s2, Form::Continuous)
    }

    fn sweep(&self, traj: &Trajectory, s1: &[Field], s2: &[Field], form: Form) -> Result<AdjointTrajectory> {
        let nt = traj.nt();
        if s1.len() != nt + 1 || s2.len() != nt + 1 {
            return Err(Error::ShapeMismatch(format!(
                "adjoint sources need {} slices, got {} and {}",
                nt + 1,
                s1.len(),
                s2.len()
            )));
        }
        let g = *traj.grid();
        let dt = self.dt();
        let mut gamma1 = vec![Field::zeros(g); nt + 1];
        let mut gamma2 = vec![Field::zeros(g); nt + 1];
        for n in (1..=nt).rev() {
            let (mut r1, mut r2) = match form {
                Form::Discrete(v) => self.transpose_explicit(traj, n, &gamma1[n], &gamma2[n], v),
                Form::Continuous => self.continuous_explicit(traj, n, &gamma1[n], &gamma2[n]),
            };
            r1.add_scaled(dt, &s1[n]);
            r2.add_scaled(dt, &s2[n]);
            let a = self.implicit_solve(&r1);
            let b = self.implicit_solve(&r2);
            if !(a.is_finite() && b.is_finite()) {
                return Err(Error::NonFinite { what: "adjoint", step: n - 1 });
            }
            gamma1[n - 1] = a;
            gamma2[n - 1] = b;
        }
        Ok(AdjointTrajectory {
            dt,
            gamma1,
            gamma2,
        })
    }

    /// `Aₙᵀ(w₁, w₂)` with the coefficients frozen at the state of step `n`.
    fn transpose_explicit(
        &self,
        traj: &Trajectory,
        n: usize,
        w1: &Field,
        w2: &Field,
        variant: AdjointVariant,
    ) -> (Field, Field) {
        let dt = self.dt();
        let tb = 2.0 * self.params().beta();
        let alpha = match variant {
            AdjointVariant::Exact => self.params().alpha(),
            AdjointVariant::FlippedReaction => -self.params().alpha(),
        };
        let (m, p) = (&traj.m[n], &traj.phi[n]);
        let kernel = self.kernel();
        let c = kernel.grad_convolve(m);
        let (gw1, gw2) = (grad(w1), grad(w2));
        let c_gw1 = c.pointwise_dot(&gw1);
        let c_gw2 = c.pointwise_dot(&gw2);

        // Kᵀ((φ̂ − m̂²)∇w₁ + m̂(1 − φ̂)∇w₂)
        let b = p.zip_map(m, |p, m| p - m * m);
        let d = m.zip_map(p, |m, p| m * (1.0 - p));
        let mut v: VectorField = gw1.scale_by(&b);
        let t = gw2.scale_by(&d);
        v.x.add_scaled(1.0, &t.x);
        v.y.add_scaled(1.0, &t.y);
        let kt = kernel.grad_convolve_transpose(&v);

        let local1 = m
            .mul(&c_gw1)
            .scale(-2.0)
            .add(&p.map(|p| 1.0 - p).mul(&c_gw2));
        let mut out1 = w1.clone();
        out1.add_scaled(dt * tb, &local1.add(&kt));

        let mut out2 = w2.scale(1.0 - dt * alpha);
        out2.add_scaled(dt * tb, &c_gw1.sub(&m.mul(&c_gw2)));
        (out1, out2)
    }

    fn continuous_explicit(&self, traj: &Trajectory, n: usize, w1: &Field, w2: &Field) -> (Field, Field) {
        let dt = self.dt();
        let tb = 2.0 * self.params().beta();
        let alpha = self.params().alpha();
        let (m, p) = (&traj.m[n], &traj.phi[n]);
        let kernel = self.kernel();
        let c = kernel.grad_convolve(m);
        let (gw1, gw2) = (grad(w1), grad(w2));
        let c_gw1 = c.pointwise_dot(&gw1);
        let c_gw2 = c.pointwise_dot(&gw2);
        let j_gw1 = kernel.grad_dot_convolve(&gw1);
        let j_gw2 = kernel.grad_dot_convolve(&gw2);

        let r1 = m
            .mul(&c_gw1)
            .scale(-2.0)
            .add(&p.zip_map(m, |p, m| p - m * m).mul(&j_gw1))
            .add(&p.map(|p| 1.0 - p).mul(&c_gw2))
            .add(&m.zip_map(p, |m, p| m * (1.0 - p)).mul(&j_gw2));
        let mut out1 = w1.clone();
        out1.add_scaled(dt * tb, &r1);

        let r2 = c_gw1.scale(-1.0).sub(&m.mul(&c_gw2));
        let mut out2 = w2.scale(1.0 - dt * alpha);
        out2.add_scaled(dt * tb, &r2);
        (out1, out2)
    }
}

/// `gₙ = γ₂ₙ + δθₙ` on the control nodes: the representative of `DJ(θ)`
/// in the `hx·hy·dt` weighted inner product.
pub fn reduced_gradient(adj: &AdjointTrajectory, theta: &ControlField, delta: f64) -> Result<ControlField> {
    if adj.nt() != theta.nt() {
        return Err(Error::ShapeMismatch(format!(
            "adjoint has {} steps, control has {} slices",
            adj.nt(),
            theta.nt()
        )));
    }
    Ok(adj.gamma2_control()?.axpy(delta, theta))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forward::{InitData, ModelParams};
    use crate::grid::Grid;
    use crate::kernel::{Kernel, KernelKind};
    use crate::spectral::Spectral;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn model(n: usize, beta: f64, alpha: f64, dt: f64, nt: usize) -> Model {
        let g = Grid::unit_square(n).unwrap();
        let k = Kernel::build(g, 0.2, KernelKind::Bump).unwrap();
        Model::new(k, ModelParams::with_steps(beta, alpha, dt, nt).unwrap())
    }

    fn init(g: Grid) -> InitData {
        let m = Field::from_fn(g, |x, y| 0.3 * (2.0 * PI * x).cos() * (2.0 * PI * y).sin());
        let p = Field::from_fn(g, |x, y| 0.5 + 0.1 * (2.0 * PI * (x + y)).sin());
        InitData::new(m, p).unwrap()
    }

    fn random(g: Grid, rng: &mut ChaCha8Rng) -> Field {
        Field::from_values(g, (0..g.len()).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
    }

    #[test]
    fn cost_examples() {
        let md = model(16, 1.0, 0.0, 0.1, 10);
        let g = *md.grid();
        let i0 = InitData::new(Field::zeros(g), Field::zeros(g)).unwrap();
        let traj = md.solve_state(&i0, &ControlField::zeros(g, 10)).unwrap();
        let same = Target::from_trajectory(&traj);
        assert_eq!(cost(&traj, &same, 1.0).unwrap().total(), 0.0);
        let off = Target::constant(Field::constant(g, -1.0));
        assert!((cost(&traj, &off, 0.0).unwrap().total() - 0.5).abs() < 1e-14);

        let mut t2 = traj.clone();
        t2.theta = ControlField::constant(g, 10, 1.0);
        assert!((cost(&t2, &same, 2.0).unwrap().total() - 1.0).abs() < 1e-14);

        let bad = Target::from_slices(vec![Field::zeros(g); 3]).unwrap();
        assert!(matches!(cost(&traj, &bad, 1.0), Err(Error::ShapeMismatch(_))));
    }

    #[test]
    fn zero_misfit_gives_zero_adjoint() {
        let md = model(16, 1.0, 1.0, 1e-2, 8);
        let g = *md.grid();
        let traj = md.solve_state(&init(g), &ControlField::constant(g, 8, 0.2)).unwrap();
        let tgt = Target::from_trajectory(&traj);
        for adj in [
            md.solve_adjoint_discrete(&traj, &tgt).unwrap(),
            md.solve_adjoint_continuous(&traj, &tgt).unwrap(),
        ] {
            assert!(adj.gamma1.iter().chain(&adj.gamma2).all(|f| f.max_abs() == 0.0));
        }
        let g2 = reduced_gradient(&md.solve_adjoint_discrete(&traj, &tgt).unwrap(), &traj.theta, 0.5).unwrap();
        assert!(g2.sub(&traj.theta.scale(0.5)).norm(1.0) == 0.0);
        let g0 = reduced_gradient(&md.solve_adjoint_discrete(&traj, &tgt).unwrap(), &traj.theta, 0.0).unwrap();
        assert_eq!(g0.norm(1.0), 0.0);
    }

    #[test]
    fn decoupled_adjoint_matches_eigenbasis_oracle() {
        let (dt, nt) = (1e-2, 12);
        let md = model(16, 0.0, 0.0, dt, nt);
        let g = *md.grid();
        let traj = md.solve_state(&init(g), &ControlField::zeros(g, nt)).unwrap();
        let tgt = Target::constant(Field::from_fn(g, |x, _| (2.0 * PI * x).sin()));
        let adj = md.solve_adjoint_discrete(&traj, &tgt).unwrap();

        // independent oracle: per-mode backward recursion
        let s = Spectral::new(g);
        let mut gam = vec![num(0.0); g.len()];
        let mut expect = vec![Field::zeros(g); nt + 1];
        for n in (1..=nt).rev() {
            let src = s.forward(&traj.phi[n].sub(tgt.at(n)));
            for ky in 0..g.ny() {
                for kx in 0..g.nx() {
                    let k = ky * g.nx() + kx;
                    let lam = s.neg_laplacian_eigenvalue(kx, ky);
                    gam[k] = (gam[k] + src[k] * dt) / (1.0 + dt * lam);
                }
            }
            expect[n - 1] = s.inverse(gam.clone());
        }
        for n in 0..=nt {
            assert!(adj.gamma2[n].sub(&expect[n]).max_abs() < 1e-12);
            assert_eq!(adj.gamma1[n].max_abs(), 0.0);
        }
        let cont = md.solve_adjoint_continuous(&traj, &tgt).unwrap();
        for n in 0..=nt {
            assert!(cont.gamma2[n].sub(&adj.gamma2[n]).max_abs() < 1e-12);
        }
    }

    fn num(v: f64) -> rustfft::num_complex::Complex64 {
        rustfft::num_complex::Complex64::new(v, 0.0)
    }

    #[test]
    fn duality_identity() {
        let nt = 10;
        let md = model(16, 1.5, 0.7, 1e-2, nt);
        let g = *md.grid();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let traj = md.solve_state(&init(g), &ControlField::constant(g, nt, 0.3)).unwrap();
        let h = ControlField::from_slices(nt, |_| random(g, &mut rng)).unwrap();
        let s1: Vec<Field> = (0..=nt).map(|_| random(g, &mut rng)).collect();
        let s2: Vec<Field> = (0..=nt).map(|_| random(g, &mut rng)).collect();
        let tan = md.solve_linearized(&traj, &h).unwrap();
        let adj = md.adjoint_with_sources(&traj, &s1, &s2, AdjointVariant::Exact).unwrap();
        let lhs: f64 = (1..=nt)
            .map(|n| s1[n].dot(&tan.phi1[n]) + s2[n].dot(&tan.phi2[n]))
            .sum::<f64>()
            * md.dt();
        let rhs = h.dot(&adj.gamma2_control().unwrap(), md.dt());
        assert!((lhs - rhs).abs() <= 1e-10 * lhs.abs(), "{lhs} vs {rhs}");
    }

    #[test]
    fn gradient_matches_central_differences() {
        let nt = 10;
        let md = model(16, 1.0, 1.0, 1e-2, nt);
        let g = *md.grid();
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let i0 = init(g);
        let theta = ControlField::from_slices(nt, |_| random(g, &mut rng).scale(0.2)).unwrap();
        let tgt = Target::constant(Field::constant(g, 0.6));
        let delta = 1e-2;
        let traj = md.solve_state(&i0, &theta).unwrap();
        let grad = reduced_gradient(&md.solve_adjoint_discrete(&traj, &tgt).unwrap(), &theta, delta).unwrap();
        let jc = |th: &ControlField| cost(&md.solve_state(&i0, th).unwrap(), &tgt, delta).unwrap().total();
        for _ in 0..3 {
            let h = ControlField::from_slices(nt, |_| random(g, &mut rng)).unwrap();
            let eps = 1e-5;
            let fd = (jc(&theta.axpy(eps, &h)) - jc(&theta.axpy(-eps, &h))) / (2.0 * eps);
            let ad = grad.dot(&h, md.dt());
            assert!((fd - ad).abs() <= 1e-6 * ad.abs(), "{fd} vs {ad}");
        }
        let wrong = md
            .solve_adjoint_variant(&traj, &tgt, AdjointVariant::FlippedReaction)
            .unwrap();
        let wg = reduced_gradient(&wrong, &theta, delta).unwrap();
        assert!(wg.sub(&grad).norm(1.0) > 1e-3 * grad.norm(1.0));
    }
}
