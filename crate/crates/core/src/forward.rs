//! Forward solver for the coupled state system
//!
//! ```text
//! ∂ₜm = ∇·[∇m − 2β(φ − m²)(∇J ∗ m)]
//! ∂ₜφ = ∇·[∇φ − 2β m(1 − φ)(∇J ∗ m)] + α(1 − φ) + θ
//! ```
//!
//! on the periodic rectangle, with IMEX Euler in time: the diffusion is
//! implicit and solved exactly in Fourier space, the nonlocal drift and the
//! reaction/control terms are explicit and evaluated at the old state. One
//! step is
//!
//! ```text
//! (I − dt Δ_h) m⁺ = m − dt div(2β(φ − m²) c)
//! (I − dt Δ_h) φ⁺ = φ − dt div(2β m(1 − φ) c) + dt (α(1 − φ) + θₙ),   c = ∇J ∗ m
//! ```
//!
//! Every time-integrated quantity in this crate that involves the state uses
//! the right-endpoint rule over `n = 1..=nt`; controls use the left endpoint
//! `n = 0..nt`.

use crate::control::ControlField;
use crate::error::{Error, Result};
use crate::grid::{div, face_dot, grad, h1_norm, Field, Grid, VectorField};
use crate::kernel::Kernel;
use crate::spectral::HeatSolver;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelParams {
    beta: f64,
    alpha: f64,
    t_final: f64,
    dt: f64,
    nt: usize,
}

impl ModelParams {
    /// `beta = 0` is accepted as the decoupled limit used in verification;
    /// the configuration layer insists on `beta > 0`.
    pub fn new(beta: f64, alpha: f64, t_final: f64, dt: f64) -> Result<Self> {
        let bad = |name, reason: String| Err(Error::InvalidParameter { name, reason });
        if !(beta.is_finite() && beta >= 0.0) {
            return bad("beta", format!("must be finite and >= 0, got {beta}"));
        }
        if !(alpha.is_finite() && alpha >= 0.0) {
            return bad("alpha", format!("must be finite and >= 0, got {alpha}"));
        }
        if !(dt.is_finite() && dt > 0.0) {
            return bad("dt", format!("must be positive, got {dt}"));
        }
        if !(t_final.is_finite() && t_final > 0.0) {
            return bad("T", format!("must be positive, got {t_final}"));
        }
        let nt = (t_final / dt).round();
        if nt < 1.0 || (nt * dt - t_final).abs() > 1e-12 * t_final {
            return bad("dt", format!("T = {t_final} is not an integer multiple of dt = {dt}"));
        }
        Ok(Self {
            beta,
            alpha,
            t_final,
            dt,
            nt: nt as usize,
        })
    }

    /// Parameters with `nt` steps of size `dt`.
    pub fn with_steps(beta: f64, alpha: f64, dt: f64, nt: usize) -> Result<Self> {
        Self::new(beta, alpha, dt * nt as f64, dt)
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn t_final(&self) -> f64 {
        self.t_final
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn nt(&self) -> usize {
        self.nt
    }
}

/// Initial data satisfying `0 ≤ |m₀| ≤ |φ₀| ≤ 1` pointwise.
#[derive(Debug, Clone, PartialEq)]
pub struct InitData {
    m0: Field,
    phi0: Field,
}

impl InitData {
    pub fn new(m0: Field, phi0: Field) -> Result<Self> {
        m0.grid().check_same(phi0.grid())?;
        if !(m0.is_finite() && phi0.is_finite()) {
            return Err(Error::Inadmissible("non-finite initial values".into()));
        }
        for (k, (&m, &p)) in m0.values().iter().zip(phi0.values()).enumerate() {
            if m.abs() > p.abs() {
                return Err(Error::Inadmissible(format!(
                    "(A2) |m0| <= |phi0| fails at cell {k}: |{m}| > |{p}|"
                )));
            }
            if p.abs() > 1.0 {
                return Err(Error::Inadmissible(format!(
                    "(A2) |phi0| <= 1 fails at cell {k}: |{p}| > 1"
                )));
            }
        }
        Ok(Self { m0, phi0 })
    }

    pub fn m0(&self) -> &Field {
        &self.m0
    }

    pub fn phi0(&self) -> &Field {
        &self.phi0
    }

    pub fn grid(&self) -> &Grid {
        self.m0.grid()
    }
}

/// Stored forward run: `m[n], phi[n]` for `n = 0..=nt` and the control that
/// produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub dt: f64,
    pub m: Vec<Field>,
    pub phi: Vec<Field>,
    pub theta: ControlField,
}

impl Trajectory {
    pub fn nt(&self) -> usize {
        self.m.len() - 1
    }

    pub fn time(&self, n: usize) -> f64 {
        n as f64 * self.dt
    }

    pub fn grid(&self) -> &Grid {
        self.m[0].grid()
    }
}

/// `sqrt(Σ_{n=1}^{nt} dt · ‖fₙ‖²_{H¹})` over a stored sequence.
pub fn l2_h1(fields: &[Field], dt: f64) -> f64 {
    (fields[1..].iter().map(|f| h1_norm(f).powi(2)).sum::<f64>() * dt).sqrt()
}

/// `sqrt(Σ_{n=1}^{nt} dt · ‖fₙ‖²_{L²})`.
pub fn l2_l2(fields: &[Field], dt: f64) -> f64 {
    (fields[1..].iter().map(|f| f.dot(f)).sum::<f64>() * dt).sqrt()
}

/// Accumulated weak-form residuals.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeakResidual {
    pub res_m: f64,
    pub res_phi: f64,
}

/// Norms appearing in the a priori estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormReport {
    /// `‖m‖_{L²(S;H¹)}`
    pub m_l2_h1: f64,
    pub phi_l2_h1: f64,
    /// `‖∂ₜm‖_{L²(S;H⁻¹)}` with backward differences.
    pub dm_l2_hm1: f64,
    pub dphi_l2_hm1: f64,
}

impl NormReport {
    pub fn total(&self) -> f64 {
        self.m_l2_h1 + self.phi_l2_h1 + self.dm_l2_hm1 + self.dphi_l2_hm1
    }
}

/// Largest violations of `|m| ≤ |φ| ≤ 1`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct BoundsReport {
    /// `max(|m| − |φ|, 0)`
    pub max_viol_m: f64,
    /// `max(|φ| − 1, 0)`
    pub max_viol_phi: f64,
}

impl BoundsReport {
    pub fn max(&self) -> f64 {
        self.max_viol_m.max(self.max_viol_phi)
    }
}

pub fn bounds_violation(m: &Field, phi: &Field) -> BoundsReport {
    let mut rep = BoundsReport::default();
    for (&a, &p) in m.values().iter().zip(phi.values()) {
        rep.max_viol_m = rep.max_viol_m.max(a.abs() - p.abs());
        rep.max_viol_phi = rep.max_viol_phi.max(p.abs() - 1.0);
    }
    rep
}

pub fn bounds_check(traj: &Trajectory) -> BoundsReport {
    traj.m
        .iter()
        .zip(&traj.phi)
        .map(|(m, p)| bounds_violation(m, p))
        .fold(BoundsReport::default(), |acc, r| BoundsReport {
            max_viol_m: acc.max_viol_m.max(r.max_viol_m),
            max_viol_phi: acc.max_viol_phi.max(r.max_viol_phi),
        })
}

/// Drift fluxes at a state: `c = ∇J ∗ m`, `F_m = 2β(φ − m²) c`,
/// `F_φ = 2β m(1 − φ) c`.
pub struct Drift {
    pub c: VectorField,
    pub flux_m: VectorField,
    pub flux_phi: VectorField,
}

#[derive(Debug)]
pub struct Model {
    params: ModelParams,
    kernel: Kernel,
    heat: HeatSolver,
}

impl Model {
    pub fn new(kernel: Kernel, params: ModelParams) -> Self {
        let heat = HeatSolver::new(kernel.spectral().clone(), params.dt());
        Self {
            params,
            kernel,
            heat,
        }
    }

    /// Same kernel and grid, different parameters.
    pub fn with_params(&self, params: ModelParams) -> Self {
        Self::new(self.kernel.clone(), params)
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn kernel(&self) -> &Kernel {
        &self.kernel
    }

    pub fn grid(&self) -> &Grid {
        self.kernel.grid()
    }

    pub fn dt(&self) -> f64 {
        self.params.dt()
    }

    pub fn nt(&self) -> usize {
        self.params.nt()
    }

    /// Apply `(I − dt Δ_h)⁻¹`.
    pub fn implicit_solve(&self, rhs: &Field) -> Field {
        self.heat.solve(rhs)
    }

    /// Step-size bound `h² / (4 V h + 2 R h²)` with `V = 2β‖∇J‖_{L¹}` and
    /// `R = α`, `h = min(hx, hy)`. Infinite when both rates vanish.
    pub fn stability_bound(&self) -> f64 {
        let g = self.grid();
        let h = g.hx().min(g.hy());
        let v = 2.0 * self.params.beta() * self.kernel.grad_l1();
        let r = self.params.alpha();
        let denom = 4.0 * v * h + 2.0 * r * h * h;
        if denom == 0.0 {
            f64::INFINITY
        } else {
            h * h / denom
        }
    }

    pub fn drift(&self, m: &Field, phi: &Field) -> Drift {
        let two_beta = 2.0 * self.params.beta();
        let c = self.kernel.grad_convolve(m);
        let coef_m = phi.zip_map(m, |p, m| two_beta * (p - m * m));
        let coef_phi = m.zip_map(phi, |m, p| two_beta * m * (1.0 - p));
        Drift {
            flux_m: c.scale_by(&coef_m),
            flux_phi: c.scale_by(&coef_phi),
            c,
        }
    }

    /// One IMEX Euler step.
    pub fn step_state(&self, m: &Field, phi: &Field, theta: &Field) -> Result<(Field, Field)> {
        m.grid().check_same(theta.grid())?;
        let dt = self.dt();
        let alpha = self.params.alpha();
        let d = self.drift(m, phi);

        let mut rhs_m = m.clone();
        rhs_m.add_scaled(-dt, &div(&d.flux_m));

        let mut rhs_phi = phi.clone();
        rhs_phi.add_scaled(-dt, &div(&d.flux_phi));
        let source = phi.zip_map(theta, |p, t| alpha * (1.0 - p) + t);
        rhs_phi.add_scaled(dt, &source);

        let m_next = self.implicit_solve(&rhs_m);
        let phi_next = self.implicit_solve(&rhs_phi);
        if !(m_next.is_finite() && phi_next.is_finite()) {
            return Err(Error::NonFinite { what: "state", step: 0 });
        }
        Ok((m_next, phi_next))
    }

    pub fn solve_state(&self, init: &InitData, theta: &ControlField) -> Result<Trajectory> {
        let nt = self.nt();
        if theta.nt() != nt {
            return Err(Error::ShapeMismatch(format!(
                "control has {} slices, model needs {nt}",
                theta.nt()
            )));
        }
        self.grid().check_same(init.grid())?;
        self.grid().check_same(theta.grid())?;
        let mut m = Vec::with_capacity(nt + 1);
        let mut phi = Vec::with_capacity(nt + 1);
        m.push(init.m0().clone());
        phi.push(init.phi0().clone());
        for n in 0..nt {
            let (mn, pn) = self
                .step_state(&m[n], &phi[n], theta.slice(n))
                .map_err(|e| e.at_step(n + 1))?;
            m.push(mn);
            phi.push(pn);
        }
        Ok(Trajectory {
            dt: self.dt(),
            m,
            phi,
            theta: theta.clone(),
        })
    }

    /// Discrete weak-form residuals of a trajectory tested against `ψ` (for
    /// `m`) and `η` (for `φ`):
    ///
    /// ```text
    /// Σₙ dt |⟨(m⁺ − m)/dt, ψ⟩ + ⟨∇m⁺, ∇ψ⟩_h − ⟨2β(φ − m²)(∇J ∗ m), grad ψ⟩|
    /// ```
    ///
    /// and the analogue for `φ` including the reaction and control terms.
    /// The diffusion pairing `⟨∇·, ∇·⟩_h` is [`face_dot`], the form that
    /// matches the 5-point Laplacian of the scheme.
    pub fn weak_residual(&self, traj: &Trajectory, psi: &Field, eta: &Field) -> WeakResidual {
        let dt = traj.dt;
        let alpha = self.params.alpha();
        let (grad_psi, grad_eta) = (grad(psi), grad(eta));
        let mut res = WeakResidual {
            res_m: 0.0,
            res_phi: 0.0,
        };
        for n in 0..traj.nt() {
            let (m, p) = (&traj.m[n], &traj.phi[n]);
            let (m1, p1) = (&traj.m[n + 1], &traj.phi[n + 1]);
            let d = self.drift(m, p);
            let rm = m1.sub(m).dot(psi) / dt + face_dot(m1, psi) - d.flux_m.dot(&grad_psi);
            let source = p.zip_map(traj.theta.slice(n), |p, t| alpha * (1.0 - p) + t);
            let rp = p1.sub(p).dot(eta) / dt + face_dot(p1, eta)
                - d.flux_phi.dot(&grad_eta)
                - source.dot(eta);
            res.res_m += dt * rm.abs();
            res.res_phi += dt * rp.abs();
        }
        res
    }

    pub fn apriori_norms(&self, traj: &Trajectory) -> NormReport {
        let dt = traj.dt;
        let spectral = self.kernel.spectral();
        let dnorm = |f: &[Field]| {
            let s: f64 = f
                .windows(2)
                .map(|w| spectral.h_minus_1(&w[1].sub(&w[0]).scale(1.0 / dt)).powi(2))
                .sum();
            (s * dt).sqrt()
        };
        NormReport {
            m_l2_h1: l2_h1(&traj.m, dt),
            phi_l2_h1: l2_h1(&traj.phi, dt),
            dm_l2_hm1: dnorm(&traj.m),
            dphi_l2_hm1: dnorm(&traj.phi),
        }
    }

    /// `(‖m₁ − m₂‖_{L²(S;H¹)} + ‖φ₁ − φ₂‖_{L²(S;H¹)}) / ‖θ₁ − θ₂‖_{L²(S×Ω)}`.
    pub fn lipschitz_probe(
        &self,
        init: &InitData,
        theta1: &ControlField,
        theta2: &ControlField,
    ) -> Result<f64> {
        let dt = self.dt();
        let dtheta = theta1.sub(theta2).norm(dt);
        if dtheta < 1e-14 {
            return Err(Error::DegenerateProbe(dtheta));
        }
        let a = self.solve_state(init, theta1)?;
        let b = self.solve_state(init, theta2)?;
        Ok(state_difference_l2_h1(&a, &b) / dtheta)
    }
}

/// `‖m_a − m_b‖_{L²(S;H¹)} + ‖φ_a − φ_b‖_{L²(S;H¹)}`.
pub fn state_difference_l2_h1(a: &Trajectory, b: &Trajectory) -> f64 {
    let diff = |x: &[Field], y: &[Field]| -> Vec<Field> {
        x.iter().zip(y).map(|(p, q)| p.sub(q)).collect()
    };
    l2_h1(&diff(&a.m, &b.m), a.dt) + l2_h1(&diff(&a.phi, &b.phi), a.dt)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::KernelKind;
    use crate::spectral::Spectral;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn model(n: usize, beta: f64, alpha: f64, dt: f64, nt: usize) -> Model {
        let g = Grid::unit_square(n).unwrap();
        let k = Kernel::build(g, 0.1_f64.max(3.0 / n as f64), KernelKind::Bump).unwrap();
        Model::new(k, ModelParams::with_steps(beta, alpha, dt, nt).unwrap())
    }

    fn smooth_noise(grid: Grid, amp: f64, seed: u64) -> Field {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut f = Field::from_values(grid, (0..grid.len()).map(|_| rng.gen_range(-amp..amp)).collect())
            .unwrap();
        for _ in 0..3 {
            let g2 = f.clone();
            let vals: Vec<f64> = (0..grid.ny() as isize)
                .flat_map(|j| (0..grid.nx() as isize).map(move |i| (i, j)))
                .map(|(i, j)| {
                    let mut s = 0.0;
                    for dj in -1..=1 {
                        for di in -1..=1 {
                            s += g2.at(i + di, j + dj);
                        }
                    }
                    s / 9.0
                })
                .collect();
            f = Field::from_values(grid, vals).unwrap();
        }
        f
    }

    #[test]
    fn params_validation() {
        assert!(ModelParams::new(1.0, 1.0, 1.0, 0.3).is_err());
        assert!(ModelParams::new(-1.0, 1.0, 1.0, 0.1).is_err());
        assert!(ModelParams::new(1.0, -1.0, 1.0, 0.1).is_err());
        let p = ModelParams::new(1.0, 1.0, 0.5, 1e-3).unwrap();
        assert_eq!(p.nt(), 500);
        assert!((p.nt() as f64 * p.dt() - p.t_final()).abs() <= 1e-12 * p.t_final());
    }

    #[test]
    fn init_validation() {
        let g = Grid::unit_square(8).unwrap();
        assert!(InitData::new(Field::constant(g, 0.8), Field::constant(g, 0.5)).is_err());
        assert!(InitData::new(Field::constant(g, 0.5), Field::constant(g, 1.2)).is_err());
        assert!(InitData::new(Field::constant(g, -0.5), Field::constant(g, -0.6)).is_ok());
    }

    #[test]
    fn constants_are_exact_solutions() {
        let md = model(16, 1.0, 0.7, 0.01, 1);
        let g = *md.grid();
        let (c1, c2) = (0.3, 0.6);
        let (m1, p1) = md
            .step_state(&Field::constant(g, c1), &Field::constant(g, c2), &Field::zeros(g))
            .unwrap();
        assert!(m1.sub(&Field::constant(g, c1)).max_abs() < 1e-14);
        let expect = c2 + 0.01 * 0.7 * (1.0 - c2);
        assert!(p1.sub(&Field::constant(g, expect)).max_abs() < 1e-14);
    }

    #[test]
    fn heat_step_on_eigenfunction() {
        let dt = 0.01;
        let md = model(32, 0.0, 0.0, dt, 1);
        let g = *md.grid();
        let m = Field::from_fn(g, |x, _| (2.0 * PI * x).cos());
        let (m1, _) = md.step_state(&m, &Field::constant(g, 0.5), &Field::zeros(g)).unwrap();
        let h = g.hx();
        let lam = (2.0 / (h * h)) * (1.0 - (2.0 * PI * h).cos());
        assert!(m1.sub(&m.scale(1.0 / (1.0 + dt * lam))).max_abs() < 1e-13);
    }

    #[test]
    fn step_conserves_mass() {
        let md = model(32, 1.0, 1.0, 1e-3, 1);
        let g = *md.grid();
        let m = smooth_noise(g, 0.2, 1).map(|v| v + 0.05);
        let phi = Field::constant(g, 0.5);
        let (m1, _) = md.step_state(&m, &phi, &Field::zeros(g)).unwrap();
        assert!((m1.integral() - m.integral()).abs() <= 1e-12 * m.l1());
    }

    #[test]
    fn solve_state_shapes_and_errors() {
        let md = model(16, 1.0, 1.0, 0.01, 5);
        let g = *md.grid();
        let init = InitData::new(Field::zeros(g), Field::constant(g, 0.5)).unwrap();
        assert!(matches!(
            md.solve_state(&init, &ControlField::zeros(g, 4)),
            Err(Error::ShapeMismatch(_))
        ));
        let traj = md.solve_state(&init, &ControlField::zeros(g, 5)).unwrap();
        assert_eq!(traj.m.len(), 6);
        assert_eq!(traj.m[0], *init.m0());
        assert_eq!(traj.phi[0], *init.phi0());
    }

    #[test]
    fn blow_up_reports_step() {
        let md = model(16, 1.0, 1.0, 0.01, 3);
        let g = *md.grid();
        let init = InitData::new(Field::zeros(g), Field::constant(g, 0.5)).unwrap();
        let mut slices = vec![Field::zeros(g); 3];
        slices[1] = Field::constant(g, f64::INFINITY);
        let theta = ControlField::new(slices).unwrap();
        match md.solve_state(&init, &theta) {
            Err(Error::NonFinite { step, .. }) => assert_eq!(step, 2),
            other => panic!("expected NonFinite, got {other:?}"),
        }
    }

    #[test]
    fn weak_residual_of_own_trajectory_vanishes() {
        let md = model(24, 1.0, 1.0, 1e-3, 20);
        let g = *md.grid();
        let init = InitData::new(smooth_noise(g, 0.2, 2), Field::constant(g, 0.5)).unwrap();
        let theta = ControlField::constant(g, 20, 0.3);
        let mut traj = md.solve_state(&init, &theta).unwrap();
        let psi = Field::from_fn(g, |x, y| (2.0 * PI * x).sin() + (2.0 * PI * y).cos());
        let eta = Field::from_fn(g, |x, y| (2.0 * PI * (x + y)).cos());
        let r = md.weak_residual(&traj, &psi, &eta);
        assert!(r.res_m < 1e-10 && r.res_phi < 1e-10, "{r:?}");

        let k = traj.m[5].values().len() / 3;
        let mut vals = traj.m[5].clone().into_values();
        vals[k] += 1e-3;
        traj.m[5] = Field::from_values(g, vals).unwrap();
        let r = md.weak_residual(&traj, &psi, &eta);
        assert!(r.res_m > 1e-8);
    }

    #[test]
    fn weak_residual_of_constant_solution() {
        let md = model(16, 1.0, 2.0, 1e-2, 10);
        let g = *md.grid();
        let init = InitData::new(Field::constant(g, 0.1), Field::constant(g, 0.4)).unwrap();
        let traj = md.solve_state(&init, &ControlField::zeros(g, 10)).unwrap();
        let one = Field::constant(g, 1.0);
        let r = md.weak_residual(&traj, &one, &one);
        assert!(r.res_phi < 1e-12 && r.res_m < 1e-12);
    }

    #[test]
    fn bounds_of_zero_data() {
        let md = model(16, 1.0, 0.0, 1e-2, 10);
        let g = *md.grid();
        let init = InitData::new(Field::zeros(g), Field::zeros(g)).unwrap();
        let traj = md.solve_state(&init, &ControlField::zeros(g, 10)).unwrap();
        assert!(traj.m.iter().chain(&traj.phi).all(|f| f.max_abs() == 0.0));
        assert_eq!(bounds_check(&traj), BoundsReport::default());
        let norms = md.apriori_norms(&traj);
        assert_eq!(norms.total(), 0.0);
    }

    #[test]
    fn large_control_pushes_phi_past_one() {
        let md = model(16, 1.0, 1.0, 1e-2, 50);
        let g = *md.grid();
        let init = InitData::new(Field::zeros(g), Field::constant(g, 0.5)).unwrap();
        let traj = md.solve_state(&init, &ControlField::constant(g, 50, 5.0)).unwrap();
        assert!(bounds_check(&traj).max_viol_phi > 0.0);
    }

    #[test]
    fn lipschitz_degenerate() {
        let md = model(16, 1.0, 1.0, 1e-2, 4);
        let g = *md.grid();
        let init = InitData::new(Field::zeros(g), Field::constant(g, 0.5)).unwrap();
        let th = ControlField::constant(g, 4, 0.2);
        assert!(matches!(
            md.lipschitz_probe(&init, &th, &th.clone()),
            Err(Error::DegenerateProbe(_))
        ));
    }

    #[test]
    fn stability_bound_scales_with_beta() {
        let a = model(32, 1.0, 1.0, 1e-3, 1).stability_bound();
        let b = model(32, 2.0, 1.0, 1e-3, 1).stability_bound();
        assert!(b < a && a.is_finite());
        assert!(model(32, 0.0, 0.0, 1e-3, 1).stability_bound().is_infinite());
    }

    #[test]
    fn implicit_solve_shares_transform() {
        let md = model(16, 1.0, 1.0, 1e-2, 1);
        let s = Spectral::new(*md.grid());
        let f = smooth_noise(*md.grid(), 1.0, 9);
        let back = s.inverse(s.forward(&md.implicit_solve(&f)));
        assert!(back.sub(&md.implicit_solve(&f)).max_abs() < 1e-14);
    }
}
