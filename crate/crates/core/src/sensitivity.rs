//! Exact linearization of the discrete forward map.
//!
//! Differentiating one IMEX step at the stored state `(m̂, φ̂)` in the
//! direction `(φ₁, φ₂, h)` gives, with `ĉ = ∇J ∗ m̂`,
//!
//! ```text
//! (I − dt Δ_h) φ₁⁺ = φ₁ − dt div(2β[(φ₂ − 2m̂φ₁) ĉ + (φ̂ − m̂²)(∇J ∗ φ₁)])
//! (I − dt Δ_h) φ₂⁺ = (1 − dt α) φ₂ + dt h
//!                    − dt div(2β[m̂(1 − φ̂)(∇J ∗ φ₁) + φ₁(1 − φ̂) ĉ − φ₂ m̂ ĉ])
//! ```
//!
//! which is the linearized state system discretized by the same scheme.
//! The state is polynomial in the unknowns on each step, so Taylor
//! remainders of the full map are quadratic.

use crate::control::ControlField;
use crate::error::{Error, Result};
use crate::forward::{l2_h1, InitData, Model, Trajectory};
use crate::grid::{div, Field};

/// Tangent `(φ₁ₙ, φ₂ₙ)`, `n = 0..=nt`, driven by the control direction `h`.
#[derive(Debug, Clone, PartialEq)]
pub struct TangentTrajectory {
    pub dt: f64,
    pub phi1: Vec<Field>,
    pub phi2: Vec<Field>,
    pub direction: ControlField,
}

impl TangentTrajectory {
    /// `‖φ₁‖_{L²(S;H¹)} + ‖φ₂‖_{L²(S;H¹)}`.
    pub fn l2_h1(&self) -> f64 {
        l2_h1(&self.phi1, self.dt) + l2_h1(&self.phi2, self.dt)
    }

    /// Discrete `L²(S × Ω)²` norm over `n = 1..=nt`.
    pub fn l2(&self) -> f64 {
        let s: f64 = self.phi1[1..]
            .iter()
            .chain(&self.phi2[1..])
            .map(|f| f.dot(f))
            .sum();
        (s * self.dt).sqrt()
    }
}

impl Model {
    pub fn step_linearized(
        &self,
        m_hat: &Field,
        phi_hat: &Field,
        phi1: &Field,
        phi2: &Field,
        h: &Field,
    ) -> Result<(Field, Field)> {
        let dt = self.dt();
        let two_beta = 2.0 * self.params().beta();
        let alpha = self.params().alpha();
        let kernel = self.kernel();
        let c = kernel.grad_convolve(m_hat);
        let k1 = kernel.grad_convolve(phi1);

        let a = phi2.zip_map(&m_hat.mul(phi1), |f2, mf1| two_beta * (f2 - 2.0 * mf1));
        let b = phi_hat.zip_map(m_hat, |p, m| two_beta * (p - m * m));
        let mut flux1 = c.scale_by(&a);
        let t = k1.scale_by(&b);
        flux1.x.add_scaled(1.0, &t.x);
        flux1.y.add_scaled(1.0, &t.y);

        // coefficient of ĉ in the φ₂ flux: φ₁(1 − φ̂) − φ₂ m̂
        let e = phi1
            .zip_map(phi_hat, |f1, p| f1 * (1.0 - p))
            .sub(&phi2.mul(m_hat))
            .scale(two_beta);
        let d = m_hat.zip_map(phi_hat, |m, p| two_beta * m * (1.0 - p));
        let mut flux2 = c.scale_by(&e);
        let t = k1.scale_by(&d);
        flux2.x.add_scaled(1.0, &t.x);
        flux2.y.add_scaled(1.0, &t.y);

        let mut rhs1 = phi1.clone();
        rhs1.add_scaled(-dt, &div(&flux1));
        let mut rhs2 = phi2.scale(1.0 - dt * alpha);
        rhs2.add_scaled(-dt, &div(&flux2));
        rhs2.add_scaled(dt, h);

        let out1 = self.implicit_solve(&rhs1);
        let out2 = self.implicit_solve(&rhs2);
        if !(out1.is_finite() && out2.is_finite()) {
            return Err(Error::NonFinite { what: "tangent", step: 0 });
        }
        Ok((out1, out2))
    }

    pub fn solve_linearized(&self, traj: &Trajectory, h: &ControlField) -> Result<TangentTrajectory> {
        let nt = traj.nt();
        if h.nt() != nt {
            return Err(Error::ShapeMismatch(format!(
                "direction has {} slices, trajectory has {nt} steps",
                h.nt()
            )));
        }
        let g = *traj.grid();
        g.check_same(h.grid())?;
        let mut phi1 = vec![Field::zeros(g)];
        let mut phi2 = vec![Field::zeros(g)];
        for n in 0..nt {
            let (a, b) = self
                .step_linearized(&traj.m[n], &traj.phi[n], &phi1[n], &phi2[n], h.slice(n))
                .map_err(|e| e.at_step(n + 1))?;
            phi1.push(a);
            phi2.push(b);
        }
        Ok(TangentTrajectory {
            dt: traj.dt,
            phi1,
            phi2,
            direction: h.clone(),
        })
    }
}

/// Result of a Taylor remainder test.
#[derive(Debug, Clone, PartialEq)]
pub struct TaylorReport {
    pub eps: Vec<f64>,
    /// `r(ε) = ‖S(θ̂ + εh) − S(θ̂) − ε DS(θ̂)h‖`
    pub remainders: Vec<f64>,
    /// `‖S(θ̂ + εh) − S(θ̂)‖ / ε`
    pub difference_quotients: Vec<f64>,
    /// `‖DS(θ̂)h‖`
    pub derivative_norm: f64,
    /// Observed orders between consecutive rungs.
    pub orders: Vec<f64>,
}

impl TaylorReport {
    /// Relative gap between the last difference quotient and `‖DS(θ̂)h‖`.
    pub fn first_order_gap(&self) -> f64 {
        let q = *self.difference_quotients.last().expect("ladder is nonempty");
        if self.derivative_norm == 0.0 {
            q
        } else {
            (q - self.derivative_norm).abs() / self.derivative_norm
        }
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("eps,remainder,quotient,order\n");
        for (k, e) in self.eps.iter().enumerate() {
            let order = if k == 0 {
                String::new()
            } else {
                format!("{:.6}", self.orders[k - 1])
            };
            out.push_str(&format!(
                "{e:.6e},{:.6e},{:.6e},{order}\n",
                self.remainders[k], self.difference_quotients[k]
            ));
        }
        out
    }
}

/// Discrete `L²(S × Ω)²` distance of the `(m, φ)` components over
/// `n = 1..=nt` of `a − b − s·t`, with `t` an optional tangent.
fn remainder(a: &Trajectory, b: &Trajectory, s: f64, t: Option<&TangentTrajectory>) -> f64 {
    let mut acc = 0.0;
    for n in 1..=a.nt() {
        let mut dm = a.m[n].sub(&b.m[n]);
        let mut dp = a.phi[n].sub(&b.phi[n]);
        if let Some(t) = t {
            dm.add_scaled(-s, &t.phi1[n]);
            dp.add_scaled(-s, &t.phi2[n]);
        }
        acc += dm.dot(&dm) + dp.dot(&dp);
    }
    (acc * a.dt).sqrt()
}

/// Taylor test of the control-to-state map along `h`. Orders are
/// `log(r(εₖ)/r(εₖ₊₁)) / log(εₖ/εₖ₊₁)`, i.e. `log₂` of the ratio for a
/// halving ladder.
pub fn taylor_test(
    model: &Model,
    init: &InitData,
    theta: &ControlField,
    h: &ControlField,
    eps: &[f64],
) -> Result<TaylorReport> {
    if eps.len() < 3 {
        return Err(Error::LadderTooShort(eps.len()));
    }
    let base = model.solve_state(init, theta)?;
    let tangent = model.solve_linearized(&base, h)?;
    let derivative_norm = tangent.l2();
    let mut remainders = Vec::with_capacity(eps.len());
    let mut difference_quotients = Vec::with_capacity(eps.len());
    for &e in eps {
        let pert = model.solve_state(init, &theta.axpy(e, h))?;
        remainders.push(remainder(&pert, &base, e, Some(&tangent)));
        difference_quotients.push(remainder(&pert, &base, 0.0, None) / e);
    }
    let orders = eps
        .windows(2)
        .zip(remainders.windows(2))
        .map(|(e, r)| (r[0] / r[1]).ln() / (e[0] / e[1]).ln())
        .collect();
    Ok(TaylorReport {
        eps: eps.to_vec(),
        remainders,
        difference_quotients,
        derivative_norm,
        orders,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forward::ModelParams;
    use crate::grid::Grid;
    use crate::kernel::{Kernel, KernelKind};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn model(n: usize, beta: f64, alpha: f64, dt: f64, nt: usize) -> Model {
        let g = Grid::unit_square(n).unwrap();
        let k = Kernel::build(g, 0.2, KernelKind::Bump).unwrap();
        Model::new(k, ModelParams::with_steps(beta, alpha, dt, nt).unwrap())
    }

    fn random(g: Grid, amp: f64, rng: &mut ChaCha8Rng) -> Field {
        Field::from_values(g, (0..g.len()).map(|_| rng.gen_range(-amp..amp)).collect()).unwrap()
    }

    fn state(g: Grid) -> (Field, Field) {
        let m = Field::from_fn(g, |x, y| 0.3 * (2.0 * PI * x).cos() * (2.0 * PI * y).sin());
        let p = Field::from_fn(g, |x, y| 0.5 + 0.1 * (2.0 * PI * (x + y)).sin());
        (m, p)
    }

    #[test]
    fn zero_direction_stays_zero() {
        let md = model(16, 1.0, 1.0, 1e-2, 1);
        let g = *md.grid();
        let (m, p) = state(g);
        let z = Field::zeros(g);
        let (a, b) = md.step_linearized(&m, &p, &z, &z, &z).unwrap();
        assert_eq!(a.max_abs(), 0.0);
        assert_eq!(b.max_abs(), 0.0);
    }

    #[test]
    fn beta_zero_is_pure_diffusion() {
        let dt = 1e-2;
        let md = model(16, 0.0, 0.0, dt, 1);
        let g = *md.grid();
        let (m, p) = state(g);
        let f1 = Field::from_fn(g, |_, y| (4.0 * PI * y).cos());
        let z = Field::zeros(g);
        let (a, _) = md.step_linearized(&m, &p, &f1, &z, &z).unwrap();
        let h = g.hy();
        let lam = (2.0 / (h * h)) * (1.0 - (4.0 * PI * h).cos());
        assert!(a.sub(&f1.scale(1.0 / (1.0 + dt * lam))).max_abs() < 1e-12);
    }

    #[test]
    fn one_step_matches_finite_differences() {
        let md = model(16, 1.5, 1.0, 1e-2, 1);
        let g = *md.grid();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (m, p) = state(g);
        let th = random(g, 1.0, &mut rng);
        let (d1, d2, dh) = (random(g, 0.3, &mut rng), random(g, 0.3, &mut rng), random(g, 1.0, &mut rng));
        let (lm, lp) = md.step_linearized(&m, &p, &d1, &d2, &dh).unwrap();
        let (m0, p0) = md.step_state(&m, &p, &th).unwrap();
        let mut errs = vec![];
        for eps in [1e-3, 1e-4, 1e-5] {
            let pert = |f: &Field, d: &Field| {
                let mut o = f.clone();
                o.add_scaled(eps, d);
                o
            };
            let (m1, p1) = md.step_state(&pert(&m, &d1), &pert(&p, &d2), &pert(&th, &dh)).unwrap();
            let em = m1.sub(&m0).scale(1.0 / eps).sub(&lm).l2();
            let ep = p1.sub(&p0).scale(1.0 / eps).sub(&lp).l2();
            errs.push(em + ep);
        }
        for w in errs.windows(2) {
            let ratio = w[0] / w[1];
            assert!((8.0..12.0).contains(&ratio), "{errs:?}");
        }
    }

    #[test]
    fn linearity_and_mass() {
        let md = model(16, 1.0, 1.0, 1e-2, 10);
        let g = *md.grid();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (m, p) = state(g);
        let init = InitData::new(m, p).unwrap();
        let traj = md.solve_state(&init, &ControlField::constant(g, 10, 0.2)).unwrap();
        let mut h = || ControlField::from_slices(10, |_| random(g, 1.0, &mut rng)).unwrap();
        let (h1, h2) = (h(), h());
        let t1 = md.solve_linearized(&traj, &h1).unwrap();
        let t2 = md.solve_linearized(&traj, &h2).unwrap();
        let t12 = md.solve_linearized(&traj, &h1.add(&h2)).unwrap();
        let t1x2 = md.solve_linearized(&traj, &h1.scale(2.0)).unwrap();
        for n in 0..=10 {
            assert!(t12.phi2[n].sub(&t1.phi2[n].add(&t2.phi2[n])).max_abs() < 1e-11);
            assert!(t12.phi1[n].sub(&t1.phi1[n].add(&t2.phi1[n])).max_abs() < 1e-11);
            assert!(t1x2.phi2[n].sub(&t1.phi2[n].scale(2.0)).max_abs() < 1e-12);
            assert!(t1.phi1[n].integral().abs() < 1e-12);
        }
        let zero = md.solve_linearized(&traj, &ControlField::zeros(g, 10)).unwrap();
        assert_eq!(zero.l2(), 0.0);
    }

    #[test]
    fn taylor_orders_are_two() {
        let md = model(16, 1.0, 1.0, 1e-2, 10);
        let g = *md.grid();
        let (m, p) = state(g);
        let init = InitData::new(m, p).unwrap();
        let theta = ControlField::constant(g, 10, 0.3);
        let h = ControlField::from_slices(10, |n| {
            Field::from_fn(g, |x, y| (2.0 * PI * (x - y)).cos() + 0.1 * n as f64)
        })
        .unwrap();
        let rep = taylor_test(&md, &init, &theta, &h, &[1e-1, 5e-2, 2.5e-2, 1.25e-2]).unwrap();
        for o in &rep.orders {
            assert!((1.9..=2.1).contains(o), "{rep:?}");
        }
        assert!(rep.first_order_gap() < 0.01);
        assert!(rep.to_csv().lines().count() == 5);

        assert!(matches!(
            taylor_test(&md, &init, &theta, &h, &[1e-1, 5e-2]),
            Err(Error::LadderTooShort(2))
        ));
        let zero = taylor_test(&md, &init, &theta, &ControlField::zeros(g, 10), &[1e-1, 5e-2, 2.5e-2]);
        assert!(zero.unwrap().remainders.iter().all(|&r| r == 0.0));
    }
}
