//! The `verify` suite: conservation, bounds, Lipschitz, Taylor, adjoint and
//! optimality checks, one report row each.
//!
//! The forward checks run on the configured problem. The derivative and
//! optimization checks run on a reduced problem with the same physics on a
//! 32² grid with 100 steps over the same horizon.

use std::fmt::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::adjoint::{cost, reduced_gradient, AdjointVariant, Target};
use crate::config::{box_smooth, RunConfig};
use crate::control::{Bounds, ControlField};
use crate::error::{Error, Result};
use crate::forward::{bounds_check, l2_h1, InitData, Model, ModelParams, Trajectory};
use crate::grid::{Field, Grid};
use crate::optimize::{pgd_optimize, projection_characterization_check, ReducedProblem, Termination};
use crate::sensitivity::{taylor_test, TaylorReport};
use crate::spectral::Spectral;

#[derive(Debug, Clone, PartialEq)]
pub struct VerifyRow {
    pub name: String,
    pub measured: f64,
    pub threshold: f64,
    pub pass: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct VerifyReport {
    pub rows: Vec<VerifyRow>,
}

impl VerifyReport {
    pub fn all_pass(&self) -> bool {
        self.rows.iter().all(|r| r.pass)
    }

    pub fn failures(&self) -> impl Iterator<Item = &VerifyRow> {
        self.rows.iter().filter(|r| !r.pass)
    }

    pub fn row(&self, name: &str) -> Option<&VerifyRow> {
        self.rows.iter().find(|r| r.name == name)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("name,measured,threshold,pass,detail\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{:.6e},{:.6e},{},{}",
                r.name,
                r.measured,
                r.threshold,
                r.pass,
                r.detail.replace(',', ";")
            );
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }

    /// Pass when `measured <= threshold`.
    fn at_most(&mut self, name: &str, measured: f64, threshold: f64) {
        self.push(name, measured, threshold, measured <= threshold, String::new());
    }

    fn push(&mut self, name: &str, measured: f64, threshold: f64, pass: bool, detail: String) {
        self.rows.push(VerifyRow {
            name: name.to_string(),
            measured,
            threshold,
            pass: pass && !measured.is_nan(),
            detail,
        });
    }

    fn failed(&mut self, names: &[(&str, f64)], err: &Error) {
        for (name, threshold) in names {
            self.push(name, f64::NAN, *threshold, false, err.to_string());
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct VerifyOptions {
    /// Use the deliberately wrong adjoint; gradcheck must then fail.
    pub sabotage: bool,
}

/// Mass defect `max_n |Mₙ − M₀| / max(|M₀|, ‖m₀‖_{L¹})` and the relative
/// defect of the `φ` balance
/// `Σφₙ₊₁h² = Σφₙh² + dt Σ(α(1 − φₙ) + θₙ)h²`.
pub fn conservation_errors(model: &Model, traj: &Trajectory) -> (f64, f64) {
    let m0 = &traj.m[0];
    let scale_m = m0.integral().abs().max(m0.l1()).max(f64::MIN_POSITIVE);
    let mass_err = traj
        .m
        .iter()
        .map(|m| (m.integral() - m0.integral()).abs() / scale_m)
        .fold(0.0, f64::max);
    let alpha = model.params().alpha();
    let dt = traj.dt;
    let mut bal_err: f64 = 0.0;
    for n in 0..traj.nt() {
        let p = &traj.phi[n];
        let source = p.zip_map(traj.theta.slice(n), |p, t| alpha * (1.0 - p) + t);
        let predicted = p.integral() + dt * source.integral();
        let scale = traj.phi[n + 1]
            .l1()
            .max(p.l1())
            .max(dt * source.l1())
            .max(f64::MIN_POSITIVE);
        bal_err = bal_err.max((traj.phi[n + 1].integral() - predicted).abs() / scale);
    }
    (mass_err, bal_err)
}

/// Random smooth field with values in `[lo, hi]`.
pub fn random_smooth_field(grid: Grid, lo: f64, hi: f64, rng: &mut ChaCha8Rng) -> Field {
    let vals = (0..grid.len()).map(|_| rng.gen_range(lo..=hi)).collect();
    let mut f = Field::from_values(grid, vals).expect("sized to grid");
    for _ in 0..2 {
        f = box_smooth(&f);
    }
    f
}

/// Random space-time control with values in `[lo, hi]`, smooth in space.
pub fn random_control(grid: Grid, nt: usize, lo: f64, hi: f64, rng: &mut ChaCha8Rng) -> ControlField {
    ControlField::from_slices(nt, |_| random_smooth_field(grid, lo, hi, rng)).expect("nonempty")
}

/// Random smooth direction: a combination of the spatial modes with
/// wavenumbers `0..=2`, each with a random amplitude, phase and slow time
/// modulation.
pub fn random_direction(grid: Grid, nt: usize, rng: &mut ChaCha8Rng) -> ControlField {
    let tau = std::f64::consts::TAU;
    let modes: Vec<(f64, f64, f64, f64, f64, f64)> = (0..=2)
        .flat_map(|kx| (0..=2).map(move |ky| (kx as f64, ky as f64)))
        .map(|(kx, ky)| {
            (
                kx,
                ky,
                rng.gen_range(-1.0..1.0),
                rng.gen_range(0.0..tau),
                rng.gen_range(0.0..1.5),
                rng.gen_range(0.0..tau),
            )
        })
        .collect();
    ControlField::from_slices(nt, |n| {
        let s = n as f64 / nt as f64;
        Field::from_fn(grid, |x, y| {
            modes
                .iter()
                .map(|&(kx, ky, a, ph, w, pt)| {
                    let arg = tau * (kx * x / grid.lx() + ky * y / grid.ly()) + ph;
                    a * arg.cos() * (tau * w * s + pt).cos()
                })
                .sum()
        })
    })
    .expect("nonempty")
}

/// Lipschitz ratios over `pairs` random admissible control pairs.
pub fn lipschitz_panel(
    model: &Model,
    init: &InitData,
    bounds: &Bounds,
    pairs: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (g, nt) = (*model.grid(), model.nt());
    let (lo, hi) = (bounds.lower(), bounds.upper());
    (0..pairs)
        .map(|_| {
            let a = random_control(g, nt, lo, hi, &mut rng);
            let b = random_control(g, nt, lo, hi, &mut rng);
            model.lipschitz_probe(init, &a, &b)
        })
        .collect()
}

/// Lipschitz ratio for `β = α = 0` computed without the forward solver:
/// the `m` difference vanishes and the `φ` difference obeys
/// `dₙ₊₁ = (I − dtΔ_h)⁻¹(dₙ + dt(θ₁ − θ₂)ₙ)`, advanced mode by mode.
pub fn decoupled_lipschitz_oracle(model: &Model, theta1: &ControlField, theta2: &ControlField) -> f64 {
    let g = *model.grid();
    let dt = model.dt();
    let s = Spectral::new(g);
    let diff = theta1.sub(theta2);
    let mut dh = vec![rustfft::num_complex::Complex64::new(0.0, 0.0); g.len()];
    let mut d = vec![Field::zeros(g)];
    for n in 0..diff.nt() {
        let src = s.forward(diff.slice(n));
        for ky in 0..g.ny() {
            for kx in 0..g.nx() {
                let k = ky * g.nx() + kx;
                dh[k] = (dh[k] + src[k] * dt) / (1.0 + dt * s.neg_laplacian_eigenvalue(kx, ky));
            }
        }
        d.push(s.inverse(dh.clone()));
    }
    l2_h1(&d, dt) / diff.norm(dt)
}

/// Taylor tests along `dirs` unit-norm random directions from
/// [`random_direction`].
pub fn taylor_panel(
    model: &Model,
    init: &InitData,
    theta: &ControlField,
    dirs: usize,
    ladder: &[f64],
    seed: u64,
) -> Result<Vec<TaylorReport>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..dirs)
        .map(|_| {
            let h = random_direction(*model.grid(), model.nt(), &mut rng);
            let h = h.scale(1.0 / h.norm(model.dt()));
            taylor_test(model, init, theta, &h, ladder)
        })
        .collect()
}

/// Both sides of `Σ dt⟨w, DS h⟩ = Σ dt⟨h, DS* w⟩` for random `h` and `w`.
pub fn duality_sides(model: &Model, traj: &Trajectory, variant: AdjointVariant, seed: u64) -> Result<(f64, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (g, nt, dt) = (*traj.grid(), traj.nt(), traj.dt);
    let h = random_direction(g, nt, &mut rng);
    let w1: Vec<Field> = (0..=nt).map(|_| random_smooth_field(g, -1.0, 1.0, &mut rng)).collect();
    let w2: Vec<Field> = (0..=nt).map(|_| random_smooth_field(g, -1.0, 1.0, &mut rng)).collect();
    let tan = model.solve_linearized(traj, &h)?;
    let adj = model.adjoint_with_sources(traj, &w1, &w2, variant)?;
    let lhs = (1..=nt)
        .map(|n| w1[n].dot(&tan.phi1[n]) + w2[n].dot(&tan.phi2[n]))
        .sum::<f64>()
        * dt;
    let rhs = h.dot(&adj.gamma2_control()?, dt);
    Ok((lhs, rhs))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckRow {
    pub fd: f64,
    pub adjoint: f64,
    pub rel_err: f64,
}

/// Central differences `(J(θ + εh) − J(θ − εh))/2ε` against `Σ dt⟨g, h⟩`.
pub fn gradcheck(problem: &ReducedProblem, theta: &ControlField, dirs: usize, eps: f64, seed: u64) -> Result<Vec<GradCheckRow>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dt = problem.model.dt();
    let eval = problem.evaluate(theta)?;
    let g = problem.gradient(&eval)?;
    (0..dirs)
        .map(|_| {
            let h = random_direction(*theta.grid(), theta.nt(), &mut rng);
            let fd = (problem.cost(&theta.axpy(eps, &h))? - problem.cost(&theta.axpy(-eps, &h))?) / (2.0 * eps);
            let adjoint = g.dot(&h, dt);
            Ok(GradCheckRow {
                fd,
                adjoint,
                rel_err: (fd - adjoint).abs() / adjoint.abs().max(f64::MIN_POSITIVE),
            })
        })
        .collect()
}

pub fn relative_gap(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}

/// The reduced verification problem: same physics and horizon, 32² cells,
/// 100 steps.
pub fn reduced_config(cfg: &RunConfig) -> RunConfig {
    RunConfig {
        nx: 32,
        ny: 32,
        dt: cfg.t_final / 100.0,
        ..cfg.clone()
    }
}

pub const TAYLOR_LADDER: [f64; 4] = [1e-2, 5e-3, 2.5e-3, 1.25e-3];

pub fn run_verify(cfg: &RunConfig, opts: VerifyOptions) -> VerifyReport {
    let mut rep = VerifyReport::default();
    forward_checks(cfg, &mut rep);
    reduced_checks(&reduced_config(cfg), opts, &mut rep);
    rep
}

fn forward_checks(cfg: &RunConfig, rep: &mut VerifyReport) {
    let names = [
        ("conservation_mass_m", 1e-12),
        ("balance_phi", 1e-12),
        ("bounds_theta0", 1e-8),
    ];
    let run = || -> Result<(Model, Trajectory)> {
        let model = cfg.model()?;
        let init = cfg.init_data()?;
        let traj = model.solve_state(&init, &ControlField::zeros(*model.grid(), model.nt()))?;
        Ok((model, traj))
    };
    match run() {
        Ok((model, traj)) => {
            let (mass, bal) = conservation_errors(&model, &traj);
            rep.at_most(names[0].0, mass, names[0].1);
            rep.at_most(names[1].0, bal, names[1].1);
            rep.at_most(names[2].0, bounds_check(&traj).max(), names[2].1);
        }
        Err(e) => rep.failed(&names, &e),
    }
}

fn reduced_checks(cfg: &RunConfig, opts: VerifyOptions, rep: &mut VerifyReport) {
    let setup = match cfg.setup() {
        Ok(s) => s,
        Err(e) => {
            rep.failed(&[("reduced_setup", 0.0)], &e);
            return;
        }
    };
    let model = &setup.model;
    let init = &setup.init;
    let (g, nt, dt) = (*model.grid(), model.nt(), model.dt());
    let variant = if opts.sabotage {
        AdjointVariant::FlippedReaction
    } else {
        AdjointVariant::Exact
    };
    let mid = 0.5 * (setup.bounds.lower() + setup.bounds.upper());
    let theta_mid = ControlField::constant(g, nt, if mid.is_finite() { mid } else { 0.0 });

    match lipschitz_panel(model, init, &setup.bounds, 20, cfg.seed.wrapping_add(10)) {
        Ok(r) => {
            let (lo, hi) = r.iter().fold((f64::INFINITY, 0.0f64), |(a, b), &x| (a.min(x), b.max(x)));
            let ok = r.iter().all(|x| x.is_finite());
            rep.push("lipschitz_spread", hi / lo, 50.0, ok && hi / lo < 50.0, format!("min={lo:.3e} max={hi:.3e}"));
        }
        Err(e) => rep.failed(&[("lipschitz_spread", 50.0)], &e),
    }

    let oracle = || -> Result<f64> {
        let lin = model.with_params(ModelParams::with_steps(0.0, 0.0, dt, nt)?);
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(11));
        let (lo, hi) = (setup.bounds.lower(), setup.bounds.upper());
        let a = random_control(g, nt, lo, hi, &mut rng);
        let b = random_control(g, nt, lo, hi, &mut rng);
        Ok(relative_gap(lin.lipschitz_probe(init, &a, &b)?, decoupled_lipschitz_oracle(&lin, &a, &b)))
    };
    match oracle() {
        Ok(gap) => rep.at_most("lipschitz_linear_oracle", gap, 1e-10),
        Err(e) => rep.failed(&[("lipschitz_linear_oracle", 1e-10)], &e),
    }

    match taylor_panel(model, init, &theta_mid, 3, &TAYLOR_LADDER, cfg.seed.wrapping_add(12)) {
        Ok(reps) => {
            let dev = reps
                .iter()
                .flat_map(|r| r.orders.iter())
                .map(|o| if o.is_nan() { f64::INFINITY } else { (o - 2.0).abs() })
                .fold(0.0, f64::max);
            let orders: Vec<String> = reps
                .iter()
                .flat_map(|r| r.orders.iter().map(|o| format!("{o:.3}")))
                .collect();
            rep.push("taylor_order", dev, 0.1, dev <= 0.1, format!("|order-2|; orders {}", orders.join(" ")));
            let first = reps.iter().map(TaylorReport::first_order_gap).fold(0.0, f64::max);
            rep.at_most("taylor_first_order", first, 0.01);
        }
        Err(e) => rep.failed(&[("taylor_order", 0.1), ("taylor_first_order", 0.01)], &e),
    }

    let duality = || -> Result<f64> {
        let traj = model.solve_state(init, &theta_mid)?;
        let (l, r) = duality_sides(model, &traj, variant, cfg.seed.wrapping_add(13))?;
        Ok(relative_gap(l, r))
    };
    match duality() {
        Ok(gap) => rep.at_most("adjoint_duality", gap, 1e-10),
        Err(e) => rep.failed(&[("adjoint_duality", 1e-10)], &e),
    }

    let problem = ReducedProblem {
        variant,
        ..ReducedProblem::new(model, init, &setup.target, setup.delta, setup.bounds)
    };
    match gradcheck(&problem, &theta_mid, 5, 1e-5, cfg.seed.wrapping_add(14)) {
        Ok(rows) => {
            let worst = rows.iter().map(|r| r.rel_err).fold(0.0, f64::max);
            rep.at_most("gradcheck", worst, 1e-6);
        }
        Err(e) => rep.failed(&[("gradcheck", 1e-6)], &e),
    }

    let stationary = || -> Result<(f64, usize, Termination)> {
        let traj = model.solve_state(init, &theta_mid)?;
        let target = Target::from_trajectory(&traj);
        let p = ReducedProblem {
            variant,
            ..ReducedProblem::new(model, init, &target, 0.0, setup.bounds)
        };
        let out = pgd_optimize(&p, &theta_mid, &cfg.opt)?;
        Ok((out.final_record().stationarity, out.iterations, out.termination))
    };
    match stationary() {
        Ok((res, iters, term)) => {
            let ok = iters == 0 && term == Termination::Converged && res <= cfg.opt.tol;
            rep.push("stationary_optimum", res, cfg.opt.tol, ok, format!("iterations={iters} termination={term}"));
        }
        Err(e) => rep.failed(&[("stationary_optimum", cfg.opt.tol)], &e),
    }

    let projection = || -> Result<(f64, f64, String)> {
        let out = pgd_optimize(&problem, &ControlField::zeros(g, nt), &cfg.opt)?;
        let eval = problem.evaluate(&out.theta)?;
        let adj = problem.adjoint(&eval)?;
        let gap = projection_characterization_check(&out.theta, &adj, &setup.bounds, setup.delta)?;
        let res = out.final_record().stationarity;
        let misfit = cost(&eval.traj, &setup.target, setup.delta)?.misfit;
        let g0 = reduced_gradient(&adj, &out.theta, setup.delta)?.norm(dt);
        Ok((
            gap,
            10.0 * res / setup.delta,
            format!(
                "iterations={} termination={} residual={res:.3e} misfit={misfit:.3e} |g|={g0:.3e}",
                out.iterations, out.termination
            ),
        ))
    };
    match projection() {
        Ok((gap, bound, detail)) => rep.push("projection_gap", gap, bound, gap <= bound, detail),
        Err(e) => rep.failed(&[("projection_gap", f64::NAN)], &e),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> RunConfig {
        RunConfig::parse_str(
            "grid.nx = 16\ngrid.ny = 16\ntime.T = 0.1\ntime.dt = 0.01\nmodel.beta = 1\n\
             model.alpha = 1\ncontrol.delta = 0.001\nkernel.radius = 0.2\ninit.m0 = noise:0.2,2\n\
             init.phi0 = constant:0.5\ntarget.phi_d = twin:constant:0.4\nopt.max_iters = 5\n\
             opt.step0 = 100\n",
            Path::new("."),
        )
        .unwrap()
    }

    #[test]
    fn csv_has_header_and_rows() {
        let mut rep = VerifyReport::default();
        rep.at_most("a", 1.0, 2.0);
        rep.push("b", f64::NAN, 1.0, true, "x, y".into());
        let csv = rep.to_csv();
        assert!(csv.starts_with("name,measured,threshold,pass,detail\n"));
        assert_eq!(csv.lines().count(), 3);
        assert!(!rep.all_pass());
        assert_eq!(rep.failures().count(), 1);
    }

    #[test]
    fn forward_failure_becomes_row() {
        let mut cfg = small();
        cfg.m0 = crate::config::InitSpec::Constant(f64::NAN);
        let mut rep = VerifyReport::default();
        forward_checks(&cfg, &mut rep);
        assert_eq!(rep.rows.len(), 3);
        assert!(rep.rows.iter().all(|r| !r.pass));
    }

    #[test]
    fn conservation_on_small_run() {
        let cfg = small();
        let s = cfg.setup().unwrap();
        let theta = ControlField::constant(*s.model.grid(), s.model.nt(), 0.3);
        let traj = s.model.solve_state(&s.init, &theta).unwrap();
        let (a, b) = conservation_errors(&s.model, &traj);
        assert!(a < 1e-13 && b < 1e-13, "{a} {b}");
    }
}
