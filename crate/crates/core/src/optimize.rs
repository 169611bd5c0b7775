//! Projected gradient descent on the reduced cost.

use std::fmt;

use crate::adjoint::{cost, reduced_gradient, AdjointTrajectory, AdjointVariant, CostBreakdown, Target};
use crate::control::{project_admissible, Bounds, ControlField};
use crate::error::{Error, Result};
use crate::forward::{InitData, Model, Trajectory};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptConfig {
    pub max_iters: usize,
    pub step0: f64,
    pub shrink: f64,
    pub c1: f64,
    pub s_min: f64,
    /// Stop once the stationarity residual falls to `tol` times its value
    /// at the starting point.
    pub tol: f64,
    /// Step used inside the stationarity residual.
    pub s_ref: f64,
    pub step_rule: StepRule,
}

/// First trial step of each line search.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum StepRule {
    /// Always start from `step0`.
    #[default]
    Fixed,
    /// Start from the Barzilai-Borwein step `‖Δθ‖²/⟨Δθ, Δg⟩` of the last
    /// accepted move, falling back to `step0` when the curvature is not
    /// positive.
    BarzilaiBorwein,
}

impl fmt::Display for StepRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StepRule::Fixed => "fixed",
            StepRule::BarzilaiBorwein => "bb",
        })
    }
}

impl std::str::FromStr for StepRule {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "fixed" => Ok(StepRule::Fixed),
            "bb" => Ok(StepRule::BarzilaiBorwein),
            _ => Err(format!("unknown step rule {s:?} (expected fixed or bb)")),
        }
    }
}

impl Default for OptConfig {
    fn default() -> Self {
        Self {
            max_iters: 100,
            step0: 1.0,
            shrink: 0.5,
            c1: 1e-4,
            s_min: 1e-12,
            tol: 1e-8,
            s_ref: 1.0,
            step_rule: StepRule::Fixed,
        }
    }
}

impl OptConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |key: &str, reason: &str| Err(Error::validation(key, reason));
        if !(self.step0 > 0.0 && self.step0.is_finite()) {
            return bad("opt.step0", "must be positive");
        }
        if !(self.shrink > 0.0 && self.shrink < 1.0) {
            return bad("opt.shrink", "must lie in (0, 1)");
        }
        if !(self.c1 > 0.0 && self.c1 < 1.0) {
            return bad("opt.c1", "must lie in (0, 1)");
        }
        if !(self.tol >= 0.0 && self.tol.is_finite()) {
            return bad("opt.tol", "must be finite and >= 0");
        }
        if !(self.s_min > 0.0 && self.s_ref > 0.0) {
            return bad("opt.s_min", "step limits must be positive");
        }
        Ok(())
    }
}

/// The reduced problem `min J(S(θ), θ)` over the admissible box.
#[derive(Debug, Clone, Copy)]
pub struct ReducedProblem<'a> {
    pub model: &'a Model,
    pub init: &'a InitData,
    pub target: &'a Target,
    pub delta: f64,
    pub bounds: Bounds,
    pub variant: AdjointVariant,
}

/// Everything known at one control.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub traj: Trajectory,
    pub cost: CostBreakdown,
}

impl<'a> ReducedProblem<'a> {
    pub fn new(model: &'a Model, init: &'a InitData, target: &'a Target, delta: f64, bounds: Bounds) -> Self {
        Self {
            model,
            init,
            target,
            delta,
            bounds,
            variant: AdjointVariant::Exact,
        }
    }

    pub fn evaluate(&self, theta: &ControlField) -> Result<Evaluation> {
        let traj = self.model.solve_state(self.init, theta)?;
        let cost = cost(&traj, self.target, self.delta)?;
        Ok(Evaluation { traj, cost })
    }

    pub fn adjoint(&self, eval: &Evaluation) -> Result<AdjointTrajectory> {
        self.model.solve_adjoint_variant(&eval.traj, self.target, self.variant)
    }

    pub fn gradient(&self, eval: &Evaluation) -> Result<ControlField> {
        reduced_gradient(&self.adjoint(eval)?, &eval.traj.theta, self.delta)
    }

    pub fn cost(&self, theta: &ControlField) -> Result<f64> {
        Ok(self.evaluate(theta)?.cost.total())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Termination {
    Converged,
    MaxIters,
    LineSearchFailed,
}

impl fmt::Display for Termination {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Termination::Converged => "converged",
            Termination::MaxIters => "max_iters",
            Termination::LineSearchFailed => "line_search_failed",
        })
    }
}

/// One row per iterate; row 0 is the projected starting point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterRecord {
    pub iter: usize,
    pub cost: CostBreakdown,
    pub stationarity: f64,
    /// Accepted step (0 for the starting point).
    pub step: f64,
}

#[derive(Debug, Clone)]
pub struct OptResult {
    pub theta: ControlField,
    pub history: Vec<IterRecord>,
    pub iterations: usize,
    pub termination: Termination,
}

impl OptResult {
    pub fn final_record(&self) -> &IterRecord {
        self.history.last().expect("history holds the starting point")
    }

    pub fn initial_record(&self) -> &IterRecord {
        &self.history[0]
    }

    pub fn cost_nonincreasing(&self) -> bool {
        self.history.windows(2).all(|w| w[1].cost.total() <= w[0].cost.total())
    }

    pub fn history_csv(&self) -> String {
        let mut out = String::from("iter,cost,misfit,reg,stationarity,step\n");
        for r in &self.history {
            out.push_str(&format!(
                "{},{:.12e},{:.12e},{:.12e},{:.12e},{:.6e}\n",
                r.iter,
                r.cost.total(),
                r.cost.misfit,
                r.cost.reg,
                r.stationarity,
                r.step
            ));
        }
        out
    }
}

/// `‖θ − Π(θ − s_ref·g)‖` in the space-time `L²` norm; zero exactly when the
/// discrete variational inequality holds at `θ`.
pub fn stationarity_residual(theta: &ControlField, g: &ControlField, bounds: &Bounds, s_ref: f64, dt: f64) -> f64 {
    theta
        .sub(&project_admissible(&theta.axpy(-s_ref, g), bounds))
        .norm(dt)
}

/// `‖θ − Π(−γ₂/δ)‖`, the distance to the projection formula for optimal
/// controls.
pub fn projection_characterization_check(
    theta: &ControlField,
    adj: &AdjointTrajectory,
    bounds: &Bounds,
    delta: f64,
) -> Result<f64> {
    if delta == 0.0 {
        return Err(Error::DeltaZero);
    }
    let candidate = project_admissible(&adj.gamma2_control()?.scale(-1.0 / delta), bounds);
    Ok(theta.sub(&candidate).norm(adj.dt))
}

/// Projected gradient descent with Armijo backtracking: accept
/// `θ⁺ = Π(θ − s g)` once `J(θ⁺) ≤ J(θ) − (c1/s)‖θ⁺ − θ‖²`, shrinking `s`
/// from the trial step given by `cfg.step_rule`. A trial whose forward solve
/// blows up counts as a rejected step.
pub fn pgd_optimize(problem: &ReducedProblem, theta0: &ControlField, cfg: &OptConfig) -> Result<OptResult> {
    cfg.validate()?;
    let dt = problem.model.dt();
    let bounds = problem.bounds;
    let mut theta = project_admissible(theta0, &bounds);
    let mut eval = problem.evaluate(&theta)?;
    let mut g = problem.gradient(&eval)?;
    let mut res = stationarity_residual(&theta, &g, &bounds, cfg.s_ref, dt);
    let res0 = res;
    let mut history = vec![IterRecord {
        iter: 0,
        cost: eval.cost,
        stationarity: res,
        step: 0.0,
    }];
    let mut iterations = 0;
    let mut s_next = cfg.step0;
    let termination = loop {
        if res <= cfg.tol * res0 {
            break Termination::Converged;
        }
        if iterations >= cfg.max_iters {
            break Termination::MaxIters;
        }
        let j = eval.cost.total();
        let mut s = s_next;
        let accepted = loop {
            if s < cfg.s_min {
                break None;
            }
            let trial = project_admissible(&theta.axpy(-s, &g), &bounds);
            let d2 = trial.sub(&theta).norm(dt).powi(2);
            match problem.evaluate(&trial) {
                Ok(te) if te.cost.total() <= j - cfg.c1 / s * d2 => break Some((trial, te, s)),
                Ok(_) | Err(Error::NonFinite { .. }) => s *= cfg.shrink,
                Err(e) => return Err(e),
            }
        };
        let Some((trial, te, s)) = accepted else {
            break Termination::LineSearchFailed;
        };
        let g_new = problem.gradient(&te)?;
        s_next = match cfg.step_rule {
            StepRule::Fixed => cfg.step0,
            StepRule::BarzilaiBorwein => {
                let dtheta = trial.sub(&theta);
                let curv = dtheta.dot(&g_new.sub(&g), dt);
                let bb = dtheta.norm(dt).powi(2) / curv;
                if curv > 0.0 && bb.is_finite() {
                    bb.max(cfg.s_min)
                } else {
                    cfg.step0
                }
            }
        };
        theta = trial;
        eval = te;
        g = g_new;
        res = stationarity_residual(&theta, &g, &bounds, cfg.s_ref, dt);
        iterations += 1;
        history.push(IterRecord {
            iter: iterations,
            cost: eval.cost,
            stationarity: res,
            step: s,
        });
    };
    Ok(OptResult {
        theta,
        history,
        iterations,
        termination,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forward::ModelParams;
    use crate::grid::{Field, Grid};
    use crate::kernel::{Kernel, KernelKind};
    use std::f64::consts::PI;

    fn setup(nt: usize) -> (Model, InitData) {
        let g = Grid::unit_square(16).unwrap();
        let k = Kernel::build(g, 0.2, KernelKind::Bump).unwrap();
        let md = Model::new(k, ModelParams::with_steps(1.0, 1.0, 1e-2, nt).unwrap());
        let m = Field::from_fn(g, |x, y| 0.2 * (2.0 * PI * x).cos() * (2.0 * PI * y).cos());
        let init = InitData::new(m, Field::constant(g, 0.5)).unwrap();
        (md, init)
    }

    #[test]
    fn residual_examples() {
        let g = Grid::unit_square(4).unwrap();
        let b = Bounds::new(-1.0, 1.0).unwrap();
        let theta = ControlField::constant(g, 3, 0.0);
        assert_eq!(stationarity_residual(&theta, &ControlField::zeros(g, 3), &b, 1.0, 0.1), 0.0);
        let grad = ControlField::constant(g, 3, 0.25);
        let r = stationarity_residual(&theta, &grad, &b, 1.0, 0.1);
        assert!((r - grad.norm(0.1)).abs() < 1e-15);
        let at_lower = ControlField::constant(g, 3, -1.0);
        assert_eq!(stationarity_residual(&at_lower, &grad, &b, 1.0, 0.1), 0.0);
    }

    #[test]
    fn stationary_start_stops_immediately() {
        let nt = 5;
        let (md, init) = setup(nt);
        let g = *md.grid();
        let theta0 = ControlField::constant(g, nt, 0.3);
        let target = Target::from_trajectory(&md.solve_state(&init, &theta0).unwrap());
        let p = ReducedProblem::new(&md, &init, &target, 0.0, Bounds::new(0.0, 1.0).unwrap());
        let out = pgd_optimize(&p, &theta0, &OptConfig::default()).unwrap();
        assert_eq!(out.iterations, 0);
        assert_eq!(out.termination, Termination::Converged);
        assert!(out.final_record().stationarity <= 1e-8);
    }

    #[test]
    fn descent_is_monotone_and_reduces_misfit() {
        let nt = 10;
        let (md, init) = setup(nt);
        let g = *md.grid();
        let star = ControlField::constant(g, nt, 0.5);
        let target = Target::from_trajectory(&md.solve_state(&init, &star).unwrap());
        let p = ReducedProblem::new(&md, &init, &target, 1e-6, Bounds::new(0.0, 1.0).unwrap());
        let cfg = OptConfig {
            max_iters: 20,
            step0: 100.0,
            ..OptConfig::default()
        };
        let out = pgd_optimize(&p, &ControlField::zeros(g, nt), &cfg).unwrap();
        assert!(out.cost_nonincreasing());
        assert!(out.final_record().cost.misfit < 0.1 * out.initial_record().cost.misfit);
        assert_eq!(out.history_csv().lines().count(), out.history.len() + 1);
    }

    #[test]
    fn bb_steps_beat_fixed_steps() {
        let nt = 10;
        let (md, init) = setup(nt);
        let g = *md.grid();
        let star = ControlField::constant(g, nt, 0.5);
        let target = Target::from_trajectory(&md.solve_state(&init, &star).unwrap());
        let p = ReducedProblem::new(&md, &init, &target, 1e-6, Bounds::new(0.0, 1.0).unwrap());
        let run = |step_rule| {
            let cfg = OptConfig {
                max_iters: 20,
                step0: 100.0,
                step_rule,
                ..OptConfig::default()
            };
            pgd_optimize(&p, &ControlField::zeros(g, nt), &cfg).unwrap()
        };
        let (fixed, bb) = (run(StepRule::Fixed), run(StepRule::BarzilaiBorwein));
        assert!(bb.cost_nonincreasing());
        assert!(bb.final_record().cost.total() <= fixed.final_record().cost.total());
        assert_eq!("bb".parse::<StepRule>().unwrap(), StepRule::BarzilaiBorwein);
        assert_eq!(StepRule::Fixed.to_string().parse::<StepRule>().unwrap(), StepRule::Fixed);
        assert!("newton".parse::<StepRule>().is_err());
    }

    #[test]
    fn delta_zero_rejected_by_characterization() {
        let nt = 3;
        let (md, init) = setup(nt);
        let g = *md.grid();
        let theta = ControlField::zeros(g, nt);
        let traj = md.solve_state(&init, &theta).unwrap();
        let adj = md
            .solve_adjoint_discrete(&traj, &Target::constant(Field::zeros(g)))
            .unwrap();
        let b = Bounds::new(0.0, 1.0).unwrap();
        assert!(matches!(
            projection_characterization_check(&theta, &adj, &b, 0.0),
            Err(Error::DeltaZero)
        ));
    }
}
