use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use evapctl::config::{InitSpec, RunConfig};
use evapctl::io::{write_snapshot, write_timeseries, write_trajectory_snapshots};
use evapctl::optimize::{pgd_optimize, ReducedProblem};
use evapctl::sensitivity::taylor_test;
use evapctl::verify::{gradcheck, run_verify, VerifyOptions, TAYLOR_LADDER};
use evapctl::{ControlField, Error, Model};

#[derive(Parser)]
#[command(name = "evapctl", version, about = "Nonlocal evaporation model: simulation, adjoint gradients and optimal control")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Run configuration file.
    #[arg(long)]
    config: PathBuf,
    /// Output directory (defaults to io.out_dir).
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Override the configured seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Forward run; writes series.csv and snapshots.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Control held constant in time, as an init-spec.
        #[arg(long, default_value = "constant:0")]
        control: String,
    },
    /// Projected gradient descent from the zero control.
    Optimize {
        #[command(flatten)]
        common: Common,
    },
    /// Adjoint gradient against central finite differences.
    Gradcheck {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 5)]
        directions: usize,
    },
    /// Taylor remainder table along one direction.
    Taylor {
        #[command(flatten)]
        common: Common,
        /// Direction, as an init-spec held constant in time.
        #[arg(long, default_value = "noise:1,2")]
        direction: String,
    },
    /// Run the full check suite and write verify_report.csv.
    Verify {
        #[command(flatten)]
        common: Common,
        #[arg(long, hide = true)]
        sabotage: bool,
    },
    /// Print the kernel report.
    KernelInfo {
        #[command(flatten)]
        common: Common,
    },
}

impl Common {
    fn load(&self) -> Result<RunConfig, Error> {
        let cfg = RunConfig::load(&self.config)?;
        match self.seed {
            Some(s) => cfg.with_seed(s),
            None => Ok(cfg),
        }
    }

    fn out_dir(&self, cfg: &RunConfig) -> Result<PathBuf, Error> {
        let dir = self.out_dir.clone().unwrap_or_else(|| cfg.out_dir.clone());
        fs::create_dir_all(&dir)?;
        Ok(dir)
    }
}

fn warn_stability(model: &Model) {
    let bound = model.stability_bound();
    if model.dt() > bound {
        eprintln!(
            "warning: dt = {} exceeds the explicit-drift bound {:.3e}; the run may blow up",
            model.dt(),
            bound
        );
    }
}

/// Middle of the admissible box, or zero if the box is unbounded.
fn midpoint_control(cfg: &RunConfig, model: &Model) -> ControlField {
    let mid = 0.5 * (cfg.theta_min + cfg.theta_max);
    ControlField::constant(*model.grid(), model.nt(), if mid.is_finite() { mid } else { 0.0 })
}

/// Control from an init-spec given on the command line; `file:` paths are
/// relative to the working directory.
fn spec_control(spec: &str, model: &Model, seed: u64) -> Result<ControlField, Error> {
    let s = InitSpec::parse(spec, Path::new("")).map_err(|reason| Error::Validation {
        key: "control".into(),
        reason,
    })?;
    Ok(ControlField::constant_in_time(&s.realize(*model.grid(), seed)?, model.nt()))
}

fn simulate(common: &Common, control: &str) -> Result<bool, Error> {
    let cfg = common.load()?;
    let model = cfg.model()?;
    warn_stability(&model);
    let init = cfg.init_data()?;
    let theta = spec_control(control, &model, cfg.seed.wrapping_add(3))?;
    let traj = model.solve_state(&init, &theta)?;
    let dir = common.out_dir(&cfg)?;
    write_timeseries(&dir.join("series.csv"), &traj)?;
    let snaps = write_trajectory_snapshots(&dir, &traj, cfg.snapshot_stride)?;
    println!("wrote {} and {} snapshots", dir.join("series.csv").display(), snaps.len());
    Ok(true)
}

fn optimize(common: &Common) -> Result<bool, Error> {
    let cfg = common.load()?;
    let s = cfg.setup()?;
    warn_stability(&s.model);
    let problem = ReducedProblem::new(&s.model, &s.init, &s.target, s.delta, s.bounds);
    let theta0 = ControlField::zeros(*s.model.grid(), s.model.nt());
    let out = pgd_optimize(&problem, &theta0, &cfg.opt)?;
    let dir = common.out_dir(&cfg)?;
    fs::write(dir.join("opt_history.csv"), out.history_csv())?;
    for (n, f) in out.theta.slices().iter().enumerate() {
        write_snapshot(&dir.join(format!("theta_{n:06}.mcf")), f, n as f64 * s.model.dt())?;
    }
    let (first, last) = (out.initial_record(), out.final_record());
    let summary = format!(
        "termination = {}\niterations = {}\ncost = {:.12e}\nmisfit = {:.12e}\nreg = {:.12e}\n\
         stationarity = {:.12e}\ninitial_misfit = {:.12e}\ninitial_stationarity = {:.12e}\n",
        out.termination,
        out.iterations,
        last.cost.total(),
        last.cost.misfit,
        last.cost.reg,
        last.stationarity,
        first.cost.misfit,
        first.stationarity
    );
    fs::write(dir.join("result.txt"), &summary)?;
    print!("{summary}");
    Ok(true)
}

fn gradcheck_cmd(common: &Common, directions: usize) -> Result<bool, Error> {
    let cfg = common.load()?;
    let s = cfg.setup()?;
    let problem = ReducedProblem::new(&s.model, &s.init, &s.target, s.delta, s.bounds);
    let theta = midpoint_control(&cfg, &s.model);
    let rows = gradcheck(&problem, &theta, directions, 1e-5, cfg.seed.wrapping_add(14))?;
    println!("direction,fd,adjoint,rel_err");
    let mut ok = true;
    for (k, r) in rows.iter().enumerate() {
        println!("{k},{:.12e},{:.12e},{:.3e}", r.fd, r.adjoint, r.rel_err);
        if !(r.rel_err <= 1e-6) {
            eprintln!("direction {k}: relative error {:.3e} above 1e-6", r.rel_err);
            ok = false;
        }
    }
    Ok(ok)
}

fn taylor_cmd(common: &Common, direction: &str) -> Result<bool, Error> {
    let cfg = common.load()?;
    let model = cfg.model()?;
    let init = cfg.init_data()?;
    let h = spec_control(direction, &model, cfg.seed.wrapping_add(12))?;
    let rep = taylor_test(&model, &init, &midpoint_control(&cfg, &model), &h, &TAYLOR_LADDER)?;
    print!("{}", rep.to_csv());
    let bad: Vec<_> = rep.orders.iter().filter(|o| !(1.9..=2.1).contains(*o)).collect();
    for o in &bad {
        eprintln!("observed order {o:.4} outside [1.9, 2.1]");
    }
    Ok(bad.is_empty())
}

fn verify_cmd(common: &Common, sabotage: bool) -> Result<bool, Error> {
    let cfg = common.load()?;
    warn_stability(&cfg.model()?);
    let rep = run_verify(&cfg, VerifyOptions { sabotage });
    let dir = common.out_dir(&cfg)?;
    let path = dir.join("verify_report.csv");
    rep.write_csv(&path)?;
    for r in &rep.rows {
        println!(
            "{:<24} {:>12.4e} {:>12.4e} {}",
            r.name,
            r.measured,
            r.threshold,
            if r.pass { "pass" } else { "FAIL" }
        );
    }
    for r in rep.failures() {
        eprintln!("failed: {} (measured {:.4e}, threshold {:.4e}) {}", r.name, r.measured, r.threshold, r.detail);
    }
    println!("report: {}", path.display());
    Ok(rep.all_pass())
}

fn kernel_info(common: &Common) -> Result<bool, Error> {
    let cfg = common.load()?;
    for line in cfg.kernel()?.report().to_lines() {
        println!("{line}");
    }
    Ok(true)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Simulate { common, control } => simulate(common, control),
        Command::Optimize { common } => optimize(common),
        Command::Gradcheck { common, directions } => gradcheck_cmd(common, *directions),
        Command::Taylor { common, direction } => taylor_cmd(common, direction),
        Command::Verify { common, sabotage } => verify_cmd(common, *sabotage),
        Command::KernelInfo { common } => kernel_info(common),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
