//! Flat `section.key = value` run configuration.
//!
//! Lines are `key = value`; `#` starts a comment. Initial data and targets
//! are given as init-specs:
//!
//! ```text
//! constant:<c>
//! cosine:<a>,<kx>,<ky>[,<offset>]   a·cos(2π kx x/Lx)·cos(2π ky y/Ly) + offset
//! noise:<amp>,<passes>              uniform in [−amp, amp], then 3×3 averaging
//! file:<path>                       MCFIELD snapshot, relative to the config
//! ```
//!
//! The target may also be `twin:<init-spec>`: `φ_d` is then the `φ` history
//! of a forward run driven by that field, held constant in time.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::adjoint::Target;
use crate::control::{Bounds, ControlField};
use crate::error::{Error, Result};
use crate::forward::{InitData, Model, ModelParams};
use crate::grid::{Field, Grid};
use crate::io::read_snapshot;
use crate::kernel::{default_radius, Kernel, KernelKind};
use crate::optimize::OptConfig;

/// The shipped desk-scale configuration.
pub const DEFAULT_CONFIG: &str = include_str!("../configs/default.conf");

#[derive(Debug, Clone, PartialEq)]
pub enum InitSpec {
    Constant(f64),
    Cosine {
        a: f64,
        kx: f64,
        ky: f64,
        offset: Option<f64>,
    },
    Noise {
        amp: f64,
        passes: usize,
    },
    File(PathBuf),
}

impl InitSpec {
    /// Parse an init-spec; `file:` paths are resolved against `base`.
    pub fn parse(s: &str, base: &Path) -> std::result::Result<Self, String> {
        let (kind, rest) = s
            .split_once(':')
            .ok_or_else(|| format!("expected <kind>:<args>, got {s:?}"))?;
        let nums = |n_min: usize, n_max: usize| -> std::result::Result<Vec<f64>, String> {
            let v = rest
                .split(',')
                .map(|t| t.trim().parse::<f64>().map_err(|_| format!("bad number {t:?} in {s:?}")))
                .collect::<std::result::Result<Vec<_>, _>>()?;
            if v.len() < n_min || v.len() > n_max || v.iter().any(|x| !x.is_finite()) {
                return Err(format!("wrong arguments in {s:?}"));
            }
            Ok(v)
        };
        match kind.trim() {
            "constant" => Ok(InitSpec::Constant(nums(1, 1)?[0])),
            "cosine" => {
                let v = nums(3, 4)?;
                Ok(InitSpec::Cosine {
                    a: v[0],
                    kx: v[1],
                    ky: v[2],
                    offset: v.get(3).copied(),
                })
            }
            "noise" => {
                let v = nums(2, 2)?;
                if v[0] < 0.0 || v[1] < 0.0 || v[1].fract() != 0.0 {
                    return Err(format!("noise needs amp >= 0 and integer passes, got {s:?}"));
                }
                Ok(InitSpec::Noise {
                    amp: v[0],
                    passes: v[1] as usize,
                })
            }
            "file" => {
                let p = rest.trim();
                if p.is_empty() {
                    return Err("empty file path".into());
                }
                Ok(InitSpec::File(base.join(p)))
            }
            other => Err(format!("unknown init-spec kind {other:?}")),
        }
    }

    pub fn realize(&self, grid: Grid, seed: u64) -> Result<Field> {
        Ok(match self {
            InitSpec::Constant(c) => Field::constant(grid, *c),
            InitSpec::Cosine { a, kx, ky, offset } => {
                let (lx, ly) = (grid.lx(), grid.ly());
                let tau = std::f64::consts::TAU;
                let off = offset.unwrap_or(0.0);
                Field::from_fn(grid, |x, y| {
                    a * (tau * kx * x / lx).cos() * (tau * ky * y / ly).cos() + off
                })
            }
            InitSpec::Noise { amp, passes } => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let vals = (0..grid.len()).map(|_| rng.gen_range(-amp..=*amp)).collect();
                let mut f = Field::from_values(grid, vals)?;
                for _ in 0..*passes {
                    f = box_smooth(&f);
                }
                f
            }
            InitSpec::File(p) => read_snapshot(p)?.into_field(grid)?,
        })
    }
}

/// One pass of the periodic 3×3 averaging stencil.
pub fn box_smooth(f: &Field) -> Field {
    let g = *f.grid();
    let vals = (0..g.ny() as isize)
        .flat_map(|j| (0..g.nx() as isize).map(move |i| (i, j)))
        .map(|(i, j)| {
            let mut s = 0.0;
            for dj in -1..=1 {
                for di in -1..=1 {
                    s += f.at(i + di, j + dj);
                }
            }
            s / 9.0
        })
        .collect();
    Field::from_values(g, vals).expect("same grid")
}

impl fmt::Display for InitSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            InitSpec::Constant(c) => write!(f, "constant:{c}"),
            InitSpec::Cosine { a, kx, ky, offset } => {
                write!(f, "cosine:{a},{kx},{ky}")?;
                if let Some(o) = offset {
                    write!(f, ",{o}")?;
                }
                Ok(())
            }
            InitSpec::Noise { amp, passes } => write!(f, "noise:{amp},{passes}"),
            InitSpec::File(p) => write!(f, "file:{}", p.display()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TargetSpec {
    Field(InitSpec),
    Twin(InitSpec),
}

impl TargetSpec {
    pub fn parse(s: &str, base: &Path) -> std::result::Result<Self, String> {
        match s.strip_prefix("twin:") {
            Some(rest) => Ok(TargetSpec::Twin(InitSpec::parse(rest, base)?)),
            None => Ok(TargetSpec::Field(InitSpec::parse(s, base)?)),
        }
    }
}

impl fmt::Display for TargetSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TargetSpec::Field(s) => write!(f, "{s}"),
            TargetSpec::Twin(s) => write!(f, "twin:{s}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub nx: usize,
    pub ny: usize,
    pub lx: f64,
    pub ly: f64,
    pub t_final: f64,
    pub dt: f64,
    pub beta: f64,
    pub alpha: f64,
    pub radius: f64,
    pub theta_min: f64,
    pub theta_max: f64,
    pub delta: f64,
    pub m0: InitSpec,
    pub phi0: InitSpec,
    pub phi_d: TargetSpec,
    pub opt: OptConfig,
    pub snapshot_stride: usize,
    pub out_dir: PathBuf,
    pub seed: u64,
}

const KEYS: &[&str] = &[
    "grid.nx",
    "grid.ny",
    "grid.Lx",
    "grid.Ly",
    "time.T",
    "time.dt",
    "model.beta",
    "model.alpha",
    "kernel.radius",
    "control.theta_min",
    "control.theta_max",
    "control.delta",
    "init.m0",
    "init.phi0",
    "target.phi_d",
    "opt.max_iters",
    "opt.step0",
    "opt.shrink",
    "opt.c1",
    "opt.tol",
    "opt.s_min",
    "opt.step_rule",
    "io.snapshot_stride",
    "io.out_dir",
    "seed",
];

struct Entries {
    map: BTreeMap<String, String>,
}

impl Entries {
    fn raw(&self, key: &str) -> Option<&str> {
        self.map.get(key).map(String::as_str)
    }

    fn required(&self, key: &str) -> Result<&str> {
        self.raw(key).ok_or_else(|| Error::validation(key, "required"))
    }

    fn num<T: std::str::FromStr>(&self, key: &str, default: Option<T>) -> Result<T> {
        match self.raw(key) {
            Some(v) => v
                .parse()
                .map_err(|_| Error::validation(key, format!("cannot parse {v:?}"))),
            None => default.ok_or_else(|| Error::validation(key, "required")),
        }
    }

    fn float(&self, key: &str, default: Option<f64>) -> Result<f64> {
        let v: f64 = self.num(key, default)?;
        if !v.is_finite() {
            return Err(Error::validation(key, "must be finite"));
        }
        Ok(v)
    }
}

fn parse_entries(text: &str) -> Result<Entries> {
    let mut map = BTreeMap::new();
    for (k, line) in text.lines().enumerate() {
        let line_no = k + 1;
        let content = line.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let (key, value) = content.split_once('=').ok_or_else(|| Error::Parse {
            line: line_no,
            msg: format!("expected key = value, got {content:?}"),
        })?;
        let (key, value) = (key.trim(), value.trim());
        if key.is_empty() {
            return Err(Error::Parse {
                line: line_no,
                msg: "empty key".into(),
            });
        }
        if !KEYS.contains(&key) {
            return Err(Error::validation(key, "unknown key"));
        }
        if map.insert(key.to_string(), value.to_string()).is_some() {
            return Err(Error::Parse {
                line: line_no,
                msg: format!("duplicate key {key}"),
            });
        }
    }
    Ok(Entries { map })
}

/// Everything needed to run: model, initial data, target and box.
#[derive(Debug)]
pub struct Setup {
    pub model: Model,
    pub init: InitData,
    pub target: Target,
    /// The generating control of a twin target.
    pub theta_star: Option<ControlField>,
    pub bounds: Bounds,
    pub delta: f64,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let base = std::path::absolute(path)?
            .parent()
            .map(Path::to_path_buf)
            .unwrap_or_default();
        Self::parse_str(&text, &base)
    }

    /// The shipped default configuration.
    pub fn default_config() -> Self {
        Self::parse_str(DEFAULT_CONFIG, Path::new(".")).expect("shipped config is valid")
    }

    pub fn parse_str(text: &str, base: &Path) -> Result<Self> {
        let e = parse_entries(text)?;
        let spec = |key: &str| -> Result<InitSpec> {
            InitSpec::parse(e.required(key)?, base).map_err(|r| Error::validation(key, r))
        };
        let lx = e.float("grid.Lx", Some(1.0))?;
        let ly = e.float("grid.Ly", Some(1.0))?;
        let nx = e.num("grid.nx", None)?;
        let ny = e.num("grid.ny", None)?;
        let grid = Grid::new(nx, ny, lx, ly).map_err(|err| Error::validation("grid", err.to_string()))?;
        let defaults = OptConfig::default();
        let cfg = RunConfig {
            nx,
            ny,
            lx,
            ly,
            t_final: e.float("time.T", None)?,
            dt: e.float("time.dt", None)?,
            beta: e.float("model.beta", None)?,
            alpha: e.float("model.alpha", None)?,
            radius: e.float("kernel.radius", Some(default_radius(&grid)))?,
            theta_min: e.float("control.theta_min", Some(0.0))?,
            theta_max: e.float("control.theta_max", Some(1.0))?,
            delta: e.float("control.delta", None)?,
            m0: spec("init.m0")?,
            phi0: spec("init.phi0")?,
            phi_d: TargetSpec::parse(e.required("target.phi_d")?, base)
                .map_err(|r| Error::validation("target.phi_d", r))?,
            opt: OptConfig {
                max_iters: e.num("opt.max_iters", Some(defaults.max_iters))?,
                step0: e.float("opt.step0", Some(defaults.step0))?,
                shrink: e.float("opt.shrink", Some(defaults.shrink))?,
                c1: e.float("opt.c1", Some(defaults.c1))?,
                tol: e.float("opt.tol", Some(defaults.tol))?,
                s_min: e.float("opt.s_min", Some(defaults.s_min))?,
                s_ref: defaults.s_ref,
                step_rule: e.num("opt.step_rule", Some(defaults.step_rule))?,
            },
            snapshot_stride: e.num("io.snapshot_stride", Some(50))?,
            out_dir: PathBuf::from(e.raw("io.out_dir").unwrap_or("out")),
            seed: e.num("seed", Some(0))?,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Check every constraint, including the initial-data bounds on the
    /// realized fields.
    pub fn validate(&self) -> Result<()> {
        if !(self.beta > 0.0) {
            return Err(Error::validation("model.beta", format!("(A1) requires beta > 0, got {}", self.beta)));
        }
        self.params()?;
        self.kernel()?;
        self.bounds()?;
        if !(self.delta > 0.0) {
            return Err(Error::validation(
                "control.delta",
                format!("(A4) requires delta > 0, got {}", self.delta),
            ));
        }
        self.opt.validate()?;
        if self.snapshot_stride == 0 {
            return Err(Error::validation("io.snapshot_stride", "must be >= 1"));
        }
        self.init_data()?;
        let g = self.grid()?;
        match &self.phi_d {
            TargetSpec::Field(s) => s.realize(g, self.seed.wrapping_add(2)),
            TargetSpec::Twin(s) => s.realize(g, self.seed.wrapping_add(2)),
        }
        .map_err(|err| Error::validation("target.phi_d", err.to_string()))?;
        Ok(())
    }

    /// Same configuration with another seed, revalidated.
    pub fn with_seed(&self, seed: u64) -> Result<Self> {
        let cfg = Self {
            seed,
            ..self.clone()
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn grid(&self) -> Result<Grid> {
        Grid::new(self.nx, self.ny, self.lx, self.ly).map_err(|e| Error::validation("grid", e.to_string()))
    }

    pub fn params(&self) -> Result<ModelParams> {
        ModelParams::new(self.beta, self.alpha, self.t_final, self.dt).map_err(|e| match e {
            Error::InvalidParameter { name, reason } => {
                let key = match name {
                    "beta" => "model.beta",
                    "alpha" => "model.alpha",
                    "T" => "time.T",
                    _ => "time.dt",
                };
                Error::validation(key, reason)
            }
            other => other,
        })
    }

    pub fn kernel(&self) -> Result<Kernel> {
        Kernel::build(self.grid()?, self.radius, KernelKind::Bump)
            .map_err(|e| Error::validation("kernel.radius", e.to_string()))
    }

    pub fn model(&self) -> Result<Model> {
        Ok(Model::new(self.kernel()?, self.params()?))
    }

    pub fn bounds(&self) -> Result<Bounds> {
        Bounds::new(self.theta_min, self.theta_max)
    }

    pub fn init_data(&self) -> Result<InitData> {
        let g = self.grid()?;
        let m0 = self
            .m0
            .realize(g, self.seed)
            .map_err(|e| Error::validation("init.m0", e.to_string()))?;
        let phi0 = self
            .phi0
            .realize(g, self.seed.wrapping_add(1))
            .map_err(|e| Error::validation("init.phi0", e.to_string()))?;
        InitData::new(m0, phi0).map_err(|e| Error::validation("init.m0", e.to_string()))
    }

    /// Realize the target for `model`. A twin target runs the forward
    /// problem and also returns the generating control.
    pub fn target(&self, model: &Model, init: &InitData) -> Result<(Target, Option<ControlField>)> {
        let g = *model.grid();
        let seed = self.seed.wrapping_add(2);
        match &self.phi_d {
            TargetSpec::Field(s) => Ok((Target::constant(s.realize(g, seed)?), None)),
            TargetSpec::Twin(s) => {
                let star = ControlField::constant_in_time(&s.realize(g, seed)?, model.nt());
                let traj = model.solve_state(init, &star)?;
                Ok((Target::from_trajectory(&traj), Some(star)))
            }
        }
    }

    pub fn setup(&self) -> Result<Setup> {
        let model = self.model()?;
        let init = self.init_data()?;
        let (target, theta_star) = self.target(&model, &init)?;
        Ok(Setup {
            model,
            init,
            target,
            theta_star,
            bounds: self.bounds()?,
            delta: self.delta,
        })
    }

    /// Text form that parses back to an equal configuration.
    pub fn serialize(&self) -> String {
        let o = &self.opt;
        let mut s = String::new();
        let mut put = |k: &str, v: String| s.push_str(&format!("{k} = {v}\n"));
        put("grid.nx", self.nx.to_string());
        put("grid.ny", self.ny.to_string());
        put("grid.Lx", format!("{:?}", self.lx));
        put("grid.Ly", format!("{:?}", self.ly));
        put("time.T", format!("{:?}", self.t_final));
        put("time.dt", format!("{:?}", self.dt));
        put("model.beta", format!("{:?}", self.beta));
        put("model.alpha", format!("{:?}", self.alpha));
        put("kernel.radius", format!("{:?}", self.radius));
        put("control.theta_min", format!("{:?}", self.theta_min));
        put("control.theta_max", format!("{:?}", self.theta_max));
        put("control.delta", format!("{:?}", self.delta));
        put("init.m0", self.m0.to_string());
        put("init.phi0", self.phi0.to_string());
        put("target.phi_d", self.phi_d.to_string());
        put("opt.max_iters", o.max_iters.to_string());
        put("opt.step0", format!("{:?}", o.step0));
        put("opt.shrink", format!("{:?}", o.shrink));
        put("opt.c1", format!("{:?}", o.c1));
        put("opt.tol", format!("{:?}", o.tol));
        put("opt.s_min", format!("{:?}", o.s_min));
        put("opt.step_rule", o.step_rule.to_string());
        put("io.snapshot_stride", self.snapshot_stride.to_string());
        put("io.out_dir", self.out_dir.display().to_string());
        put("seed", self.seed.to_string());
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = "grid.nx = 16\ngrid.ny = 16\ntime.T = 0.1\ntime.dt = 0.01\n\
        model.beta = 1\nmodel.alpha = 1\ncontrol.delta = 0.001\nkernel.radius = 0.2\n\
        init.m0 = noise:0.2,2\ninit.phi0 = constant:0.5\ntarget.phi_d = constant:0.7\n";

    fn parse(text: &str) -> Result<RunConfig> {
        RunConfig::parse_str(text, Path::new("/tmp"))
    }

    fn validation_key(r: Result<RunConfig>) -> String {
        match r {
            Err(Error::Validation { key, reason }) => format!("{key}: {reason}"),
            other => panic!("expected a validation error, got {other:?}"),
        }
    }

    #[test]
    fn base_config_loads() {
        let c = parse(BASE).unwrap();
        assert_eq!(c.nx, 16);
        assert_eq!(c.opt, OptConfig::default());
        assert_eq!(c.theta_max, 1.0);
        assert_eq!(c.model().unwrap().nt(), 10);
    }

    #[test]
    fn missing_beta_is_required() {
        let text = BASE.replace("model.beta = 1\n", "");
        assert_eq!(validation_key(parse(&text)), "model.beta: required");
    }

    #[test]
    fn inverted_bounds_cite_a4() {
        let text = format!("{BASE}control.theta_min = 2\ncontrol.theta_max = 1\n");
        assert!(validation_key(parse(&text)).contains("(A4)"));
    }

    #[test]
    fn inadmissible_init_cites_a2() {
        let text = BASE.replace("noise:0.2,2", "constant:0.8");
        let msg = validation_key(parse(&text));
        assert!(msg.starts_with("init.m0") && msg.contains("(A2)"), "{msg}");
    }

    #[test]
    fn parse_errors_carry_line() {
        let text = format!("# header\n{BASE}this line is broken\n");
        match parse(&text) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 13),
            other => panic!("{other:?}"),
        }
        let dup = format!("{BASE}grid.nx = 32\n");
        assert!(matches!(parse(&dup), Err(Error::Parse { .. })));
        assert!(validation_key(parse(&format!("{BASE}grid.nz = 3\n"))).contains("unknown"));
        assert!(validation_key(parse(&BASE.replace("time.dt = 0.01", "time.dt = 0.03"))).starts_with("time.dt"));
        assert!(validation_key(parse(&BASE.replace("model.beta = 1", "model.beta = 0"))).contains("(A1)"));
    }

    #[test]
    fn roundtrip() {
        let text = format!(
            "{BASE}opt.step0 = 0.1\nseed = 7\nio.out_dir = results\n"
        )
        .replace("constant:0.7", "twin:cosine:0.25,1,2,0.5");
        let a = parse(&text).unwrap();
        let b = parse(&a.serialize()).unwrap();
        assert_eq!(a, b);
        let d = RunConfig::default_config();
        assert_eq!(parse(&d.serialize()).unwrap(), d);
    }

    #[test]
    fn init_specs() {
        let base = Path::new("/data");
        assert_eq!(InitSpec::parse("constant:0.5", base), Ok(InitSpec::Constant(0.5)));
        assert_eq!(
            InitSpec::parse("file:m.mcf", base),
            Ok(InitSpec::File(PathBuf::from("/data/m.mcf")))
        );
        assert!(InitSpec::parse("cosine:1,2", base).is_err());
        assert!(InitSpec::parse("noise:0.1,1.5", base).is_err());
        assert!(InitSpec::parse("spline:1", base).is_err());

        let g = Grid::unit_square(8).unwrap();
        let c = InitSpec::parse("cosine:0.5,1,0,0.25", base).unwrap().realize(g, 0).unwrap();
        assert!((c.values()[0] - (0.5 * (std::f64::consts::PI / 8.0).cos() + 0.25)).abs() < 1e-15);
        let n = InitSpec::Noise { amp: 0.3, passes: 2 };
        let (a, b) = (n.realize(g, 4).unwrap(), n.realize(g, 4).unwrap());
        assert_eq!(a, b);
        assert!(a.max_abs() <= 0.3);
        assert_ne!(a, n.realize(g, 5).unwrap());
    }

    #[test]
    fn file_specs_resolve_against_config() {
        let dir = tempfile::tempdir().unwrap();
        let g = Grid::unit_square(16).unwrap();
        let m = Field::from_fn(g, |x, _| 0.1 * x);
        crate::io::write_snapshot(&dir.path().join("m0.mcf"), &m, 0.0).unwrap();
        let p = dir.path().join("run.conf");
        std::fs::write(&p, BASE.replace("noise:0.2,2", "file:m0.mcf")).unwrap();
        let c = RunConfig::load(&p).unwrap();
        assert_eq!(c.init_data().unwrap().m0(), &m);
    }

    #[test]
    fn seed_override_changes_noise() {
        let c = parse(BASE).unwrap();
        let d = c.with_seed(99).unwrap();
        assert_ne!(c.init_data().unwrap().m0(), d.init_data().unwrap().m0());
    }

    #[test]
    fn twin_target_returns_generator() {
        let text = BASE.replace("constant:0.7", "twin:constant:0.4");
        let s = parse(&text).unwrap().setup().unwrap();
        assert!(s.theta_star.unwrap().slices().iter().all(|f| f.max() == 0.4));
        assert!(!s.target.is_constant());
    }
}
