//! Run configuration: flat INI sections with `key = value` lines.
//!
//! Every key has a default, so an empty file describes the standard
//! configuration. Unknown sections and keys are rejected. The effective
//! configuration is written back with [`RunConfig::to_ini`] and re-parses to
//! the same value.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use aopt_core::geometry::ReferenceDomain;
use aopt_core::objective::RegularizationSpec;
use aopt_core::optimizer::{DescentMode, OptimizerConfig};
use aopt_core::params::{PhysicalParams, TimeGrid};
use ini::Ini;

use crate::error::{CliError, Result};

/// Source of a space-time control (`g` on the Neumann edge, `h` on the
/// plate).
#[derive(Debug, Clone, PartialEq)]
pub enum FieldSource {
    Zero,
    /// Smooth space-time bump of the given amplitude.
    Pulse(f64),
    /// Binary line dump.
    File(PathBuf),
}

/// Source of a boundary profile.
#[derive(Debug, Clone, PartialEq)]
pub enum ProfileSource {
    Flat,
    /// `ell0 + amplitude * bump(x; a, b)`.
    Bump { amplitude: f64, a: f64, b: f64 },
    /// `x,ell` CSV.
    File(PathBuf),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControlSpec {
    pub g: FieldSource,
    pub h: FieldSource,
    pub ell: ProfileSource,
}

impl ControlSpec {
    pub fn zero() -> Self {
        Self {
            g: FieldSource::Zero,
            h: FieldSource::Zero,
            ell: ProfileSource::Flat,
        }
    }
}

/// Where the tracking targets come from.
#[derive(Debug, Clone, PartialEq)]
pub enum TargetSource {
    Zero,
    /// States of a forward solve with hidden controls.
    Manufactured(ControlSpec),
}

/// Settings of the `gradcheck` and `taylor` commands.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckConfig {
    /// Largest admissible relative adjoint/FD mismatch.
    pub tolerance: f64,
    /// Random directions per control component.
    pub directions: usize,
    pub seed: u64,
    /// Finite-difference steps.
    pub taus: Vec<f64>,
    pub taylor_min_slope: f64,
}

impl Default for CheckConfig {
    fn default() -> Self {
        Self {
            tolerance: 1e-2,
            directions: 5,
            seed: 1,
            taus: vec![1e-2, 1e-3, 1e-4],
            taylor_min_slope: 1.9,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutputConfig {
    pub dir: Option<PathBuf>,
    pub dump_fields: bool,
    /// Probe points `(x, z)` in reference coordinates.
    pub probes: Vec<[f64; 2]>,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: None,
            dump_fields: true,
            probes: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub domain: ReferenceDomain,
    /// Physical constants; `theta` is set from the objective section.
    pub physics: PhysicalParams,
    pub time: TimeGrid,
    pub prior: ControlSpec,
    pub start: ControlSpec,
    pub targets: TargetSource,
    /// ROI rectangle `[x0, x1, z0, z1]`; `None` is the default ROI.
    pub roi: Option<[f64; 4]>,
    pub regularization: RegularizationSpec,
    pub optimizer: OptimizerConfig,
    pub check: CheckConfig,
    pub output: OutputConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            domain: ReferenceDomain::standard(),
            physics: PhysicalParams::default(),
            time: TimeGrid { t_final: 1.0, nt: 64 },
            prior: ControlSpec::zero(),
            start: ControlSpec::zero(),
            targets: TargetSource::Zero,
            roi: None,
            regularization: RegularizationSpec::default(),
            optimizer: OptimizerConfig::default(),
            check: CheckConfig::default(),
            output: OutputConfig::default(),
        }
    }
}

const SECTIONS: &[(&str, &[&str])] = &[
    ("geometry", &["lx", "h_fix", "ell0", "nx", "nz_fix", "nz_var"]),
    (
        "physics",
        &["c", "b", "k", "rho", "delta", "kappa", "beta_a", "gamma_a", "beta_pl", "gamma_pl"],
    ),
    ("time", &["t_final", "nt"]),
    ("controls", &["prior_g", "prior_h", "prior_ell", "start_g", "start_h", "start_ell"]),
    (
        "objective",
        &["targets", "target_g", "target_h", "target_ell", "roi", "theta", "s_g", "s_ell"],
    ),
    (
        "optimizer",
        &["max_iters", "armijo_c1", "step_init", "step_shrink", "grad_tol", "mode", "memory", "smooth_riesz"],
    ),
    ("check", &["tolerance", "directions", "seed", "taus", "taylor_min_slope"]),
    ("output", &["dir", "dump_fields", "probes"]),
];

/// Key lookup with defaults and typed parsing.
struct Reader<'a> {
    ini: &'a Ini,
    base: &'a Path,
}

impl Reader<'_> {
    fn raw(&self, section: &str, key: &str) -> Option<&str> {
        self.ini.section(Some(section)).and_then(|s| s.get(key)).map(str::trim)
    }

    fn get<T: FromStr>(&self, section: &str, key: &str, default: T) -> Result<T> {
        match self.raw(section, key) {
            None => Ok(default),
            Some(v) => v
                .parse()
                .map_err(|_| CliError::Config(format!("[{section}] {key} = '{v}' cannot be parsed"))),
        }
    }

    fn path(&self, p: &str) -> PathBuf {
        let p = Path::new(p);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base.join(p)
        }
    }

    fn field(&self, section: &str, key: &str, default: FieldSource) -> Result<FieldSource> {
        let Some(v) = self.raw(section, key) else { return Ok(default) };
        let words: Vec<&str> = v.split_whitespace().collect();
        let bad = || CliError::Config(format!("[{section}] {key} = '{v}': expected 'zero', 'pulse <amplitude>' or 'file <path>'"));
        match words.as_slice() {
            ["zero"] => Ok(FieldSource::Zero),
            ["pulse", a] => Ok(FieldSource::Pulse(a.parse().map_err(|_| bad())?)),
            ["file", p] => Ok(FieldSource::File(self.path(p))),
            _ => Err(bad()),
        }
    }

    fn profile(&self, section: &str, key: &str, default: ProfileSource) -> Result<ProfileSource> {
        let Some(v) = self.raw(section, key) else { return Ok(default) };
        let words: Vec<&str> = v.split_whitespace().collect();
        let bad = || CliError::Config(format!("[{section}] {key} = '{v}': expected 'flat', 'bump <amplitude> <a> <b>' or 'file <path>'"));
        match words.as_slice() {
            ["flat"] => Ok(ProfileSource::Flat),
            ["bump", amp, a, b] => Ok(ProfileSource::Bump {
                amplitude: amp.parse().map_err(|_| bad())?,
                a: a.parse().map_err(|_| bad())?,
                b: b.parse().map_err(|_| bad())?,
            }),
            ["file", p] => Ok(ProfileSource::File(self.path(p))),
            _ => Err(bad()),
        }
    }

    fn numbers(&self, section: &str, key: &str) -> Result<Option<Vec<f64>>> {
        let Some(v) = self.raw(section, key) else { return Ok(None) };
        v.split(|c: char| c.is_whitespace() || c == ';' || c == ',')
            .filter(|s| !s.is_empty())
            .map(|s| s.parse().map_err(|_| CliError::Config(format!("[{section}] {key}: '{s}' is not a number"))))
            .collect::<Result<Vec<f64>>>()
            .map(Some)
    }
}

fn check_keys(ini: &Ini) -> Result<()> {
    let mut seen: Vec<&str> = Vec::new();
    for (name, props) in ini.iter() {
        let Some(name) = name else {
            if let Some((k, _)) = props.iter().next() {
                return Err(CliError::Config(format!("key '{k}' outside of any section")));
            }
            continue;
        };
        let Some((_, keys)) = SECTIONS.iter().find(|(s, _)| *s == name) else {
            return Err(CliError::Config(format!("unknown section [{name}]")));
        };
        if seen.contains(&name) {
            return Err(CliError::Config(format!("section [{name}] appears twice")));
        }
        seen.push(name);
        for (k, _) in props.iter() {
            if !keys.contains(&k) {
                return Err(CliError::Config(format!("unknown key '{k}' in [{name}]")));
            }
            if props.get_all(k).count() > 1 {
                return Err(CliError::Config(format!("key '{k}' appears twice in [{name}]")));
            }
        }
    }
    Ok(())
}

impl RunConfig {
    /// Parses a configuration; relative file paths are resolved against
    /// `base`.
    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let ini = Ini::load_from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        check_keys(&ini)?;
        let r = Reader { ini: &ini, base };
        let d = Self::default();

        let dd = d.domain;
        let domain = ReferenceDomain {
            lx: r.get("geometry", "lx", dd.lx)?,
            h_fix: r.get("geometry", "h_fix", dd.h_fix)?,
            ell0: r.get("geometry", "ell0", dd.ell0)?,
            nx: r.get("geometry", "nx", dd.nx)?,
            nz_fix: r.get("geometry", "nz_fix", dd.nz_fix)?,
            nz_var: r.get("geometry", "nz_var", dd.nz_var)?,
        };
        let p = d.physics;
        let physics = PhysicalParams {
            c: r.get("physics", "c", p.c)?,
            b: r.get("physics", "b", p.b)?,
            k: r.get("physics", "k", p.k)?,
            rho: r.get("physics", "rho", p.rho)?,
            delta: r.get("physics", "delta", p.delta)?,
            kappa: r.get("physics", "kappa", p.kappa)?,
            beta_a: r.get("physics", "beta_a", p.beta_a)?,
            gamma_a: r.get("physics", "gamma_a", p.gamma_a)?,
            beta_pl: r.get("physics", "beta_pl", p.beta_pl)?,
            gamma_pl: r.get("physics", "gamma_pl", p.gamma_pl)?,
            theta: r.get("objective", "theta", p.theta)?,
        };
        let time = TimeGrid {
            t_final: r.get("time", "t_final", d.time.t_final)?,
            nt: r.get("time", "nt", d.time.nt)?,
        };
        let prior = ControlSpec {
            g: r.field("controls", "prior_g", FieldSource::Zero)?,
            h: r.field("controls", "prior_h", FieldSource::Zero)?,
            ell: r.profile("controls", "prior_ell", ProfileSource::Flat)?,
        };
        let start = ControlSpec {
            g: r.field("controls", "start_g", prior.g.clone())?,
            h: r.field("controls", "start_h", prior.h.clone())?,
            ell: r.profile("controls", "start_ell", prior.ell.clone())?,
        };
        let targets = match r.raw("objective", "targets").unwrap_or("zero") {
            "zero" => TargetSource::Zero,
            "manufactured" => TargetSource::Manufactured(ControlSpec {
                g: r.field("objective", "target_g", FieldSource::Zero)?,
                h: r.field("objective", "target_h", FieldSource::Zero)?,
                ell: r.profile("objective", "target_ell", ProfileSource::Flat)?,
            }),
            other => {
                return Err(CliError::Config(format!(
                    "[objective] targets = '{other}': expected 'zero' or 'manufactured'"
                )))
            }
        };
        let roi = match r.raw("objective", "roi") {
            None | Some("default") => None,
            Some(_) => {
                let v = r.numbers("objective", "roi")?.unwrap_or_default();
                let arr: [f64; 4] = v
                    .try_into()
                    .map_err(|_| CliError::Config("[objective] roi needs four numbers x0 x1 z0 z1".into()))?;
                Some(arr)
            }
        };
        let regularization = RegularizationSpec {
            s_g: r.get("objective", "s_g", d.regularization.s_g)?,
            s_ell: r.get("objective", "s_ell", d.regularization.s_ell)?,
        };

        let o = d.optimizer;
        let grad_tol = match r.raw("optimizer", "grad_tol") {
            None | Some("auto") => None,
            Some(_) => Some(r.get("optimizer", "grad_tol", 0.0)?),
        };
        let default_memory = match o.mode {
            DescentMode::Lbfgs { memory } => memory,
            DescentMode::GradientDescent => 8,
        };
        let memory = r.get("optimizer", "memory", default_memory)?;
        let mode = match r.raw("optimizer", "mode").unwrap_or("lbfgs") {
            "lbfgs" => DescentMode::Lbfgs { memory },
            "gd" => DescentMode::GradientDescent,
            other => return Err(CliError::Config(format!("[optimizer] mode = '{other}': expected 'lbfgs' or 'gd'"))),
        };
        let optimizer = OptimizerConfig {
            max_iters: r.get("optimizer", "max_iters", o.max_iters)?,
            armijo_c1: r.get("optimizer", "armijo_c1", o.armijo_c1)?,
            step_init: r.get("optimizer", "step_init", o.step_init)?,
            step_shrink: r.get("optimizer", "step_shrink", o.step_shrink)?,
            grad_tol,
            mode,
            smooth_riesz: r.get("optimizer", "smooth_riesz", o.smooth_riesz)?,
        };

        let c = d.check;
        let check = CheckConfig {
            tolerance: r.get("check", "tolerance", c.tolerance)?,
            directions: r.get("check", "directions", c.directions)?,
            seed: r.get("check", "seed", c.seed)?,
            taus: r.numbers("check", "taus")?.unwrap_or(c.taus),
            taylor_min_slope: r.get("check", "taylor_min_slope", c.taylor_min_slope)?,
        };

        let probes = match r.numbers("output", "probes")? {
            None => Vec::new(),
            Some(v) if v.len() % 2 == 0 => v.chunks(2).map(|c| [c[0], c[1]]).collect(),
            Some(_) => return Err(CliError::Config("[output] probes needs pairs 'x z; x z; ...'".into())),
        };
        let output = OutputConfig {
            dir: r.raw("output", "dir").map(|p| r.path(p)),
            dump_fields: r.get("output", "dump_fields", true)?,
            probes,
        };

        let cfg = Self {
            domain,
            physics,
            time,
            prior,
            start,
            targets,
            roi,
            regularization,
            optimizer,
            check,
            output,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads and parses a configuration file.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, base)
    }

    /// Range checks of every block and existence of referenced files.
    pub fn validate(&self) -> Result<()> {
        self.domain.check()?;
        self.physics.check()?;
        TimeGrid::new(self.time.t_final, self.time.nt)?;
        self.regularization.check()?;
        self.optimizer.check()?;
        if let Some([x0, x1, z0, z1]) = self.roi {
            let d = &self.domain;
            let ok = 0.0 <= x0 && x0 < x1 && x1 <= d.lx && -d.h_fix <= z0 && z0 < z1 && z1 <= d.ell0;
            if !ok {
                return Err(CliError::Config(format!(
                    "[objective] roi = {x0} {x1} {z0} {z1} is not a rectangle inside [0, {}] x [{}, {}]",
                    d.lx, -d.h_fix, d.ell0
                )));
            }
        }
        let c = &self.check;
        if !(c.tolerance > 0.0) || c.directions == 0 || c.taus.is_empty() || c.taus.iter().any(|t| !(*t > 0.0)) {
            return Err(CliError::Config(
                "[check] needs tolerance > 0, directions >= 1 and positive taus".into(),
            ));
        }
        let mut specs = vec![&self.prior, &self.start];
        if let TargetSource::Manufactured(s) = &self.targets {
            specs.push(s);
        }
        for s in specs {
            for p in [&s.g, &s.h].into_iter().filter_map(|f| match f {
                FieldSource::File(p) => Some(p),
                _ => None,
            }) {
                require_file(p)?;
            }
            if let ProfileSource::File(p) = &s.ell {
                require_file(p)?;
            }
        }
        Ok(())
    }

    /// The effective configuration as INI text.
    pub fn to_ini(&self) -> String {
        let mut ini = Ini::new();
        let f = |v: f64| format!("{v:?}");
        let d = &self.domain;
        ini.with_section(Some("geometry"))
            .set("lx", f(d.lx))
            .set("h_fix", f(d.h_fix))
            .set("ell0", f(d.ell0))
            .set("nx", d.nx.to_string())
            .set("nz_fix", d.nz_fix.to_string())
            .set("nz_var", d.nz_var.to_string());
        let p = &self.physics;
        ini.with_section(Some("physics"))
            .set("c", f(p.c))
            .set("b", f(p.b))
            .set("k", f(p.k))
            .set("rho", f(p.rho))
            .set("delta", f(p.delta))
            .set("kappa", f(p.kappa))
            .set("beta_a", f(p.beta_a))
            .set("gamma_a", f(p.gamma_a))
            .set("beta_pl", f(p.beta_pl))
            .set("gamma_pl", f(p.gamma_pl));
        ini.with_section(Some("time"))
            .set("t_final", f(self.time.t_final))
            .set("nt", self.time.nt.to_string());
        ini.with_section(Some("controls"))
            .set("prior_g", field_text(&self.prior.g))
            .set("prior_h", field_text(&self.prior.h))
            .set("prior_ell", profile_text(&self.prior.ell))
            .set("start_g", field_text(&self.start.g))
            .set("start_h", field_text(&self.start.h))
            .set("start_ell", profile_text(&self.start.ell));
        {
            let mut s = ini.with_section(Some("objective"));
            match &self.targets {
                TargetSource::Zero => {
                    s.set("targets", "zero");
                }
                TargetSource::Manufactured(t) => {
                    s.set("targets", "manufactured")
                        .set("target_g", field_text(&t.g))
                        .set("target_h", field_text(&t.h))
                        .set("target_ell", profile_text(&t.ell));
                }
            }
            let roi = match self.roi {
                None => "default".to_string(),
                Some(r) => r.iter().map(|v| f(*v)).collect::<Vec<_>>().join(" "),
            };
            s.set("roi", roi)
                .set("theta", f(self.physics.theta))
                .set("s_g", f(self.regularization.s_g))
                .set("s_ell", f(self.regularization.s_ell));
        }
        let o = &self.optimizer;
        let (mode, memory) = match o.mode {
            DescentMode::Lbfgs { memory } => ("lbfgs", memory),
            DescentMode::GradientDescent => ("gd", 8),
        };
        ini.with_section(Some("optimizer"))
            .set("max_iters", o.max_iters.to_string())
            .set("armijo_c1", f(o.armijo_c1))
            .set("step_init", f(o.step_init))
            .set("step_shrink", f(o.step_shrink))
            .set("grad_tol", o.grad_tol.map_or("auto".to_string(), f))
            .set("mode", mode)
            .set("memory", memory.to_string())
            .set("smooth_riesz", o.smooth_riesz.to_string());
        let c = &self.check;
        ini.with_section(Some("check"))
            .set("tolerance", f(c.tolerance))
            .set("directions", c.directions.to_string())
            .set("seed", c.seed.to_string())
            .set("taus", c.taus.iter().map(|v| f(*v)).collect::<Vec<_>>().join(" "))
            .set("taylor_min_slope", f(c.taylor_min_slope));
        {
            let mut s = ini.with_section(Some("output"));
            if let Some(dir) = &self.output.dir {
                s.set("dir", dir.display().to_string());
            }
            s.set("dump_fields", self.output.dump_fields.to_string());
            if !self.output.probes.is_empty() {
                let probes: Vec<String> = self.output.probes.iter().map(|[x, z]| format!("{} {}", f(*x), f(*z))).collect();
                s.set("probes", probes.join("; "));
            }
        }
        let mut buf = Vec::new();
        ini.write_to(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("INI output is UTF-8")
    }
}

fn require_file(p: &Path) -> Result<()> {
    if p.is_file() {
        Ok(())
    } else {
        Err(CliError::Config(format!("referenced file {} does not exist", p.display())))
    }
}

fn field_text(s: &FieldSource) -> String {
    match s {
        FieldSource::Zero => "zero".into(),
        FieldSource::Pulse(a) => format!("pulse {a:?}"),
        FieldSource::File(p) => format!("file {}", p.display()),
    }
}

fn profile_text(s: &ProfileSource) -> String {
    match s {
        ProfileSource::Flat => "flat".into(),
        ProfileSource::Bump { amplitude, a, b } => format!("bump {amplitude:?} {a:?} {b:?}"),
        ProfileSource::File(p) => format!("file {}", p.display()),
    }
}
