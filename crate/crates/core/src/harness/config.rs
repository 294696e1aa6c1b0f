//! Run configuration: a flat `section.key = value` text format with `#`
//! comments. Every key has a documented default; parsing reports the line of
//! a syntax error and validation names the offending key.

use crate::error::{Error, Result};
use crate::geometry::Params;
use crate::timestepper::{DiffusionMode, StepConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct GridConfig {
    pub n_theta: usize,
    pub n_phi: usize,
    pub n_xi: usize,
    /// Rows filtered at each pole; default n_theta/8 (at least one).
    pub polar_filter_band: Option<usize>,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self { n_theta: 16, n_phi: 32, n_xi: 8, polar_filter_band: None }
    }
}

/// One source profile (heat or moisture).
#[derive(Debug, Clone, PartialEq)]
pub struct ProfileConfig {
    /// zero | constant | zonal_band | harmonic_bump | snapshot.
    pub profile: String,
    pub amplitude: f64,
    /// Band centre in colatitude radians (zonal_band).
    pub center: f64,
    /// Band width in radians (zonal_band).
    pub width: f64,
    /// Zonal wavenumber (harmonic_bump).
    pub mode: usize,
    /// Snapshot file to draw the profile from (snapshot).
    pub path: String,
}

impl Default for ProfileConfig {
    fn default() -> Self {
        Self {
            profile: "zero".into(),
            amplitude: 0.0,
            center: std::f64::consts::FRAC_PI_2,
            width: std::f64::consts::PI / 8.0,
            mode: 2,
            path: String::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InitialConfig {
    /// zero | random_smooth | snapshot.
    pub profile: String,
    pub amplitude: f64,
    pub seed: u64,
    pub path: String,
}

impl Default for InitialConfig {
    fn default() -> Self {
        Self { profile: "random_smooth".into(), amplitude: 1.0, seed: 0, path: String::new() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub t_end: f64,
    /// Steps between diagnostic rows.
    pub output_every: usize,
    /// Steps between snapshots; 0 disables periodic snapshots.
    pub snapshot_every: usize,
    pub out_dir: String,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self { t_end: 1.0, output_every: 10, snapshot_every: 0, out_dir: "out".into() }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Config {
    pub grid: GridConfig,
    pub params: Params,
    pub step: StepConfig,
    pub forcing_q1: ProfileConfig,
    pub forcing_q2: ProfileConfig,
    pub initial: InitialConfig,
    pub run: RunConfig,
}

const FORCING_PROFILES: [&str; 5] = ["zero", "constant", "zonal_band", "harmonic_bump", "snapshot"];
const INITIAL_PROFILES: [&str; 3] = ["zero", "random_smooth", "snapshot"];

impl Config {
    pub fn validate(&self) -> Result<()> {
        if self.grid.n_theta < 4 {
            return Err(Error::Validation { key: "grid.n_theta".into(), msg: "must be >= 4".into() });
        }
        if self.grid.n_phi < 4 || self.grid.n_phi % 2 != 0 {
            return Err(Error::Validation {
                key: "grid.n_phi".into(),
                msg: "must be even and >= 4".into(),
            });
        }
        if self.grid.n_xi < 2 {
            return Err(Error::Validation { key: "grid.n_xi".into(), msg: "must be >= 2".into() });
        }
        if let Some(band) = self.grid.polar_filter_band {
            if 2 * band >= self.grid.n_theta {
                return Err(Error::Validation {
                    key: "grid.polar_filter_band".into(),
                    msg: "band must leave unfiltered rows".into(),
                });
            }
        }
        self.params.validate()?;
        self.step.validate()?;
        for (key, pc) in [("forcing.q1", &self.forcing_q1), ("forcing.q2", &self.forcing_q2)] {
            if !FORCING_PROFILES.contains(&pc.profile.as_str()) {
                return Err(Error::Validation {
                    key: format!("{key}.profile"),
                    msg: format!("unknown profile `{}`", pc.profile),
                });
            }
            if pc.profile == "snapshot" && pc.path.is_empty() {
                return Err(Error::Validation {
                    key: format!("{key}.path"),
                    msg: "snapshot profile needs a path".into(),
                });
            }
            if !(pc.width > 0.0) {
                return Err(Error::Validation {
                    key: format!("{key}.width"),
                    msg: "must be positive".into(),
                });
            }
        }
        if !INITIAL_PROFILES.contains(&self.initial.profile.as_str()) {
            return Err(Error::Validation {
                key: "initial.profile".into(),
                msg: format!("unknown profile `{}`", self.initial.profile),
            });
        }
        if self.initial.profile == "snapshot" && self.initial.path.is_empty() {
            return Err(Error::Validation {
                key: "initial.path".into(),
                msg: "snapshot profile needs a path".into(),
            });
        }
        if !(self.run.t_end >= 0.0 && self.run.t_end.is_finite()) {
            return Err(Error::Validation { key: "run.t_end".into(), msg: "must be >= 0".into() });
        }
        if self.run.output_every == 0 {
            return Err(Error::Validation {
                key: "run.output_every".into(),
                msg: "must be >= 1".into(),
            });
        }
        if self.run.out_dir.is_empty() {
            return Err(Error::Validation { key: "run.out_dir".into(), msg: "must be set".into() });
        }
        Ok(())
    }

    /// Canonical text form; `parse_config(render())` reproduces the config.
    pub fn render(&self) -> String {
        let mode = match self.step.diffusion_mode {
            DiffusionMode::VerticalImplicitHorizontalExplicit => "explicit",
            DiffusionMode::FullyImplicitCn => "crank_nicolson",
        };
        let mut s = String::new();
        s.push_str("# moistpe run configuration\n");
        s.push_str(&format!("grid.n_theta = {}\n", self.grid.n_theta));
        s.push_str(&format!("grid.n_phi = {}\n", self.grid.n_phi));
        s.push_str(&format!("grid.n_xi = {}\n", self.grid.n_xi));
        if let Some(band) = self.grid.polar_filter_band {
            s.push_str(&format!("grid.polar_filter_band = {band}\n"));
        }
        let p = &self.params;
        s.push_str(&format!("params.re1 = {}\n", p.re1));
        s.push_str(&format!("params.re2 = {}\n", p.re2));
        s.push_str(&format!("params.rt1 = {}\n", p.rt1));
        s.push_str(&format!("params.rt2 = {}\n", p.rt2));
        s.push_str(&format!("params.rq1 = {}\n", p.rq1));
        s.push_str(&format!("params.rq2 = {}\n", p.rq2));
        s.push_str(&format!("params.r0 = {}\n", p.r0));
        s.push_str(&format!("params.a = {}\n", p.a));
        s.push_str(&format!("params.b = {}\n", p.b));
        s.push_str(&format!("params.p_cap = {}\n", p.p_cap));
        s.push_str(&format!("params.p0 = {}\n", p.p0));
        s.push_str(&format!("params.alpha_s = {}\n", p.alpha_s));
        s.push_str(&format!("params.beta_s = {}\n", p.beta_s));
        s.push_str(&format!("step.dt = {}\n", self.step.dt));
        s.push_str(&format!("step.diffusion_mode = {mode}\n"));
        s.push_str(&format!("step.projection_tol = {}\n", self.step.projection_tol));
        s.push_str(&format!("step.max_cg_iters = {}\n", self.step.max_cg_iters));
        s.push_str(&format!("step.cfl_safety = {}\n", self.step.cfl_safety));
        for (name, pc) in [("q1", &self.forcing_q1), ("q2", &self.forcing_q2)] {
            s.push_str(&format!("forcing.{name}.profile = {}\n", pc.profile));
            s.push_str(&format!("forcing.{name}.amplitude = {}\n", pc.amplitude));
            s.push_str(&format!("forcing.{name}.center = {}\n", pc.center));
            s.push_str(&format!("forcing.{name}.width = {}\n", pc.width));
            s.push_str(&format!("forcing.{name}.mode = {}\n", pc.mode));
            if !pc.path.is_empty() {
                s.push_str(&format!("forcing.{name}.path = {}\n", pc.path));
            }
        }
        s.push_str(&format!("initial.profile = {}\n", self.initial.profile));
        s.push_str(&format!("initial.amplitude = {}\n", self.initial.amplitude));
        s.push_str(&format!("initial.seed = {}\n", self.initial.seed));
        if !self.initial.path.is_empty() {
            s.push_str(&format!("initial.path = {}\n", self.initial.path));
        }
        s.push_str(&format!("run.t_end = {}\n", self.run.t_end));
        s.push_str(&format!("run.output_every = {}\n", self.run.output_every));
        s.push_str(&format!("run.snapshot_every = {}\n", self.run.snapshot_every));
        s.push_str(&format!("run.out_dir = {}\n", self.run.out_dir));
        s
    }
}

fn parse_num<T: std::str::FromStr>(value: &str, line: usize) -> Result<T> {
    value.trim().parse::<T>().map_err(|_| Error::Parse {
        line,
        msg: format!("cannot parse `{}`", value.trim()),
    })
}

/// Parse the documented key-value schema; defaults fill every omitted key.
pub fn parse_config(text: &str) -> Result<Config> {
    let mut cfg = Config::default();
    for (n, raw) in text.lines().enumerate() {
        let line_no = n + 1;
        let line = match raw.find('#') {
            Some(pos) => &raw[..pos],
            None => raw,
        };
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
            line: line_no,
            msg: "expected `key = value`".into(),
        })?;
        let key = key.trim();
        let value = value.trim();
        if key.is_empty() {
            return Err(Error::Parse { line: line_no, msg: "empty key".into() });
        }
        match key {
            "grid.n_theta" => cfg.grid.n_theta = parse_num(value, line_no)?,
            "grid.n_phi" => cfg.grid.n_phi = parse_num(value, line_no)?,
            "grid.n_xi" => cfg.grid.n_xi = parse_num(value, line_no)?,
            "grid.polar_filter_band" => cfg.grid.polar_filter_band = Some(parse_num(value, line_no)?),
            "params.re1" => cfg.params.re1 = parse_num(value, line_no)?,
            "params.re2" => cfg.params.re2 = parse_num(value, line_no)?,
            "params.rt1" => cfg.params.rt1 = parse_num(value, line_no)?,
            "params.rt2" => cfg.params.rt2 = parse_num(value, line_no)?,
            "params.rq1" => cfg.params.rq1 = parse_num(value, line_no)?,
            "params.rq2" => cfg.params.rq2 = parse_num(value, line_no)?,
            "params.r0" => cfg.params.r0 = parse_num(value, line_no)?,
            "params.a" => cfg.params.a = parse_num(value, line_no)?,
            "params.b" => cfg.params.b = parse_num(value, line_no)?,
            "params.p_cap" => cfg.params.p_cap = parse_num(value, line_no)?,
            "params.p0" => cfg.params.p0 = parse_num(value, line_no)?,
            "params.alpha_s" => cfg.params.alpha_s = parse_num(value, line_no)?,
            "params.beta_s" => cfg.params.beta_s = parse_num(value, line_no)?,
            "step.dt" => cfg.step.dt = parse_num(value, line_no)?,
            "step.diffusion_mode" => {
                cfg.step.diffusion_mode = match value {
                    "explicit" => DiffusionMode::VerticalImplicitHorizontalExplicit,
                    "crank_nicolson" => DiffusionMode::FullyImplicitCn,
                    other => {
                        return Err(Error::Validation {
                            key: "step.diffusion_mode".into(),
                            msg: format!("unknown mode `{other}`"),
                        })
                    }
                }
            }
            "step.projection_tol" => cfg.step.projection_tol = parse_num(value, line_no)?,
            "step.max_cg_iters" => cfg.step.max_cg_iters = parse_num(value, line_no)?,
            "step.cfl_safety" => cfg.step.cfl_safety = parse_num(value, line_no)?,
            "forcing.q1.profile" => cfg.forcing_q1.profile = value.to_string(),
            "forcing.q1.amplitude" => cfg.forcing_q1.amplitude = parse_num(value, line_no)?,
            "forcing.q1.center" => cfg.forcing_q1.center = parse_num(value, line_no)?,
            "forcing.q1.width" => cfg.forcing_q1.width = parse_num(value, line_no)?,
            "forcing.q1.mode" => cfg.forcing_q1.mode = parse_num(value, line_no)?,
            "forcing.q1.path" => cfg.forcing_q1.path = value.to_string(),
            "forcing.q2.profile" => cfg.forcing_q2.profile = value.to_string(),
            "forcing.q2.amplitude" => cfg.forcing_q2.amplitude = parse_num(value, line_no)?,
            "forcing.q2.center" => cfg.forcing_q2.center = parse_num(value, line_no)?,
            "forcing.q2.width" => cfg.forcing_q2.width = parse_num(value, line_no)?,
            "forcing.q2.mode" => cfg.forcing_q2.mode = parse_num(value, line_no)?,
            "forcing.q2.path" => cfg.forcing_q2.path = value.to_string(),
            "initial.profile" => cfg.initial.profile = value.to_string(),
            "initial.amplitude" => cfg.initial.amplitude = parse_num(value, line_no)?,
            "initial.seed" => cfg.initial.seed = parse_num(value, line_no)?,
            "initial.path" => cfg.initial.path = value.to_string(),
            "run.t_end" => cfg.run.t_end = parse_num(value, line_no)?,
            "run.output_every" => cfg.run.output_every = parse_num(value, line_no)?,
            "run.snapshot_every" => cfg.run.snapshot_every = parse_num(value, line_no)?,
            "run.out_dir" => cfg.run.out_dir = value.to_string(),
            other => {
                return Err(Error::Validation {
                    key: other.to_string(),
                    msg: "unknown configuration key".into(),
                })
            }
        }
    }
    cfg.validate()?;
    Ok(cfg)
}
