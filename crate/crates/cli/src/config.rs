//! Flat key-value configuration files with sections.
//!
//! ```text
//! # comment
//! [law]
//! mu = 1
//! lambda = 0.5
//!
//! [solver]
//! L = 200
//! N = 512
//! ```
//!
//! Every key must belong to a known section; unknown sections or keys are rejected.

use crate::{CliError, CliResult};
use deul_core::nonlinear::{EulerParams, InitKind, SolverConfig};
use deul_core::spectra::ProfileKind;
use deul_core::{DampingLaw, ZoneConfig};
use serde::Serialize;
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LawSection {
    pub mu: f64,
    pub lambda: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ZoneSection {
    pub eps: f64,
    pub big_n: f64,
    /// `None`: the default `t_ell` of the law.
    pub t_ell: Option<f64>,
    /// `None`: `c0 = mu N`.
    pub c0: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ProfileName {
    Hat,
    Gaussian,
    Annulus,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProbeSection {
    /// Space dimension of the radial profiles.
    pub n: usize,
    pub profile: ProfileName,
    pub radius: f64,
    pub sigma: f64,
    pub annulus_a: f64,
    pub annulus_b: f64,
    pub t_min: f64,
    pub t_max: f64,
    pub samples: usize,
    /// Seed for probe-lattice shuffling (train/validate split).
    pub seed: u64,
}

impl ProbeSection {
    pub fn profile_kind(&self) -> ProfileKind {
        match self.profile {
            ProfileName::Hat => ProfileKind::Hat { r: self.radius },
            ProfileName::Gaussian => ProfileKind::Gaussian { sigma: self.sigma },
            ProfileName::Annulus => ProfileKind::Annulus { a: self.annulus_a, b: self.annulus_b },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolverSection {
    pub l: f64,
    pub n: usize,
    pub t: f64,
    pub dt: f64,
    pub eps: f64,
    pub gamma: f64,
    pub r0: f64,
    pub output_every: f64,
    pub nonlinear: bool,
}

/// Full run configuration.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub law: LawSection,
    pub zones: ZoneSection,
    pub probes: ProbeSection,
    pub solver: SolverSection,
    pub out_dir: Option<PathBuf>,
}

/// Default solver time step: half the CFL-admissible step of the default grid, which keeps the
/// time-discretization mass drift below `1e-8` over the default window.
pub const DEFAULT_DT: f64 = 0.075;

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            law: LawSection { mu: 1.0, lambda: 0.5 },
            zones: ZoneSection { eps: 0.1, big_n: 2.0, t_ell: None, c0: None },
            probes: ProbeSection {
                n: 2,
                profile: ProfileName::Hat,
                radius: 1.0,
                sigma: 0.5,
                annulus_a: 0.5,
                annulus_b: 1.5,
                t_min: 1e2,
                t_max: 1e4,
                samples: 41,
                seed: 20240607,
            },
            solver: SolverSection { l: 200.0, n: 512, t: 80.0, dt: DEFAULT_DT, eps: 0.01, gamma: 1.4, r0: 4.0, output_every: 1.0, nonlinear: true },
            out_dir: None,
        }
    }
}

fn parse_f64(section: &str, key: &str, v: &str) -> CliResult<f64> {
    v.parse::<f64>().ok().filter(|x| x.is_finite()).ok_or_else(|| CliError::Config(format!("[{section}] {key}: expected a finite number, got '{v}'")))
}

fn parse_usize(section: &str, key: &str, v: &str) -> CliResult<usize> {
    v.parse::<usize>().map_err(|_| CliError::Config(format!("[{section}] {key}: expected a nonnegative integer, got '{v}'")))
}

fn parse_bool(section: &str, key: &str, v: &str) -> CliResult<bool> {
    match v {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(CliError::Config(format!("[{section}] {key}: expected true/false, got '{v}'"))),
    }
}

impl RunConfig {
    /// Parses configuration text on top of the defaults.
    pub fn parse(text: &str) -> CliResult<Self> {
        let mut cfg = Self::default();
        let mut section: Option<String> = None;
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let at = |msg: String| CliError::Config(format!("line {}: {msg}", lineno + 1));
            if let Some(rest) = line.strip_prefix('[') {
                let name = rest.strip_suffix(']').ok_or_else(|| at(format!("malformed section header '{line}'")))?.trim();
                if !["law", "zones", "probes", "solver", "output"].contains(&name) {
                    return Err(at(format!("unknown section [{name}]")));
                }
                section = Some(name.to_string());
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| at(format!("expected 'key = value', got '{line}'")))?;
            let (key, value) = (key.trim(), value.trim());
            let sec = section.as_deref().ok_or_else(|| at(format!("key '{key}' outside of any section")))?;
            cfg.set(sec, key, value).map_err(|e| match e {
                CliError::Config(m) => at(m),
                other => other,
            })?;
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    fn set(&mut self, section: &str, key: &str, v: &str) -> CliResult<()> {
        let f = |x: &str| parse_f64(section, key, x);
        match (section, key) {
            ("law", "mu") => self.law.mu = f(v)?,
            ("law", "lambda") => self.law.lambda = f(v)?,
            ("zones", "eps") => self.zones.eps = f(v)?,
            ("zones", "N") => self.zones.big_n = f(v)?,
            ("zones", "t_ell") => self.zones.t_ell = Some(f(v)?),
            ("zones", "c0") => self.zones.c0 = Some(f(v)?),
            ("probes", "n") => self.probes.n = parse_usize(section, key, v)?,
            ("probes", "profile") => {
                self.probes.profile = match v {
                    "hat" => ProfileName::Hat,
                    "gaussian" => ProfileName::Gaussian,
                    "annulus" => ProfileName::Annulus,
                    _ => return Err(CliError::Config(format!("[probes] profile: expected hat, gaussian or annulus, got '{v}'"))),
                }
            }
            ("probes", "radius") => self.probes.radius = f(v)?,
            ("probes", "sigma") => self.probes.sigma = f(v)?,
            ("probes", "annulus_a") => self.probes.annulus_a = f(v)?,
            ("probes", "annulus_b") => self.probes.annulus_b = f(v)?,
            ("probes", "t_min") => self.probes.t_min = f(v)?,
            ("probes", "t_max") => self.probes.t_max = f(v)?,
            ("probes", "samples") => self.probes.samples = parse_usize(section, key, v)?,
            ("probes", "seed") => self.probes.seed = v.parse().map_err(|_| CliError::Config(format!("[probes] seed: expected an integer, got '{v}'")))?,
            ("solver", "L") => self.solver.l = f(v)?,
            ("solver", "N") => self.solver.n = parse_usize(section, key, v)?,
            ("solver", "T") => self.solver.t = f(v)?,
            ("solver", "dt") => self.solver.dt = f(v)?,
            ("solver", "eps") => self.solver.eps = f(v)?,
            ("solver", "gamma") => self.solver.gamma = f(v)?,
            ("solver", "r0") => self.solver.r0 = f(v)?,
            ("solver", "output_every") => self.solver.output_every = f(v)?,
            ("solver", "nonlinear") => self.solver.nonlinear = parse_bool(section, key, v)?,
            ("output", "dir") => self.out_dir = Some(PathBuf::from(v)),
            _ => return Err(CliError::Config(format!("unknown key '{key}' in section [{section}]"))),
        }
        Ok(())
    }

    /// Range validation against the module preconditions.
    pub fn validate(&self) -> CliResult<()> {
        self.damping_law()?;
        self.zone_config()?;
        let p = &self.probes;
        if p.n < 2 {
            return Err(CliError::Config(format!("[probes] n must be >= 2, got {}", p.n)));
        }
        if !(p.t_min > 0.0 && p.t_max > p.t_min) {
            return Err(CliError::Config(format!("[probes] need 0 < t_min < t_max, got {} .. {}", p.t_min, p.t_max)));
        }
        if p.samples < 8 {
            return Err(CliError::Config(format!("[probes] samples must be >= 8, got {}", p.samples)));
        }
        p.profile_kind().validate().map_err(|e| CliError::Config(e.to_string()))?;
        self.euler_params()?;
        self.solver_config().validate().map_err(|e| CliError::Config(e.to_string()))?;
        Ok(())
    }

    pub fn damping_law(&self) -> CliResult<DampingLaw> {
        DampingLaw::new(self.law.mu, self.law.lambda).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn zone_config(&self) -> CliResult<ZoneConfig> {
        let law = self.damping_law()?;
        let d = ZoneConfig::default_for(&law);
        ZoneConfig::new(&law, self.zones.eps, self.zones.big_n, self.zones.t_ell.unwrap_or(d.t_ell), self.zones.c0.unwrap_or(self.law.mu * self.zones.big_n))
            .map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn euler_params(&self) -> CliResult<EulerParams> {
        EulerParams::new(self.solver.gamma, self.damping_law()?).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn solver_config(&self) -> SolverConfig {
        let s = &self.solver;
        SolverConfig {
            l: s.l,
            n: s.n,
            t_end: s.t,
            dt: s.dt,
            eps: s.eps,
            r0: s.r0,
            output_every: s.output_every,
            nonlinear: s.nonlinear,
            init: if s.eps == 0.0 { InitKind::Zero } else { InitKind::GaussianBump },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_sections() {
        let c = RunConfig::parse("# demo\n[law]\nmu = 2\nlambda = 0\n[solver]\nN = 64\nL = 50\nT = 10\ndt = 0.3\n[output]\ndir = out\n").unwrap();
        assert_eq!(c.law, LawSection { mu: 2.0, lambda: 0.0 });
        assert_eq!((c.solver.n, c.solver.l), (64, 50.0));
        assert_eq!(c.out_dir, Some(PathBuf::from("out")));
        assert!(c.validate().is_ok());
    }

    #[test]
    fn rejects_unknown_keys_and_sections() {
        assert!(RunConfig::parse("[law]\nnu = 1\n").is_err());
        assert!(RunConfig::parse("[physics]\nmu = 1\n").is_err());
        assert!(RunConfig::parse("mu = 1\n").is_err());
        assert!(RunConfig::parse("[law]\nmu\n").is_err());
        assert!(RunConfig::parse("[law]\nmu = abc\n").is_err());
    }

    #[test]
    fn range_validation() {
        let c = RunConfig::parse("[law]\nlambda = 1\n").unwrap();
        assert!(c.validate().is_err());
        let c = RunConfig::parse("[solver]\nT = 200\n").unwrap();
        assert!(c.validate().is_err());
        assert!(RunConfig::default().validate().is_ok());
    }
}
