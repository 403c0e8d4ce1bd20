//! Flat `key = value` run configuration.

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use bulksurf_core::graphs::{MonotoneGraph, PotentialPair, PresetName};
use bulksurf_core::stepper::SchemeParams;
use thiserror::Error;

use crate::presets::{InitialPreset, SourcePreset};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("line {line}: unknown key '{key}'")]
    UnknownKey { line: usize, key: String },
    #[error("{key}: {msg}")]
    Range { key: &'static str, msg: String },
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

#[derive(Debug, Clone, PartialEq)]
pub enum MeshSpec {
    Disk { rings: usize, sectors: usize },
    File(PathBuf),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub mesh: MeshSpec,
    pub potential: PresetName,
    pub potential_bdry: PresetName,
    pub c1: f64,
    pub c2: f64,
    pub rho: Option<f64>,
    pub c0: Option<f64>,
    pub tau: f64,
    pub sigma: f64,
    pub eps: f64,
    pub h: f64,
    pub t_final: f64,
    pub newton_tol: f64,
    pub newton_max: usize,
    pub damping_min: f64,
    pub initial: InitialPreset,
    /// Added to `initial`.
    pub perturb: Option<InitialPreset>,
    pub source_bulk: SourcePreset,
    pub source_bdry: SourcePreset,
    pub out: PathBuf,
    pub stride: usize,
    pub strong_checks: bool,
    pub strict_guard: bool,
    pub ratio_cap: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            mesh: MeshSpec::Disk { rings: 40, sectors: 160 },
            potential: PresetName::Regular,
            potential_bdry: PresetName::Regular,
            c1: MonotoneGraph::DEFAULT_C1,
            c2: MonotoneGraph::DEFAULT_C2,
            rho: None,
            c0: None,
            tau: 0.1,
            sigma: 0.1,
            eps: 0.1,
            h: 1e-3,
            t_final: 0.25,
            newton_tol: SchemeParams::NEWTON_TOL,
            newton_max: SchemeParams::NEWTON_MAX,
            damping_min: SchemeParams::DAMPING_MIN,
            initial: InitialPreset::Constant(0.0),
            perturb: None,
            source_bulk: SourcePreset::Zero,
            source_bdry: SourcePreset::Zero,
            out: PathBuf::from("out"),
            stride: 1,
            strong_checks: false,
            strict_guard: false,
            ratio_cap: 1e3,
        }
    }
}

impl RunConfig {
    pub fn params(&self) -> SchemeParams {
        SchemeParams {
            h: self.h,
            t_final: self.t_final,
            tau: self.tau,
            sigma: self.sigma,
            eps: self.eps,
            newton_tol: self.newton_tol,
            newton_max: self.newton_max,
            damping_min: self.damping_min,
        }
    }

    pub fn pair(&self) -> Result<PotentialPair, ConfigError> {
        PotentialPair::preset(self.potential, self.potential_bdry, self.c1, self.c2, self.rho, self.c0)
            .map_err(|e| ConfigError::Range { key: "potential", msg: e.to_string() })
    }

    /// Range checks shared by the parser and programmatic construction.
    pub fn check(&self) -> Result<(), ConfigError> {
        let range = |key: &'static str, msg: String| Err(ConfigError::Range { key, msg });
        if !(0.0..=1.0).contains(&self.tau) {
            return range("tau", format!("{} is outside [0, 1]", self.tau));
        }
        if !(0.0..=1.0).contains(&self.sigma) {
            return range("sigma", format!("{} is outside [0, 1]", self.sigma));
        }
        if !(self.eps > 0.0 && self.eps <= 1.0) {
            return range("eps", format!("{} is outside (0, 1]", self.eps));
        }
        if !(self.h > 0.0 && self.h.is_finite()) {
            return range("h", format!("{} must be positive", self.h));
        }
        if !(self.t_final >= self.h && self.t_final.is_finite()) {
            return range("t_final", format!("{} must be at least h = {}", self.t_final, self.h));
        }
        if !(self.newton_tol > 0.0) {
            return range("newton_tol", format!("{} must be positive", self.newton_tol));
        }
        if self.newton_max == 0 {
            return range("newton_max", "must be at least 1".into());
        }
        if !(self.damping_min > 0.0 && self.damping_min <= 1.0) {
            return range("damping_min", format!("{} is outside (0, 1]", self.damping_min));
        }
        if self.stride == 0 {
            return range("stride", "must be at least 1".into());
        }
        if !(self.ratio_cap > 0.0) {
            return range("ratio_cap", format!("{} must be positive", self.ratio_cap));
        }
        if let MeshSpec::Disk { rings, sectors } = self.mesh {
            if rings < 1 || sectors < 3 {
                return range("mesh", format!("need rings >= 1 and sectors >= 3, got {rings} x {sectors}"));
            }
        }
        self.pair()?;
        Ok(())
    }
}

pub fn parse_config(path: &Path) -> Result<RunConfig, ConfigError> {
    let text = fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
    parse_config_str(&text)
}

fn value<T: FromStr>(line: usize, key: &str, v: &str) -> Result<T, ConfigError>
where
    T::Err: std::fmt::Display,
{
    v.parse::<T>().map_err(|e| ConfigError::Parse { line, msg: format!("bad value '{v}' for {key}: {e}") })
}

fn flag(line: usize, key: &str, v: &str) -> Result<bool, ConfigError> {
    match v {
        "true" | "on" | "yes" | "1" => Ok(true),
        "false" | "off" | "no" | "0" => Ok(false),
        _ => Err(ConfigError::Parse { line, msg: format!("bad boolean '{v}' for {key}") }),
    }
}

/// Parses configuration text; missing keys take their defaults.
pub fn parse_config_str(text: &str) -> Result<RunConfig, ConfigError> {
    let mut cfg = RunConfig::default();
    let mut seen = HashSet::new();
    let (mut rings, mut sectors, mut mesh_file) = (40usize, 160usize, None);
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let Some((key, v)) = content.split_once('=') else {
            return Err(ConfigError::Parse { line, msg: format!("expected 'key = value', got '{content}'") });
        };
        let (key, v) = (key.trim(), v.trim());
        if !seen.insert(key.to_string()) {
            return Err(ConfigError::Parse { line, msg: format!("duplicate key '{key}'") });
        }
        let preset_err = |e: String| ConfigError::Parse { line, msg: e };
        match key {
            "mesh_rings" => rings = value(line, key, v)?,
            "mesh_sectors" => sectors = value(line, key, v)?,
            "mesh_file" => mesh_file = Some(PathBuf::from(v)),
            "potential" => cfg.potential = value(line, key, v)?,
            "potential_bdry" => cfg.potential_bdry = value(line, key, v)?,
            "c1" => cfg.c1 = value(line, key, v)?,
            "c2" => cfg.c2 = value(line, key, v)?,
            "rho" => cfg.rho = Some(value(line, key, v)?),
            "c0" => cfg.c0 = Some(value(line, key, v)?),
            "tau" => cfg.tau = value(line, key, v)?,
            "sigma" => cfg.sigma = value(line, key, v)?,
            "eps" => cfg.eps = value(line, key, v)?,
            "h" => cfg.h = value(line, key, v)?,
            "t_final" => cfg.t_final = value(line, key, v)?,
            "newton_tol" => cfg.newton_tol = value(line, key, v)?,
            "newton_max" => cfg.newton_max = value(line, key, v)?,
            "damping_min" => cfg.damping_min = value(line, key, v)?,
            "initial" => cfg.initial = v.parse().map_err(preset_err)?,
            "perturb" => cfg.perturb = Some(v.parse().map_err(preset_err)?),
            "source_bulk" => cfg.source_bulk = v.parse().map_err(preset_err)?,
            "source_bdry" => cfg.source_bdry = v.parse().map_err(preset_err)?,
            "out" => cfg.out = PathBuf::from(v),
            "stride" => cfg.stride = value(line, key, v)?,
            "strong_checks" => cfg.strong_checks = flag(line, key, v)?,
            "strict_guard" => cfg.strict_guard = flag(line, key, v)?,
            "ratio_cap" => cfg.ratio_cap = value(line, key, v)?,
            _ => return Err(ConfigError::UnknownKey { line, key: key.to_string() }),
        }
    }
    if !seen.contains("potential_bdry") {
        cfg.potential_bdry = cfg.potential;
    }
    cfg.mesh = match mesh_file {
        Some(p) => MeshSpec::File(p),
        None => MeshSpec::Disk { rings, sectors },
    };
    cfg.check()?;
    Ok(cfg)
}
