//! `key = value` experiment configs.
//!
//! Blank lines and lines starting with `#` are skipped. Unknown or repeated
//! keys are errors, and every numeric field is checked before any compute.

use std::collections::BTreeMap;
use std::path::PathBuf;

use kglab::data::RadialProfile;
use kglab::Grid3;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SourceKind {
    Zero,
    /// g = □₁u* for u* = eps·cos t·φ(|x|); the data are u*(0), ∂_t u*(0).
    Manufactured,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PerturbationKind {
    None,
    /// γ^{11} = amp·b((t − 2)/2)·b(|x|/radius′) with b the standard bump.
    Bump,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NonlinearityKind {
    None,
    Quadratic,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub n: usize,
    pub half_width: f64,
    pub dt: Option<f64>,
    pub courant: f64,
    pub t_final: f64,
    pub eps: f64,
    pub data: RadialProfile,
    pub stride: usize,
    pub norm_order: usize,
    pub source: SourceKind,
    pub perturbation: PerturbationKind,
    pub perturbation_amp: f64,
    pub perturbation_radius: f64,
    pub nonlinearity: NonlinearityKind,
    pub depth: usize,
    pub seed: u64,
    pub snapshot_stride: usize,
    pub fit_start: f64,
    pub residual_points: usize,
    pub ray_thetas: Vec<f64>,
    pub support_tol: f64,
    pub boundary_tol: f64,
    pub out: Option<PathBuf>,
    pub run_dir: Option<PathBuf>,
}

const KEYS: &[&str] = &[
    "n",
    "L",
    "dt",
    "courant",
    "T",
    "eps",
    "data",
    "radius",
    "width",
    "stride",
    "norm_order",
    "source",
    "perturbation",
    "perturbation_amp",
    "perturbation_radius",
    "nonlinearity",
    "depth",
    "seed",
    "snapshot_stride",
    "fit_start",
    "residual_points",
    "ray_thetas",
    "support_tol",
    "boundary_tol",
    "out",
    "run_dir",
];

/// Largest Γ-norm order the windows support.
pub const MAX_NORM_ORDER: usize = 2;

fn parse_pairs(text: &str) -> Result<BTreeMap<String, String>, String> {
    let mut pairs = BTreeMap::new();
    for (no, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| format!("line {}: expected `key = value`", no + 1))?;
        let (k, v) = (k.trim(), v.trim());
        if !KEYS.contains(&k) {
            return Err(format!("line {}: unknown key {k:?}", no + 1));
        }
        if pairs.insert(k.to_string(), v.to_string()).is_some() {
            return Err(format!("line {}: key {k:?} given twice", no + 1));
        }
    }
    Ok(pairs)
}

struct Reader(BTreeMap<String, String>);

impl Reader {
    fn get<T: std::str::FromStr>(&self, key: &str, default: T) -> Result<T, String>
    where
        T::Err: std::fmt::Display,
    {
        match self.0.get(key) {
            None => Ok(default),
            Some(v) => v.parse().map_err(|e| format!("{key} = {v:?}: {e}")),
        }
    }

    fn opt<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>, String>
    where
        T::Err: std::fmt::Display,
    {
        self.0.get(key).map(|v| v.parse().map_err(|e| format!("{key} = {v:?}: {e}"))).transpose()
    }

    fn str(&self, key: &str, default: &str) -> String {
        self.0.get(key).cloned().unwrap_or_else(|| default.to_string())
    }
}

fn positive(key: &str, v: f64) -> Result<f64, String> {
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err(format!("{key} = {v} must be positive"))
    }
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self, String> {
        let r = Reader(parse_pairs(text)?);
        let data_name = r.str("data", "gaussian");
        let data = RadialProfile::parse(&data_name, r.get("radius", 1.45)?, r.get("width", 0.5)?).map_err(|e| e.to_string())?;
        let source = match r.str("source", "zero").as_str() {
            "zero" => SourceKind::Zero,
            "manufactured" => SourceKind::Manufactured,
            other => return Err(format!("source = {other:?}: expected zero or manufactured")),
        };
        let perturbation = match r.str("perturbation", "none").as_str() {
            "none" => PerturbationKind::None,
            "bump" => PerturbationKind::Bump,
            other => return Err(format!("perturbation = {other:?}: expected none or bump")),
        };
        let nonlinearity = match r.str("nonlinearity", "none").as_str() {
            "none" => NonlinearityKind::None,
            "quadratic" => NonlinearityKind::Quadratic,
            other => return Err(format!("nonlinearity = {other:?}: expected none or quadratic")),
        };
        let ray_thetas = r
            .str("ray_thetas", "0,0.4,1.2")
            .split(',')
            .filter(|s| !s.trim().is_empty())
            .map(|s| s.trim().parse::<f64>().map_err(|e| format!("ray_thetas entry {s:?}: {e}")))
            .collect::<Result<Vec<_>, _>>()?;
        let cfg = ExperimentConfig {
            n: r.get("n", 33)?,
            half_width: positive("L", r.get("L", 8.0)?)?,
            dt: r.opt::<f64>("dt")?.map(|v| positive("dt", v)).transpose()?,
            courant: positive("courant", r.get("courant", 0.25)?)?,
            t_final: r.get("T", 4.0)?,
            eps: r.get("eps", 1.0)?,
            data,
            stride: r.get("stride", 10)?,
            norm_order: r.get("norm_order", 0)?,
            source,
            perturbation,
            perturbation_amp: r.get("perturbation_amp", 0.1)?,
            perturbation_radius: positive("perturbation_radius", r.get("perturbation_radius", 3.0)?)?,
            nonlinearity,
            depth: r.get("depth", 5)?,
            seed: r.get("seed", 0)?,
            snapshot_stride: r.get("snapshot_stride", 0)?,
            fit_start: r.get("fit_start", 5.0)?,
            residual_points: r.get("residual_points", 40)?,
            ray_thetas,
            support_tol: positive("support_tol", r.get("support_tol", 1e-10)?)?,
            boundary_tol: positive("boundary_tol", r.get("boundary_tol", 1e-4)?)?,
            out: r.opt("out")?,
            run_dir: r.opt("run_dir")?,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<(), String> {
        self.grid()?;
        if !(self.t_final.is_finite() && self.t_final >= 0.0) {
            return Err(format!("T = {} must be non-negative", self.t_final));
        }
        if !self.eps.is_finite() {
            return Err(format!("eps = {} must be finite", self.eps));
        }
        if self.stride == 0 {
            return Err("stride must be positive".into());
        }
        if self.norm_order > MAX_NORM_ORDER {
            return Err(format!("norm_order = {} exceeds {MAX_NORM_ORDER}", self.norm_order));
        }
        if !(self.perturbation_amp.is_finite() && self.perturbation_amp.abs() <= 0.5) {
            return Err(format!("perturbation_amp = {} must lie in [-1/2, 1/2]", self.perturbation_amp));
        }
        if self.nonlinearity != NonlinearityKind::None && self.depth < 2 {
            return Err(format!("depth = {} must be at least 2 to measure contraction", self.depth));
        }
        if !(self.fit_start >= 2.0) {
            return Err(format!("fit_start = {} must be at least 2", self.fit_start));
        }
        for &theta in &self.ray_thetas {
            if !(theta >= 0.0 && theta.cosh() <= 2.0) {
                return Err(format!("ray θ = {theta} outside [0, acosh 2]"));
            }
        }
        Ok(())
    }

    pub fn grid(&self) -> Result<Grid3, String> {
        let g = match self.dt {
            Some(dt) => Grid3::new(self.n, self.half_width, dt),
            None => Grid3::with_courant(self.n, self.half_width, self.courant),
        };
        g.map_err(|e| e.to_string())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_and_overrides() {
        let c = ExperimentConfig::parse("# comment\nn = 17\nL=4\n\ndata = bump\nradius = 1\nT = 2\n").unwrap();
        assert_eq!(c.n, 17);
        assert_eq!(c.half_width, 4.0);
        assert_eq!(c.data, RadialProfile::Bump { radius: 1.0 });
        assert_eq!(c.stride, 10);
        assert_eq!(c.source, SourceKind::Zero);
        assert_eq!(c.ray_thetas, vec![0.0, 0.4, 1.2]);
    }

    #[test]
    fn rejects_bad_input() {
        for bad in [
            "n = 4",
            "bogus = 1",
            "n = 17\nn = 19",
            "T = -1",
            "L = 0",
            "data = square",
            "norm_order = 5",
            "perturbation_amp = 0.9",
            "ray_thetas = 0, 2",
            "stride = 0",
            "no equals sign",
            "dt = 10",
        ] {
            assert!(ExperimentConfig::parse(bad).is_err(), "{bad}");
        }
    }
}
