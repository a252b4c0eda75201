//! w_{n+1} solves □₁w = Σ f^{ai}(w_n, w_n′)∂_a∂_i w + Σ f^a(w_n, w_n′)∂_a w
//! with the same Cauchy data; the seed w₀ is the free linear solution.

use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{
    fill_coefficients, solve_linear_trajectory, Coefficients, Integrator, JetFn, Run, RunConfig, RunSeries, SourceSpec,
    StepCoeffs, Trajectory,
};
use crate::error::{Error, Result};
use crate::fields::{d1_raw, Field, Grid3};
use crate::norms::gamma_sobolev_norm;

/// Order of the Γ-norm used for successive differences.
pub const DIFFERENCE_ORDER: usize = 2;

/// Quasilinear term F = Σ f^{ai}(u, u′)∂_a∂_i u + Σ f^a(u, u′)∂_a u.
#[derive(Clone, Default)]
pub struct NonlinearSpec {
    pub label: String,
    pub second: [[Option<JetFn>; 4]; 4],
    pub first: [Option<JetFn>; 4],
    /// Number of iterates after the seed.
    pub depth: usize,
    /// Seed for the admissibility sampling.
    pub sample_seed: u64,
}

impl fmt::Debug for NonlinearSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("NonlinearSpec").field("label", &self.label).field("depth", &self.depth).finish()
    }
}

impl NonlinearSpec {
    pub fn new(label: impl Into<String>, depth: usize) -> Self {
        NonlinearSpec { label: label.into(), depth, ..Default::default() }
    }

    /// f⁰(u, u′) = u, i.e. F = u ∂₀u = −u ∂_t u.
    pub fn quadratic(depth: usize) -> Self {
        Self::new("f0=u", depth).with_first(0, |u, _| u)
    }

    pub fn with_second(mut self, a: usize, i: usize, f: impl Fn(f64, [f64; 4]) -> f64 + Send + Sync + 'static) -> Self {
        self.second[a][i] = Some(Arc::new(f));
        self
    }

    pub fn with_first(mut self, a: usize, f: impl Fn(f64, [f64; 4]) -> f64 + Send + Sync + 'static) -> Self {
        self.first[a] = Some(Arc::new(f));
        self
    }

    /// Largest Σ|f^{ai}(u, u′)| seen over `count` random points with
    /// |u| + |u′| ≤ 1. Errors if any coefficient is nonzero at the origin.
    pub fn sampled_bound(&self, count: usize) -> Result<f64> {
        let all = self.second.iter().flatten().chain(self.first.iter()).flatten();
        for f in all {
            if f(0.0, [0.0; 4]) != 0.0 {
                return Err(Error::Admissibility(format!("{}: coefficient nonzero at (0, 0)", self.label)));
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.sample_seed);
        let mut worst: f64 = 0.0;
        for _ in 0..count {
            let total: f64 = rng.gen_range(0.0..=1.0);
            let split: f64 = rng.gen_range(0.0..=1.0);
            let u = total * split * if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
            let mut dir: [f64; 4] = std::array::from_fn(|_| rng.gen_range(-1.0..1.0));
            let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-300);
            dir.iter_mut().for_each(|v| *v *= total * (1.0 - split) / norm);
            let s = self.second.iter().flatten().flatten().fold(0.0, |acc, f| acc + f(u, dir).abs());
            worst = worst.max(s);
        }
        Ok(worst)
    }
}

struct Frozen<'a> {
    spec: &'a NonlinearSpec,
    prev: &'a Trajectory,
}

impl Coefficients for Frozen<'_> {
    fn at(&self, m: isize, grid: &Grid3) -> Result<StepCoeffs> {
        let mut co = StepCoeffs::default();
        let any = self.spec.second.iter().flatten().chain(self.spec.first.iter()).any(Option::is_some);
        if !any {
            return Ok(co);
        }
        let missing = || Error::Invalid(format!("previous iterate has no level {m}"));
        let w = self.prev.level(m).ok_or_else(missing)?;
        let dt = grid.dt();
        let wt: Vec<f64> = match (self.prev.level(m + 1), self.prev.level(m - 1)) {
            (Some(a), Some(b)) => a.values().iter().zip(b.values()).map(|(x, y)| (x - y) / (2.0 * dt)).collect(),
            (Some(a), None) => a.values().iter().zip(w.values()).map(|(x, y)| (x - y) / dt).collect(),
            (None, Some(b)) => w.values().iter().zip(b.values()).map(|(x, y)| (x - y) / dt).collect(),
            (None, None) => return Err(missing()),
        };
        let grads: Vec<Vec<f64>> = (0..3).map(|a| d1_raw(w.values(), grid, a)).collect();
        let jet = |i: usize| -> (f64, [f64; 4]) { (w.values()[i], [-wt[i], grads[0][i], grads[1][i], grads[2][i]]) };
        let eval = |f: &JetFn| -> Vec<f64> {
            (0..grid.len())
                .into_par_iter()
                .map(|i| {
                    let (u, du) = jet(i);
                    -f(u, du)
                })
                .collect()
        };
        fill_coefficients(
            |a, i| self.spec.second[a][i].as_ref().map(eval),
            |a| self.spec.first[a].as_ref().map(eval),
            &mut co,
        );
        Ok(co)
    }
}

/// Iterates w₀..w_n with their successive differences.
#[derive(Clone, Debug)]
pub struct IterationReport {
    pub iterates: Vec<RunSeries>,
    /// sup_t ‖w_{n+1} − w_n‖_{Γ,2} over sample times, for n = 0..depth.
    pub differences: Vec<f64>,
    /// differences[n] / differences[n − 1]; 0/0 counts as 0.
    pub ratios: Vec<f64>,
    /// max_t E(w_n), which bounds |w_n| + |w_n′|.
    pub smallness: Vec<f64>,
    /// Sampled max of Σ|f^{ai}| over |u| + |u′| ≤ 1.
    pub coefficient_bound: f64,
}

impl IterationReport {
    /// Whether every iterate stayed in |w| + |w′| ≤ 1.
    pub fn small(&self) -> bool {
        self.smallness.iter().all(|&s| s <= 1.0)
    }
}

fn difference(a: &Trajectory, b: &Trajectory, series: &RunSeries) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for s in &series.samples {
        let m = s.step as isize;
        let d = a.window(m, DIFFERENCE_ORDER + 1)?.sub(&b.window(m, DIFFERENCE_ORDER + 1)?)?;
        worst = worst.max(gamma_sobolev_norm(&d, DIFFERENCE_ORDER)?);
    }
    Ok(worst)
}

/// Runs the frozen-coefficient iteration to `spec.depth` iterates.
pub fn iterate_nonlinear(u0: &Field, u1: &Field, spec: &NonlinearSpec, cfg: &RunConfig) -> Result<IterationReport> {
    let bound = spec.sampled_bound(4096)?;
    if bound > 0.5 {
        return Err(Error::Admissibility(format!("{}: Σ|f^ai| reaches {bound:.4} > 1/2 on |u| + |u'| ≤ 1", spec.label)));
    }
    let mut cfg = cfg.clone();
    cfg.norm_order = cfg.norm_order.max(DIFFERENCE_ORDER);
    let zero = SourceSpec::zero();
    let (seed, mut prev) = solve_linear_trajectory(u0, u1, &zero, &cfg)?;
    let mut report = IterationReport {
        smallness: vec![seed.samples.iter().map(|s| s.sup()).fold(0.0, f64::max)],
        iterates: vec![seed],
        differences: Vec::new(),
        ratios: Vec::new(),
        coefficient_bound: bound,
    };
    for n in 1..=spec.depth {
        let coeffs = Frozen { spec, prev: &prev };
        let run = Run {
            label: format!("iterate {n} ({})", spec.label),
            integrator: Integrator { grid: *u0.grid(), coeffs: &coeffs },
            source: None,
            admissibility: None,
        };
        let (series, next) = run.execute(u0, u1, &cfg, &mut [], true)?;
        let next = next.expect("trajectory kept");
        let d = difference(&next, &prev, &series)?;
        if let Some(&last) = report.differences.last() {
            report.ratios.push(if d == 0.0 { 0.0 } else { d / last });
        }
        report.differences.push(d);
        report.smallness.push(series.samples.iter().map(|s| s.sup()).fold(0.0, f64::max));
        report.iterates.push(series);
        let k = report.ratios.len();
        if k >= 2 && report.ratios[k - 1] > 1.0 && report.ratios[k - 2] > 1.0 {
            return Err(Error::Divergence { iterate: n, ratios: report.ratios.clone() });
        }
        prev = next;
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::RadialProfile;

    fn setup() -> (Field, Field, RunConfig) {
        let g = Grid3::with_courant(29, 5.0, 0.25).unwrap();
        let u0 = RadialProfile::Bump { radius: 1.0 }.field(g).unwrap().scaled(1e-2).unwrap();
        let mut cfg = RunConfig::new(1.0);
        cfg.stride = 2;
        (u0, Field::zeros(g), cfg)
    }

    #[test]
    fn zero_nonlinearity_is_a_fixed_point() {
        let (u0, u1, cfg) = setup();
        let r = iterate_nonlinear(&u0, &u1, &NonlinearSpec::new("zero", 3), &cfg).unwrap();
        assert_eq!(r.iterates.len(), 4);
        assert!(r.differences.iter().all(|&d| d == 0.0));
    }

    #[test]
    fn quadratic_term_contracts() {
        let (u0, u1, cfg) = setup();
        let r = iterate_nonlinear(&u0, &u1, &NonlinearSpec::quadratic(3), &cfg).unwrap();
        assert!(r.differences[0] > 0.0);
        assert!(r.ratios.iter().all(|&q| q < 0.5), "{:?}", r.ratios);
        assert!(r.small());
    }

    #[test]
    fn coefficient_bound_is_enforced() {
        let (u0, u1, cfg) = setup();
        let spec = NonlinearSpec::new("big", 1).with_second(1, 1, |u, _| 2.0 * u);
        assert!(matches!(iterate_nonlinear(&u0, &u1, &spec, &cfg), Err(Error::Admissibility(_))));
        let offset = NonlinearSpec::new("offset", 1).with_first(0, |u, _| u + 0.1);
        assert!(offset.sampled_bound(10).is_err());
    }
}
