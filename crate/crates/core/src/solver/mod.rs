//! Time integration of □₁u = g, of the perturbed equation
//! □₁u + Σγ^{jk}∂_j∂_k u + Σβ^a∂_a u = f, and of the frozen-coefficient
//! iteration for the quasilinear problem.
//!
//! Index 0 in coefficient arrays refers to ∂₀ = −∂_t, as in the equations
//! above. The scheme is the leapfrog step with Dirichlet-held boundary nodes;
//! runs abort before the solution reaches the boundary.

mod iterate;
mod stepper;

use std::fmt;
use std::io::Write;
use std::sync::Arc;

use rayon::prelude::*;

use crate::data::Jet;
use crate::error::{Error, Result};
use crate::fields::{check_data_support, d1_raw, exact_support_radius, support_radius, ordered_sum, Field, FieldWindow, Grid3};
use crate::gamma::Ordering;
use crate::norms::{gamma_norms, word_energies, NormReport, WindowSynthesizer};

pub use iterate::{iterate_nonlinear, IterationReport, NonlinearSpec, DIFFERENCE_ORDER};
pub(crate) use stepper::{Coefficients, Integrator, StepCoeffs, PAIRS};

pub type SpaceTimeFn = Arc<dyn Fn(f64, [f64; 3]) -> f64 + Send + Sync>;
/// f(u, u′) with u′ = (∂₀u, ∂₁u, ∂₂u, ∂₃u).
pub type JetFn = Arc<dyn Fn(f64, [f64; 4]) -> f64 + Send + Sync>;

/// Right-hand side g(t, x).
#[derive(Clone)]
pub struct SourceSpec {
    label: String,
    f: Option<SpaceTimeFn>,
    cone_supported: bool,
}

impl fmt::Debug for SourceSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SourceSpec").field("label", &self.label).field("cone_supported", &self.cone_supported).finish()
    }
}

impl Default for SourceSpec {
    fn default() -> Self {
        Self::zero()
    }
}

impl SourceSpec {
    pub fn zero() -> Self {
        SourceSpec { label: "zero".into(), f: None, cone_supported: false }
    }

    pub fn new(label: impl Into<String>, f: impl Fn(f64, [f64; 3]) -> f64 + Send + Sync + 'static) -> Self {
        SourceSpec { label: label.into(), f: Some(Arc::new(f)), cone_supported: false }
    }

    /// Declare g(t, x) = 0 for |x| > t + 1; checked on the grid at every sample.
    pub fn cone_supported(mut self) -> Self {
        self.cone_supported = true;
        self
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn is_zero(&self) -> bool {
        self.f.is_none()
    }

    pub fn eval(&self, t: f64, x: [f64; 3]) -> f64 {
        self.f.as_ref().map_or(0.0, |f| f(t, x))
    }

    pub fn sample(&self, grid: Grid3, t: f64) -> Result<Field> {
        match &self.f {
            None => Ok(Field::zeros(grid)),
            Some(f) => Field::from_fn(grid, |x| f(t, x)),
        }
    }

    pub fn window(&self, grid: Grid3, t: f64, radius: usize) -> Result<FieldWindow> {
        match &self.f {
            None => FieldWindow::sample(grid, t, radius, |_, _| 0.0),
            Some(f) => FieldWindow::sample(grid, t, radius, |t, x| f(t, x)),
        }
    }

    fn check_cone(&self, grid: Grid3, t: f64) -> Result<()> {
        let Some(f) = &self.f else { return Ok(()) };
        if !self.cone_supported {
            return Ok(());
        }
        let limit = t + 1.0 + grid.h();
        let bad = (0..grid.len()).into_par_iter().find_any(|&idx| {
            let x = grid.node(idx);
            crate::data::norm(x) > limit && f(t, x) != 0.0
        });
        match bad {
            Some(idx) => Err(Error::Support(format!(
                "source {} nonzero at |x| = {:.4} > t + 1 = {:.4}",
                self.label,
                crate::data::norm(grid.node(idx)),
                t + 1.0
            ))),
            None => Ok(()),
        }
    }
}

/// Coefficients γ^{jk}, β^a and forcing f of the perturbed equation.
#[derive(Clone, Default)]
pub struct PerturbationSpec {
    pub label: String,
    pub gamma: [[Option<SpaceTimeFn>; 4]; 4],
    pub beta: [Option<SpaceTimeFn>; 4],
    pub forcing: SourceSpec,
    admissible: bool,
}

impl fmt::Debug for PerturbationSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let present: Vec<String> = (0..4)
            .flat_map(|j| (0..4).map(move |k| (j, k)))
            .filter(|&(j, k)| self.gamma[j][k].is_some())
            .map(|(j, k)| format!("g{j}{k}"))
            .collect();
        f.debug_struct("PerturbationSpec")
            .field("label", &self.label)
            .field("gamma", &present)
            .field("admissible", &self.admissible)
            .finish()
    }
}

impl PerturbationSpec {
    pub fn zero() -> Self {
        Self::new("zero")
    }

    pub fn new(label: impl Into<String>) -> Self {
        PerturbationSpec { label: label.into(), ..Default::default() }
    }

    pub fn with_gamma(mut self, j: usize, k: usize, f: impl Fn(f64, [f64; 3]) -> f64 + Send + Sync + 'static) -> Self {
        self.gamma[j][k] = Some(Arc::new(f));
        self
    }

    pub fn with_beta(mut self, a: usize, f: impl Fn(f64, [f64; 3]) -> f64 + Send + Sync + 'static) -> Self {
        self.beta[a] = Some(Arc::new(f));
        self
    }

    pub fn with_forcing(mut self, f: SourceSpec) -> Self {
        self.forcing = f;
        self
    }

    /// Flag the run as satisfying Σ sup|γ^{jk}| ≤ 1/2; the bound is then
    /// checked on the grid at every sample.
    pub fn hormander_admissible(mut self) -> Self {
        self.admissible = true;
        self
    }

    pub fn is_admissible(&self) -> bool {
        self.admissible
    }

    /// Σ_{j,k} sup_x |γ^{jk}(t, x)| over grid nodes.
    pub fn gamma_sup_sum(&self, grid: &Grid3, t: f64) -> f64 {
        self.gamma
            .iter()
            .flatten()
            .flatten()
            .map(|g| (0..grid.len()).into_par_iter().map(|i| g(t, grid.node(i)).abs()).reduce(|| 0.0, f64::max))
            .sum()
    }

    /// Γ(t) = Σ_{i,j,k} sup_x |∂_i γ^{jk}(t, x)|, by centered differences of the closures.
    pub fn gamma_rate(&self, grid: &Grid3, t: f64) -> f64 {
        let d = 1e-5;
        self.gamma
            .iter()
            .flatten()
            .flatten()
            .map(|g| {
                (0..4)
                    .map(|i| {
                        (0..grid.len())
                            .into_par_iter()
                            .map(|idx| {
                                let x = grid.node(idx);
                                let v = if i == 0 {
                                    (g(t + d, x) - g(t - d, x)) / (2.0 * d)
                                } else {
                                    let (mut xp, mut xm) = (x, x);
                                    xp[i - 1] += d;
                                    xm[i - 1] -= d;
                                    (g(t, xp) - g(t, xm)) / (2.0 * d)
                                };
                                v.abs()
                            })
                            .reduce(|| 0.0, f64::max)
                    })
                    .sum::<f64>()
            })
            .sum()
    }

    fn is_unperturbed(&self) -> bool {
        self.gamma.iter().flatten().all(Option::is_none) && self.beta.iter().all(Option::is_none)
    }
}

/// Map γ^{jk} (lowered indices, ∂₀ = −∂_t) and β^a onto the scheme's
/// A, B, C, S, D slots. Missing entries stay `None`.
pub(crate) fn fill_coefficients(
    gamma: impl Fn(usize, usize) -> Option<Vec<f64>>,
    beta: impl Fn(usize) -> Option<Vec<f64>>,
    co: &mut StepCoeffs,
) {
    fn add(a: Option<Vec<f64>>, b: Option<Vec<f64>>, sign: f64) -> Option<Vec<f64>> {
        match (a, b) {
            (None, None) => None,
            (Some(a), None) => Some(a.into_iter().map(|v| sign * v).collect()),
            (None, Some(b)) => Some(b.into_iter().map(|v| sign * v).collect()),
            (Some(a), Some(b)) => Some(a.into_iter().zip(b).map(|(x, y)| sign * (x + y)).collect()),
        }
    }
    co.a = gamma(0, 0);
    for k in 1..4 {
        co.b[k - 1] = add(gamma(0, k), gamma(k, 0), -1.0);
        co.d[k - 1] = beta(k);
    }
    co.c = beta(0).map(|v| v.into_iter().map(|x| -x).collect());
    for (slot, &(j, k)) in PAIRS.iter().enumerate() {
        co.s[slot] = if j == k { gamma(j + 1, j + 1) } else { add(gamma(j + 1, k + 1), gamma(k + 1, j + 1), 1.0) };
    }
}

struct LinearCoefficients<'a> {
    source: &'a SourceSpec,
}

impl Coefficients for LinearCoefficients<'_> {
    fn at(&self, m: isize, grid: &Grid3) -> Result<StepCoeffs> {
        let mut co = StepCoeffs::default();
        if !self.source.is_zero() {
            co.f = Some(self.source.sample(*grid, m as f64 * grid.dt())?.into_values());
        }
        Ok(co)
    }
}

struct PerturbationCoefficients<'a> {
    spec: &'a PerturbationSpec,
}

fn sample_fn(f: &SpaceTimeFn, grid: &Grid3, t: f64) -> Vec<f64> {
    (0..grid.len()).into_par_iter().map(|i| f(t, grid.node(i))).collect()
}

impl Coefficients for PerturbationCoefficients<'_> {
    fn at(&self, m: isize, grid: &Grid3) -> Result<StepCoeffs> {
        let t = m as f64 * grid.dt();
        let mut co = StepCoeffs::default();
        fill_coefficients(
            |j, k| self.spec.gamma[j][k].as_ref().map(|f| sample_fn(f, grid, t)),
            |a| self.spec.beta[a].as_ref().map(|f| sample_fn(f, grid, t)),
            &mut co,
        );
        if !self.spec.forcing.is_zero() {
            co.f = Some(self.spec.forcing.sample(*grid, t)?.into_values());
        }
        Ok(co)
    }

    fn modified_energy_sq(&self, w: &FieldWindow, energy: f64) -> Result<Option<f64>> {
        let grid = *w.grid();
        let t = w.center_time();
        let u = w.center().values();
        let ut = w.partial(0)?.into_values();
        let grads: Vec<Vec<f64>> = (0..3).map(|a| d1_raw(u, &grid, a)).collect();
        let mut extra = 0.0;
        if let Some(g) = &self.spec.gamma[0][0] {
            extra += ordered_sum(grid.len(), |i| g(t, grid.node(i)) * ut[i] * ut[i]);
        }
        for j in 1..4 {
            for k in 1..4 {
                if let Some(g) = &self.spec.gamma[j][k] {
                    let (a, b) = (&grads[j - 1], &grads[k - 1]);
                    extra -= ordered_sum(grid.len(), |i| g(t, grid.node(i)) * a[i] * b[i]);
                }
            }
        }
        let h = grid.h();
        Ok(Some(energy * energy + extra * h * h * h))
    }
}

/// Run parameters shared by every solve.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub t_final: f64,
    /// Steps between recorded samples.
    pub stride: usize,
    /// Highest Γ-norm order recorded per sample.
    pub norm_order: usize,
    pub ordering: Ordering,
    /// Record 𝓔(Γ^α u) for every α at each sample.
    pub word_ledger: bool,
    /// Keep a window every this many steps.
    pub snapshot_stride: Option<usize>,
    pub snapshot_radius: usize,
    /// Support threshold relative to the initial sup norm.
    pub support_tol: f64,
    /// Abort once |u| within 4h of the boundary exceeds this fraction of the running sup.
    pub boundary_tol: f64,
    pub instability_factor: f64,
}

impl RunConfig {
    pub fn new(t_final: f64) -> Self {
        RunConfig {
            t_final,
            stride: 10,
            norm_order: 0,
            ordering: Ordering::published(),
            word_ledger: false,
            snapshot_stride: None,
            snapshot_radius: 1,
            support_tol: 1e-10,
            boundary_tol: 1e-4,
            instability_factor: 1e6,
        }
    }

    fn validate(&self, grid: &Grid3) -> Result<usize> {
        if !(self.t_final.is_finite() && self.t_final >= 0.0) {
            return Err(Error::Invalid(format!("horizon T = {} must be non-negative", self.t_final)));
        }
        if self.stride == 0 || self.snapshot_stride == Some(0) {
            return Err(Error::Invalid("sample and snapshot strides must be positive".into()));
        }
        if !(self.support_tol > 0.0 && self.boundary_tol > 0.0 && self.instability_factor > 1.0) {
            return Err(Error::Invalid("tolerances must be positive".into()));
        }
        Ok((self.t_final / grid.dt() - 1e-9).ceil().max(0.0) as usize)
    }
}

/// Everything recorded at one sample time.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub step: usize,
    pub t: f64,
    /// ‖u‖_{Γ,N} for N = 0..=norm_order; entry 0 is 𝓔.
    pub gamma_sobolev: Vec<f64>,
    /// |u|_{Γ,N} for N = 0..=norm_order; entry 0 is E.
    pub gamma_sup: Vec<f64>,
    pub u_sup: f64,
    pub support_radius: f64,
    /// 𝓔(Γ^α u) in enumeration order, when the word ledger is on.
    pub word_energies: Vec<f64>,
    /// 𝓔₊² for perturbed runs.
    pub modified_energy_sq: Option<f64>,
}

impl Sample {
    pub fn energy(&self) -> f64 {
        self.gamma_sobolev[0]
    }

    pub fn sup(&self) -> f64 {
        self.gamma_sup[0]
    }
}

/// Recorded output of one run.
#[derive(Clone, Debug)]
pub struct RunSeries {
    pub grid: Grid3,
    pub config: RunConfig,
    pub label: String,
    pub samples: Vec<Sample>,
    pub snapshots: Vec<FieldWindow>,
    /// Radius of the smallest ball holding the data.
    pub data_radius: f64,
    /// Absolute threshold behind `Sample::support_radius`.
    pub support_threshold: f64,
}

impl RunSeries {
    pub fn times(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.t).collect()
    }

    pub fn report(&self, i: usize, order: usize) -> NormReport {
        let s = &self.samples[i];
        NormReport {
            t: s.t,
            order,
            energy: s.energy(),
            sup: s.sup(),
            gamma_sobolev: s.gamma_sobolev[order],
            gamma_sup: s.gamma_sup[order],
        }
    }

    /// max_t |𝓔(t) − 𝓔(0)| / 𝓔(0), or 0 for a zero run.
    pub fn energy_drift(&self) -> f64 {
        let e0 = self.samples.first().map_or(0.0, Sample::energy);
        if e0 == 0.0 {
            return 0.0;
        }
        self.samples.iter().map(|s| (s.energy() - e0).abs() / e0).fold(0.0, f64::max)
    }

    /// max_t (support_radius(t) − data_radius − t), in units of h.
    pub fn support_excess(&self) -> f64 {
        self.samples
            .iter()
            .filter(|s| s.support_radius > 0.0)
            .map(|s| (s.support_radius - self.data_radius - s.t) / self.grid.h())
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Columns t, E0, calE0, gammaSob_N.., gammaSup_N.., support_radius.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let orders = self.samples.first().map_or(0, |s| s.gamma_sobolev.len());
        let mut header = vec!["t".to_string(), "E0".into(), "calE0".into()];
        header.extend((0..orders).map(|n| format!("gammaSob_{n}")));
        header.extend((0..orders).map(|n| format!("gammaSup_{n}")));
        header.push("support_radius".into());
        writeln!(w, "{}", header.join(","))?;
        for s in &self.samples {
            let mut row = vec![format!("{:.6}", s.t), format!("{:.12e}", s.sup()), format!("{:.12e}", s.energy())];
            row.extend(s.gamma_sobolev.iter().map(|v| format!("{v:.12e}")));
            row.extend(s.gamma_sup.iter().map(|v| format!("{v:.12e}")));
            row.push(format!("{:.6}", s.support_radius));
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }
}

/// Receives the solution window around every time step, centers 0..=M.
pub trait RunObserver {
    fn radius(&self) -> usize;
    fn observe(&mut self, window: &FieldWindow) -> Result<()>;
}

/// All levels −K..=M+K of a run, kept for frozen-coefficient iteration.
pub(crate) struct Trajectory {
    pub first_level: isize,
    pub levels: Vec<Arc<Field>>,
}

impl Trajectory {
    pub fn level(&self, m: isize) -> Option<&Field> {
        let i = m - self.first_level;
        (i >= 0).then(|| self.levels.get(i as usize).map(|a| a.as_ref())).flatten()
    }

    pub fn window(&self, m: isize, radius: usize) -> Result<FieldWindow> {
        let dt = self.levels[0].grid().dt();
        let lo = m - radius as isize - self.first_level;
        let hi = m + radius as isize - self.first_level;
        if lo < 0 || hi as usize >= self.levels.len() {
            return Err(Error::WindowTooShallow { have: 0, need: radius });
        }
        FieldWindow::new(m as f64 * dt, self.levels[lo as usize..=hi as usize].to_vec())
    }
}

pub(crate) struct Run<'a> {
    pub label: String,
    pub integrator: Integrator<'a>,
    pub source: Option<&'a SourceSpec>,
    pub admissibility: Option<&'a PerturbationSpec>,
}

fn boundary_sup(f: &Field) -> f64 {
    let g = *f.grid();
    f.values()
        .par_iter()
        .enumerate()
        .filter(|(i, _)| g.boundary_distance(*i) <= 4)
        .map(|(_, v)| v.abs())
        .reduce(|| 0.0, f64::max)
}

impl Run<'_> {
    pub fn execute(
        &self,
        u0: &Field,
        u1: &Field,
        cfg: &RunConfig,
        observers: &mut [&mut dyn RunObserver],
        keep: bool,
    ) -> Result<(RunSeries, Option<Trajectory>)> {
        let grid = self.integrator.grid;
        if !grid.same_space(u1.grid()) || u0.grid().dt() != grid.dt() {
            return Err(Error::GridMismatch("data and run grids differ".into()));
        }
        check_data_support(u0, "initial displacement")?;
        check_data_support(u1, "initial velocity")?;
        let steps = cfg.validate(&grid)?;
        let k = observers
            .iter()
            .map(|o| o.radius())
            .chain([cfg.norm_order + 1, cfg.snapshot_radius, 2])
            .max()
            .unwrap_or(2);
        let data_radius = exact_support_radius(u0).max(exact_support_radius(u1));
        let mut reference = u0.sup_norm().max(u1.sup_norm());
        let support_threshold = cfg.support_tol * reference;

        let mut ring: Vec<Arc<Field>> = self.integrator.initial_levels(u0, u1, k)?;
        let mut trajectory = keep.then(|| Trajectory { first_level: -(k as isize), levels: ring.clone() });
        let mut series = RunSeries {
            grid,
            config: cfg.clone(),
            label: self.label.clone(),
            samples: Vec::new(),
            snapshots: Vec::new(),
            data_radius,
            support_threshold,
        };
        let mut running_sup: f64 = 0.0;
        for center in 0..=steps {
            if center > 0 {
                let m = (center + k - 1) as isize;
                let l = ring.len();
                let next = self.integrator.advance(Some(&ring[l - 3]), &ring[l - 2], &ring[l - 1], m, 1.0, None)?;
                let next = Arc::new(next);
                if let Some(tr) = trajectory.as_mut() {
                    tr.levels.push(next.clone());
                }
                ring.remove(0);
                ring.push(next);
            }
            let window = FieldWindow::new(center as f64 * grid.dt(), ring.clone())?;
            for o in observers.iter_mut() {
                o.observe(&window.shrink(o.radius())?)?;
            }
            if cfg.snapshot_stride.is_some_and(|s| center % s == 0) {
                series.snapshots.push(window.shrink(cfg.snapshot_radius)?);
            }
            if center % cfg.stride != 0 && center != steps {
                continue;
            }
            let t = window.center_time();
            let u = window.center();
            if !u.is_finite() {
                return Err(Error::NonFinite("solution"));
            }
            let u_sup = u.sup_norm();
            if reference == 0.0 {
                reference = u_sup;
            }
            if reference > 0.0 && u_sup > cfg.instability_factor * reference {
                return Err(Error::Instability { t, sup: u_sup, limit: cfg.instability_factor * reference });
            }
            running_sup = running_sup.max(u_sup);
            let edge = boundary_sup(u);
            if edge > 0.0 && edge > cfg.boundary_tol * running_sup {
                return Err(Error::BoundaryContact { t, value: edge });
            }
            if let Some(src) = self.source {
                src.check_cone(grid, t)?;
            }
            if let Some(p) = self.admissibility {
                let total = p.gamma_sup_sum(&grid, t);
                if total > 0.5 + 1e-12 {
                    return Err(Error::Admissibility(format!("Σ sup|γ| = {total:.6} > 1/2 at t = {t:.4}")));
                }
            }
            let norms = gamma_norms(&window.shrink(cfg.norm_order + 1)?, cfg.norm_order, &cfg.ordering)?;
            let words = if cfg.word_ledger {
                word_energies(&window.shrink(cfg.norm_order + 1)?, cfg.norm_order, &cfg.ordering)?
                    .into_iter()
                    .map(|(_, e)| e)
                    .collect()
            } else {
                Vec::new()
            };
            let threshold = if support_threshold > 0.0 { support_threshold } else { cfg.support_tol * running_sup };
            let radius = if threshold > 0.0 { support_radius(u, threshold) } else { 0.0 };
            let modified = self.integrator.coeffs.modified_energy_sq(&window.shrink(1)?, norms.sobolev[0])?;
            series.samples.push(Sample {
                step: center,
                t,
                gamma_sobolev: norms.sobolev,
                gamma_sup: norms.sup,
                u_sup,
                support_radius: radius,
                word_energies: words,
                modified_energy_sq: modified,
            });
        }
        if let Some(tr) = trajectory.as_mut() {
            // the ring already holds levels up to steps + k
            debug_assert_eq!(tr.levels.len() as isize + tr.first_level - 1, (steps + k) as isize);
        }
        Ok((series, trajectory))
    }
}

/// Leapfrog solve of □₁u = g with u(0) = u0, ∂_t u(0) = u1.
pub fn solve_linear(u0: &Field, u1: &Field, g: &SourceSpec, cfg: &RunConfig) -> Result<RunSeries> {
    solve_linear_with(u0, u1, g, cfg, &mut [])
}

pub fn solve_linear_with(
    u0: &Field,
    u1: &Field,
    g: &SourceSpec,
    cfg: &RunConfig,
    observers: &mut [&mut dyn RunObserver],
) -> Result<RunSeries> {
    let coeffs = LinearCoefficients { source: g };
    let run = Run {
        label: format!("linear source={}", g.label()),
        integrator: Integrator { grid: *u0.grid(), coeffs: &coeffs },
        source: Some(g),
        admissibility: None,
    };
    Ok(run.execute(u0, u1, cfg, observers, false)?.0)
}

pub(crate) fn solve_linear_trajectory(u0: &Field, u1: &Field, g: &SourceSpec, cfg: &RunConfig) -> Result<(RunSeries, Trajectory)> {
    let coeffs = LinearCoefficients { source: g };
    let run = Run {
        label: "iterate 0 (free linear solution)".into(),
        integrator: Integrator { grid: *u0.grid(), coeffs: &coeffs },
        source: Some(g),
        admissibility: None,
    };
    let (s, t) = run.execute(u0, u1, cfg, &mut [], true)?;
    Ok((s, t.expect("trajectory kept")))
}

/// Solve of the perturbed equation; samples carry 𝓔₊².
pub fn solve_perturbed(u0: &Field, u1: &Field, p: &PerturbationSpec, cfg: &RunConfig) -> Result<RunSeries> {
    solve_perturbed_with(u0, u1, p, cfg, &mut [])
}

pub fn solve_perturbed_with(
    u0: &Field,
    u1: &Field,
    p: &PerturbationSpec,
    cfg: &RunConfig,
    observers: &mut [&mut dyn RunObserver],
) -> Result<RunSeries> {
    if !p.is_admissible() {
        return Err(Error::Admissibility(format!("perturbation {} is not flagged admissible", p.label)));
    }
    let coeffs = PerturbationCoefficients { spec: p };
    let run = Run {
        label: format!("perturbed {}", p.label),
        integrator: Integrator { grid: *u0.grid(), coeffs: &coeffs },
        source: Some(&p.forcing),
        admissibility: Some(p),
    };
    Ok(run.execute(u0, u1, cfg, observers, false)?.0)
}

/// The linear equation as a window synthesizer for Δ_N.
pub struct LinearEquation {
    pub source: SourceSpec,
}

impl WindowSynthesizer for LinearEquation {
    fn initial_window(&self, u0: &Field, u1: &Field, radius: usize) -> Result<FieldWindow> {
        let coeffs = LinearCoefficients { source: &self.source };
        let levels = Integrator { grid: *u0.grid(), coeffs: &coeffs }.initial_levels(u0, u1, radius)?;
        let r = levels.len() / 2;
        FieldWindow::new(0.0, levels[r - radius..=r + radius].to_vec())
    }
}

impl WindowSynthesizer for PerturbationSpec {
    fn initial_window(&self, u0: &Field, u1: &Field, radius: usize) -> Result<FieldWindow> {
        if self.is_unperturbed() {
            return LinearEquation { source: self.forcing.clone() }.initial_window(u0, u1, radius);
        }
        let coeffs = PerturbationCoefficients { spec: self };
        let levels = Integrator { grid: *u0.grid(), coeffs: &coeffs }.initial_levels(u0, u1, radius)?;
        let r = levels.len() / 2;
        FieldWindow::new(0.0, levels[r - radius..=r + radius].to_vec())
    }
}

/// Closed-form space-time function with its second derivatives, for
/// manufactured solutions.
#[derive(Clone)]
pub struct ClosedForm {
    pub label: String,
    u: SpaceTimeFn,
    ut: SpaceTimeFn,
    utt: SpaceTimeFn,
    lap: SpaceTimeFn,
}

impl fmt::Debug for ClosedForm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ClosedForm").field("label", &self.label).finish()
    }
}

impl ClosedForm {
    pub fn new(label: impl Into<String>, u: SpaceTimeFn, ut: SpaceTimeFn, utt: SpaceTimeFn, lap: SpaceTimeFn) -> Self {
        ClosedForm { label: label.into(), u, ut, utt, lap }
    }

    pub fn zero() -> Self {
        let z: SpaceTimeFn = Arc::new(|_, _| 0.0);
        Self::new("zero", z.clone(), z.clone(), z.clone(), z)
    }

    /// η(t)·φ(|x|) for a time profile given on jets and a radial profile.
    pub fn separable<T>(label: impl Into<String>, time: T, space: crate::data::RadialProfile) -> Self
    where
        T: Fn(Jet) -> Jet + Send + Sync + Clone + 'static,
    {
        let (t1, t2, t3, t4) = (time.clone(), time.clone(), time.clone(), time);
        ClosedForm {
            label: label.into(),
            u: Arc::new(move |t, x| t1(Jet::constant(t)).v * space.value(x)),
            ut: Arc::new(move |t, x| t2(Jet::var(t)).d * space.value(x)),
            utt: Arc::new(move |t, x| t3(Jet::var(t)).dd * space.value(x)),
            lap: Arc::new(move |t, x| t4(Jet::constant(t)).v * space.laplacian(x)),
        }
    }

    pub fn value(&self, t: f64, x: [f64; 3]) -> f64 {
        (self.u)(t, x)
    }

    pub fn velocity(&self, t: f64, x: [f64; 3]) -> f64 {
        (self.ut)(t, x)
    }

    pub fn field(&self, grid: Grid3, t: f64) -> Result<Field> {
        Field::from_fn(grid, |x| (self.u)(t, x))
    }

    pub fn velocity_field(&self, grid: Grid3, t: f64) -> Result<Field> {
        Field::from_fn(grid, |x| (self.ut)(t, x))
    }
}

/// g = ∂_t²u* − Δu* + u*.
pub fn manufactured_source(u: &ClosedForm) -> SourceSpec {
    let c = u.clone();
    SourceSpec::new(format!("box1({})", u.label), move |t, x| (c.utt)(t, x) - (c.lap)(t, x) + (c.u)(t, x))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::RadialProfile;

    fn grid() -> Grid3 {
        Grid3::with_courant(29, 5.0, 0.25).unwrap()
    }

    #[test]
    fn zero_data_gives_zero_series() {
        let g = grid();
        let z = Field::zeros(g);
        let s = solve_linear(&z, &z, &SourceSpec::zero(), &RunConfig::new(1.0)).unwrap();
        assert!(s.samples.iter().all(|s| s.energy() == 0.0 && s.u_sup == 0.0 && s.support_radius == 0.0));
        assert_eq!(s.samples[0].t, 0.0);
        assert!(s.times().windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn manufactured_source_examples() {
        let x = [0.3, -0.1, 0.4];
        assert_eq!(manufactured_source(&ClosedForm::zero()).eval(0.7, x), 0.0);
        let bump = RadialProfile::Bump { radius: 1.0 };
        let u = ClosedForm::separable("e^-t bump", |t: Jet| (-t).exp(), bump);
        let g = manufactured_source(&u).eval(0.7, x);
        let expected = 2.0 * (-0.7f64).exp() * bump.value(x) - (-0.7f64).exp() * bump.laplacian(x);
        assert!((g - expected).abs() < 1e-14);

        let w = 2f64.sqrt();
        let plane = ClosedForm::new(
            "plane",
            Arc::new(move |t, x| (w * t).cos() * x[0].sin()),
            Arc::new(move |t, x| -w * (w * t).sin() * x[0].sin()),
            Arc::new(move |t, x| -2.0 * (w * t).cos() * x[0].sin()),
            Arc::new(move |t, x| -(w * t).cos() * x[0].sin()),
        );
        assert_eq!(manufactured_source(&plane).eval(0.9, x), 0.0);
    }

    #[test]
    fn zero_perturbation_reproduces_linear_run() {
        let g = grid();
        let u0 = RadialProfile::Bump { radius: 1.0 }.field(g).unwrap();
        let u1 = Field::zeros(g);
        let cfg = RunConfig::new(1.0);
        let a = solve_linear(&u0, &u1, &SourceSpec::zero(), &cfg).unwrap();
        let b = solve_perturbed(&u0, &u1, &PerturbationSpec::zero().hormander_admissible(), &cfg).unwrap();
        for (x, y) in a.samples.iter().zip(&b.samples) {
            assert_eq!(x.gamma_sobolev, y.gamma_sobolev);
            assert_eq!(x.u_sup, y.u_sup);
        }
    }

    #[test]
    fn unflagged_perturbation_is_rejected() {
        let g = grid();
        let z = Field::zeros(g);
        let err = solve_perturbed(&z, &z, &PerturbationSpec::zero(), &RunConfig::new(0.5)).unwrap_err();
        assert!(matches!(err, Error::Admissibility(_)));
    }

    #[test]
    fn oversized_coefficients_abort() {
        let g = grid();
        let u0 = RadialProfile::Bump { radius: 1.0 }.field(g).unwrap();
        let p = PerturbationSpec::zero().with_gamma(1, 1, |_, _| 0.3).with_gamma(2, 2, |_, _| 0.3).hormander_admissible();
        let err = solve_perturbed(&u0, &Field::zeros(g), &p, &RunConfig::new(0.5)).unwrap_err();
        assert!(matches!(err, Error::Admissibility(_)));
    }

    #[test]
    fn boundary_contact_aborts() {
        let g = Grid3::with_courant(24, 3.0, 0.25).unwrap();
        let u0 = RadialProfile::Bump { radius: 1.5 }.field(g).unwrap();
        let err = solve_linear(&u0, &Field::zeros(g), &SourceSpec::zero(), &RunConfig::new(4.0)).unwrap_err();
        assert!(matches!(err, Error::BoundaryContact { .. }), "{err}");
    }

    #[test]
    fn cone_violating_source_is_rejected() {
        let g = grid();
        let z = Field::zeros(g);
        let src = SourceSpec::new("wide", |_, x| if crate::data::norm(x) < 3.0 { 1e-3 } else { 0.0 }).cone_supported();
        assert!(matches!(solve_linear(&z, &z, &src, &RunConfig::new(0.5)), Err(Error::Support(_))));
    }

    #[test]
    fn csv_has_expected_columns() {
        let g = grid();
        let u0 = RadialProfile::Bump { radius: 1.0 }.field(g).unwrap();
        let mut cfg = RunConfig::new(0.5);
        cfg.norm_order = 1;
        let s = solve_linear(&u0, &Field::zeros(g), &SourceSpec::zero(), &cfg).unwrap();
        let mut out = Vec::new();
        s.write_csv(&mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert!(text.starts_with("t,E0,calE0,gammaSob_0,gammaSob_1,gammaSup_0,gammaSup_1,support_radius\n"));
        assert_eq!(text.lines().count(), s.samples.len() + 1);
    }
}
