//! Verdicts computed from finished runs: decay-exponent fits, the Gronwall
//! bound, the per-word energy estimate, the Hörmander bound for perturbed
//! runs and the contraction table of the iteration.
//!
//! Every constant reported here is measured on the configuration that
//! produced the input, never assumed.

use std::collections::HashMap;
use std::fmt::{self, Write as _};
use std::io::Write;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::gamma::{visit_words, MultiIndex10};
use crate::solver::{IterationReport, PerturbationSpec, RunSeries, SourceSpec};

/// Allowance for O(h²) norm errors on inequality audits.
pub const DISCRETIZATION_SLACK: f64 = 0.05;
/// Default start of the decay fit window.
pub const DEFAULT_FIT_START: f64 = 5.0;
/// Decay weight: (1+t)^{5/4}|u|_∞ stays bounded.
pub const DECAY_WEIGHT: f64 = 1.25;

#[derive(Clone, Debug, PartialEq)]
pub struct DecayFit {
    /// Least-squares slope of log|u|_∞ against log(1+t).
    pub exponent: f64,
    pub stderr: f64,
    pub t_min: f64,
    pub t_max: f64,
    pub samples: usize,
    /// max (1+t)^{5/4}|u|_∞ over the whole series.
    pub weighted_sup: f64,
    pub t_argmax: f64,
    /// Largest rise of the weighted sup after its maximum, relative to the
    /// smallest value seen since: 0 when it is non-increasing.
    pub tail_rise: f64,
    /// Some sample in the window had |u|_∞ = 0; the fit skips it.
    pub hit_zero: bool,
}

/// Fit on explicit (t, |u|_∞) pairs.
pub fn fit_power_law(times: &[f64], sups: &[f64], t_min: f64) -> Result<DecayFit> {
    if times.len() != sups.len() {
        return Err(Error::Invalid("times and sup norms differ in length".into()));
    }
    if t_min < 2.0 {
        return Err(Error::Invalid(format!("fit window must start at t ≥ 2, got {t_min}")));
    }
    let t_max = times.last().copied().unwrap_or(0.0);
    if t_max < 2.0 * t_min {
        return Err(Error::Invalid(format!("series ends at t = {t_max}, fit needs T ≥ 2·t_min = {}", 2.0 * t_min)));
    }
    let mut hit_zero = false;
    let mut pts = Vec::new();
    for (&t, &s) in times.iter().zip(sups) {
        if t < t_min - 1e-12 {
            continue;
        }
        if s <= 0.0 {
            hit_zero = true;
            continue;
        }
        pts.push(((1.0 + t).ln(), s.ln()));
    }
    if pts.len() < 10 {
        return Err(Error::Invalid(format!("decay fit needs ≥ 10 samples in the window, found {}", pts.len())));
    }
    let k = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let rss: f64 = pts.iter().map(|p| (p.1 - my - slope * (p.0 - mx)).powi(2)).sum();
    let stderr = (rss / (k - 2.0) / sxx).sqrt();

    let weighted: Vec<f64> = times.iter().zip(sups).map(|(t, s)| (1.0 + t).powf(DECAY_WEIGHT) * s).collect();
    let (arg, &weighted_sup) = weighted
        .iter()
        .enumerate()
        .fold((0, &0.0), |best, (i, w)| if *w > *best.1 { (i, w) } else { best });
    let mut tail_rise: f64 = 0.0;
    let mut low = weighted_sup;
    for &w in &weighted[arg..] {
        low = low.min(w);
        if low > 0.0 {
            tail_rise = tail_rise.max(w / low - 1.0);
        }
    }
    Ok(DecayFit {
        exponent: slope,
        stderr,
        t_min,
        t_max,
        samples: pts.len(),
        weighted_sup,
        t_argmax: times.get(arg).copied().unwrap_or(0.0),
        tail_rise,
        hit_zero,
    })
}

pub fn fit_decay(series: &RunSeries, t_min: f64) -> Result<DecayFit> {
    let sups: Vec<f64> = series.samples.iter().map(|s| s.u_sup).collect();
    fit_power_law(&series.times(), &sups, t_min)
}

/// A coefficient of u′ ≤ a u + b.
#[derive(Clone)]
pub enum Coefficient {
    Constant(f64),
    Function(Arc<dyn Fn(f64) -> f64 + Send + Sync>),
}

impl Coefficient {
    pub fn function(f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        Coefficient::Function(Arc::new(f))
    }

    pub fn eval(&self, t: f64) -> f64 {
        match self {
            Coefficient::Constant(c) => *c,
            Coefficient::Function(f) => f(t),
        }
    }

    fn constant(&self) -> Option<f64> {
        match self {
            Coefficient::Constant(c) => Some(*c),
            Coefficient::Function(_) => None,
        }
    }
}

impl fmt::Debug for Coefficient {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Coefficient::Constant(c) => write!(f, "Constant({c})"),
            Coefficient::Function(_) => f.write_str("Function"),
        }
    }
}

/// Which differential inequality the trajectory obeys.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GronwallForm {
    /// u′ ≤ a u + b
    Standard,
    /// u′ + b ≤ a u with a, b ≥ 0
    Absorbed,
}

#[derive(Clone, Debug)]
pub struct GronwallInstance {
    pub label: String,
    pub a: Coefficient,
    pub b: Coefficient,
    pub form: GronwallForm,
    /// Increasing sample times starting at 0.
    pub times: Vec<f64>,
    pub u: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GronwallCheck {
    pub case: &'static str,
    /// min over samples of bound − lhs
    pub min_margin: f64,
    /// min over samples of (bound − lhs) / max(|bound|, 1)
    pub min_relative_margin: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub enum GronwallVerdict {
    Holds(Vec<GronwallCheck>),
    Violated { check: GronwallCheck, t: f64 },
    /// The trajectory does not satisfy the differential inequality.
    Inapplicable { t: f64, excess: f64 },
}

impl GronwallVerdict {
    pub fn holds(&self) -> bool {
        matches!(self, GronwallVerdict::Holds(_))
    }
}

/// Relative tolerance on the differential inequality between samples.
const PRECONDITION_TOL: f64 = 1e-9;
const QUAD_PANELS: usize = 16;

// 5-point Gauss-Legendre on [-1, 1]
const GL_X: [f64; 5] = [0.0, -0.538_469_310_105_683_1, 0.538_469_310_105_683_1, -0.906_179_845_938_664, 0.906_179_845_938_664];
const GL_W: [f64; 5] = [
    0.568_888_888_888_888_9,
    0.478_628_670_499_366_5,
    0.478_628_670_499_366_5,
    0.236_926_885_056_189_1,
    0.236_926_885_056_189_1,
];

fn integrate(f: &dyn Fn(f64) -> f64, a: f64, b: f64) -> f64 {
    if b == a {
        return 0.0;
    }
    let w = (b - a) / QUAD_PANELS as f64;
    (0..QUAD_PANELS)
        .map(|p| {
            let mid = a + (p as f64 + 0.5) * w;
            GL_X.iter().zip(GL_W).map(|(x, wt)| wt * f(mid + 0.5 * w * x)).sum::<f64>() * 0.5 * w
        })
        .sum()
}

impl GronwallInstance {
    fn validate(&self) -> Result<()> {
        if self.times.len() != self.u.len() || self.times.is_empty() {
            return Err(Error::Invalid(format!("{}: times and trajectory must be non-empty and equal length", self.label)));
        }
        if self.times[0] != 0.0 || self.times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Invalid(format!("{}: sample times must increase from 0", self.label)));
        }
        let bad = self.times.iter().find(|&&t| !(self.a.eval(t).is_finite() && self.b.eval(t).is_finite()));
        if let Some(t) = bad {
            return Err(Error::Invalid(format!("{}: coefficients not finite at t = {t}", self.label)));
        }
        Ok(())
    }

    /// First interval where u(t_{i+1}) exceeds the equality solution
    /// started from u(t_i), i.e. the one-step Gronwall bound.
    fn precondition_violation(&self) -> Option<(f64, f64)> {
        let sign = match self.form {
            GronwallForm::Standard => 1.0,
            GronwallForm::Absorbed => -1.0,
        };
        let a = |t: f64| self.a.eval(t);
        for i in 0..self.times.len() - 1 {
            let (t0, t1) = (self.times[i], self.times[i + 1]);
            let grow = |s: f64| integrate(&a, t0, s);
            let forced = integrate(&|s| sign * self.b.eval(s) * (-grow(s)).exp(), t0, t1);
            let step = grow(t1).exp() * (self.u[i] + forced);
            let excess = self.u[i + 1] - step;
            if excess > PRECONDITION_TOL * step.abs().max(1.0) {
                return Some((t1, excess));
            }
        }
        None
    }
}

/// Checks u(t) ≤ e^{A(t)}u(0) + ∫₀ᵗ b(s)e^{A(t)−A(s)} ds at every sample,
/// and each special case whose hypotheses the instance meets.
pub fn gronwall_verify(inst: &GronwallInstance) -> Result<GronwallVerdict> {
    inst.validate()?;
    if let Some((t, excess)) = inst.precondition_violation() {
        return Ok(GronwallVerdict::Inapplicable { t, excess });
    }
    if inst.form == GronwallForm::Absorbed {
        let neg = inst.times.iter().find(|&&t| inst.a.eval(t) < 0.0 || inst.b.eval(t) < 0.0);
        if let Some(&t) = neg {
            return Ok(GronwallVerdict::Inapplicable { t, excess: inst.a.eval(t).min(inst.b.eval(t)) });
        }
    }
    let a = |t: f64| inst.a.eval(t);
    let b = |t: f64| inst.b.eval(t);
    // primitives at the samples
    let mut big_a = vec![0.0];
    let mut big_b = vec![0.0];
    // ∫₀ᵗ b e^{−A}
    let mut weighted_b = vec![0.0];
    for w in inst.times.windows(2) {
        let a0 = *big_a.last().unwrap();
        let inner = |s: f64| a0 + integrate(&a, w[0], s);
        big_a.push(a0 + integrate(&a, w[0], w[1]));
        big_b.push(big_b.last().unwrap() + integrate(&b, w[0], w[1]));
        weighted_b.push(weighted_b.last().unwrap() + integrate(&|s| b(s) * (-inner(s)).exp(), w[0], w[1]));
    }
    let u0 = inst.u[0];
    let mut cases: Vec<(&'static str, Box<dyn Fn(usize) -> (f64, f64)>)> = Vec::new();
    match inst.form {
        GronwallForm::Standard => {
            let (ba, wb) = (big_a.clone(), weighted_b.clone());
            cases.push(("general", Box::new(move |i| (ba[i].exp() * (u0 + wb[i]), 0.0))));
            if inst.b.constant() == Some(0.0) {
                let ba = big_a.clone();
                cases.push(("b = 0", Box::new(move |i| (u0 * ba[i].exp(), 0.0))));
            }
            if let Some(ac) = inst.a.constant() {
                let times = inst.times.clone();
                match inst.b.constant() {
                    Some(bc) => cases.push((
                        "a, b constant",
                        Box::new(move |i| {
                            let t = times[i];
                            let growth = if ac == 0.0 { bc * t } else { bc / ac * (ac * t).exp_m1() };
                            (u0 * (ac * t).exp() + growth, 0.0)
                        }),
                    )),
                    None => {
                        let bf = inst.b.clone();
                        cases.push((
                            "a constant",
                            Box::new(move |i| {
                                let t = times[i];
                                (u0 * (ac * t).exp() + integrate(&|s| (ac * (t - s)).exp() * bf.eval(s), 0.0, t), 0.0)
                            }),
                        ))
                    }
                }
            }
        }
        GronwallForm::Absorbed => {
            let (ba, bb) = (big_a.clone(), big_b.clone());
            cases.push(("absorbed", Box::new(move |i| (u0 * ba[i].exp(), bb[i]))));
        }
    }
    let mut checks = Vec::new();
    for (case, bound) in &cases {
        let mut check = GronwallCheck { case, min_margin: f64::INFINITY, min_relative_margin: f64::INFINITY };
        let mut worst_t = 0.0;
        for (i, &t) in inst.times.iter().enumerate() {
            let (rhs, extra) = bound(i);
            let margin = rhs - (inst.u[i] + extra);
            let rel = margin / rhs.abs().max(1.0);
            if rel < check.min_relative_margin {
                worst_t = t;
            }
            check.min_margin = check.min_margin.min(margin);
            check.min_relative_margin = check.min_relative_margin.min(rel);
        }
        if check.min_relative_margin < -1e-8 {
            return Ok(GronwallVerdict::Violated { check, t: worst_t });
        }
        checks.push(check);
    }
    Ok(GronwallVerdict::Holds(checks))
}

/// u′ = a u + b (or u′ = a u − b for the absorbed form) by RK4 with `substeps`
/// steps per sample interval.
pub fn integrate_equality(a: &Coefficient, b: &Coefficient, form: GronwallForm, u0: f64, times: &[f64], substeps: usize) -> Vec<f64> {
    let sign = if form == GronwallForm::Standard { 1.0 } else { -1.0 };
    let f = |t: f64, u: f64| a.eval(t) * u + sign * b.eval(t);
    let mut out = vec![u0];
    let mut u = u0;
    for w in times.windows(2) {
        let dt = (w[1] - w[0]) / substeps as f64;
        for k in 0..substeps {
            let t = w[0] + k as f64 * dt;
            let k1 = f(t, u);
            let k2 = f(t + 0.5 * dt, u + 0.5 * dt * k1);
            let k3 = f(t + 0.5 * dt, u + 0.5 * dt * k2);
            let k4 = f(t + dt, u + dt * k3);
            u += dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        }
        out.push(u);
    }
    out
}

#[derive(Clone, Debug, PartialEq)]
pub struct EnergyLedgerRow {
    pub t: f64,
    pub word: MultiIndex10,
    /// 𝓔(Γ^α u(t))
    pub lhs: f64,
    /// 𝓔(Γ^α u(0)) + ∫₀ᵗ ‖Γ^α g‖_{L²}
    pub rhs: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EnergyLedger {
    pub order: usize,
    pub rows: Vec<EnergyLedgerRow>,
    /// (t, Σ lhs, Σ rhs) per sample.
    pub summed: Vec<(f64, f64, f64)>,
    /// min over samples of (Σrhs − Σlhs)/Σrhs.
    pub worst_summed_slack: f64,
    /// min over samples and words of (rhs − lhs)/Σrhs at that sample.
    pub worst_word_slack: f64,
}

impl EnergyLedger {
    pub fn passes(&self) -> bool {
        self.worst_summed_slack >= -DISCRETIZATION_SLACK && self.worst_word_slack >= -DISCRETIZATION_SLACK
    }

    /// Columns t, word, lhs, rhs, slack (slack relative to the summed rhs).
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "t,word,lhs,rhs,slack")?;
        let totals: HashMap<u64, f64> = self.summed.iter().map(|s| (s.0.to_bits(), s.2)).collect();
        for r in &self.rows {
            let total = totals[&r.t.to_bits()];
            let slack = if total > 0.0 { (r.rhs - r.lhs) / total } else { 0.0 };
            writeln!(w, "{:.6},{},{:.12e},{:.12e},{:.6e}", r.t, r.word.label(), r.lhs, r.rhs, slack)?;
        }
        Ok(())
    }
}

fn trapezoid(times: &[f64], values: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0];
    for i in 1..times.len() {
        out.push(out[i - 1] + 0.5 * (times[i] - times[i - 1]) * (values[i] + values[i - 1]));
    }
    out
}

/// Per-word ledger of 𝓔(Γ^α u(t)) ≤ 𝓔(Γ^α u(0)) + ∫₀ᵗ ‖Γ^α g‖_{L²} for
/// |α| ≤ order. Needs a run recorded with the word ledger at order ≥ `order`.
pub fn audit_energy_estimate(series: &RunSeries, g: &SourceSpec, order: usize) -> Result<EnergyLedger> {
    let cfg = &series.config;
    if !cfg.word_ledger || cfg.norm_order < order {
        return Err(Error::Invalid(format!(
            "energy audit at N = {order} needs a run with the word ledger at order ≥ {order}"
        )));
    }
    if series.samples.is_empty() {
        return Err(Error::Invalid("empty run series".into()));
    }
    let all = MultiIndex10::enumerate(cfg.norm_order);
    let picked: Vec<(usize, MultiIndex10)> = all.iter().copied().enumerate().filter(|(_, a)| a.size() <= order).collect();
    let times = series.times();

    // ‖Γ^α g(t)‖_{L²} per sample, in the run's ordering
    let mut source_norms: Vec<HashMap<MultiIndex10, f64>> = Vec::with_capacity(times.len());
    for &t in &times {
        let mut found = HashMap::new();
        if !g.is_zero() {
            let w = g.window(series.grid, t, order)?;
            visit_words(&w, order, &cfg.ordering, 0, |alpha, win| {
                found.insert(*alpha, win.center().l2_norm());
                Ok(())
            })?;
        }
        source_norms.push(found);
    }

    let mut rows = Vec::new();
    let mut per_sample: Vec<Vec<(f64, f64)>> = vec![Vec::new(); times.len()];
    for &(idx, alpha) in &picked {
        let norms: Vec<f64> = source_norms.iter().map(|m| m.get(&alpha).copied().unwrap_or(0.0)).collect();
        let integral = trapezoid(&times, &norms);
        let e0 = series.samples[0].word_energies[idx];
        for (i, s) in series.samples.iter().enumerate() {
            let row = EnergyLedgerRow { t: s.t, word: alpha, lhs: s.word_energies[idx], rhs: e0 + integral[i] };
            per_sample[i].push((row.lhs, row.rhs));
            rows.push(row);
        }
    }
    let mut summed = Vec::new();
    let mut worst_summed_slack = f64::INFINITY;
    let mut worst_word_slack = f64::INFINITY;
    for (i, &t) in times.iter().enumerate() {
        let lhs: f64 = per_sample[i].iter().map(|p| p.0).sum();
        let rhs: f64 = per_sample[i].iter().map(|p| p.1).sum();
        summed.push((t, lhs, rhs));
        if rhs > 0.0 {
            worst_summed_slack = worst_summed_slack.min((rhs - lhs) / rhs);
            for p in &per_sample[i] {
                worst_word_slack = worst_word_slack.min((p.1 - p.0) / rhs);
            }
        } else if lhs > 0.0 {
            worst_summed_slack = f64::NEG_INFINITY;
        }
    }
    if worst_summed_slack == f64::INFINITY {
        worst_summed_slack = 0.0;
        worst_word_slack = 0.0;
    }
    Ok(EnergyLedger { order, rows, summed, worst_summed_slack, worst_word_slack })
}

#[derive(Clone, Debug, PartialEq)]
pub struct HormanderRow {
    pub t: f64,
    pub energy: f64,
    pub modified_energy_sq: f64,
    /// Γ(t) = Σ sup|∂_i γ^{jk}|
    pub gamma_rate: f64,
    pub gamma_integral: f64,
    pub forcing_integral: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct HormanderLedger {
    pub rows: Vec<HormanderRow>,
    /// max |𝓔₊² − 𝓔²| / 𝓔²
    pub sandwich_ratio: f64,
    /// Smallest C ≥ 1 with 𝓔(t) ≤ C(𝓔(0) + ∫‖f‖)exp(C∫Γ) at every sample.
    pub constant: f64,
}

/// Quadrature allowance on the sandwich inequality.
pub const SANDWICH_SLACK: f64 = 0.01;
/// Largest accepted measured constant in the exponential bound.
pub const HORMANDER_MAX_CONSTANT: f64 = 4.0;

impl HormanderLedger {
    pub fn sandwich_holds(&self) -> bool {
        self.sandwich_ratio <= 0.5 * (1.0 + SANDWICH_SLACK)
    }

    pub fn passes(&self) -> bool {
        self.sandwich_holds() && self.constant <= HORMANDER_MAX_CONSTANT
    }

    /// Columns t, E, Eplus_sq, Gamma, int_Gamma, int_f, bound.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "t,E,Eplus_sq,Gamma,int_Gamma,int_f,bound")?;
        let e0 = self.rows.first().map_or(0.0, |r| r.energy);
        for r in &self.rows {
            let bound = hormander_bound(self.constant, e0, r);
            writeln!(
                w,
                "{:.6},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e}",
                r.t, r.energy, r.modified_energy_sq, r.gamma_rate, r.gamma_integral, r.forcing_integral, bound
            )?;
        }
        Ok(())
    }
}

fn hormander_bound(c: f64, e0: f64, r: &HormanderRow) -> f64 {
    c * (e0 + r.forcing_integral) * (c * r.gamma_integral).exp()
}

/// Both sides of the Hörmander estimate along a perturbed run.
pub fn audit_hormander(series: &RunSeries, spec: &PerturbationSpec) -> Result<HormanderLedger> {
    let grid = series.grid;
    let times = series.times();
    if times.is_empty() {
        return Err(Error::Invalid("empty run series".into()));
    }
    let rates: Vec<f64> = times.iter().map(|&t| spec.gamma_rate(&grid, t)).collect();
    let forcing: Vec<f64> =
        times.iter().map(|&t| spec.forcing.sample(grid, t).map(|f| f.l2_norm())).collect::<Result<_>>()?;
    let gi = trapezoid(&times, &rates);
    let fi = trapezoid(&times, &forcing);
    let mut rows = Vec::new();
    let mut sandwich_ratio: f64 = 0.0;
    for (i, s) in series.samples.iter().enumerate() {
        let e = s.energy();
        let plus = s.modified_energy_sq.ok_or_else(|| Error::Invalid("run did not record the modified energy".into()))?;
        if e > 0.0 {
            sandwich_ratio = sandwich_ratio.max((plus - e * e).abs() / (e * e));
        }
        rows.push(HormanderRow {
            t: s.t,
            energy: e,
            modified_energy_sq: plus,
            gamma_rate: rates[i],
            gamma_integral: gi[i],
            forcing_integral: fi[i],
        });
    }
    let e0 = rows[0].energy;
    let holds = |c: f64| rows.iter().all(|r| r.energy <= hormander_bound(c, e0, r));
    let constant = if holds(1.0) {
        1.0
    } else {
        let mut hi = 2.0;
        while !holds(hi) {
            hi *= 2.0;
            if hi > 1e6 {
                return Ok(HormanderLedger { rows, sandwich_ratio, constant: f64::INFINITY });
            }
        }
        let mut lo = hi / 2.0;
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if holds(mid) {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        hi
    };
    Ok(HormanderLedger { rows, sandwich_ratio, constant })
}

#[derive(Clone, Debug, PartialEq)]
pub struct IterateRow {
    pub index: usize,
    /// ‖w_n‖_N
    pub sobolev: f64,
    /// |w_n|_{5/4,N}
    pub weighted_sup: f64,
    /// max_t (support radius − data radius − t) in cells
    pub support_excess: f64,
    /// ‖w_n − w_{n−1}‖ for n ≥ 1.
    pub difference: Option<f64>,
    pub ratio: Option<f64>,
    /// ‖w_n‖_N / (Δ_N + |w_n|_N·‖w_{n−1}‖_N)
    pub energy_constant: Option<f64>,
    /// |w_n|_{5/4,N} / (Δ_N + |w_{n−1}|‖w_n‖ + |w_n|‖w_{n−1}‖)
    pub decay_constant: Option<f64>,
    pub finite_speed: bool,
    pub decay_bound: bool,
    pub energy_bound: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct IterationAudit {
    pub order: usize,
    pub eps: f64,
    /// Measured K = 2·max(|w₀|_{5/4,N}, ‖w₀‖_N)/ε.
    pub k: f64,
    /// Δ_N of the data.
    pub delta: f64,
    pub rows: Vec<IterateRow>,
    /// Allowed support excess in cells for the finite-speed condition.
    pub support_cells: f64,
}

impl IterationAudit {
    pub fn max_ratio(&self) -> f64 {
        self.rows.iter().filter_map(|r| r.ratio).fold(0.0, f64::max)
    }

    pub fn conditions_hold(&self) -> bool {
        self.rows.iter().all(|r| r.finite_speed && r.decay_bound && r.energy_bound)
    }
}

/// Contraction table with measured constants; `eps` is the data amplitude.
pub fn audit_iteration(report: &IterationReport, eps: f64, support_cells: f64) -> Result<IterationAudit> {
    let its = &report.iterates;
    if its.len() < 3 {
        return Err(Error::Invalid(format!("iteration audit needs ≥ 3 iterates, got {}", its.len())));
    }
    if !(eps > 0.0) {
        return Err(Error::Invalid(format!("eps must be positive, got {eps}")));
    }
    let order = its[0].samples.first().map_or(0, |s| s.gamma_sobolev.len().saturating_sub(1));
    let sob = |s: &RunSeries| s.samples.iter().map(|x| x.gamma_sobolev[order]).fold(0.0, f64::max);
    let wsup = |s: &RunSeries| {
        s.samples.iter().map(|x| (1.0 + x.t).powf(DECAY_WEIGHT) * x.gamma_sup[order]).fold(0.0, f64::max)
    };
    let delta = its[0].samples[0].gamma_sobolev[order];
    let k = 2.0 * wsup(&its[0]).max(sob(&its[0])) / eps;
    let mut rows = Vec::new();
    for (n, s) in its.iter().enumerate() {
        let (norm, weighted) = (sob(s), wsup(s));
        let excess = s.support_excess();
        let (mut ec, mut dc) = (None, None);
        if n > 0 {
            let (pn, pw) = (sob(&its[n - 1]), wsup(&its[n - 1]));
            ec = Some(norm / (delta + weighted * pn));
            dc = Some(weighted / (delta + pw * norm + weighted * pn));
        }
        rows.push(IterateRow {
            index: n,
            sobolev: norm,
            weighted_sup: weighted,
            support_excess: excess,
            difference: n.checked_sub(1).map(|i| report.differences[i]),
            ratio: n.checked_sub(2).map(|i| report.ratios[i]),
            energy_constant: ec,
            decay_constant: dc,
            finite_speed: excess <= support_cells,
            decay_bound: weighted <= k * eps,
            energy_bound: norm <= k * eps,
        });
    }
    Ok(IterationAudit { order, eps, k, delta, rows, support_cells })
}

/// Structured `key: value` block.
pub fn verdict_block(title: &str, entries: &[(&str, String)]) -> String {
    let mut out = format!("[{title}]\n");
    for (k, v) in entries {
        let _ = writeln!(out, "{k}: {v}");
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn power_law(p: f64) -> (Vec<f64>, Vec<f64>) {
        let times: Vec<f64> = (0..=160).map(|i| i as f64 * 0.1).collect();
        let sups = times.iter().map(|t| (1.0 + t).powf(p)).collect();
        (times, sups)
    }

    #[test]
    fn exact_power_laws_are_recovered() {
        for p in [-1.25, -1.5] {
            let (t, s) = power_law(p);
            let fit = fit_power_law(&t, &s, 5.0).unwrap();
            assert!((fit.exponent - p).abs() < 1e-6, "{fit:?}");
            assert!(!fit.hit_zero);
        }
        let (t, s) = power_law(-1.25);
        let fit = fit_power_law(&t, &s, 5.0).unwrap();
        assert!((fit.weighted_sup - 1.0).abs() < 1e-12 && fit.tail_rise < 1e-12);
    }

    #[test]
    fn fit_preconditions() {
        let (t, s) = power_law(-1.0);
        assert!(fit_power_law(&t, &s, 1.0).is_err());
        assert!(fit_power_law(&t, &s, 9.0).is_err());
        let mut z = s.clone();
        z[100] = 0.0;
        assert!(fit_power_law(&t, &z, 5.0).unwrap().hit_zero);
    }

    fn instance(a: Coefficient, b: Coefficient, form: GronwallForm, u0: f64) -> GronwallInstance {
        let times: Vec<f64> = (0..=50).map(|i| i as f64 * 0.1).collect();
        let u = integrate_equality(&a, &b, form, u0, &times, 400);
        GronwallInstance { label: "test".into(), a, b, form, times, u }
    }

    fn margins(v: &GronwallVerdict) -> Vec<f64> {
        match v {
            GronwallVerdict::Holds(c) => c.iter().map(|c| c.min_relative_margin).collect(),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn equality_families_have_zero_margin() {
        use Coefficient::Constant as C;
        let cases = [
            instance(C(0.0), C(0.0), GronwallForm::Standard, 2.0),
            instance(C(1.0), C(0.0), GronwallForm::Standard, 1.5),
            instance(C(0.5), C(0.3), GronwallForm::Standard, 1.0),
            instance(C(-0.7), Coefficient::function(|t| t.cos()), GronwallForm::Standard, 1.0),
        ];
        for inst in &cases {
            for m in margins(&gronwall_verify(inst).unwrap()) {
                assert!(m.abs() < 1e-8, "{m}");
            }
        }
    }

    #[test]
    fn strict_solutions_keep_positive_margin() {
        let a = Coefficient::function(|t| t.sin().powi(2));
        let b = Coefficient::Constant(0.1);
        let mut inst = instance(a, b, GronwallForm::Standard, 1.0);
        // u′ = a u + b − 0.05 stays below the bound
        inst.u = integrate_equality(&inst.a, &Coefficient::Constant(0.05), GronwallForm::Standard, 1.0, &inst.times, 400);
        assert!(margins(&gronwall_verify(&inst).unwrap()).iter().all(|&m| m >= 0.0));
    }

    #[test]
    fn absorbed_form() {
        let inst = instance(Coefficient::Constant(0.4), Coefficient::Constant(0.2), GronwallForm::Absorbed, 3.0);
        for m in margins(&gronwall_verify(&inst).unwrap()) {
            assert!(m >= -1e-8);
        }
        let neg = instance(Coefficient::Constant(-0.4), Coefficient::Constant(0.2), GronwallForm::Absorbed, 3.0);
        assert!(matches!(gronwall_verify(&neg).unwrap(), GronwallVerdict::Inapplicable { .. }));
    }

    #[test]
    fn trajectories_breaking_the_inequality_are_inapplicable() {
        let mut inst = instance(Coefficient::Constant(0.0), Coefficient::Constant(0.0), GronwallForm::Standard, 1.0);
        inst.u = inst.times.iter().map(|t| 1.0 + t).collect();
        assert!(matches!(gronwall_verify(&inst).unwrap(), GronwallVerdict::Inapplicable { .. }));
    }
}
