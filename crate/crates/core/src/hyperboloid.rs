//! Pseudospherical coordinates t′ = ρ cosh θ, x = ρ sinh θ (sin φ cos ψ, sin φ sin ψ, cos φ)
//! about the shifted origin t′ = t + 2, where the data surface t = 0 sits at t′ = 2.
//!
//! In these coordinates □₁u = g reads ∂_ρ²u + (3/ρ)∂_ρu + u = ρ^{−2}Δ_H u + g with
//! Δ_H = ΣΩ₀ᵢ² − (Ω₁₂² + Ω₂₃² + Ω₃₁²). Since ρ∂_ρ = S = t′∂_t + x·∂, the residual
//! is evaluated as (S²u + 2Su − Δ_H u)/ρ² + u − g with nested centered differences.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::norm;
use crate::error::{Error, Result};
use crate::fields::{FieldWindow, Grid3};
use crate::gamma::{scaling_field, CompiledOp, GammaOp, Generator};
use crate::norms::spacetime_norms;
use crate::solver::{RunObserver, RunSeries, SourceSpec};

/// Chart conditioning bound on θ.
pub const THETA_MAX: f64 = 5.0;
/// t′ = t + APEX_SHIFT.
pub const APEX_SHIFT: f64 = 2.0;
/// Largest ρ step for Duhamel quadrature along a ray.
pub const MAX_RAY_STEP: f64 = 0.05;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PseudoSphericalPoint {
    pub rho: f64,
    pub theta: f64,
    pub phi: f64,
    pub psi: f64,
}

/// Chart coordinates of (t′, x); requires t′ > |x|.
pub fn to_pseudospherical(t: f64, x: [f64; 3]) -> Result<PseudoSphericalPoint> {
    let r = norm(x);
    if !(t > r) {
        return Err(Error::OutsideCone { t, r });
    }
    let rho = ((t - r) * (t + r)).sqrt();
    let theta = (r / rho).asinh();
    if r == 0.0 {
        return Ok(PseudoSphericalPoint { rho, theta: 0.0, phi: 0.0, psi: 0.0 });
    }
    let phi = (x[2] / r).clamp(-1.0, 1.0).acos();
    let mut psi = x[1].atan2(x[0]);
    if psi < 0.0 {
        psi += std::f64::consts::TAU;
    }
    Ok(PseudoSphericalPoint { rho, theta, phi, psi })
}

pub fn from_pseudospherical(p: PseudoSphericalPoint) -> (f64, [f64; 3]) {
    let s = p.rho * p.theta.sinh();
    (p.rho * p.theta.cosh(), [s * p.phi.sin() * p.psi.cos(), s * p.phi.sin() * p.psi.sin(), s * p.phi.cos()])
}

/// |∂(t′, x)/∂(ρ, θ, φ, ψ)| = ρ³ sinh²θ sin φ.
pub fn jacobian(p: PseudoSphericalPoint) -> f64 {
    p.rho.powi(3) * p.theta.sinh().powi(2) * p.phi.sin()
}

struct Operators {
    scaling: CompiledOp,
    boosts: [CompiledOp; 3],
    rotations: [CompiledOp; 3],
}

fn operators() -> &'static Operators {
    static OPS: std::sync::OnceLock<Operators> = std::sync::OnceLock::new();
    OPS.get_or_init(|| {
        let c = |op: GammaOp| CompiledOp::new(&op).expect("first order");
        Operators {
            scaling: c(scaling_field()),
            boosts: [Generator::Boost1, Generator::Boost2, Generator::Boost3].map(|g| c(g.op())),
            rotations: [Generator::Omega12, Generator::Omega23, Generator::Omega31].map(|g| c(g.op())),
        }
    })
}

/// Node-level access to a window for nested pointwise operators.
struct Stencil<'a> {
    window: &'a FieldWindow,
    grid: Grid3,
}

impl Stencil<'_> {
    fn value(&self, node: [isize; 3], level: isize) -> f64 {
        let n = self.grid.n() as isize;
        if node.iter().any(|&c| c < 0 || c >= n) {
            return 0.0;
        }
        self.window.level(level).at(node[0] as usize, node[1] as usize, node[2] as usize)
    }

    fn x(&self, node: [isize; 3]) -> [f64; 3] {
        node.map(|c| -self.grid.half_width() + c as f64 * self.grid.h())
    }

    /// ops[0](ops[1](...u)) at a node, coefficients in shifted time.
    fn nested(&self, ops: &[&CompiledOp], node: [isize; 3], level: isize) -> f64 {
        let Some((first, rest)) = ops.split_first() else {
            return self.value(node, level);
        };
        let t = self.window.time_at(level) + APEX_SHIFT;
        first.eval_point(t, self.x(node), self.grid.h(), self.grid.dt(), &|off, l| {
            self.nested(rest, [node[0] + off[0], node[1] + off[1], node[2] + off[2]], level + l)
        })
    }

    fn hyperbolic_laplacian(&self, node: [isize; 3], level: isize) -> f64 {
        let ops = operators();
        let b: f64 = ops.boosts.iter().map(|o| self.nested(&[o, o], node, level)).sum();
        let r: f64 = ops.rotations.iter().map(|o| self.nested(&[o, o], node, level)).sum();
        b - r
    }

    fn scaling(&self, node: [isize; 3], level: isize) -> f64 {
        self.nested(&[&operators().scaling], node, level)
    }

    fn scaling_sq(&self, node: [isize; 3], level: isize) -> f64 {
        let s = &operators().scaling;
        self.nested(&[s, s], node, level)
    }
}

/// A space-time point in solver time.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SamplePoint {
    pub t: f64,
    pub x: [f64; 3],
}

/// Seeded residual sample points: nodes of `grid` at the given snapshot
/// times with |x| < `radius` and θ within the conditioning bound.
pub fn residual_sample_points(grid: &Grid3, times: &[f64], per_time: usize, radius: f64, seed: u64) -> Vec<SamplePoint> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = grid.n();
    let mut out = Vec::new();
    for &t in times {
        let mut found = 0;
        let mut tries = 0;
        while found < per_time && tries < 100 * per_time {
            tries += 1;
            let node = [0; 3].map(|_: usize| rng.gen_range(3..n - 3));
            let x = node.map(|i| grid.coord(i));
            if norm(x) >= radius {
                continue;
            }
            let Ok(p) = to_pseudospherical(t + APEX_SHIFT, x) else { continue };
            if p.theta > THETA_MAX {
                continue;
            }
            out.push(SamplePoint { t, x });
            found += 1;
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq)]
pub struct ResidualStats {
    pub points: usize,
    pub max: f64,
    pub rms: f64,
}

fn locate(grid: &Grid3, x: [f64; 3]) -> Result<[isize; 3]> {
    let h = grid.h();
    let node = x.map(|c| ((c + grid.half_width()) / h).round() as isize);
    for (a, &i) in node.iter().enumerate() {
        let off = (-grid.half_width() + i as f64 * h - x[a]).abs();
        if off > 1e-9 * h.max(1.0) || i < 2 || i >= grid.n() as isize - 2 {
            return Err(Error::Invalid(format!("point {x:?} is not an interior node of the grid")));
        }
    }
    Ok(node)
}

/// Residual of the ρ-form of the equation at each point, from snapshot
/// windows of radius ≥ 2 centered at the point's time.
pub fn transformed_residual(run: &RunSeries, points: &[SamplePoint], source: &SourceSpec) -> Result<ResidualStats> {
    let grid = run.grid;
    let mut max: f64 = 0.0;
    let mut sq = 0.0;
    for p in points {
        let tp = p.t + APEX_SHIFT;
        let chart = to_pseudospherical(tp, p.x)?;
        if chart.theta > THETA_MAX {
            return Err(Error::Conditioning(chart.theta));
        }
        let window = run
            .snapshots
            .iter()
            .find(|w| (w.center_time() - p.t).abs() < 0.5 * grid.dt())
            .ok_or_else(|| Error::Invalid(format!("no snapshot at t = {}", p.t)))?;
        window.require(2)?;
        let st = Stencil { window, grid };
        let node = locate(&grid, p.x)?;
        let u = st.value(node, 0);
        let rho2 = chart.rho * chart.rho;
        let r = (st.scaling_sq(node, 0) + 2.0 * st.scaling(node, 0) - st.hyperbolic_laplacian(node, 0)) / rho2 + u
            - source.eval(p.t, p.x);
        max = max.max(r.abs());
        sq += r * r;
    }
    let rms = if points.is_empty() { 0.0 } else { (sq / points.len() as f64).sqrt() };
    Ok(ResidualStats { points: points.len(), max, rms })
}

/// A fixed direction on the unit hyperboloid: (cosh θ, sinh θ·ω̂).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RayDirection {
    pub theta: f64,
    pub phi: f64,
    pub psi: f64,
}

impl RayDirection {
    pub fn point(&self, rho: f64) -> (f64, [f64; 3]) {
        from_pseudospherical(PseudoSphericalPoint { rho, theta: self.theta, phi: self.phi, psi: self.psi })
    }

    /// ρ of the ray's point on the data surface t′ = 2.
    pub fn rho0(&self) -> f64 {
        APEX_SHIFT / self.theta.cosh()
    }
}

/// Fields sampled along one ray.
#[derive(Clone, Debug, PartialEq)]
pub struct RaySamples {
    pub direction: RayDirection,
    pub rho: Vec<f64>,
    pub u: Vec<f64>,
    /// S u = ρ∂_ρ u
    pub scaling: Vec<f64>,
    /// Δ_H u
    pub hyperbolic_laplacian: Vec<f64>,
    /// g at the ray points
    pub source: Vec<f64>,
}

/// Observer collecting [`RaySamples`] while a run advances. Ray points are
/// interpolated linearly in time and trilinearly in space.
pub struct RaySampler {
    rays: Vec<RaySamples>,
    source: SourceSpec,
    next: Vec<usize>,
}

impl RaySampler {
    /// Rays from their data-surface point out to t = `t_final`, step `d_rho`.
    /// Needs ρ₀ ≥ 1 (cosh θ ≤ 2) and `d_rho` ≤ 0.05.
    pub fn new(directions: &[RayDirection], d_rho: f64, t_final: f64, source: SourceSpec) -> Result<Self> {
        if !(d_rho > 0.0 && d_rho <= MAX_RAY_STEP) {
            return Err(Error::Invalid(format!("ray step {d_rho} outside (0, {MAX_RAY_STEP}]")));
        }
        if let Some(d) = directions.iter().find(|d| !(d.theta >= 0.0 && d.rho0() >= 1.0)) {
            return Err(Error::Invalid(format!("ray θ = {} starts below ρ = 1", d.theta)));
        }
        let rays: Vec<RaySamples> = directions
            .iter()
            .map(|d| {
                let rho0 = d.rho0();
                let rho_max = (t_final + APEX_SHIFT) / d.theta.cosh();
                let count = ((rho_max - rho0) / d_rho).floor() as usize;
                RaySamples {
                    direction: *d,
                    rho: (0..=count).map(|i| rho0 + i as f64 * d_rho).collect(),
                    u: Vec::new(),
                    scaling: Vec::new(),
                    hyperbolic_laplacian: Vec::new(),
                    source: Vec::new(),
                }
            })
            .collect();
        let next = vec![0; rays.len()];
        Ok(RaySampler { rays, source, next })
    }

    pub fn into_rays(self) -> Vec<RaySamples> {
        self.rays
    }

    fn sample(&self, w: &FieldWindow, t: f64, x: [f64; 3]) -> Result<[f64; 3]> {
        let grid = *w.grid();
        let st = Stencil { window: w, grid };
        let h = grid.h();
        let s = (t - w.center_time()) / grid.dt();
        let base = x.map(|c| ((c + grid.half_width()) / h).floor() as isize);
        let frac: Vec<f64> = (0..3).map(|a| (x[a] + grid.half_width()) / h - base[a] as f64).collect();
        if base.iter().any(|&b| b < 3 || b + 4 > grid.n() as isize) {
            return Err(Error::Invalid(format!("ray point {x:?} too close to the boundary")));
        }
        let mut out = [0.0; 3];
        for (level, wt) in [(0isize, 1.0 - s), (1, s)] {
            if wt == 0.0 {
                continue;
            }
            for corner in 0..8 {
                let off = [(corner >> 2) & 1, (corner >> 1) & 1, corner & 1];
                let weight: f64 =
                    (0..3).map(|a| if off[a] == 1 { frac[a] } else { 1.0 - frac[a] }).product::<f64>() * wt;
                if weight == 0.0 {
                    continue;
                }
                let node = [base[0] + off[0] as isize, base[1] + off[1] as isize, base[2] + off[2] as isize];
                out[0] += weight * st.value(node, level);
                out[1] += weight * st.scaling(node, level);
                out[2] += weight * st.hyperbolic_laplacian(node, level);
            }
        }
        Ok(out)
    }
}

impl RunObserver for RaySampler {
    fn radius(&self) -> usize {
        3
    }

    fn observe(&mut self, window: &FieldWindow) -> Result<()> {
        let t0 = window.center_time();
        let dt = window.dt();
        for r in 0..self.rays.len() {
            loop {
                let i = self.next[r];
                let Some(&rho) = self.rays[r].rho.get(i) else { break };
                let (tp, x) = self.rays[r].direction.point(rho);
                let t = (tp - APEX_SHIFT).max(0.0);
                if t >= t0 + dt {
                    break;
                }
                let [u, su, dh] = self.sample(window, t.max(t0), x)?;
                let ray = &mut self.rays[r];
                ray.u.push(u);
                ray.scaling.push(su);
                ray.hyperbolic_laplacian.push(dh);
                ray.source.push(self.source.eval(t, x));
                self.next[r] += 1;
            }
        }
        Ok(())
    }
}

/// v = ρ^{3/2}u with the forcing h = h₁ + h₂ of ∂_ρ²v + v = h.
#[derive(Clone, Debug, PartialEq)]
pub struct ReducedRay {
    pub rho: Vec<f64>,
    pub v: Vec<f64>,
    /// ∂_ρ v
    pub dv: Vec<f64>,
    /// ρ^{−1/2}(Δ_H u + ¾u)
    pub h1: Vec<f64>,
    /// ρ^{3/2} g
    pub h2: Vec<f64>,
}

impl ReducedRay {
    pub fn h(&self) -> Vec<f64> {
        self.h1.iter().zip(&self.h2).map(|(a, b)| a + b).collect()
    }
}

pub fn reduce_to_v(ray: &RaySamples) -> ReducedRay {
    let k = ray.u.len();
    let rho = ray.rho[..k].to_vec();
    let v = rho.iter().zip(&ray.u).map(|(r, u)| r.powf(1.5) * u).collect();
    // ∂_ρ v = ρ^{1/2}(S u + 3/2 u)
    let dv = (0..k).map(|i| rho[i].sqrt() * (ray.scaling[i] + 1.5 * ray.u[i])).collect();
    let h1 = (0..k).map(|i| (ray.hyperbolic_laplacian[i] + 0.75 * ray.u[i]) / rho[i].sqrt()).collect();
    let h2 = (0..k).map(|i| rho[i].powf(1.5) * ray.source[i]).collect();
    ReducedRay { rho, v, dv, h1, h2 }
}

/// v(ρ) = cos(ρ−ρ₀)v₀ + sin(ρ−ρ₀)v₀′ + ∫_{ρ₀}^{ρ} sin(ρ−λ)h(λ)dλ on the grid
/// `rho` (first entry ρ₀), trapezoid rule.
pub fn duhamel_solve(rho: &[f64], h: &[f64], v0: f64, v0prime: f64) -> Vec<f64> {
    let Some(&rho0) = rho.first() else { return Vec::new() };
    (0..rho.len())
        .map(|i| {
            let r = rho[i];
            let mut integral = 0.0;
            for j in 0..i {
                let (a, b) = (rho[j], rho[j + 1]);
                integral += 0.5 * (b - a) * ((r - a).sin() * h[j] + (r - b).sin() * h[j + 1]);
            }
            (r - rho0).cos() * v0 + (r - rho0).sin() * v0prime + integral
        })
        .collect()
}

/// Columns rho, u, v, h1, h2, v_duhamel.
pub fn write_ray_csv<W: Write>(mut w: W, ray: &RaySamples) -> Result<()> {
    let red = reduce_to_v(ray);
    let duh = match red.v.first() {
        Some(&v0) => duhamel_solve(&red.rho, &red.h(), v0, red.dv[0]),
        None => Vec::new(),
    };
    writeln!(w, "rho,u,v,h1,h2,v_duhamel")?;
    for i in 0..red.rho.len() {
        writeln!(
            w,
            "{:.6},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e}",
            red.rho[i], ray.u[i], red.v[i], red.h1[i], red.h2[i], duh[i]
        )?;
    }
    Ok(())
}

/// max |v_duhamel − v| along a ray and max |v|.
pub fn duhamel_discrepancy(ray: &RaySamples) -> (f64, f64) {
    let red = reduce_to_v(ray);
    if red.v.is_empty() {
        return (0.0, 0.0);
    }
    let duh = duhamel_solve(&red.rho, &red.h(), red.v[0], red.dv[0]);
    let diff = duh.iter().zip(&red.v).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    (diff, red.v.iter().map(|v| v.abs()).fold(0.0, f64::max))
}

#[derive(Clone, Debug, PartialEq)]
pub struct DecayCertificate {
    pub weight: f64,
    /// Γ-norm order used in the bracket.
    pub order: usize,
    pub t_min: f64,
    pub t_max: f64,
    /// max (1+t)^weight |u(t)|_∞ over samples with t ≥ t_min.
    pub weighted_sup: f64,
    pub t_argmax: f64,
    /// ‖u‖_N + E_{1+ε,N}(g)
    pub bracket: f64,
    /// weighted_sup / bracket
    pub constant: f64,
}

/// Interior decay certificate over t ∈ [2, T] with the weight (1+t)^weight.
pub fn decay_certificate_interior(run: &RunSeries, source: &SourceSpec, weight: f64) -> Result<DecayCertificate> {
    let order = run.samples.first().map_or(0, |s| s.gamma_sobolev.len().saturating_sub(1));
    let t_min = APEX_SHIFT;
    let t_max = run.samples.last().map_or(0.0, |s| s.t);
    if t_max < t_min {
        return Err(Error::Invalid(format!("run ends at t = {t_max} before t = {t_min}")));
    }
    let mut weighted_sup: f64 = 0.0;
    let mut t_argmax = t_min;
    for s in run.samples.iter().filter(|s| s.t >= t_min) {
        let w = (1.0 + s.t).powf(weight) * s.u_sup;
        if w > weighted_sup {
            weighted_sup = w;
            t_argmax = s.t;
        }
    }
    let norms = spacetime_norms(run, 1.25, order, source)?;
    let bracket = norms.sobolev + norms.source;
    let constant = if bracket > 0.0 { weighted_sup / bracket } else { 0.0 };
    Ok(DecayCertificate { weight, order, t_min, t_max, weighted_sup, t_argmax, bracket, constant })
}
