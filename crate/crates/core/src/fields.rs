//! Uniform grids, scalar fields and rolling time windows, with the
//! second-order finite-difference calculus used by every other module.
//!
//! Node `(i, j, k)` sits at `(-L + i h, -L + j h, -L + k h)` and is stored at
//! `(i n + j) n + k`, so `x1` is the slowest index (x-major order).

use std::io::{BufRead, Write};
use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Grid3 {
    n: usize,
    half_width: f64,
    dt: f64,
}

impl Grid3 {
    pub fn new(n: usize, half_width: f64, dt: f64) -> Result<Self> {
        if n < 8 {
            return Err(Error::InvalidGrid(format!("n = {n} is below the minimum of 8")));
        }
        if !(half_width.is_finite() && half_width > 0.0) {
            return Err(Error::InvalidGrid(format!("half width L = {half_width} must be positive")));
        }
        let h = 2.0 * half_width / (n - 1) as f64;
        if !(dt.is_finite() && dt > 0.0) || dt > 0.5 * h {
            return Err(Error::InvalidGrid(format!(
                "dt = {dt} violates the CFL bound dt <= h/2 = {}",
                0.5 * h
            )));
        }
        Ok(Self { n, half_width, dt })
    }

    /// Grid whose time step is `courant * h`.
    pub fn with_courant(n: usize, half_width: f64, courant: f64) -> Result<Self> {
        if n < 8 {
            return Err(Error::InvalidGrid(format!("n = {n} is below the minimum of 8")));
        }
        let h = 2.0 * half_width / (n - 1) as f64;
        Self::new(n, half_width, courant * h)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn h(&self) -> f64 {
        2.0 * self.half_width / (self.n - 1) as f64
    }

    pub fn len(&self) -> usize {
        self.n * self.n * self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn coord(&self, i: usize) -> f64 {
        -self.half_width + i as f64 * self.h()
    }

    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        (i * self.n + j) * self.n + k
    }

    pub fn ijk(&self, idx: usize) -> [usize; 3] {
        let n = self.n;
        [idx / (n * n), (idx / n) % n, idx % n]
    }

    pub fn node(&self, idx: usize) -> [f64; 3] {
        let [i, j, k] = self.ijk(idx);
        [self.coord(i), self.coord(j), self.coord(k)]
    }

    /// Distance in cells from the node to the nearest face of the cube.
    pub fn boundary_distance(&self, idx: usize) -> usize {
        let last = self.n - 1;
        self.ijk(idx).iter().map(|&c| c.min(last - c)).min().unwrap_or(0)
    }

    /// Same spatial grid with another time step.
    pub fn with_dt(&self, dt: f64) -> Result<Self> {
        Self::new(self.n, self.half_width, dt)
    }

    pub(crate) fn stride(&self, axis: usize) -> usize {
        match axis {
            0 => self.n * self.n,
            1 => self.n,
            _ => 1,
        }
    }

    pub(crate) fn same_space(&self, other: &Grid3) -> bool {
        self.n == other.n && self.half_width == other.half_width
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Field {
    grid: Grid3,
    values: Vec<f64>,
}

impl Field {
    pub fn zeros(grid: Grid3) -> Self {
        Self { grid, values: vec![0.0; grid.len()] }
    }

    pub fn from_fn<F>(grid: Grid3, f: F) -> Result<Self>
    where
        F: Fn([f64; 3]) -> f64 + Sync,
    {
        let mut values = vec![0.0; grid.len()];
        values.par_iter_mut().enumerate().for_each(|(idx, v)| *v = f(grid.node(idx)));
        Self::from_values(grid, values)
    }

    pub fn from_values(grid: Grid3, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::GridMismatch(format!(
                "{} values for a grid of {} nodes",
                values.len(),
                grid.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("field construction"));
        }
        Ok(Self { grid, values })
    }

    /// Unchecked constructor for kernels whose output is validated later.
    pub(crate) fn from_raw(grid: Grid3, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), grid.len());
        Self { grid, values }
    }

    pub fn grid(&self) -> &Grid3 {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn at(&self, i: usize, j: usize, k: usize) -> f64 {
        self.values[self.grid.index(i, j, k)]
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.par_iter().fold(|| 0.0f64, |m, v| m.max(v.abs())).reduce(|| 0.0, f64::max)
    }

    /// Riemann-sum L² norm with weight h³.
    pub fn l2_norm(&self) -> f64 {
        let h = self.grid.h();
        (h * h * h * ordered_sum(self.values.len(), |i| self.values[i] * self.values[i])).sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn scaled(&self, c: f64) -> Result<Field> {
        checked(self.grid, self.values.par_iter().map(|v| c * v).collect(), "scaling")
    }

    pub fn zip_map<F>(&self, other: &Field, f: F) -> Result<Field>
    where
        F: Fn(f64, f64) -> f64 + Sync,
    {
        same_grid(self, other)?;
        let values = self.values.par_iter().zip(other.values.par_iter()).map(|(a, b)| f(*a, *b)).collect();
        checked(self.grid, values, "pointwise combination")
    }

    pub fn sub(&self, other: &Field) -> Result<Field> {
        self.zip_map(other, |a, b| a - b)
    }

    pub fn add(&self, other: &Field) -> Result<Field> {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn mul(&self, other: &Field) -> Result<Field> {
        self.zip_map(other, |a, b| a * b)
    }

    /// Trilinear interpolation at a point; `None` outside the cube.
    pub fn interpolate(&self, x: [f64; 3]) -> Option<f64> {
        let g = &self.grid;
        let h = g.h();
        let mut base = [0usize; 3];
        let mut frac = [0.0; 3];
        for a in 0..3 {
            let s = (x[a] + g.half_width) / h;
            if !(s >= 0.0 && s <= (g.n - 1) as f64) {
                return None;
            }
            let c = (s.floor() as usize).min(g.n - 2);
            base[a] = c;
            frac[a] = s - c as f64;
        }
        let mut acc = 0.0;
        for corner in 0..8 {
            let mut w = 1.0;
            let mut idx = [0usize; 3];
            for a in 0..3 {
                let up = (corner >> a) & 1 == 1;
                idx[a] = base[a] + up as usize;
                w *= if up { frac[a] } else { 1.0 - frac[a] };
            }
            if w != 0.0 {
                acc += w * self.values[g.index(idx[0], idx[1], idx[2])];
            }
        }
        Some(acc)
    }
}

fn checked(grid: Grid3, values: Vec<f64>, what: &'static str) -> Result<Field> {
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite(what));
    }
    Ok(Field::from_raw(grid, values))
}

pub(crate) fn same_grid(a: &Field, b: &Field) -> Result<()> {
    if a.grid.same_space(&b.grid) {
        Ok(())
    } else {
        Err(Error::GridMismatch(format!("n={} L={} vs n={} L={}", a.grid.n, a.grid.half_width, b.grid.n, b.grid.half_width)))
    }
}

/// Centered first derivative along spatial axis `a` (0-based: x1, x2, x3),
/// one-sided second order on the two faces.
pub(crate) fn d1_raw(u: &[f64], grid: &Grid3, a: usize) -> Vec<f64> {
    let n = grid.n;
    let s = grid.stride(a);
    let inv = 0.5 / grid.h();
    let mut out = vec![0.0; u.len()];
    out.par_chunks_mut(n * n).enumerate().for_each(|(i, plane)| {
        for j in 0..n {
            for k in 0..n {
                let c = [i, j, k][a];
                let idx = (i * n + j) * n + k;
                plane[j * n + k] = if c == 0 {
                    (-3.0 * u[idx] + 4.0 * u[idx + s] - u[idx + 2 * s]) * inv
                } else if c == n - 1 {
                    (3.0 * u[idx] - 4.0 * u[idx - s] + u[idx - 2 * s]) * inv
                } else {
                    (u[idx + s] - u[idx - s]) * inv
                };
            }
        }
    });
    out
}

/// Second derivative along spatial axis `a`, one-sided second order on the faces.
pub(crate) fn d2_raw(u: &[f64], grid: &Grid3, a: usize) -> Vec<f64> {
    let n = grid.n;
    let s = grid.stride(a);
    let inv = 1.0 / (grid.h() * grid.h());
    let mut out = vec![0.0; u.len()];
    out.par_chunks_mut(n * n).enumerate().for_each(|(i, plane)| {
        for j in 0..n {
            for k in 0..n {
                let c = [i, j, k][a];
                let idx = (i * n + j) * n + k;
                plane[j * n + k] = if c == 0 {
                    (2.0 * u[idx] - 5.0 * u[idx + s] + 4.0 * u[idx + 2 * s] - u[idx + 3 * s]) * inv
                } else if c == n - 1 {
                    (2.0 * u[idx] - 5.0 * u[idx - s] + 4.0 * u[idx - 2 * s] - u[idx - 3 * s]) * inv
                } else {
                    (u[idx + s] - 2.0 * u[idx] + u[idx - s]) * inv
                };
            }
        }
    });
    out
}

/// Spatial partial derivative ∂_axis for axis 1, 2 or 3. Axis 0 (time) needs a
/// [`FieldWindow`]; see [`FieldWindow::partial`].
pub fn partial(f: &Field, axis: usize) -> Result<Field> {
    match axis {
        0 => Err(Error::TimeAxisNeedsWindow),
        1..=3 => checked(f.grid, d1_raw(&f.values, &f.grid, axis - 1), "partial"),
        _ => Err(Error::Invalid(format!("axis {axis} out of range 0..=3"))),
    }
}

/// 7-point Laplacian.
pub fn laplacian(f: &Field) -> Field {
    let mut acc = d2_raw(&f.values, &f.grid, 0);
    for a in 1..3 {
        let d = d2_raw(&f.values, &f.grid, a);
        acc.iter_mut().zip(d).for_each(|(x, y)| *x += y);
    }
    Field::from_raw(f.grid, acc)
}

/// Largest |x| over nodes with |f| > tol, or 0 when there are none.
///
/// # Panics
/// If `tol` is not positive.
pub fn support_radius(f: &Field, tol: f64) -> f64 {
    assert!(tol > 0.0, "support tolerance must be positive");
    let g = f.grid;
    f.values
        .par_iter()
        .enumerate()
        .filter(|(_, v)| v.abs() > tol)
        .map(|(idx, _)| {
            let x = g.node(idx);
            (x[0] * x[0] + x[1] * x[1] + x[2] * x[2]).sqrt()
        })
        .reduce(|| 0.0, f64::max)
}

/// Consecutive time levels of one field, centered on `center_time`.
#[derive(Clone, Debug)]
pub struct FieldWindow {
    center_time: f64,
    levels: Vec<Arc<Field>>,
}

impl FieldWindow {
    pub fn new(center_time: f64, levels: Vec<Arc<Field>>) -> Result<Self> {
        if levels.len().is_multiple_of(2) {
            return Err(Error::Invalid(format!("window needs an odd number of levels, got {}", levels.len())));
        }
        let g = levels[0].grid;
        if levels.iter().any(|l| l.grid != g) {
            return Err(Error::GridMismatch("window levels on different grids".into()));
        }
        Ok(Self { center_time, levels })
    }

    pub fn from_fields(center_time: f64, levels: Vec<Field>) -> Result<Self> {
        Self::new(center_time, levels.into_iter().map(Arc::new).collect())
    }

    /// Window with levels `f(t - k dt) ... f(t + k dt)` sampled from a closed form.
    pub fn sample<F>(grid: Grid3, center_time: f64, radius: usize, f: F) -> Result<Self>
    where
        F: Fn(f64, [f64; 3]) -> f64 + Sync,
    {
        let levels = (-(radius as isize)..=radius as isize)
            .map(|j| {
                let t = center_time + j as f64 * grid.dt;
                Field::from_fn(grid, |x| f(t, x)).map(Arc::new)
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(center_time, levels)
    }

    pub fn radius(&self) -> usize {
        self.levels.len() / 2
    }

    pub fn grid(&self) -> &Grid3 {
        &self.levels[0].grid
    }

    pub fn dt(&self) -> f64 {
        self.grid().dt
    }

    pub fn center_time(&self) -> f64 {
        self.center_time
    }

    pub fn time_at(&self, j: isize) -> f64 {
        self.center_time + j as f64 * self.dt()
    }

    pub fn center(&self) -> &Field {
        &self.levels[self.radius()]
    }

    /// Level at offset `j` from the center, `-radius ..= radius`.
    pub fn level(&self, j: isize) -> &Field {
        &self.levels[(self.radius() as isize + j) as usize]
    }

    pub fn levels(&self) -> &[Arc<Field>] {
        &self.levels
    }

    pub fn require(&self, radius: usize) -> Result<()> {
        if self.radius() < radius {
            Err(Error::WindowTooShallow { have: self.radius(), need: radius })
        } else {
            Ok(())
        }
    }

    /// Same center, fewer levels.
    pub fn shrink(&self, radius: usize) -> Result<FieldWindow> {
        self.require(radius)?;
        let r = self.radius();
        Ok(Self { center_time: self.center_time, levels: self.levels[r - radius..=r + radius].to_vec() })
    }

    /// Partial derivative of the center level; axis 0 is ∂_t.
    pub fn partial(&self, axis: usize) -> Result<Field> {
        if axis == 0 {
            self.require(1)?;
            let inv = 0.5 / self.dt();
            self.level(1).zip_map(self.level(-1), |a, b| (a - b) * inv)
        } else {
            partial(self.center(), axis)
        }
    }

    /// Window of centered time derivatives, one level shallower.
    pub fn time_derivative(&self) -> Result<FieldWindow> {
        self.require(1)?;
        let inv = 0.5 / self.dt();
        let levels = (1..self.levels.len() - 1)
            .map(|l| self.levels[l + 1].zip_map(&self.levels[l - 1], |a, b| (a - b) * inv).map(Arc::new))
            .collect::<Result<Vec<_>>>()?;
        Self::new(self.center_time, levels)
    }

    pub fn scaled(&self, c: f64) -> Result<FieldWindow> {
        let levels = self.levels.iter().map(|l| l.scaled(c).map(Arc::new)).collect::<Result<Vec<_>>>()?;
        Self::new(self.center_time, levels)
    }

    pub fn sub(&self, other: &FieldWindow) -> Result<FieldWindow> {
        if other.radius() != self.radius() {
            return Err(Error::Invalid("window radii differ".into()));
        }
        let levels = self
            .levels
            .iter()
            .zip(&other.levels)
            .map(|(a, b)| a.sub(b).map(Arc::new))
            .collect::<Result<Vec<_>>>()?;
        Self::new(self.center_time, levels)
    }
}

/// Radius of the smallest origin-centered ball that holds every nonzero value.
pub(crate) fn exact_support_radius(f: &Field) -> f64 {
    let g = f.grid;
    f.values
        .iter()
        .enumerate()
        .filter(|(_, v)| **v != 0.0)
        .map(|(idx, _)| {
            let x = g.node(idx);
            (x[0] * x[0] + x[1] * x[1] + x[2] * x[2]).sqrt()
        })
        .fold(0.0, f64::max)
}

pub(crate) fn check_data_support(f: &Field, what: &str) -> Result<()> {
    let limit = f.grid.half_width - 1.0;
    let r = exact_support_radius(f);
    if r > limit {
        return Err(Error::Support(format!("{what} is nonzero at |x| = {r:.4} beyond L - 1 = {limit:.4}")));
    }
    Ok(())
}

/// Radius-1 window at t = 0 holding `eps f` with velocity `eps g` for the free
/// equation; ghost levels come from one Taylor step.
pub fn inject_initial(f: &Field, g: &Field, eps: f64) -> Result<FieldWindow> {
    inject_initial_with(f, g, eps, |_, _| 0.0)
}

/// As [`inject_initial`] for □₁u = F, using ∂_t²u = Δu − u + F at t = 0.
pub fn inject_initial_with<F>(f: &Field, g: &Field, eps: f64, source: F) -> Result<FieldWindow>
where
    F: Fn(f64, [f64; 3]) -> f64 + Sync,
{
    same_grid(f, g)?;
    if !(eps.is_finite() && eps >= 0.0) {
        return Err(Error::Invalid(format!("eps = {eps} must be non-negative")));
    }
    check_data_support(f, "initial displacement")?;
    check_data_support(g, "initial velocity")?;
    let grid = *f.grid();
    let u0 = f.scaled(eps)?;
    let u1 = g.scaled(eps)?;
    let lap = laplacian(&u0);
    let dt = grid.dt;
    let accel: Vec<f64> = (0..grid.len())
        .into_par_iter()
        .map(|idx| lap.values[idx] - u0.values[idx] + source(0.0, grid.node(idx)))
        .collect();
    let ghost = |sign: f64| -> Vec<f64> {
        (0..grid.len())
            .map(|idx| u0.values[idx] + sign * dt * u1.values[idx] + 0.5 * dt * dt * accel[idx])
            .collect()
    };
    let past = checked(grid, ghost(-1.0), "ghost level")?;
    let future = checked(grid, ghost(1.0), "ghost level")?;
    FieldWindow::from_fields(0.0, vec![past, u0, future])
}

/// Σ f(i) for i < len, parallel over fixed chunks so the rounding does not
/// depend on thread scheduling.
pub(crate) fn ordered_sum(len: usize, f: impl Fn(usize) -> f64 + Sync) -> f64 {
    const CHUNK: usize = 4096;
    let parts: Vec<f64> = (0..len.div_ceil(CHUNK))
        .into_par_iter()
        .map(|c| (c * CHUNK..((c + 1) * CHUNK).min(len)).map(&f).sum())
        .collect();
    parts.iter().sum()
}

/// Header and payload of a field snapshot file.
#[derive(Clone, Debug, PartialEq)]
pub struct Snapshot {
    pub n: usize,
    pub half_width: f64,
    pub t: f64,
    pub values: Vec<f64>,
}

impl Snapshot {
    pub fn into_field(self, dt: f64) -> Result<Field> {
        let grid = Grid3::new(self.n, self.half_width, dt)?;
        Field::from_values(grid, self.values)
    }
}

/// Writes `n=<int> L=<float> t=<float>` then n³ little-endian f64 values.
pub fn write_snapshot<W: Write>(mut w: W, field: &Field, t: f64) -> Result<()> {
    writeln!(w, "n={} L={} t={}", field.grid.n, field.grid.half_width, t)?;
    let mut buf = Vec::with_capacity(8 * field.values.len());
    for v in &field.values {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

pub fn read_snapshot<R: BufRead>(mut r: R) -> Result<Snapshot> {
    let mut header = String::new();
    r.read_line(&mut header)?;
    let mut n = None;
    let mut half_width = None;
    let mut t = None;
    for part in header.split_whitespace() {
        let (key, value) = part.split_once('=').ok_or_else(|| Error::Parse(format!("bad header token {part:?}")))?;
        let bad = |_| Error::Parse(format!("bad header value {part:?}"));
        match key {
            "n" => n = Some(value.parse::<usize>().map_err(|e| Error::Parse(format!("{part:?}: {e}")))?),
            "L" => half_width = Some(value.parse::<f64>().map_err(bad)?),
            "t" => t = Some(value.parse::<f64>().map_err(bad)?),
            _ => return Err(Error::Parse(format!("unknown header key {key:?}"))),
        }
    }
    let (n, half_width, t) = match (n, half_width, t) {
        (Some(n), Some(l), Some(t)) => (n, l, t),
        _ => return Err(Error::Parse(format!("incomplete header {header:?}"))),
    };
    let mut bytes = vec![0u8; 8 * n * n * n];
    r.read_exact(&mut bytes)?;
    let values = bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
    Ok(Snapshot { n, half_width, t, values })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(n: usize, l: f64) -> Grid3 {
        Grid3::with_courant(n, l, 0.25).unwrap()
    }

    fn interior(g: &Grid3, idx: usize) -> bool {
        g.boundary_distance(idx) >= 1
    }

    #[test]
    fn grid_validation() {
        assert!(Grid3::new(7, 1.0, 0.01).is_err());
        assert!(Grid3::new(8, 0.0, 0.01).is_err());
        let h = 2.0 / 7.0;
        assert!(Grid3::new(8, 1.0, 0.5 * h + 1e-9).is_err());
        assert!(Grid3::new(8, 1.0, 0.5 * h).is_ok());
    }

    #[test]
    fn indexing_is_x_major() {
        let g = grid(9, 4.0);
        assert_eq!(g.index(1, 0, 0), 81);
        assert_eq!(g.ijk(g.index(3, 5, 7)), [3, 5, 7]);
        assert_eq!(g.node(g.index(4, 4, 4)), [0.0, 0.0, 0.0]);
    }

    #[test]
    fn constant_has_zero_derivatives() {
        let g = grid(10, 2.0);
        let f = Field::from_fn(g, |_| 3.5).unwrap();
        for a in 1..=3 {
            assert!(partial(&f, a).unwrap().sup_norm() < 1e-12);
        }
        assert!(laplacian(&f).sup_norm() < 1e-10);
    }

    #[test]
    fn stencils_exact_on_quadratics() {
        let g = grid(12, 3.0);
        let f = Field::from_fn(g, |x| 1.0 + 2.0 * x[0] - x[1] + 0.5 * x[0] * x[2] + x[0] * x[0] + x[1] * x[1]).unwrap();
        let d1 = partial(&f, 1).unwrap();
        let lap = laplacian(&f);
        for idx in 0..g.len() {
            let x = g.node(idx);
            let exact = 2.0 + 0.5 * x[2] + 2.0 * x[0];
            assert!((d1.values()[idx] - exact).abs() <= 1e-12 * (1.0 + exact.abs()), "d1 at {x:?}");
            assert!((lap.values()[idx] - 4.0).abs() <= 1e-11, "laplacian at {x:?}");
        }
        let lin = Field::from_fn(g, |x| x[0]).unwrap();
        let d = partial(&lin, 1).unwrap();
        assert!(d.values().iter().all(|v| (v - 1.0).abs() < 1e-12));
    }

    #[test]
    fn time_axis_needs_a_window() {
        let g = grid(8, 1.0);
        assert!(matches!(partial(&Field::zeros(g), 0), Err(Error::TimeAxisNeedsWindow)));
        let w = FieldWindow::from_fields(0.0, vec![Field::zeros(g)]).unwrap();
        assert!(matches!(w.partial(0), Err(Error::WindowTooShallow { have: 0, need: 1 })));
    }

    fn sin_error(n: usize) -> f64 {
        let g = grid(n, std::f64::consts::PI);
        let f = Field::from_fn(g, |x| x[0].sin()).unwrap();
        let d = partial(&f, 1).unwrap();
        (0..g.len())
            .filter(|&i| interior(&g, i))
            .map(|i| (d.values()[i] - g.node(i)[0].cos()).abs())
            .fold(0.0, f64::max)
    }

    #[test]
    fn partial_converges_at_second_order() {
        let (e32, e64) = (sin_error(33), sin_error(65));
        let order = (e32 / e64).log2();
        assert!((1.7..=2.3).contains(&order), "order {order}");
        let c = e64 / (2.0 * std::f64::consts::PI / 64.0).powi(2);
        assert!(c < 0.2, "error constant {c}");
    }

    fn gaussian_lap_error(n: usize) -> f64 {
        let g = grid(n, 4.0);
        let f = Field::from_fn(g, |x| (-(x[0] * x[0] + x[1] * x[1] + x[2] * x[2])).exp()).unwrap();
        let lap = laplacian(&f);
        (0..g.len())
            .filter(|&i| interior(&g, i))
            .map(|i| {
                let x = g.node(i);
                let r2 = x[0] * x[0] + x[1] * x[1] + x[2] * x[2];
                (lap.values()[i] - (4.0 * r2 - 6.0) * (-r2).exp()).abs()
            })
            .fold(0.0, f64::max)
    }

    #[test]
    fn laplacian_converges_at_second_order() {
        let order = (gaussian_lap_error(33) / gaussian_lap_error(65)).log2();
        assert!((1.7..=2.3).contains(&order), "order {order}");
    }

    #[test]
    fn support_radius_examples() {
        let g = grid(41, 2.0);
        assert_eq!(support_radius(&Field::zeros(g), 1e-12), 0.0);
        let bump = Field::from_fn(g, |x| {
            let r2 = x[0] * x[0] + x[1] * x[1] + x[2] * x[2];
            if r2 < 1.0 { (-1.0 / (1.0 - r2)).exp() } else { 0.0 }
        })
        .unwrap();
        let r = support_radius(&bump, 1e-300);
        assert!(r <= 1.0 + g.h() && r > 1.0 - 2.0 * g.h(), "{r}");
    }

    #[test]
    fn injection_scales_and_checks_support() {
        let g = grid(21, 4.0);
        let f = Field::from_fn(g, |x| {
            let r2 = x[0] * x[0] + x[1] * x[1] + x[2] * x[2];
            if r2 < 1.0 { (-1.0 / (1.0 - r2)).exp() } else { 0.0 }
        })
        .unwrap();
        let z = Field::zeros(g);
        let w = inject_initial(&f, &z, 0.01).unwrap();
        assert_eq!(w.radius(), 1);
        assert!((w.center().sup_norm() - 0.01 * f.sup_norm()).abs() < 1e-15);
        let w0 = inject_initial(&f, &z, 0.0).unwrap();
        assert!(w0.levels().iter().all(|l| l.sup_norm() == 0.0));
        let wide = Field::from_fn(g, |x| if x[0].abs() > 3.5 { 1.0 } else { 0.0 }).unwrap();
        assert!(matches!(inject_initial(&wide, &z, 1.0), Err(Error::Support(_))));
    }

    #[test]
    fn snapshot_round_trip() {
        let g = grid(9, 1.5);
        let f = Field::from_fn(g, |x| x[0] - 2.0 * x[1] + x[2] * x[2]).unwrap();
        let mut bytes = Vec::new();
        write_snapshot(&mut bytes, &f, 0.125).unwrap();
        assert!(bytes.starts_with(b"n=9 L=1.5 t=0.125\n"));
        let snap = read_snapshot(bytes.as_slice()).unwrap();
        assert_eq!(snap.t, 0.125);
        assert_eq!(snap.into_field(g.dt()).unwrap(), f);
    }

    #[test]
    fn interpolation_exact_on_trilinear() {
        let g = grid(11, 2.0);
        let f = Field::from_fn(g, |x| 1.0 + x[0] - 2.0 * x[1] + 0.5 * x[2] + x[0] * x[1] * x[2]).unwrap();
        let p = [0.31, -0.77, 1.13];
        let exact = 1.0 + p[0] - 2.0 * p[1] + 0.5 * p[2] + p[0] * p[1] * p[2];
        assert!((f.interpolate(p).unwrap() - exact).abs() < 1e-12);
        assert!(f.interpolate([2.5, 0.0, 0.0]).is_none());
    }
}
