//! Explicit three-level scheme for
//!
//!   A u_tt + Σ_k B_k u_tk + C u_t − Δu + u + Σ_{j≤k} S_jk u_jk + Σ_k D_k u_k = f
//!
//! with A = 1 + a. Writing base = 2u − u⁻ + dt²(Δu − u + f) for the leapfrog
//! value, the update is u⁺ = base − [a(base − 2u + u⁻) + (c dt/2)(base − u⁻) + dt² P] / (1 + a + c dt/2)
//! where P collects the B, S and D terms at the current level. With every
//! coefficient absent this is the plain leapfrog step, bit for bit.
//!
//! Stepping backward in time reuses the same kernel in s = −t, which flips the
//! sign of the terms odd in ∂_t (B and C).

use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fields::{Field, FieldWindow, Grid3};

/// Off-diagonal slots of `StepCoeffs::s`: 11, 22, 33, 12, 13, 23.
pub(crate) const PAIRS: [(usize, usize); 6] = [(0, 0), (1, 1), (2, 2), (0, 1), (0, 2), (1, 2)];

#[derive(Default)]
pub(crate) struct StepCoeffs {
    pub a: Option<Vec<f64>>,
    pub b: [Option<Vec<f64>>; 3],
    pub c: Option<Vec<f64>>,
    pub s: [Option<Vec<f64>>; 6],
    pub d: [Option<Vec<f64>>; 3],
    pub f: Option<Vec<f64>>,
}

impl StepCoeffs {
    fn free(&self) -> bool {
        self.a.is_none()
            && self.c.is_none()
            && self.b.iter().all(Option::is_none)
            && self.s.iter().all(Option::is_none)
            && self.d.iter().all(Option::is_none)
    }

    fn needs_ut(&self) -> bool {
        self.b.iter().any(Option::is_some)
    }
}

/// Supplies equation coefficients level by level.
pub(crate) trait Coefficients: Sync {
    /// Coefficients at level `m`, time `m dt`.
    fn at(&self, m: isize, grid: &Grid3) -> Result<StepCoeffs>;

    /// 𝓔₊² for the window, when the equation defines one.
    fn modified_energy_sq(&self, _w: &FieldWindow, _energy: f64) -> Result<Option<f64>> {
        Ok(None)
    }
}

#[inline]
fn get(v: &Option<Vec<f64>>, idx: usize) -> f64 {
    v.as_ref().map_or(0.0, |v| v[idx])
}

/// The B, S and D terms at one interior node.
#[inline]
fn lower_terms(u: &[f64], ut: Option<&[f64]>, co: &StepCoeffs, idx: usize, st: [usize; 3], h: f64, sigma: f64) -> f64 {
    let mut p = 0.0;
    let inv2h = 0.5 / h;
    let invh2 = 1.0 / (h * h);
    if let Some(ut) = ut {
        for k in 0..3 {
            if let Some(b) = &co.b[k] {
                p += sigma * b[idx] * (ut[idx + st[k]] - ut[idx - st[k]]) * inv2h;
            }
        }
    }
    for (slot, &(j, k)) in PAIRS.iter().enumerate() {
        if let Some(s) = &co.s[slot] {
            let d = if j == k {
                (u[idx + st[j]] - 2.0 * u[idx] + u[idx - st[j]]) * invh2
            } else {
                let (sj, sk) = (st[j], st[k]);
                (u[idx + sj + sk] - u[idx + sj - sk] - u[idx - sj + sk] + u[idx - sj - sk]) * 0.25 * invh2
            };
            p += s[idx] * d;
        }
    }
    for k in 0..3 {
        if let Some(d) = &co.d[k] {
            p += d[idx] * (u[idx + st[k]] - u[idx - st[k]]) * inv2h;
        }
    }
    p
}

/// One step in the direction `sigma` (±1). `ut` is ∂_s u at the current level
/// and is only read when B is present. Boundary nodes are held at zero.
fn step(grid: &Grid3, cur: &Field, prev: &Field, ut: Option<&[f64]>, co: &StepCoeffs, sigma: f64) -> Result<Field> {
    let n = grid.n();
    let h = grid.h();
    let dt = grid.dt();
    let dt2 = dt * dt;
    let invh2 = 1.0 / (h * h);
    let u = cur.values();
    let p = prev.values();
    let st = [n * n, n, 1];
    let free = co.free();
    let mut out = vec![0.0; grid.len()];
    let ok = out.par_chunks_mut(n * n).enumerate().all(|(i, plane)| {
        if i == 0 || i == n - 1 {
            return true;
        }
        let mut ok = true;
        for j in 1..n - 1 {
            let row = i * n * n + j * n;
            for k in 1..n - 1 {
                let idx = row + k;
                let c = u[idx];
                let lap = (u[idx + st[0]] + u[idx - st[0]] + u[idx + st[1]] + u[idx - st[1]] + u[idx + 1] + u[idx - 1]
                    - 6.0 * c)
                    * invh2;
                let base = 2.0 * c - p[idx] + dt2 * (lap - c + get(&co.f, idx));
                plane[j * n + k] = if free {
                    base
                } else {
                    let a = get(&co.a, idx);
                    let cd = sigma * get(&co.c, idx) * 0.5 * dt;
                    if (1.0 + a).abs() < 0.5 {
                        ok = false;
                    }
                    let pp = lower_terms(u, ut, co, idx, st, h, sigma);
                    let num = a * (base - 2.0 * c + p[idx]) + cd * (base - p[idx]) + dt2 * pp;
                    base - num / (1.0 + a + cd)
                };
            }
        }
        ok
    });
    if !ok {
        return Err(Error::Admissibility("|1 + γ⁰⁰| < 1/2 at some node".into()));
    }
    let f = Field::from_raw(*grid, out);
    if !f.is_finite() {
        return Err(Error::NonFinite("time step"));
    }
    Ok(f)
}

/// ∂_t²u at t = 0 from the equation, given u and u_t there.
fn acceleration(grid: &Grid3, u0: &Field, u1: &Field, co: &StepCoeffs) -> Vec<f64> {
    let n = grid.n();
    let invh2 = 1.0 / (grid.h() * grid.h());
    let u = u0.values();
    let ut = u1.values();
    let st = [n * n, n, 1];
    let mut out = vec![0.0; grid.len()];
    out.par_chunks_mut(n * n).enumerate().for_each(|(i, plane)| {
        if i == 0 || i == n - 1 {
            return;
        }
        for j in 1..n - 1 {
            for k in 1..n - 1 {
                let idx = (i * n + j) * n + k;
                let c = u[idx];
                let lap = (u[idx + st[0]] + u[idx - st[0]] + u[idx + st[1]] + u[idx - st[1]] + u[idx + 1] + u[idx - 1]
                    - 6.0 * c)
                    * invh2;
                let rhs = get(&co.f, idx) + lap - c
                    - get(&co.c, idx) * ut[idx]
                    - lower_terms(u, Some(ut), co, idx, st, grid.h(), 1.0);
                plane[j * n + k] = rhs / (1.0 + get(&co.a, idx));
            }
        }
    });
    out
}

pub(crate) struct Integrator<'a> {
    pub grid: Grid3,
    pub coeffs: &'a dyn Coefficients,
}

impl Integrator<'_> {
    /// Next level after `cur` (level `m`), moving in direction `sigma`.
    /// `older` is the level two steps back; `ut_exact` overrides the BDF2
    /// estimate of ∂_t u at `cur`.
    pub fn advance(
        &self,
        older: Option<&Field>,
        prev: &Field,
        cur: &Field,
        m: isize,
        sigma: f64,
        ut_exact: Option<&Field>,
    ) -> Result<Field> {
        let co = self.coeffs.at(m, &self.grid)?;
        let ut = if co.needs_ut() {
            let inv = 0.5 / self.grid.dt();
            Some(match (ut_exact, older) {
                (Some(u1), _) => u1.values().iter().map(|v| sigma * v).collect::<Vec<_>>(),
                (None, Some(o)) => {
                    cur.values().iter().zip(prev.values()).zip(o.values()).map(|((c, p), o)| (3.0 * c - 4.0 * p + o) * inv).collect()
                }
                (None, None) => cur.values().iter().zip(prev.values()).map(|(c, p)| (c - p) * 2.0 * inv).collect(),
            })
        } else {
            None
        };
        step(&self.grid, cur, prev, ut.as_deref(), &co, sigma)
    }

    /// Levels −radius..=radius around t = 0: one Taylor ghost behind the
    /// data, then the scheme itself forward and backward.
    pub fn initial_levels(&self, u0: &Field, u1: &Field, radius: usize) -> Result<Vec<Arc<Field>>> {
        let radius = radius.max(1);
        let dt = self.grid.dt();
        let co = self.coeffs.at(0, &self.grid)?;
        let acc = acceleration(&self.grid, u0, u1, &co);
        let ghost: Vec<f64> =
            (0..self.grid.len()).map(|i| u0.values()[i] - dt * u1.values()[i] + 0.5 * dt * dt * acc[i]).collect();
        let mut ghost = Field::from_values(self.grid, ghost)?;
        zero_boundary(&mut ghost);

        let mut fwd: Vec<Field> = vec![ghost.clone(), u0.clone()];
        for m in 0..radius as isize {
            let l = fwd.len();
            let older = if m == 0 { None } else { Some(&fwd[l - 3]) };
            let next = self.advance(older, &fwd[l - 2], &fwd[l - 1], m, 1.0, (m == 0).then_some(u1))?;
            fwd.push(next);
        }
        // fwd holds levels −1, 0, 1, ..., radius
        let mut back: Vec<Field> = Vec::new();
        for m in (-(radius as isize) + 1..=-1).rev() {
            let (older, prev, cur) = match back.len() {
                0 => (&fwd[2], &fwd[1], &fwd[0]),
                1 => (&fwd[1], &fwd[0], &back[0]),
                l => (if l == 2 { &fwd[0] } else { &back[l - 3] }, &back[l - 2], &back[l - 1]),
            };
            let next = self.advance(Some(older), prev, cur, m, -1.0, None)?;
            back.push(next);
        }
        let mut levels: Vec<Arc<Field>> = back.into_iter().rev().map(Arc::new).collect();
        levels.extend(fwd.into_iter().map(Arc::new));
        Ok(levels)
    }
}

fn zero_boundary(f: &mut Field) {
    let g = *f.grid();
    let mut v = std::mem::replace(f, Field::zeros(g)).into_values();
    for (idx, x) in v.iter_mut().enumerate() {
        if g.boundary_distance(idx) == 0 {
            *x = 0.0;
        }
    }
    *f = Field::from_raw(g, v);
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::inject_initial;

    struct Free;
    impl Coefficients for Free {
        fn at(&self, _: isize, _: &Grid3) -> Result<StepCoeffs> {
            Ok(StepCoeffs::default())
        }
    }

    /// a = 0 stored explicitly: exercises the general branch.
    struct ZeroExplicit;
    impl Coefficients for ZeroExplicit {
        fn at(&self, _: isize, g: &Grid3) -> Result<StepCoeffs> {
            Ok(StepCoeffs { a: Some(vec![0.0; g.len()]), ..Default::default() })
        }
    }

    fn data(g: Grid3) -> (Field, Field) {
        let bump = |x: [f64; 3]| {
            let r2 = x[0] * x[0] + x[1] * x[1] + x[2] * x[2];
            if r2 < 1.0 {
                (1.0 - 1.0 / (1.0 - r2)).exp()
            } else {
                0.0
            }
        };
        (Field::from_fn(g, bump).unwrap(), Field::from_fn(g, |x| 0.3 * x[0] * bump(x)).unwrap())
    }

    #[test]
    fn first_levels_match_taylor_injection() {
        let g = Grid3::with_courant(24, 3.0, 0.25).unwrap();
        let (u0, u1) = data(g);
        let levels = Integrator { grid: g, coeffs: &Free }.initial_levels(&u0, &u1, 1).unwrap();
        let w = inject_initial(&u0, &u1, 1.0).unwrap();
        for j in 0..3 {
            let d = levels[j].sub(&w.levels()[j]).unwrap().sup_norm();
            assert!(d < 1e-14, "level {j}: {d}");
        }
    }

    #[test]
    fn general_branch_reduces_to_leapfrog() {
        let g = Grid3::with_courant(20, 3.0, 0.3).unwrap();
        let (u0, u1) = data(g);
        let a = Integrator { grid: g, coeffs: &Free }.initial_levels(&u0, &u1, 3).unwrap();
        let b = Integrator { grid: g, coeffs: &ZeroExplicit }.initial_levels(&u0, &u1, 3).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.values(), y.values());
        }
    }

    #[test]
    fn backward_steps_invert_forward_steps() {
        let g = Grid3::with_courant(20, 3.0, 0.3).unwrap();
        let (u0, u1) = data(g);
        let it = Integrator { grid: g, coeffs: &Free };
        let levels = it.initial_levels(&u0, &u1, 3).unwrap();
        // stepping backward from levels (1, 2) reproduces level 0
        let back = it.advance(None, &levels[5], &levels[4], 1, -1.0, None).unwrap();
        assert!(back.sub(&levels[3]).unwrap().sup_norm() < 1e-14);
    }
}
