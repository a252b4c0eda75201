//! Discrete application of Γ words to field windows. Coefficients are
//! evaluated at node coordinates and at the time of each level, so nested
//! words see the correct time dependence of t∂_i.

use std::collections::HashMap;
use std::sync::{Arc, OnceLock};

use rayon::prelude::*;

use super::op::{Exponents, GammaOp};
use super::{Generator, MultiIndex10, Ordering};
use crate::error::{Error, Result};
use crate::fields::{d1_raw, Field, FieldWindow};

/// A first-order operator with floating-point coefficients.
#[derive(Clone, Debug)]
pub struct CompiledOp {
    terms: Vec<(f64, Exponents, Option<usize>)>,
}

impl CompiledOp {
    pub fn new(op: &GammaOp) -> Result<Self> {
        let mut terms = Vec::new();
        for (c, p, d) in op.to_f64_terms() {
            let deriv = match d.degree() {
                0 => None,
                1 => Some(d.0.iter().position(|&e| e == 1).unwrap()),
                _ => return Err(Error::Invalid(format!("operator {op} is not first order"))),
            };
            terms.push((c, p, deriv));
        }
        Ok(Self { terms })
    }

    pub fn uses_time(&self) -> bool {
        self.terms.iter().any(|t| t.2 == Some(0))
    }

    /// Pointwise value at `(t, x)` given the operand at neighbouring nodes:
    /// `value(offset, level)` returns it `offset` cells and `level` steps away.
    pub fn eval_point(&self, t: f64, x: [f64; 3], h: f64, dt: f64, value: &dyn Fn([isize; 3], isize) -> f64) -> f64 {
        self.terms
            .iter()
            .map(|(c, p, d)| {
                let val = match d {
                    None => value([0; 3], 0),
                    Some(0) => (value([0; 3], 1) - value([0; 3], -1)) / (2.0 * dt),
                    Some(a) => {
                        let mut e = [0isize; 3];
                        e[a - 1] = 1;
                        (value(e, 0) - value([-e[0], -e[1], -e[2]], 0)) / (2.0 * h)
                    }
                };
                c * monomial(p, t, x) * val
            })
            .sum()
    }
}

fn monomial(p: &Exponents, t: f64, x: [f64; 3]) -> f64 {
    let e = p.0;
    let mut v = 1.0;
    if e[0] > 0 {
        v *= t.powi(e[0] as i32);
    }
    for a in 0..3 {
        if e[a + 1] > 0 {
            v *= x[a].powi(e[a + 1] as i32);
        }
    }
    v
}

fn compiled_generators() -> &'static [CompiledOp; 10] {
    static CACHE: OnceLock<[CompiledOp; 10]> = OnceLock::new();
    CACHE.get_or_init(|| std::array::from_fn(|i| CompiledOp::new(&Generator::ALL[i].op()).unwrap()))
}

fn apply_compiled(window: &FieldWindow, op: &CompiledOp, time_offset: f64) -> Result<FieldWindow> {
    let uses_time = op.uses_time();
    let r_out = if uses_time {
        window.require(1)?;
        window.radius() - 1
    } else {
        window.radius()
    };
    let grid = *window.grid();
    let n = grid.n();
    let inv2dt = 0.5 / grid.dt();
    let mut levels = Vec::with_capacity(2 * r_out + 1);
    for j in -(r_out as isize)..=(r_out as isize) {
        let t = window.time_at(j) + time_offset;
        let u = window.level(j).values();
        let mut spatial: [Option<Vec<f64>>; 3] = [None, None, None];
        for (_, _, d) in &op.terms {
            if let Some(a @ 1..=3) = *d {
                if spatial[a - 1].is_none() {
                    spatial[a - 1] = Some(d1_raw(u, &grid, a - 1));
                }
            }
        }
        let (up, down) = if uses_time {
            (Some(window.level(j + 1).values()), Some(window.level(j - 1).values()))
        } else {
            (None, None)
        };
        let mut out = vec![0.0; grid.len()];
        out.par_chunks_mut(n * n).enumerate().for_each(|(i, plane)| {
            for jj in 0..n {
                for k in 0..n {
                    let idx = (i * n + jj) * n + k;
                    let x = [grid.coord(i), grid.coord(jj), grid.coord(k)];
                    let mut acc = 0.0;
                    for (c, p, d) in &op.terms {
                        let val = match d {
                            None => u[idx],
                            Some(0) => (up.unwrap()[idx] - down.unwrap()[idx]) * inv2dt,
                            Some(a) => spatial[a - 1].as_ref().unwrap()[idx],
                        };
                        acc += c * monomial(p, t, x) * val;
                    }
                    plane[jj * n + k] = acc;
                }
            }
        });
        if out.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("generator application"));
        }
        levels.push(Arc::new(Field::from_values(grid, out)?));
    }
    FieldWindow::new(window.center_time(), levels)
}

/// Applies a first-order operator to every level it can; the result is one
/// level shallower when the operator contains ∂_t.
pub fn apply_first_order(window: &FieldWindow, op: &GammaOp, time_offset: f64) -> Result<FieldWindow> {
    apply_compiled(window, &CompiledOp::new(op)?, time_offset)
}

pub fn apply_generator(window: &FieldWindow, g: Generator) -> Result<FieldWindow> {
    apply_compiled(window, &compiled_generators()[g.index()], 0.0)
}

/// Applies `word` (outermost first), starting from its last factor.
pub fn apply_word_window(window: &FieldWindow, word: &[Generator]) -> Result<FieldWindow> {
    let need: usize = word.iter().map(|g| g.time_order()).sum();
    window.require(need)?;
    let mut w = window.clone();
    for &g in word.iter().rev() {
        w = apply_generator(&w, g)?;
    }
    Ok(w)
}

/// Γ^α u at the window's center time.
pub fn apply_word(window: &FieldWindow, alpha: &MultiIndex10, ordering: &Ordering) -> Result<Field> {
    let w = apply_word_window(window, &alpha.word(ordering))?;
    Ok(w.center().clone())
}

/// Applies an arbitrary-order operator at the center level, evaluating each
/// derivative word by nested centered differences.
pub fn apply_op(window: &FieldWindow, op: &GammaOp) -> Result<Field> {
    let grid = *window.grid();
    let t = window.center_time();
    let mut time_cache: HashMap<u8, FieldWindow> = HashMap::new();
    let mut deriv_cache: HashMap<Exponents, Vec<f64>> = HashMap::new();
    let mut acc = vec![0.0; grid.len()];
    for (c, p, d) in op.to_f64_terms() {
        if !deriv_cache.contains_key(&d) {
            let tw = match time_cache.get(&d.0[0]) {
                Some(w) => w.clone(),
                None => {
                    window.require(d.0[0] as usize)?;
                    let mut w = window.clone();
                    for _ in 0..d.0[0] {
                        w = w.time_derivative()?;
                    }
                    time_cache.insert(d.0[0], w.clone());
                    w
                }
            };
            let mut v = tw.center().values().to_vec();
            for a in 0..3 {
                for _ in 0..d.0[a + 1] {
                    v = d1_raw(&v, &grid, a);
                }
            }
            deriv_cache.insert(d, v);
        }
        let v = &deriv_cache[&d];
        acc.par_iter_mut().enumerate().for_each(|(idx, out)| {
            *out += c * monomial(&p, t, grid.node(idx)) * v[idx];
        });
    }
    Field::from_values(grid, acc)
}

/// Depth-first walk over all α with |α| ≤ max, handing each Γ^α u window to
/// `visit`. Windows keep `extra` levels beyond what deeper words consume, so
/// `extra = 1` leaves room for one more ∂_t (as the energy norm needs).
pub fn visit_words<F>(window: &FieldWindow, max: usize, ordering: &Ordering, extra: usize, mut visit: F) -> Result<()>
where
    F: FnMut(&MultiIndex10, &FieldWindow) -> Result<()>,
{
    window.require(extra)?;
    let start = window.shrink(window.radius().min(max + extra))?;
    visit(&MultiIndex10::zero(), &start)?;
    descend(&start, MultiIndex10::zero(), 10, max, ordering, extra, &mut visit)
}

fn descend<F>(
    window: &FieldWindow,
    alpha: MultiIndex10,
    limit: usize,
    max: usize,
    ordering: &Ordering,
    extra: usize,
    visit: &mut F,
) -> Result<()>
where
    F: FnMut(&MultiIndex10, &FieldWindow) -> Result<()>,
{
    if alpha.size() == max {
        return Ok(());
    }
    let remaining = max - alpha.size() - 1;
    for pos in 0..limit {
        let g = ordering.generators()[pos];
        let need = remaining + extra + g.time_order();
        if window.radius() < need {
            return Err(Error::WindowTooShallow { have: window.radius(), need });
        }
        let next = apply_generator(&window.shrink(need)?, g)?;
        let beta = alpha.with(g);
        visit(&beta, &next)?;
        descend(&next, beta, pos + 1, max, ordering, extra, visit)?;
    }
    Ok(())
}

fn static_window(f: &Field) -> Result<FieldWindow> {
    let l = Arc::new(f.clone());
    FieldWindow::new(0.0, vec![l.clone(), l.clone(), l])
}

/// max |Γ(fg) − Γf·g − f·Γg| for time-independent fields at t = 0.
pub fn leibniz_check(f: &Field, g: &Field, generator: Generator) -> Result<f64> {
    leibniz_check_window(&static_window(f)?, &static_window(g)?, generator)
}

/// Product-rule residual at the center level of two windows on one grid.
pub fn leibniz_check_window(f: &FieldWindow, g: &FieldWindow, generator: Generator) -> Result<f64> {
    if f.radius() != g.radius() || f.center_time() != g.center_time() {
        return Err(Error::Invalid("windows must share center and radius".into()));
    }
    let levels = f.levels().iter().zip(g.levels()).map(|(a, b)| a.mul(b).map(Arc::new)).collect::<Result<Vec<_>>>()?;
    let fg = FieldWindow::new(f.center_time(), levels)?;
    let lhs = apply_generator(&fg, generator)?;
    let gf = apply_generator(f, generator)?;
    let gg = apply_generator(g, generator)?;
    let (l, a, b) = (lhs.center().values(), gf.center().values(), gg.center().values());
    let (fv, gv) = (f.center().values(), g.center().values());
    Ok((0..l.len()).map(|i| (l[i] - a[i] * gv[i] - fv[i] * b[i]).abs()).fold(0.0, f64::max))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::Grid3;

    fn grid(n: usize, l: f64) -> Grid3 {
        Grid3::with_courant(n, l, 0.25).unwrap()
    }

    fn r2(x: [f64; 3]) -> f64 {
        x[0] * x[0] + x[1] * x[1] + x[2] * x[2]
    }

    #[test]
    fn empty_word_is_identity() {
        let g = grid(12, 3.0);
        let w = FieldWindow::sample(g, 0.5, 1, |t, x| t + (-r2(x)).exp()).unwrap();
        assert_eq!(apply_word(&w, &MultiIndex10::zero(), &Ordering::published()).unwrap(), *w.center());
    }

    fn rotation_error(n: usize) -> f64 {
        let g = grid(n, 4.0);
        let w = FieldWindow::sample(g, 0.0, 0, |_, x| (-r2(x)).exp()).unwrap();
        let a = MultiIndex10::from_word(&[Generator::Omega12]);
        apply_word(&w, &a, &Ordering::published()).unwrap().sup_norm()
    }

    #[test]
    fn rotations_annihilate_radial_fields() {
        let (e1, e2) = (rotation_error(25), rotation_error(49));
        assert!(e2 < 0.05, "{e2}");
        assert!((e1 / e2).log2() > 1.7, "{e1} {e2}");
    }

    fn boost_error(n: usize) -> f64 {
        let g = grid(n, 3.0);
        let (k, om) = (1.3f64, (1.0f64 + 1.69).sqrt());
        let u = |t: f64, x: [f64; 3]| (k * x[0] - om * t).cos() * (-0.2 * r2(x)).exp();
        let w = FieldWindow::sample(g, 0.7, 1, u).unwrap();
        let a = MultiIndex10::from_word(&[Generator::Boost1]);
        let f = apply_word(&w, &a, &Ordering::published()).unwrap();
        let t = 0.7;
        (0..g.len())
            .filter(|&i| g.boundary_distance(i) >= 1)
            .map(|i| {
                let x = g.node(i);
                let e = (-0.2 * r2(x)).exp();
                let ph = k * x[0] - om * t;
                let ux = -k * ph.sin() * e - 0.4 * x[0] * ph.cos() * e;
                let ut = om * ph.sin() * e;
                (f.values()[i] - (t * ux + x[0] * ut)).abs()
            })
            .fold(0.0, f64::max)
    }

    #[test]
    fn boost_matches_closed_form() {
        let (e1, e2) = (boost_error(25), boost_error(49));
        assert!((e1 / e2).log2() > 1.7, "{e1} {e2}");
    }

    #[test]
    fn word_depth_is_checked() {
        let g = grid(10, 2.0);
        let w = FieldWindow::sample(g, 0.0, 1, |t, x| t * x[0]).unwrap();
        let a = MultiIndex10::from_word(&[Generator::Boost1, Generator::Dt]);
        assert!(matches!(apply_word(&w, &a, &Ordering::published()), Err(Error::WindowTooShallow { .. })));
    }

    #[test]
    fn word_visit_covers_enumeration() {
        let g = grid(9, 2.0);
        let w = FieldWindow::sample(g, 0.0, 3, |t, x| t + x[0]).unwrap();
        let mut seen = Vec::new();
        visit_words(&w, 2, &Ordering::published(), 1, |a, win| {
            assert!(win.radius() >= 1);
            seen.push(*a);
            Ok(())
        })
        .unwrap();
        let mut all = MultiIndex10::enumerate(2);
        seen.sort();
        all.sort();
        assert_eq!(seen, all);
    }

    #[test]
    fn leibniz_exact_for_affine_factors() {
        let g = grid(10, 2.0);
        let f = Field::from_fn(g, |x| 1.0 + x[0] - 0.5 * x[2]).unwrap();
        let h = Field::from_fn(g, |x| 2.0 - x[0] + x[1]).unwrap();
        assert!(leibniz_check(&f, &h, Generator::D1).unwrap() < 1e-12);
        let c = Field::from_fn(g, |_| 3.0).unwrap();
        let bump = Field::from_fn(g, |x| (-r2(x)).exp()).unwrap();
        assert!(leibniz_check(&c, &bump, Generator::Omega12).unwrap() < 1e-12);
    }

    #[test]
    fn leibniz_residual_is_second_order() {
        let res = |n| {
            let g = grid(n, 4.0);
            let f = Field::from_fn(g, |x| (-r2(x) + 0.3 * x[0]).exp()).unwrap();
            leibniz_check(&f, &f, Generator::Omega12).unwrap()
        };
        let (a, b) = (res(25), res(49));
        assert!((a / b).log2() > 1.7, "{a} {b}");
    }
}
