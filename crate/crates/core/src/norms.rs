//! Energy, sup and generalized Sobolev norms of field windows, their
//! space-time suprema over a run, and the data functional Δ_N.
//!
//! L² norms are Riemann sums with weight h³. The time derivative is the
//! centered difference across the window center; spatial gradients in the
//! energy use forward differences, which is the gradient the leapfrog scheme
//! conserves. Sup norms use centered differences everywhere.

use std::collections::HashMap;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fields::{check_data_support, d1_raw, Field, FieldWindow};
use crate::gamma::{visit_words, MultiIndex10, Ordering};
use crate::solver::{RunSeries, SourceSpec};

/// Per-time norms at one order N.
#[derive(Clone, Debug, PartialEq)]
pub struct NormReport {
    pub t: f64,
    pub order: usize,
    pub energy: f64,
    pub sup: f64,
    pub gamma_sobolev: f64,
    pub gamma_sup: f64,
}

/// Suprema over the recorded horizon [0, `horizon`].
#[derive(Clone, Debug, PartialEq)]
pub struct SpacetimeNormReport {
    pub horizon: f64,
    pub weight: f64,
    pub order: usize,
    /// ‖u‖_N
    pub sobolev: f64,
    /// |u|_{k,N}
    pub weighted_sup: f64,
    /// E_{k,N}(g)
    pub source: f64,
    /// Δ_N
    pub delta: f64,
}

/// Γ-norms for every order 0..=N, each cumulative over |α| ≤ order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct GammaNorms {
    pub sobolev: Vec<f64>,
    pub sup: Vec<f64>,
}

fn time_derivative_values(w: &FieldWindow) -> Result<Vec<f64>> {
    w.require(1)?;
    let inv = 0.5 / w.dt();
    let (a, b) = (w.level(1).values(), w.level(-1).values());
    Ok(a.par_iter().zip(b).map(|(x, y)| (x - y) * inv).collect())
}

/// 𝓔 at the window center.
pub fn energy_norm(w: &FieldWindow) -> Result<f64> {
    let ut = time_derivative_values(w)?;
    let grid = *w.grid();
    let u = w.center().values();
    let n = grid.n();
    let inv_h = 1.0 / grid.h();
    let sum: f64 = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut acc = 0.0;
            for j in 0..n {
                for k in 0..n {
                    let idx = (i * n + j) * n + k;
                    let v = u[idx];
                    acc += v * v + ut[idx] * ut[idx];
                    if i + 1 < n {
                        let d = (u[idx + n * n] - v) * inv_h;
                        acc += d * d;
                    }
                    if j + 1 < n {
                        let d = (u[idx + n] - v) * inv_h;
                        acc += d * d;
                    }
                    if k + 1 < n {
                        let d = (u[idx + 1] - v) * inv_h;
                        acc += d * d;
                    }
                }
            }
            acc
        })
        .collect::<Vec<f64>>()
        .iter()
        .sum();
    let h = grid.h();
    Ok((sum * h * h * h).sqrt())
}

fn sup(v: &[f64]) -> f64 {
    v.par_iter().map(|x| x.abs()).reduce(|| 0.0, f64::max)
}

/// E = |u|_∞ + Σ_a |∂_a u|_∞ at the window center.
pub fn energy_sup(w: &FieldWindow) -> Result<f64> {
    let ut = time_derivative_values(w)?;
    let grid = *w.grid();
    let u = w.center().values();
    let mut total = sup(u) + sup(&ut);
    for a in 0..3 {
        total += sup(&d1_raw(u, &grid, a));
    }
    Ok(total)
}

/// Both Γ-norm families for orders 0..=`order` in one pass over the words.
pub fn gamma_norms(w: &FieldWindow, order: usize, ordering: &Ordering) -> Result<GammaNorms> {
    w.require(order + 1)?;
    let mut by_size = GammaNorms { sobolev: vec![0.0; order + 1], sup: vec![0.0; order + 1] };
    visit_words(w, order, ordering, 1, |alpha, win| {
        by_size.sobolev[alpha.size()] += energy_norm(win)?;
        by_size.sup[alpha.size()] += energy_sup(win)?;
        Ok(())
    })?;
    for n in 1..=order {
        by_size.sobolev[n] += by_size.sobolev[n - 1];
        by_size.sup[n] += by_size.sup[n - 1];
    }
    Ok(by_size)
}

/// ‖u(t,·)‖_{Γ,N} in the published ordering.
pub fn gamma_sobolev_norm(w: &FieldWindow, order: usize) -> Result<f64> {
    w.require(order + 1)?;
    let mut total = 0.0;
    visit_words(w, order, &Ordering::published(), 1, |_, win| {
        total += energy_norm(win)?;
        Ok(())
    })?;
    Ok(total)
}

/// |u(t,·)|_{Γ,N} in the published ordering.
pub fn gamma_sup_norm(w: &FieldWindow, order: usize) -> Result<f64> {
    w.require(order + 1)?;
    let mut total = 0.0;
    visit_words(w, order, &Ordering::published(), 1, |_, win| {
        total += energy_sup(win)?;
        Ok(())
    })?;
    Ok(total)
}

/// 𝓔(Γ^α u) for every |α| ≤ order, in [`MultiIndex10::enumerate`] order.
pub fn word_energies(w: &FieldWindow, order: usize, ordering: &Ordering) -> Result<Vec<(MultiIndex10, f64)>> {
    w.require(order + 1)?;
    let mut found = HashMap::new();
    visit_words(w, order, ordering, 1, |alpha, win| {
        found.insert(*alpha, energy_norm(win)?);
        Ok(())
    })?;
    Ok(MultiIndex10::enumerate(order).into_iter().map(|a| (a, found[&a])).collect())
}

/// Builds the solution window around t = 0 from Cauchy data.
pub trait WindowSynthesizer {
    fn initial_window(&self, u0: &Field, u1: &Field, radius: usize) -> Result<FieldWindow>;
}

/// Δ_N from the data alone: synthesize the t = 0 window with the equation
/// and take its Γ-Sobolev norm.
pub fn delta_n(u0: &Field, u1: &Field, order: usize, equation: &dyn WindowSynthesizer) -> Result<f64> {
    check_data_support(u0, "initial displacement")?;
    check_data_support(u1, "initial velocity")?;
    let w = equation.initial_window(u0, u1, order + 1)?;
    gamma_sobolev_norm(&w, order)
}

/// ‖u‖_N, |u|_{k,N}, E_{k,N}(g) and Δ_N over the samples of a run.
pub fn spacetime_norms(series: &RunSeries, k: f64, order: usize, source: &SourceSpec) -> Result<SpacetimeNormReport> {
    let first = series.samples.first().ok_or_else(|| Error::Invalid("empty run series".into()))?;
    if order >= first.gamma_sobolev.len() {
        return Err(Error::Invalid(format!(
            "series records Γ-norms up to order {}, requested {order}",
            first.gamma_sobolev.len() - 1
        )));
    }
    let mut report = SpacetimeNormReport {
        horizon: series.samples.last().map_or(0.0, |s| s.t),
        weight: k,
        order,
        sobolev: 0.0,
        weighted_sup: 0.0,
        source: 0.0,
        delta: first.gamma_sobolev[order],
    };
    for s in &series.samples {
        report.sobolev = report.sobolev.max(s.gamma_sobolev[order]);
        report.weighted_sup = report.weighted_sup.max((1.0 + s.t).powf(k) * s.gamma_sup[order]);
        if !source.is_zero() {
            let g = source.window(series.grid, s.t, order + 1)?;
            report.source = report.source.max((1.0 + s.t).powf(k) * gamma_sobolev_norm(&g, order)?);
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::Grid3;

    fn static_window(f: Field) -> FieldWindow {
        FieldWindow::from_fields(0.0, vec![f; 7]).unwrap()
    }

    #[test]
    fn zero_window_has_zero_norms() {
        let g = Grid3::with_courant(16, 4.0, 0.25).unwrap();
        let w = static_window(Field::zeros(g));
        assert_eq!(energy_norm(&w).unwrap(), 0.0);
        assert_eq!(energy_sup(&w).unwrap(), 0.0);
        assert_eq!(gamma_sobolev_norm(&w, 2).unwrap(), 0.0);
        assert_eq!(gamma_sup_norm(&w, 2).unwrap(), 0.0);
    }

    fn gaussian_energy_error(n: usize) -> f64 {
        // ∫e^{-2r²} = (π/2)^{3/2}; ∫|∇e^{-r²}|² = ∫4r²e^{-2r²} = 3(π/2)^{3/2}
        let g = Grid3::with_courant(n, 5.0, 0.25).unwrap();
        let f = Field::from_fn(g, |x| (-(x[0] * x[0] + x[1] * x[1] + x[2] * x[2])).exp()).unwrap();
        let exact = (4.0 * (std::f64::consts::PI / 2.0).powf(1.5)).sqrt();
        (energy_norm(&static_window(f)).unwrap() - exact).abs() / exact
    }

    #[test]
    fn gaussian_energy_matches_closed_form() {
        assert!(gaussian_energy_error(64) < 0.01);
        let ratio = gaussian_energy_error(32) / gaussian_energy_error(64);
        assert!(ratio > 3.0, "ratio {ratio}");
    }

    #[test]
    fn order_zero_collapses_to_energy_and_sup() {
        let g = Grid3::with_courant(20, 4.0, 0.25).unwrap();
        let w = FieldWindow::sample(g, 0.3, 2, |t, x| (-(x[0] * x[0] + 2.0 * x[1] * x[1] + x[2] * x[2])).exp() * (1.0 + t))
            .unwrap();
        assert_eq!(gamma_sobolev_norm(&w, 0).unwrap(), energy_norm(&w).unwrap());
        assert_eq!(gamma_sup_norm(&w, 0).unwrap(), energy_sup(&w).unwrap());
        let all = gamma_norms(&w, 1, &Ordering::published()).unwrap();
        assert!((all.sobolev[1] - gamma_sobolev_norm(&w, 1).unwrap()).abs() < 1e-12 * all.sobolev[1]);
        assert!(all.sobolev[1] >= all.sobolev[0] && all.sup[1] >= all.sup[0]);
    }

    #[test]
    fn sup_of_bump_matches_hand_value() {
        // u = e^{-r²}: |u|_∞ = 1, |∂_i u|_∞ = √2 e^{-1/2}
        let g = Grid3::with_courant(81, 4.0, 0.25).unwrap();
        let f = Field::from_fn(g, |x| (-(x[0] * x[0] + x[1] * x[1] + x[2] * x[2])).exp()).unwrap();
        let hand = 1.0 + 3.0 * 2f64.sqrt() * (-0.5f64).exp();
        let e = energy_sup(&static_window(f)).unwrap();
        assert!((e - hand).abs() < 0.02, "{e} vs {hand}");
    }

    #[test]
    fn word_energies_sum_to_sobolev_norm() {
        let g = Grid3::with_courant(16, 4.0, 0.25).unwrap();
        let w = FieldWindow::sample(g, 0.0, 3, |t, x| (-(x[0] * x[0] + x[1] * x[1] + x[2] * x[2])).exp() * t.cos()).unwrap();
        let words = word_energies(&w, 2, &Ordering::published()).unwrap();
        assert_eq!(words.len(), 66);
        let total: f64 = words.iter().map(|(_, e)| e).sum();
        let direct = gamma_sobolev_norm(&w, 2).unwrap();
        assert!((total - direct).abs() < 1e-12 * direct);
    }
}
