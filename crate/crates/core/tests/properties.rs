use std::f64::consts::PI;

use proptest::prelude::*;

use kglab::analysis::{fit_power_law, gronwall_verify, integrate_equality, Coefficient, GronwallForm, GronwallInstance, GronwallVerdict};
use kglab::hyperboloid::{duhamel_solve, from_pseudospherical, jacobian, to_pseudospherical, PseudoSphericalPoint};
use kglab::norms::{energy_norm, gamma_sobolev_norm};
use kglab::{FieldWindow, Grid3};

fn window(amp: f64, a: f64, b: f64) -> FieldWindow {
    let grid = Grid3::with_courant(17, 3.0, 0.25).unwrap();
    FieldWindow::sample(grid, 0.5, 3, |t, x| {
        let r2 = x[0] * x[0] + (x[1] - b) * (x[1] - b) + x[2] * x[2];
        amp * (a * t).cos() * (-r2).exp()
    })
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn chart_round_trip(rho in 0.05f64..20.0, theta in 0.0f64..5.0, phi in 0.01f64..PI - 0.01, psi in 0.0f64..2.0 * PI) {
        let (t, x) = from_pseudospherical(PseudoSphericalPoint { rho, theta, phi, psi });
        let back = to_pseudospherical(t, x).unwrap();
        let (t2, x2) = from_pseudospherical(back);
        let scale = t.max(1.0);
        prop_assert!((t2 - t).abs() <= 1e-12 * scale);
        for a in 0..3 {
            prop_assert!((x2[a] - x[a]).abs() <= 1e-12 * scale);
        }
        prop_assert!((back.rho - rho).abs() <= 1e-12 * scale);
    }

    #[test]
    fn duhamel_is_linear(a in -3.0f64..3.0, b in -3.0f64..3.0, v0 in -1.0f64..1.0, w0 in -1.0f64..1.0, k in 0.1f64..4.0) {
        let rho: Vec<f64> = (0..200).map(|i| 1.0 + 0.02 * i as f64).collect();
        let f: Vec<f64> = rho.iter().map(|r| (k * r).sin()).collect();
        let g: Vec<f64> = rho.iter().map(|r| r * r).collect();
        let mix: Vec<f64> = f.iter().zip(&g).map(|(x, y)| a * x + b * y).collect();
        let lhs = duhamel_solve(&rho, &mix, a * v0 + b * w0, a * w0 - b * v0);
        let p = duhamel_solve(&rho, &f, v0, w0);
        let q = duhamel_solve(&rho, &g, w0, -v0);
        for i in 0..rho.len() {
            let rhs = a * p[i] + b * q[i];
            prop_assert!((lhs[i] - rhs).abs() <= 1e-12 * (1.0 + rhs.abs()));
        }
    }

    #[test]
    fn power_laws_are_fitted_exactly(p in -3.0f64..-0.5, c in 0.1f64..10.0) {
        let times: Vec<f64> = (0..=200).map(|i| 0.1 * i as f64).collect();
        let sups: Vec<f64> = times.iter().map(|t| c * (1.0 + t).powf(p)).collect();
        let fit = fit_power_law(&times, &sups, 5.0).unwrap();
        prop_assert!((fit.exponent - p).abs() < 1e-9);
    }

    #[test]
    fn equality_trajectories_are_never_violated(a in -1.0f64..1.0, b in 0.0f64..1.0, u0 in 0.1f64..3.0, w in 0.0f64..3.0) {
        let times: Vec<f64> = (0..=40).map(|i| 0.1 * i as f64).collect();
        let bf = Coefficient::function(move |t| b * (1.0 + (w * t).sin()));
        let u = integrate_equality(&Coefficient::Constant(a), &bf, GronwallForm::Standard, u0, &times, 200);
        let inst = GronwallInstance { label: "prop".into(), a: Coefficient::Constant(a), b: bf, form: GronwallForm::Standard, times, u };
        match gronwall_verify(&inst).unwrap() {
            GronwallVerdict::Holds(checks) => {
                for c in checks {
                    prop_assert!(c.min_relative_margin >= -1e-8, "{c:?}");
                }
            }
            other => prop_assert!(false, "{other:?}"),
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn energy_is_homogeneous(amp in 0.1f64..2.0, c in -5.0f64..5.0, a in 0.0f64..2.0) {
        let w = window(amp, a, 0.2);
        let scaled = w.scaled(c).unwrap();
        let (e, es) = (energy_norm(&w).unwrap(), energy_norm(&scaled).unwrap());
        prop_assert!((es - c.abs() * e).abs() <= 1e-12 * (1.0 + es));
        let (g, gs) = (gamma_sobolev_norm(&w, 1).unwrap(), gamma_sobolev_norm(&scaled, 1).unwrap());
        prop_assert!((gs - c.abs() * g).abs() <= 1e-12 * (1.0 + gs));
    }

    #[test]
    fn sobolev_norms_grow_with_order(a in 0.0f64..2.0, b in -0.5f64..0.5) {
        let w = window(1.0, a, b);
        let norms: Vec<f64> = (0..=2).map(|n| gamma_sobolev_norm(&w, n).unwrap()).collect();
        prop_assert!(norms[0] == energy_norm(&w).unwrap());
        prop_assert!(norms[0] <= norms[1] && norms[1] <= norms[2], "{norms:?}");
    }

    /// ∫J over a chart box against the same region's volume measured in (t, r).
    #[test]
    fn jacobian_matches_minkowski_volume(rho1 in 0.5f64..1.5, width in 0.5f64..2.0, theta1 in 0.3f64..1.5) {
        let rho2 = rho1 + width;
        let m = 60;
        let mut chart = 0.0;
        for i in 0..m {
            let rho = rho1 + (i as f64 + 0.5) * width / m as f64;
            for j in 0..m {
                let theta = (j as f64 + 0.5) * theta1 / m as f64;
                for k in 0..m {
                    let phi = (k as f64 + 0.5) * PI / m as f64;
                    chart += jacobian(PseudoSphericalPoint { rho, theta, phi, psi: 0.0 });
                }
            }
        }
        chart *= (width / m as f64) * (theta1 / m as f64) * (PI / m as f64) * 2.0 * PI;

        let q = 1500;
        let (t_max, r_max) = (rho2 * theta1.cosh(), rho2 * theta1.sinh());
        let (dt, dr) = (t_max / q as f64, r_max / q as f64);
        let mut direct = 0.0;
        for i in 0..q {
            let t = (i as f64 + 0.5) * dt;
            for j in 0..q {
                let r = (j as f64 + 0.5) * dr;
                let s2 = t * t - r * r;
                if s2 >= rho1 * rho1 && s2 <= rho2 * rho2 && r <= t * theta1.tanh() {
                    direct += 4.0 * PI * r * r;
                }
            }
        }
        direct *= dt * dr;
        prop_assert!((chart - direct).abs() <= 0.01 * direct, "{chart} vs {direct}");
    }
}
