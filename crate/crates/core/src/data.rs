//! Named initial-data families and closed-form profiles.
//!
//! All radial profiles are C∞ with compact support in |x| ≤ R₀:
//!
//! * `bump`: e·exp(−1/(1 − (r/R₀)²)), value 1 at the origin.
//! * `gaussian`: exp(−(r/(wR₀))²)·S(2r/R₀ − 1), where S(s) = ψ(1−s)/(ψ(1−s)+ψ(s))
//!   with ψ(s) = e^{−1/s} for s > 0 is the smooth step from 1 (s ≤ 0) to 0 (s ≥ 1).
//! * `ring`: the bump profile centered on the shell r = R₀/2 with half-width R₀/2.

use std::ops::{Add, Div, Mul, Neg, Sub};

use crate::error::{Error, Result};
use crate::fields::{Field, Grid3};

/// Value with first and second derivative in one variable.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Jet {
    pub v: f64,
    pub d: f64,
    pub dd: f64,
}

impl Jet {
    pub fn var(x: f64) -> Self {
        Jet { v: x, d: 1.0, dd: 0.0 }
    }

    pub fn constant(c: f64) -> Self {
        Jet { v: c, d: 0.0, dd: 0.0 }
    }

    fn chain(self, f: f64, f1: f64, f2: f64) -> Self {
        Jet { v: f, d: f1 * self.d, dd: f2 * self.d * self.d + f1 * self.dd }
    }

    pub fn exp(self) -> Self {
        let e = self.v.exp();
        self.chain(e, e, e)
    }

    pub fn sin(self) -> Self {
        let (s, c) = self.v.sin_cos();
        self.chain(s, c, -s)
    }

    pub fn cos(self) -> Self {
        let (s, c) = self.v.sin_cos();
        self.chain(c, -s, -c)
    }

    pub fn recip(self) -> Self {
        let r = 1.0 / self.v;
        self.chain(r, -r * r, 2.0 * r * r * r)
    }

    pub fn powf(self, p: f64) -> Self {
        self.chain(self.v.powf(p), p * self.v.powf(p - 1.0), p * (p - 1.0) * self.v.powf(p - 2.0))
    }
}

impl Add for Jet {
    type Output = Jet;
    fn add(self, o: Jet) -> Jet {
        Jet { v: self.v + o.v, d: self.d + o.d, dd: self.dd + o.dd }
    }
}

impl Sub for Jet {
    type Output = Jet;
    fn sub(self, o: Jet) -> Jet {
        Jet { v: self.v - o.v, d: self.d - o.d, dd: self.dd - o.dd }
    }
}

impl Neg for Jet {
    type Output = Jet;
    fn neg(self) -> Jet {
        Jet { v: -self.v, d: -self.d, dd: -self.dd }
    }
}

impl Mul for Jet {
    type Output = Jet;
    fn mul(self, o: Jet) -> Jet {
        Jet { v: self.v * o.v, d: self.d * o.v + self.v * o.d, dd: self.dd * o.v + 2.0 * self.d * o.d + self.v * o.dd }
    }
}

impl Div for Jet {
    type Output = Jet;
    fn div(self, o: Jet) -> Jet {
        self * o.recip()
    }
}

impl Mul<Jet> for f64 {
    type Output = Jet;
    fn mul(self, o: Jet) -> Jet {
        Jet { v: self * o.v, d: self * o.d, dd: self * o.dd }
    }
}

fn psi(s: Jet) -> Jet {
    if s.v <= 0.0 {
        Jet::constant(0.0)
    } else {
        (-s.recip()).exp()
    }
}

/// Smooth step: 1 for s ≤ 0, 0 for s ≥ 1.
pub fn smooth_step(s: Jet) -> Jet {
    if s.v <= 0.0 {
        return Jet::constant(1.0);
    }
    if s.v >= 1.0 {
        return Jet::constant(0.0);
    }
    let a = psi(Jet::constant(1.0) - s);
    a / (a + psi(s))
}

fn bump_of(q: Jet) -> Jet {
    // e·exp(−1/(1 − q²)) for |q| < 1
    if q.v.abs() >= 1.0 {
        return Jet::constant(0.0);
    }
    let one = Jet::constant(1.0);
    (one - (one - q * q).recip()).exp()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum RadialProfile {
    Bump { radius: f64 },
    Gaussian { radius: f64, width: f64 },
    Ring { radius: f64 },
}

impl RadialProfile {
    pub fn parse(name: &str, radius: f64, width: f64) -> Result<Self> {
        if !(radius.is_finite() && radius > 0.0) {
            return Err(Error::Invalid(format!("data radius {radius} must be positive")));
        }
        match name {
            "bump" => Ok(RadialProfile::Bump { radius }),
            "gaussian" => {
                if !(width.is_finite() && width > 0.0) {
                    return Err(Error::Invalid(format!("gaussian width {width} must be positive")));
                }
                Ok(RadialProfile::Gaussian { radius, width })
            }
            "ring" => Ok(RadialProfile::Ring { radius }),
            _ => Err(Error::Invalid(format!("unknown data family {name:?} (expected gaussian, bump or ring)"))),
        }
    }

    pub fn radius(&self) -> f64 {
        match *self {
            RadialProfile::Bump { radius } | RadialProfile::Gaussian { radius, .. } | RadialProfile::Ring { radius } => radius,
        }
    }

    pub fn jet(&self, r: Jet) -> Jet {
        match *self {
            RadialProfile::Bump { radius } => bump_of((1.0 / radius) * r),
            RadialProfile::Gaussian { radius, width } => {
                let s = (1.0 / (width * radius)) * r;
                let g = (-(s * s)).exp();
                g * smooth_step((2.0 / radius) * r - Jet::constant(1.0))
            }
            RadialProfile::Ring { radius } => {
                let half = 0.5 * radius;
                bump_of((1.0 / half) * (r - Jet::constant(half)))
            }
        }
    }

    pub fn value(&self, x: [f64; 3]) -> f64 {
        self.jet(Jet::constant(norm(x))).v
    }

    /// Δφ = φ'' + 2φ'/r, with the limit 3φ''(0) at the origin.
    pub fn laplacian(&self, x: [f64; 3]) -> f64 {
        let r = norm(x);
        let j = self.jet(Jet::var(r));
        if r < 1e-12 {
            3.0 * j.dd
        } else {
            j.dd + 2.0 * j.d / r
        }
    }

    pub fn field(&self, grid: Grid3) -> Result<Field> {
        Field::from_fn(grid, |x| self.value(x))
    }
}

pub fn norm(x: [f64; 3]) -> f64 {
    (x[0] * x[0] + x[1] * x[1] + x[2] * x[2]).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn numeric_derivatives(f: impl Fn(f64) -> f64, x: f64) -> (f64, f64) {
        let h = 1e-4;
        ((f(x + h) - f(x - h)) / (2.0 * h), (f(x + h) - 2.0 * f(x) + f(x - h)) / (h * h))
    }

    #[test]
    fn jets_match_finite_differences() {
        for p in [
            RadialProfile::Bump { radius: 1.3 },
            RadialProfile::Gaussian { radius: 1.45, width: 0.5 },
            RadialProfile::Ring { radius: 2.0 },
        ] {
            for r in [0.2, 0.5, 0.8, 1.1] {
                let j = p.jet(Jet::var(r));
                let (d, dd) = numeric_derivatives(|s| p.jet(Jet::constant(s)).v, r);
                assert!((j.d - d).abs() < 1e-6, "{p:?} r={r}");
                assert!((j.dd - dd).abs() < 1e-4, "{p:?} r={r}: {} vs {dd}", j.dd);
            }
        }
    }

    #[test]
    fn profiles_have_compact_support() {
        let p = RadialProfile::Gaussian { radius: 1.45, width: 0.5 };
        assert_eq!(p.value([1.45, 0.0, 0.0]), 0.0);
        assert_eq!(p.value([0.0, 0.0, 0.0]), 1.0);
        assert!((RadialProfile::Bump { radius: 1.0 }.value([0.0; 3]) - 1.0).abs() < 1e-15);
        assert_eq!(RadialProfile::Ring { radius: 1.0 }.value([0.0; 3]), 0.0);
        assert!(RadialProfile::Ring { radius: 1.0 }.value([0.5, 0.0, 0.0]) > 0.99);
    }

    #[test]
    fn laplacian_of_radial_profile() {
        let p = RadialProfile::Gaussian { radius: 4.0, width: 0.25 };
        // far from the cutoff the profile is exp(−r²): Δ = (4r² − 6)e^{−r²}
        for x in [[0.0, 0.0, 0.0], [0.3, -0.2, 0.5], [1.0, 0.0, 0.0]] {
            let r2 = x[0] * x[0] + x[1] * x[1] + x[2] * x[2];
            assert!((p.laplacian(x) - (4.0 * r2 - 6.0) * (-r2).exp()).abs() < 1e-12);
        }
    }

    #[test]
    fn parse_rejects_unknown_family() {
        assert!(RadialProfile::parse("square", 1.0, 0.5).is_err());
        assert!(RadialProfile::parse("bump", -1.0, 0.5).is_err());
    }
}
