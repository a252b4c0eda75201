//! Polynomial-coefficient differential operators in normal order: every term
//! is `c · t^a x1^b x2^c x3^d · ∂_t^p ∂_1^q ∂_2^r ∂_3^s` with `c` rational.

use std::collections::BTreeMap;
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

pub type Rational = BigRational;

/// Exponents over the variables `(t, x1, x2, x3)`, used both for coefficient
/// monomials and for derivative words.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Exponents(pub [u8; 4]);

impl Exponents {
    pub fn unit(var: usize) -> Self {
        let mut e = [0; 4];
        e[var] = 1;
        Exponents(e)
    }

    pub fn degree(&self) -> u32 {
        self.0.iter().map(|&e| e as u32).sum()
    }
}

pub type Key = (Exponents, Exponents);

pub fn int(v: i64) -> Rational {
    Rational::from_integer(BigInt::from(v))
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct GammaOp {
    terms: BTreeMap<Key, Rational>,
}

impl GammaOp {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn identity() -> Self {
        Self::term(int(1), Exponents::default(), Exponents::default())
    }

    pub fn scalar(c: Rational) -> Self {
        Self::term(c, Exponents::default(), Exponents::default())
    }

    pub fn term(c: Rational, coefficient: Exponents, derivative: Exponents) -> Self {
        let mut op = Self::zero();
        op.add_term((coefficient, derivative), c);
        op
    }

    /// Multiplication by `t` (var 0) or `x_var`.
    pub fn coordinate(var: usize) -> Self {
        Self::term(int(1), Exponents::unit(var), Exponents::default())
    }

    /// `∂_t` (var 0) or `∂_var`.
    pub fn derivative(var: usize) -> Self {
        Self::term(int(1), Exponents::default(), Exponents::unit(var))
    }

    /// Lowered-index sign convention: ∂₀ = −∂_t, ∂_i unchanged.
    pub fn signed_partial(a: usize) -> Self {
        if a == 0 {
            -Self::derivative(0)
        } else {
            Self::derivative(a)
        }
    }

    /// `x_a` with `x_0 = t`.
    pub fn signed_coordinate(a: usize) -> Self {
        Self::coordinate(a)
    }

    /// Ω_ab = x_a ∂_b − x_b ∂_a with lowered indices; Ω_0i = t∂_i + x_i∂_t.
    pub fn omega(a: usize, b: usize) -> Self {
        Self::signed_coordinate(a) * Self::signed_partial(b) - Self::signed_coordinate(b) * Self::signed_partial(a)
    }

    /// □ = ∂_t² − Δ.
    pub fn wave() -> Self {
        let mut op = Self::derivative(0) * Self::derivative(0);
        for i in 1..4 {
            op = op - Self::derivative(i) * Self::derivative(i);
        }
        op
    }

    /// □₁ = □ + 1.
    pub fn klein_gordon() -> Self {
        Self::wave() + Self::identity()
    }

    /// Operator product `self ∘ other`, brought back to normal order.
    pub fn compose(&self, other: &GammaOp) -> GammaOp {
        let mut out = GammaOp::zero();
        for ((p, alpha), a) in &self.terms {
            for ((q, beta), b) in &other.terms {
                let ab = a * b;
                // p ∂^α (q ∂^β) = p Σ_{γ≤α} C(α,γ) (∂^γ q) ∂^{α−γ+β}
                for gamma in sub_exponents(alpha) {
                    let mut coef = BigInt::one();
                    let mut mono = [0u8; 4];
                    let mut deriv = [0u8; 4];
                    let mut vanishes = false;
                    for v in 0..4 {
                        let g = gamma.0[v];
                        if g > q.0[v] {
                            vanishes = true;
                            break;
                        }
                        coef *= binomial(alpha.0[v], g) * falling(q.0[v], g);
                        mono[v] = p.0[v] + q.0[v] - g;
                        deriv[v] = alpha.0[v] - g + beta.0[v];
                    }
                    if vanishes {
                        continue;
                    }
                    out.add_term((Exponents(mono), Exponents(deriv)), &ab * Rational::from_integer(coef));
                }
            }
        }
        out
    }

    pub fn commutator(&self, other: &GammaOp) -> GammaOp {
        self.compose(other) - other.compose(self)
    }

    pub fn scale(&self, c: &Rational) -> GammaOp {
        let mut out = GammaOp::zero();
        for (k, v) in &self.terms {
            out.add_term(*k, v * c);
        }
        out
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Key, &Rational)> {
        self.terms.iter()
    }

    pub fn coefficient(&self, key: &Key) -> Rational {
        self.terms.get(key).cloned().unwrap_or_else(Rational::zero)
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    /// Highest derivative order among the terms.
    pub fn order(&self) -> u32 {
        self.terms.keys().map(|(_, d)| d.degree()).max().unwrap_or(0)
    }

    /// `derivative order − polynomial degree` when all terms agree, which holds
    /// for every word in the generators.
    pub fn grade(&self) -> Option<i64> {
        let mut grades = self.terms.keys().map(|(p, d)| d.degree() as i64 - p.degree() as i64);
        let first = grades.next()?;
        grades.all(|g| g == first).then_some(first)
    }

    fn add_term(&mut self, key: Key, c: Rational) {
        if c.is_zero() {
            return;
        }
        let entry = self.terms.entry(key).or_insert_with(Rational::zero);
        *entry += c;
        if entry.is_zero() {
            self.terms.remove(&key);
        }
    }

    /// Floating-point copy of the terms for discrete evaluation.
    pub fn to_f64_terms(&self) -> Vec<(f64, Exponents, Exponents)> {
        self.terms.iter().map(|((p, d), c)| (c.to_f64().unwrap_or(f64::NAN), *p, *d)).collect()
    }
}

fn sub_exponents(e: &Exponents) -> Vec<Exponents> {
    let mut out = vec![Exponents::default()];
    for v in 0..4 {
        let mut next = Vec::new();
        for base in &out {
            for g in 0..=e.0[v] {
                let mut x = *base;
                x.0[v] = g;
                next.push(x);
            }
        }
        out = next;
    }
    out
}

fn binomial(n: u8, k: u8) -> BigInt {
    let mut r = BigInt::one();
    for i in 0..k {
        r = r * BigInt::from(n - i) / BigInt::from(i + 1);
    }
    r
}

fn falling(n: u8, k: u8) -> BigInt {
    (0..k).fold(BigInt::one(), |acc, i| acc * BigInt::from(n - i))
}

impl Add for GammaOp {
    type Output = GammaOp;
    fn add(mut self, rhs: GammaOp) -> GammaOp {
        for (k, v) in rhs.terms {
            self.add_term(k, v);
        }
        self
    }
}

impl Sub for GammaOp {
    type Output = GammaOp;
    fn sub(self, rhs: GammaOp) -> GammaOp {
        self + (-rhs)
    }
}

impl Neg for GammaOp {
    type Output = GammaOp;
    fn neg(self) -> GammaOp {
        GammaOp { terms: self.terms.into_iter().map(|(k, v)| (k, -v)).collect() }
    }
}

impl Mul for GammaOp {
    type Output = GammaOp;
    fn mul(self, rhs: GammaOp) -> GammaOp {
        self.compose(&rhs)
    }
}

impl Mul<&GammaOp> for &GammaOp {
    type Output = GammaOp;
    fn mul(self, rhs: &GammaOp) -> GammaOp {
        self.compose(rhs)
    }
}

const VARS: [&str; 4] = ["t", "x1", "x2", "x3"];
const DERIVS: [&str; 4] = ["dt", "d1", "d2", "d3"];

impl fmt::Display for GammaOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        for (n, ((p, d), c)) in self.terms.iter().enumerate() {
            let mut factors = Vec::new();
            for (names, e) in [(&VARS, p), (&DERIVS, d)] {
                for v in 0..4 {
                    match e.0[v] {
                        0 => {}
                        1 => factors.push(names[v].to_string()),
                        k => factors.push(format!("{}^{}", names[v], k)),
                    }
                }
            }
            let sign = if c.is_negative() { "-" } else { "+" };
            if n == 0 {
                if c.is_negative() {
                    write!(f, "-")?;
                }
            } else {
                write!(f, " {sign} ")?;
            }
            let mag = c.abs();
            if factors.is_empty() {
                write!(f, "{mag}")?;
            } else if mag.is_one() {
                write!(f, "{}", factors.join("*"))?;
            } else {
                write!(f, "{mag}*{}", factors.join("*"))?;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn x(i: usize) -> GammaOp {
        GammaOp::coordinate(i)
    }
    fn d(i: usize) -> GammaOp {
        GammaOp::derivative(i)
    }

    #[test]
    fn product_rule() {
        assert_eq!(d(1) * x(1), x(1) * d(1) + GammaOp::identity());
        assert_eq!((d(1) * d(1)) * (x(1) * x(1)), x(1) * x(1) * d(1) * d(1) + (x(1) * d(1)).scale(&int(4)) + GammaOp::scalar(int(2)));
    }

    #[test]
    fn rotation_square() {
        let o = GammaOp::omega(1, 2);
        let expected = x(1) * x(1) * d(2) * d(2) + x(2) * x(2) * d(1) * d(1)
            - (x(1) * x(2) * d(1) * d(2)).scale(&int(2))
            - x(1) * d(1)
            - x(2) * d(2);
        assert_eq!(&o * &o, expected);
    }

    #[test]
    fn boost_square() {
        let o = GammaOp::omega(0, 1);
        assert_eq!(o, x(0) * d(1) + x(1) * d(0));
        let expected = x(0) * x(0) * d(1) * d(1) + x(1) * x(1) * d(0) * d(0)
            + (x(0) * x(1) * d(0) * d(1)).scale(&int(2))
            + x(0) * d(0)
            + x(1) * d(1);
        assert_eq!(&o * &o, expected);
    }

    #[test]
    fn partials_commute_and_box_difference_is_identity() {
        assert!(d(1).commutator(&d(2)).is_zero());
        assert_eq!(GammaOp::klein_gordon() - GammaOp::wave(), GammaOp::identity());
    }

    #[test]
    fn display_is_readable() {
        let o = GammaOp::omega(1, 2);
        assert_eq!(o.to_string(), "-x2*d1 + x1*d2");
        assert_eq!(GammaOp::zero().to_string(), "0");
    }

    #[test]
    fn grade_of_words() {
        assert_eq!(GammaOp::omega(0, 3).grade(), Some(0));
        assert_eq!((d(2) * GammaOp::omega(1, 2)).grade(), Some(1));
        assert_eq!((d(1) + x(1)).grade(), None);
    }
}
