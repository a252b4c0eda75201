//! The ten Γ operators: exact symbolic algebra, machine checks of the
//! commutator identities, and discrete application to field windows.

mod discrete;
mod op;
mod span;
mod verify;

pub use discrete::{
    apply_first_order, apply_generator, apply_op, apply_word, apply_word_window, leibniz_check,
    leibniz_check_window, visit_words, CompiledOp,
};
pub use op::{int, Exponents, GammaOp, Key, Rational};
pub use span::{in_span, SpanSolver};
pub use verify::{
    certify_order_reduction, hyperbolic_laplacian, rho_form_expansion, scaling_field, verify_box_invariance,
    verify_commutator_order_reduction, verify_jacobi, verify_rho_form_identity, verify_lie_closure, BoxReport,
    Commutand, JacobiReport, OrderReductionReport, ReductionCase, StructureTable,
};

use crate::error::{Error, Result};

/// Generators in the published ordering (∂_t, ∂₁, ∂₂, ∂₃, Ω₁₂, Ω₂₃, Ω₃₁, Ω₀₁, Ω₀₂, Ω₀₃).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Generator {
    Dt,
    D1,
    D2,
    D3,
    Omega12,
    Omega23,
    Omega31,
    Boost1,
    Boost2,
    Boost3,
}

impl Generator {
    pub const ALL: [Generator; 10] = [
        Generator::Dt,
        Generator::D1,
        Generator::D2,
        Generator::D3,
        Generator::Omega12,
        Generator::Omega23,
        Generator::Omega31,
        Generator::Boost1,
        Generator::Boost2,
        Generator::Boost3,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Generator> {
        Self::ALL.get(i).copied()
    }

    pub fn symbol(self) -> &'static str {
        ["dt", "d1", "d2", "d3", "O12", "O23", "O31", "O01", "O02", "O03"][self.index()]
    }

    pub fn parse(s: &str) -> Option<Generator> {
        Self::ALL.into_iter().find(|g| g.symbol() == s)
    }

    /// The operator itself. Translations are exposed as ∂_t, ∂_i (not ∂₀ = −∂_t).
    pub fn op(self) -> GammaOp {
        use Generator::*;
        match self {
            Dt => GammaOp::derivative(0),
            D1 => GammaOp::derivative(1),
            D2 => GammaOp::derivative(2),
            D3 => GammaOp::derivative(3),
            Omega12 => GammaOp::omega(1, 2),
            Omega23 => GammaOp::omega(2, 3),
            Omega31 => GammaOp::omega(3, 1),
            Boost1 => GammaOp::omega(0, 1),
            Boost2 => GammaOp::omega(0, 2),
            Boost3 => GammaOp::omega(0, 3),
        }
    }

    pub fn is_translation(self) -> bool {
        self.index() < 4
    }

    /// Number of time levels consumed on each side when applied to a window.
    pub fn time_order(self) -> usize {
        matches!(self, Generator::Dt | Generator::Boost1 | Generator::Boost2 | Generator::Boost3) as usize
    }
}

/// A fixed ordering of the generators; Γ^α is the product in this order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Ordering([Generator; 10]);

impl Ordering {
    pub fn published() -> Self {
        Ordering(Generator::ALL)
    }

    pub fn reversed() -> Self {
        let mut g = Generator::ALL;
        g.reverse();
        Ordering(g)
    }

    pub fn new(order: [Generator; 10]) -> Result<Self> {
        let mut seen = [false; 10];
        for g in order {
            if std::mem::replace(&mut seen[g.index()], true) {
                return Err(Error::Invalid(format!("generator {} repeated in ordering", g.symbol())));
            }
        }
        Ok(Ordering(order))
    }

    pub fn generators(&self) -> &[Generator; 10] {
        &self.0
    }

    pub fn position(&self, g: Generator) -> usize {
        self.0.iter().position(|&x| x == g).expect("ordering is a permutation")
    }
}

impl Default for Ordering {
    fn default() -> Self {
        Self::published()
    }
}

/// Exponents of Γ^α indexed by [`Generator::index`].
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct MultiIndex10(pub [u8; 10]);

impl MultiIndex10 {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn size(&self) -> usize {
        self.0.iter().map(|&e| e as usize).sum()
    }

    pub fn get(&self, g: Generator) -> u8 {
        self.0[g.index()]
    }

    pub fn with(&self, g: Generator) -> Self {
        let mut e = self.0;
        e[g.index()] += 1;
        MultiIndex10(e)
    }

    pub fn from_word(word: &[Generator]) -> Self {
        word.iter().fold(Self::zero(), |a, &g| a.with(g))
    }

    /// Every α with |α| ≤ max, by size and then lexicographically.
    pub fn enumerate(max: usize) -> Vec<MultiIndex10> {
        let mut out = Vec::new();
        for size in 0..=max {
            let mut e = [0u8; 10];
            fill(&mut e, 0, size, &mut out);
        }
        out
    }

    /// Factors of Γ^α from outermost to innermost.
    pub fn word(&self, ordering: &Ordering) -> Vec<Generator> {
        ordering.generators().iter().flat_map(|&g| std::iter::repeat_n(g, self.get(g) as usize)).collect()
    }

    pub fn op(&self, ordering: &Ordering) -> GammaOp {
        word_op(&self.word(ordering))
    }

    pub fn time_order(&self) -> usize {
        Generator::ALL.iter().map(|&g| g.time_order() * self.get(g) as usize).sum()
    }

    pub fn translations(&self) -> usize {
        Generator::ALL[..4].iter().map(|&g| self.get(g) as usize).sum()
    }

    pub fn label(&self) -> String {
        if self.size() == 0 {
            return "id".into();
        }
        self.word(&Ordering::published()).iter().map(|g| g.symbol()).collect::<Vec<_>>().join("*")
    }
}

fn fill(e: &mut [u8; 10], pos: usize, left: usize, out: &mut Vec<MultiIndex10>) {
    if pos == 9 {
        e[9] = left as u8;
        out.push(MultiIndex10(*e));
        e[9] = 0;
        return;
    }
    for take in (0..=left).rev() {
        e[pos] = take as u8;
        fill(e, pos + 1, left - take, out);
    }
    e[pos] = 0;
}

/// Product of the generators in `word`, leftmost outermost.
pub fn word_op(word: &[Generator]) -> GammaOp {
    word.iter().fold(GammaOp::identity(), |acc, g| acc * g.op())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    fn binom(n: usize, k: usize) -> usize {
        (0..k).fold(1, |acc, i| acc * (n - i) / (i + 1))
    }

    #[test]
    fn enumeration_is_complete_and_unique() {
        for n in 0..=3 {
            let all = MultiIndex10::enumerate(n);
            assert_eq!(all.len(), binom(n + 10, 10));
            let set: HashSet<_> = all.iter().collect();
            assert_eq!(set.len(), all.len());
            assert!(all.iter().all(|a| a.size() <= n));
            assert!(all.windows(2).all(|w| w[0].size() <= w[1].size()));
        }
        assert_eq!(MultiIndex10::enumerate(2).len(), 66);
    }

    #[test]
    fn words_follow_the_ordering() {
        let a = MultiIndex10::from_word(&[Generator::Boost1, Generator::Omega12, Generator::Boost1]);
        assert_eq!(a.word(&Ordering::published()), vec![Generator::Omega12, Generator::Boost1, Generator::Boost1]);
        assert_eq!(a.word(&Ordering::reversed()), vec![Generator::Boost1, Generator::Boost1, Generator::Omega12]);
        assert_eq!(a.time_order(), 2);
        assert_eq!(a.label(), "O12*O01*O01");
    }

    #[test]
    fn ordering_must_be_a_permutation() {
        let mut g = Generator::ALL;
        g[3] = Generator::Dt;
        assert!(Ordering::new(g).is_err());
        assert_eq!(Ordering::reversed().position(Generator::Dt), 9);
    }

    #[test]
    fn symbols_round_trip() {
        for g in Generator::ALL {
            assert_eq!(Generator::parse(g.symbol()), Some(g));
        }
    }
}
