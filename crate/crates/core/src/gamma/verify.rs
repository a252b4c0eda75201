//! Exhaustive symbolic checks: Lie closure, invariance of □ and □₁, Jacobi,
//! the order-reduction identities and the hyperbolic Laplacian identity.

use std::io::Write;

use num_traits::{One, Signed, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::op::{int, GammaOp, Rational};
use super::span::{in_span, SpanSolver};
use super::{word_op, Generator, MultiIndex10, Ordering};
use crate::error::{Error, Result};

/// Structure constants `[Γ_i, Γ_j] = Σ_k c_k Γ_k` for all pairs i < j.
#[derive(Clone, Debug)]
pub struct StructureTable {
    pub entries: Vec<(Generator, Generator, [Rational; 10])>,
}

impl StructureTable {
    pub fn get(&self, a: Generator, b: Generator) -> Option<&[Rational; 10]> {
        self.entries.iter().find(|(x, y, _)| *x == a && *y == b).map(|(_, _, c)| c)
    }

    pub fn constants_are_unit(&self) -> bool {
        self.entries.iter().all(|(_, _, c)| c.iter().all(|v| v.is_zero() || v.abs().is_one()))
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let names: Vec<String> = Generator::ALL.iter().map(|g| format!("c_{}", g.symbol())).collect();
        writeln!(w, "generator_i,generator_j,{}", names.join(","))?;
        for (a, b, c) in &self.entries {
            let coeffs: Vec<String> = c.iter().map(|v| v.to_string()).collect();
            writeln!(w, "{},{},{}", a.symbol(), b.symbol(), coeffs.join(","))?;
        }
        Ok(())
    }
}

pub fn verify_lie_closure() -> Result<StructureTable> {
    let mut entries = Vec::with_capacity(45);
    for (i, &a) in Generator::ALL.iter().enumerate() {
        for &b in &Generator::ALL[i + 1..] {
            let c = a.op().commutator(&b.op());
            let coeffs = in_span(&c).ok_or_else(|| {
                Error::Symbolic(format!("[{}, {}] = {c} is outside the span", a.symbol(), b.symbol()))
            })?;
            entries.push((a, b, coeffs));
        }
    }
    Ok(StructureTable { entries })
}

#[derive(Clone, Debug)]
pub struct BoxReport {
    pub generators: Vec<Generator>,
}

/// Checks [Γ_i, □] = 0 and [Γ_i, □₁] = 0 exactly for all ten generators.
pub fn verify_box_invariance() -> Result<BoxReport> {
    let wave = GammaOp::wave();
    let kg = GammaOp::klein_gordon();
    for g in Generator::ALL {
        for (name, op) in [("□", &wave), ("□₁", &kg)] {
            let c = g.op().commutator(op);
            if !c.is_zero() {
                return Err(Error::Symbolic(format!("[{}, {name}] = {c}", g.symbol())));
            }
        }
    }
    Ok(BoxReport { generators: Generator::ALL.to_vec() })
}

#[derive(Clone, Debug)]
pub struct JacobiReport {
    pub triples: usize,
    pub pairs: usize,
}

/// Antisymmetry over all ordered pairs and the Jacobi identity over all 10³ triples.
pub fn verify_jacobi() -> Result<JacobiReport> {
    let ops: Vec<GammaOp> = Generator::ALL.iter().map(|g| g.op()).collect();
    let mut brackets = vec![vec![GammaOp::zero(); 10]; 10];
    for i in 0..10 {
        for j in 0..10 {
            brackets[i][j] = ops[i].commutator(&ops[j]);
        }
    }
    for i in 0..10 {
        for j in 0..10 {
            if brackets[i][j] != -brackets[j][i].clone() {
                return Err(Error::Symbolic(format!("antisymmetry fails for ({i}, {j})")));
            }
        }
    }
    let mut triples = 0;
    for a in 0..10 {
        for b in 0..10 {
            for c in 0..10 {
                let sum = ops[a].commutator(&brackets[b][c])
                    + ops[b].commutator(&brackets[c][a])
                    + ops[c].commutator(&brackets[a][b]);
                if !sum.is_zero() {
                    let g = |k: usize| Generator::ALL[k].symbol();
                    return Err(Error::Symbolic(format!("Jacobi fails for ({}, {}, {}): {sum}", g(a), g(b), g(c))));
                }
                triples += 1;
            }
        }
    }
    Ok(JacobiReport { triples, pairs: 100 })
}

/// Right-hand factor of a commutator with translations.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Commutand {
    /// `∂_c`, with 0 meaning ∂_t.
    First(usize),
    /// `∂_c ∂_e`.
    Second(usize, usize),
}

impl Commutand {
    fn op(self) -> GammaOp {
        match self {
            Commutand::First(c) => GammaOp::derivative(c),
            Commutand::Second(c, e) => GammaOp::derivative(c) * GammaOp::derivative(e),
        }
    }

    fn translations(self) -> usize {
        match self {
            Commutand::First(_) => 1,
            Commutand::Second(..) => 2,
        }
    }

    pub fn label(self) -> String {
        let d = |c: usize| ["dt", "d1", "d2", "d3"][c];
        match self {
            Commutand::First(c) => d(c).to_string(),
            Commutand::Second(c, e) => format!("{}*{}", d(c), d(e)),
        }
    }
}

/// One certified instance of [Γ^α, ∂] = Σ ∂Γ^β or [Γ^α, ∂∂] = Σ ∂∂Γ^β.
#[derive(Clone, Debug)]
pub struct ReductionCase {
    pub word: Vec<Generator>,
    pub commutand: Commutand,
    pub candidates: usize,
    pub rank: usize,
    /// Largest |β| with a nonzero coefficient (`None` when the commutator vanishes).
    pub max_beta: Option<usize>,
    /// Nonzero terms as (label, coefficient).
    pub terms: Vec<(String, Rational)>,
}

/// Certifies the order-reduction form for a single word by solving exactly in
/// the normal-order basis, then re-expanding the solution to confirm equality.
pub fn certify_order_reduction(word: &[Generator], commutand: Commutand) -> Result<ReductionCase> {
    let betas = MultiIndex10::enumerate(word.len().saturating_sub(1));
    let target = word_op(word).commutator(&commutand.op());
    certify_with(word, commutand, &target, &betas, &mut |b| b.op(&Ordering::published()))
}

fn certify_with(
    word: &[Generator],
    commutand: Commutand,
    target: &GammaOp,
    betas: &[MultiIndex10],
    beta_op: &mut dyn FnMut(&MultiIndex10) -> GammaOp,
) -> Result<ReductionCase> {
    let name = || {
        let w: Vec<&str> = word.iter().map(|g| g.symbol()).collect();
        format!("[{}, {}]", w.join("*"), commutand.label())
    };
    let empty = |candidates| ReductionCase {
        word: word.to_vec(),
        commutand,
        candidates,
        rank: 0,
        max_beta: None,
        terms: Vec::new(),
    };
    if word.is_empty() {
        return if target.is_zero() { Ok(empty(0)) } else { Err(Error::Symbolic(format!("{} is nonzero", name()))) };
    }
    let Some(grade) = target.grade() else {
        if target.is_zero() {
            return Ok(empty(0));
        }
        return Err(Error::Symbolic(format!("{} is not homogeneous", name())));
    };
    let k = commutand.translations();
    let prefixes: Vec<(Vec<usize>, GammaOp)> = match commutand {
        Commutand::First(_) => (0..4).map(|d| (vec![d], GammaOp::derivative(d))).collect(),
        Commutand::Second(..) => (0..4)
            .flat_map(|d| (d..4).map(move |e| (d, e)))
            .map(|(d, e)| (vec![d, e], GammaOp::derivative(d) * GammaOp::derivative(e)))
            .collect(),
    };
    let mut labels = Vec::new();
    let mut ops = Vec::new();
    let mut sizes = Vec::new();
    for beta in betas {
        if (k + beta.translations()) as i64 != grade {
            continue;
        }
        let b = beta_op(beta);
        for (idx, p) in &prefixes {
            let d: Vec<&str> = idx.iter().map(|&c| ["dt", "d1", "d2", "d3"][c]).collect();
            labels.push(format!("{}*[{}]", d.join("*"), beta.label()));
            ops.push(p * &b);
            sizes.push(beta.size());
        }
    }
    let solver = SpanSolver::new(ops);
    let coeffs = solver
        .solve(target)
        .ok_or_else(|| Error::Symbolic(format!("{} = {target} is not of the claimed form", name())))?;
    if solver.combine(&coeffs) != *target {
        return Err(Error::Symbolic(format!("{}: re-expansion mismatch", name())));
    }
    let mut terms = Vec::new();
    let mut max_beta = None;
    for ((label, c), size) in labels.into_iter().zip(coeffs).zip(sizes) {
        if !c.is_zero() {
            max_beta = Some(max_beta.map_or(size, |m: usize| m.max(size)));
            terms.push((label, c));
        }
    }
    Ok(ReductionCase {
        word: word.to_vec(),
        commutand,
        candidates: solver.candidates().len(),
        rank: solver.rank(),
        max_beta,
        terms,
    })
}

#[derive(Clone, Debug)]
pub struct OrderReductionReport {
    pub order: usize,
    pub seed: u64,
    pub cases: Vec<ReductionCase>,
}

/// For `words` random multi-indices of size `n` (n ≤ 3), certifies both the
/// first-order and second-order commutator forms.
pub fn verify_commutator_order_reduction(n: usize, words: usize, seed: u64) -> Result<OrderReductionReport> {
    if n > 3 {
        return Err(Error::Invalid(format!("order {n} exceeds the symbolic limit of 3")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ordering = Ordering::published();
    let betas = MultiIndex10::enumerate(n.saturating_sub(1));
    let mut cache = std::collections::HashMap::new();
    let mut beta_op = |b: &MultiIndex10| cache.entry(*b).or_insert_with(|| b.op(&ordering)).clone();
    let mut cases = Vec::with_capacity(2 * words);
    for _ in 0..words {
        let picks: Vec<Generator> = (0..n).map(|_| Generator::ALL[rng.gen_range(0..10)]).collect();
        let word = MultiIndex10::from_word(&picks).word(&ordering);
        let c = rng.gen_range(0..4);
        let (d, e) = (rng.gen_range(0..4), rng.gen_range(0..4));
        let w = word_op(&word);
        for commutand in [Commutand::First(c), Commutand::Second(d.min(e), d.max(e))] {
            let target = w.commutator(&commutand.op());
            cases.push(certify_with(&word, commutand, &target, &betas, &mut beta_op)?);
        }
    }
    for case in &cases {
        if case.max_beta.is_some_and(|m| m + 1 > case.word.len()) {
            return Err(Error::Symbolic("certificate used |β| ≥ |α|".into()));
        }
    }
    Ok(OrderReductionReport { order: n, seed, cases })
}

/// Δ_H = Σ Ω₀ᵢ² − (Ω₁₂² + Ω₂₃² + Ω₃₁²).
pub fn hyperbolic_laplacian() -> GammaOp {
    let sq = |g: Generator| g.op() * g.op();
    sq(Generator::Boost1) + sq(Generator::Boost2) + sq(Generator::Boost3)
        - sq(Generator::Omega12)
        - sq(Generator::Omega23)
        - sq(Generator::Omega31)
}

/// The expanded form t²Δ + |x|²∂_t² + 2tΣx_i∂_t∂_i + 3t∂_t + 3Σx_i∂_i
/// − Σ_{i,j}x_i²∂_j² + Σ_{i,j}x_ix_j∂_i∂_j.
pub fn rho_form_expansion() -> GammaOp {
    let t = GammaOp::coordinate(0);
    let x = GammaOp::coordinate;
    let d = GammaOp::derivative;
    let mut op = GammaOp::zero();
    for i in 1..4 {
        op = op + &t * &t * d(i) * d(i);
        op = op + x(i) * x(i) * d(0) * d(0);
        op = op + (&t * &x(i) * d(0) * d(i)).scale(&int(2));
        op = op + (x(i) * d(i)).scale(&int(3));
        for j in 1..4 {
            op = op - x(i) * x(i) * d(j) * d(j);
            op = op + x(i) * x(j) * d(i) * d(j);
        }
    }
    op + (t * d(0)).scale(&int(3))
}

/// S = t∂_t + Σ x_i∂_i, so that ρ∂_ρ = S inside the cone.
pub fn scaling_field() -> GammaOp {
    (0..4).fold(GammaOp::zero(), |acc, v| acc + GammaOp::coordinate(v) * GammaOp::derivative(v))
}

/// Checks Δ_H against its expansion and S² + 2S − Δ_H = (t² − |x|²)□, the
/// operator form of ∂_ρ² + (3/ρ)∂_ρ − ρ^{−2}Δ_H = □.
pub fn verify_rho_form_identity() -> Result<()> {
    let dh = hyperbolic_laplacian();
    if dh != rho_form_expansion() {
        return Err(Error::Symbolic(format!("Δ_H expansion mismatch: {}", dh - rho_form_expansion())));
    }
    let s = scaling_field();
    let lhs = &s * &s + s.scale(&int(2)) - dh;
    let mut rho2 = GammaOp::coordinate(0) * GammaOp::coordinate(0);
    for i in 1..4 {
        rho2 = rho2 - GammaOp::coordinate(i) * GammaOp::coordinate(i);
    }
    let rhs = rho2 * GammaOp::wave();
    if lhs != rhs {
        return Err(Error::Symbolic(format!("pseudospherical identity fails: {}", lhs - rhs)));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use Generator::*;

    /// η = diag(−1, 1, 1, 1): [∂_a, x_b] = η_ab with ∂₀ = −∂_t and x₀ = t.
    fn eta(a: usize, b: usize) -> i64 {
        match (a == b, a) {
            (false, _) => 0,
            (true, 0) => -1,
            (true, _) => 1,
        }
    }

    #[test]
    fn closure_table_is_complete_and_unit() {
        let table = verify_lie_closure().unwrap();
        assert_eq!(table.entries.len(), 45);
        assert!(table.constants_are_unit());
        let rot = [Omega12, Omega23, Omega31];
        for &a in &rot {
            for &b in &rot {
                if let Some(c) = table.get(a, b) {
                    for g in Generator::ALL {
                        if !rot.contains(&g) {
                            assert!(c[g.index()].is_zero());
                        }
                    }
                }
            }
        }
        for (i, &a) in Generator::ALL[..4].iter().enumerate() {
            for &b in &Generator::ALL[i + 1..4] {
                assert!(table.get(a, b).unwrap().iter().all(|v| v.is_zero()));
            }
        }
    }

    #[test]
    fn box_invariance_and_jacobi() {
        verify_box_invariance().unwrap();
        assert_eq!(verify_jacobi().unwrap().triples, 1000);
    }

    #[test]
    fn omega_translation_commutator_carries_the_metric() {
        // [Ω_ab, ∂_c] = −η_ca ∂_b + η_cb ∂_a
        for a in 0..4 {
            for b in 0..4 {
                if a == b {
                    continue;
                }
                for c in 0..4 {
                    let lhs = GammaOp::omega(a, b).commutator(&GammaOp::signed_partial(c));
                    let rhs = GammaOp::signed_partial(b).scale(&int(-eta(c, a)))
                        + GammaOp::signed_partial(a).scale(&int(eta(c, b)));
                    assert_eq!(lhs, rhs, "a={a} b={b} c={c}");
                }
            }
        }
    }

    #[test]
    fn omega_omega_commutator_closed_form() {
        // [Ω_ab, Ω_cd] = η_bc Ω_ad + η_ad Ω_bc − η_bd Ω_ac − η_ac Ω_bd
        let om = |a: usize, b: usize| if a == b { GammaOp::zero() } else { GammaOp::omega(a, b) };
        for a in 0..4 {
            for b in 0..4 {
                for c in 0..4 {
                    for d in 0..4 {
                        if a == b || c == d {
                            continue;
                        }
                        let lhs = om(a, b).commutator(&om(c, d));
                        let rhs = om(a, d).scale(&int(eta(b, c))) + om(b, c).scale(&int(eta(a, d)))
                            - om(a, c).scale(&int(eta(b, d)))
                            - om(b, d).scale(&int(eta(a, c)));
                        assert_eq!(lhs, rhs, "({a}{b}),({c}{d})");
                    }
                }
            }
        }
    }

    #[test]
    fn order_reduction_examples() {
        let case = certify_order_reduction(&[D1], Commutand::First(2)).unwrap();
        assert!(case.terms.is_empty());
        let case = certify_order_reduction(&[Boost1, Omega12], Commutand::First(2)).unwrap();
        assert!(case.max_beta.unwrap() <= 1);
        let case = certify_order_reduction(&[Boost1, Boost2], Commutand::Second(1, 2)).unwrap();
        assert!(case.max_beta.unwrap() <= 1);
        // [Ω₀₁, ∂_t] = −∂₁: a single term with empty β.
        let case = certify_order_reduction(&[Boost1], Commutand::First(0)).unwrap();
        assert_eq!(case.terms, vec![("d1*[id]".to_string(), int(-1))]);
    }

    #[test]
    fn random_order_reduction_small() {
        let report = verify_commutator_order_reduction(2, 5, 11).unwrap();
        assert_eq!(report.cases.len(), 10);
        assert!(verify_commutator_order_reduction(4, 1, 0).is_err());
    }

    #[test]
    fn rho_form_identity_is_exact() {
        verify_rho_form_identity().unwrap();
    }

    #[test]
    fn structure_csv_has_45_rows() {
        let mut out = Vec::new();
        verify_lie_closure().unwrap().write_csv(&mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert_eq!(text.lines().count(), 46);
        assert!(text.starts_with("generator_i,generator_j,c_dt,"));
        assert!(text.contains("\ndt,O01,0,1,0,0,0,0,0,0,0,0\n"));
    }
}
