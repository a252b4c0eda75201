//! Exact span membership: sparse Gauss-Jordan elimination over the rationals,
//! with the normal-order terms of each operator as coordinates.

use std::collections::BTreeMap;

use num_traits::{One, Zero};

use super::op::{GammaOp, Key, Rational};
use super::Generator;

type Vector = BTreeMap<Key, Rational>;

struct Row {
    pivot: Key,
    vec: Vector,
    combo: BTreeMap<usize, Rational>,
}

/// Reduced row-echelon basis for the span of a list of candidate operators.
pub struct SpanSolver {
    candidates: Vec<GammaOp>,
    rows: Vec<Row>,
    pivots: BTreeMap<Key, usize>,
}

fn to_vector(op: &GammaOp) -> Vector {
    op.terms().map(|(k, v)| (*k, v.clone())).collect()
}

fn axpy<K: Ord + Copy>(y: &mut BTreeMap<K, Rational>, a: &Rational, x: &BTreeMap<K, Rational>) {
    for (k, v) in x {
        let e = y.entry(*k).or_insert_with(Rational::zero);
        *e -= a * v;
        if e.is_zero() {
            y.remove(k);
        }
    }
}

impl SpanSolver {
    pub fn new(candidates: Vec<GammaOp>) -> Self {
        let mut s = SpanSolver { candidates: Vec::new(), rows: Vec::new(), pivots: BTreeMap::new() };
        for c in candidates {
            s.push(c);
        }
        s
    }

    pub fn push(&mut self, op: GammaOp) {
        let idx = self.candidates.len();
        let mut vec = to_vector(&op);
        self.candidates.push(op);
        let mut combo = BTreeMap::from([(idx, Rational::one())]);
        self.reduce(&mut vec, &mut combo);
        let Some((&pivot, lead)) = vec.iter().next() else { return };
        let inv = lead.recip();
        vec.values_mut().for_each(|v| *v *= &inv);
        combo.values_mut().for_each(|v| *v *= &inv);
        for row in &mut self.rows {
            if let Some(f) = row.vec.get(&pivot).cloned() {
                axpy(&mut row.vec, &f, &vec);
                axpy(&mut row.combo, &f, &combo);
            }
        }
        self.pivots.insert(pivot, self.rows.len());
        self.rows.push(Row { pivot, vec, combo });
    }

    fn reduce(&self, vec: &mut Vector, combo: &mut BTreeMap<usize, Rational>) {
        let hits: Vec<usize> = vec.keys().filter_map(|k| self.pivots.get(k).copied()).collect();
        for r in hits {
            let row = &self.rows[r];
            if let Some(f) = vec.get(&row.pivot).cloned() {
                axpy(vec, &f, &row.vec);
                axpy(combo, &f, &row.combo);
            }
        }
    }

    pub fn rank(&self) -> usize {
        self.rows.len()
    }

    pub fn candidates(&self) -> &[GammaOp] {
        &self.candidates
    }

    /// Coefficients `c` with `target = Σ c_i candidate_i`, or `None` when the
    /// target lies outside the span.
    pub fn solve(&self, target: &GammaOp) -> Option<Vec<Rational>> {
        let mut vec = to_vector(target);
        let mut combo = BTreeMap::new();
        self.reduce(&mut vec, &mut combo);
        if !vec.is_empty() {
            return None;
        }
        let mut out = vec![Rational::zero(); self.candidates.len()];
        for (i, v) in combo {
            out[i] = -v;
        }
        Some(out)
    }

    /// Σ c_i candidate_i, used to re-check a solution exactly.
    pub fn combine(&self, coefficients: &[Rational]) -> GammaOp {
        self.candidates
            .iter()
            .zip(coefficients)
            .filter(|(_, c)| !c.is_zero())
            .fold(GammaOp::zero(), |acc, (op, c)| acc + op.scale(c))
    }
}

/// Exact coefficients of `a` over the ten generators, or `None` if `a` is not
/// a real linear combination of them.
pub fn in_span(a: &GammaOp) -> Option<[Rational; 10]> {
    let solver = SpanSolver::new(Generator::ALL.iter().map(|g| g.op()).collect());
    let c = solver.solve(a)?;
    debug_assert_eq!(&solver.combine(&c), a);
    Some(std::array::from_fn(|i| c[i].clone()))
}
