use rustc_hash::FxHashMap as HashMap;
use std::ops::{Add, Mul, Neg, Sub};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::NearPoint;
use crate::error::{Error, Result};
use crate::expression::{ExprMemo, Node, ScalarExpr};
use crate::weil_algebra::{
    same_algebra, weil_matrix_inverse, ElementJson, Fault, WeilAlgebra, WeilElement, WeilMatrix,
};

/// Square matrix of base functions, shared by the inverse-entry factors
/// that refer to it.
#[derive(Debug, Clone, PartialEq)]
pub struct ExprMatrix {
    size: usize,
    entries: Vec<ScalarExpr>,
}

impl ExprMatrix {
    pub fn new(size: usize, entries: Vec<ScalarExpr>) -> Result<Self> {
        if entries.len() != size * size {
            return Err(Error::Input(format!("{} entries do not form a {size}x{size} matrix", entries.len())));
        }
        Ok(ExprMatrix { size, entries })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn get(&self, row: usize, col: usize) -> &ScalarExpr {
        &self.entries[row * self.size + col]
    }

    pub fn transpose(&self) -> ExprMatrix {
        let n = self.size;
        ExprMatrix { size: n, entries: (0..n * n).map(|k| self.get(k % n, k / n).clone()).collect() }
    }

    pub fn eval_real(&self, x: &[f64]) -> Result<nalgebra::DMatrix<f64>> {
        let values: Result<Vec<f64>> = self.entries.iter().map(|e| e.eval_real(x)).collect();
        Ok(nalgebra::DMatrix::from_row_slice(self.size, self.size, &values?))
    }
}

/// One multiplicative factor of a term.
#[derive(Debug, Clone)]
pub enum Factor {
    /// The prolongation `f^A` of a base function.
    Pullback(ScalarExpr),
    /// Entry `(row, col)` of the pointwise inverse of the prolonged matrix
    /// `[M_pq^A]`, computed by a Neumann solve at each evaluation point.
    InverseEntry { matrix: Arc<ExprMatrix>, row: usize, col: usize },
}

impl Factor {
    fn same(&self, other: &Factor) -> bool {
        match (self, other) {
            (Factor::Pullback(a), Factor::Pullback(b)) => Arc::ptr_eq(a.root(), b.root()) || a == b,
            (
                Factor::InverseEntry { matrix: m1, row: r1, col: c1 },
                Factor::InverseEntry { matrix: m2, row: r2, col: c2 },
            ) => r1 == r2 && c1 == c2 && (Arc::ptr_eq(m1, m2) || m1 == m2),
            _ => false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Term {
    pub coeff: WeilElement,
    pub factors: Vec<Factor>,
}

/// A function `M^A -> A` in the A-subalgebra generated by prolongations
/// `f^A` and A-constants: a finite sum of `a_t * prod_l u_{t,l}`.
#[derive(Debug, Clone)]
pub struct BundleFunction {
    algebra: Arc<WeilAlgebra>,
    arity: usize,
    terms: Vec<Term>,
}

/// Per-point evaluation state: expression memo and cached matrix solves.
/// Lives for a single evaluation point and is never shared.
pub struct EvalContext<'a> {
    point: &'a NearPoint,
    memo: ExprMemo,
    pullbacks: HashMap<*const Node, (Arc<Node>, WeilElement)>,
    inverses: HashMap<*const ExprMatrix, (Arc<ExprMatrix>, WeilMatrix)>,
}

impl<'a> EvalContext<'a> {
    pub fn new(point: &'a NearPoint) -> Self {
        EvalContext { point, memo: ExprMemo::default(), pullbacks: HashMap::default(), inverses: HashMap::default() }
    }

    pub fn point(&self) -> &NearPoint {
        self.point
    }

    fn pullback(&mut self, f: &ScalarExpr) -> Result<WeilElement> {
        f.eval_weil_with(self.point.coords(), &mut self.memo)
    }

    fn solve(&mut self, matrix: &Arc<ExprMatrix>) -> Result<()> {
        let key = Arc::as_ptr(matrix);
        if !self.inverses.contains_key(&key) {
            let entries: Result<Vec<WeilElement>> = matrix.entries.iter().map(|e| self.pullback(e)).collect();
            let inv = weil_matrix_inverse(&WeilMatrix::new(matrix.size, entries?)?)?;
            self.inverses.insert(key, (matrix.clone(), inv));
        }
        Ok(())
    }

    fn factor(&mut self, factor: &Factor) -> Result<&WeilElement> {
        match factor {
            Factor::Pullback(f) => {
                let key = Arc::as_ptr(f.root());
                if !self.pullbacks.contains_key(&key) {
                    let v = self.pullback(f)?;
                    self.pullbacks.insert(key, (f.root().clone(), v));
                }
                Ok(&self.pullbacks[&key].1)
            }
            Factor::InverseEntry { matrix, row, col } => {
                self.solve(matrix)?;
                Ok(self.inverses[&Arc::as_ptr(matrix)].1.get(*row, *col))
            }
        }
    }
}

impl BundleFunction {
    pub fn zero(algebra: &Arc<WeilAlgebra>, arity: usize) -> Self {
        BundleFunction { algebra: algebra.clone(), arity, terms: Vec::new() }
    }

    /// The A-constant function `a`.
    pub fn constant(a: &WeilElement, arity: usize) -> Self {
        let mut out = Self::zero(a.algebra(), arity);
        out.push(Term { coeff: a.clone(), factors: Vec::new() });
        out
    }

    pub fn real_constant(algebra: &Arc<WeilAlgebra>, arity: usize, c: f64) -> Self {
        Self::constant(&WeilElement::constant(algebra, c), arity)
    }

    /// `f^A`: the single term `1_A * f^A`.
    pub fn prolong(algebra: &Arc<WeilAlgebra>, f: &ScalarExpr) -> Self {
        Self::from_factors(WeilElement::one(algebra), f.arity(), vec![Factor::Pullback(f.clone())])
    }

    /// `x_i^A`.
    pub fn coordinate(algebra: &Arc<WeilAlgebra>, arity: usize, i: usize) -> Self {
        Self::prolong(algebra, &ScalarExpr::var(arity, i))
    }

    /// The function `xi -> ([M^A](xi))^{-1}_{row,col}`.
    pub fn inverse_entry(algebra: &Arc<WeilAlgebra>, matrix: &Arc<ExprMatrix>, row: usize, col: usize) -> Self {
        let arity = matrix.entries.first().map_or(0, ScalarExpr::arity);
        Self::from_factors(
            WeilElement::one(algebra),
            arity,
            vec![Factor::InverseEntry { matrix: matrix.clone(), row, col }],
        )
    }

    /// Product of pullbacks `a * f_1^A ... f_k^A`, kept as separate factors.
    pub fn product_of_pullbacks(coeff: &WeilElement, factors: &[ScalarExpr]) -> Result<Self> {
        let arity = factors.first().map_or(0, ScalarExpr::arity);
        if factors.iter().any(|f| f.arity() != arity) {
            return Err(Error::Input("pullback factors have different arities".into()));
        }
        Ok(Self::from_factors(coeff.clone(), arity, factors.iter().cloned().map(Factor::Pullback).collect()))
    }

    pub(crate) fn from_factors(coeff: WeilElement, arity: usize, factors: Vec<Factor>) -> Self {
        let mut out = Self::zero(coeff.algebra(), arity);
        out.push(Term { coeff, factors });
        out
    }

    pub fn algebra(&self) -> &Arc<WeilAlgebra> {
        &self.algebra
    }

    pub fn arity(&self) -> usize {
        self.arity
    }

    pub fn terms(&self) -> &[Term] {
        &self.terms
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub(crate) fn compatible(&self, other: &BundleFunction) -> bool {
        self.arity == other.arity && same_algebra(&self.algebra, &other.algebra)
    }

    fn assert_compatible(&self, other: &BundleFunction) {
        assert!(self.compatible(other), "bundle functions over different algebras or arities");
    }

    fn push(&mut self, term: Term) {
        let mut b = TermBuilder::from(std::mem::replace(self, Self::zero(&self.algebra.clone(), self.arity)));
        b.push(term);
        *self = b.finish();
    }

    /// `sum_k parts_k`, merged in one pass.
    pub fn sum_of(algebra: &Arc<WeilAlgebra>, arity: usize, parts: impl IntoIterator<Item = BundleFunction>) -> Self {
        let mut out = TermBuilder::new(algebra, arity);
        for p in parts {
            p.assert_compatible(&out.out);
            for t in p.terms {
                out.push(t);
            }
        }
        out.finish()
    }

    pub fn scale(&self, a: &WeilElement) -> Self {
        let mut out = TermBuilder::new(&self.algebra, self.arity);
        for t in &self.terms {
            out.push(Term { coeff: &t.coeff * a, factors: t.factors.clone() });
        }
        out.finish()
    }

    pub fn scale_real(&self, s: f64) -> Self {
        self.scale(&WeilElement::constant(&self.algebra, s))
    }

    fn product(&self, other: &BundleFunction) -> Self {
        self.assert_compatible(other);
        let mut out = TermBuilder::new(&self.algebra, self.arity);
        for a in &self.terms {
            for b in &other.terms {
                let mut factors = a.factors.clone();
                factors.extend(b.factors.iter().cloned());
                out.push(Term { coeff: &a.coeff * &b.coeff, factors });
            }
        }
        out.finish()
    }

    fn sum(&self, other: &BundleFunction, sign: f64) -> Self {
        self.assert_compatible(other);
        let mut out = TermBuilder::from(self.clone());
        for t in &other.terms {
            out.push(Term { coeff: t.coeff.scale(sign), factors: t.factors.clone() });
        }
        out.finish()
    }

    /// The A-linear derivation `d/dx_i^A` with `d/dx_i^A (f^A) = (df/dx_i)^A`,
    /// extended to products by the Leibniz rule.
    pub fn partial(&self, i: usize) -> Self {
        assert!(i < self.arity, "coordinate {i} out of range for arity {}", self.arity);
        let drop_last = self.algebra.has_fault(Fault::DroppedLeibnizTerm);
        let mut out = TermBuilder::new(&self.algebra, self.arity);
        for term in &self.terms {
            let len = term.factors.len();
            for (l, factor) in term.factors.iter().enumerate() {
                if drop_last && len >= 2 && l == len - 1 {
                    continue;
                }
                let others: Vec<Factor> =
                    term.factors.iter().enumerate().filter(|(k, _)| *k != l).map(|(_, f)| f.clone()).collect();
                for (sign, replacement) in factor_partial(factor, i) {
                    let mut factors = others.clone();
                    factors.extend(replacement);
                    out.push(Term { coeff: term.coeff.scale(sign), factors });
                }
            }
        }
        out.finish()
    }

    pub fn evaluate(&self, point: &NearPoint) -> Result<WeilElement> {
        let mut ctx = EvalContext::new(point);
        self.evaluate_in(&mut ctx)
    }

    pub fn evaluate_in(&self, ctx: &mut EvalContext<'_>) -> Result<WeilElement> {
        let point = ctx.point();
        if point.arity() != self.arity {
            return Err(Error::Input(format!(
                "near point has {} coordinates, function arity is {}",
                point.arity(),
                self.arity
            )));
        }
        if !same_algebra(point.algebra(), &self.algebra) {
            return Err(Error::AlgebraMismatch);
        }
        let d = self.algebra.dim();
        let (mut total, mut acc, mut tmp) = (vec![0.0; d], vec![0.0; d], vec![0.0; d]);
        for term in &self.terms {
            acc.copy_from_slice(term.coeff.coeffs());
            for f in &term.factors {
                self.algebra.mul_into(&acc, ctx.factor(f)?.coeffs(), &mut tmp);
                std::mem::swap(&mut acc, &mut tmp);
            }
            total.iter_mut().zip(&acc).for_each(|(t, a)| *t += a);
        }
        WeilElement::new(&self.algebra, total)
    }

    pub fn from_json(algebra: &Arc<WeilAlgebra>, arity: usize, json: &BundleFunctionJson) -> Result<Self> {
        let mut out = TermBuilder::new(algebra, arity);
        for t in &json.terms {
            let coeff = WeilElement::from_json(algebra, &t.coeff)?;
            let factors: Result<Vec<Factor>> =
                t.factors.iter().map(|s| ScalarExpr::parse(s, arity).map(Factor::Pullback)).collect();
            out.push(Term { coeff, factors: factors? });
        }
        Ok(out.finish())
    }

    pub fn to_json(&self) -> Result<BundleFunctionJson> {
        let terms: Result<Vec<TermJson>> = self
            .terms
            .iter()
            .map(|t| {
                let factors: Result<Vec<String>> = t
                    .factors
                    .iter()
                    .map(|f| match f {
                        Factor::Pullback(e) => Ok(e.to_string()),
                        Factor::InverseEntry { .. } => {
                            Err(Error::Input("matrix-inverse factors have no JSON form".into()))
                        }
                    })
                    .collect();
                Ok(TermJson { coeff: t.coeff.to_json(), factors: factors? })
            })
            .collect();
        Ok(BundleFunctionJson { terms: terms? })
    }
}

/// `d/dx_i` of one factor as a signed sum of factor lists.
fn factor_partial(factor: &Factor, i: usize) -> Vec<(f64, Vec<Factor>)> {
    match factor {
        Factor::Pullback(f) => {
            let df = f.differentiate(i);
            if df.is_zero() {
                Vec::new()
            } else {
                vec![(1.0, vec![Factor::Pullback(df)])]
            }
        }
        // d(M^{-1}) = -M^{-1} (dM) M^{-1}
        Factor::InverseEntry { matrix, row, col } => {
            let n = matrix.size;
            let mut out = Vec::new();
            for p in 0..n {
                for q in 0..n {
                    let dm = matrix.get(p, q).differentiate(i);
                    if dm.is_zero() {
                        continue;
                    }
                    out.push((
                        -1.0,
                        vec![
                            Factor::InverseEntry { matrix: matrix.clone(), row: *row, col: p },
                            Factor::Pullback(dm),
                            Factor::InverseEntry { matrix: matrix.clone(), row: q, col: *col },
                        ],
                    ));
                }
            }
            out
        }
    }
}

/// Accumulates terms, folding constant pullbacks into the coefficient and
/// merging terms whose factor lists are structurally equal.
struct TermBuilder {
    out: BundleFunction,
    buckets: HashMap<u64, Vec<usize>>,
}

impl TermBuilder {
    fn new(algebra: &Arc<WeilAlgebra>, arity: usize) -> Self {
        TermBuilder { out: BundleFunction::zero(algebra, arity), buckets: HashMap::default() }
    }

    fn from(f: BundleFunction) -> Self {
        let mut b = TermBuilder::new(&f.algebra, f.arity);
        for (pos, t) in f.terms.iter().enumerate() {
            let key = b.key(&t.factors);
            b.buckets.entry(key).or_default().push(pos);
        }
        b.out = f;
        b
    }

    fn key(&self, factors: &[Factor]) -> u64 {
        factors.iter().fold(factors.len() as u64, |h, f| {
            let v = match f {
                Factor::Pullback(e) => e.structural_hash(),
                Factor::InverseEntry { row, col, .. } => ((*row as u64) << 32) ^ *col as u64 ^ 0xa5a5,
            };
            (h.rotate_left(5) ^ v).wrapping_mul(0x517c_c1b7_2722_0a95)
        })
    }

    fn push(&mut self, mut term: Term) {
        let mut scale = 1.0;
        term.factors.retain(|f| match f {
            Factor::Pullback(e) => match e.as_constant() {
                Some(c) => {
                    scale *= c;
                    false
                }
                None => true,
            },
            Factor::InverseEntry { .. } => true,
        });
        if scale != 1.0 {
            term.coeff = term.coeff.scale(scale);
        }
        if term.coeff.is_zero() {
            return;
        }
        let key = self.key(&term.factors);
        let terms = &mut self.out.terms;
        let bucket = self.buckets.entry(key).or_default();
        let hit = bucket.iter().copied().find(|&p| {
            let t = &terms[p];
            t.factors.len() == term.factors.len() && t.factors.iter().zip(&term.factors).all(|(a, b)| a.same(b))
        });
        match hit {
            Some(p) => terms[p].coeff = &terms[p].coeff + &term.coeff,
            None => {
                bucket.push(terms.len());
                terms.push(term);
            }
        }
    }

    fn finish(mut self) -> BundleFunction {
        self.out.terms.retain(|t| !t.coeff.is_zero());
        self.out
    }
}

/// Wire form of a bundle function.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BundleFunctionJson {
    pub terms: Vec<TermJson>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TermJson {
    pub coeff: ElementJson,
    pub factors: Vec<String>,
}

macro_rules! bundle_binop {
    ($trait:ident, $method:ident, $body:expr) => {
        impl $trait<&BundleFunction> for &BundleFunction {
            type Output = BundleFunction;
            fn $method(self, rhs: &BundleFunction) -> BundleFunction {
                let f: fn(&BundleFunction, &BundleFunction) -> BundleFunction = $body;
                f(self, rhs)
            }
        }
        impl $trait<BundleFunction> for BundleFunction {
            type Output = BundleFunction;
            fn $method(self, rhs: BundleFunction) -> BundleFunction {
                (&self).$method(&rhs)
            }
        }
        impl $trait<&BundleFunction> for BundleFunction {
            type Output = BundleFunction;
            fn $method(self, rhs: &BundleFunction) -> BundleFunction {
                (&self).$method(rhs)
            }
        }
        impl $trait<BundleFunction> for &BundleFunction {
            type Output = BundleFunction;
            fn $method(self, rhs: BundleFunction) -> BundleFunction {
                self.$method(&rhs)
            }
        }
    };
}

bundle_binop!(Add, add, |a, b| a.sum(b, 1.0));
bundle_binop!(Sub, sub, |a, b| a.sum(b, -1.0));
bundle_binop!(Mul, mul, |a, b| a.product(b));

impl Neg for &BundleFunction {
    type Output = BundleFunction;
    fn neg(self) -> BundleFunction {
        self.scale_real(-1.0)
    }
}

impl Neg for BundleFunction {
    type Output = BundleFunction;
    fn neg(self) -> BundleFunction {
        self.scale_real(-1.0)
    }
}
