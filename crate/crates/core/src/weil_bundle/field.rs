use std::sync::Arc;

use super::BundleFunction;
use crate::error::{Error, Result};
use crate::expression::ScalarExpr;
use crate::weil_algebra::{same_algebra, WeilAlgebra, WeilElement};

/// A vector field `sum_i theta_i d/dx_i` on the base.
#[derive(Debug, Clone, PartialEq)]
pub struct BaseVectorField {
    arity: usize,
    comps: Vec<ScalarExpr>,
}

impl BaseVectorField {
    pub fn new(comps: Vec<ScalarExpr>) -> Result<Self> {
        let arity = comps.len();
        if let Some(bad) = comps.iter().find(|c| c.arity() != arity) {
            return Err(Error::Input(format!(
                "field on R^{arity} has a component of arity {}",
                bad.arity()
            )));
        }
        Ok(BaseVectorField { arity, comps })
    }

    pub fn parse(texts: &[&str]) -> Result<Self> {
        let n = texts.len();
        Self::new(texts.iter().map(|t| ScalarExpr::parse(t, n)).collect::<Result<_>>()?)
    }

    pub fn zero(arity: usize) -> Self {
        BaseVectorField { arity, comps: vec![ScalarExpr::zero(arity); arity] }
    }

    /// `d/dx_i`.
    pub fn coordinate(arity: usize, i: usize) -> Self {
        let mut f = Self::zero(arity);
        f.comps[i] = ScalarExpr::one(arity);
        f
    }

    pub fn arity(&self) -> usize {
        self.arity
    }

    pub fn components(&self) -> &[ScalarExpr] {
        &self.comps
    }

    /// `theta(f) = sum_i theta_i df/dx_i`.
    pub fn apply(&self, f: &ScalarExpr) -> ScalarExpr {
        self.comps
            .iter()
            .enumerate()
            .fold(ScalarExpr::zero(self.arity), |acc, (i, c)| acc + c * &f.differentiate(i))
    }

    pub fn bracket(&self, other: &BaseVectorField) -> BaseVectorField {
        let comps = (0..self.arity).map(|i| self.apply(&other.comps[i]) - other.apply(&self.comps[i])).collect();
        BaseVectorField { arity: self.arity, comps }
    }

    pub fn add(&self, other: &BaseVectorField) -> BaseVectorField {
        let comps = self.comps.iter().zip(&other.comps).map(|(a, b)| a + b).collect();
        BaseVectorField { arity: self.arity, comps }
    }

    pub fn scale(&self, c: f64) -> BaseVectorField {
        BaseVectorField { arity: self.arity, comps: self.comps.iter().map(|a| a.scale(c)).collect() }
    }

    /// `f * theta`.
    pub fn times(&self, f: &ScalarExpr) -> BaseVectorField {
        BaseVectorField { arity: self.arity, comps: self.comps.iter().map(|a| f * a).collect() }
    }

    /// The prolongation `theta^A`, whose canonical components are `theta_i^A`.
    pub fn prolong(&self, algebra: &Arc<WeilAlgebra>) -> BundleVectorField {
        BundleVectorField {
            algebra: algebra.clone(),
            arity: self.arity,
            comps: self.comps.iter().map(|c| BundleFunction::prolong(algebra, c)).collect(),
        }
    }

    pub fn to_strings(&self) -> Vec<String> {
        self.comps.iter().map(ToString::to_string).collect()
    }
}

/// An A-linear derivation of the bundle functions, stored by its canonical
/// components `X(x_i^A)`.
#[derive(Debug, Clone)]
pub struct BundleVectorField {
    algebra: Arc<WeilAlgebra>,
    arity: usize,
    comps: Vec<BundleFunction>,
}

impl BundleVectorField {
    pub fn new(algebra: &Arc<WeilAlgebra>, comps: Vec<BundleFunction>) -> Result<Self> {
        let arity = comps.len();
        for c in &comps {
            if c.arity() != arity {
                return Err(Error::Input(format!("field on R^{arity} has a component of arity {}", c.arity())));
            }
            if !same_algebra(c.algebra(), algebra) {
                return Err(Error::AlgebraMismatch);
            }
        }
        Ok(BundleVectorField { algebra: algebra.clone(), arity, comps })
    }

    pub fn zero(algebra: &Arc<WeilAlgebra>, arity: usize) -> Self {
        BundleVectorField { algebra: algebra.clone(), arity, comps: vec![BundleFunction::zero(algebra, arity); arity] }
    }

    pub fn algebra(&self) -> &Arc<WeilAlgebra> {
        &self.algebra
    }

    pub fn arity(&self) -> usize {
        self.arity
    }

    pub fn components(&self) -> &[BundleFunction] {
        &self.comps
    }

    pub fn component(&self, i: usize) -> &BundleFunction {
        &self.comps[i]
    }

    /// `X(phi)` by the chain rule `X(phi) = sum_i X(x_i^A) * d/dx_i^A(phi)`.
    pub fn apply(&self, phi: &BundleFunction) -> BundleFunction {
        assert!(
            phi.arity() == self.arity && same_algebra(phi.algebra(), &self.algebra),
            "field and function over different algebras or arities"
        );
        BundleFunction::sum_of(
            &self.algebra,
            self.arity,
            self.comps.iter().enumerate().filter(|(_, c)| !c.is_zero()).map(|(i, c)| c * &phi.partial(i)),
        )
    }

    /// `[X, Y] = X o Y - Y o X`.
    pub fn lie_bracket(&self, other: &BundleVectorField) -> BundleVectorField {
        let comps = (0..self.arity)
            .map(|i| self.apply(&other.comps[i]) - other.apply(&self.comps[i]))
            .collect();
        BundleVectorField { algebra: self.algebra.clone(), arity: self.arity, comps }
    }

    pub fn add(&self, other: &BundleVectorField) -> BundleVectorField {
        self.zip(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &BundleVectorField) -> BundleVectorField {
        self.zip(other, |a, b| a - b)
    }

    fn zip(&self, other: &BundleVectorField, f: impl Fn(&BundleFunction, &BundleFunction) -> BundleFunction) -> Self {
        let comps = self.comps.iter().zip(&other.comps).map(|(a, b)| f(a, b)).collect();
        BundleVectorField { algebra: self.algebra.clone(), arity: self.arity, comps }
    }

    /// `a * X` for an A-constant `a`.
    pub fn scale(&self, a: &WeilElement) -> BundleVectorField {
        self.map(|c| c.scale(a))
    }

    /// `phi * X`.
    pub fn times(&self, phi: &BundleFunction) -> BundleVectorField {
        self.map(|c| phi * c)
    }

    fn map(&self, f: impl Fn(&BundleFunction) -> BundleFunction) -> Self {
        BundleVectorField { algebra: self.algebra.clone(), arity: self.arity, comps: self.comps.iter().map(f).collect() }
    }
}
