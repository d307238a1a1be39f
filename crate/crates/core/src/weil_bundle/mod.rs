//! The Weil bundle `M^A` of an open subset `M` of `R^n`.
//!
//! A near point is stored by its coordinates `xi(x_i)`; functions on `M^A`
//! are the A-algebra generated by prolongations `f^A`, and vector fields are
//! A-linear derivations recorded by their action on the coordinates.

mod field;
mod function;

pub use field::{BaseVectorField, BundleVectorField};
pub use function::{BundleFunction, BundleFunctionJson, EvalContext, ExprMatrix, Factor, Term, TermJson};

use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expression::ScalarExpr;
use crate::weil_algebra::{same_algebra, AlgebraSpec, ElementJson, WeilAlgebra, WeilElement};

/// An axis-aligned box in `R^n` standing in for the open set `M`.
#[derive(Debug, Clone, PartialEq)]
pub struct DomainBox {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl DomainBox {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() || lower.iter().zip(&upper).any(|(l, u)| !(l < u)) {
            return Err(Error::Input("domain box bounds must satisfy lower < upper coordinatewise".into()));
        }
        Ok(DomainBox { lower, upper })
    }

    pub fn cube(arity: usize, lower: f64, upper: f64) -> Self {
        DomainBox { lower: vec![lower; arity], upper: vec![upper; arity] }
    }

    /// `[-2, 2]^n`.
    pub fn standard(arity: usize) -> Self {
        Self::cube(arity, -2.0, 2.0)
    }

    pub fn arity(&self) -> usize {
        self.lower.len()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.arity() && x.iter().zip(self.lower.iter().zip(&self.upper)).all(|(v, (l, u))| l <= v && v <= u)
    }

    pub fn sample_point(&self, rng: &mut impl Rng) -> Vec<f64> {
        self.lower.iter().zip(&self.upper).map(|(&l, &u)| rng.gen_range(l..u)).collect()
    }
}

/// A near point `xi` of kind `A`, given by `xi(x_i)`; its origin is the
/// vector of augmentations.
#[derive(Debug, Clone, PartialEq)]
pub struct NearPoint {
    algebra: Arc<WeilAlgebra>,
    coords: Vec<WeilElement>,
    origin: Vec<f64>,
}

/// Wire form: `{"algebra": ..., "coords": [{"coeffs": [...]}, ...]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NearPointJson {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub algebra: Option<AlgebraSpec>,
    pub coords: Vec<ElementJson>,
}

impl NearPoint {
    pub fn new(algebra: &Arc<WeilAlgebra>, coords: Vec<WeilElement>) -> Result<Self> {
        if coords.iter().any(|c| !same_algebra(c.algebra(), algebra)) {
            return Err(Error::AlgebraMismatch);
        }
        let origin = coords.iter().map(WeilElement::augmentation).collect();
        Ok(NearPoint { algebra: algebra.clone(), coords, origin })
    }

    /// Like [`NearPoint::new`] but also requires the origin to lie in `domain`.
    pub fn within(algebra: &Arc<WeilAlgebra>, coords: Vec<WeilElement>, domain: &DomainBox) -> Result<Self> {
        let p = Self::new(algebra, coords)?;
        if !domain.contains(&p.origin) {
            return Err(Error::Domain(format!("origin {:?} lies outside the domain box", p.origin)));
        }
        Ok(p)
    }

    /// The plain point `x` embedded as the near point `f -> f(x) * 1_A`.
    pub fn at_origin(algebra: &Arc<WeilAlgebra>, x: &[f64]) -> Self {
        let coords = x.iter().map(|&v| WeilElement::constant(algebra, v)).collect();
        NearPoint { algebra: algebra.clone(), coords, origin: x.to_vec() }
    }

    pub fn from_json(algebra: &Arc<WeilAlgebra>, json: &NearPointJson) -> Result<Self> {
        let coords: Result<Vec<WeilElement>> = json.coords.iter().map(|c| WeilElement::from_json(algebra, c)).collect();
        Self::new(algebra, coords?)
    }

    pub fn to_json(&self) -> NearPointJson {
        NearPointJson {
            algebra: Some(self.algebra.spec().clone()),
            coords: self.coords.iter().map(WeilElement::to_json).collect(),
        }
    }

    pub fn algebra(&self) -> &Arc<WeilAlgebra> {
        &self.algebra
    }

    pub fn coords(&self) -> &[WeilElement] {
        &self.coords
    }

    /// `pi_M(xi)`.
    pub fn origin(&self) -> &[f64] {
        &self.origin
    }

    pub fn arity(&self) -> usize {
        self.coords.len()
    }

    /// Draw a near point with origin uniform in `domain` and nilpotent
    /// coefficients uniform in `[-1, 1]`.
    pub fn sample(algebra: &Arc<WeilAlgebra>, domain: &DomainBox, rng: &mut impl Rng) -> Self {
        let origin = domain.sample_point(rng);
        let coords = origin
            .iter()
            .map(|&x| {
                let mut c = vec![x];
                c.extend((1..algebra.dim()).map(|_| rng.gen_range(-1.0..=1.0)));
                WeilElement::new(algebra, c).expect("dimension matches")
            })
            .collect();
        NearPoint { algebra: algebra.clone(), coords, origin }
    }
}

/// An A-constant with every coefficient uniform in `[-1, 1]`.
pub fn sample_scalar(algebra: &Arc<WeilAlgebra>, rng: &mut impl Rng) -> WeilElement {
    let c = (0..algebra.dim()).map(|_| rng.gen_range(-1.0..=1.0)).collect();
    WeilElement::new(algebra, c).expect("dimension matches")
}

/// `f^A`.
pub fn prolong_function(algebra: &Arc<WeilAlgebra>, f: &ScalarExpr) -> BundleFunction {
    BundleFunction::prolong(algebra, f)
}

/// `h^A(xi)` for a map `h: R^n -> R^m`, with `[h^A(xi)](g) = xi(g o h)`.
pub fn pushforward_map(h: &[ScalarExpr], xi: &NearPoint) -> Result<NearPoint> {
    let coords: Result<Vec<WeilElement>> = h.iter().map(|hj| hj.eval_weil(xi.coords())).collect();
    NearPoint::new(xi.algebra(), coords?)
}

pub fn prolong_vector_field(algebra: &Arc<WeilAlgebra>, theta: &BaseVectorField) -> BundleVectorField {
    theta.prolong(algebra)
}

pub fn apply_field(x: &BundleVectorField, phi: &BundleFunction) -> BundleFunction {
    x.apply(phi)
}

pub fn lie_bracket(x: &BundleVectorField, y: &BundleVectorField) -> BundleVectorField {
    x.lie_bracket(y)
}

/// Residual between two elements: largest coefficient difference, relative
/// to the larger magnitude once that exceeds one.
pub fn scaled_residual(a: &WeilElement, b: &WeilElement) -> f64 {
    a.max_abs_diff(b) / 1f64.max(a.max_abs()).max(b.max_abs())
}

/// Parameters for deciding equality of functions by sampling.
#[derive(Debug, Clone, PartialEq)]
pub struct Sampling {
    pub samples: usize,
    pub tol: f64,
    pub domain: DomainBox,
}

impl Sampling {
    pub const DEFAULT_SAMPLES: usize = 32;
    pub const DEFAULT_TOL: f64 = 1e-9;

    pub fn new(arity: usize) -> Self {
        Sampling { samples: Self::DEFAULT_SAMPLES, tol: Self::DEFAULT_TOL, domain: DomainBox::standard(arity) }
    }

    pub fn with_samples(mut self, samples: usize) -> Self {
        self.samples = samples;
        self
    }

    pub fn with_tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }

    pub fn with_domain(mut self, domain: DomainBox) -> Self {
        self.domain = domain;
        self
    }
}

/// Outcome of comparing two functions at sampled near points.
#[derive(Debug, Clone)]
pub struct Comparison {
    pub worst_residual: f64,
    pub worst_point: Option<NearPoint>,
}

impl Comparison {
    pub fn new() -> Self {
        Comparison { worst_residual: 0.0, worst_point: None }
    }

    pub fn record(&mut self, residual: f64, point: &NearPoint) {
        if residual > self.worst_residual || self.worst_point.is_none() || residual.is_nan() {
            self.worst_residual = if residual.is_nan() { f64::INFINITY } else { residual };
            self.worst_point = Some(point.clone());
        }
    }

    pub fn merge(&mut self, other: Comparison) {
        if let Some(p) = &other.worst_point {
            self.record(other.worst_residual, p);
        }
    }
}

impl Default for Comparison {
    fn default() -> Self {
        Self::new()
    }
}

/// Largest residual between `lhs` and `rhs` over `points`.
pub fn compare_at(lhs: &[BundleFunction], rhs: &[BundleFunction], points: &[NearPoint]) -> Result<Comparison> {
    let mut cmp = Comparison::new();
    for point in points {
        let mut ctx = EvalContext::new(point);
        for (a, b) in lhs.iter().zip(rhs) {
            let (va, vb) = (a.evaluate_in(&mut ctx)?, b.evaluate_in(&mut ctx)?);
            cmp.record(scaled_residual(&va, &vb), point);
        }
    }
    Ok(cmp)
}

pub fn sample_points(algebra: &Arc<WeilAlgebra>, sampling: &Sampling, rng: &mut impl Rng) -> Vec<NearPoint> {
    (0..sampling.samples).map(|_| NearPoint::sample(algebra, &sampling.domain, rng)).collect()
}

pub fn compare_functions(
    phi: &BundleFunction,
    psi: &BundleFunction,
    sampling: &Sampling,
    rng: &mut impl Rng,
) -> Result<Comparison> {
    let points = sample_points(phi.algebra(), sampling, rng);
    compare_at(std::slice::from_ref(phi), std::slice::from_ref(psi), &points)
}

/// Semantic equality by sampling; evaluation failures count as inequality.
pub fn functions_equal(phi: &BundleFunction, psi: &BundleFunction, sampling: &Sampling, rng: &mut impl Rng) -> bool {
    phi.compatible(psi)
        && compare_functions(phi, psi, sampling, rng).is_ok_and(|c| c.worst_residual <= sampling.tol)
}

pub fn compare_fields(
    x: &BundleVectorField,
    y: &BundleVectorField,
    sampling: &Sampling,
    rng: &mut impl Rng,
) -> Result<Comparison> {
    let points = sample_points(x.algebra(), sampling, rng);
    compare_at(x.components(), y.components(), &points)
}

pub fn fields_equal(x: &BundleVectorField, y: &BundleVectorField, sampling: &Sampling, rng: &mut impl Rng) -> bool {
    x.arity() == y.arity() && compare_fields(x, y, sampling, rng).is_ok_and(|c| c.worst_residual <= sampling.tol)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn p(t: &str, n: usize) -> ScalarExpr {
        ScalarExpr::parse(t, n).unwrap()
    }

    fn el(alg: &Arc<WeilAlgebra>, c: &[f64]) -> WeilElement {
        WeilElement::new(alg, c.to_vec()).unwrap()
    }

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(42)
    }

    #[test]
    fn coordinate_pullback_extracts_coordinate() {
        let dual = WeilAlgebra::truncated(1, 1).unwrap();
        let xi = NearPoint::new(&dual, vec![el(&dual, &[2.0, 1.0])]).unwrap();
        assert_eq!(prolong_function(&dual, &p("x0", 1)).evaluate(&xi).unwrap(), el(&dual, &[2.0, 1.0]));
    }

    #[test]
    fn square_pullback_over_cubic_truncation() {
        let t3 = WeilAlgebra::truncated(1, 2).unwrap();
        let xi = NearPoint::new(&t3, vec![el(&t3, &[1.0, 1.0, 0.0])]).unwrap();
        let v = prolong_function(&t3, &p("x0^2", 1)).evaluate(&xi).unwrap();
        assert_eq!(v, el(&t3, &[1.0, 2.0, 1.0]));
    }

    #[test]
    fn pullback_is_multiplicative() {
        let alg = WeilAlgebra::truncated(2, 2).unwrap();
        let (f, g) = (p("x0*x1 + sin(x1)", 2), p("exp(x0) - x1^3", 2));
        let lhs = prolong_function(&alg, &(&f * &g));
        let rhs = prolong_function(&alg, &f) * prolong_function(&alg, &g);
        let s = Sampling::new(2).with_samples(20);
        assert!(functions_equal(&lhs, &rhs, &s, &mut rng()));
    }

    #[test]
    fn pushforward_examples() {
        let dual = WeilAlgebra::truncated(1, 1).unwrap();
        let xi = NearPoint::new(&dual, vec![el(&dual, &[1.0, 1.0]), el(&dual, &[2.0, 0.0])]).unwrap();
        let id = [p("x0", 2), p("x1", 2)];
        assert_eq!(pushforward_map(&id, &xi).unwrap(), xi);
        let h = [p("x0 + x1", 2), p("x0*x1", 2)];
        let image = pushforward_map(&h, &xi).unwrap();
        assert_eq!(image.coords(), &[el(&dual, &[3.0, 1.0]), el(&dual, &[2.0, 2.0])]);
        assert_eq!(image.origin(), &[3.0, 2.0]);
    }

    #[test]
    fn pullback_through_composition() {
        let alg = WeilAlgebra::truncated(1, 3).unwrap();
        let g = p("x0*x1^2 - cos(x0)", 2);
        let h = [p("x0^2 - x1", 2), p("x0*x1 + 1", 2)];
        let gh = g.compose(&h).unwrap();
        let mut r = rng();
        for _ in 0..20 {
            let xi = NearPoint::sample(&alg, &DomainBox::standard(2), &mut r);
            let lhs = prolong_function(&alg, &gh).evaluate(&xi).unwrap();
            let rhs = prolong_function(&alg, &g).evaluate(&pushforward_map(&h, &xi).unwrap()).unwrap();
            assert!(scaled_residual(&lhs, &rhs) < 1e-12);
        }
    }

    #[test]
    fn prolonged_coordinate_field() {
        let alg = WeilAlgebra::truncated(1, 2).unwrap();
        let x = prolong_vector_field(&alg, &BaseVectorField::coordinate(3, 0));
        assert_eq!(x.component(0).terms().len(), 1);
        assert!(x.component(0).terms()[0].factors.is_empty());
        assert!(x.component(1).is_zero() && x.component(2).is_zero());
    }

    #[test]
    fn prolonged_field_on_pullbacks() {
        let alg = WeilAlgebra::truncated(2, 2).unwrap();
        let theta = BaseVectorField::parse(&["x0"]).unwrap();
        let f = p("x0^2", 1);
        let lhs = prolong_vector_field(&alg, &theta).apply(&prolong_function(&alg, &f));
        let rhs = prolong_function(&alg, &p("2*x0^2", 1));
        assert!(functions_equal(&lhs, &rhs, &Sampling::new(1), &mut rng()));
    }

    #[test]
    fn module_structure_of_prolongation() {
        let alg = WeilAlgebra::truncated(1, 2).unwrap();
        let theta = BaseVectorField::parse(&["x1", "x0*x1"]).unwrap();
        let f = p("sin(x0) + x1", 2);
        let lhs = theta.times(&f).prolong(&alg);
        let rhs = theta.prolong(&alg).times(&prolong_function(&alg, &f));
        let s = Sampling::new(2);
        let c = compare_fields(&lhs, &rhs, &s, &mut rng()).unwrap();
        assert!(c.worst_residual < 1e-12);
    }

    #[test]
    fn derivation_examples() {
        let alg = WeilAlgebra::truncated(1, 1).unwrap();
        let s = Sampling::new(2);
        let x = prolong_vector_field(&alg, &BaseVectorField::coordinate(2, 0));
        let c = BundleFunction::constant(&el(&alg, &[1.0, 0.0]), 2);
        assert!(x.apply(&c).is_zero());

        let sq = prolong_function(&alg, &p("x0^2", 2));
        let expected = prolong_function(&alg, &p("2*x0", 2));
        assert!(functions_equal(&x.apply(&sq), &expected, &s, &mut rng()));

        // Leibniz with an arbitrary field
        let a = el(&alg, &[0.5, -1.0]);
        let y = BundleVectorField::new(
            &alg,
            vec![
                prolong_function(&alg, &p("x1^2", 2)).scale(&a),
                prolong_function(&alg, &p("cos(x0)", 2)) + BundleFunction::constant(&a, 2),
            ],
        )
        .unwrap();
        let (x0, x1) = (BundleFunction::coordinate(&alg, 2, 0), BundleFunction::coordinate(&alg, 2, 1));
        let lhs = y.apply(&(&x0 * &x1));
        let rhs = &y.apply(&x0) * &x1 + &x0 * &y.apply(&x1);
        assert!(functions_equal(&lhs, &rhs, &s, &mut rng()));
    }

    #[test]
    fn canonical_components_are_recovered() {
        let alg = WeilAlgebra::truncated(2, 1).unwrap();
        let comps = vec![
            prolong_function(&alg, &p("x0*x1", 2)).scale(&WeilElement::basis(&alg, 2)),
            prolong_function(&alg, &p("exp(x1)", 2)) * prolong_function(&alg, &p("x0", 2)),
        ];
        let x = BundleVectorField::new(&alg, comps.clone()).unwrap();
        let mut r = rng();
        for i in 0..2 {
            let got = x.apply(&BundleFunction::coordinate(&alg, 2, i));
            for _ in 0..5 {
                let xi = NearPoint::sample(&alg, &DomainBox::standard(2), &mut r);
                assert_eq!(got.evaluate(&xi).unwrap(), comps[i].evaluate(&xi).unwrap());
            }
        }
    }

    #[test]
    fn bracket_examples() {
        let alg = WeilAlgebra::truncated(1, 2).unwrap();
        let s = Sampling::new(1);
        let d = BaseVectorField::coordinate(1, 0);
        let e = BaseVectorField::parse(&["x0"]).unwrap();
        let (dx, ex) = (d.prolong(&alg), e.prolong(&alg));
        let zero = dx.lie_bracket(&dx);
        assert!(zero.components().iter().all(BundleFunction::is_zero));
        // [d/dx, x d/dx] = d/dx
        assert!(fields_equal(&dx.lie_bracket(&ex), &d.bracket(&e).prolong(&alg), &s, &mut rng()));
        assert!(fields_equal(&dx.lie_bracket(&ex), &dx, &s, &mut rng()));
    }

    #[test]
    fn equality_by_sampling() {
        let alg = WeilAlgebra::truncated(1, 1).unwrap();
        let s = Sampling::new(2);
        let phi = prolong_function(&alg, &p("x0 + x1", 2));
        assert!(functions_equal(&phi, &phi, &s, &mut rng()));
        let sum = BundleFunction::coordinate(&alg, 2, 0) + BundleFunction::coordinate(&alg, 2, 1);
        assert!(functions_equal(&phi, &sum, &s, &mut rng()));
        let shifted = prolong_function(&alg, &p("x0 + 0.001", 2));
        assert!(!functions_equal(&BundleFunction::coordinate(&alg, 2, 0), &shifted, &s, &mut rng()));
    }

    #[test]
    fn near_point_json_and_domain() {
        let dual = WeilAlgebra::truncated(1, 1).unwrap();
        let json: NearPointJson = serde_json::from_str(r#"{"coords":[{"coeffs":[2,1]}]}"#).unwrap();
        let xi = NearPoint::from_json(&dual, &json).unwrap();
        assert_eq!(xi.origin(), &[2.0]);
        let back: NearPointJson = serde_json::from_value(serde_json::to_value(xi.to_json()).unwrap()).unwrap();
        assert_eq!(NearPoint::from_json(&dual, &back).unwrap(), xi);
        let err = NearPoint::within(&dual, vec![el(&dual, &[3.0, 0.0])], &DomainBox::standard(1));
        assert!(matches!(err, Err(Error::Domain(_))));
    }

    #[test]
    fn sampled_points_respect_the_box() {
        let alg = WeilAlgebra::truncated(2, 2).unwrap();
        let domain = DomainBox::new(vec![0.5, -1.0], vec![1.5, 0.0]).unwrap();
        let mut r = rng();
        for _ in 0..50 {
            let xi = NearPoint::sample(&alg, &domain, &mut r);
            assert!(domain.contains(xi.origin()));
            for c in xi.coords() {
                assert!(c.coeffs()[1..].iter().all(|v| (-1.0..=1.0).contains(v)));
            }
        }
    }

    #[test]
    fn bundle_function_json_round_trip() {
        let alg = WeilAlgebra::truncated(1, 1).unwrap();
        let phi = prolong_function(&alg, &p("x0^2", 2)).scale(&el(&alg, &[1.0, 2.0]))
            * prolong_function(&alg, &p("sin(x1)", 2))
            + BundleFunction::real_constant(&alg, 2, 3.0);
        let json = serde_json::to_string(&phi.to_json().unwrap()).unwrap();
        let back = BundleFunction::from_json(&alg, 2, &serde_json::from_str(&json).unwrap()).unwrap();
        assert!(functions_equal(&phi, &back, &Sampling::new(2), &mut rng()));
    }

    #[test]
    fn inverse_entries_solve_pointwise() {
        let alg = WeilAlgebra::truncated(1, 2).unwrap();
        let m = Arc::new(
            ExprMatrix::new(2, vec![p("1 + x0^2", 2), p("x1", 2), p("0", 2), p("2 + sin(x0)", 2)]).unwrap(),
        );
        // (M^{-1})_{00} = 1/(1+x0^2) with M upper triangular
        let lhs = BundleFunction::inverse_entry(&alg, &m, 0, 0);
        let rhs = prolong_function(&alg, &p("1/(1 + x0^2)", 2));
        let s = Sampling::new(2);
        assert!(functions_equal(&lhs, &rhs, &s, &mut rng()));
        // derivative through the inverse
        let d_lhs = lhs.partial(0);
        let d_rhs = rhs.partial(0);
        assert!(functions_equal(&d_lhs, &d_rhs, &s, &mut rng()));
        let lhs01 = BundleFunction::inverse_entry(&alg, &m, 0, 1);
        let rhs01 = prolong_function(&alg, &p("-x1/((1 + x0^2)*(2 + sin(x0)))", 2));
        assert!(functions_equal(&lhs01.partial(0), &rhs01.partial(0), &s, &mut rng()));
        assert!(functions_equal(&lhs01.partial(1), &rhs01.partial(1), &s, &mut rng()));
    }
}
