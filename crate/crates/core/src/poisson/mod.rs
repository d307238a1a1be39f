//! Poisson structures on `R^n` and their prolongation to the Weil bundle.

mod cochain;

pub use cochain::{
    check_global_witness_poisson, closedness_residual_base, closedness_residual_poisson, d_a_tilde, d_ad, default_generators,
    is_locally_hamiltonian_base, is_locally_hamiltonian_poisson, witness_residual_poisson, BaseBilinear, BaseCochain,
    BundleBilinear, PoissonCochain,
};

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expression::ScalarExpr;
use crate::weil_algebra::{Fault, WeilAlgebra};
use crate::weil_bundle::{BaseVectorField, BundleFunction, BundleVectorField, DomainBox, Factor};

const JACOBI_TOL: f64 = 1e-8;
const JACOBI_SAMPLES: usize = 16;

/// An antisymmetric bivector `pi_ij` on `R^n` satisfying Jacobi.
#[derive(Debug, Clone, PartialEq)]
pub struct PoissonStructure {
    arity: usize,
    // row-major strict upper triangle
    upper: Vec<ScalarExpr>,
}

/// Wire form: `{"arity": n, "bivector": {"01": "expr", ...}}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoissonJson {
    pub arity: usize,
    pub bivector: BTreeMap<String, String>,
}

fn upper_index(arity: usize, i: usize, j: usize) -> usize {
    debug_assert!(i < j && j < arity);
    i * arity - i * (i + 1) / 2 + (j - i - 1)
}

impl PoissonStructure {
    /// Build from upper-triangle entries `((i, j), pi_ij)` with `i < j`;
    /// unlisted entries are zero. Jacobi is checked at sampled points.
    pub fn new(arity: usize, entries: Vec<((usize, usize), ScalarExpr)>) -> Result<Self> {
        let p = Self::unchecked(arity, entries)?;
        p.validate_jacobi()?;
        Ok(p)
    }

    fn unchecked(arity: usize, entries: Vec<((usize, usize), ScalarExpr)>) -> Result<Self> {
        let mut upper = vec![ScalarExpr::zero(arity); arity * arity.saturating_sub(1) / 2];
        for ((i, j), e) in entries {
            if i >= j || j >= arity {
                return Err(Error::Input(format!("bivector key ({i}, {j}) must satisfy i < j < {arity}")));
            }
            if e.arity() != arity {
                return Err(Error::Input(format!("bivector entry ({i}, {j}) has arity {}", e.arity())));
            }
            upper[upper_index(arity, i, j)] = e;
        }
        Ok(PoissonStructure { arity, upper })
    }

    /// `pi_{i, i+m} = 1` on `R^{2m}`, so `{x_i, x_{i+m}} = 1`.
    pub fn canonical(arity: usize) -> Result<Self> {
        if arity % 2 != 0 {
            return Err(Error::Input(format!("canonical structure needs even arity, got {arity}")));
        }
        let m = arity / 2;
        Self::new(arity, (0..m).map(|i| ((i, i + m), ScalarExpr::one(arity))).collect())
    }

    /// The linear structure `pi_ij = eps_ijk x_k` on `R^3`.
    pub fn so3() -> Self {
        let x = |k| ScalarExpr::var(3, k);
        Self::new(3, vec![((0, 1), x(2)), ((0, 2), -x(1)), ((1, 2), x(0))]).expect("so(3) satisfies Jacobi")
    }

    pub fn from_json(json: &PoissonJson) -> Result<Self> {
        let n = json.arity;
        let mut entries = Vec::new();
        for (key, text) in &json.bivector {
            let (i, j) = parse_key(key, n)?;
            entries.push(((i, j), ScalarExpr::parse(text, n)?));
        }
        Self::new(n, entries)
    }

    pub fn to_json(&self) -> PoissonJson {
        let mut bivector = BTreeMap::new();
        for i in 0..self.arity {
            for j in i + 1..self.arity {
                let e = &self.upper[upper_index(self.arity, i, j)];
                if !e.is_zero() {
                    let key = if self.arity <= 10 { format!("{i}{j}") } else { format!("{i},{j}") };
                    bivector.insert(key, e.to_string());
                }
            }
        }
        PoissonJson { arity: self.arity, bivector }
    }

    pub fn arity(&self) -> usize {
        self.arity
    }

    /// `pi_ij`, with the lower triangle read off by antisymmetry.
    pub fn entry(&self, i: usize, j: usize) -> ScalarExpr {
        use std::cmp::Ordering::*;
        match i.cmp(&j) {
            Less => self.upper[upper_index(self.arity, i, j)].clone(),
            Greater => -&self.upper[upper_index(self.arity, j, i)],
            Equal => ScalarExpr::zero(self.arity),
        }
    }

    /// `{f, g} = sum_ij pi_ij df/dx_i dg/dx_j`.
    pub fn base_bracket(&self, f: &ScalarExpr, g: &ScalarExpr) -> ScalarExpr {
        let n = self.arity;
        let df: Vec<ScalarExpr> = (0..n).map(|i| f.differentiate(i)).collect();
        let dg: Vec<ScalarExpr> = (0..n).map(|i| g.differentiate(i)).collect();
        let mut out = ScalarExpr::zero(n);
        for i in 0..n {
            for j in i + 1..n {
                let pij = &self.upper[upper_index(n, i, j)];
                if pij.is_zero() {
                    continue;
                }
                out = out + pij * &(&df[i] * &dg[j] - &df[j] * &dg[i]);
            }
        }
        out
    }

    /// The hamiltonian field `ad(f) = {f, .}`, with components
    /// `sum_i pi_ij df/dx_i`.
    pub fn ad(&self, f: &ScalarExpr) -> BaseVectorField {
        let n = self.arity;
        let df: Vec<ScalarExpr> = (0..n).map(|i| f.differentiate(i)).collect();
        let comps = (0..n)
            .map(|j| (0..n).fold(ScalarExpr::zero(n), |acc, i| acc + &self.entry(i, j) * &df[i]))
            .collect();
        BaseVectorField::new(comps).expect("components share the arity")
    }

    fn validate_jacobi(&self) -> Result<()> {
        let n = self.arity;
        if n < 3 {
            return Ok(());
        }
        let x: Vec<ScalarExpr> = (0..n).map(|i| ScalarExpr::var(n, i)).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
        let domain = DomainBox::standard(n);
        let points: Vec<Vec<f64>> = (0..JACOBI_SAMPLES).map(|_| domain.sample_point(&mut rng)).collect();
        for i in 0..n {
            for j in i + 1..n {
                for k in j + 1..n {
                    let cyc = self.base_bracket(&x[i], &self.base_bracket(&x[j], &x[k]))
                        + self.base_bracket(&x[j], &self.base_bracket(&x[k], &x[i]))
                        + self.base_bracket(&x[k], &self.base_bracket(&x[i], &x[j]));
                    for pt in &points {
                        let v = cyc.eval_real(pt)?;
                        if v.abs() > JACOBI_TOL {
                            return Err(Error::Validation(format!(
                                "Jacobi identity fails on (x{i}, x{j}, x{k}) at {pt:?}: residual {v:e}"
                            )));
                        }
                    }
                }
            }
        }
        Ok(())
    }
}

fn parse_key(key: &str, n: usize) -> Result<(usize, usize)> {
    let bad = || Error::Input(format!("malformed bivector key `{key}`"));
    let (a, b) = match key.split_once(',') {
        Some((a, b)) => (a.trim(), b.trim()),
        None if key.len() == 2 && key.is_ascii() => key.split_at(1),
        None => return Err(bad()),
    };
    let (i, j): (usize, usize) = (a.parse().map_err(|_| bad())?, b.parse().map_err(|_| bad())?);
    if i >= j || j >= n {
        return Err(Error::Input(format!("bivector key `{key}` must satisfy i < j < {n}")));
    }
    Ok((i, j))
}

/// The A-Poisson structure on `M^A` induced by a base structure.
#[derive(Debug, Clone)]
pub struct ProlongedPoisson {
    base: PoissonStructure,
    algebra: Arc<WeilAlgebra>,
}

impl ProlongedPoisson {
    pub fn new(base: PoissonStructure, algebra: &Arc<WeilAlgebra>) -> Self {
        ProlongedPoisson { base, algebra: algebra.clone() }
    }

    pub fn base(&self) -> &PoissonStructure {
        &self.base
    }

    pub fn algebra(&self) -> &Arc<WeilAlgebra> {
        &self.algebra
    }

    pub fn arity(&self) -> usize {
        self.base.arity
    }

    fn pi(&self, i: usize, j: usize) -> ScalarExpr {
        if self.algebra.has_fault(Fault::TransposedBivector) {
            self.base.entry(j, i)
        } else {
            self.base.entry(i, j)
        }
    }

    /// Canonical components of `tau_u` for a single factor `u`.
    fn generator_field(&self, factor: &Factor) -> Vec<BundleFunction> {
        let n = self.arity();
        match factor {
            Factor::Pullback(f) => {
                let sign = if self.algebra.has_fault(Fault::SignFlipTau) { -1.0 } else { 1.0 };
                let df: Vec<ScalarExpr> = (0..n).map(|i| f.differentiate(i)).collect();
                (0..n)
                    .map(|j| {
                        let c = (0..n).fold(ScalarExpr::zero(n), |acc, i| acc + &self.pi(i, j) * &df[i]);
                        BundleFunction::prolong(&self.algebra, &c.scale(sign))
                    })
                    .collect()
            }
            Factor::InverseEntry { .. } => {
                let u = BundleFunction::from_factors(crate::WeilElement::one(&self.algebra), n, vec![factor.clone()]);
                let du: Vec<BundleFunction> = (0..n).map(|k| u.partial(k)).collect();
                (0..n)
                    .map(|j| {
                        BundleFunction::sum_of(
                            &self.algebra,
                            n,
                            (0..n).map(|k| BundleFunction::prolong(&self.algebra, &self.pi(k, j)) * &du[k]),
                        )
                    })
                    .collect()
            }
        }
    }

    /// `tau_phi`, built from `tau_{f^A} = (ad f)^A` by A-linearity and
    /// `tau_{phi psi} = phi tau_psi + psi tau_phi`.
    pub fn tau_field(&self, phi: &BundleFunction) -> BundleVectorField {
        let n = self.arity();
        let mut comps = vec![BundleFunction::zero(&self.algebra, n); n];
        for term in phi.terms() {
            for (l, factor) in term.factors.iter().enumerate() {
                let others: Vec<Factor> =
                    term.factors.iter().enumerate().filter(|(k, _)| *k != l).map(|(_, f)| f.clone()).collect();
                let rest = BundleFunction::from_factors(term.coeff.clone(), n, others);
                for (c, g) in comps.iter_mut().zip(self.generator_field(factor)) {
                    if !g.is_zero() {
                        *c = &*c + &rest * &g;
                    }
                }
            }
        }
        BundleVectorField::new(&self.algebra, comps).expect("components share algebra and arity")
    }

    /// `{phi, psi}_A = tau_phi(psi)`.
    pub fn bracket(&self, phi: &BundleFunction, psi: &BundleFunction) -> BundleFunction {
        self.tau_field(phi).apply(psi)
    }
}

pub fn base_bracket(p: &PoissonStructure, f: &ScalarExpr, g: &ScalarExpr) -> ScalarExpr {
    p.base_bracket(f, g)
}

pub fn tau_field(pp: &ProlongedPoisson, phi: &BundleFunction) -> BundleVectorField {
    pp.tau_field(phi)
}

pub fn prolonged_bracket(pp: &ProlongedPoisson, phi: &BundleFunction, psi: &BundleFunction) -> BundleFunction {
    pp.bracket(phi, psi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::weil_bundle::{fields_equal, functions_equal, prolong_function, NearPoint, Sampling};
    use crate::WeilElement;

    fn p(t: &str, n: usize) -> ScalarExpr {
        ScalarExpr::parse(t, n).unwrap()
    }

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(42)
    }

    fn real_close(a: &ScalarExpr, b: &ScalarExpr) -> bool {
        let mut r = rng();
        let d = DomainBox::standard(a.arity());
        (0..20).all(|_| {
            let x = d.sample_point(&mut r);
            (a.eval_real(&x).unwrap() - b.eval_real(&x).unwrap()).abs() < 1e-10
        })
    }

    #[test]
    fn canonical_brackets() {
        let c = PoissonStructure::canonical(2).unwrap();
        assert_eq!(c.base_bracket(&p("x0", 2), &p("x1", 2)).as_constant(), Some(1.0));
        let h = p("x1^2/2", 2);
        assert!(real_close(&c.base_bracket(&h, &p("x0", 2)), &p("-x1", 2)));
        let c4 = PoissonStructure::canonical(4).unwrap();
        assert_eq!(c4.base_bracket(&p("x1", 4), &p("x3", 4)).as_constant(), Some(1.0));
        assert!(c4.base_bracket(&p("x0", 4), &p("x1", 4)).is_zero());
    }

    #[test]
    fn so3_bracket() {
        let s = PoissonStructure::so3();
        assert!(real_close(&s.base_bracket(&p("x0", 3), &p("x1", 3)), &p("x2", 3)));
        assert!(real_close(&s.base_bracket(&p("x1", 3), &p("x2", 3)), &p("x0", 3)));
    }

    #[test]
    fn base_bracket_laws() {
        let s = PoissonStructure::so3();
        let (f, g, h) = (p("x0*x1 + sin(x2)", 3), p("exp(x0) - x2^2", 3), p("x1^3 + x0", 3));
        assert!(real_close(&s.base_bracket(&f, &g), &-s.base_bracket(&g, &f)));
        let lhs = s.base_bracket(&f, &(&g * &h));
        let rhs = s.base_bracket(&f, &g) * &h + &g * &s.base_bracket(&f, &h);
        assert!(real_close(&lhs, &rhs));
        assert!(real_close(&s.ad(&f).apply(&g), &s.base_bracket(&f, &g)));
    }

    #[test]
    fn jacobi_is_enforced() {
        let bad = PoissonStructure::new(3, vec![((0, 1), p("1", 3)), ((1, 2), p("x1", 3))]);
        assert!(matches!(bad, Err(Error::Validation(_))));
        let ok = PoissonStructure::new(3, vec![((0, 1), p("x2^2", 3))]);
        assert!(ok.is_ok());
    }

    #[test]
    fn json_round_trip() {
        let s = PoissonStructure::so3();
        let text = serde_json::to_string(&s.to_json()).unwrap();
        assert_eq!(text, r#"{"arity":3,"bivector":{"01":"x2","02":"-x1","12":"x0"}}"#);
        let back = PoissonStructure::from_json(&serde_json::from_str(&text).unwrap()).unwrap();
        assert!((0..3).all(|i| (0..3).all(|j| real_close(&back.entry(i, j), &s.entry(i, j)))));
        let j: PoissonJson = serde_json::from_str(r#"{"arity":2,"bivector":{"10":"1"}}"#).unwrap();
        assert!(PoissonStructure::from_json(&j).is_err());
    }

    #[test]
    fn tau_of_constants_vanishes() {
        let alg = WeilAlgebra::truncated(1, 2).unwrap();
        let pp = ProlongedPoisson::new(PoissonStructure::canonical(2).unwrap(), &alg);
        let one = BundleFunction::real_constant(&alg, 2, 1.0);
        assert!(pp.tau_field(&one).components().iter().all(BundleFunction::is_zero));
    }

    #[test]
    fn tau_on_generators() {
        let alg = WeilAlgebra::truncated(1, 2).unwrap();
        let s = Sampling::new(2);
        let pp = ProlongedPoisson::new(PoissonStructure::canonical(2).unwrap(), &alg);
        let x0 = BundleFunction::coordinate(&alg, 2, 0);
        let x1 = BundleFunction::coordinate(&alg, 2, 1);
        let one = BundleFunction::real_constant(&alg, 2, 1.0);
        assert!(functions_equal(&pp.tau_field(&x0).apply(&x1), &one, &s, &mut rng()));
        let f = p("x0^2*x1 + cos(x1)", 2);
        let lhs = pp.tau_field(&prolong_function(&alg, &f));
        assert!(fields_equal(&lhs, &pp.base().ad(&f).prolong(&alg), &s, &mut rng()));
    }

    #[test]
    fn prolonged_bracket_examples() {
        let dual = WeilAlgebra::truncated(1, 1).unwrap();
        let pp = ProlongedPoisson::new(PoissonStructure::canonical(2).unwrap(), &dual);
        let sq = prolong_function(&dual, &p("x0^2", 2));
        let x1 = BundleFunction::coordinate(&dual, 2, 1);
        let xi = NearPoint::new(
            &dual,
            vec![WeilElement::new(&dual, vec![1.0, 1.0]).unwrap(), WeilElement::zero(&dual)],
        )
        .unwrap();
        let v = pp.bracket(&sq, &x1).evaluate(&xi).unwrap();
        assert_eq!(v, WeilElement::new(&dual, vec![2.0, 2.0]).unwrap());
        assert!(pp.bracket(&sq, &sq).evaluate(&xi).unwrap().is_zero());
    }

    #[test]
    fn bracket_of_prolongations_is_prolonged_bracket() {
        let alg = WeilAlgebra::truncated(2, 2).unwrap();
        let base = PoissonStructure::so3();
        let pp = ProlongedPoisson::new(base.clone(), &alg);
        let (f, g) = (p("x0*x2 + sin(x1)", 3), p("x1^2 - exp(x0)*x2", 3));
        let lhs = pp.bracket(&prolong_function(&alg, &f), &prolong_function(&alg, &g));
        let rhs = prolong_function(&alg, &base.base_bracket(&f, &g));
        assert!(functions_equal(&lhs, &rhs, &Sampling::new(3), &mut rng()));
    }

    #[test]
    fn tau_calculus_and_leibniz() {
        let alg = WeilAlgebra::truncated(1, 3).unwrap();
        let s = Sampling::new(3);
        let pp = ProlongedPoisson::new(PoissonStructure::so3(), &alg);
        let a = WeilElement::new(&alg, vec![0.3, -1.0, 0.5, 2.0]).unwrap();
        let phi = prolong_function(&alg, &p("x0*x1", 3)).scale(&a) + prolong_function(&alg, &p("cos(x2)", 3));
        let psi = prolong_function(&alg, &p("x2 + x0^2", 3)) * prolong_function(&alg, &p("exp(x1)", 3));
        let chi = BundleFunction::coordinate(&alg, 3, 2).scale(&a);

        let sum = pp.tau_field(&(&phi + &psi));
        assert!(fields_equal(&sum, &pp.tau_field(&phi).add(&pp.tau_field(&psi)), &s, &mut rng()));
        assert!(fields_equal(&pp.tau_field(&phi.scale(&a)), &pp.tau_field(&phi).scale(&a), &s, &mut rng()));
        let prod = pp.tau_field(&phi).times(&psi).add(&pp.tau_field(&psi).times(&phi));
        assert!(fields_equal(&pp.tau_field(&(&phi * &psi)), &prod, &s, &mut rng()));

        let lhs = pp.bracket(&(&phi * &psi), &chi);
        let rhs = pp.bracket(&phi, &chi) * &psi + &phi * &pp.bracket(&psi, &chi);
        assert!(functions_equal(&lhs, &rhs, &s, &mut rng()));
        let anti = pp.bracket(&phi, &psi) + pp.bracket(&psi, &phi);
        assert!(functions_equal(&anti, &BundleFunction::zero(&alg, 3), &s, &mut rng()));
    }

    #[test]
    fn prolonged_jacobi() {
        let alg = WeilAlgebra::truncated(1, 2).unwrap();
        let pp = ProlongedPoisson::new(PoissonStructure::so3(), &alg);
        let a = WeilElement::new(&alg, vec![1.0, 0.5, -0.25]).unwrap();
        let f = prolong_function(&alg, &p("x0*x1", 3)).scale(&a);
        let g = prolong_function(&alg, &p("x2^2", 3)) + BundleFunction::coordinate(&alg, 3, 0);
        let h = prolong_function(&alg, &p("sin(x1)", 3));
        let cyc = pp.bracket(&f, &pp.bracket(&g, &h)) + pp.bracket(&g, &pp.bracket(&h, &f))
            + pp.bracket(&h, &pp.bracket(&f, &g));
        assert!(functions_equal(&cyc, &BundleFunction::zero(&alg, 3), &Sampling::new(3), &mut rng()));
    }

    #[test]
    fn inverse_entry_factors_follow_the_general_rule() {
        // tau of (M^A)^{-1} entries agrees with tau of the explicit quotient
        let alg = WeilAlgebra::truncated(1, 2).unwrap();
        let pp = ProlongedPoisson::new(PoissonStructure::canonical(2).unwrap(), &alg);
        let m = Arc::new(
            crate::weil_bundle::ExprMatrix::new(2, vec![p("2 + x0*x1", 2), p("0", 2), p("0", 2), p("1", 2)]).unwrap(),
        );
        let u = BundleFunction::inverse_entry(&alg, &m, 0, 0);
        let q = prolong_function(&alg, &p("1/(2 + x0*x1)", 2));
        let domain = DomainBox::cube(2, -1.0, 1.0);
        let s = Sampling::new(2).with_domain(domain);
        assert!(fields_equal(&pp.tau_field(&u), &pp.tau_field(&q), &s, &mut rng()));
    }

    #[test]
    fn faults_change_the_bracket() {
        let alg = WeilAlgebra::truncated(1, 1).unwrap();
        let s = Sampling::new(2);
        let (f, g) = (p("x0^2", 2), p("x1", 2));
        let expected = |alg: &Arc<WeilAlgebra>| prolong_function(alg, &p("2*x0", 2));
        for fault in [Fault::SignFlipTau, Fault::TransposedBivector] {
            let bad = alg.with_fault(Some(fault));
            let pp = ProlongedPoisson::new(PoissonStructure::canonical(2).unwrap(), &bad);
            let v = pp.bracket(&prolong_function(&bad, &f), &prolong_function(&bad, &g));
            assert!(!functions_equal(&v, &expected(&bad), &s, &mut rng()));
        }
    }
}
