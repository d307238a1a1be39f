//! Differential forms, symplectic structures and hamiltonian fields on the
//! Weil bundle.

mod form;

pub use form::{
    d_a_form, d_a_function, d_base, interior_product, prolong_form, BaseForm, BundleForm, FormJson, MultiIndex,
};
pub use crate::weil_algebra::weil_matrix_inverse;

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expression::ScalarExpr;
use crate::poisson::{default_generators, PoissonStructure};
use crate::weil_algebra::WeilAlgebra;
use crate::weil_bundle::{
    compare_at, sample_points, sample_scalar, BaseVectorField, BundleFunction, BundleVectorField, Comparison,
    DomainBox, ExprMatrix, Sampling,
};

const VALIDATION_SAMPLES: usize = 16;
const CLOSED_TOL: f64 = 1e-9;
const DET_TOL: f64 = 1e-9;

/// Sign `sigma` in the global test `i_X Omega^A = sigma d^A phi`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sign {
    #[serde(rename = "+1")]
    Plus,
    #[serde(rename = "-1")]
    Minus,
}

impl Sign {
    pub fn value(self) -> f64 {
        match self {
            Sign::Plus => 1.0,
            Sign::Minus => -1.0,
        }
    }
}

impl Default for Sign {
    fn default() -> Self {
        Sign::Plus
    }
}

impl fmt::Display for Sign {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Sign::Plus => "+1",
            Sign::Minus => "-1",
        })
    }
}

impl FromStr for Sign {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "+1" | "1" | "+" => Ok(Sign::Plus),
            "-1" | "-" => Ok(Sign::Minus),
            other => Err(Error::Input(format!("sign must be +1 or -1, got `{other}`"))),
        }
    }
}

/// A closed nondegenerate 2-form on `R^n`, with the bivector inverse to it.
#[derive(Debug, Clone)]
pub struct SymplecticStructure {
    form: BaseForm,
    // row-major Omega^T, the system matrix for hamiltonian fields
    system: Arc<ExprMatrix>,
    poisson: PoissonStructure,
}

impl SymplecticStructure {
    /// Checks `n` even, `d Omega = 0` and `det[Omega_ij] != 0` at sampled
    /// points of `[-2, 2]^n`.
    pub fn new(form: BaseForm) -> Result<Self> {
        let n = form.arity();
        if form.degree() != 2 {
            return Err(Error::Validation(format!("symplectic form must have degree 2, got {}", form.degree())));
        }
        if n % 2 != 0 || n == 0 {
            return Err(Error::Validation(format!("symplectic structures need even positive dimension, got {n}")));
        }
        let full: Vec<Vec<ScalarExpr>> = (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| match i.cmp(&j) {
                        std::cmp::Ordering::Less => form.coeff(&[i, j]),
                        std::cmp::Ordering::Greater => -&form.coeff(&[j, i]),
                        std::cmp::Ordering::Equal => ScalarExpr::zero(n),
                    })
                    .collect()
            })
            .collect();

        let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
        let domain = DomainBox::standard(n);
        let points: Vec<Vec<f64>> = (0..VALIDATION_SAMPLES).map(|_| domain.sample_point(&mut rng)).collect();
        let closed = form.d();
        let det = form::symbolic_det(&full, n);
        for x in &points {
            for (index, c) in closed.coeffs() {
                let v = c.eval_real(x)?;
                if v.abs() > CLOSED_TOL {
                    return Err(Error::Validation(format!("form is not closed: d-coefficient {index:?} is {v:e} at {x:?}")));
                }
            }
            let d = det.eval_real(x)?;
            if d.abs() <= DET_TOL {
                return Err(Error::Validation(format!("form is degenerate at {x:?}")));
            }
        }

        // pi = Omega^{-1} = adj(Omega) / det
        let mut entries = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                let minor: Vec<Vec<ScalarExpr>> = (0..n)
                    .filter(|&r| r != j)
                    .map(|r| (0..n).filter(|&c| c != i).map(|c| full[r][c].clone()).collect())
                    .collect();
                let cof = form::symbolic_det(&minor, n);
                let signed = if (i + j) % 2 == 0 { cof } else { -cof };
                let e = match det.as_constant() {
                    Some(c) => signed.scale(1.0 / c),
                    None => signed / det.clone(),
                };
                if !e.is_zero() {
                    entries.push(((i, j), e));
                }
            }
        }
        let poisson = PoissonStructure::new(n, entries)?;
        let transposed: Vec<ScalarExpr> = (0..n).flat_map(|i| (0..n).map(|j| full[j][i].clone()).collect::<Vec<_>>()).collect();
        let system = Arc::new(ExprMatrix::new(n, transposed)?);
        Ok(SymplecticStructure { form, system, poisson })
    }

    /// `sum_i dx_i ^ dx_{i+m}` on `R^{2m}`.
    pub fn canonical(arity: usize) -> Result<Self> {
        if arity % 2 != 0 {
            return Err(Error::Validation(format!("canonical form needs even arity, got {arity}")));
        }
        let m = arity / 2;
        Self::new(BaseForm::new(arity, 2, (0..m).map(|i| (vec![i, i + m], ScalarExpr::one(arity))).collect())?)
    }

    pub fn arity(&self) -> usize {
        self.form.arity()
    }

    pub fn form(&self) -> &BaseForm {
        &self.form
    }

    /// The Poisson structure `pi = Omega^{-1}`.
    pub fn inverse_poisson(&self) -> &PoissonStructure {
        &self.poisson
    }

    /// The base field `X_f` with `i_{X_f} Omega = df`.
    pub fn base_hamiltonian_field(&self, f: &ScalarExpr) -> BaseVectorField {
        self.poisson.ad(f)
    }

    /// `i_X Omega^A = d^A phi`, solved pointwise over A: the components are
    /// `X^i = sum_j ((Omega^A)^T)^{-1}_ij d/dx_j^A phi`.
    pub fn hamiltonian_field(&self, phi: &BundleFunction) -> BundleVectorField {
        let alg = phi.algebra();
        let n = self.arity();
        let dphi: Vec<BundleFunction> = (0..n).map(|j| phi.partial(j)).collect();
        let comps = (0..n)
            .map(|i| {
                BundleFunction::sum_of(
                    alg,
                    n,
                    (0..n)
                        .filter(|&j| !dphi[j].is_zero())
                        .map(|j| BundleFunction::inverse_entry(alg, &self.system, i, j) * &dphi[j]),
                )
            })
            .collect();
        BundleVectorField::new(alg, comps).expect("components share algebra and arity")
    }

    /// `{phi, psi}_{Omega^A} = X_phi(psi)`.
    pub fn bracket(&self, phi: &BundleFunction, psi: &BundleFunction) -> BundleFunction {
        self.hamiltonian_field(phi).apply(psi)
    }

    /// `-Omega^A(X_phi, X_psi)`.
    pub fn bracket_from_form(&self, phi: &BundleFunction, psi: &BundleFunction) -> Result<BundleFunction> {
        let omega = self.form.prolong(phi.algebra());
        Ok(-omega.contract(&[self.hamiltonian_field(phi), self.hamiltonian_field(psi)])?)
    }
}

pub fn hamiltonian_field(phi: &BundleFunction, s: &SymplecticStructure) -> BundleVectorField {
    s.hamiltonian_field(phi)
}

pub fn symplectic_bracket(phi: &BundleFunction, psi: &BundleFunction, s: &SymplecticStructure) -> BundleFunction {
    s.bracket(phi, psi)
}

/// Worst residual of `d^A(i_X Omega^A)` contracted with field pairs
/// `(u d/dx_i^A, v d/dx_j^A)`, where `u, v` are random A-multiples of
/// prolonged generators.
pub fn closedness_residual_symplectic(
    x: &BundleVectorField,
    s: &SymplecticStructure,
    sampling: &Sampling,
    rng: &mut impl Rng,
) -> Result<Comparison> {
    let alg = x.algebra();
    let n = s.arity();
    let closed = s.form.prolong(alg).interior(x)?.d();
    let gens = default_generators(n);
    let points = sample_points(alg, sampling, rng);
    let zero = BundleFunction::zero(alg, n);
    let mut worst = Comparison::new();
    for i in 0..n {
        for j in i + 1..n {
            let mut field = |k: usize| {
                let g = &gens[rng.gen_range(0..gens.len())];
                let u = (BundleFunction::prolong(alg, g) + BundleFunction::real_constant(alg, n, 1.0))
                    .scale(&sample_scalar(alg, rng));
                let mut comps = vec![zero.clone(); n];
                comps[k] = u;
                BundleVectorField::new(alg, comps).expect("components share algebra and arity")
            };
            let pair = [field(i), field(j)];
            let v = closed.contract(&pair)?;
            worst.merge(compare_at(&[v], std::slice::from_ref(&zero), &points)?);
        }
    }
    Ok(worst)
}

/// Sampled closedness of `i_X Omega^A`.
pub fn is_locally_hamiltonian_symplectic(
    x: &BundleVectorField,
    s: &SymplecticStructure,
    sampling: &Sampling,
    rng: &mut impl Rng,
) -> bool {
    closedness_residual_symplectic(x, s, sampling, rng).is_ok_and(|c| c.worst_residual <= sampling.tol)
}

/// Sampled closedness of `i_theta Omega` on the base.
pub fn is_locally_hamiltonian_symplectic_base(
    theta: &BaseVectorField,
    s: &SymplecticStructure,
    sampling: &Sampling,
    rng: &mut impl Rng,
) -> Result<bool> {
    let closed = s.form.interior(theta)?.d();
    for _ in 0..sampling.samples {
        let x = sampling.domain.sample_point(rng);
        for c in closed.coeffs().values() {
            let v = c.eval_real(&x)?.abs();
            if v.is_nan() || v / v.max(1.0) > sampling.tol {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

/// Outcome of comparing `i_X Omega^A` with `+-d^A phi`.
#[derive(Debug, Clone)]
pub struct WitnessOutcome {
    pub passed: bool,
    /// The sign under which the identity holds, if either does.
    pub matched: Option<Sign>,
    /// Residual under the configured sign.
    pub residual: Comparison,
}

pub fn witness_outcome_symplectic(
    x: &BundleVectorField,
    phi: &BundleFunction,
    s: &SymplecticStructure,
    sign: Sign,
    sampling: &Sampling,
    rng: &mut impl Rng,
) -> Result<WitnessOutcome> {
    let alg = x.algebra();
    let lhs = s.form.prolong(alg).interior(x)?;
    let rhs = d_a_function(phi);
    let indices = lhs.indices();
    let points = sample_points(alg, sampling, rng);
    let l: Vec<BundleFunction> = indices.iter().map(|i| lhs.coeff(i)).collect();
    let mut by_sign = [Sign::Plus, Sign::Minus].map(|sg| {
        let r: Vec<BundleFunction> = indices.iter().map(|i| rhs.coeff(i).scale_real(sg.value())).collect();
        (sg, compare_at(&l, &r, &points))
    });
    let matched = by_sign
        .iter()
        .find(|(_, c)| c.as_ref().is_ok_and(|c| c.worst_residual <= sampling.tol))
        .map(|(sg, _)| *sg);
    let pos = if sign == Sign::Plus { 0 } else { 1 };
    let residual = std::mem::replace(&mut by_sign[pos].1, Ok(Comparison::new()))?;
    Ok(WitnessOutcome { passed: residual.worst_residual <= sampling.tol, matched, residual })
}

/// Whether `i_X Omega^A = sigma d^A phi`.
pub fn check_global_witness_symplectic(
    x: &BundleVectorField,
    phi: &BundleFunction,
    s: &SymplecticStructure,
    sign: Sign,
    sampling: &Sampling,
    rng: &mut impl Rng,
) -> bool {
    witness_outcome_symplectic(x, phi, s, sign, sampling, rng).is_ok_and(|o| o.passed)
}

/// `Omega^A`.
pub fn prolonged_form(s: &SymplecticStructure, algebra: &Arc<WeilAlgebra>) -> BundleForm {
    s.form.prolong(algebra)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::poisson::ProlongedPoisson;
    use crate::weil_bundle::{fields_equal, functions_equal, prolong_function};
    use crate::WeilElement;

    fn p(t: &str, n: usize) -> ScalarExpr {
        ScalarExpr::parse(t, n).unwrap()
    }

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(42)
    }

    fn nonconstant() -> SymplecticStructure {
        SymplecticStructure::new(BaseForm::new(2, 2, vec![(vec![0, 1], p("1 + x0^2", 2))]).unwrap()).unwrap()
    }

    #[test]
    fn validation() {
        assert!(SymplecticStructure::canonical(2).is_ok());
        let odd = BaseForm::new(3, 2, vec![(vec![0, 1], p("1", 3))]).unwrap();
        assert!(matches!(SymplecticStructure::new(odd), Err(Error::Validation(_))));
        let degenerate = BaseForm::new(2, 2, vec![(vec![0, 1], p("1e-12", 2))]).unwrap();
        assert!(matches!(SymplecticStructure::new(degenerate), Err(Error::Validation(_))));
        let open = BaseForm::new(4, 2, vec![(vec![0, 1], p("1", 4)), (vec![2, 3], p("2 + x0^2", 4))]).unwrap();
        assert!(matches!(SymplecticStructure::new(open), Err(Error::Validation(_))));
    }

    #[test]
    fn inverse_bivector() {
        let s = SymplecticStructure::canonical(2).unwrap();
        assert_eq!(s.inverse_poisson().entry(0, 1).as_constant(), Some(-1.0));
        let s4 = SymplecticStructure::canonical(4).unwrap();
        assert_eq!(s4.inverse_poisson().entry(0, 2).as_constant(), Some(-1.0));
        assert!(s4.inverse_poisson().entry(0, 1).is_zero());
    }

    #[test]
    fn hamiltonian_field_examples() {
        let alg = WeilAlgebra::truncated(1, 2).unwrap();
        let smp = Sampling::new(2);
        let s = SymplecticStructure::canonical(2).unwrap();
        let x = s.hamiltonian_field(&BundleFunction::coordinate(&alg, 2, 1));
        assert!(fields_equal(&x, &BaseVectorField::coordinate(2, 0).prolong(&alg), &smp, &mut rng()));
        let h = prolong_function(&alg, &p("(x0^2 + x1^2)/2", 2));
        let expected = BaseVectorField::parse(&["x1", "-x0"]).unwrap().prolong(&alg);
        assert!(fields_equal(&s.hamiltonian_field(&h), &expected, &smp, &mut rng()));
    }

    #[test]
    fn prolonged_hamiltonian_fields_match() {
        let alg = WeilAlgebra::truncated(2, 2).unwrap();
        let smp = Sampling::new(2);
        for s in [SymplecticStructure::canonical(2).unwrap(), nonconstant()] {
            let f = p("x0*x1^2 + sin(x0)", 2);
            let lhs = s.hamiltonian_field(&prolong_function(&alg, &f));
            let rhs = s.base_hamiltonian_field(&f).prolong(&alg);
            assert!(fields_equal(&lhs, &rhs, &smp, &mut rng()));
        }
    }

    #[test]
    fn bracket_examples() {
        let alg = WeilAlgebra::truncated(1, 1).unwrap();
        let smp = Sampling::new(2);
        let s = SymplecticStructure::canonical(2).unwrap();
        let (x0, x1) = (BundleFunction::coordinate(&alg, 2, 0), BundleFunction::coordinate(&alg, 2, 1));
        let minus_one = BundleFunction::real_constant(&alg, 2, -1.0);
        assert!(functions_equal(&s.bracket(&x0, &x1), &minus_one, &smp, &mut rng()));
        assert!(functions_equal(&s.bracket_from_form(&x0, &x1).unwrap(), &minus_one, &smp, &mut rng()));
        let phi = prolong_function(&alg, &p("x0*x1^3", 2));
        assert!(functions_equal(&s.bracket(&phi, &phi), &BundleFunction::zero(&alg, 2), &smp, &mut rng()));
    }

    #[test]
    fn brackets_agree_with_inverse_poisson() {
        let alg = WeilAlgebra::truncated(1, 3).unwrap();
        let smp = Sampling::new(2);
        for s in [SymplecticStructure::canonical(2).unwrap(), nonconstant()] {
            let pp = ProlongedPoisson::new(s.inverse_poisson().clone(), &alg);
            let a = WeilElement::new(&alg, vec![1.0, 0.5, 0.0, -2.0]).unwrap();
            let phi = prolong_function(&alg, &p("x0^2*x1", 2)).scale(&a) * prolong_function(&alg, &p("cos(x1)", 2));
            let psi = prolong_function(&alg, &p("exp(x0) + x1", 2));
            let lhs = s.bracket(&phi, &psi);
            assert!(functions_equal(&lhs, &pp.bracket(&phi, &psi), &smp, &mut rng()));
            assert!(functions_equal(&lhs, &s.bracket_from_form(&phi, &psi).unwrap(), &smp, &mut rng()));
        }
    }

    #[test]
    fn local_hamiltonian_examples() {
        let alg = WeilAlgebra::truncated(1, 2).unwrap();
        let smp = Sampling::new(2).with_samples(8);
        let s = SymplecticStructure::canonical(2).unwrap();
        let phi = prolong_function(&alg, &p("x0*x1^2", 2));
        assert!(is_locally_hamiltonian_symplectic(&s.hamiltonian_field(&phi), &s, &smp, &mut rng()));
        let dil = BaseVectorField::parse(&["x0", "0"]).unwrap();
        assert!(!is_locally_hamiltonian_symplectic(&dil.prolong(&alg), &s, &smp, &mut rng()));
        assert!(!is_locally_hamiltonian_symplectic_base(&dil, &s, &smp, &mut rng()).unwrap());
        let rot = BaseVectorField::parse(&["x1", "-x0"]).unwrap();
        assert!(is_locally_hamiltonian_symplectic_base(&rot, &s, &smp, &mut rng()).unwrap());
        assert!(is_locally_hamiltonian_symplectic(&rot.prolong(&alg), &s, &smp, &mut rng()));
    }

    #[test]
    fn global_witness_examples() {
        let alg = WeilAlgebra::truncated(1, 2).unwrap();
        let smp = Sampling::new(2);
        let s = nonconstant();
        let phi = prolong_function(&alg, &p("x0*x1 + exp(x1)", 2));
        let x = s.hamiltonian_field(&phi);
        let o = witness_outcome_symplectic(&x, &phi, &s, Sign::Plus, &smp, &mut rng()).unwrap();
        assert!(o.passed && o.matched == Some(Sign::Plus));
        let o = witness_outcome_symplectic(&x, &phi, &s, Sign::Minus, &smp, &mut rng()).unwrap();
        assert!(!o.passed && o.matched == Some(Sign::Plus));

        let f = p("x1^2 - x0", 2);
        let theta = s.base_hamiltonian_field(&f).prolong(&alg);
        assert!(check_global_witness_symplectic(&theta, &prolong_function(&alg, &f), &s, Sign::Plus, &smp, &mut rng()));

        let perturbed = x.add(&BaseVectorField::coordinate(2, 1).prolong(&alg));
        assert!(!check_global_witness_symplectic(&perturbed, &phi, &s, Sign::Plus, &smp, &mut rng()));
    }

    #[test]
    fn nondegeneracy_transfers_to_the_solve() {
        let alg = WeilAlgebra::truncated(1, 1).unwrap();
        let s = SymplecticStructure::canonical(2).unwrap();
        let x = s.hamiltonian_field(&BundleFunction::coordinate(&alg, 2, 0));
        let xi = crate::weil_bundle::NearPoint::sample(&alg, &DomainBox::standard(2), &mut rng());
        assert!(x.component(1).evaluate(&xi).is_ok());
        let deg = BaseForm::new(2, 2, vec![(vec![0, 1], p("2 + x0", 2))]).unwrap();
        // 2 + x0 vanishes only on the boundary of the sampling box
        let sd = SymplecticStructure::new(deg).unwrap();
        let y = sd.hamiltonian_field(&BundleFunction::coordinate(&alg, 2, 1));
        let at = crate::weil_bundle::NearPoint::at_origin(&alg, &[-2.0, 0.0]);
        assert!(matches!(y.component(0).evaluate(&at), Err(Error::SingularRealPart(_))));
    }

    #[test]
    fn sign_parsing() {
        assert_eq!("+1".parse::<Sign>().unwrap(), Sign::Plus);
        assert_eq!("-1".parse::<Sign>().unwrap(), Sign::Minus);
        assert!("2".parse::<Sign>().is_err());
        assert_eq!(Sign::Minus.to_string(), "-1");
    }
}
