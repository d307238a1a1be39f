//! Low-degree cochains of the adjoint representation and the hamiltonian
//! tests built from them.

use std::sync::Arc;

use rand::Rng;

use super::{PoissonStructure, ProlongedPoisson};
use crate::error::{Error, Result};
use crate::expression::ScalarExpr;
use crate::weil_algebra::WeilAlgebra;
use crate::weil_bundle::{
    compare_at, compare_fields, sample_points, sample_scalar, BaseVectorField, BundleFunction, BundleVectorField,
    Comparison, Sampling,
};

/// `d_ad theta` for a base field `theta`, evaluated on demand.
#[derive(Debug, Clone)]
pub struct BaseBilinear {
    poisson: PoissonStructure,
    theta: BaseVectorField,
}

impl BaseBilinear {
    /// `{f, theta g} - {g, theta f} - theta {f, g}`.
    pub fn eval(&self, f: &ScalarExpr, g: &ScalarExpr) -> ScalarExpr {
        let p = &self.poisson;
        p.base_bracket(f, &self.theta.apply(g)) - p.base_bracket(g, &self.theta.apply(f))
            - self.theta.apply(&p.base_bracket(f, g))
    }

    /// Values on coordinate pairs, row-major; the form is a biderivation so
    /// these determine it.
    pub fn coordinate_matrix(&self) -> Vec<ScalarExpr> {
        let n = self.theta.arity();
        let x: Vec<ScalarExpr> = (0..n).map(|i| ScalarExpr::var(n, i)).collect();
        let mut out = vec![ScalarExpr::zero(n); n * n];
        for i in 0..n {
            for j in i + 1..n {
                let v = self.eval(&x[i], &x[j]);
                out[j * n + i] = -&v;
                out[i * n + j] = v;
            }
        }
        out
    }

    pub fn prolong(&self, algebra: &Arc<WeilAlgebra>) -> BundleBilinear {
        BundleBilinear::Bivector { algebra: algebra.clone(), arity: self.theta.arity(), comps: self.coordinate_matrix() }
    }
}

/// A cochain on the base of degree 0, 1 or 2.
#[derive(Debug, Clone)]
pub enum BaseCochain {
    Function(ScalarExpr),
    Field(BaseVectorField),
    Bilinear(BaseBilinear),
}

impl BaseCochain {
    pub fn degree(&self) -> usize {
        match self {
            BaseCochain::Function(_) => 0,
            BaseCochain::Field(_) => 1,
            BaseCochain::Bilinear(_) => 2,
        }
    }

    /// `eta^A`.
    pub fn prolong(&self, algebra: &Arc<WeilAlgebra>) -> PoissonCochain {
        match self {
            BaseCochain::Function(f) => PoissonCochain::Function(BundleFunction::prolong(algebra, f)),
            BaseCochain::Field(theta) => PoissonCochain::Field(theta.prolong(algebra)),
            BaseCochain::Bilinear(b) => PoissonCochain::Bilinear(b.prolong(algebra)),
        }
    }
}

/// An alternating A-bilinear map on bundle functions, evaluated lazily.
#[derive(Debug, Clone)]
pub enum BundleBilinear {
    /// `d~_A X`.
    DTilde { poisson: ProlongedPoisson, field: BundleVectorField },
    /// `sum_ij c_ij^A d_i phi d_j psi` for an antisymmetric matrix `c`.
    Bivector { algebra: Arc<WeilAlgebra>, arity: usize, comps: Vec<ScalarExpr> },
}

impl BundleBilinear {
    pub fn eval(&self, phi: &BundleFunction, psi: &BundleFunction) -> BundleFunction {
        match self {
            BundleBilinear::DTilde { poisson, field } => {
                poisson.bracket(phi, &field.apply(psi))
                    - poisson.bracket(psi, &field.apply(phi))
                    - field.apply(&poisson.bracket(phi, psi))
            }
            BundleBilinear::Bivector { algebra, arity, comps } => {
                let n = *arity;
                let dphi: Vec<BundleFunction> = (0..n).map(|i| phi.partial(i)).collect();
                let dpsi: Vec<BundleFunction> = (0..n).map(|i| psi.partial(i)).collect();
                let mut out = BundleFunction::zero(algebra, n);
                for i in 0..n {
                    for j in 0..n {
                        let c = &comps[i * n + j];
                        if c.is_zero() || dphi[i].is_zero() || dpsi[j].is_zero() {
                            continue;
                        }
                        out = out + BundleFunction::prolong(algebra, c) * &dphi[i] * &dpsi[j];
                    }
                }
                out
            }
        }
    }
}

/// A cochain on `M^A` of degree 0, 1 or 2.
#[derive(Debug, Clone)]
pub enum PoissonCochain {
    Function(BundleFunction),
    Field(BundleVectorField),
    Bilinear(BundleBilinear),
}

impl PoissonCochain {
    pub fn degree(&self) -> usize {
        match self {
            PoissonCochain::Function(_) => 0,
            PoissonCochain::Field(_) => 1,
            PoissonCochain::Bilinear(_) => 2,
        }
    }
}

/// The differential of the adjoint representation in degrees 0 and 1.
pub fn d_ad(eta: &BaseCochain, p: &PoissonStructure) -> Result<BaseCochain> {
    match eta {
        BaseCochain::Function(f) => Ok(BaseCochain::Field(p.ad(f))),
        BaseCochain::Field(theta) => {
            Ok(BaseCochain::Bilinear(BaseBilinear { poisson: p.clone(), theta: theta.clone() }))
        }
        BaseCochain::Bilinear(_) => Err(Error::Degree("d_ad is only available on 0- and 1-cochains".into())),
    }
}

/// The differential on `M^A`: `phi -> tau_phi` and
/// `X -> ((phi, psi) -> {phi, X psi}_A - {psi, X phi}_A - X {phi, psi}_A)`.
pub fn d_a_tilde(c: &PoissonCochain, pp: &ProlongedPoisson) -> Result<PoissonCochain> {
    match c {
        PoissonCochain::Function(phi) => Ok(PoissonCochain::Field(pp.tau_field(phi))),
        PoissonCochain::Field(x) => {
            Ok(PoissonCochain::Bilinear(BundleBilinear::DTilde { poisson: pp.clone(), field: x.clone() }))
        }
        PoissonCochain::Bilinear(_) => Err(Error::Degree("d~_A is only available on 0- and 1-cochains".into())),
    }
}

/// Coordinates and their pairwise products.
pub fn default_generators(arity: usize) -> Vec<ScalarExpr> {
    let x: Vec<ScalarExpr> = (0..arity).map(|i| ScalarExpr::var(arity, i)).collect();
    let mut gens = x.clone();
    for i in 0..arity {
        for j in i..arity {
            gens.push(&x[i] * &x[j]);
        }
    }
    gens
}

/// Worst residual of `d~_A X` against zero over pairs `(a g_i^A, b g_j^A)`
/// with random A-scalars `a, b`, together with the offending generator pair.
pub fn closedness_residual_poisson(
    x: &BundleVectorField,
    pp: &ProlongedPoisson,
    gens: &[ScalarExpr],
    sampling: &Sampling,
    rng: &mut impl Rng,
) -> Result<(Comparison, Option<(usize, usize)>)> {
    let alg = pp.algebra();
    let n = pp.arity();
    let dx = BundleBilinear::DTilde { poisson: pp.clone(), field: x.clone() };
    let points = sample_points(alg, sampling, rng);
    let zero = BundleFunction::zero(alg, n);
    let mut worst = Comparison::new();
    let mut pair = None;
    for i in 0..gens.len() {
        for j in i + 1..gens.len() {
            let phi = BundleFunction::prolong(alg, &gens[i]).scale(&sample_scalar(alg, rng));
            let psi = BundleFunction::prolong(alg, &gens[j]).scale(&sample_scalar(alg, rng));
            let c = compare_at(&[dx.eval(&phi, &psi)], std::slice::from_ref(&zero), &points)?;
            if pair.is_none() || c.worst_residual > worst.worst_residual {
                pair = Some((i, j));
            }
            worst.merge(c);
        }
    }
    Ok((worst, pair))
}

/// Sampled closedness of `X` under `d~_A`.
pub fn is_locally_hamiltonian_poisson(
    x: &BundleVectorField,
    pp: &ProlongedPoisson,
    gens: &[ScalarExpr],
    sampling: &Sampling,
    rng: &mut impl Rng,
) -> bool {
    closedness_residual_poisson(x, pp, gens, sampling, rng).is_ok_and(|(c, _)| c.worst_residual <= sampling.tol)
}

/// Sampled closedness of a base field under `d_ad`, on generator pairs.
pub fn is_locally_hamiltonian_base(
    theta: &BaseVectorField,
    p: &PoissonStructure,
    gens: &[ScalarExpr],
    sampling: &Sampling,
    rng: &mut impl Rng,
) -> bool {
    closedness_residual_base(theta, p, gens, sampling, rng).is_ok_and(|r| r <= sampling.tol)
}

/// Worst `|d_ad theta(g_i, g_j)|` relative to `max(1, .)` at sampled base points.
pub fn closedness_residual_base(
    theta: &BaseVectorField,
    p: &PoissonStructure,
    gens: &[ScalarExpr],
    sampling: &Sampling,
    rng: &mut impl Rng,
) -> Result<f64> {
    let b = BaseBilinear { poisson: p.clone(), theta: theta.clone() };
    let points: Vec<Vec<f64>> = (0..sampling.samples).map(|_| sampling.domain.sample_point(rng)).collect();
    let mut worst = 0f64;
    for i in 0..gens.len() {
        for j in i + 1..gens.len() {
            let v = b.eval(&gens[i], &gens[j]);
            for x in &points {
                let r = v.eval_real(x)?.abs();
                worst = worst.max(if r.is_nan() { f64::INFINITY } else { r / r.max(1.0) });
            }
        }
    }
    Ok(worst)
}

/// Residual of `X` against `tau_phi`, componentwise.
pub fn witness_residual_poisson(
    x: &BundleVectorField,
    phi: &BundleFunction,
    pp: &ProlongedPoisson,
    sampling: &Sampling,
    rng: &mut impl Rng,
) -> Result<Comparison> {
    compare_fields(x, &pp.tau_field(phi), sampling, rng)
}

/// Whether `X = tau_phi`, i.e. `phi` is a potential for `X`.
pub fn check_global_witness_poisson(
    x: &BundleVectorField,
    phi: &BundleFunction,
    pp: &ProlongedPoisson,
    sampling: &Sampling,
    rng: &mut impl Rng,
) -> bool {
    x.arity() == pp.arity()
        && witness_residual_poisson(x, phi, pp, sampling, rng).is_ok_and(|c| c.worst_residual <= sampling.tol)
}
