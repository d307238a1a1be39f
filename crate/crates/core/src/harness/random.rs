//! Random inputs for the checks: low-degree polynomials with one
//! transcendental term, fields, and representable bundle functions.

use std::sync::Arc;

use rand::Rng;

use crate::expression::ScalarExpr;
use crate::weil_algebra::WeilAlgebra;
use crate::weil_bundle::{sample_scalar, BaseVectorField, BundleFunction};

fn coefficient(rng: &mut impl Rng) -> f64 {
    // three decimals keep printed witnesses short and exact
    let c = (rng.gen_range(-1.0..=1.0f64) * 1000.0).round() / 1000.0;
    if c == 0.0 {
        0.5
    } else {
        c
    }
}

/// A polynomial of total degree at most `max_degree` with a constant term
/// and three to five random monomials.
pub fn random_polynomial(arity: usize, max_degree: u32, rng: &mut impl Rng) -> ScalarExpr {
    let mut out = ScalarExpr::constant(arity, coefficient(rng));
    for _ in 0..rng.gen_range(3..=5) {
        let degree = rng.gen_range(1..=max_degree);
        let mut mono = ScalarExpr::constant(arity, coefficient(rng));
        let mut exps = vec![0u32; arity];
        for _ in 0..degree {
            exps[rng.gen_range(0..arity)] += 1;
        }
        for (i, &e) in exps.iter().enumerate() {
            if e > 0 {
                mono = mono * ScalarExpr::var(arity, i).powi(e);
            }
        }
        out = out + mono;
    }
    out
}

/// A degree-3 polynomial plus `c * T(a x_i + b)` with `T` one of sin, cos, exp.
pub fn random_expr(arity: usize, rng: &mut impl Rng) -> ScalarExpr {
    let poly = random_polynomial(arity, 3, rng);
    let i = rng.gen_range(0..arity);
    let arg = ScalarExpr::var(arity, i).scale(coefficient(rng)) + ScalarExpr::constant(arity, coefficient(rng));
    let t = match rng.gen_range(0..3) {
        0 => arg.sin(),
        1 => arg.cos(),
        _ => arg.exp(),
    };
    poly + t.scale(coefficient(rng))
}

/// A field with polynomial components of degree at most two.
pub fn random_field(arity: usize, rng: &mut impl Rng) -> BaseVectorField {
    BaseVectorField::new((0..arity).map(|_| random_polynomial(arity, 2, rng)).collect()).expect("arities match")
}

/// `a f^A g^A + b h^A + c` with random A-scalars `a, b, c`.
pub fn random_bundle_function(algebra: &Arc<WeilAlgebra>, arity: usize, rng: &mut impl Rng) -> BundleFunction {
    let f = random_expr(arity, rng);
    let g = random_polynomial(arity, 2, rng);
    let h = random_polynomial(arity, 2, rng);
    let (a, b, c) = (sample_scalar(algebra, rng), sample_scalar(algebra, rng), sample_scalar(algebra, rng));
    BundleFunction::product_of_pullbacks(&a, &[f, g]).expect("arities match")
        + BundleFunction::prolong(algebra, &h).scale(&b)
        + BundleFunction::constant(&c, arity)
}
