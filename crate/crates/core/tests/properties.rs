use std::sync::Arc;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use weiljet::harness::random::{random_bundle_function, random_expr, random_field, random_polynomial};
use weiljet::harness::{algebra_by_name, BATTERY};
use weiljet::poisson::{
    check_global_witness_poisson, closedness_residual_base, default_generators, is_locally_hamiltonian_poisson,
    PoissonStructure, ProlongedPoisson,
};
use weiljet::symplectic::{d_a_form, d_base, prolong_form, BaseForm, SymplecticStructure};
use weiljet::weil_bundle::{
    apply_field, compare_at, fields_equal, functions_equal, lie_bracket, prolong_function, prolong_vector_field,
    sample_points, BundleFunction, BundleVectorField, NearPoint, Sampling,
};
use weiljet::{weil_matrix_inverse, ScalarExpr, WeilAlgebra, WeilElement, WeilMatrix};

fn algebra(k: usize) -> Arc<WeilAlgebra> {
    algebra_by_name(BATTERY[k % BATTERY.len()]).unwrap()
}

fn sampling(n: usize, tol: f64) -> Sampling {
    Sampling::new(n).with_samples(6).with_tol(tol)
}

fn close(a: &WeilElement, b: &WeilElement, tol: f64) -> bool {
    weiljet::weil_bundle::scaled_residual(a, b) <= tol
}

fn config() -> ProptestConfig {
    ProptestConfig { cases: 12, ..ProptestConfig::default() }
}

proptest! {
    #![proptest_config(config())]

    #[test]
    fn evaluation_is_an_algebra_morphism(seed in any::<u64>(), k in 0usize..5, n in 1usize..4, c in -3.0f64..3.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let alg = algebra(k);
        let (f, g) = (random_expr(n, &mut rng), random_expr(n, &mut rng));
        for xi in sample_points(&alg, &Sampling::new(n).with_samples(4), &mut rng) {
            let (vf, vg) = (f.eval_weil(xi.coords()).unwrap(), g.eval_weil(xi.coords()).unwrap());
            prop_assert!(close(&(&f + &g).eval_weil(xi.coords()).unwrap(), &(&vf + &vg), 1e-9));
            prop_assert!(close(&(&f * &g).eval_weil(xi.coords()).unwrap(), &(&vf * &vg), 1e-9));
            prop_assert!(close(&f.scale(c).eval_weil(xi.coords()).unwrap(), &vf.scale(c), 1e-9));
        }
    }

    #[test]
    fn dual_part_is_the_partial_derivative(seed in any::<u64>(), n in 1usize..4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dual = algebra_by_name("dual").unwrap();
        let f = random_expr(n, &mut rng);
        let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
        for i in 0..n {
            let coords: Vec<WeilElement> = (0..n)
                .map(|j| WeilElement::new(&dual, vec![x[j], if i == j { 1.0 } else { 0.0 }]).unwrap())
                .collect();
            let got = f.eval_weil(&coords).unwrap().coeffs()[1];
            let want = f.differentiate(i).eval_real(&x).unwrap();
            prop_assert!((got - want).abs() <= 1e-9 * want.abs().max(1.0));
        }
    }

    #[test]
    fn truncated_coefficients_are_taylor_coefficients(seed in any::<u64>(), h in 1usize..4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let alg = WeilAlgebra::truncated(1, h).unwrap();
        let f = random_expr(1, &mut rng);
        let x = rng.gen_range(-2.0..2.0);
        let mut xi = vec![0.0; h + 1];
        xi[0] = x;
        xi[1] = 1.0;
        let got = f.eval_weil(&[WeilElement::new(&alg, xi).unwrap()]).unwrap();
        let mut d = f.clone();
        let mut fact = 1.0;
        for k in 0..=h {
            if k > 0 {
                d = d.differentiate(0);
                fact *= k as f64;
            }
            let want = d.eval_real(&[x]).unwrap() / fact;
            prop_assert!((got.coeffs()[k] - want).abs() <= 1e-7 * want.abs().max(1.0));
        }
    }

    #[test]
    fn prolonged_fields_follow_the_chain_rule(seed in any::<u64>(), k in 0usize..5, n in 1usize..4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let alg = algebra(k);
        let theta = random_field(n, &mut rng);
        let f = random_expr(n, &mut rng);
        let lhs = apply_field(&prolong_vector_field(&alg, &theta), &prolong_function(&alg, &f));
        for xi in sample_points(&alg, &Sampling::new(n).with_samples(4), &mut rng) {
            let want = theta.apply(&f).eval_weil(xi.coords()).unwrap();
            prop_assert!(close(&lhs.evaluate(&xi).unwrap(), &want, 1e-9));
        }
    }

    #[test]
    fn components_are_recovered_from_coordinates(seed in any::<u64>(), k in 0usize..5, n in 1usize..4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let alg = algebra(k);
        let comps: Vec<BundleFunction> = (0..n).map(|_| random_bundle_function(&alg, n, &mut rng)).collect();
        let x = BundleVectorField::new(&alg, comps.clone()).unwrap();
        let points = sample_points(&alg, &Sampling::new(n).with_samples(3), &mut rng);
        for (i, c) in comps.iter().enumerate() {
            let got = apply_field(&x, &BundleFunction::coordinate(&alg, n, i));
            prop_assert_eq!(compare_at(&[got], std::slice::from_ref(c), &points).unwrap().worst_residual, 0.0);
        }
    }

    #[test]
    fn lie_bracket_satisfies_jacobi(seed in any::<u64>(), k in 0usize..5, n in 1usize..3) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let alg = algebra(k);
        let [a, b, c] = [0, 1, 2].map(|_| prolong_vector_field(&alg, &random_field(n, &mut rng)));
        let cyc = lie_bracket(&a, &lie_bracket(&b, &c))
            .add(&lie_bracket(&b, &lie_bracket(&c, &a)))
            .add(&lie_bracket(&c, &lie_bracket(&a, &b)));
        prop_assert!(fields_equal(&cyc, &BundleVectorField::zero(&alg, n), &sampling(n, 1e-8), &mut rng));
    }

    #[test]
    fn field_prolongation_is_linear(seed in any::<u64>(), k in 0usize..5, n in 1usize..4, c in -3.0f64..3.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let alg = algebra(k);
        let (a, b) = (random_field(n, &mut rng), random_field(n, &mut rng));
        let s = sampling(n, 1e-9);
        let (pa, pb) = (prolong_vector_field(&alg, &a), prolong_vector_field(&alg, &b));
        prop_assert!(fields_equal(&prolong_vector_field(&alg, &a.add(&b)), &pa.add(&pb), &s, &mut rng));
        let scaled = pa.scale(&WeilElement::constant(&alg, c));
        prop_assert!(fields_equal(&prolong_vector_field(&alg, &a.scale(c)), &scaled, &s, &mut rng));
    }

    #[test]
    fn prolonged_bracket_obeys_leibniz(seed in any::<u64>(), k in 0usize..5, so3 in any::<bool>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let alg = algebra(k);
        let base = if so3 { PoissonStructure::so3() } else { PoissonStructure::canonical(2).unwrap() };
        let n = base.arity();
        let pp = ProlongedPoisson::new(base, &alg);
        let [p1, p2, p3] = [0, 1, 2].map(|_| random_bundle_function(&alg, n, &mut rng));
        let lhs = pp.bracket(&(&p1 * &p2), &p3);
        let rhs = pp.bracket(&p1, &p3) * &p2 + &p1 * &pp.bracket(&p2, &p3);
        prop_assert!(functions_equal(&lhs, &rhs, &sampling(n, 1e-8), &mut rng));
    }

    #[test]
    fn tau_is_a_derivation_in_its_subscript(seed in any::<u64>(), k in 0usize..5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let alg = algebra(k);
        let pp = ProlongedPoisson::new(PoissonStructure::so3(), &alg);
        let (phi, psi) = (random_bundle_function(&alg, 3, &mut rng), random_bundle_function(&alg, 3, &mut rng));
        let a = weiljet::weil_bundle::sample_scalar(&alg, &mut rng);
        let s = sampling(3, 1e-8);
        prop_assert!(fields_equal(&pp.tau_field(&(&phi + &psi)), &pp.tau_field(&phi).add(&pp.tau_field(&psi)), &s, &mut rng));
        prop_assert!(fields_equal(&pp.tau_field(&phi.scale(&a)), &pp.tau_field(&phi).scale(&a), &s, &mut rng));
        let product = pp.tau_field(&phi).times(&psi).add(&pp.tau_field(&psi).times(&phi));
        prop_assert!(fields_equal(&pp.tau_field(&(&phi * &psi)), &product, &s, &mut rng));
    }

    #[test]
    fn local_tests_agree_on_base_and_bundle(seed in any::<u64>(), k in 0usize..5, closed in any::<bool>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let alg = algebra(k);
        let base = PoissonStructure::so3();
        let gens = default_generators(3);
        let s = sampling(3, 1e-8);
        let theta = if closed { base.ad(&random_polynomial(3, 3, &mut rng)) } else { random_field(3, &mut rng) };
        let base_closed = closedness_residual_base(&theta, &base, &gens, &s, &mut rng).unwrap() <= 1e-8;
        let pp = ProlongedPoisson::new(base, &alg);
        prop_assert_eq!(is_locally_hamiltonian_poisson(&theta.prolong(&alg), &pp, &gens, &s, &mut rng), base_closed);
        if closed {
            prop_assert!(base_closed);
        }
    }

    #[test]
    fn ad_fields_have_their_generator_as_potential(seed in any::<u64>(), k in 0usize..5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let alg = algebra(k);
        let base = PoissonStructure::so3();
        let f = random_expr(3, &mut rng);
        let pp = ProlongedPoisson::new(base.clone(), &alg);
        let theta = base.ad(&f).prolong(&alg);
        let s = sampling(3, 1e-8);
        prop_assert!(check_global_witness_poisson(&theta, &prolong_function(&alg, &f), &pp, &s, &mut rng));
    }

    #[test]
    fn symplectic_and_poisson_brackets_coincide(seed in any::<u64>(), k in 0usize..5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let alg = algebra(k);
        let s = SymplecticStructure::canonical(2).unwrap();
        let pp = ProlongedPoisson::new(s.inverse_poisson().clone(), &alg);
        let (phi, psi) = (random_bundle_function(&alg, 2, &mut rng), random_bundle_function(&alg, 2, &mut rng));
        prop_assert!(functions_equal(&s.bracket(&phi, &psi), &pp.bracket(&phi, &psi), &sampling(2, 1e-8), &mut rng));
    }

    #[test]
    fn exterior_derivative_commutes_with_prolongation(seed in any::<u64>(), k in 0usize..5, degree in 0usize..2) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let alg = algebra(k);
        let n = 3;
        let w = if degree == 0 {
            BaseForm::function(&random_expr(n, &mut rng))
        } else {
            BaseForm::new(n, 1, (0..n).map(|i| (vec![i], random_expr(n, &mut rng))).collect()).unwrap()
        };
        let lhs = d_a_form(&prolong_form(&w, &alg));
        let rhs = prolong_form(&d_base(&w), &alg);
        let idx = rhs.indices();
        let points = sample_points(&alg, &Sampling::new(n).with_samples(4), &mut rng);
        let l: Vec<BundleFunction> = idx.iter().map(|i| lhs.coeff(i)).collect();
        let r: Vec<BundleFunction> = idx.iter().map(|i| rhs.coeff(i)).collect();
        prop_assert!(compare_at(&l, &r, &points).unwrap().worst_residual <= 1e-9);
    }

    #[test]
    fn inverse_exists_iff_base_determinant_is_nonzero(seed in any::<u64>(), k in 0usize..5, x0 in -3.0f64..1.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let alg = algebra(k);
        // det of the base matrix is 2 + x0
        let c = ScalarExpr::parse("2 + x0", 2).unwrap();
        let entries = [ScalarExpr::zero(2), c.clone(), -&c, ScalarExpr::zero(2)];
        let mut xi = NearPoint::sample(&alg, &weiljet::weil_bundle::DomainBox::standard(2), &mut rng);
        let mut coords = xi.coords().to_vec();
        let shift = x0 - coords[0].augmentation();
        coords[0] = &coords[0] + &WeilElement::constant(&alg, shift);
        xi = NearPoint::new(&alg, coords).unwrap();
        let m: Vec<WeilElement> = entries.iter().map(|e| e.eval_weil(xi.coords()).unwrap()).collect();
        let inv = weil_matrix_inverse(&WeilMatrix::new(2, m).unwrap());
        prop_assert_eq!(inv.is_ok(), (2.0 + x0).abs() > 1e-9);
    }
}
