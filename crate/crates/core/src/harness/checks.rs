use std::sync::Arc;

use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use super::random::{random_bundle_function, random_expr, random_field, random_polynomial};
use super::{algebra_by_name, check_rng, CheckInfo, CheckReport, CheckSpec};
use crate::error::Result;
use crate::expression::ScalarExpr;
use crate::poisson::{
    closedness_residual_base, closedness_residual_poisson, default_generators, BaseCochain, BundleBilinear,
    PoissonStructure, ProlongedPoisson,
};
use crate::symplectic::{closedness_residual_symplectic, witness_outcome_symplectic, BaseForm, SymplecticStructure};
use crate::weil_algebra::{weil_matrix_inverse, WeilAlgebra, WeilElement, WeilMatrix};
use crate::weil_bundle::{
    compare_at, pushforward_map, sample_points, scaled_residual, BaseVectorField, BundleFunction, BundleVectorField,
    NearPoint, Sampling,
};

pub(super) const REGISTRY: &[CheckInfo] = &[
    CheckInfo {
        name: "algebra_morphism",
        identity: "(f+g)^A = f^A + g^A, (c f)^A = c f^A, (f g)^A = f^A g^A",
        tol: 1e-9,
    },
    CheckInfo { name: "ad_ground_truth", identity: "dual part of f^A(x + t e_i) = df/dx_i (symbolic and central differences)", tol: 1e-6 },
    CheckInfo {
        name: "lie_morphism",
        identity: "[a, b]^A = [a^A, b^A], (f a)^A = f^A a^A, (a + b)^A = a^A + b^A, a^A(f^A g^A) = (a(f g))^A",
        tol: 1e-8,
    },
    CheckInfo { name: "functoriality", identity: "(g o h)^A(xi) = g^A(h^A(xi))", tol: 1e-9 },
    CheckInfo { name: "prolonged_poisson_compat", identity: "{f^A, g^A}_A = ({f, g})^A", tol: 1e-8 },
    CheckInfo { name: "prop1_d_tilde_prolongation", identity: "d~_A(eta^A) = (d_ad eta)^A on pairs (f^A, g^A)", tol: 1e-8 },
    CheckInfo { name: "prop2_iff_local", identity: "theta is d_ad-closed iff theta^A is d~_A-closed", tol: 1e-8 },
    CheckInfo {
        name: "prop3_bracket_derivation",
        identity: "d~_A X = 0 implies X{phi, psi}_A = {X phi, psi}_A + {phi, X psi}_A",
        tol: 1e-8,
    },
    CheckInfo {
        name: "prop4_5_global_poisson",
        identity: "(ad f)^A = tau_{f^A} and (ad f)^A psi = {f^A, psi}_A",
        tol: 1e-8,
    },
    CheckInfo { name: "prop6_interior_prolongation", identity: "(i_theta w)^A = i_{theta^A} w^A", tol: 1e-8 },
    CheckInfo {
        name: "thm1_brackets_coincide",
        identity: "{phi, psi}_{Omega^A} = {phi, psi}_A for pi = Omega^{-1}, and X_{f^A} = (X_f)^A",
        tol: 1e-8,
    },
    CheckInfo {
        name: "thm2_symplectic_derivation",
        identity: "d^A(i_X Omega^A) = 0 implies X{phi, psi} = {X phi, psi} + {phi, X psi} for {,}_{Omega^A}",
        tol: 1e-8,
    },
    CheckInfo { name: "prop7_global_symplectic", identity: "i_{(X_f)^A} Omega^A = sigma d^A(f^A)", tol: 1e-8 },
    CheckInfo { name: "neumann_matrix_inverse", identity: "M M^{-1} = I over A, real part condition < 100", tol: 1e-9 },
];

pub(super) fn run(spec: &CheckSpec) -> CheckReport {
    let mut cx = match Ctx::new(spec) {
        Ok(cx) => cx,
        Err(e) => return failure(spec, json!({ "error": e.to_string() })),
    };
    let outcome = match spec.name.as_str() {
        "algebra_morphism" => algebra_morphism(&mut cx),
        "ad_ground_truth" => ad_ground_truth(&mut cx),
        "lie_morphism" => lie_morphism(&mut cx),
        "functoriality" => functoriality(&mut cx),
        "prolonged_poisson_compat" => poisson_compat(&mut cx),
        "prop1_d_tilde_prolongation" => d_tilde_prolongation(&mut cx),
        "prop2_iff_local" => iff_local(&mut cx),
        "prop3_bracket_derivation" => bracket_derivation(&mut cx),
        "prop4_5_global_poisson" => global_poisson(&mut cx),
        "prop6_interior_prolongation" => interior_prolongation(&mut cx),
        "thm1_brackets_coincide" => brackets_coincide(&mut cx),
        "thm2_symplectic_derivation" => symplectic_derivation(&mut cx),
        "prop7_global_symplectic" => global_symplectic(&mut cx),
        "neumann_matrix_inverse" => neumann_inverse(&mut cx),
        other => return failure(spec, json!({ "error": format!("no check named `{other}`") })),
    };
    if let Err(e) = outcome {
        cx.fail(json!({ "error": e.to_string() }));
    }
    cx.report()
}

fn failure(spec: &CheckSpec, witness: Value) -> CheckReport {
    CheckReport {
        name: spec.name.clone(),
        pass: false,
        worst_residual: f64::INFINITY,
        witness: Some(with_replay(spec, witness)),
        elapsed_ms: None,
    }
}

fn with_replay(spec: &CheckSpec, mut witness: Value) -> Value {
    if let Value::Object(map) = &mut witness {
        map.insert("seed".into(), json!(spec.seed));
        if let Some(m) = spec.mutation {
            map.insert("mutation".into(), json!(m.name()));
        }
    }
    witness
}

struct Ctx<'a> {
    spec: &'a CheckSpec,
    algebras: Vec<(String, Arc<WeilAlgebra>)>,
    rng: ChaCha8Rng,
    worst: f64,
    witness: Option<Value>,
    failed: bool,
}

impl<'a> Ctx<'a> {
    fn new(spec: &'a CheckSpec) -> Result<Self> {
        let algebras = spec
            .algebras
            .iter()
            .map(|n| Ok((n.clone(), algebra_by_name(n)?.with_fault(spec.mutation))))
            .collect::<Result<_>>()?;
        Ok(Ctx { spec, algebras, rng: check_rng(spec), worst: 0.0, witness: None, failed: false })
    }

    fn arity(&self, k: usize) -> usize {
        let a = &self.spec.arities;
        if a.is_empty() {
            2
        } else {
            a[k % a.len()]
        }
    }

    fn sampling(&self, n: usize, cap: usize) -> Sampling {
        Sampling::new(n).with_samples(self.spec.samples.clamp(1, cap)).with_tol(self.spec.tol)
    }

    /// Random inputs per slot, fewer only when the sample count is below `full`.
    fn inputs(&self, full: usize) -> usize {
        self.spec.samples.clamp(1, full)
    }

    fn points(&mut self, alg: &Arc<WeilAlgebra>, n: usize, cap: usize) -> Vec<NearPoint> {
        let s = self.sampling(n, cap);
        sample_points(alg, &s, &mut self.rng)
    }

    fn record(&mut self, residual: f64, witness: impl FnOnce() -> Value) {
        let residual = if residual.is_nan() { f64::INFINITY } else { residual };
        let fails = residual > self.spec.tol;
        // keep the first failing witness once any check has failed
        if (fails && !self.failed) || (!self.failed && residual > self.worst) || (self.failed && residual > self.worst && fails) {
            self.witness = Some(witness());
        }
        self.worst = self.worst.max(residual);
        self.failed |= fails;
    }

    fn fail(&mut self, witness: Value) {
        self.worst = f64::INFINITY;
        self.witness = Some(witness);
        self.failed = true;
    }

    fn compare(
        &mut self,
        algebra: &str,
        lhs: &[BundleFunction],
        rhs: &[BundleFunction],
        points: &[NearPoint],
        inputs: impl FnOnce() -> Value,
    ) {
        match compare_at(lhs, rhs, points) {
            Ok(c) => {
                let point = c.worst_point.as_ref().map(|p| serde_json::to_value(p.to_json()).expect("json"));
                self.record(c.worst_residual, || json!({ "algebra": algebra, "inputs": inputs(), "point": point }));
            }
            Err(e) => self.fail(json!({ "algebra": algebra, "inputs": inputs(), "error": e.to_string() })),
        }
    }

    fn compare_fields(
        &mut self,
        algebra: &str,
        x: &BundleVectorField,
        y: &BundleVectorField,
        points: &[NearPoint],
        inputs: impl FnOnce() -> Value,
    ) {
        self.compare(algebra, x.components(), y.components(), points, inputs)
    }

    fn report(self) -> CheckReport {
        let pass = !self.failed && self.worst <= self.spec.tol;
        CheckReport {
            name: self.spec.name.clone(),
            pass,
            worst_residual: self.worst,
            witness: if pass { None } else { Some(with_replay(self.spec, self.witness.unwrap_or_else(|| json!({})))) },
            elapsed_ms: None,
        }
    }
}

fn pull(alg: &Arc<WeilAlgebra>, f: &ScalarExpr) -> BundleFunction {
    BundleFunction::prolong(alg, f)
}

fn describe(phi: &BundleFunction) -> Value {
    phi.to_json().map_or(Value::Null, |j| serde_json::to_value(j).expect("json"))
}

fn strings(theta: &BaseVectorField) -> Value {
    json!(theta.to_strings())
}

fn poisson_battery() -> Vec<(&'static str, PoissonStructure)> {
    vec![("canonical2", PoissonStructure::canonical(2).expect("even")), ("so3", PoissonStructure::so3())]
}

fn symplectic_battery(with_r4: bool) -> Result<Vec<(&'static str, SymplecticStructure)>> {
    let mut out = vec![("canonical2", SymplecticStructure::canonical(2)?)];
    if with_r4 {
        out.push(("canonical4", SymplecticStructure::canonical(4)?));
    }
    let w = BaseForm::new(2, 2, vec![(vec![0, 1], ScalarExpr::parse("1 + x0^2", 2)?)])?;
    out.push(("warped2", SymplecticStructure::new(w)?));
    Ok(out)
}

fn algebra_morphism(cx: &mut Ctx) -> Result<()> {
    for (name, alg) in cx.algebras.clone() {
        for k in 0..8 {
            let n = cx.arity(k);
            let f = random_expr(n, &mut cx.rng);
            let g = random_expr(n, &mut cx.rng);
            let c: f64 = cx.rng.gen_range(-2.0..2.0);
            let points = cx.points(&alg, n, 32);
            let lhs = [pull(&alg, &(&f + &g)), pull(&alg, &f.scale(c)), pull(&alg, &(&f * &g))];
            let rhs = [pull(&alg, &f) + pull(&alg, &g), pull(&alg, &f).scale_real(c), pull(&alg, &f) * pull(&alg, &g)];
            cx.compare(&name, &lhs, &rhs, &points, || json!({ "f": f.to_string(), "g": g.to_string(), "c": c }));
        }
    }
    Ok(())
}

fn ad_ground_truth(cx: &mut Ctx) -> Result<()> {
    const STEP: f64 = 1e-5;
    let dual = algebra_by_name("dual")?.with_fault(cx.spec.mutation);
    for k in 0..20 {
        let n = cx.arity(k);
        let f = random_expr(n, &mut cx.rng);
        for _ in 0..4 {
            let x = crate::weil_bundle::DomainBox::standard(n).sample_point(&mut cx.rng);
            for i in 0..n {
                let coords: Vec<WeilElement> = x
                    .iter()
                    .enumerate()
                    .map(|(j, &v)| WeilElement::new(&dual, vec![v, if i == j { 1.0 } else { 0.0 }]))
                    .collect::<Result<_>>()?;
                let dual_part = f.eval_weil(&coords)?.coeffs()[1];
                let symbolic = f.differentiate(i).eval_real(&x)?;
                let (mut xp, mut xm) = (x.clone(), x.clone());
                xp[i] += STEP;
                xm[i] -= STEP;
                let fd = (f.eval_real(&xp)? - f.eval_real(&xm)?) / (2.0 * STEP);
                let rel = |a: f64, b: f64| (a - b).abs() / 1f64.max(a.abs()).max(b.abs());
                let res = rel(dual_part, symbolic).max(rel(dual_part, fd));
                cx.record(res, || {
                    json!({ "algebra": "dual", "inputs": { "f": f.to_string(), "x": x, "i": i,
                        "dual_part": dual_part, "symbolic": symbolic, "central_difference": fd } })
                });
            }
        }
    }
    Ok(())
}

fn lie_morphism(cx: &mut Ctx) -> Result<()> {
    for (name, alg) in cx.algebras.clone() {
        for k in 0..4 {
            let n = cx.arity(k);
            let a = random_field(n, &mut cx.rng);
            let b = random_field(n, &mut cx.rng);
            let f = random_expr(n, &mut cx.rng);
            let g = random_polynomial(n, 2, &mut cx.rng);
            let (aa, ba) = (a.prolong(&alg), b.prolong(&alg));
            let points = cx.points(&alg, n, 32);
            let mut lhs = a.bracket(&b).prolong(&alg).components().to_vec();
            let mut rhs = aa.lie_bracket(&ba).components().to_vec();
            lhs.extend_from_slice(a.times(&f).prolong(&alg).components());
            rhs.extend_from_slice(aa.times(&pull(&alg, &f)).components());
            lhs.extend_from_slice(a.add(&b).prolong(&alg).components());
            rhs.extend_from_slice(aa.add(&ba).components());
            let fg = BundleFunction::product_of_pullbacks(&WeilElement::one(&alg), &[f.clone(), g.clone()])?;
            lhs.push(pull(&alg, &a.apply(&(&f * &g))));
            rhs.push(aa.apply(&fg));
            cx.compare(&name, &lhs, &rhs, &points, || {
                json!({ "a": strings(&a), "b": strings(&b), "f": f.to_string(), "g": g.to_string() })
            });
        }
    }
    Ok(())
}

fn functoriality(cx: &mut Ctx) -> Result<()> {
    for (name, alg) in cx.algebras.clone() {
        for _ in 0..8 {
            let h = [random_polynomial(2, 2, &mut cx.rng), random_polynomial(2, 2, &mut cx.rng)];
            let g = random_expr(2, &mut cx.rng);
            let gh = g.compose(&h)?;
            for xi in cx.points(&alg, 2, 32) {
                let lhs = gh.eval_weil(xi.coords())?;
                let rhs = g.eval_weil(pushforward_map(&h, &xi)?.coords())?;
                cx.record(scaled_residual(&lhs, &rhs), || {
                    json!({ "algebra": name, "inputs": { "g": g.to_string(), "h": [h[0].to_string(), h[1].to_string()] },
                        "point": serde_json::to_value(xi.to_json()).expect("json") })
                });
            }
        }
    }
    Ok(())
}

fn poisson_compat(cx: &mut Ctx) -> Result<()> {
    for (pname, base) in poisson_battery() {
        let n = base.arity();
        for (name, alg) in cx.algebras.clone() {
            let pp = ProlongedPoisson::new(base.clone(), &alg);
            for _ in 0..4 {
                let (f, g) = (random_expr(n, &mut cx.rng), random_expr(n, &mut cx.rng));
                let points = cx.points(&alg, n, 32);
                let lhs = pp.bracket(&pull(&alg, &f), &pull(&alg, &g));
                let rhs = pull(&alg, &base.base_bracket(&f, &g));
                cx.compare(&name, &[lhs], &[rhs], &points, || {
                    json!({ "poisson": pname, "f": f.to_string(), "g": g.to_string() })
                });
            }
        }
    }
    Ok(())
}

fn d_tilde_prolongation(cx: &mut Ctx) -> Result<()> {
    for (pname, base) in poisson_battery() {
        let n = base.arity();
        for (name, alg) in cx.algebras.clone() {
            let pp = ProlongedPoisson::new(base.clone(), &alg);
            for _ in 0..4 {
                let eta = random_field(n, &mut cx.rng);
                let crate::poisson::BaseCochain::Bilinear(d_eta) =
                    crate::poisson::d_ad(&BaseCochain::Field(eta.clone()), &base)?
                else {
                    unreachable!("d_ad of a field is bilinear")
                };
                let lifted = BundleBilinear::DTilde { poisson: pp.clone(), field: eta.prolong(&alg) };
                let points = cx.points(&alg, n, 32);
                for _ in 0..cx.inputs(6) {
                    let (f, g) = (random_expr(n, &mut cx.rng), random_expr(n, &mut cx.rng));
                    let lhs = lifted.eval(&pull(&alg, &f), &pull(&alg, &g));
                    let rhs = pull(&alg, &d_eta.eval(&f, &g));
                    cx.compare(&name, &[lhs], &[rhs], &points, || {
                        json!({ "poisson": pname, "eta": strings(&eta), "f": f.to_string(), "g": g.to_string() })
                    });
                }
            }
        }
    }
    Ok(())
}

/// Non-closed fields are drawn until their base residual exceeds this.
const OPEN_MARGIN: f64 = 1e-3;

fn iff_local(cx: &mut Ctx) -> Result<()> {
    let base = PoissonStructure::so3();
    let n = 3;
    let gens = default_generators(n);
    let s = cx.sampling(n, 8);
    let mut fields: Vec<(BaseVectorField, bool)> = Vec::new();
    for _ in 0..6 {
        fields.push((base.ad(&random_polynomial(n, 3, &mut cx.rng)), true));
    }
    while fields.len() < 12 {
        let theta = random_field(n, &mut cx.rng);
        if closedness_residual_base(&theta, &base, &gens, &s, &mut cx.rng)? > OPEN_MARGIN {
            fields.push((theta, false));
        }
    }
    for (theta, closed) in &fields {
        let base_res = closedness_residual_base(theta, &base, &gens, &s, &mut cx.rng)?;
        let base_verdict = base_res <= s.tol;
        for (name, alg) in cx.algebras.clone() {
            let pp = ProlongedPoisson::new(base.clone(), &alg);
            let (c, pair) = closedness_residual_poisson(&theta.prolong(&alg), &pp, &gens, &s, &mut cx.rng)?;
            let lifted_verdict = c.worst_residual <= s.tol;
            let witness = || {
                json!({ "algebra": name, "inputs": { "theta": strings(theta), "constructed_closed": closed,
                    "base_residual": base_res, "lifted_residual": c.worst_residual,
                    "generator_pair": pair.map(|(i, j)| [gens[i].to_string(), gens[j].to_string()]) },
                    "point": c.worst_point.as_ref().map(|p| serde_json::to_value(p.to_json()).expect("json")) })
            };
            if base_verdict != *closed || lifted_verdict != base_verdict {
                cx.fail(witness());
            } else if *closed {
                cx.record(c.worst_residual.max(base_res), witness);
            }
        }
    }
    Ok(())
}

fn bracket_derivation(cx: &mut Ctx) -> Result<()> {
    for (pname, base) in poisson_battery() {
        let n = base.arity();
        let gens = default_generators(n);
        for (name, alg) in cx.algebras.clone() {
            let pp = ProlongedPoisson::new(base.clone(), &alg);
            let phi = random_bundle_function(&alg, n, &mut cx.rng);
            let f = random_expr(n, &mut cx.rng);
            let constant_field = if pname == "so3" {
                BaseVectorField::parse(&["x1", "-x0", "0"])?
            } else {
                BaseVectorField::coordinate(n, 0)
            };
            let candidates = vec![
                ("tau", pp.tau_field(&phi)),
                ("ad", base.ad(&f).prolong(&alg)),
                ("poisson_field", constant_field.prolong(&alg)),
                ("random", random_field(n, &mut cx.rng).prolong(&alg)),
            ];
            let s = cx.sampling(n, 8);
            let mut passed = 0;
            for (label, x) in &candidates {
                let (c, _) = closedness_residual_poisson(x, &pp, &gens, &s, &mut cx.rng)?;
                if c.worst_residual > s.tol {
                    continue;
                }
                passed += 1;
                let points = cx.points(&alg, n, 8);
                for _ in 0..cx.inputs(10) {
                    let u = random_bundle_function(&alg, n, &mut cx.rng);
                    let v = random_bundle_function(&alg, n, &mut cx.rng);
                    let lhs = x.apply(&pp.bracket(&u, &v));
                    let rhs = pp.bracket(&x.apply(&u), &v) + pp.bracket(&u, &x.apply(&v));
                    cx.compare(&name, &[lhs], &[rhs], &points, || {
                        json!({ "poisson": pname, "field": label, "phi": describe(&u), "psi": describe(&v) })
                    });
                }
            }
            if passed == 0 {
                cx.fail(json!({ "algebra": name, "poisson": pname, "error": "no candidate passed the local test" }));
            }
        }
    }
    Ok(())
}

fn global_poisson(cx: &mut Ctx) -> Result<()> {
    for (pname, base) in poisson_battery() {
        let n = base.arity();
        for (name, alg) in cx.algebras.clone() {
            let pp = ProlongedPoisson::new(base.clone(), &alg);
            for _ in 0..2 {
                let f = random_expr(n, &mut cx.rng);
                let theta = base.ad(&f).prolong(&alg);
                let fa = pull(&alg, &f);
                let points = cx.points(&alg, n, 32);
                cx.compare_fields(&name, &theta, &pp.tau_field(&fa), &points, || {
                    json!({ "poisson": pname, "f": f.to_string() })
                });
                for _ in 0..cx.inputs(10) {
                    let psi = random_bundle_function(&alg, n, &mut cx.rng);
                    cx.compare(&name, &[theta.apply(&psi)], &[pp.bracket(&fa, &psi)], &points, || {
                        json!({ "poisson": pname, "f": f.to_string(), "psi": describe(&psi) })
                    });
                }
            }
        }
    }
    Ok(())
}

fn random_form(n: usize, degree: usize, rng: &mut ChaCha8Rng) -> Result<BaseForm> {
    let indices = BaseForm::zero(n, degree).prolong(&WeilAlgebra::truncated(1, 1)?).indices();
    BaseForm::new(n, degree, indices.into_iter().map(|i| (i, random_polynomial(n, 2, rng))).collect())
}

fn interior_prolongation(cx: &mut Ctx) -> Result<()> {
    for (name, alg) in cx.algebras.clone() {
        for degree in 1..=2 {
            for k in 0..8 {
                let n = cx.arity(k).max(degree).max(2);
                let w = random_form(n, degree, &mut cx.rng)?;
                let mut theta = random_field(n, &mut cx.rng);
                theta = theta.add(&BaseVectorField::coordinate(n, 0).times(&random_expr(n, &mut cx.rng)));
                let lhs = w.interior(&theta)?.prolong(&alg);
                let rhs = w.prolong(&alg).interior(&theta.prolong(&alg))?;
                let idx = lhs.indices();
                let l: Vec<BundleFunction> = idx.iter().map(|i| lhs.coeff(i)).collect();
                let r: Vec<BundleFunction> = idx.iter().map(|i| rhs.coeff(i)).collect();
                let points = cx.points(&alg, n, 32);
                cx.compare(&name, &l, &r, &points, || json!({ "form": w.to_json(), "theta": strings(&theta) }));
            }
        }
    }
    Ok(())
}

fn brackets_coincide(cx: &mut Ctx) -> Result<()> {
    for (sname, s) in symplectic_battery(true)? {
        let n = s.arity();
        for (name, alg) in cx.algebras.clone() {
            let pp = ProlongedPoisson::new(s.inverse_poisson().clone(), &alg);
            let points = cx.points(&alg, n, 16);
            for _ in 0..cx.inputs(10) {
                let u = random_bundle_function(&alg, n, &mut cx.rng);
                let v = random_bundle_function(&alg, n, &mut cx.rng);
                let b = s.bracket(&u, &v);
                let lhs = [b.clone(), b];
                let rhs = [pp.bracket(&u, &v), s.bracket_from_form(&u, &v)?];
                cx.compare(&name, &lhs, &rhs, &points, || {
                    json!({ "symplectic": sname, "phi": describe(&u), "psi": describe(&v) })
                });
            }
            for _ in 0..2 {
                let f = random_expr(n, &mut cx.rng);
                let x = s.hamiltonian_field(&pull(&alg, &f));
                cx.compare_fields(&name, &x, &s.base_hamiltonian_field(&f).prolong(&alg), &points, || {
                    json!({ "symplectic": sname, "f": f.to_string() })
                });
            }
        }
    }
    Ok(())
}

fn symplectic_derivation(cx: &mut Ctx) -> Result<()> {
    for (sname, s) in symplectic_battery(false)? {
        let n = s.arity();
        for (name, alg) in cx.algebras.clone() {
            let phi = random_bundle_function(&alg, n, &mut cx.rng);
            let f = random_expr(n, &mut cx.rng);
            let candidates = vec![
                ("hamiltonian", s.hamiltonian_field(&phi)),
                ("prolonged_hamiltonian", s.base_hamiltonian_field(&f).prolong(&alg)),
                ("d_dx1", BaseVectorField::coordinate(n, 1).prolong(&alg)),
                ("dilation", BaseVectorField::parse(&["x0", "0"])?.prolong(&alg)),
                ("random", random_field(n, &mut cx.rng).prolong(&alg)),
            ];
            let s8 = cx.sampling(n, 8);
            let mut passed = 0;
            for (label, x) in &candidates {
                let c = closedness_residual_symplectic(x, &s, &s8, &mut cx.rng)?;
                if c.worst_residual > s8.tol {
                    continue;
                }
                passed += 1;
                let points = cx.points(&alg, n, 8);
                for _ in 0..cx.inputs(10) {
                    let u = random_bundle_function(&alg, n, &mut cx.rng);
                    let v = random_bundle_function(&alg, n, &mut cx.rng);
                    let lhs = x.apply(&s.bracket(&u, &v));
                    let rhs = s.bracket(&x.apply(&u), &v) + s.bracket(&u, &x.apply(&v));
                    cx.compare(&name, &[lhs], &[rhs], &points, || {
                        json!({ "symplectic": sname, "field": label, "phi": describe(&u), "psi": describe(&v) })
                    });
                }
            }
            if passed == 0 {
                cx.fail(json!({ "algebra": name, "symplectic": sname, "error": "no candidate passed the local test" }));
            }
        }
    }
    Ok(())
}

fn global_symplectic(cx: &mut Ctx) -> Result<()> {
    let battery = symplectic_battery(true)?;
    for (name, alg) in cx.algebras.clone() {
        for k in 0..8 {
            let (sname, s) = &battery[k % battery.len()];
            let n = s.arity();
            let f = random_expr(n, &mut cx.rng);
            let theta = s.base_hamiltonian_field(&f).prolong(&alg);
            let sampling = cx.sampling(n, 32);
            let o = witness_outcome_symplectic(&theta, &pull(&alg, &f), s, cx.spec.sign, &sampling, &mut cx.rng)?;
            let sign = cx.spec.sign;
            cx.record(o.residual.worst_residual, || {
                json!({ "algebra": name, "inputs": { "symplectic": sname, "f": f.to_string(), "sign": sign.to_string(),
                    "matched_sign": o.matched.map(|m| m.to_string()) },
                    "point": o.residual.worst_point.as_ref().map(|p| serde_json::to_value(p.to_json()).expect("json")) })
            });
        }
    }
    Ok(())
}

const MAX_CONDITION: f64 = 100.0;

fn neumann_inverse(cx: &mut Ctx) -> Result<()> {
    for (name, alg) in cx.algebras.clone() {
        let mut made = 0;
        while made < 50 {
            let size = cx.rng.gen_range(2..=4);
            let real = DMatrix::from_fn(size, size, |_, _| cx.rng.gen_range(-1.0..=1.0));
            let sv = real.clone().singular_values();
            let cond = sv.max() / sv.min();
            if !(cond < MAX_CONDITION) {
                continue;
            }
            made += 1;
            let entries: Vec<WeilElement> = (0..size * size)
                .map(|k| {
                    let mut c = vec![real[(k / size, k % size)]];
                    c.extend((1..alg.dim()).map(|_| cx.rng.gen_range(-1.0..=1.0)));
                    WeilElement::new(&alg, c)
                })
                .collect::<Result<_>>()?;
            let m = WeilMatrix::new(size, entries)?;
            let inv = weil_matrix_inverse(&m)?;
            let res = m.mul(&inv).max_abs_diff(&WeilMatrix::identity(&alg, size));
            cx.record(res, || {
                let rows: Vec<Vec<Vec<f64>>> = (0..size)
                    .map(|r| (0..size).map(|c| m.get(r, c).coeffs().to_vec()).collect())
                    .collect();
                json!({ "algebra": name, "inputs": { "matrix": rows, "condition": cond } })
            });
        }
    }
    Ok(())
}
