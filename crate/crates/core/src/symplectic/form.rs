use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expression::ScalarExpr;
use crate::weil_algebra::{same_algebra, WeilAlgebra};
use crate::weil_bundle::{BaseVectorField, BundleFunction, BundleVectorField};

/// A strictly increasing multi-index `I` standing for `dx_I`.
pub type MultiIndex = Vec<usize>;

/// Wire form: `{"degree": p, "coeffs": {"0,1": "expr", ...}}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FormJson {
    pub degree: usize,
    pub coeffs: BTreeMap<String, String>,
}

/// `dx_i ^ dx_I` as a sign and a sorted index, or `None` when `i` is in `I`.
fn wedge_index(i: usize, index: &[usize]) -> Option<(f64, MultiIndex)> {
    let pos = match index.binary_search(&i) {
        Ok(_) => return None,
        Err(pos) => pos,
    };
    let mut out = index.to_vec();
    out.insert(pos, i);
    Some((if pos % 2 == 0 { 1.0 } else { -1.0 }, out))
}

fn check_index(arity: usize, degree: usize, index: &[usize]) -> Result<()> {
    if index.len() != degree {
        return Err(Error::Input(format!("index {index:?} does not have {degree} entries")));
    }
    if index.windows(2).any(|w| w[0] >= w[1]) || index.iter().any(|&i| i >= arity) {
        return Err(Error::Input(format!("index {index:?} must be strictly increasing below {arity}")));
    }
    Ok(())
}

fn index_key(index: &[usize]) -> String {
    index.iter().map(ToString::to_string).collect::<Vec<_>>().join(",")
}

fn parse_index(key: &str) -> Result<MultiIndex> {
    if key.trim().is_empty() {
        return Ok(Vec::new());
    }
    key.split(',')
        .map(|s| s.trim().parse().map_err(|_| Error::Input(format!("malformed form index `{key}`"))))
        .collect()
}

/// The determinant of a small matrix of bundle functions, by cofactors.
fn bundle_det(rows: &[Vec<BundleFunction>], algebra: &Arc<WeilAlgebra>, arity: usize) -> BundleFunction {
    match rows.len() {
        0 => BundleFunction::real_constant(algebra, arity, 1.0),
        1 => rows[0][0].clone(),
        n => {
            let mut out = BundleFunction::zero(algebra, arity);
            for c in 0..n {
                if rows[0][c].is_zero() {
                    continue;
                }
                let minor: Vec<Vec<BundleFunction>> = rows[1..]
                    .iter()
                    .map(|r| r.iter().enumerate().filter(|(k, _)| *k != c).map(|(_, v)| v.clone()).collect())
                    .collect();
                let term = &rows[0][c] * &bundle_det(&minor, algebra, arity);
                out = if c % 2 == 0 { out + term } else { out - term };
            }
            out
        }
    }
}

fn expr_det(rows: &[Vec<ScalarExpr>], arity: usize) -> ScalarExpr {
    match rows.len() {
        0 => ScalarExpr::one(arity),
        1 => rows[0][0].clone(),
        n => {
            let mut out = ScalarExpr::zero(arity);
            for c in 0..n {
                if rows[0][c].is_zero() {
                    continue;
                }
                let minor: Vec<Vec<ScalarExpr>> = rows[1..]
                    .iter()
                    .map(|r| r.iter().enumerate().filter(|(k, _)| *k != c).map(|(_, v)| v.clone()).collect())
                    .collect();
                let term = &rows[0][c] * &expr_det(&minor, arity);
                out = if c % 2 == 0 { out + term } else { out - term };
            }
            out
        }
    }
}

pub(crate) fn symbolic_det(rows: &[Vec<ScalarExpr>], arity: usize) -> ScalarExpr {
    expr_det(rows, arity)
}

/// A differential form `sum_I w_I dx_I` on `R^n`.
#[derive(Debug, Clone, PartialEq)]
pub struct BaseForm {
    arity: usize,
    degree: usize,
    coeffs: BTreeMap<MultiIndex, ScalarExpr>,
}

impl BaseForm {
    pub fn new(arity: usize, degree: usize, entries: Vec<(MultiIndex, ScalarExpr)>) -> Result<Self> {
        if degree > arity {
            return Err(Error::Degree(format!("degree {degree} exceeds dimension {arity}")));
        }
        let mut form = Self::zero(arity, degree);
        for (index, e) in entries {
            check_index(arity, degree, &index)?;
            if e.arity() != arity {
                return Err(Error::Input(format!("coefficient of {index:?} has arity {}", e.arity())));
            }
            form.accumulate(index, e);
        }
        Ok(form)
    }

    pub fn zero(arity: usize, degree: usize) -> Self {
        BaseForm { arity, degree, coeffs: BTreeMap::new() }
    }

    pub fn function(f: &ScalarExpr) -> Self {
        let mut form = Self::zero(f.arity(), 0);
        form.accumulate(Vec::new(), f.clone());
        form
    }

    /// `dx_i`.
    pub fn coordinate(arity: usize, i: usize) -> Self {
        let mut form = Self::zero(arity, 1);
        form.accumulate(vec![i], ScalarExpr::one(arity));
        form
    }

    fn accumulate(&mut self, index: MultiIndex, e: ScalarExpr) {
        let sum = match self.coeffs.remove(&index) {
            Some(prev) => prev + e,
            None => e,
        };
        if !sum.is_zero() {
            self.coeffs.insert(index, sum);
        }
    }

    pub fn arity(&self) -> usize {
        self.arity
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn coeffs(&self) -> &BTreeMap<MultiIndex, ScalarExpr> {
        &self.coeffs
    }

    pub fn coeff(&self, index: &[usize]) -> ScalarExpr {
        self.coeffs.get(index).cloned().unwrap_or_else(|| ScalarExpr::zero(self.arity))
    }

    pub fn add(&self, other: &BaseForm) -> BaseForm {
        let mut out = self.clone();
        for (i, e) in &other.coeffs {
            out.accumulate(i.clone(), e.clone());
        }
        out
    }

    /// The exterior derivative. At top degree the result is the empty form
    /// of degree `n + 1`.
    pub fn d(&self) -> BaseForm {
        let mut out = Self::zero(self.arity, self.degree + 1);
        for (index, w) in &self.coeffs {
            for i in 0..self.arity {
                if let Some((sign, idx)) = wedge_index(i, index) {
                    let dw = w.differentiate(i);
                    if !dw.is_zero() {
                        out.accumulate(idx, dw.scale(sign));
                    }
                }
            }
        }
        out
    }

    /// `i_theta w`, contracting the first slot.
    pub fn interior(&self, theta: &BaseVectorField) -> Result<BaseForm> {
        if self.degree == 0 {
            return Err(Error::Degree("interior product of a 0-form".into()));
        }
        let mut out = Self::zero(self.arity, self.degree - 1);
        for (index, w) in &self.coeffs {
            for (k, &i) in index.iter().enumerate() {
                let c = &theta.components()[i];
                if c.is_zero() {
                    continue;
                }
                let mut rest = index.clone();
                rest.remove(k);
                out.accumulate(rest, (w * c).scale(if k % 2 == 0 { 1.0 } else { -1.0 }));
            }
        }
        Ok(out)
    }

    /// `w(theta_1, ..., theta_p) = sum_I w_I det[theta_a(x_{I_b})]`.
    pub fn eval(&self, fields: &[BaseVectorField]) -> Result<ScalarExpr> {
        if fields.len() != self.degree {
            return Err(Error::Degree(format!("{}-form evaluated on {} fields", self.degree, fields.len())));
        }
        let mut out = ScalarExpr::zero(self.arity);
        for (index, w) in &self.coeffs {
            let rows: Vec<Vec<ScalarExpr>> =
                fields.iter().map(|f| index.iter().map(|&i| f.components()[i].clone()).collect()).collect();
            out = out + w * &expr_det(&rows, self.arity);
        }
        Ok(out)
    }

    /// `w^A`, with coefficients `w_I^A` in the basis `d^A x_I^A`.
    pub fn prolong(&self, algebra: &Arc<WeilAlgebra>) -> BundleForm {
        BundleForm {
            algebra: algebra.clone(),
            arity: self.arity,
            degree: self.degree,
            coeffs: self.coeffs.iter().map(|(i, w)| (i.clone(), BundleFunction::prolong(algebra, w))).collect(),
        }
    }

    pub fn from_json(arity: usize, json: &FormJson) -> Result<Self> {
        let entries: Result<Vec<(MultiIndex, ScalarExpr)>> = json
            .coeffs
            .iter()
            .map(|(k, v)| Ok((parse_index(k)?, ScalarExpr::parse(v, arity)?)))
            .collect();
        Self::new(arity, json.degree, entries?)
    }

    pub fn to_json(&self) -> FormJson {
        FormJson {
            degree: self.degree,
            coeffs: self.coeffs.iter().map(|(i, e)| (index_key(i), e.to_string())).collect(),
        }
    }
}

/// An A-valued form `sum_I phi_I d^A x_I^A` on `M^A`.
#[derive(Debug, Clone)]
pub struct BundleForm {
    algebra: Arc<WeilAlgebra>,
    arity: usize,
    degree: usize,
    coeffs: BTreeMap<MultiIndex, BundleFunction>,
}

impl BundleForm {
    pub fn new(
        algebra: &Arc<WeilAlgebra>,
        arity: usize,
        degree: usize,
        entries: Vec<(MultiIndex, BundleFunction)>,
    ) -> Result<Self> {
        let mut form = Self::zero(algebra, arity, degree);
        for (index, phi) in entries {
            check_index(arity, degree, &index)?;
            if phi.arity() != arity || !same_algebra(phi.algebra(), algebra) {
                return Err(Error::AlgebraMismatch);
            }
            form.accumulate(index, phi);
        }
        Ok(form)
    }

    pub fn zero(algebra: &Arc<WeilAlgebra>, arity: usize, degree: usize) -> Self {
        BundleForm { algebra: algebra.clone(), arity, degree, coeffs: BTreeMap::new() }
    }

    pub fn function(phi: &BundleFunction) -> Self {
        let mut form = Self::zero(phi.algebra(), phi.arity(), 0);
        form.accumulate(Vec::new(), phi.clone());
        form
    }

    fn accumulate(&mut self, index: MultiIndex, phi: BundleFunction) {
        let sum = match self.coeffs.remove(&index) {
            Some(prev) => prev + phi,
            None => phi,
        };
        if !sum.is_zero() {
            self.coeffs.insert(index, sum);
        }
    }

    pub fn algebra(&self) -> &Arc<WeilAlgebra> {
        &self.algebra
    }

    pub fn arity(&self) -> usize {
        self.arity
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn coeffs(&self) -> &BTreeMap<MultiIndex, BundleFunction> {
        &self.coeffs
    }

    pub fn coeff(&self, index: &[usize]) -> BundleFunction {
        self.coeffs.get(index).cloned().unwrap_or_else(|| BundleFunction::zero(&self.algebra, self.arity))
    }

    /// Every multi-index of this degree, in lexicographic order.
    pub fn indices(&self) -> Vec<MultiIndex> {
        fn rec(start: usize, n: usize, left: usize, cur: &mut MultiIndex, out: &mut Vec<MultiIndex>) {
            if left == 0 {
                out.push(cur.clone());
                return;
            }
            for i in start..n {
                cur.push(i);
                rec(i + 1, n, left - 1, cur, out);
                cur.pop();
            }
        }
        let mut out = Vec::new();
        rec(0, self.arity, self.degree, &mut Vec::new(), &mut out);
        out
    }

    pub fn scale_real(&self, s: f64) -> BundleForm {
        let mut out = Self::zero(&self.algebra, self.arity, self.degree);
        for (i, phi) in &self.coeffs {
            out.accumulate(i.clone(), phi.scale_real(s));
        }
        out
    }

    /// `d^A`, with `d^A phi = sum_i d/dx_i^A(phi) d^A x_i^A`.
    pub fn d(&self) -> BundleForm {
        let mut out = Self::zero(&self.algebra, self.arity, self.degree + 1);
        for (index, phi) in &self.coeffs {
            for i in 0..self.arity {
                if let Some((sign, idx)) = wedge_index(i, index) {
                    let dphi = phi.partial(i);
                    if !dphi.is_zero() {
                        out.accumulate(idx, dphi.scale_real(sign));
                    }
                }
            }
        }
        out
    }

    /// `i_X eta` through the canonical components of `X`.
    pub fn interior(&self, x: &BundleVectorField) -> Result<BundleForm> {
        if self.degree == 0 {
            return Err(Error::Degree("interior product of a 0-form".into()));
        }
        let mut out = Self::zero(&self.algebra, self.arity, self.degree - 1);
        for (index, phi) in &self.coeffs {
            for (k, &i) in index.iter().enumerate() {
                let c = x.component(i);
                if c.is_zero() {
                    continue;
                }
                let mut rest = index.clone();
                rest.remove(k);
                out.accumulate(rest, (phi * c).scale_real(if k % 2 == 0 { 1.0 } else { -1.0 }));
            }
        }
        Ok(out)
    }

    /// `eta(X_1, ..., X_p)`.
    pub fn contract(&self, fields: &[BundleVectorField]) -> Result<BundleFunction> {
        if fields.len() != self.degree {
            return Err(Error::Degree(format!("{}-form evaluated on {} fields", self.degree, fields.len())));
        }
        let mut out = BundleFunction::zero(&self.algebra, self.arity);
        for (index, phi) in &self.coeffs {
            let rows: Vec<Vec<BundleFunction>> =
                fields.iter().map(|f| index.iter().map(|&i| f.component(i).clone()).collect()).collect();
            out = out + phi * &bundle_det(&rows, &self.algebra, self.arity);
        }
        Ok(out)
    }
}

/// `d^A phi` for a function.
pub fn d_a_function(phi: &BundleFunction) -> BundleForm {
    BundleForm::function(phi).d()
}

pub fn d_base(w: &BaseForm) -> BaseForm {
    w.d()
}

pub fn prolong_form(w: &BaseForm, algebra: &Arc<WeilAlgebra>) -> BundleForm {
    w.prolong(algebra)
}

pub fn d_a_form(eta: &BundleForm) -> BundleForm {
    eta.d()
}

pub fn interior_product(x: &BundleVectorField, eta: &BundleForm) -> Result<BundleForm> {
    eta.interior(x)
}
