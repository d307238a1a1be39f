use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{same_algebra, Fault, WeilAlgebra};
use crate::error::{Error, Result};

/// An element of a Weil algebra as a coefficient vector in the algebra basis.
///
/// `coeffs[0]` is the augmentation (real part). The arithmetic operators
/// panic when the operands live in different algebras; the `checked_*`
/// methods report [`Error::AlgebraMismatch`] instead.
#[derive(Debug, Clone)]
pub struct WeilElement {
    algebra: Arc<WeilAlgebra>,
    coeffs: Vec<f64>,
}

/// Wire form of an element: `{"coeffs":[...]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElementJson {
    pub coeffs: Vec<f64>,
}

impl WeilElement {
    pub fn new(algebra: &Arc<WeilAlgebra>, coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.len() != algebra.dim() {
            return Err(Error::Input(format!(
                "element has {} coefficients but the algebra has dimension {}",
                coeffs.len(),
                algebra.dim()
            )));
        }
        Ok(WeilElement { algebra: algebra.clone(), coeffs })
    }

    pub fn zero(algebra: &Arc<WeilAlgebra>) -> Self {
        WeilElement { algebra: algebra.clone(), coeffs: vec![0.0; algebra.dim()] }
    }

    pub fn one(algebra: &Arc<WeilAlgebra>) -> Self {
        Self::constant(algebra, 1.0)
    }

    /// `c * 1_A`.
    pub fn constant(algebra: &Arc<WeilAlgebra>, c: f64) -> Self {
        let mut e = Self::zero(algebra);
        e.coeffs[0] = c;
        e
    }

    /// Basis element `e_i`.
    pub fn basis(algebra: &Arc<WeilAlgebra>, i: usize) -> Self {
        let mut e = Self::zero(algebra);
        e.coeffs[i] = 1.0;
        e
    }

    pub fn from_json(algebra: &Arc<WeilAlgebra>, json: &ElementJson) -> Result<Self> {
        Self::new(algebra, json.coeffs.clone())
    }

    pub fn to_json(&self) -> ElementJson {
        ElementJson { coeffs: self.coeffs.clone() }
    }

    pub fn algebra(&self) -> &Arc<WeilAlgebra> {
        &self.algebra
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    /// The projection `A -> A/m = R`.
    pub fn augmentation(&self) -> f64 {
        self.coeffs[0]
    }

    pub fn nilpotent_part(&self) -> WeilElement {
        let mut e = self.clone();
        e.coeffs[0] = 0.0;
        e
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.iter().all(|&c| c == 0.0)
    }

    pub fn max_abs(&self) -> f64 {
        self.coeffs.iter().fold(0.0, |m, c| m.max(c.abs()))
    }

    /// Largest coefficient difference.
    pub fn max_abs_diff(&self, other: &WeilElement) -> f64 {
        self.coeffs.iter().zip(&other.coeffs).fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }

    pub fn same_algebra(&self, other: &WeilElement) -> bool {
        same_algebra(&self.algebra, &other.algebra)
    }

    fn check(&self, other: &WeilElement) -> Result<()> {
        if self.same_algebra(other) {
            Ok(())
        } else {
            Err(Error::AlgebraMismatch)
        }
    }

    pub fn checked_add(&self, other: &WeilElement) -> Result<WeilElement> {
        self.check(other)?;
        Ok(self.zip_with(other, |a, b| a + b))
    }

    pub fn checked_sub(&self, other: &WeilElement) -> Result<WeilElement> {
        self.check(other)?;
        Ok(self.zip_with(other, |a, b| a - b))
    }

    pub fn checked_mul(&self, other: &WeilElement) -> Result<WeilElement> {
        self.check(other)?;
        Ok(WeilElement { algebra: self.algebra.clone(), coeffs: self.algebra.mul_coeffs(&self.coeffs, &other.coeffs) })
    }

    pub fn scale(&self, s: f64) -> WeilElement {
        WeilElement { algebra: self.algebra.clone(), coeffs: self.coeffs.iter().map(|c| c * s).collect() }
    }

    fn zip_with(&self, other: &WeilElement, f: impl Fn(f64, f64) -> f64) -> WeilElement {
        WeilElement {
            algebra: self.algebra.clone(),
            coeffs: self.coeffs.iter().zip(&other.coeffs).map(|(&a, &b)| f(a, b)).collect(),
        }
    }

    pub fn powi(&self, mut exp: u32) -> WeilElement {
        let mut base = self.clone();
        let mut acc = WeilElement::one(&self.algebra);
        while exp > 0 {
            if exp & 1 == 1 {
                acc = &acc * &base;
            }
            exp >>= 1;
            if exp > 0 {
                base = &base * &base;
            }
        }
        acc
    }

    /// Inverse by the finite Neumann series
    /// `a^{-1} = a0^{-1} sum_{k=0}^{h} (-nu/a0)^k` with `a = a0 + nu`.
    pub fn inverse(&self) -> Result<WeilElement> {
        let a0 = self.augmentation();
        if a0.abs() <= self.algebra.zero_tol() {
            return Err(Error::NotInvertible(a0));
        }
        let ratio = self.nilpotent_part().scale(-1.0 / a0);
        let terms = self.algebra.series_order(Fault::SkippedNeumannTerm);
        let one = WeilElement::one(&self.algebra);
        // Horner: 1 + r(1 + r(1 + ...))
        let mut sum = one.clone();
        for _ in 0..terms {
            sum = &one + &(&ratio * &sum);
        }
        Ok(sum.scale(1.0 / a0))
    }

    /// Lift of an analytic primitive `g` through its Taylor expansion at the
    /// augmentation: `g(a) = sum_{k=0}^{h} g^{(k)}(a0)/k! * nu^k`.
    ///
    /// `derivative(a0, k)` must return `g^{(k)}(a0)`.
    pub fn taylor_lift(&self, derivative: impl Fn(f64, usize) -> f64) -> WeilElement {
        let a0 = self.augmentation();
        let nu = self.nilpotent_part();
        let order = self.algebra.series_order(Fault::TruncateTaylor);
        let mut result = WeilElement::constant(&self.algebra, derivative(a0, 0));
        let mut power = WeilElement::one(&self.algebra);
        let mut factorial = 1.0;
        for k in 1..=order {
            power = &power * &nu;
            if power.is_zero() {
                break;
            }
            factorial *= k as f64;
            result = &result + &power.scale(derivative(a0, k) / factorial);
        }
        result
    }
}

impl PartialEq for WeilElement {
    fn eq(&self, other: &Self) -> bool {
        self.same_algebra(other) && self.coeffs == other.coeffs
    }
}

impl fmt::Display for WeilElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut wrote = false;
        for (c, label) in self.coeffs.iter().zip(self.algebra.labels()) {
            if *c == 0.0 {
                continue;
            }
            if wrote {
                write!(f, " {} ", if *c < 0.0 { '-' } else { '+' })?;
            } else if *c < 0.0 {
                write!(f, "-")?;
            }
            let mag = c.abs();
            if label == "1" {
                write!(f, "{mag}")?;
            } else if mag == 1.0 {
                write!(f, "{label}")?;
            } else {
                write!(f, "{mag}*{label}")?;
            }
            wrote = true;
        }
        if !wrote {
            write!(f, "0")?;
        }
        Ok(())
    }
}

macro_rules! forward_binop {
    ($trait:ident, $method:ident, $checked:ident) => {
        impl $trait<&WeilElement> for &WeilElement {
            type Output = WeilElement;
            fn $method(self, rhs: &WeilElement) -> WeilElement {
                self.$checked(rhs).expect("Weil elements from different algebras")
            }
        }
        impl $trait<WeilElement> for WeilElement {
            type Output = WeilElement;
            fn $method(self, rhs: WeilElement) -> WeilElement {
                (&self).$method(&rhs)
            }
        }
        impl $trait<&WeilElement> for WeilElement {
            type Output = WeilElement;
            fn $method(self, rhs: &WeilElement) -> WeilElement {
                (&self).$method(rhs)
            }
        }
    };
}

forward_binop!(Add, add, checked_add);
forward_binop!(Sub, sub, checked_sub);
forward_binop!(Mul, mul, checked_mul);

impl Neg for &WeilElement {
    type Output = WeilElement;
    fn neg(self) -> WeilElement {
        self.scale(-1.0)
    }
}

impl Neg for WeilElement {
    type Output = WeilElement;
    fn neg(self) -> WeilElement {
        self.scale(-1.0)
    }
}
