//! Square matrices over a Weil algebra and their exact inversion.

use std::sync::Arc;

use nalgebra::DMatrix;

use super::{Fault, WeilAlgebra, WeilElement};
use crate::error::{Error, Result};

/// Row-major square matrix of Weil elements sharing one algebra.
#[derive(Debug, Clone, PartialEq)]
pub struct WeilMatrix {
    size: usize,
    entries: Vec<WeilElement>,
}

impl WeilMatrix {
    pub fn new(size: usize, entries: Vec<WeilElement>) -> Result<Self> {
        if entries.len() != size * size {
            return Err(Error::Input(format!("{} entries do not form a {size}x{size} matrix", entries.len())));
        }
        if let Some(first) = entries.first() {
            if entries.iter().any(|e| !e.same_algebra(first)) {
                return Err(Error::AlgebraMismatch);
            }
        }
        Ok(WeilMatrix { size, entries })
    }

    pub fn from_rows(rows: Vec<Vec<WeilElement>>) -> Result<Self> {
        let size = rows.len();
        if rows.iter().any(|r| r.len() != size) {
            return Err(Error::Input("matrix rows are not all of the same length".into()));
        }
        Self::new(size, rows.into_iter().flatten().collect())
    }

    pub fn identity(algebra: &Arc<WeilAlgebra>, size: usize) -> Self {
        let entries = (0..size * size)
            .map(|k| if k / size == k % size { WeilElement::one(algebra) } else { WeilElement::zero(algebra) })
            .collect();
        WeilMatrix { size, entries }
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn get(&self, row: usize, col: usize) -> &WeilElement {
        &self.entries[row * self.size + col]
    }

    pub fn entries(&self) -> &[WeilElement] {
        &self.entries
    }

    /// Entrywise augmentation.
    pub fn real_part(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.size, self.size, |i, j| self.get(i, j).augmentation())
    }

    pub fn mul(&self, other: &WeilMatrix) -> WeilMatrix {
        assert_eq!(self.size, other.size, "matrix sizes differ");
        let n = self.size;
        let entries = (0..n * n)
            .map(|k| {
                let (i, j) = (k / n, k % n);
                (1..n).fold(self.get(i, 0) * other.get(0, j), |acc, l| acc + self.get(i, l) * other.get(l, j))
            })
            .collect();
        WeilMatrix { size: n, entries }
    }

    /// `max_ij |self_ij - other_ij|` over all coefficients.
    pub fn max_abs_diff(&self, other: &WeilMatrix) -> f64 {
        self.entries.iter().zip(&other.entries).fold(0.0, |m, (a, b)| m.max(a.max_abs_diff(b)))
    }

    fn scale_by_real(&self, real: &DMatrix<f64>, real_on_left: bool) -> WeilMatrix {
        let n = self.size;
        let entries = (0..n * n)
            .map(|k| {
                let (i, j) = (k / n, k % n);
                let mut acc = WeilElement::zero(self.entries[0].algebra());
                for l in 0..n {
                    let term = if real_on_left {
                        self.get(l, j).scale(real[(i, l)])
                    } else {
                        self.get(i, l).scale(real[(l, j)])
                    };
                    acc = acc + term;
                }
                acc
            })
            .collect();
        WeilMatrix { size: n, entries }
    }
}

/// Exact inverse over the local ring `A`.
///
/// With `M0` the real part and `E = M - M0` nilpotent,
/// `M^{-1} = M0^{-1} * sum_{k=0}^{h} (-E M0^{-1})^k`; the series stops
/// because every entry of `E` lies in `m` and `m^{h+1} = 0`.
pub fn weil_matrix_inverse(matrix: &WeilMatrix) -> Result<WeilMatrix> {
    let n = matrix.size();
    if n == 0 {
        return Ok(matrix.clone());
    }
    let algebra = matrix.entries[0].algebra().clone();
    let real = matrix.real_part();
    let det = real.determinant();
    if !det.is_finite() || det.abs() <= algebra.zero_tol() {
        return Err(Error::SingularRealPart(det));
    }
    let real_inv = real.clone().try_inverse().ok_or(Error::SingularRealPart(det))?;

    let nilpotent = WeilMatrix {
        size: n,
        entries: matrix.entries.iter().map(WeilElement::nilpotent_part).collect(),
    };
    // P = -E M0^{-1}
    let step = nilpotent.scale_by_real(&(-&real_inv), false);
    let identity = WeilMatrix::identity(&algebra, n);
    let mut sum = identity.clone();
    for _ in 0..algebra.series_order(Fault::SkippedNeumannTerm) {
        let next = step.mul(&sum);
        sum = WeilMatrix {
            size: n,
            entries: identity.entries.iter().zip(&next.entries).map(|(a, b)| a + b).collect(),
        };
    }
    Ok(sum.scale_by_real(&real_inv, true))
}
