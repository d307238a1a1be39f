//! Weil algebras given by structure constants.
//!
//! A Weil algebra here is a finite-dimensional commutative real algebra `A`
//! with unit `e_0` such that `m = span(e_1, ..., e_{d-1})` is a nilpotent
//! ideal. The height `h` is the largest `k` with `m^k != 0`; it is always
//! computed from the structure constants, never taken from the input.

mod element;
mod matrix;

pub use element::{ElementJson, WeilElement};
pub use matrix::{weil_matrix_inverse, WeilMatrix};

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest algebra dimension accepted by the constructors.
pub const DEFAULT_MAX_DIM: usize = 512;

/// Absolute tolerance for invertibility and rank decisions.
pub const DEFAULT_ZERO_TOL: f64 = 1e-10;

/// Deliberate defects an algebra can carry, for mutation runs of the
/// verification suite.
///
/// Every operation that touches an algebra consults its fault; a healthy
/// algebra carries none.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Fault {
    /// Flip the sign of the generator rule for the prolonged hamiltonian derivation.
    SignFlipTau,
    /// Drop the last Leibniz term when differentiating a product of pullbacks.
    DroppedLeibnizTerm,
    /// Truncate Taylor lifts of primitives one order early.
    TruncateTaylor,
    /// Read the bivector transposed when prolonging a Poisson structure.
    TransposedBivector,
    /// Stop the Neumann series one term early in inversions.
    SkippedNeumannTerm,
}

impl Fault {
    pub const ALL: [Fault; 5] = [
        Fault::SignFlipTau,
        Fault::DroppedLeibnizTerm,
        Fault::TruncateTaylor,
        Fault::TransposedBivector,
        Fault::SkippedNeumannTerm,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Fault::SignFlipTau => "sign_flip_tau",
            Fault::DroppedLeibnizTerm => "dropped_leibniz_term",
            Fault::TruncateTaylor => "truncate_taylor",
            Fault::TransposedBivector => "transposed_bivector",
            Fault::SkippedNeumannTerm => "skipped_neumann_term",
        }
    }

    pub fn from_name(name: &str) -> Option<Fault> {
        Fault::ALL.into_iter().find(|f| f.name() == name)
    }
}

/// How an algebra was described; kept so it can be written back out.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum AlgebraSpec {
    Truncated { width: usize, height: usize },
    Table { dim: usize, constants: Vec<Vec<Vec<f64>>> },
}

/// A validated Weil algebra. Immutable once built; share it through `Arc`.
#[derive(Debug, Clone, PartialEq)]
pub struct WeilAlgebra {
    dim: usize,
    labels: Vec<String>,
    /// `products[i * dim + j]` lists the nonzero `(k, c_ijk)` of `e_i * e_j`.
    products: Vec<Vec<(usize, f64)>>,
    height: usize,
    /// Orthonormal bases of `m, m^2, ..., m^h`.
    filtration: Vec<Vec<Vec<f64>>>,
    zero_tol: f64,
    spec: AlgebraSpec,
    fault: Option<Fault>,
}

impl WeilAlgebra {
    /// The truncated polynomial algebra `R[t_1..t_k] / m^{h+1}` with its
    /// monomial basis in graded-lexicographic order.
    pub fn truncated(width: usize, height: usize) -> Result<Arc<Self>> {
        Self::truncated_with_capacity(width, height, DEFAULT_MAX_DIM)
    }

    pub fn truncated_with_capacity(width: usize, height: usize, max_dim: usize) -> Result<Arc<Self>> {
        if width == 0 {
            return Err(Error::Input("truncated algebra needs at least one generator".into()));
        }
        let dim = binomial(width + height, width);
        if dim > max_dim {
            return Err(Error::Capacity { dim, max: max_dim });
        }
        let monomials = graded_lex_monomials(width, height);
        debug_assert_eq!(monomials.len(), dim);
        let index_of = |m: &[usize]| monomials.iter().position(|x| x.as_slice() == m);

        let mut products = vec![Vec::new(); dim * dim];
        for (i, a) in monomials.iter().enumerate() {
            for (j, b) in monomials.iter().enumerate() {
                let sum: Vec<usize> = a.iter().zip(b).map(|(x, y)| x + y).collect();
                if sum.iter().sum::<usize>() <= height {
                    let k = index_of(&sum).expect("monomial of bounded degree is in the basis");
                    products[i * dim + j].push((k, 1.0));
                }
            }
        }

        let degrees: Vec<usize> = monomials.iter().map(|m| m.iter().sum()).collect();
        let filtration: Vec<Vec<Vec<f64>>> = (1..=height)
            .map(|k| {
                (0..dim)
                    .filter(|&i| degrees[i] >= k)
                    .map(|i| unit_vector(dim, i))
                    .collect()
            })
            .collect();
        let computed_height = degrees.iter().copied().max().unwrap_or(0);

        Ok(Arc::new(WeilAlgebra {
            dim,
            labels: monomials.iter().map(|m| monomial_label(m)).collect(),
            products,
            height: computed_height,
            filtration,
            zero_tol: DEFAULT_ZERO_TOL,
            spec: AlgebraSpec::Truncated { width, height },
            fault: None,
        }))
    }

    /// Validate a raw table `c[i][j][k]` (meaning `e_i e_j = sum_k c[i][j][k] e_k`).
    pub fn from_table(constants: &[Vec<Vec<f64>>]) -> Result<Arc<Self>> {
        Self::from_table_with(constants, DEFAULT_ZERO_TOL, DEFAULT_MAX_DIM)
    }

    pub fn from_table_with(constants: &[Vec<Vec<f64>>], tol: f64, max_dim: usize) -> Result<Arc<Self>> {
        let dim = constants.len();
        if dim == 0 {
            return Err(Error::MalformedTable("empty table".into()));
        }
        if dim > max_dim {
            return Err(Error::Capacity { dim, max: max_dim });
        }
        for (i, row) in constants.iter().enumerate() {
            if row.len() != dim || row.iter().any(|v| v.len() != dim) {
                return Err(Error::MalformedTable(format!("slice {i} is not {dim}x{dim}")));
            }
        }
        let c = |i: usize, j: usize, k: usize| constants[i][j][k];

        for i in 0..dim {
            for j in i + 1..dim {
                if (0..dim).any(|k| (c(i, j, k) - c(j, i, k)).abs() > tol) {
                    return Err(Error::NotCommutative(i, j));
                }
            }
        }
        for j in 0..dim {
            for k in 0..dim {
                let expected = if j == k { 1.0 } else { 0.0 };
                if (c(0, j, k) - expected).abs() > tol {
                    return Err(Error::NoUnit(j));
                }
            }
        }

        let mut products = vec![Vec::new(); dim * dim];
        for i in 0..dim {
            for j in 0..dim {
                products[i * dim + j] = (0..dim)
                    .filter(|&k| c(i, j, k) != 0.0)
                    .map(|k| (k, c(i, j, k)))
                    .collect();
            }
        }

        let mut alg = WeilAlgebra {
            dim,
            labels: (0..dim).map(|i| if i == 0 { "1".to_string() } else { format!("e{i}") }).collect(),
            products,
            height: 0,
            filtration: Vec::new(),
            zero_tol: tol,
            spec: AlgebraSpec::Table { dim, constants: constants.to_vec() },
            fault: None,
        };

        for i in 0..dim {
            for j in 0..dim {
                for k in 0..dim {
                    let ij = alg.basis_product(i, j);
                    let left = alg.mul_coeffs(&ij, &unit_vector(dim, k));
                    let jk = alg.basis_product(j, k);
                    let right = alg.mul_coeffs(&unit_vector(dim, i), &jk);
                    if left.iter().zip(&right).any(|(a, b)| (a - b).abs() > tol * (1.0 + a.abs())) {
                        return Err(Error::NotAssociative(i, j, k));
                    }
                }
            }
        }

        for i in 1..dim {
            for j in 1..dim {
                if c(i, j, 0).abs() > tol {
                    return Err(Error::NotLocal(format!(
                        "span(e1..e{}) is not an ideal: e{i}*e{j} has real part {}",
                        dim - 1,
                        c(i, j, 0)
                    )));
                }
            }
        }

        alg.filtration = alg.compute_filtration()?;
        alg.height = alg.filtration.len();
        Ok(Arc::new(alg))
    }

    pub fn from_spec(spec: &AlgebraSpec) -> Result<Arc<Self>> {
        match spec {
            AlgebraSpec::Truncated { width, height } => Self::truncated(*width, *height),
            AlgebraSpec::Table { dim, constants } => {
                if constants.len() != *dim {
                    return Err(Error::MalformedTable(format!(
                        "declared dim {dim} but table has {} slices",
                        constants.len()
                    )));
                }
                Self::from_table(constants)
            }
        }
    }

    /// A copy of this algebra with a fault injected (or cleared).
    pub fn with_fault(&self, fault: Option<Fault>) -> Arc<Self> {
        let mut alg = self.clone();
        alg.fault = fault;
        Arc::new(alg)
    }

    /// A copy with a different zero tolerance.
    pub fn with_zero_tol(&self, tol: f64) -> Arc<Self> {
        let mut alg = self.clone();
        alg.zero_tol = tol;
        Arc::new(alg)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn filtration(&self) -> &[Vec<Vec<f64>>] {
        &self.filtration
    }

    pub fn zero_tol(&self) -> f64 {
        self.zero_tol
    }

    pub fn spec(&self) -> &AlgebraSpec {
        &self.spec
    }

    pub fn fault(&self) -> Option<Fault> {
        self.fault
    }

    pub(crate) fn has_fault(&self, fault: Fault) -> bool {
        self.fault == Some(fault)
    }

    /// Number of nilpotent powers summed by Taylor lifts and Neumann series.
    pub(crate) fn series_order(&self, fault: Fault) -> usize {
        if self.has_fault(fault) {
            self.height.saturating_sub(1)
        } else {
            self.height
        }
    }

    /// Dense structure constant `c[i][j][k]`.
    pub fn constant(&self, i: usize, j: usize, k: usize) -> f64 {
        self.products[i * self.dim + j]
            .iter()
            .find(|(kk, _)| *kk == k)
            .map_or(0.0, |(_, c)| *c)
    }

    pub fn constants(&self) -> Vec<Vec<Vec<f64>>> {
        (0..self.dim)
            .map(|i| (0..self.dim).map(|j| (0..self.dim).map(|k| self.constant(i, j, k)).collect()).collect())
            .collect()
    }

    pub(crate) fn basis_product(&self, i: usize, j: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        for &(k, c) in &self.products[i * self.dim + j] {
            out[k] += c;
        }
        out
    }

    pub(crate) fn mul_coeffs(&self, a: &[f64], b: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        self.mul_into(a, b, &mut out);
        out
    }

    /// `out = a * b` on coefficient slices of length `dim`.
    pub(crate) fn mul_into(&self, a: &[f64], b: &[f64], out: &mut [f64]) {
        let d = self.dim;
        out.fill(0.0);
        for (i, &ai) in a.iter().enumerate() {
            if ai == 0.0 {
                continue;
            }
            for (j, &bj) in b.iter().enumerate() {
                if bj == 0.0 {
                    continue;
                }
                let ab = ai * bj;
                for &(k, c) in &self.products[i * d + j] {
                    out[k] += ab * c;
                }
            }
        }
    }

    /// `m^{k+1}` is spanned by products of a basis of `m^k` with `e_1..e_{d-1}`.
    fn compute_filtration(&self) -> Result<Vec<Vec<Vec<f64>>>> {
        let d = self.dim;
        let ideal: Vec<Vec<f64>> = (1..d).map(|i| unit_vector(d, i)).collect();
        let mut filtration = Vec::new();
        let mut current = ideal.clone();
        while !current.is_empty() {
            if filtration.len() >= d {
                return Err(Error::NotLocal("maximal ideal candidate is not nilpotent".into()));
            }
            let next_spanning: Vec<Vec<f64>> = current
                .iter()
                .flat_map(|u| ideal.iter().map(move |v| (u, v)))
                .map(|(u, v)| self.mul_coeffs(u, v))
                .collect();
            let next = orthonormal_basis(next_spanning, self.zero_tol);
            if next.len() >= current.len() {
                return Err(Error::NotLocal(format!(
                    "maximal ideal candidate is not nilpotent: power {} has the same rank {} as power {}",
                    filtration.len() + 2,
                    next.len(),
                    filtration.len() + 1
                )));
            }
            filtration.push(current);
            current = next;
        }
        Ok(filtration)
    }
}

impl fmt::Display for WeilAlgebra {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.spec {
            AlgebraSpec::Truncated { width: 1, height } => write!(f, "R[t]/(t^{})", height + 1),
            AlgebraSpec::Truncated { width, height } => write!(f, "R[t1..t{width}]/m^{}", height + 1),
            AlgebraSpec::Table { dim, .. } => write!(f, "table algebra (dim {dim}, height {})", self.height),
        }
    }
}

pub(crate) fn same_algebra(a: &Arc<WeilAlgebra>, b: &Arc<WeilAlgebra>) -> bool {
    Arc::ptr_eq(a, b) || **a == **b
}

pub(crate) fn binomial(n: usize, k: usize) -> usize {
    let k = k.min(n - k);
    (0..k).fold(1usize, |acc, i| acc * (n - i) / (i + 1))
}

fn unit_vector(d: usize, i: usize) -> Vec<f64> {
    let mut v = vec![0.0; d];
    v[i] = 1.0;
    v
}

/// Exponent vectors of all monomials in `width` variables of total degree
/// `<= height`, graded by degree and lexicographic (t1 > t2 > ...) within a degree.
fn graded_lex_monomials(width: usize, height: usize) -> Vec<Vec<usize>> {
    fn fill(remaining: usize, slots: usize, prefix: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if slots == 1 {
            prefix.push(remaining);
            out.push(prefix.clone());
            prefix.pop();
            return;
        }
        for e in (0..=remaining).rev() {
            prefix.push(e);
            fill(remaining - e, slots - 1, prefix, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    for degree in 0..=height {
        fill(degree, width, &mut Vec::new(), &mut out);
    }
    out
}

fn monomial_label(exponents: &[usize]) -> String {
    if exponents.iter().all(|&e| e == 0) {
        return "1".into();
    }
    let name = |i: usize| if exponents.len() == 1 { "t".to_string() } else { format!("t{}", i + 1) };
    exponents
        .iter()
        .enumerate()
        .filter(|(_, &e)| e > 0)
        .map(|(i, &e)| if e == 1 { name(i) } else { format!("{}^{e}", name(i)) })
        .collect::<Vec<_>>()
        .join("*")
}

fn orthonormal_basis(vectors: Vec<Vec<f64>>, tol: f64) -> Vec<Vec<f64>> {
    let mut basis: Vec<Vec<f64>> = Vec::new();
    for mut v in vectors {
        for b in &basis {
            let dot: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
            v.iter_mut().zip(b).for_each(|(x, y)| *x -= dot * y);
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > tol {
            v.iter_mut().for_each(|x| *x /= norm);
            basis.push(v);
        }
    }
    basis
}
