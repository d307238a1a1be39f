//! Weil bundles, prolonged Poisson and symplectic structures, and sampled
//! checks of their identities.

pub mod cli;
pub mod error;
pub mod harness;
pub mod expression;
pub mod weil_algebra;
pub mod poisson;
pub mod symplectic;
pub mod weil_bundle;

pub use error::{Error, Result};
pub use expression::{parse_expr, Primitive, ScalarExpr};
pub use weil_algebra::{weil_matrix_inverse, AlgebraSpec, Fault, WeilAlgebra, WeilElement, WeilMatrix};
