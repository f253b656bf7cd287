//! Operator spaces, factorization norms over partial products, quotients,
//! group presentations and quantum correlation models.

pub mod correlations;
pub mod error;
pub mod factnorm;
pub mod groups;
pub mod linalg;
pub mod haagerup;
pub mod io;
pub mod optim;
pub mod products;
pub mod quotients;
pub mod sdp;
pub mod spaces;

pub use error::{Error, Result};
pub use linalg::{ComplexMatrix, ComplexVector, C64};
pub use spaces::{ConcreteOperatorSpace, MatrixElement};

/// Crate version recorded in reports.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
