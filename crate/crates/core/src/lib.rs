//! Greedy generator-based probing of fermionic N-representability.

pub mod adapt;
pub mod error;
pub mod experiments;
pub mod fock;
pub mod io;
pub mod linalg;
pub mod nrep;
pub mod pool;
pub mod rdm;
pub mod scalar;
mod scan;
pub mod targets;

pub use error::{Error, Result};
pub use scalar::Real;

pub type StateVector = fock::StateVector<f64>;
pub type RdmMatrix = rdm::RdmMatrix<f64>;
pub type StateVectorF32 = fock::StateVector<f32>;
pub type RdmMatrixF32 = rdm::RdmMatrix<f32>;
