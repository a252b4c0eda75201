//! Discrete Klein-Gordon solver with Lorentz-vector-field norms, hyperboloidal
//! decay diagnostics and exact commutator checks.

pub mod analysis;
pub mod data;
pub mod error;
pub mod fields;
pub mod gamma;
pub mod hyperboloid;
pub mod norms;
pub mod solver;

pub use error::{Error, Result};
pub use fields::{Field, FieldWindow, Grid3};
