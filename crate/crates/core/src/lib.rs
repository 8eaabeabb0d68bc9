//! Cauchy-Jacobi biorthogonal polynomials, their tau-function lattice and
//! the discrete CKP equation, checked in exact rational and MPFR arithmetic.

pub mod cli;
pub mod detkit;
pub mod error;
pub mod identities;
pub mod lattice;
pub mod lax;
pub mod moments;
pub mod numerics;
pub mod polyfam;

pub use error::{Error, Result};
