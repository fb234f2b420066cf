//! Granovskii-Zhedanov and helical scar states on XYZ spin chains and lattices.

pub mod algebra;
pub mod cli;
pub mod elliptic;
pub mod error;
pub mod frames;
pub mod hamiltonian;
pub mod lattice;
pub mod scar;
pub mod schwinger;
pub mod spectra;
pub mod spinops;

pub use error::{Error, Result};
