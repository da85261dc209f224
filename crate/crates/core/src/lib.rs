//! Level-set Cox processes: lattice discretisation, Matérn fields,
//! forward simulation, moment formulas, MCMC inference and point-pattern
//! summaries.

pub mod convergence;
pub mod data;
pub mod error;
pub mod geometry;
pub mod grf;
pub mod lattice;
pub mod special;
pub mod stats;

pub use error::{Error, Result};
pub mod model;
pub mod inference;
pub mod moments;
pub mod simulate;
pub mod summaries;
