//! Quantized tensor-train (QTT) finite elements for 2D linear elasticity.
//!
//! The crate assembles stiffness matrices and load vectors of bilinear
//! quadrilateral subdomains directly in QTT format with Z-ordered degrees of
//! freedom, couples the subdomains through penalty connectivity operators,
//! and solves the global system with an alternating tensor-train solver. A
//! conventional sparse finite element solver serves as reference.

pub mod domain_coupling;
pub mod elasticity_fem;
pub(crate) mod linalg;
pub mod qtt_assembly;
pub mod qtt_indexing;
pub mod reference_oracle;
pub mod tt_core;
pub mod tt_solver;
