//! Benchmarks of the QTT elasticity solver.
//!
//! Three geometries ship as problem files in `configs/`: a slender
//! cantilever made of twenty unit squares, a single edge notched tension
//! specimen and an L-shaped panel. [`pipeline::run_case`] takes one case
//! through assembly, coupling, constraints and the tensor-train solve and
//! measures the result against a conforming reference;
//! [`sweep::sweep`] repeats this over levels and tolerances and fits the
//! convergence and rank growth exponents; [`verify::verify`] checks the
//! tensor operator against the conforming one entry by entry.

pub mod cases;
pub mod pipeline;
pub mod report;
pub mod sweep;
pub mod verify;

use qtt_fem::domain_coupling::CouplingError;
use qtt_fem::elasticity_fem::FemError;
use qtt_fem::reference_oracle::OracleError;
use qtt_fem::tt_core::TtError;
use qtt_fem::tt_solver::SolverError;
use thiserror::Error;

#[derive(Error, Debug)]
pub enum BenchError {
    #[error("unknown case {0:?}; expected cantilever, sen or lshape")]
    UnknownCase(String),

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error(transparent)]
    Coupling(#[from] CouplingError),

    #[error(transparent)]
    Oracle(#[from] OracleError),

    #[error(transparent)]
    Solver(#[from] SolverError),

    #[error(transparent)]
    Tt(#[from] TtError),

    #[error(transparent)]
    Fem(#[from] FemError),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}
