//! Sparse linear algebra: CSR storage, Krylov solvers, saddle-point solvers, a
//! dense oracle, a sparse direct backend and inf-sup estimation.

mod condense;
mod csr;
mod dense;
mod direct;
mod infsup;
mod iterative;
mod saddle;

pub use condense::DiagonalCondensation;
pub use csr::{CsrMatrix, TripletBuilder};
pub use dense::{dense_solve, hilbert, PivotField};
pub use direct::{DirectSolver, SaddleDirect, SaddleLdlt};
pub use infsup::infsup_estimate;
pub use iterative::{cg_jacobi, cg_jacobi_with, gmres, gmres_preconditioned, gmres_with, LinearOperator, SolverConfig, SolverReport};
pub use saddle::{gkb_saddle, saddle_gmres};
pub(crate) use saddle::{has_constant_pressure_kernel, remove_sum, remove_weighted_mean};
