//! Small dense solvers used by the planners.

mod linalg;
mod qp;
mod scalar;

pub use linalg::ridge_solve;
pub use qp::{solve_qp, QpSettings, QpSolution, QpSolver, QuadraticProgram, SolveStatus};
pub use scalar::{bisect_increasing, scalar_convex_min};
