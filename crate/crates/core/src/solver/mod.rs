//! Key-rate optimization: objective, conic subproblems, conditional-gradient
//! driver, and the F versus F' comparison.

pub mod conic;
pub mod frank_wolfe;
pub mod keyrate;
pub mod objective;
pub mod simplex;

pub use frank_wolfe::{minimize, FeasibleSet, SolveResult, SolverOptions};
pub use objective::{gradient, objective};
pub use keyrate::{assemble_keyrates, compare, Comparison, KeyRateReport, KeyRateRow, Verdict, VerdictKind, STRICT_TOLERANCE};
