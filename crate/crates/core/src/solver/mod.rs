//! The lifted convex problem over monotone maps, its first variation, the ELBO, and a
//! coordinate-ascent (CAVI) baseline on tabulated marginals.

mod cavi;
mod functional;
mod lifted;

pub use cavi::{cavi_solve, quantile_map, CaviConfig, CaviResult, GridDensity};
pub use functional::{elbo, elbo_offset, eval_first_variation, eval_functional};
pub use lifted::{solve_lifted, solve_lifted_with, Init, LiftedSolution, SolverConfig};
