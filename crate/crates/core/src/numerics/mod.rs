//! Dense linear algebra and seeded randomness shared by every other module.

mod linalg;
mod matrix;
mod rng;

pub use linalg::{
    fit_line, numerical_rank, random_orthogonal, singular_values, solve_spd, solve_spd_detailed, Cholesky, LineFit,
    SpdSolution,
};
pub use matrix::{dot, gemm, norm2, Matrix};
pub use rng::RandomSource;
