//! Dense linear-algebra kernels.

mod eigen;
mod matrix;
mod solve;
mod svd;

pub use eigen::{sym_eig, SymEig};
pub use matrix::{axpy, dot, norm2, norm_inf, Matrix};
pub use solve::{solve_linear, Lu, MAX_CONDITION};
pub use svd::{thin_svd, ThinSvd, RANK_TOL};
