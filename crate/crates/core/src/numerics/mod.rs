//! Dense linear algebra, special functions and quadrature.

pub mod linalg;
pub mod matrix;
pub mod quadrature;
pub mod special;
pub mod svd;

pub use linalg::{stacked_pinv_apply, Cholesky};
pub use matrix::{dot, norm, Matrix, Real};
pub use quadrature::{integrate, integrate_tail};
pub use special::{chi2_inverse_survival, chi2_quantile, chi2_survival, norm_cdf, norm_pdf};
pub use svd::{compact_svd, CompactSvd, RANK_TOL};
