//! Model-free KKL state observation.
//!
//! Rich output measurements `y(t)` are passed through an assigned stable
//! diagonal LTI system `ż = Az + By` (the lifting), and the lifted states are
//! reduced to `n` principal components by an affine map `P(z) = Qz − q`.
//! The recovered trajectory is then compared with ground truth from a
//! simulated Oregonator.
//!
//! Module map:
//!
//! - [`linalg`]: dense matrix, Jacobi symmetric eigensolver, thin SVD, LU solve.
//! - [`dynamics`]: Oregonator vector field, adaptive Dormand–Prince integrator,
//!   uniform resampling, synthetic output maps.
//! - [`lifting`]: observer construction, exact zero-order-hold lifting, the
//!   Sylvester oracle for linear plants.
//! - [`reduction`]: whitening, PCA, affine projection.
//! - [`ingest`]: PPM frames, ROI extraction, CSV series, synthetic frame rendering.
//! - [`diagnostics`]: affine alignment, period estimation, recurrence, reports.
//! - [`pipeline`]: config-driven orchestration and artifact emission.
//! - [`plot`]: dependency-free SVG plots.

// `!(x > 0.0)` is used on purpose so NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod diagnostics;
pub mod dynamics;
mod error;
pub mod ingest;
pub mod lifting;
pub mod linalg;
pub mod pipeline;
pub mod plot;
pub mod reduction;
pub mod series;

pub use error::{Error, Result};
pub use linalg::Matrix;
pub use series::{Layout, OutputSeries};
