//! Simulator for decentralized finite-sum optimization under locally varying
//! smoothness.
//!
//! The crate provides:
//!
//! * [`smoothness`] — local smoothness constants as positive set functions on
//!   norm balls, with growth families, combinators, and certified radii for
//!   relative-ratio control.
//! * [`network`] — communication graphs, Metropolis mixing matrices, and the
//!   spectral constants that drive consensus contraction.
//! * [`problems`] — finite-sum benchmark problems (quadratic inverse,
//!   dimension reduction) with analytic component gradients and per-agent
//!   smoothness estimators.
//! * [`clipping`] — the norm-based clipping operator and the gradient-mapping
//!   stationarity measure.
//! * [`optimizers`] — clipped gradient tracking with staggered or synchronous
//!   variance reduction, plus the GT-SARAH / D-GET / GT-VR baselines, all
//!   driven by one deterministic run loop.
//! * [`diagnostics`] — potential-function constants, restart and complexity
//!   bound checks, and escape-radius monitors over recorded trajectories.

pub mod clipping;
pub mod diagnostics;
pub mod error;
pub mod network;
pub mod optimizers;
pub mod problems;
pub mod smoothness;
pub(crate) mod util;

pub use error::{Error, Result};
