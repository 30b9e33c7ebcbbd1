//! Online stochastic optimization under time-varying distributions.
//!
//! The crate simulates learning problems whose data distribution drifts from
//! round to round, runs online (proximal) stochastic gradient methods against
//! them, and checks what theory predicts about the outcome:
//!
//! - [`drift`] generates drifting scenes: a Gaussian regression stream with a
//!   moving ground-truth parameter, and small discrete distributions whose
//!   step-to-step Wasserstein drift is known by construction.
//! - [`transport`] computes exact type-1 Wasserstein distances and total
//!   variation on small discrete measures, used to certify drift magnitudes.
//! - [`losses`] holds the loss models (squared regression loss and its
//!   CVaR-augmented surrogate), population values and gradients under
//!   discrete measures, VaR/CVaR oracles, and proximal regularizers.
//! - [`optim`] implements the online SGD and proximal SGD updates, step-size
//!   schedules, and the batch offline solvers used as per-round oracles.
//! - [`regret`] accounts per-round optimality gaps and evaluates the
//!   theoretical regret-bound calculators.
//! - [`diagnostics`] verifies the assumptions the bounds rest on
//!   (Polyak-Łojasiewicz and proximal-PL residuals, smoothness, drift
//!   inequalities, CVaR event-set geometry) on exactly computable fixtures.
//! - [`harness`] wires everything into reproducible Monte Carlo experiments
//!   with deterministic seeding and CSV/JSON export.

pub mod diagnostics;
pub mod drift;
pub mod error;
pub mod harness;
pub mod losses;
pub mod optim;
pub mod regret;
pub mod rng;
pub mod transport;

pub use error::{Error, Result};
