//! Multiple-instance dictionary learning for ballistocardiogram (BCG) heartbeat
//! detection.
//!
//! The crate is organised around the processing chain:
//!
//! - [`signal`]: recordings, band-pass filtering, candidate J-peaks, instance
//!   extraction and bag assembly.
//! - [`fumi`]: the EM dictionary learner (latent-target E-step, closed-form atom
//!   updates, proximal-gradient sparse coding, discriminative penalty).
//! - [`hsd`]: the hybrid structured detector, cross-channel voting, detection
//!   parameter search and heart-rate extraction.
//! - [`eval`]: agreement statistics between estimated and reference heart rates.
//! - [`baselines`]: time-domain comparison estimators.
//! - [`synth`]: a synthetic multichannel BCG generator with exact groundtruth.
//! - [`io`]: the on-disk CSV / key-value formats.

// `!(x > 0.0)` is used on purpose so NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baselines;
pub mod error;
pub mod eval;
pub mod fumi;
pub mod hsd;
pub mod io;
pub mod linalg;
pub mod pipeline;
pub mod signal;
pub mod synth;

pub use error::{Error, Result};
