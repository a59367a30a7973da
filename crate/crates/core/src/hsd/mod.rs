//! Hybrid structured detector (HSD): a GLRT comparing background-only and
//! full-dictionary reconstructions under a whitened background model, plus
//! cross-channel voting and heart-rate extraction.

mod background;
mod confidence;
mod learn;
mod rate;
mod vote;

pub use background::{background_covariance, BackgroundModel};
pub use confidence::{confidence_series, hsd_confidence, ConfidenceSeries, HsdDetector, HsdScore};
pub use learn::{learn_detection_params, learn_detection_params_multi, DetectionGrid};
pub use rate::{hr_from_beats, hr_from_confidence_dft, WindowSpec};
pub use vote::{confirm_clusters, vote_beats, Beat, DetectionParams};
