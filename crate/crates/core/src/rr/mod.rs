//! Respiration-rate estimation from cleaned in-ear audio.

pub mod estimate;
pub mod features;
pub mod stft;
pub mod tracker;

pub use estimate::{estimate_rr, harmonic_spectrum, Channel, RatePeak, RrEstimate};
pub use features::{
    average_breath_spectrum, combine_features, log_spectral_energy, prepare_feature, quantile_mask,
    spectral_dissimilarity, FeatureBand, FeatureSeries,
};
pub use stft::{stft, Spectrogram, StftStream};
pub use tracker::{analyze_window, track, RrConfig, RrTracker, WindowOutcome};
