//! Feature extraction for both model families.

pub mod aoa;
pub mod cfo;
pub mod features;
pub mod fft;
pub mod spectral;

pub use aoa::{aoa_features, N_AOA_FEATURES};
pub use cfo::cfo_accumulated;
pub use features::{featurize, featurize_with, iq_planes, FeatureConfig, normalize_iq, FeatureBundle, NormalizationSpec};
pub use fft::{fft, fftshift, ifft, naive_dft};
pub use spectral::{hann, minmax_db, power_db, spectrogram, stft, welch_psd, SPEC_MAX_DB, SPEC_MIN_DB};
