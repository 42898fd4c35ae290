use serde::{Deserialize, Serialize};

use super::aoa::{aoa_features, N_AOA_FEATURES};
use super::cfo::cfo_accumulated;
use super::spectral::{minmax_db, spectrogram, stft, DB_EPS, SPEC_MAX_DB, SPEC_MIN_DB};
use crate::error::{invalid, Error, Result};
use crate::sigsim::{IQSnapshot, Label, N_PATCHES};

pub const SNAPSHOT_LEN: usize = 1024;
pub const STFT_WINDOW: usize = 128;
pub const STFT_HOP: usize = 64;
pub const STFT_FRAMES: usize = 1 + (SNAPSHOT_LEN - STFT_WINDOW) / STFT_HOP;

pub const SPEC_LEN: usize = N_PATCHES * SNAPSHOT_LEN;
pub const IQ_CHANNELS: usize = 2 * N_PATCHES;
pub const IQ_LEN: usize = IQ_CHANNELS * SNAPSHOT_LEN;
pub const AOA_LEN: usize = N_PATCHES * N_AOA_FEATURES;
pub const CFO_LEN: usize = N_PATCHES * SNAPSHOT_LEN;
pub const STFT_LEN: usize = N_PATCHES * STFT_WINDOW * STFT_FRAMES;

/// Every model input derived from one snapshot.
///
/// `spectrogram` and `stft` are already mapped to [0, 1] with the fixed dB
/// bounds. `iq`, `aoa` and `cfo` are raw; they are standardized with a
/// [`NormalizationSpec`] fitted on the training split when batches are built.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureBundle {
    /// `[patch][32 * 32]`, fftshifted spectrum in row-major order.
    pub spectrogram: Vec<f32>,
    /// `[patch * 2 + {0: I, 1: Q}][sample]`.
    pub iq: Vec<f32>,
    /// `[patch][feature]`, see [`super::aoa`].
    pub aoa: Vec<f32>,
    /// `[patch][sample]`, accumulated phase in radians.
    pub cfo: Vec<f32>,
    /// `[patch][freq][frame]`, fftshifted rows.
    pub stft: Vec<f32>,
    pub label: Label,
    pub scenario_tag: String,
}

/// I and Q planes stacked as separate real channels.
pub fn iq_planes(snapshot: &IQSnapshot) -> Vec<f32> {
    let mut out = Vec::with_capacity(2 * N_PATCHES * snapshot.len());
    for ch in &snapshot.samples {
        out.extend(ch.iter().map(|v| v.re));
        out.extend(ch.iter().map(|v| v.im));
    }
    out
}

/// Spectrogram clamp range applied at featurization time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FeatureConfig {
    pub spec_min_db: f64,
    pub spec_max_db: f64,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        FeatureConfig { spec_min_db: SPEC_MIN_DB, spec_max_db: SPEC_MAX_DB }
    }
}

impl FeatureConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.spec_max_db > self.spec_min_db) || !self.spec_min_db.is_finite() || !self.spec_max_db.is_finite() {
            return invalid("features.spec_max_db must exceed spec_min_db");
        }
        Ok(())
    }
}

pub fn featurize(snapshot: &IQSnapshot) -> Result<FeatureBundle> {
    featurize_with(snapshot, &FeatureConfig::default())
}

pub fn featurize_with(snapshot: &IQSnapshot, cfg: &FeatureConfig) -> Result<FeatureBundle> {
    cfg.validate()?;
    let (lo, hi) = (cfg.spec_min_db, cfg.spec_max_db);
    snapshot.validate()?;
    if snapshot.len() != SNAPSHOT_LEN {
        return invalid(format!("snapshot length {} != {SNAPSHOT_LEN}", snapshot.len()));
    }
    let chans = snapshot.channels_f64();
    let spec = spectrogram(&chans, lo, hi)?;
    let aoa = aoa_features(&chans)?.into_iter().map(|v| v as f32).collect();
    let mut cfo = Vec::with_capacity(CFO_LEN);
    let mut st = Vec::with_capacity(STFT_LEN);
    for ch in &chans {
        cfo.extend(cfo_accumulated(ch).into_iter().map(|v| v as f32));
        let (mag, _, _) = stft(ch, STFT_WINDOW, STFT_HOP)?;
        st.extend(mag.into_iter().map(|m| {
            let db = 10.0 * (m * m / STFT_WINDOW as f64 + DB_EPS).log10();
            minmax_db(db, lo, hi) as f32
        }));
    }
    Ok(FeatureBundle {
        spectrogram: spec,
        iq: iq_planes(snapshot),
        aoa,
        cfo,
        stft: st,
        label: snapshot.label,
        scenario_tag: snapshot.scenario_tag.clone(),
    })
}

/// Standardization statistics, fitted on the training split only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizationSpec {
    pub spec_min: f64,
    pub spec_max: f64,
    /// Per (patch, bin) statistics of the clamped spectrogram, length 4096.
    pub spec_mean: Vec<f64>,
    pub spec_std: Vec<f64>,
    /// Per patch statistics of the clamped STFT map, length 4.
    pub stft_mean: Vec<f64>,
    pub stft_std: Vec<f64>,
    /// Per (patch, I/Q) channel, length 8.
    pub iq_mean: Vec<f64>,
    pub iq_std: Vec<f64>,
    /// Per (patch, feature), length 88.
    pub aoa_mean: Vec<f64>,
    pub aoa_std: Vec<f64>,
    /// Per patch, length 4.
    pub cfo_mean: Vec<f64>,
    pub cfo_std: Vec<f64>,
}

/// Population mean and std of each of `channels` equal blocks of every row.
fn channel_stats<'a>(rows: impl Iterator<Item = &'a [f32]> + Clone, channels: usize) -> (Vec<f64>, Vec<f64>) {
    let mut mean = vec![0.0; channels];
    let mut count = vec![0usize; channels];
    for r in rows.clone() {
        let w = r.len() / channels;
        for c in 0..channels {
            mean[c] += r[c * w..(c + 1) * w].iter().map(|&v| v as f64).sum::<f64>();
            count[c] += w;
        }
    }
    for c in 0..channels {
        mean[c] /= count[c].max(1) as f64;
    }
    let mut var = vec![0.0; channels];
    for r in rows {
        let w = r.len() / channels;
        for c in 0..channels {
            var[c] += r[c * w..(c + 1) * w].iter().map(|&v| (v as f64 - mean[c]).powi(2)).sum::<f64>();
        }
    }
    let std = var.iter().zip(&count).map(|(v, &n)| (v / n.max(1) as f64).sqrt()).collect();
    (mean, std)
}

fn standardize(x: &[f32], mean: &[f64], std: &[f64]) -> Vec<f64> {
    let w = x.len() / mean.len();
    x.iter()
        .enumerate()
        .map(|(i, &v)| {
            let c = i / w;
            (v as f64 - mean[c]) / std[c]
        })
        .collect()
}

impl NormalizationSpec {
    pub fn fit(train: &[FeatureBundle]) -> Result<Self> {
        if train.is_empty() {
            return invalid("cannot fit normalization on an empty split");
        }
        let (iq_mean, iq_std) = channel_stats(train.iter().map(|b| b.iq.as_slice()), IQ_CHANNELS);
        if let Some(c) = iq_std.iter().position(|&s| s <= 0.0 || !s.is_finite()) {
            return Err(Error::InvalidInput(format!("IQ channel {c} is constant on the fit split")));
        }
        let floor = |(mean, mut std): (Vec<f64>, Vec<f64>)| {
            for s in std.iter_mut() {
                if *s < 1e-12 {
                    *s = 1.0;
                }
            }
            (mean, std)
        };
        let (spec_mean, spec_std) = floor(channel_stats(train.iter().map(|b| b.spectrogram.as_slice()), SPEC_LEN));
        let (stft_mean, stft_std) = floor(channel_stats(train.iter().map(|b| b.stft.as_slice()), N_PATCHES));
        let (aoa_mean, aoa_std) = floor(channel_stats(train.iter().map(|b| b.aoa.as_slice()), AOA_LEN));
        let (cfo_mean, cfo_std) = floor(channel_stats(train.iter().map(|b| b.cfo.as_slice()), N_PATCHES));
        Ok(NormalizationSpec {
            spec_min: SPEC_MIN_DB,
            spec_max: SPEC_MAX_DB,
            spec_mean,
            spec_std,
            stft_mean,
            stft_std,
            iq_mean,
            iq_std,
            aoa_mean,
            aoa_std,
            cfo_mean,
            cfo_std,
        })
    }

    /// `(value - mean) / std` per (patch, I/Q) channel of an `8 x N` plane stack.
    pub fn apply_iq(&self, iq: &[f32]) -> Vec<f64> {
        standardize(iq, &self.iq_mean, &self.iq_std)
    }

    /// Per-bin standardization of the clamped spectrogram.
    pub fn apply_spec(&self, spec: &[f32]) -> Vec<f64> {
        standardize(spec, &self.spec_mean, &self.spec_std)
    }

    pub fn apply_stft(&self, stft: &[f32]) -> Vec<f64> {
        standardize(stft, &self.stft_mean, &self.stft_std)
    }

    pub fn apply_aoa(&self, aoa: &[f32]) -> Vec<f64> {
        standardize(aoa, &self.aoa_mean, &self.aoa_std)
    }

    pub fn apply_cfo(&self, cfo: &[f32]) -> Vec<f64> {
        standardize(cfo, &self.cfo_mean, &self.cfo_std)
    }
}

/// Standardized `8 x N` IQ planes of a snapshot.
pub fn normalize_iq(snapshot: &IQSnapshot, norm: &NormalizationSpec) -> Vec<f64> {
    norm.apply_iq(&iq_planes(snapshot))
}
