use jamloc_nn::{Float, Tensor};
use serde::{Deserialize, Serialize};

use crate::dsp::features::{FeatureBundle, NormalizationSpec, IQ_CHANNELS, SNAPSHOT_LEN, STFT_FRAMES, STFT_WINDOW};
use crate::dsp::N_AOA_FEATURES;
use crate::error::{invalid, Result};
use crate::sigsim::N_PATCHES;

/// Which representations a model consumes.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Inputs {
    pub spec: bool,
    pub iq: bool,
    pub aoa: bool,
    pub cfo: bool,
    pub stft: bool,
}

/// Affine map between the network's displacement output and metres:
/// `metres = raw * scale + offset`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DispNorm {
    pub offset: [f64; 3],
    pub scale: f64,
}

impl Default for DispNorm {
    fn default() -> Self {
        DispNorm { offset: [0.0; 3], scale: 1.0 }
    }
}

impl DispNorm {
    /// Per-axis mean and the pooled standard deviation of the labels.
    pub fn fit(train: &[FeatureBundle]) -> Self {
        if train.is_empty() {
            return Self::default();
        }
        let n = train.len() as f64;
        let mut offset = [0.0; 3];
        for b in train {
            for (o, d) in offset.iter_mut().zip(b.label.disp) {
                *o += d / n;
            }
        }
        let var = train
            .iter()
            .map(|b| (0..3).map(|i| (b.label.disp[i] - offset[i]).powi(2)).sum::<f64>())
            .sum::<f64>()
            / (3.0 * n);
        let scale = if var.sqrt() > 1e-6 { var.sqrt() } else { 1.0 };
        DispNorm { offset, scale }
    }
}

/// Model-ready tensors for a mini-batch; absent inputs are `None`.
#[derive(Debug, Clone)]
pub struct Batch<T> {
    pub n: usize,
    /// `[B, 4, 32, 32]`
    pub spec: Option<Tensor<T>>,
    /// `[B, 8, 1024]`
    pub iq: Option<Tensor<T>>,
    /// `[B, 22, 4]`: features as channels, patches as positions.
    pub aoa: Option<Tensor<T>>,
    /// `[B, 4, 1024]`
    pub cfo: Option<Tensor<T>>,
    /// `[B, 4, 128, 15]`
    pub stft: Option<Tensor<T>>,
    /// Displacement in metres, row-major `[B, 3]`.
    pub disp: Vec<f64>,
    pub alpha_deg: Vec<f64>,
    pub beta_deg: Vec<f64>,
    pub class: Vec<usize>,
    pub subclass: Vec<usize>,
}

fn stack<T: Float>(shape: Vec<usize>, rows: impl Iterator<Item = Vec<f64>>) -> Result<Tensor<T>> {
    let data: Vec<T> = rows.flat_map(|r| r.into_iter().map(T::from_f64)).collect();
    Ok(Tensor::new(shape, data)?)
}

impl<T: Float> Batch<T> {
    pub fn build(items: &[&FeatureBundle], norm: &NormalizationSpec, need: Inputs) -> Result<Self> {
        if items.is_empty() {
            return invalid("empty batch");
        }
        let n = items.len();
        let spec = if need.spec {
            Some(stack(vec![n, N_PATCHES, 32, 32], items.iter().map(|b| norm.apply_spec(&b.spectrogram)))?)
        } else {
            None
        };
        let iq = if need.iq {
            Some(stack(vec![n, IQ_CHANNELS, SNAPSHOT_LEN], items.iter().map(|b| norm.apply_iq(&b.iq)))?)
        } else {
            None
        };
        let aoa = if need.aoa {
            let rows = items.iter().map(|b| {
                let z = norm.apply_aoa(&b.aoa);
                let mut t = vec![0.0; z.len()];
                for p in 0..N_PATCHES {
                    for f in 0..N_AOA_FEATURES {
                        t[f * N_PATCHES + p] = z[p * N_AOA_FEATURES + f];
                    }
                }
                t
            });
            Some(stack(vec![n, N_AOA_FEATURES, N_PATCHES], rows)?)
        } else {
            None
        };
        let cfo = if need.cfo {
            Some(stack(vec![n, N_PATCHES, SNAPSHOT_LEN], items.iter().map(|b| norm.apply_cfo(&b.cfo)))?)
        } else {
            None
        };
        let stft = if need.stft {
            Some(stack(vec![n, N_PATCHES, STFT_WINDOW, STFT_FRAMES], items.iter().map(|b| norm.apply_stft(&b.stft)))?)
        } else {
            None
        };
        Ok(Batch {
            n,
            spec,
            iq,
            aoa,
            cfo,
            stft,
            disp: items.iter().flat_map(|b| b.label.disp).collect(),
            alpha_deg: items.iter().map(|b| b.label.alpha_deg).collect(),
            beta_deg: items.iter().map(|b| b.label.beta_deg).collect(),
            class: items.iter().map(|b| b.label.class as usize).collect(),
            subclass: items.iter().map(|b| b.label.subclass as usize).collect(),
        })
    }
}
