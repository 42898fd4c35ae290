//! Multi-channel attentive feature fusion baseline over IQ, FFT, CFO and
//! STFT representations.

use jamloc_nn::{Float, Graph, Layer, LayerSpec, Mode, NodeId, ParamStore};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::batch::{Batch, Inputs};
use super::common::{relu_stack, Head, Outputs};
use crate::dsp::features::IQ_CHANNELS;
use crate::error::{invalid, Error, Result};
use crate::sigsim::N_PATCHES;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum McaffPath {
    #[serde(rename = "IQ")]
    Iq,
    #[serde(rename = "FFT")]
    Fft,
    #[serde(rename = "CFO")]
    Cfo,
    #[serde(rename = "STFT")]
    Stft,
}

impl McaffPath {
    pub fn name(self) -> &'static str {
        match self {
            McaffPath::Iq => "IQ",
            McaffPath::Fft => "FFT",
            McaffPath::Cfo => "CFO",
            McaffPath::Stft => "STFT",
        }
    }
}

/// The six path subsets compared in the ablation.
pub fn mcaff_presets() -> Vec<Vec<McaffPath>> {
    use McaffPath::*;
    vec![vec![Iq], vec![Fft], vec![Cfo], vec![Stft], vec![Iq, Cfo, Stft], vec![Iq, Fft, Cfo, Stft]]
}

pub fn preset_name(paths: &[McaffPath]) -> String {
    paths.iter().map(|p| p.name()).collect::<Vec<_>>().join("+")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct McaffConfig {
    pub enabled_paths: Vec<McaffPath>,
    pub path_feature_dim: usize,
    pub stem_channels: usize,
    pub attention_reduction: usize,
    pub cardinality: usize,
    pub bottleneck: usize,
    pub head_hidden: usize,
    pub n_classes: usize,
    pub n_subclasses: usize,
}

impl Default for McaffConfig {
    fn default() -> Self {
        McaffConfig {
            enabled_paths: vec![McaffPath::Iq, McaffPath::Fft, McaffPath::Cfo, McaffPath::Stft],
            path_feature_dim: 64,
            stem_channels: 16,
            attention_reduction: 4,
            cardinality: 8,
            bottleneck: 64,
            head_hidden: 512,
            n_classes: 6,
            n_subclasses: 18,
        }
    }
}

impl McaffConfig {
    pub fn tiny() -> Self {
        McaffConfig {
            path_feature_dim: 8,
            stem_channels: 2,
            attention_reduction: 4,
            cardinality: 2,
            bottleneck: 4,
            head_hidden: 5,
            n_classes: 3,
            n_subclasses: 4,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.enabled_paths.is_empty() {
            return invalid("McAFF needs at least one enabled path");
        }
        let mut seen = self.enabled_paths.clone();
        seen.sort();
        seen.dedup();
        if seen.len() != self.enabled_paths.len() {
            return invalid("McAFF paths must not repeat");
        }
        let c = self.path_feature_dim;
        if self.attention_reduction == 0 || c % self.attention_reduction != 0 {
            return invalid("path_feature_dim must be divisible by attention_reduction");
        }
        if self.cardinality == 0 || self.bottleneck % self.cardinality != 0 {
            return invalid("bottleneck must be divisible by cardinality");
        }
        if self.n_classes < 2 || self.n_subclasses < 2 {
            return invalid("McAFF needs at least two classes and subclasses");
        }
        Ok(())
    }
}

/// Squeeze-excitation channel gate whose parameters are shared by every path.
#[derive(Debug, Clone)]
pub struct SharedAttention {
    pub squeeze: Layer,
    pub excite: Layer,
}

impl SharedAttention {
    pub fn forward<T: Float, R: Rng + ?Sized>(&self, g: &mut Graph<'_, T>, x: NodeId, mode: Mode, rng: &mut R) -> Result<NodeId> {
        let s = g.global_avg_pool(x)?;
        let s = self.squeeze.forward(g, s, mode, rng)?;
        let s = g.relu(s)?;
        let s = self.excite.forward(g, s, mode, rng)?;
        let s = g.sigmoid(s)?;
        Ok(g.channel_scale(x, s)?)
    }
}

#[derive(Debug, Clone)]
struct Stem {
    path: McaffPath,
    convs: Vec<Layer>,
}

#[derive(Debug, Clone)]
pub struct McaffModel {
    cfg: McaffConfig,
    stems: Vec<Stem>,
    attention: SharedAttention,
    reduce: Layer,
    grouped: Layer,
    expand: Layer,
    disp_head: Head,
    angle_head: Head,
    class_head: Head,
    subclass_head: Head,
}

fn conv(in_ch: usize, out_ch: usize, stride: (usize, usize)) -> LayerSpec {
    LayerSpec::Conv2D { in_ch, out_ch, kernel: (3, 3), stride, padding: (1, 1) }
}

/// Two strided 3x3 convolutions mapping a path's input to `[C, 8, 8]`.
pub fn stem_specs(path: McaffPath, stem: usize, c: usize) -> [LayerSpec; 2] {
    match path {
        McaffPath::Iq => [conv(IQ_CHANNELS, stem, (2, 2)), conv(stem, c, (2, 2))],
        McaffPath::Fft | McaffPath::Cfo => [conv(N_PATCHES, stem, (2, 2)), conv(stem, c, (2, 2))],
        // 128 x 15 -> 32 x 8 -> 8 x 8
        McaffPath::Stft => [conv(N_PATCHES, stem, (4, 2)), conv(stem, c, (4, 1))],
    }
}

impl McaffModel {
    pub fn new<T: Float, R: Rng + ?Sized>(cfg: McaffConfig, store: &mut ParamStore<T>, rng: &mut R) -> Result<Self> {
        cfg.validate()?;
        let c = cfg.path_feature_dim;
        let mut stems = Vec::new();
        for &path in &cfg.enabled_paths {
            let convs = stem_specs(path, cfg.stem_channels, c)
                .iter()
                .enumerate()
                .map(|(i, s)| Layer::new(*s, store, &format!("stem.{}.conv{i}", path.name()), rng))
                .collect::<std::result::Result<Vec<_>, _>>()?;
            stems.push(Stem { path, convs });
        }
        let r = c / cfg.attention_reduction;
        let attention = SharedAttention {
            squeeze: Layer::new(LayerSpec::Dense { input: c, output: r }, store, "attention.squeeze", rng)?,
            excite: Layer::new(LayerSpec::Dense { input: r, output: c }, store, "attention.excite", rng)?,
        };
        let width = c * stems.len();
        let k = cfg.bottleneck;
        let one = |i, o| LayerSpec::Conv2D { in_ch: i, out_ch: o, kernel: (1, 1), stride: (1, 1), padding: (0, 0) };
        let reduce = Layer::new(one(width, k), store, "block.reduce", rng)?;
        let grouped = Layer::new(
            LayerSpec::GroupedConv2D {
                in_ch: k,
                out_ch: k,
                kernel: (3, 3),
                stride: (1, 1),
                padding: (1, 1),
                groups: cfg.cardinality,
            },
            store,
            "block.grouped",
            rng,
        )?;
        let expand = Layer::new(one(k, width), store, "block.expand", rng)?;
        let h = cfg.head_hidden;
        Ok(McaffModel {
            disp_head: Head::new(store, "head.disp", width, h, 3, 0.0, rng)?,
            angle_head: Head::new(store, "head.angle", width, h, 2, 0.0, rng)?,
            class_head: Head::new(store, "head.class", width, h, cfg.n_classes, 0.0, rng)?,
            subclass_head: Head::new(store, "head.subclass", width, h, cfg.n_subclasses, 0.0, rng)?,
            cfg,
            stems,
            attention,
            reduce,
            grouped,
            expand,
        })
    }

    pub fn config(&self) -> &McaffConfig {
        &self.cfg
    }

    pub fn attention(&self) -> &SharedAttention {
        &self.attention
    }

    /// The grouped 3x3 convolution of the fusion block.
    pub fn grouped_block(&self) -> &Layer {
        &self.grouped
    }

    pub fn inputs(&self) -> Inputs {
        let mut i = Inputs::default();
        for s in &self.stems {
            match s.path {
                McaffPath::Iq => i.iq = true,
                McaffPath::Fft => i.spec = true,
                McaffPath::Cfo => i.cfo = true,
                McaffPath::Stft => i.stft = true,
            }
        }
        i
    }

    fn path_input<T: Float>(g: &mut Graph<'_, T>, path: McaffPath, batch: &Batch<T>) -> Result<NodeId> {
        let missing = || Error::InvalidInput(format!("batch lacks the {} input", path.name()));
        let n = batch.n;
        Ok(match path {
            McaffPath::Iq => {
                let x = g.input(batch.iq.clone().ok_or_else(missing)?);
                g.reshape(x, vec![n, IQ_CHANNELS, 32, 32])?
            }
            McaffPath::Fft => g.input(batch.spec.clone().ok_or_else(missing)?),
            McaffPath::Cfo => {
                let x = g.input(batch.cfo.clone().ok_or_else(missing)?);
                g.reshape(x, vec![n, N_PATCHES, 32, 32])?
            }
            McaffPath::Stft => g.input(batch.stft.clone().ok_or_else(missing)?),
        })
    }

    /// Stem and shared attention for one path: `[B, C, 8, 8]`.
    pub fn path_features<T: Float, R: Rng + ?Sized>(&self, g: &mut Graph<'_, T>, path: McaffPath, batch: &Batch<T>, mode: Mode, rng: &mut R) -> Result<NodeId> {
        let stem = self
            .stems
            .iter()
            .find(|s| s.path == path)
            .ok_or_else(|| Error::Config(format!("path {} is disabled", path.name())))?;
        let x = Self::path_input(g, path, batch)?;
        let h = relu_stack(g, &stem.convs, x, mode, rng)?;
        self.attention.forward(g, h, mode, rng)
    }

    pub fn forward<T: Float, R: Rng + ?Sized>(&self, g: &mut Graph<'_, T>, batch: &Batch<T>, mode: Mode, rng: &mut R) -> Result<Outputs> {
        let mut parts = Vec::new();
        for s in &self.stems {
            parts.push(self.path_features(g, s.path, batch, mode, rng)?);
        }
        let x = if parts.len() == 1 { parts[0] } else { g.concat(&parts)? };
        let h = self.reduce.forward(g, x, mode, rng)?;
        let h = g.relu(h)?;
        let h = self.grouped.forward(g, h, mode, rng)?;
        let h = g.relu(h)?;
        let h = self.expand.forward(g, h, mode, rng)?;
        let h = g.add(h, x)?;
        let h = g.relu(h)?;
        let pooled = g.global_avg_pool(h)?;
        let disp = self.disp_head.forward(g, pooled, mode, rng)?;
        let a = self.angle_head.forward(g, pooled, mode, rng)?;
        let angle = g.tanh(a)?;
        let class = self.class_head.forward(g, pooled, mode, rng)?;
        let subclass = self.subclass_head.forward(g, pooled, mode, rng)?;
        Ok(Outputs { disp, angle, class: Some(class), subclass: Some(subclass) })
    }
}
