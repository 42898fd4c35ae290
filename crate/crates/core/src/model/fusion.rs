//! Three-branch fusion network: spectrogram CNN, IQ temporal convolution
//! network and AoA-feature encoder, concatenated and fed to per-task heads.

use jamloc_nn::{Float, Graph, Layer, LayerSpec, Mode, NodeId, ParamStore};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::batch::{Batch, Inputs};
use super::common::{check_dropout, relu_stack, Head, Outputs};
use crate::dsp::features::IQ_CHANNELS;
use crate::dsp::N_AOA_FEATURES;
use crate::error::{invalid, Error, Result};
use crate::sigsim::N_PATCHES;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Branches {
    pub spec: bool,
    pub iq: bool,
    pub aoa: bool,
}

impl Branches {
    pub const ALL: Branches = Branches { spec: true, iq: true, aoa: true };
    pub const SPEC_ONLY: Branches = Branches { spec: true, iq: false, aoa: false };
    pub const IQ_ONLY: Branches = Branches { spec: false, iq: true, aoa: false };
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FusionConfig {
    pub spec_branch_dim: usize,
    pub iq_branch_dim: usize,
    pub aoa_branch_dim: usize,
    pub head_hidden: usize,
    pub dropout_pre_concat: f64,
    pub dropout_post_head: f64,
    pub with_classifier: bool,
    pub n_classes: usize,
    pub branches: Branches,
    /// Output channels of the four stride-2 conv blocks.
    pub spec_channels: Vec<usize>,
    /// Kernel and stride of the non-overlapping IQ stem convolution.
    pub iq_stem_stride: usize,
    pub iq_stem_channels: usize,
    /// One residual causal block per entry; the last entry must equal `iq_branch_dim`.
    pub iq_channels: Vec<usize>,
    pub iq_dilations: Vec<usize>,
    pub iq_kernel: usize,
    /// Block indices followed by a 2x average pool over time.
    pub iq_pool_after: Vec<usize>,
    pub aoa_channels: usize,
}

impl Default for FusionConfig {
    fn default() -> Self {
        FusionConfig {
            spec_branch_dim: 128,
            iq_branch_dim: 128,
            aoa_branch_dim: 32,
            head_hidden: 512,
            dropout_pre_concat: 0.5,
            dropout_post_head: 0.0,
            with_classifier: false,
            n_classes: 6,
            branches: Branches::ALL,
            spec_channels: vec![16, 32, 64, 128],
            iq_stem_stride: 8,
            iq_stem_channels: 32,
            iq_channels: vec![32, 64, 64, 128, 128],
            iq_dilations: vec![1, 2, 4, 8, 16],
            iq_kernel: 3,
            iq_pool_after: vec![1, 3],
            aoa_channels: 32,
        }
    }
}

impl FusionConfig {
    /// Small variant used by gradient checks.
    pub fn tiny() -> Self {
        FusionConfig {
            spec_branch_dim: 8,
            iq_branch_dim: 8,
            aoa_branch_dim: 4,
            head_hidden: 6,
            dropout_pre_concat: 0.0,
            dropout_post_head: 0.0,
            spec_channels: vec![2, 3, 3, 4],
            iq_stem_stride: 32,
            iq_stem_channels: 4,
            iq_channels: vec![4, 8],
            iq_dilations: vec![1, 2],
            iq_kernel: 2,
            iq_pool_after: vec![0],
            aoa_channels: 3,
            ..Default::default()
        }
    }

    pub fn fused_dim(&self) -> usize {
        let b = self.branches;
        (b.spec as usize) * self.spec_branch_dim + (b.iq as usize) * self.iq_branch_dim + (b.aoa as usize) * self.aoa_branch_dim
    }

    pub fn validate(&self) -> Result<()> {
        check_dropout(self.dropout_pre_concat, "pre-concat")?;
        check_dropout(self.dropout_post_head, "post-head")?;
        if self.fused_dim() == 0 {
            return invalid("fusion model needs at least one branch");
        }
        if self.spec_channels.len() != 4 {
            return invalid("spec_channels must list four conv blocks");
        }
        if self.iq_channels.is_empty() || self.iq_channels.len() != self.iq_dilations.len() {
            return invalid("iq_channels and iq_dilations must be non-empty and equally long");
        }
        if self.iq_channels.last() != Some(&self.iq_branch_dim) {
            return invalid("last iq block width must equal iq_branch_dim");
        }
        if self.iq_stem_stride == 0 || 1024 % self.iq_stem_stride != 0 {
            return invalid("iq_stem_stride must divide the snapshot length");
        }
        let mut len = 1024 / self.iq_stem_stride;
        for &i in &self.iq_pool_after {
            if i >= self.iq_channels.len() || len % 2 != 0 {
                return invalid("iq_pool_after entries must name blocks and keep the length even");
            }
            len /= 2;
        }
        if self.with_classifier && self.n_classes < 2 {
            return invalid("classifier needs at least two classes");
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
struct IqBlock {
    conv: Layer,
    proj: Option<Layer>,
    pool: bool,
}

#[derive(Debug, Clone)]
pub struct FusionModel {
    cfg: FusionConfig,
    spec_convs: Vec<Layer>,
    spec_linear: Option<Layer>,
    iq_stem: Option<Layer>,
    iq_blocks: Vec<IqBlock>,
    aoa_conv: Option<Layer>,
    aoa_linear: Option<Layer>,
    disp_head: Head,
    angle_head: Head,
    class_head: Option<Head>,
}

impl FusionModel {
    pub fn new<T: Float, R: Rng + ?Sized>(cfg: FusionConfig, store: &mut ParamStore<T>, rng: &mut R) -> Result<Self> {
        cfg.validate()?;
        let b = cfg.branches;
        let mut spec_convs = Vec::new();
        let mut spec_linear = None;
        if b.spec {
            let mut c_in = N_PATCHES;
            for (i, &c) in cfg.spec_channels.iter().enumerate() {
                let spec = LayerSpec::Conv2D { in_ch: c_in, out_ch: c, kernel: (3, 3), stride: (2, 2), padding: (1, 1) };
                spec_convs.push(Layer::new(spec, store, &format!("spec.conv{i}"), rng)?);
                c_in = c;
            }
            let spec = LayerSpec::Dense { input: c_in, output: cfg.spec_branch_dim };
            spec_linear = Some(Layer::new(spec, store, "spec.linear", rng)?);
        }

        let mut iq_stem = None;
        let mut iq_blocks = Vec::new();
        if b.iq {
            let s = cfg.iq_stem_stride;
            let stem = LayerSpec::Conv1D {
                in_ch: IQ_CHANNELS,
                out_ch: cfg.iq_stem_channels,
                kernel: s,
                stride: s,
                dilation: 1,
                pad_left: 0,
                pad_right: 0,
            };
            iq_stem = Some(Layer::new(stem, store, "iq.stem", rng)?);
            let mut c_in = cfg.iq_stem_channels;
            for (i, (&c, &d)) in cfg.iq_channels.iter().zip(&cfg.iq_dilations).enumerate() {
                let conv = Layer::new(LayerSpec::causal_conv1d(c_in, c, cfg.iq_kernel, d), store, &format!("iq.block{i}.conv"), rng)?;
                let proj = if c != c_in {
                    Some(Layer::new(LayerSpec::causal_conv1d(c_in, c, 1, 1), store, &format!("iq.block{i}.proj"), rng)?)
                } else {
                    None
                };
                iq_blocks.push(IqBlock { conv, proj, pool: cfg.iq_pool_after.contains(&i) });
                c_in = c;
            }
        }

        let (mut aoa_conv, mut aoa_linear) = (None, None);
        if b.aoa {
            let conv = LayerSpec::Conv1D {
                in_ch: N_AOA_FEATURES,
                out_ch: cfg.aoa_channels,
                kernel: 1,
                stride: 1,
                dilation: 1,
                pad_left: 0,
                pad_right: 0,
            };
            aoa_conv = Some(Layer::new(conv, store, "aoa.conv", rng)?);
            let lin = LayerSpec::Dense { input: cfg.aoa_channels * N_PATCHES, output: cfg.aoa_branch_dim };
            aoa_linear = Some(Layer::new(lin, store, "aoa.linear", rng)?);
        }

        let fused = cfg.fused_dim();
        let disp_head = Head::new(store, "head.disp", fused, cfg.head_hidden, 3, cfg.dropout_post_head, rng)?;
        let angle_head = Head::new(store, "head.angle", fused, cfg.head_hidden, 2, cfg.dropout_post_head, rng)?;
        let class_head = if cfg.with_classifier {
            Some(Head::new(store, "head.class", fused, cfg.head_hidden, cfg.n_classes, cfg.dropout_post_head, rng)?)
        } else {
            None
        };
        Ok(FusionModel {
            cfg,
            spec_convs,
            spec_linear,
            iq_stem,
            iq_blocks,
            aoa_conv,
            aoa_linear,
            disp_head,
            angle_head,
            class_head,
        })
    }

    pub fn config(&self) -> &FusionConfig {
        &self.cfg
    }

    pub fn inputs(&self) -> Inputs {
        let b = self.cfg.branches;
        Inputs { spec: b.spec, iq: b.iq, aoa: b.aoa, ..Default::default() }
    }

    /// `[B, 4, 32, 32]` -> `[B, spec_branch_dim]`.
    pub fn spec_encoder<T: Float, R: Rng + ?Sized>(&self, g: &mut Graph<'_, T>, x: NodeId, mode: Mode, rng: &mut R) -> Result<NodeId> {
        let lin = self.spec_linear.as_ref().ok_or_else(|| Error::Config("spectrogram branch disabled".into()))?;
        let h = relu_stack(g, &self.spec_convs, x, mode, rng)?;
        let h = g.global_avg_pool(h)?;
        Ok(lin.forward(g, h, mode, rng)?)
    }

    /// `[B, 8, 1024]` -> `[B, iq_branch_dim]`.
    pub fn iq_encoder<T: Float, R: Rng + ?Sized>(&self, g: &mut Graph<'_, T>, x: NodeId, mode: Mode, rng: &mut R) -> Result<NodeId> {
        let stem = self.iq_stem.as_ref().ok_or_else(|| Error::Config("IQ branch disabled".into()))?;
        let h = stem.forward(g, x, mode, rng)?;
        let mut h = g.relu(h)?;
        for blk in &self.iq_blocks {
            let y = blk.conv.forward(g, h, mode, rng)?;
            let y = g.relu(y)?;
            let skip = match &blk.proj {
                Some(p) => p.forward(g, h, mode, rng)?,
                None => h,
            };
            h = g.add(y, skip)?;
            if blk.pool {
                h = g.avg_pool1d(h, 2)?;
            }
        }
        Ok(g.global_avg_pool(h)?)
    }

    /// `[B, 22, 4]` -> `[B, aoa_branch_dim]`.
    pub fn aoa_encoder<T: Float, R: Rng + ?Sized>(&self, g: &mut Graph<'_, T>, x: NodeId, mode: Mode, rng: &mut R) -> Result<NodeId> {
        let (Some(conv), Some(lin)) = (&self.aoa_conv, &self.aoa_linear) else {
            return Err(Error::Config("AoA branch disabled".into()));
        };
        let h = conv.forward(g, x, mode, rng)?;
        let h = g.relu(h)?;
        let h = g.flatten(h)?;
        Ok(lin.forward(g, h, mode, rng)?)
    }

    pub fn forward<T: Float, R: Rng + ?Sized>(&self, g: &mut Graph<'_, T>, batch: &Batch<T>, mode: Mode, rng: &mut R) -> Result<Outputs> {
        let missing = |what: &str| Error::InvalidInput(format!("batch lacks the {what} input"));
        let p = self.cfg.dropout_pre_concat;
        let mut parts = Vec::new();
        if self.cfg.branches.spec {
            let x = g.input(batch.spec.clone().ok_or_else(|| missing("spectrogram"))?);
            let h = self.spec_encoder(g, x, mode, rng)?;
            parts.push(g.dropout(h, p, mode, rng)?);
        }
        if self.cfg.branches.iq {
            let x = g.input(batch.iq.clone().ok_or_else(|| missing("IQ"))?);
            let h = self.iq_encoder(g, x, mode, rng)?;
            parts.push(g.dropout(h, p, mode, rng)?);
        }
        if self.cfg.branches.aoa {
            let x = g.input(batch.aoa.clone().ok_or_else(|| missing("AoA"))?);
            let h = self.aoa_encoder(g, x, mode, rng)?;
            parts.push(g.dropout(h, p, mode, rng)?);
        }
        let fused = if parts.len() == 1 { parts[0] } else { g.concat(&parts)? };
        let disp = self.disp_head.forward(g, fused, mode, rng)?;
        let a = self.angle_head.forward(g, fused, mode, rng)?;
        let angle = g.tanh(a)?;
        let class = match &self.class_head {
            Some(h) => Some(h.forward(g, fused, mode, rng)?),
            None => None,
        };
        Ok(Outputs { disp, angle, class, subclass: None })
    }
}
