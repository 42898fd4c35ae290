//! Model definitions, batching, prediction and checkpoint files.

pub mod batch;
pub mod common;
pub mod fusion;
pub mod mcaff;

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use jamloc_nn::checkpoint::{load_into, read_tensors, write_tensors};
use jamloc_nn::{Float, Graph, Mode, ParamStore};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use batch::{Batch, DispNorm, Inputs};
pub use common::{Head, Outputs};
pub use fusion::{Branches, FusionConfig, FusionModel};
pub use mcaff::{mcaff_presets, preset_name, McaffConfig, McaffModel, McaffPath, SharedAttention};

use crate::dsp::features::{FeatureBundle, NormalizationSpec};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum ModelConfig {
    #[serde(rename = "fusion")]
    Fusion(FusionConfig),
    #[serde(rename = "mcaff")]
    Mcaff(McaffConfig),
}

impl ModelConfig {
    /// Tag written into checkpoint metadata.
    pub fn kind_tag(&self) -> &'static str {
        match self {
            ModelConfig::Fusion(_) => "FUSION",
            ModelConfig::Mcaff(_) => "MCAFF",
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            ModelConfig::Fusion(c) => c.validate(),
            ModelConfig::Mcaff(c) => c.validate(),
        }
    }
}

/// Either network, parameters held separately in a [`ParamStore`].
#[derive(Debug, Clone)]
pub enum Net {
    Fusion(FusionModel),
    Mcaff(McaffModel),
}

impl Net {
    pub fn build<T: Float, R: Rng + ?Sized>(cfg: &ModelConfig, store: &mut ParamStore<T>, rng: &mut R) -> Result<Self> {
        Ok(match cfg {
            ModelConfig::Fusion(c) => Net::Fusion(FusionModel::new(c.clone(), store, rng)?),
            ModelConfig::Mcaff(c) => Net::Mcaff(McaffModel::new(c.clone(), store, rng)?),
        })
    }

    pub fn inputs(&self) -> Inputs {
        match self {
            Net::Fusion(m) => m.inputs(),
            Net::Mcaff(m) => m.inputs(),
        }
    }

    pub fn forward<T: Float, R: Rng + ?Sized>(&self, g: &mut Graph<'_, T>, batch: &Batch<T>, mode: Mode, rng: &mut R) -> Result<Outputs> {
        match self {
            Net::Fusion(m) => m.forward(g, batch, mode, rng),
            Net::Mcaff(m) => m.forward(g, batch, mode, rng),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    /// Metres, jammer minus antenna.
    pub disp: [f64; 3],
    pub angle_raw: [f64; 2],
    pub alpha_deg: f64,
    pub beta_deg: f64,
    pub class_logits: Option<Vec<f64>>,
    pub subclass_logits: Option<Vec<f64>>,
}

impl Prediction {
    pub fn class(&self) -> Option<usize> {
        self.class_logits.as_deref().map(argmax)
    }

    pub fn subclass(&self) -> Option<usize> {
        self.subclass_logits.as_deref().map(argmax)
    }
}

fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Reads predictions for every row of a forward pass.
pub fn decode<T: Float>(g: &Graph<'_, T>, out: &Outputs, disp_norm: &DispNorm) -> Vec<Prediction> {
    let disp = g.value(out.disp);
    let angle = g.value(out.angle);
    let n = angle.len() / 2;
    let rows = |id: Option<jamloc_nn::NodeId>, i: usize| {
        id.map(|id| {
            let v = g.value(id);
            let k = v.len() / n;
            v[i * k..(i + 1) * k].iter().map(|x| x.as_f64()).collect::<Vec<f64>>()
        })
    };
    (0..n)
        .map(|i| {
            let d = |j: usize| disp[i * 3 + j].as_f64() * disp_norm.scale + disp_norm.offset[j];
            let a = [angle[i * 2].as_f64(), angle[i * 2 + 1].as_f64()];
            Prediction {
                disp: [d(0), d(1), d(2)],
                angle_raw: a,
                alpha_deg: 180.0 * a[0],
                beta_deg: 90.0 * a[1],
                class_logits: rows(out.class, i),
                subclass_logits: rows(out.subclass, i),
            }
        })
        .collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Meta {
    kind: String,
    config: ModelConfig,
    norm: NormalizationSpec,
    disp_norm: DispNorm,
    #[serde(default)]
    train_seed: Option<u64>,
}

pub const META_MAGIC: &[u8; 4] = b"META";

/// A network with its parameters and the statistics needed for inference.
#[derive(Debug, Clone)]
pub struct TrainedModel {
    pub config: ModelConfig,
    pub net: Net,
    pub store: ParamStore<f32>,
    pub norm: NormalizationSpec,
    pub disp_norm: DispNorm,
    /// Seed of the training run that produced the parameters.
    pub train_seed: Option<u64>,
}

impl TrainedModel {
    pub fn new(config: ModelConfig, norm: NormalizationSpec, disp_norm: DispNorm, seed: u64) -> Result<Self> {
        let mut store = ParamStore::new();
        let net = Net::build(&config, &mut store, &mut ChaCha8Rng::seed_from_u64(seed))?;
        Ok(TrainedModel { config, net, store, norm, disp_norm, train_seed: None })
    }

    /// Number of interference classes the model predicts, if any.
    pub fn class_count(&self) -> Option<usize> {
        match &self.config {
            ModelConfig::Fusion(c) => c.with_classifier.then_some(c.n_classes),
            ModelConfig::Mcaff(c) => Some(c.n_classes),
        }
    }

    pub fn subclass_count(&self) -> Option<usize> {
        match &self.config {
            ModelConfig::Fusion(_) => None,
            ModelConfig::Mcaff(c) => Some(c.n_subclasses),
        }
    }

    /// Eval-mode predictions in input order.
    pub fn predict(&self, items: &[&FeatureBundle], batch_size: usize) -> Result<Vec<Prediction>> {
        let mut out = Vec::with_capacity(items.len());
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for chunk in items.chunks(batch_size.max(1)) {
            let batch = Batch::<f32>::build(chunk, &self.norm, self.net.inputs())?;
            let mut g = Graph::new(&self.store);
            let o = self.net.forward(&mut g, &batch, Mode::Eval, &mut rng)?;
            out.extend(decode(&g, &o, &self.disp_norm));
        }
        Ok(out)
    }

    pub fn write<W: Write>(&self, out: &mut W) -> Result<()> {
        write_tensors(out, self.store.tensors())?;
        let meta = Meta {
            kind: self.config.kind_tag().to_string(),
            config: self.config.clone(),
            norm: self.norm.clone(),
            disp_norm: self.disp_norm,
            train_seed: self.train_seed,
        };
        let json = serde_json::to_vec(&meta)?;
        out.write_all(META_MAGIC)?;
        out.write_all(&(json.len() as u32).to_le_bytes())?;
        out.write_all(&json)?;
        Ok(())
    }

    pub fn read<R: Read>(input: &mut R) -> Result<Self> {
        let tensors = read_tensors(input)?;
        let mut head = [0u8; 8];
        input
            .read_exact(&mut head)
            .map_err(|_| Error::InvalidInput("checkpoint lacks its metadata block".into()))?;
        if &head[..4] != META_MAGIC {
            return Err(Error::InvalidInput("checkpoint metadata block has a bad tag".into()));
        }
        let len = u32::from_le_bytes(head[4..].try_into().unwrap()) as usize;
        let mut json = vec![0u8; len];
        input
            .read_exact(&mut json)
            .map_err(|_| Error::InvalidInput("checkpoint metadata truncated".into()))?;
        let meta: Meta = serde_json::from_slice(&json)?;
        if meta.kind != meta.config.kind_tag() {
            return Err(Error::InvalidInput(format!("model kind {} does not match its config", meta.kind)));
        }
        let mut m = TrainedModel::new(meta.config, meta.norm, meta.disp_norm, 0)?;
        m.train_seed = meta.train_seed;
        load_into(&mut m.store, &tensors)?;
        Ok(m)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut f = BufWriter::new(File::create(path)?);
        self.write(&mut f)?;
        f.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::read(&mut BufReader::new(File::open(path)?))
    }
}
