use rand::Rng;

use crate::error::{NnError, Result};
use crate::float::Float;
use crate::graph::{Graph, Mode, NodeId, ParamId, ParamStore};
use crate::kernels::{ConvGeom, ConvParams};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LayerSpec {
    Dense {
        input: usize,
        output: usize,
    },
    /// Input `[B, C, L]`. `pad_left`/`pad_right` are zero-padding in samples.
    Conv1D {
        in_ch: usize,
        out_ch: usize,
        kernel: usize,
        stride: usize,
        dilation: usize,
        pad_left: usize,
        pad_right: usize,
    },
    /// Input `[B, C, H, W]`, symmetric padding `(ph, pw)`.
    Conv2D {
        in_ch: usize,
        out_ch: usize,
        kernel: (usize, usize),
        stride: (usize, usize),
        padding: (usize, usize),
    },
    GroupedConv2D {
        in_ch: usize,
        out_ch: usize,
        kernel: (usize, usize),
        stride: (usize, usize),
        padding: (usize, usize),
        groups: usize,
    },
    ReLU,
    Tanh,
    Sigmoid,
    Dropout {
        p: f64,
    },
    GlobalAvgPool,
    /// Non-overlapping mean pooling along the last axis of `[B, C, L]`.
    AvgPool1D {
        k: usize,
    },
    Flatten,
    BatchConcat,
}

impl LayerSpec {
    /// Causal 1-D convolution: output at `t` sees only inputs `<= t`.
    pub fn causal_conv1d(in_ch: usize, out_ch: usize, kernel: usize, dilation: usize) -> Self {
        LayerSpec::Conv1D {
            in_ch,
            out_ch,
            kernel,
            stride: 1,
            dilation,
            pad_left: (kernel - 1) * dilation,
            pad_right: 0,
        }
    }

    fn validate(&self) -> Result<()> {
        match *self {
            LayerSpec::Dropout { p } if !(0.0..1.0).contains(&p) => {
                Err(NnError::Config(format!("dropout rate {p} outside [0, 1)")))
            }
            LayerSpec::GroupedConv2D {
                in_ch,
                out_ch,
                groups,
                ..
            } if groups == 0 || in_ch % groups != 0 || out_ch % groups != 0 => Err(NnError::Config(format!(
                "groups={groups} must divide in={in_ch} and out={out_ch}"
            ))),
            LayerSpec::AvgPool1D { k: 0 } => Err(NnError::Config("pool size must be positive".into())),
            _ => Ok(()),
        }
    }

    /// `(weight shape, fan_in, fan_out)` for parameterised layers.
    fn weight_shape(&self) -> Option<(Vec<usize>, usize, usize)> {
        match *self {
            LayerSpec::Dense { input, output } => Some((vec![output, input], input, output)),
            LayerSpec::Conv1D {
                in_ch, out_ch, kernel, ..
            } => Some((vec![out_ch, in_ch, kernel], in_ch * kernel, out_ch * kernel)),
            LayerSpec::Conv2D {
                in_ch, out_ch, kernel, ..
            } => {
                let k = kernel.0 * kernel.1;
                Some((vec![out_ch, in_ch, kernel.0, kernel.1], in_ch * k, out_ch * k))
            }
            LayerSpec::GroupedConv2D {
                in_ch,
                out_ch,
                kernel,
                groups,
                ..
            } => {
                let k = kernel.0 * kernel.1;
                Some((
                    vec![out_ch, in_ch / groups, kernel.0, kernel.1],
                    in_ch / groups * k,
                    out_ch / groups * k,
                ))
            }
            _ => None,
        }
    }

    fn out_features(&self) -> usize {
        match *self {
            LayerSpec::Dense { output, .. } => output,
            LayerSpec::Conv1D { out_ch, .. } | LayerSpec::Conv2D { out_ch, .. } | LayerSpec::GroupedConv2D { out_ch, .. } => out_ch,
            _ => 0,
        }
    }
}

/// A layer spec bound to its parameters inside a [`ParamStore`].
#[derive(Debug, Clone)]
pub struct Layer {
    spec: LayerSpec,
    weight: Option<ParamId>,
    bias: Option<ParamId>,
}

/// Glorot-uniform weights in `±sqrt(6 / (fan_in + fan_out))`, zero bias.
pub fn glorot_uniform<T: Float, R: Rng + ?Sized>(shape: Vec<usize>, fan_in: usize, fan_out: usize, rng: &mut R) -> Tensor<T> {
    let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let n = shape.iter().product();
    let data = (0..n).map(|_| T::from_f64(rng.random_range(-bound..bound))).collect();
    Tensor::new(shape, data).expect("shape product matches generated length")
}

impl Layer {
    pub fn new<T: Float, R: Rng + ?Sized>(spec: LayerSpec, store: &mut ParamStore<T>, name: &str, rng: &mut R) -> Result<Self> {
        spec.validate()?;
        let (weight, bias) = match spec.weight_shape() {
            Some((shape, fan_in, fan_out)) => {
                let w = store.add(format!("{name}.weight"), glorot_uniform(shape, fan_in, fan_out, rng));
                let b = store.add(format!("{name}.bias"), Tensor::zeros(vec![spec.out_features()]));
                (Some(w), Some(b))
            }
            None => (None, None),
        };
        Ok(Self { spec, weight, bias })
    }

    pub fn spec(&self) -> &LayerSpec {
        &self.spec
    }

    pub fn weight(&self) -> Option<ParamId> {
        self.weight
    }

    pub fn bias(&self) -> Option<ParamId> {
        self.bias
    }

    pub fn forward<T: Float, R: Rng + ?Sized>(&self, g: &mut Graph<'_, T>, x: NodeId, mode: Mode, rng: &mut R) -> Result<NodeId> {
        let w = self.weight.map(|p| g.param(p));
        let b = self.bias.map(|p| g.param(p));
        match self.spec {
            LayerSpec::Dense { .. } => g.linear(x, w.expect("dense has weight"), b),
            LayerSpec::Conv1D {
                in_ch,
                out_ch,
                kernel,
                stride,
                dilation,
                pad_left,
                pad_right,
            } => {
                let xs = g.shape(x).to_vec();
                if xs.len() != 3 || xs[1] != in_ch {
                    return Err(NnError::Shape {
                        op: "conv1d",
                        detail: format!("input {xs:?}, expected [B, {in_ch}, L]"),
                    });
                }
                let geom = ConvGeom::new(
                    in_ch,
                    out_ch,
                    (1, xs[2]),
                    ConvParams {
                        kernel: (1, kernel),
                        stride: (1, stride),
                        dilation: (1, dilation),
                        padding: (0, 0, pad_left, pad_right),
                        groups: 1,
                    },
                )?;
                g.conv1d(x, w.expect("conv has weight"), b, geom)
            }
            LayerSpec::Conv2D {
                in_ch,
                out_ch,
                kernel,
                stride,
                padding,
            } => conv2d_forward(g, x, w, b, in_ch, out_ch, kernel, stride, padding, 1),
            LayerSpec::GroupedConv2D {
                in_ch,
                out_ch,
                kernel,
                stride,
                padding,
                groups,
            } => conv2d_forward(g, x, w, b, in_ch, out_ch, kernel, stride, padding, groups),
            LayerSpec::ReLU => g.relu(x),
            LayerSpec::Tanh => g.tanh(x),
            LayerSpec::Sigmoid => g.sigmoid(x),
            LayerSpec::Dropout { p } => g.dropout(x, p, mode, rng),
            LayerSpec::GlobalAvgPool => g.global_avg_pool(x),
            LayerSpec::AvgPool1D { k } => g.avg_pool1d(x, k),
            LayerSpec::Flatten => g.flatten(x),
            LayerSpec::BatchConcat => Ok(x),
        }
    }

    /// Multi-input forward; only meaningful for `BatchConcat`.
    pub fn forward_many<T: Float>(&self, g: &mut Graph<'_, T>, xs: &[NodeId]) -> Result<NodeId> {
        match self.spec {
            LayerSpec::BatchConcat => g.concat(xs),
            _ => Err(NnError::Config(format!("{:?} takes a single input", self.spec))),
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn conv2d_forward<T: Float>(
    g: &mut Graph<'_, T>,
    x: NodeId,
    w: Option<NodeId>,
    b: Option<NodeId>,
    in_ch: usize,
    out_ch: usize,
    kernel: (usize, usize),
    stride: (usize, usize),
    padding: (usize, usize),
    groups: usize,
) -> Result<NodeId> {
    let xs = g.shape(x).to_vec();
    if xs.len() != 4 || xs[1] != in_ch {
        return Err(NnError::Shape {
            op: "conv2d",
            detail: format!("input {xs:?}, expected [B, {in_ch}, H, W]"),
        });
    }
    let geom = ConvGeom::new(
        in_ch,
        out_ch,
        (xs[2], xs[3]),
        ConvParams {
            kernel,
            stride,
            dilation: (1, 1),
            padding: (padding.0, padding.0, padding.1, padding.1),
            groups,
        },
    )?;
    g.conv2d(x, w.expect("conv has weight"), b, geom)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn dense_288_to_512() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut store = ParamStore::<f32>::new();
        let l = Layer::new(LayerSpec::Dense { input: 288, output: 512 }, &mut store, "fc", &mut rng).unwrap();
        let mut g = Graph::new(&store);
        let x = g.input(Tensor::zeros(vec![5, 288]));
        let y = l.forward(&mut g, x, Mode::Eval, &mut rng).unwrap();
        assert_eq!(g.shape(y), &[5, 512]);
    }

    #[test]
    fn dropout_eval_is_exact_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut store = ParamStore::<f64>::new();
        let l = Layer::new(LayerSpec::Dropout { p: 0.5 }, &mut store, "d", &mut rng).unwrap();
        let data: Vec<f64> = (0..64).map(|i| i as f64 * 0.37 - 3.0).collect();
        let mut g = Graph::new(&store);
        let x = g.input(Tensor::new(vec![64], data.clone()).unwrap());
        let y = l.forward(&mut g, x, Mode::Eval, &mut rng).unwrap();
        assert_eq!(g.value(y), data.as_slice());
    }

    #[test]
    fn dropout_train_expectation_matches_input() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let store = ParamStore::<f64>::new();
        let input = [0.5, -2.0, 3.0, 1.0];
        let mut acc = [0.0; 4];
        let draws = 20_000;
        for _ in 0..draws {
            let mut g = Graph::new(&store);
            let x = g.input(Tensor::from_f64(vec![4], &input).unwrap());
            let y = g.dropout(x, 0.3, Mode::Train, &mut rng).unwrap();
            for (a, v) in acc.iter_mut().zip(g.value(y)) {
                *a += v;
            }
        }
        for (a, x) in acc.iter().zip(input) {
            let mean = a / draws as f64;
            assert!((mean - x).abs() <= 0.02 * x.abs(), "{mean} vs {x}");
        }
    }

    #[test]
    fn invalid_specs_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut store = ParamStore::<f64>::new();
        assert!(Layer::new(LayerSpec::Dropout { p: 1.0 }, &mut store, "d", &mut rng).is_err());
        let bad = LayerSpec::GroupedConv2D {
            in_ch: 6,
            out_ch: 8,
            kernel: (3, 3),
            stride: (1, 1),
            padding: (1, 1),
            groups: 4,
        };
        assert!(Layer::new(bad, &mut store, "gc", &mut rng).is_err());
    }

    #[test]
    fn conv_rejects_wrong_channel_count() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut store = ParamStore::<f64>::new();
        let l = Layer::new(LayerSpec::causal_conv1d(8, 4, 3, 2), &mut store, "c", &mut rng).unwrap();
        let mut g = Graph::new(&store);
        let x = g.input(Tensor::zeros(vec![1, 7, 32]));
        assert!(l.forward(&mut g, x, Mode::Eval, &mut rng).is_err());
    }

    #[test]
    fn glorot_bound_respected() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let t: Tensor<f64> = glorot_uniform(vec![64, 32], 32, 64, &mut rng);
        let bound = (6.0f64 / 96.0).sqrt();
        assert!(t.data().iter().all(|v| v.abs() <= bound));
    }
}
