use jamloc_nn::gradcheck::check_param_grads;
use jamloc_nn::{Graph, Layer, LayerSpec, Mode, NodeId, ParamStore, Result, Sgd, SgdConfig, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const TOL: f64 = 1e-4;
const STEP: f64 = 1e-5;

fn random_tensor(shape: Vec<usize>, rng: &mut ChaCha8Rng) -> Tensor<f64> {
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

/// Builds one layer whose input is itself a parameter, so the check covers
/// both weight and input gradients. The scalar is a fixed random projection
/// of the layer output.
fn check_layer(spec: LayerSpec, input_shape: Vec<usize>, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut store = ParamStore::<f64>::new();
    let layer = Layer::new(spec, &mut store, "layer", &mut rng).unwrap();
    let x = store.add("input", random_tensor(input_shape, &mut rng));
    let out_len = {
        let mut g = Graph::new(&store);
        let xn = g.param(x);
        let y = layer.forward(&mut g, xn, Mode::Train, &mut ChaCha8Rng::seed_from_u64(99)).unwrap();
        g.value(y).len()
    };
    let proj: Vec<f64> = (0..out_len).map(|_| rng.random_range(-1.0..1.0)).collect();
    let f = |g: &mut Graph<'_, f64>| -> Result<NodeId> {
        let xn = g.param(x);
        let y = layer.forward(g, xn, Mode::Train, &mut ChaCha8Rng::seed_from_u64(99))?;
        let shape = g.shape(y).to_vec();
        let w = g.input(Tensor::new(shape, proj.clone()).unwrap());
        let yw = g.channel_scale_flat(y, w)?;
        g.sum(yw)
    };
    let report = check_param_grads(&mut store, STEP, 64, f).unwrap();
    assert!(report.checked > 0);
    assert!(
        report.max_rel_error < TOL,
        "{spec:?}: rel err {} at {:?}",
        report.max_rel_error,
        report.worst
    );
    report.max_rel_error
}

/// Elementwise product helper expressed through existing ops: for rank-1
/// compatibility we reshape both to [N, 1] and gate with channel_scale.
trait FlatProduct {
    fn channel_scale_flat(&mut self, a: NodeId, b: NodeId) -> Result<NodeId>;
}

impl FlatProduct for Graph<'_, f64> {
    fn channel_scale_flat(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let n = self.value(a).len();
        let a2 = self.reshape(a, vec![n, 1, 1])?;
        let b2 = self.reshape(b, vec![n, 1])?;
        self.channel_scale(a2, b2)
    }
}

#[test]
fn dense() {
    check_layer(LayerSpec::Dense { input: 7, output: 5 }, vec![3, 7], 1);
}

#[test]
fn conv1d_causal_dilated() {
    check_layer(LayerSpec::causal_conv1d(3, 4, 3, 2), vec![2, 3, 12], 2);
}

#[test]
fn conv1d_strided() {
    let spec = LayerSpec::Conv1D {
        in_ch: 2,
        out_ch: 3,
        kernel: 4,
        stride: 4,
        dilation: 1,
        pad_left: 0,
        pad_right: 0,
    };
    check_layer(spec, vec![2, 2, 16], 3);
}

#[test]
fn conv2d() {
    let spec = LayerSpec::Conv2D {
        in_ch: 3,
        out_ch: 4,
        kernel: (3, 3),
        stride: (2, 2),
        padding: (1, 1),
    };
    check_layer(spec, vec![2, 3, 6, 6], 4);
}

#[test]
fn grouped_conv2d() {
    let spec = LayerSpec::GroupedConv2D {
        in_ch: 4,
        out_ch: 6,
        kernel: (3, 3),
        stride: (1, 1),
        padding: (1, 1),
        groups: 2,
    };
    check_layer(spec, vec![2, 4, 5, 5], 5);
}

#[test]
fn activations() {
    check_layer(LayerSpec::ReLU, vec![4, 6], 6);
    check_layer(LayerSpec::Tanh, vec![4, 6], 7);
    check_layer(LayerSpec::Sigmoid, vec![4, 6], 8);
}

#[test]
fn dropout_train_mode() {
    check_layer(LayerSpec::Dropout { p: 0.3 }, vec![4, 6], 9);
}

#[test]
fn pooling_and_reshape() {
    check_layer(LayerSpec::GlobalAvgPool, vec![2, 3, 4, 4], 10);
    check_layer(LayerSpec::AvgPool1D { k: 4 }, vec![2, 3, 16], 11);
    check_layer(LayerSpec::Flatten, vec![2, 3, 4], 12);
}

#[test]
fn concat_add_scale_and_losses() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let mut store = ParamStore::<f64>::new();
    let a = store.add("a", random_tensor(vec![3, 2, 4], &mut rng));
    let b = store.add("b", random_tensor(vec![3, 5, 4], &mut rng));
    let gate = store.add("gate", random_tensor(vec![3, 7], &mut rng));
    let c = store.add("c", random_tensor(vec![3, 7, 4], &mut rng));
    let target: Vec<f64> = (0..21).map(|_| rng.random_range(-1.0..1.0)).collect();
    let classes = vec![0usize, 6, 3];
    let f = |g: &mut Graph<'_, f64>| -> Result<NodeId> {
        let (an, bn, gn, cn) = (g.param(a), g.param(b), g.param(gate), g.param(c));
        let cat = g.concat(&[an, bn])?;
        let sum = g.add(cat, cn)?;
        let sg = g.sigmoid(gn)?;
        let gated = g.channel_scale(sum, sg)?;
        let pooled = g.global_avg_pool(gated)?;
        let scaled = g.scale(pooled, 0.7)?;
        let mse = g.mse(scaled, target.clone(), 1.3)?;
        let l1 = g.l1(scaled, target.iter().map(|t| t + 5.0).collect(), 0.5)?;
        let ce = g.cross_entropy(pooled, classes.clone(), 0.8)?;
        g.add_scalars(&[mse, l1, ce])
    };
    let report = check_param_grads(&mut store, STEP, 200, f).unwrap();
    assert!(report.max_rel_error < TOL, "{report:?}");
}

#[test]
fn grouped_conv_with_one_group_equals_conv2d() {
    let plain = LayerSpec::Conv2D {
        in_ch: 4,
        out_ch: 8,
        kernel: (3, 3),
        stride: (2, 1),
        padding: (1, 1),
    };
    let grouped = LayerSpec::GroupedConv2D {
        in_ch: 4,
        out_ch: 8,
        kernel: (3, 3),
        stride: (2, 1),
        padding: (1, 1),
        groups: 1,
    };
    let mut outs = Vec::new();
    for spec in [plain, grouped] {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let mut store = ParamStore::<f64>::new();
        let layer = Layer::new(spec, &mut store, "c", &mut rng).unwrap();
        let x = random_tensor(vec![2, 4, 9, 7], &mut rng);
        let mut g = Graph::new(&store);
        let xn = g.input(x);
        let y = layer.forward(&mut g, xn, Mode::Eval, &mut rng).unwrap();
        outs.push(g.value(y).to_vec());
    }
    assert_eq!(outs[0], outs[1]);
}

fn train_k_steps(seed: u64, k: usize) -> Vec<f32> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut store = ParamStore::<f32>::new();
    let l1 = Layer::new(LayerSpec::Dense { input: 6, output: 16 }, &mut store, "l1", &mut rng).unwrap();
    let l2 = Layer::new(LayerSpec::Dense { input: 16, output: 2 }, &mut store, "l2", &mut rng).unwrap();
    let mut opt = Sgd::new(SgdConfig::default()).unwrap();
    for step in 0..k {
        let x: Vec<f32> = (0..8 * 6).map(|_| rng.random_range(-1.0..1.0)).collect();
        let t: Vec<f32> = x.chunks(6).flat_map(|r| [r[0] + r[1], r[2] * r[3]]).collect();
        let grads = {
            let mut g = Graph::new(&store);
            let xn = g.input(Tensor::new(vec![8, 6], x).unwrap());
            let h = l1.forward(&mut g, xn, Mode::Train, &mut rng).unwrap();
            let h = g.relu(h).unwrap();
            let h = g.dropout(h, 0.1, Mode::Train, &mut rng).unwrap();
            let y = l2.forward(&mut g, h, Mode::Train, &mut rng).unwrap();
            let loss = g.mse(y, t, 1.0).unwrap();
            g.backward(loss).unwrap()
        };
        store.accumulate(&grads).unwrap();
        opt.step(&mut store, step).unwrap();
    }
    store.tensors().iter().flat_map(|t| t.data().to_vec()).collect()
}

#[test]
fn fixed_seed_gives_bit_identical_parameters() {
    let a = train_k_steps(5, 25);
    let b = train_k_steps(5, 25);
    assert_eq!(a.iter().map(|v| v.to_bits()).collect::<Vec<_>>(), b.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
    let c = train_k_steps(6, 25);
    assert_ne!(a, c);
}
