//! Central-difference checks of every layer, the composed network and the
//! loss objective, in double precision.

use mtt_core::loss::{
    LossNetConfig, LossNetwork, LossNormalization, LossWeights, Objective, TextureTargets,
};
use mtt_core::nn::{
    ArchConfig, Conv2d, ConvTranspose2d, InstanceNorm, Layer, Relu, Tanh, Tensor, TransferModel,
};
use mtt_core::Result;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

// Small enough that a perturbation rarely straddles a ReLU kink in the
// composed network; f64 round-off stays near 1e-10 at this step.
const STEP: f64 = 1e-6;
const TOL: f64 = 1e-4;

fn random(shape: [usize; 4], seed: u64, lo: f64, hi: f64) -> Tensor<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = shape.iter().product();
    Tensor::from_vec(shape, (0..n).map(|_| rng.random_range(lo..hi)).collect()).unwrap()
}

trait Module {
    fn fwd(&mut self, x: Tensor<f64>, record: bool) -> Result<Tensor<f64>>;
    fn bwd(&mut self, dy: Tensor<f64>) -> Result<Tensor<f64>>;
    fn params(&mut self) -> Vec<&mut Tensor<f64>>;
}

impl Module for Layer<f64> {
    fn fwd(&mut self, x: Tensor<f64>, record: bool) -> Result<Tensor<f64>> {
        self.forward(x, record)
    }
    fn bwd(&mut self, dy: Tensor<f64>) -> Result<Tensor<f64>> {
        self.backward(dy)
    }
    fn params(&mut self) -> Vec<&mut Tensor<f64>> {
        self.params_mut()
    }
}

impl Module for TransferModel<f64> {
    fn fwd(&mut self, x: Tensor<f64>, record: bool) -> Result<Tensor<f64>> {
        self.forward(x, record)
    }
    fn bwd(&mut self, dy: Tensor<f64>) -> Result<Tensor<f64>> {
        self.backward(dy)
    }
    fn params(&mut self) -> Vec<&mut Tensor<f64>> {
        self.params_mut()
    }
}

/// Max absolute deviation scaled by the largest derivative magnitude.
///
/// Tensors whose analytic gradient vanishes identically (a convolution bias
/// feeding an instance norm) are compared in absolute terms instead.
fn rel_err(analytic: &[f64], numeric: &[f64]) -> f64 {
    let amax = |v: &[f64]| v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if amax(analytic) < 1e-12 {
        return amax(numeric);
    }
    let scale = amax(analytic).max(amax(numeric));
    analytic.iter().zip(numeric).map(|(a, n)| (a - n).abs()).fold(0.0, f64::max) / scale
}

fn sample(n: usize, max: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    if n <= max {
        (0..n).collect()
    } else {
        (0..max).map(|_| rng.random_range(0..n)).collect()
    }
}

/// Checks `d(r . f(x))` against central differences for the input and every
/// parameter; returns the worst relative error.
fn check(m: &mut dyn Module, x: &Tensor<f64>, seed: u64, max_coords: usize) -> f64 {
    let y = m.fwd(x.clone(), true).unwrap();
    let r = random(y.shape(), seed, -1.0, 1.0);
    for p in m.params() {
        p.zero_grad();
    }
    let dx = m.bwd(r.clone()).unwrap();
    let loss = |m: &mut dyn Module, x: Tensor<f64>| m.fwd(x, false).unwrap().dot(&r);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabc);
    let mut worst = 0.0f64;

    let idx = sample(x.numel(), max_coords, &mut rng);
    let mut num = Vec::new();
    for &i in &idx {
        let mut xp = x.clone();
        xp.data_mut()[i] += STEP;
        let mut xm = x.clone();
        xm.data_mut()[i] -= STEP;
        num.push((loss(m, xp) - loss(m, xm)) / (2.0 * STEP));
    }
    let ana: Vec<f64> = idx.iter().map(|&i| dx.data()[i]).collect();
    worst = worst.max(rel_err(&ana, &num));

    let count = m.params().len();
    for p in 0..count {
        let (n, grads) = {
            let mut ps = m.params();
            (ps[p].numel(), ps[p].grad_mut().to_vec())
        };
        let idx = sample(n, max_coords, &mut rng);
        let mut num = Vec::new();
        for &i in &idx {
            m.params()[p].data_mut()[i] += STEP;
            let lp = loss(m, x.clone());
            m.params()[p].data_mut()[i] -= 2.0 * STEP;
            let lm = loss(m, x.clone());
            m.params()[p].data_mut()[i] += STEP;
            num.push((lp - lm) / (2.0 * STEP));
        }
        let ana: Vec<f64> = idx.iter().map(|&i| grads[i]).collect();
        worst = worst.max(rel_err(&ana, &num));
    }
    worst
}

fn input() -> Tensor<f64> {
    random([2, 3, 6, 6], 1, -1.0, 1.0)
}

#[test]
fn conv2d_gradients() {
    for (stride, k) in [(1, 3), (2, 3), (1, 1), (1, 5)] {
        let conv = Conv2d::new(random([4, 3, k, k], 2, -0.5, 0.5), random([4, 1, 1, 1], 3, -0.5, 0.5), stride, k / 2)
            .unwrap();
        let e = check(&mut Layer::Conv(conv), &input(), 4, 400);
        assert!(e < TOL, "stride {stride} k {k}: {e:e}");
    }
}

#[test]
fn conv_transpose_gradients() {
    for (stride, k) in [(1, 3), (2, 3), (1, 9)] {
        let t = ConvTranspose2d::new(
            random([3, 4, k, k], 5, -0.5, 0.5),
            random([4, 1, 1, 1], 6, -0.5, 0.5),
            stride,
            k / 2,
            stride - 1,
        )
        .unwrap();
        let e = check(&mut Layer::ConvTranspose(t), &input(), 7, 400);
        assert!(e < TOL, "stride {stride} k {k}: {e:e}");
    }
}

#[test]
fn instance_norm_gradients() {
    let mut norm = InstanceNorm::new(3);
    norm.gamma = Tensor::parameter([3, 1, 1, 1], vec![1.3, -0.7, 0.4]).unwrap();
    norm.beta = Tensor::parameter([3, 1, 1, 1], vec![0.1, 0.2, -0.3]).unwrap();
    let e = check(&mut Layer::InstanceNorm(norm), &input(), 8, 400);
    assert!(e < TOL, "{e:e}");
}

#[test]
fn activation_gradients() {
    // Keep inputs away from the ReLU kink.
    let mut x = input();
    x.data_mut().iter_mut().for_each(|v| *v += 0.01 * v.signum());
    let e = check(&mut Layer::Relu(Relu::new()), &x, 9, 400);
    assert!(e < TOL, "relu {e:e}");
    let e = check(&mut Layer::Tanh(Tanh::new()), &input(), 10, 400);
    assert!(e < TOL, "tanh {e:e}");
}

fn small_arch() -> ArchConfig {
    ArchConfig { widths: [4, 5, 6], residual_blocks: 2, outer_kernel: 3, inner_kernel: 3 }
}

#[test]
fn residual_block_gradients() {
    let mut model = TransferModel::<f64>::new(&small_arch(), 11).unwrap();
    let block = model
        .layers_mut()
        .iter()
        .find(|l| matches!(l, Layer::Residual(_)))
        .cloned()
        .unwrap();
    let x = random([2, 6, 4, 4], 12, -1.0, 1.0);
    let e = check(&mut { block }, &x, 13, 200);
    assert!(e < TOL, "{e:e}");
}

#[test]
fn composed_network_gradients() {
    let mut model = TransferModel::<f64>::new(&small_arch(), 14).unwrap();
    let x = random([2, 3, 8, 8], 15, 0.0, 1.0);
    let e = check(&mut model, &x, 16, 40);
    assert!(e < TOL, "{e:e}");
}

#[test]
fn loss_objective_gradient() {
    let cfg = LossNetConfig { widths: vec![4, 6, 8, 8], ..LossNetConfig::default() };
    for norm in [LossNormalization::Literal, LossNormalization::Scaled] {
        let mut net = LossNetwork::<f64>::new(cfg.clone()).unwrap();
        let texture = random([1, 3, 16, 16], 17, 0.0, 1.0);
        let feats = net.forward(&texture, false).unwrap();
        let targets = TextureTargets::from_features(&net, &feats, norm);
        let generated = random([2, 3, 16, 16], 18, 0.0, 1.0);
        let content_img = random([2, 3, 16, 16], 19, 0.0, 1.0);
        let weights = LossWeights { alpha: 1.0, beta: 1.0, gamma: 1.0 };
        let mut obj = Objective { net: &mut net, targets: &targets, weights, norm };
        let content = obj.content_features(&content_img).unwrap();
        let (_, grad) = obj.evaluate(&generated, Some(&content)).unwrap();
        let mut total = |x: &Tensor<f64>| {
            let (p, _) = obj.evaluate(x, Some(&content)).unwrap();
            p.content + p.texture + p.tv
        };
        let mut rng = ChaCha8Rng::seed_from_u64(20);
        let idx = sample(generated.numel(), 150, &mut rng);
        let mut num = Vec::new();
        for &i in &idx {
            let mut xp = generated.clone();
            xp.data_mut()[i] += STEP;
            let mut xm = generated.clone();
            xm.data_mut()[i] -= STEP;
            num.push((total(&xp) - total(&xm)) / (2.0 * STEP));
        }
        let ana: Vec<f64> = idx.iter().map(|&i| grad.data()[i]).collect();
        let e = rel_err(&ana, &num);
        assert!(e < TOL, "{norm:?}: {e:e}");
    }
}

#[test]
fn adjoint_of_conv_is_transpose_conv() {
    let w = random([4, 3, 3, 3], 21, -1.0, 1.0);
    let mut conv = Conv2d::new(w.clone(), Tensor::zeros([4, 1, 1, 1]), 2, 1).unwrap();
    let mut convt = ConvTranspose2d::new(w, Tensor::zeros([3, 1, 1, 1]), 2, 1, 1).unwrap();
    let x = random([2, 3, 8, 8], 22, -1.0, 1.0);
    let y = random([2, 4, 4, 4], 23, -1.0, 1.0);
    let lhs = conv.forward(x.clone(), false).unwrap().dot(&y);
    let rhs = x.dot(&convt.forward(y, false).unwrap());
    assert!((lhs - rhs).abs() < 1e-10, "{lhs} vs {rhs}");
}

#[test]
fn gradient_of_sum_is_ones_and_accumulates() {
    let mut delta = vec![0.0; 9];
    delta[4] = 1.0;
    let w = Tensor::parameter([1, 1, 3, 3], delta).unwrap();
    let mut conv = Conv2d::new(w, Tensor::parameter([1, 1, 1, 1], vec![0.0]).unwrap(), 1, 1).unwrap();
    let x = random([1, 1, 5, 5], 24, -1.0, 1.0);
    conv.forward(x.clone(), true).unwrap();
    let dx = conv.backward(Tensor::full([1, 1, 5, 5], 1.0)).unwrap();
    assert!(dx.data().iter().all(|&v| v == 1.0));
    let once = conv.weight.grad().unwrap().to_vec();
    conv.forward(x, true).unwrap();
    conv.backward(Tensor::full([1, 1, 5, 5], 1.0)).unwrap();
    for (a, b) in conv.weight.grad().unwrap().iter().zip(&once) {
        assert_eq!(*a, 2.0 * b);
    }
}

#[test]
fn zeroed_residual_block_is_identity() {
    let mut model = TransferModel::<f64>::new(&small_arch(), 25).unwrap();
    let mut block = model
        .layers_mut()
        .iter()
        .find(|l| matches!(l, Layer::Residual(_)))
        .cloned()
        .unwrap();
    if let Layer::Residual(b) = &mut block {
        for t in [&mut b.conv1.weight, &mut b.conv1.bias, &mut b.conv2.weight, &mut b.conv2.bias] {
            t.data_mut().iter_mut().for_each(|v| *v = 0.0);
        }
    }
    let x = random([1, 6, 4, 4], 26, -1.0, 1.0);
    let y = block.forward(x.clone(), false).unwrap();
    assert_eq!(y.data(), x.data());
}
