use malxai::numerics::{grad_check, Activation, Layer, LayerKind, Mode, Tensor};
use malxai::rng::seeded;
use rand::Rng;

fn random_input(shape: &[usize], seed: u64) -> Tensor {
    let mut rng = seeded(seed);
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.gen_range(-1.5..1.5)).collect()).unwrap()
}

fn check(kind: LayerKind, input: &Tensor, mode: Mode, seed: u64) -> f64 {
    let layer = Layer::new("probe", kind.clone(), &mut seeded(seed)).unwrap();
    let report = grad_check(&layer, input, mode, 1e-5, seed).unwrap();
    assert!(report.checked > 0, "{kind:?}");
    report.max_rel_error
}

#[test]
fn dense_gradients() {
    for seed in 0..20u64 {
        let (b, i, o) = (1 + seed as usize % 4, 2 + seed as usize % 5, 1 + seed as usize % 3);
        let x = random_input(&[b, i], seed);
        let err = check(LayerKind::Dense { inputs: i, outputs: o }, &x, Mode::Train, seed);
        assert!(err <= 1e-6, "seed {seed}: {err}");
    }
    let x = random_input(&[3, 4], 99);
    assert!(check(LayerKind::Dense { inputs: 4, outputs: 2 }, &x, Mode::Train, 99) <= 1e-6);
}

#[test]
fn conv_gradients() {
    for seed in 0..20u64 {
        let (b, c, l) = (1 + seed as usize % 3, 1 + seed as usize % 3, 3 + seed as usize % 6);
        let k = [1, 3, 5][seed as usize % 3];
        let x = random_input(&[b, c, l], seed);
        let kind = LayerKind::Conv1d { channels: c, filters: 2, kernel: k };
        let err = check(kind, &x, Mode::Train, seed);
        assert!(err <= 1e-6, "seed {seed}: {err}");
    }
}

#[test]
fn lstm_gradients() {
    for seed in 0..20u64 {
        let (b, i, t, h) = (1 + seed as usize % 3, 1 + seed as usize % 3, 2 + seed as usize % 4, 2 + seed as usize % 3);
        let x = random_input(&[b, i, t], seed);
        let kind = LayerKind::Lstm { inputs: i, hidden: h, bidirectional: seed % 2 == 1 };
        let err = check(kind, &x, Mode::Train, seed);
        assert!(err <= 1e-5, "seed {seed}: {err}");
    }
}

#[test]
fn nonlinear_layer_gradients() {
    for seed in 0..20u64 {
        let shape = [2 + seed as usize % 3, 2, 4 + seed as usize % 3];
        let x = random_input(&shape, seed);
        let kinds = [
            LayerKind::BatchNorm { features: 2, eps: 1e-3, momentum: 0.99 },
            LayerKind::MaxPool { window: 2, stride: 2 },
            LayerKind::AdaptiveAvgPool { out_len: 3 },
            LayerKind::Dropout { rate: 0.3 },
            LayerKind::Activation(Activation::Sigmoid),
            LayerKind::Activation(Activation::Tanh),
            LayerKind::Activation(Activation::Relu),
            LayerKind::Flatten,
            LayerKind::Scale { factor: 0.25 },
        ];
        for kind in kinds {
            let err = check(kind.clone(), &x, Mode::Train, seed);
            assert!(err <= 1e-4, "seed {seed} {kind:?}: {err}");
        }
        let flat = random_input(&[3, 4], seed);
        let bn = LayerKind::BatchNorm { features: 4, eps: 1e-3, momentum: 0.99 };
        assert!(check(bn, &flat, Mode::Train, seed) <= 1e-4);
    }
}

#[test]
fn embedding_gradients() {
    for seed in 0..20u64 {
        let mut rng = seeded(seed);
        let idx: Vec<f64> = (0..6).map(|_| rng.gen_range(0..5) as f64).collect();
        let x = Tensor::new(vec![2, 3], idx).unwrap();
        let err = check(LayerKind::Embedding { vocab: 5, dim: 3 }, &x, Mode::Train, seed);
        assert!(err <= 1e-6, "seed {seed}: {err}");
    }
}
