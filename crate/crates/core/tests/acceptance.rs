//! End-to-end acceptance checks. Each criterion prints one PASS/FAIL line;
//! the test fails if any criterion fails. Criterion 10 runs only when
//! `MALXAI_DATASET` points at the full API-call CSV.

use std::time::Instant;

use malxai::dataio::{
    balance_undersample, load_csv, smote, split, synth_generate, Dataset, Label, SmoteConfig, SplitMode, SplitSpec,
};
use malxai::evalkit::{metrics, sweep_table5, CellSplit, MetricsReport, SweepCell};
use malxai::models::{
    build_model, fit, fit_rows, Architecture, MlpConfig, ModelKind, ModelSpec, Optimizer, TrainConfig,
};
use malxai::numerics::{grad_check, Activation, Layer, LayerKind, Mode, Tensor};
use malxai::rng::seeded;
use malxai::xai::{
    game_axioms, lime_explain, shap_exact, shap_permutation, shapley_exact, LimeConfig, ShapConfig, ShapMode,
};
use rand::Rng;

type Outcome = Result<String, String>;

fn ensure(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn c1_param_counts() -> Outcome {
    let m = build_model(&ModelSpec::default_for(ModelKind::CnnLstm), 0).map_err(|e| e.to_string())?;
    let c = m.param_count();
    let rows: Vec<usize> = m.summary().map_err(|e| e.to_string())?.iter().map(|r| r.params).collect();
    ensure(
        (c.total, c.trainable, c.non_trainable) == (1_121_497, 1_121_481, 16)
            && rows == [2456, 32, 2336, 0, 1_116_160, 513],
        format!("total {} trainable {} non-trainable {} per-layer {rows:?}", c.total, c.trainable, c.non_trainable),
    )
}

fn random_input(shape: &[usize], seed: u64) -> Tensor {
    let mut rng = seeded(seed);
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.gen_range(-1.5..1.5)).collect()).unwrap()
}

fn c2_gradients() -> Outcome {
    let mut worst_linear: f64 = 0.0;
    let mut worst_other: f64 = 0.0;
    let mut checks = 0;
    for seed in 0..20u64 {
        let s = seed as usize;
        let mut cases: Vec<(LayerKind, Tensor, bool)> = vec![
            (LayerKind::Dense { inputs: 2 + s % 5, outputs: 1 + s % 3 }, random_input(&[1 + s % 4, 2 + s % 5], seed), true),
            (
                LayerKind::Conv1d { channels: 1 + s % 3, filters: 2, kernel: [1, 3, 5][s % 3] },
                random_input(&[1 + s % 3, 1 + s % 3, 3 + s % 6], seed),
                true,
            ),
            (
                LayerKind::Lstm { inputs: 1 + s % 3, hidden: 2 + s % 3, bidirectional: s % 2 == 1 },
                random_input(&[1 + s % 3, 1 + s % 3, 2 + s % 4], seed),
                false,
            ),
        ];
        let seq = random_input(&[2 + s % 3, 2, 4 + s % 3], seed);
        for kind in [
            LayerKind::BatchNorm { features: 2, eps: 1e-3, momentum: 0.99 },
            LayerKind::MaxPool { window: 2, stride: 2 },
            LayerKind::AdaptiveAvgPool { out_len: 3 },
            LayerKind::Dropout { rate: 0.3 },
            LayerKind::Activation(Activation::Sigmoid),
            LayerKind::Activation(Activation::Tanh),
            LayerKind::Activation(Activation::Relu),
            LayerKind::Flatten,
        ] {
            cases.push((kind, seq.clone(), false));
        }
        let idx: Vec<f64> = (0..6).map(|i| ((seed as usize + i * 3) % 5) as f64).collect();
        cases.push((LayerKind::Embedding { vocab: 5, dim: 3 }, Tensor::new(vec![2, 3], idx).unwrap(), true));
        cases.push((LayerKind::Scale { factor: 0.25 }, seq.clone(), true));
        for (kind, x, linear) in cases {
            let layer = Layer::new("probe", kind, &mut seeded(seed)).map_err(|e| e.to_string())?;
            let r = grad_check(&layer, &x, Mode::Train, 1e-5, seed).map_err(|e| e.to_string())?;
            checks += 1;
            if linear {
                worst_linear = worst_linear.max(r.max_rel_error);
            } else {
                worst_other = worst_other.max(r.max_rel_error);
            }
        }
    }
    ensure(
        worst_linear <= 1e-6 && worst_other <= 1e-4,
        format!("{checks} checks over 20 seeds; worst linear {worst_linear:.2e}, worst other {worst_other:.2e}"),
    )
}

fn all_orderings(n: usize, table: &[f64]) -> Vec<f64> {
    fn permute(k: usize, items: &mut Vec<usize>, visit: &mut dyn FnMut(&[usize])) {
        if k == items.len() {
            visit(items);
            return;
        }
        for i in k..items.len() {
            items.swap(k, i);
            permute(k + 1, items, visit);
            items.swap(k, i);
        }
    }
    let mut phi = vec![0.0; n];
    let mut count = 0.0;
    let mut items: Vec<usize> = (0..n).collect();
    permute(0, &mut items, &mut |order| {
        let mut s = 0usize;
        for &p in order {
            phi[p] += table[s | 1 << p] - table[s];
            s |= 1 << p;
        }
        count += 1.0;
    });
    phi.iter().map(|v| v / count).collect()
}

fn c3_shapley_exactness() -> Outcome {
    let mut rng = seeded(3);
    let (mut worst_oracle, mut worst_axiom): (f64, f64) = (0.0, 0.0);
    for trial in 0..60 {
        let n = 1 + trial % 6;
        let mut table: Vec<f64> = (0..1usize << n).map(|_| rng.gen_range(-4.0..4.0)).collect();
        table[0] = 0.0;
        if n >= 3 {
            let last = 1usize << (n - 1);
            for s in 0..table.len() {
                if s & last != 0 {
                    table[s] = table[s & !last];
                }
                if s & 0b11 == 0b10 {
                    table[s] = table[(s & !0b11) | 0b01];
                }
            }
        }
        let exact = shapley_exact(n, |s| table[s as usize]).map_err(|e| e.to_string())?;
        for (a, b) in exact.iter().zip(all_orderings(n, &table)) {
            worst_oracle = worst_oracle.max((a - b).abs());
        }
        let r = game_axioms(n, |s| table[s as usize]).map_err(|e| e.to_string())?;
        if n >= 3 && (!r.dummies.contains(&(n - 1)) || !r.symmetric_pairs.contains(&(0, 1))) {
            return Err(format!("trial {trial}: planted dummy/symmetric pair not detected"));
        }
        worst_axiom = worst_axiom.max(r.efficiency_residual.abs()).max(r.max_symmetry_gap).max(r.max_dummy_abs);
    }
    ensure(
        worst_oracle <= 1e-9 && worst_axiom <= 1e-9,
        format!("60 games n<=6: max |exact - orderings| {worst_oracle:.1e}, max axiom violation {worst_axiom:.1e}"),
    )
}

fn nonlinear_score(rows: &[Vec<u16>]) -> Vec<f64> {
    rows.iter()
        .map(|r| {
            let v = |j: usize| r[j] as f64 / 306.0;
            let z = 2.0 * v(0) * v(1) - 1.5 * v(4) + v(7) * v(7) + 0.8 * v(9) - v(10) * v(2) + 0.3 * v(20);
            1.0 / (1.0 + (-z).exp())
        })
        .collect()
}

fn c4_permutation_convergence() -> Outcome {
    let mut rng = seeded(4);
    let x: Vec<u16> = (0..100).map(|_| rng.gen_range(0..307)).collect();
    let bg: Vec<Vec<u16>> = (0..5).map(|_| (0..100).map(|_| rng.gen_range(0..160)).collect()).collect();
    let subset: Vec<usize> = vec![0, 1, 2, 4, 7, 9, 10, 20, 33, 50, 71, 99];
    let exact_cfg = ShapConfig { mode: ShapMode::Exact, feature_subset: Some(subset.clone()), ..Default::default() };
    let exact = shap_exact(&nonlinear_score, &x, &bg, &exact_cfg).map_err(|e| e.to_string())?;
    let trials = 20;
    let mut within = vec![0usize; subset.len()];
    for seed in 0..trials {
        let cfg = ShapConfig { feature_subset: Some(subset.clone()), num_permutations: 200, seed, ..Default::default() };
        let e = shap_permutation(&nonlinear_score, &x, &bg, &cfg).map_err(|e| e.to_string())?;
        let se = e.standard_errors.clone().unwrap_or_default();
        for (k, ((a, b), s)) in e.attributions.iter().zip(&exact.attributions).zip(&se).enumerate() {
            if (a.value - b.value).abs() <= 3.0 * s + 1e-12 {
                within[k] += 1;
            }
        }
    }
    let worst = *within.iter().min().unwrap();
    ensure(
        worst as f64 >= 0.95 * trials as f64,
        format!("12 features x {trials} trials; worst feature within 3 SE in {worst}/{trials} trials"),
    )
}

fn c5_lime_fidelity() -> Outcome {
    let mut rng = seeded(5);
    let dummy = 7;
    let w: Vec<f64> = (0..100)
        .map(|j| if j == dummy { 0.0 } else { rng.gen_range(0.001..0.004) * if j % 2 == 0 { 1.0 } else { -1.0 } })
        .collect();
    let x: Vec<u16> = (0..100).map(|j| 250 + (j % 50) as u16).collect();
    let replacement = vec![10u16; 100];
    let wc = w.clone();
    let scorer = move |rows: &[Vec<u16>]| -> Vec<f64> {
        rows.iter().map(|r| 0.5 + r.iter().zip(&wc).map(|(&v, c)| c * v as f64 / 306.0).sum::<f64>()).collect()
    };
    let mut worst_rel: f64 = 0.0;
    let mut worst_dummy: f64 = 0.0;
    for seed in 0..10 {
        let cfg = LimeConfig { num_samples: 5000, ridge_penalty: 0.0, num_features: 100, seed, ..Default::default() };
        let e = lime_explain(&scorer, &x, &replacement, &cfg).map_err(|e| e.to_string())?;
        let mut max_abs: f64 = 0.0;
        let mut dummy_abs = 0.0;
        for a in &e.attributions {
            max_abs = max_abs.max(a.value.abs());
            let planted = w[a.feature] * (x[a.feature] as f64 - replacement[a.feature] as f64) / 306.0;
            if a.feature == dummy {
                dummy_abs = a.value.abs();
            } else {
                worst_rel = worst_rel.max((a.value - planted).abs() / planted.abs());
            }
        }
        worst_dummy = worst_dummy.max(dummy_abs / max_abs);
    }
    ensure(
        worst_rel <= 0.01 && worst_dummy <= 0.05,
        format!("10 seeds: max relative coefficient error {worst_rel:.2e}, dummy/max ratio {worst_dummy:.2e}"),
    )
}

fn c6_split_protocol() -> Outcome {
    let spec = SplitSpec::new(SplitMode::TopDown, 0.8);
    let (train, test) = spec.ranges(43_877).map_err(|e| e.to_string())?;
    let (train, test) = (train.to_string(), test.to_string());
    ensure(train == "1-35,101" && test == "35,102-43,877", format!("train {train}, test {test}"))
}

fn c7_xor() -> Outcome {
    let rows = vec![vec![0u16, 0], vec![0, 1], vec![1, 0], vec![1, 1]];
    let labels = vec![0u8, 1, 1, 0];
    let mut spec = ModelSpec::new(Architecture::Mlp(MlpConfig { hidden: vec![4] }));
    spec.vocab_size = 2;
    spec.seq_len = 2;
    let cfg = TrainConfig {
        epochs: 5000,
        batch_size: 4,
        learning_rate: 0.05,
        optimizer: Optimizer::adam(),
        seed: 0,
        shuffle: false,
    };
    for restart in 0..5 {
        let mut m = build_model(&spec, restart).map_err(|e| e.to_string())?;
        fit_rows(&mut m, &rows, &labels, None, &cfg).map_err(|e| e.to_string())?;
        if m.predict_labels(&rows, 0.5).map_err(|e| e.to_string())? == labels {
            return Ok(format!("100% train accuracy on restart {}", restart + 1));
        }
    }
    Err("no restart reached 100% train accuracy".into())
}

fn end_to_end_metrics(train: &Dataset, test: &Dataset) -> Result<Vec<(ModelKind, MetricsReport)>, String> {
    let plans = [
        (ModelKind::Mlp, TrainConfig { epochs: 30, batch_size: 32, learning_rate: 1e-3, seed: 8, ..Default::default() }),
        (ModelKind::CnnLstm, TrainConfig { epochs: 2, batch_size: 32, learning_rate: 5e-4, seed: 8, ..Default::default() }),
    ];
    let mut out = Vec::new();
    for (kind, cfg) in plans {
        let mut m = build_model(&ModelSpec::default_for(kind), 8).map_err(|e| e.to_string())?;
        fit(&mut m, train, test, &cfg).map_err(|e| e.to_string())?;
        let pred = m.predict_labels(&test.rows(), 0.5).map_err(|e| e.to_string())?;
        out.push((kind, metrics(&test.labels(), &pred).map_err(|e| e.to_string())?));
    }
    Ok(out)
}

fn c8_synthetic_end_to_end() -> Outcome {
    let train = synth_generate(800, 800, 801);
    let test = synth_generate(200, 200, 802);
    let first = end_to_end_metrics(&train, &test)?;
    let second = end_to_end_metrics(&train, &test)?;
    let json = |r: &[(ModelKind, MetricsReport)]| {
        serde_json::to_string_pretty(&r.iter().map(|(k, m)| (k.name(), m)).collect::<Vec<_>>()).unwrap()
    };
    let identical = json(&first) == json(&second);
    let accs: Vec<String> = first.iter().map(|(k, m)| format!("{} {:.4}", k.name(), m.accuracy)).collect();
    ensure(
        identical && first.iter().all(|(_, m)| m.accuracy >= 0.95),
        format!("test accuracy {}; metrics JSON identical across reruns: {identical}", accs.join(", ")),
    )
}

fn c9_ordered_split_degradation() -> Outcome {
    let d = synth_generate(300, 300, 9).sorted_by_label(Label::Malware);
    let spec = ModelSpec::default_for(ModelKind::Mlp);
    let cfg = TrainConfig { epochs: 30, batch_size: 32, learning_rate: 1e-3, ..Default::default() };
    let grid: Vec<SweepCell> = [CellSplit::Random, CellSplit::TopDown, CellSplit::BottomUp]
        .into_iter()
        .map(|split| SweepCell { legit_frac: 1.0, split, train_frac: 0.5 })
        .collect();
    let r = sweep_table5(&d, &grid, &spec, &cfg, 9, 1).map_err(|e| e.to_string())?;
    let acc: Vec<f64> = r.rows.iter().map(|row| row.accuracy.unwrap_or(f64::NAN)).collect();
    ensure(
        acc[0] > acc[1] && acc[0] > acc[2],
        format!("class-sorted 50/50 file, train_frac 0.5: random {:.4}, top-down {:.4}, bottom-up {:.4}", acc[0], acc[1], acc[2]),
    )
}

fn mlp_accuracy(train: &Dataset, test: &Dataset, cfg: &TrainConfig) -> Result<f64, String> {
    let mut m = build_model(&ModelSpec::default_for(ModelKind::Mlp), cfg.seed).map_err(|e| e.to_string())?;
    fit(&mut m, train, test, cfg).map_err(|e| e.to_string())?;
    let pred = m.predict_labels(&test.rows(), 0.5).map_err(|e| e.to_string())?;
    Ok(metrics(&test.labels(), &pred).map_err(|e| e.to_string())?.accuracy)
}

/// `None` when the external dataset is not configured.
fn c10_reference_numbers() -> Option<Outcome> {
    let path = std::env::var("MALXAI_DATASET").ok()?;
    Some((|| {
        let d = load_csv(&path).map_err(|e| e.to_string())?;
        let cfg = TrainConfig { epochs: 150, batch_size: 512, seed: 10, ..Default::default() };
        let spec = SplitSpec::new(SplitMode::Random { seed: 10 }, 0.8);
        let (train, test) = split(&d, &spec).map_err(|e| e.to_string())?;
        let unbalanced = mlp_accuracy(&train, &test, &cfg)?;
        let balanced = balance_undersample(&d, 10).map_err(|e| e.to_string())?;
        let (btrain, btest) = split(&balanced, &spec).map_err(|e| e.to_string())?;
        let balanced_acc = mlp_accuracy(&btrain, &btest, &TrainConfig { batch_size: 150, ..cfg.clone() })?;
        let oversampled = smote(&d, &SmoteConfig { seed: 10, ..Default::default() }).map_err(|e| e.to_string())?;
        let (strain, stest) = split(&oversampled, &spec).map_err(|e| e.to_string())?;
        let smote_acc = mlp_accuracy(&strain, &stest, &cfg)?;
        ensure(
            (unbalanced - 0.9835).abs() <= 0.015 && (balanced_acc - 0.78).abs() <= 0.06 && smote_acc >= 0.95,
            format!(
                "unbalanced {unbalanced:.4} (0.9835 +/- 0.015), undersampled {balanced_acc:.4} (0.78 +/- 0.06), \
                 SMOTE {smote_acc:.4} (>= 0.95; synthetic rows on both sides of the split inflate this)"
            ),
        )
    })())
}

#[test]
fn acceptance_criteria() {
    let criteria: [(u32, &str, fn() -> Outcome); 9] = [
        (1, "parameter exactness", c1_param_counts),
        (2, "gradient correctness", c2_gradients),
        (3, "Shapley exactness", c3_shapley_exactness),
        (4, "sampling-estimator convergence", c4_permutation_convergence),
        (5, "LIME fidelity", c5_lime_fidelity),
        (6, "split-protocol fidelity", c6_split_protocol),
        (7, "XOR learnability", c7_xor),
        (8, "synthetic end-to-end", c8_synthetic_end_to_end),
        (9, "ordered-split degradation", c9_ordered_split_degradation),
    ];
    let mut failed = Vec::new();
    for (id, name, run) in criteria {
        let t = Instant::now();
        let outcome = run();
        let secs = t.elapsed().as_secs_f64();
        match &outcome {
            Ok(detail) => println!("criterion {id:>2} PASS  {name}: {detail} [{secs:.1}s]"),
            Err(detail) => {
                println!("criterion {id:>2} FAIL  {name}: {detail} [{secs:.1}s]");
                failed.push(id);
            }
        }
    }
    match c10_reference_numbers() {
        None => println!("criterion 10 SKIP  reference-number reproduction: set MALXAI_DATASET to the API-call CSV"),
        Some(Ok(detail)) => println!("criterion 10 PASS  reference-number reproduction: {detail}"),
        Some(Err(detail)) => {
            println!("criterion 10 FAIL  reference-number reproduction: {detail}");
            failed.push(10);
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
