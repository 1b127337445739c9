use malxai::models::{build_model, Architecture, MlpConfig, ModelSpec};
use malxai::xai::{
    game_axioms, lime_explain, shap_exact, shap_permutation, shapley_exact, LimeConfig, ShapConfig, ShapMode,
};
use proptest::prelude::*;

/// Shapley values as the average marginal contribution over all n!
/// orderings.
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

fn table_strategy() -> impl Strategy<Value = (usize, Vec<f64>)> {
    (1usize..=6).prop_flat_map(|n| (Just(n), prop::collection::vec(-5.0f64..5.0, 1 << n)))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn enumeration_matches_orderings((n, table) in table_strategy()) {
        let exact = shapley_exact(n, |s| table[s as usize]).unwrap();
        let oracle = all_orderings(n, &table);
        for (a, b) in exact.iter().zip(&oracle) {
            prop_assert!((a - b).abs() <= 1e-9);
        }
    }

    #[test]
    fn axioms_hold_on_random_games((n, mut table) in table_strategy(), sym in any::<bool>()) {
        table[0] = 0.0;
        // Optionally make players 0 and 1 symmetric and the last a dummy.
        if n >= 3 && sym {
            let last = 1usize << (n - 1);
            for s in 0..table.len() {
                if s & last != 0 {
                    table[s] = table[s & !last];
                }
            }
            for s in 0..table.len() {
                if s & 0b11 == 0b10 {
                    table[s] = table[(s & !0b11) | 0b01];
                }
            }
        }
        let r = game_axioms(n, |s| table[s as usize]).unwrap();
        prop_assert!(r.efficiency_residual.abs() <= 1e-9);
        prop_assert!(r.max_symmetry_gap <= 1e-9);
        prop_assert!(r.max_dummy_abs <= 1e-9);
        if n >= 3 && sym {
            prop_assert!(r.dummies.contains(&(n - 1)));
            prop_assert!(r.symmetric_pairs.contains(&(0, 1)));
        }
    }

    #[test]
    fn additive_games_recover_weights(w in prop::collection::vec(-3.0f64..3.0, 1..10)) {
        let n = w.len();
        let phi = shapley_exact(n, |s| (0..n).filter(|i| s >> i & 1 == 1).map(|i| w[i]).sum()).unwrap();
        for (a, b) in phi.iter().zip(&w) {
            prop_assert!((a - b).abs() <= 1e-9);
        }
    }
}

fn interaction(rows: &[Vec<u16>]) -> Vec<f64> {
    rows.iter()
        .map(|r| {
            let a = r[0] as f64 / 306.0;
            let b = r[1] as f64 / 306.0;
            let c = r[4] as f64 / 306.0;
            1.0 / (1.0 + (-(3.0 * a * b - 2.0 * c + a)).exp())
        })
        .collect()
}

#[test]
fn permutation_estimates_track_exact_values() {
    let x: Vec<u16> = vec![250, 280, 10, 77, 300, 5, 90, 120];
    let bg: Vec<Vec<u16>> = (0..6).map(|i| (0..8).map(|j| ((i * 31 + j * 17) % 160) as u16).collect()).collect();
    let subset = Some((0..8).collect::<Vec<_>>());
    let exact_cfg = ShapConfig { mode: ShapMode::Exact, feature_subset: subset.clone(), ..Default::default() };
    let exact = shap_exact(&interaction, &x, &bg, &exact_cfg).unwrap();
    let mut misses = 0;
    for seed in 0..10 {
        let cfg = ShapConfig { feature_subset: subset.clone(), num_permutations: 100, seed, ..Default::default() };
        let e = shap_permutation(&interaction, &x, &bg, &cfg).unwrap();
        let se = e.standard_errors.as_ref().unwrap();
        for ((a, b), s) in e.attributions.iter().zip(&exact.attributions).zip(se) {
            if (a.value - b.value).abs() > 3.0 * s + 1e-12 {
                misses += 1;
            }
        }
    }
    assert!(misses <= 2, "{misses} estimates outside 3 SE");
}

#[test]
fn sign_convention_agrees_across_methods() {
    // Larger call index at position 3 raises the malware score.
    let f = |rows: &[Vec<u16>]| -> Vec<f64> {
        rows.iter().map(|r| 1.0 / (1.0 + (-(r[3] as f64 - 150.0) / 40.0).exp())).collect()
    };
    let mut x = vec![20u16; 100];
    x[3] = 290;
    let benign_typical = vec![20u16; 100];
    let lime = lime_explain(&f, &x, &benign_typical, &LimeConfig { num_samples: 500, ..Default::default() }).unwrap();
    assert_eq!(lime.attributions[0].feature, 3);
    assert!(lime.attributions[0].value > 0.0);
    let cfg = ShapConfig { mode: ShapMode::Exact, feature_subset: Some(vec![2, 3, 4]), ..Default::default() };
    let shap = shap_exact(&f, &x, &[benign_typical], &cfg).unwrap();
    assert!(shap.attributions[1].value > 0.0);
}

#[test]
fn explainers_are_deterministic_on_a_model() {
    let spec = ModelSpec::new(Architecture::Mlp(MlpConfig { hidden: vec![12] }));
    let m = build_model(&spec, 4).unwrap();
    let x: Vec<u16> = (0..100).map(|i| (i * 3 % 307) as u16).collect();
    let bg = vec![vec![1u16; 100], vec![200u16; 100]];
    let cfg = ShapConfig { feature_subset: Some((0..20).collect()), num_permutations: 20, seed: 9, ..Default::default() };
    assert_eq!(shap_permutation(&m, &x, &bg, &cfg).unwrap(), shap_permutation(&m, &x, &bg, &cfg).unwrap());
    let lc = LimeConfig { num_samples: 300, seed: 2, ..Default::default() };
    assert_eq!(lime_explain(&m, &x, &bg[0], &lc).unwrap(), lime_explain(&m, &x, &bg[0], &lc).unwrap());
}
