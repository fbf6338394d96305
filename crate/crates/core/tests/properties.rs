use std::collections::BTreeSet;

use proptest::prelude::*;

use report_core::data::{
    compute_metrics, early_cutoff, filter_connected_users, generate_synthetic, kfold_split,
    parse_instances, parse_users, split, write_instances, write_users, Label, SynthConfig,
};
use report_core::encoders::{build_vocab, tokenize, tokenize_and_pad, Vocabulary};
use report_core::graphs::{build_bipartite_from_pairs, k_hop_subgraph, normalize_adjacency, SparseAdjacency};

fn labels() -> impl Strategy<Value = Vec<Label>> {
    prop::collection::vec(prop::sample::select(Label::ALL.to_vec()), 0..60)
}

fn small_synth() -> impl Strategy<Value = (SynthConfig, u64)> {
    (8usize..30, 0.0f64..1.0, any::<u64>()).prop_map(|(n, coordination, seed)| {
        (
            SynthConfig {
                n_instances: n,
                n_background_users: 25,
                pool_size: 4,
                coordination,
                ..SynthConfig::default()
            },
            seed,
        )
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn folds_partition_and_stratify(labels in labels(), k in 2usize..7, seed in any::<u64>()) {
        let folds = kfold_split(&labels, k, seed);
        prop_assert_eq!(folds.folds.len(), k);
        let mut seen: Vec<usize> = folds.folds.iter().flatten().copied().collect();
        seen.sort_unstable();
        prop_assert_eq!(seen, (0..labels.len()).collect::<Vec<_>>());
        for l in Label::ALL {
            let per_fold: Vec<usize> = folds
                .folds
                .iter()
                .map(|f| f.iter().filter(|&&i| labels[i] == l).count())
                .collect();
            let spread = per_fold.iter().max().unwrap() - per_fold.iter().min().unwrap();
            prop_assert!(spread <= 1, "{l}: {per_fold:?}");
        }
        prop_assert_eq!(kfold_split(&labels, k, seed), folds);
    }

    #[test]
    fn holdout_split_is_disjoint_and_stratified(labels in labels(), ratio in 0.05f64..0.95, seed in any::<u64>()) {
        let (train, test) = split(&labels, ratio, seed);
        let a: BTreeSet<usize> = train.iter().copied().collect();
        prop_assert!(test.iter().all(|i| !a.contains(i)));
        prop_assert_eq!(train.len() + test.len(), labels.len());
        for l in Label::ALL {
            let n = labels.iter().filter(|&&x| x == l).count();
            let t = train.iter().filter(|&&i| labels[i] == l).count();
            prop_assert_eq!(t, (ratio * n as f64).round() as usize);
        }
    }

    #[test]
    fn user_filter_is_idempotent((cfg, seed) in small_synth()) {
        let (ds, _) = generate_synthetic(&cfg, seed).unwrap();
        let once = filter_connected_users(&ds);
        prop_assert_eq!(&filter_connected_users(&once), &once);
        once.validate().unwrap();
    }

    #[test]
    fn cutoff_is_monotone((cfg, seed) in small_synth(), a in 0.0f64..200.0, b in 0.0f64..200.0) {
        let (ds, _) = generate_synthetic(&cfg, seed).unwrap();
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let early = early_cutoff(&ds, lo);
        let late = early_cutoff(&ds, hi);
        early.validate().unwrap();
        for ((e, l), full) in early.instances.iter().zip(&late.instances).zip(&ds.instances) {
            prop_assert!(e.comments.len() <= l.comments.len() && l.comments.len() <= full.comments.len());
            prop_assert!(e.users.len() <= l.users.len());
            prop_assert!(e.comments.iter().all(|c| c.delay_min <= lo));
        }
        prop_assert_eq!(early_cutoff(&late, lo), early);
    }

    #[test]
    fn jsonl_round_trip((cfg, seed) in small_synth()) {
        let (ds, _) = generate_synthetic(&cfg, seed).unwrap();
        let mut inst = Vec::new();
        write_instances(&mut inst, &ds.instances).unwrap();
        let mut users = Vec::new();
        write_users(&mut users, &ds.users).unwrap();
        prop_assert_eq!(parse_instances(inst.as_slice()).unwrap(), ds.instances.clone());
        prop_assert_eq!(parse_users(users.as_slice()).unwrap(), ds.users.clone());
    }

    #[test]
    fn normalization_is_symmetric_and_bounded(
        n in 1usize..14,
        pairs in prop::collection::vec((0usize..14, 0usize..14), 0..30),
    ) {
        let pairs: Vec<(usize, usize)> = pairs.into_iter().filter(|&(a, b)| a < n && b < n && a != b).collect();
        let adj = normalize_adjacency(&SparseAdjacency::undirected(n, &pairs).unwrap(), true).unwrap();
        let d = adj.to_dense();
        for i in 0..n {
            prop_assert!(d.get(i, i) > 0.0);
            for j in 0..n {
                prop_assert_eq!(d.get(i, j), d.get(j, i));
                prop_assert!((0.0..=1.0).contains(&d.get(i, j)));
            }
        }
    }

    #[test]
    fn k_hop_subgraph_contains_seeds(
        edges in prop::collection::vec((0usize..8, 0usize..6), 1..25),
        k in 0usize..4,
    ) {
        let named: Vec<(String, String)> = edges.iter().map(|(u, t)| (format!("u{u}"), format!("t{t}"))).collect();
        let g = build_bipartite_from_pairs(named.iter().map(|(u, t)| (u.as_str(), t.as_str())));
        let seeds: Vec<usize> = (0..g.num_tweets()).step_by(2).collect();
        let sub = k_hop_subgraph(&g, &seeds, k).unwrap();
        for (s, &t) in sub.1.seeds.iter().zip(&seeds) {
            prop_assert_eq!(sub.1.tweets[*s], t);
        }
        let bigger = k_hop_subgraph(&g, &seeds, k + 1).unwrap();
        prop_assert!(bigger.1.nodes.len() >= sub.1.nodes.len());
    }

    #[test]
    fn metrics_are_consistent(pairs in prop::collection::vec((0usize..4, 0usize..4), 1..80)) {
        let (pred, truth): (Vec<usize>, Vec<usize>) = pairs.into_iter().unzip();
        let m = compute_metrics(&pred, &truth).unwrap();
        let total: u64 = m.confusion.iter().flatten().sum();
        prop_assert_eq!(total as usize, pred.len());
        prop_assert!(m.f1.iter().all(|f| (0.0..=1.0).contains(f)));
        prop_assert!((0.0..=1.0).contains(&m.accuracy));
    }

    #[test]
    fn tokenization_is_stable(text in "[ -~]{0,60}", max_len in 1usize..12) {
        let tokens = tokenize(&text);
        prop_assert!(tokens.iter().all(|t| !t.is_empty()));
        let vocab: Vocabulary = build_vocab([tokens.as_slice()], 1);
        let seq = tokenize_and_pad(&text, &vocab, max_len);
        prop_assert_eq!(seq.ids.len(), max_len);
        prop_assert_eq!(seq.true_length, tokens.len().min(max_len));
        prop_assert!(seq.ids[seq.true_length..].iter().all(|&i| i == 0));
        prop_assert!(seq.active().iter().all(|&i| i >= 2));
        prop_assert_eq!(Vocabulary::from_json(&vocab.to_json()).unwrap(), vocab);
    }
}
