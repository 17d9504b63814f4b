//! Property tests of the cross-module invariants. Structures are drawn from
//! a proptest-chosen seed so every case is reproducible from its seed alone.

use std::collections::HashSet;

use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use timegraphs::classifier::{Ablation, Classifier, ClassifierConfig, LabelSpace};
use timegraphs::datasets::{slice_windows, split, LabeledSequence};
use timegraphs::evaluation::{exact_match, macro_prf, mean_average_precision};
use timegraphs::event_model::{EventModel, EventModelConfig};
use timegraphs::graph::{
    build_level0, validate, BuilderConfig, EdgeKind, LevelGraph, SnapshotEdge, SnapshotGraph, SnapshotNode,
    StreamingBuilder,
};
use timegraphs::hierarchy::{build_hierarchy, HierarchyConfig};
use timegraphs::numerics::{Activation, Matrix, Parameters, Tape};

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn sequence(r: &mut ChaCha8Rng, min_frames: usize) -> Vec<SnapshotGraph> {
    let entities = r.gen_range(1..=5);
    let frames = r.gen_range(min_frames..=10);
    let mut t = 0.0;
    (0..frames)
        .map(|_| {
            t += r.gen_range(0.5..1.5);
            let mut s = SnapshotGraph::new(t);
            let mut present: Vec<usize> = (0..entities).filter(|_| r.gen_bool(0.75)).collect();
            if present.is_empty() {
                present.push(r.gen_range(0..entities));
            }
            present.shuffle(r);
            for &e in &present {
                s.nodes.push(SnapshotNode {
                    entity_id: format!("e{e}"),
                    node_type: "agent".into(),
                    features: (0..3).map(|_| r.gen_range(-1.0..1.0)).collect(),
                });
            }
            for a in 0..present.len() {
                for b in a + 1..present.len() {
                    if r.gen_bool(0.4) {
                        s.edges.push(SnapshotEdge {
                            src: a,
                            dst: b,
                            edge_type: "near".into(),
                            features: None,
                        });
                    }
                }
            }
            s
        })
        .collect()
}

fn entities(s: &SnapshotGraph) -> HashSet<&str> {
    s.nodes.iter().map(|n| n.entity_id.as_str()).collect()
}

fn event_model(seed: u64, activation: Activation) -> EventModel {
    let config = EventModelConfig {
        embed_dim: 4,
        hidden_dim: 5,
        activation,
        ..EventModelConfig::default()
    };
    EventModel::new(3, config, &mut rng(seed)).unwrap()
}

fn level_graph(r: &mut ChaCha8Rng, n: usize) -> LevelGraph {
    let mut features = Matrix::zeros(n, 3);
    for v in 0..n {
        for x in features.row_mut(v) {
            *x = r.gen_range(-1.0..1.0);
        }
    }
    let mut edges = Vec::new();
    for a in 0..n {
        for b in a + 1..n {
            if r.gen_bool(0.3) {
                edges.push((a, b));
            }
        }
    }
    LevelGraph::new(features, &edges).unwrap()
}

/// Free-standing leaves for finite differences over tape expressions.
#[derive(Clone)]
struct Leaves(Vec<Matrix>);

impl Parameters for Leaves {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, &'a Matrix)) {
        for (i, m) in self.0.iter().enumerate() {
            f(format!("{prefix}{i}"), m);
        }
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Matrix)) {
        for (i, m) in self.0.iter_mut().enumerate() {
            f(format!("{prefix}{i}"), m);
        }
    }
}

fn random_matrix(r: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
    Matrix::from_vec(rows, cols, (0..rows * cols).map(|_| r.gen_range(-1.0..1.0)).collect()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn streaming_matches_batch_and_validates(seed in any::<u64>(), bridge in any::<bool>()) {
        let seq = sequence(&mut rng(seed), 1);
        let config = BuilderConfig { bridge_gaps: bridge, ..BuilderConfig::default() };
        let batch = build_level0(&seq, &config).unwrap();
        let mut b = StreamingBuilder::new(config);
        for s in &seq {
            b.ingest(s).unwrap();
        }
        prop_assert_eq!(b.finish().to_json().unwrap(), batch.to_json().unwrap());
        prop_assert!(validate(&batch).is_empty());
    }

    #[test]
    fn temporal_edges_link_consecutive_appearances(seed in any::<u64>()) {
        let seq = sequence(&mut rng(seed), 1);
        let consecutive: usize = seq.windows(2).map(|w| entities(&w[0]).intersection(&entities(&w[1])).count()).sum();
        let tkg = build_level0(&seq, &BuilderConfig::default()).unwrap();
        prop_assert_eq!(tkg.edges_of_kind(EdgeKind::Temporal).count(), consecutive);

        let bridged = build_level0(&seq, &BuilderConfig { bridge_gaps: true, ..BuilderConfig::default() }).unwrap();
        let appearances: usize = seq.iter().map(|s| s.nodes.len()).sum();
        let distinct: HashSet<&str> = seq.iter().flat_map(entities).collect();
        prop_assert_eq!(bridged.edges_of_kind(EdgeKind::Temporal).count(), appearances - distinct.len());
    }

    #[test]
    fn tape_gradients_match_finite_differences(seed in any::<u64>(), n in 1usize..5, k in 1usize..5, m in 1usize..4) {
        let mut r = rng(seed);
        let leaves = Leaves(vec![
            random_matrix(&mut r, n, k),
            random_matrix(&mut r, k, m),
            random_matrix(&mut r, 1, m),
            random_matrix(&mut r, n, m),
        ]);
        let rows: Vec<usize> = (0..n).map(|_| r.gen_range(0..n)).collect();
        let f = |p: &Leaves| -> timegraphs::Result<(f64, Leaves)> {
            let mut tape = Tape::new();
            let v: Vec<_> = p.0.iter().map(|x| tape.leaf(x.clone())).collect();
            let h = tape.matmul(v[0], v[1])?;
            let h = tape.add_row(h, v[2])?;
            let a = tape.tanh(h);
            let g = tape.sigmoid(v[3]);
            let prod = tape.mul(a, g)?;
            let picked = tape.gather_rows(prod, rows.clone())?;
            let both = tape.concat_cols(&[picked, v[3]])?;
            let ls = tape.log_sigmoid(both);
            let mean = tape.mean_rows(ls)?;
            let out = tape.sum(mean);
            let grads = tape.backward(out)?;
            Ok((tape.value(out).item(), Leaves(v.iter().map(|x| grads.wrt(*x)).collect())))
        };
        let report = timegraphs::numerics::grad_check(&leaves, 1e-5, f).unwrap();
        prop_assert!(report.max_relative_error < 1e-4, "{:?}", report);
    }

    #[test]
    fn criterion_is_order_free_and_nonpositive(seed in any::<u64>(), n in 2usize..8) {
        let mut r = rng(seed);
        let g = level_graph(&mut r, n);
        let model = event_model(seed, Activation::Tanh);
        let mut omega: Vec<usize> = (0..n).filter(|_| r.gen_bool(0.6)).collect();
        if omega.is_empty() {
            omega.push(0);
        }
        let c = model.criterion_value(&g, &omega, None, &mut r).unwrap();
        omega.shuffle(&mut r);
        let shuffled = model.criterion_value(&g, &omega, None, &mut r).unwrap();
        prop_assert!((c - shuffled).abs() < 1e-12);
        prop_assert!(c <= 0.0);
    }

    #[test]
    fn greedy_is_deterministic_with_scores_in_unit_interval(seed in any::<u64>(), n in 1usize..9) {
        let mut r = rng(seed);
        let g = level_graph(&mut r, n);
        let model = event_model(seed, Activation::Relu);
        let k = r.gen_range(1..=n);
        let a = model.greedy_select(&g, k).unwrap();
        let b = model.greedy_select(&g, k).unwrap();
        prop_assert_eq!(&a, &b);
        prop_assert_eq!(a.local.len(), k);
        prop_assert!(a.scores.iter().all(|s| (0.0..=1.0).contains(s)));
        let distinct: HashSet<_> = a.local.iter().collect();
        prop_assert_eq!(distinct.len(), k);
    }

    #[test]
    fn hierarchy_extends_level_zero_and_shrinks(seed in any::<u64>()) {
        let mut r = rng(seed);
        let level0 = build_level0(&sequence(&mut r, 2), &BuilderConfig::default()).unwrap();
        let model = event_model(seed, Activation::Relu);
        let config = HierarchyConfig { levels: 2, ..HierarchyConfig::default() };
        let tkg = build_hierarchy(&level0, &model, &config).unwrap();
        prop_assert_eq!(&tkg.to_json().unwrap(), &build_hierarchy(&level0, &model, &config).unwrap().to_json().unwrap());
        prop_assert!(validate(&tkg).is_empty());

        // lower levels untouched apart from the recorded pooling scores
        let strip = |n: &timegraphs::graph::TkgNode| timegraphs::graph::TkgNode { attention_score: None, ..n.clone() };
        let below: Vec<_> = tkg.nodes()[..level0.nodes().len()].iter().map(strip).collect();
        prop_assert_eq!(below, level0.nodes().to_vec());
        for e in level0.edges() {
            prop_assert!(tkg.edges().contains(e));
        }
        for l in 1..tkg.level_count() {
            prop_assert!(tkg.level_nodes(l).len() < tkg.level_nodes(l - 1).len());
            for &s in tkg.level_nodes(l) {
                let members: Vec<_> = tkg
                    .edges_of_kind(EdgeKind::Hierarchy)
                    .filter(|e| e.src == s)
                    .collect();
                prop_assert!(!members.is_empty());
                for e in members {
                    prop_assert_eq!(tkg.node(e.dst).unwrap().level, l - 1);
                }
            }
        }
    }

    #[test]
    fn flat_logits_ignore_node_order_and_upper_levels(seed in any::<u64>()) {
        let mut r = rng(seed);
        let seq = sequence(&mut r, 2);
        let mut permuted = seq.clone();
        for s in &mut permuted {
            let order: Vec<usize> = {
                let mut o: Vec<usize> = (0..s.nodes.len()).collect();
                o.shuffle(&mut r);
                o
            };
            let mut position = vec![0; order.len()];
            for (new, &old) in order.iter().enumerate() {
                position[old] = new;
            }
            s.nodes = order.iter().map(|&i| s.nodes[i].clone()).collect();
            for e in &mut s.edges {
                e.src = position[e.src];
                e.dst = position[e.dst];
            }
        }
        let space = LabelSpace::uniform(vec!["a".into(), "b".into(), "c".into()]);
        let config = ClassifierConfig { hidden_dim: 5, layers: 2, threshold: 0.5 };
        let c = Classifier::new(3, 2, config, space, Ablation::NoSupernodes, &mut rng(seed ^ 1)).unwrap();

        let base = build_level0(&seq, &BuilderConfig::default()).unwrap();
        let z = c.logits(&c.input(&base).unwrap()).unwrap();
        let other = build_level0(&permuted, &BuilderConfig::default()).unwrap();
        let zp = c.logits(&c.input(&other).unwrap()).unwrap();
        for (a, b) in z.iter().zip(&zp) {
            prop_assert!((a - b).abs() < 1e-9, "{} vs {}", a, b);
        }

        let lifted = build_hierarchy(&base, &event_model(seed, Activation::Relu), &HierarchyConfig { levels: 2, ..HierarchyConfig::default() }).unwrap();
        prop_assert_eq!(c.logits(&c.input(&lifted).unwrap()).unwrap(), z);
    }

    #[test]
    fn windows_cover_every_admissible_start(frames in 0usize..40, window in 1usize..10, stride in 1usize..10, offset in 0usize..6) {
        let seq = LabeledSequence {
            snapshots: (0..frames).map(|t| SnapshotGraph::new(t as f64)).collect(),
            labels: (0..frames).map(|t| vec![(t % 2) as f64]).collect(),
        };
        let got = slice_windows(&seq, window, stride, offset).unwrap();
        let expected: Vec<usize> = (0..frames)
            .step_by(stride)
            .filter(|&s| s + window + offset <= frames)
            .collect();
        prop_assert_eq!(got.iter().map(|w| w.start).collect::<Vec<_>>(), expected);
        for w in &got {
            prop_assert_eq!(w.snapshots.len(), window);
            prop_assert_eq!(w.snapshots[0].timestamp, w.start as f64);
            prop_assert_eq!(&w.label, &seq.labels[w.start + window - 1 + offset]);
        }
    }

    #[test]
    fn split_partitions_the_sequences(n in 0usize..200, seed in any::<u64>()) {
        let s = split(n, [0.7, 0.2, 0.1], seed).unwrap();
        let mut all: Vec<usize> = s.train.iter().chain(&s.val).chain(&s.test).copied().collect();
        all.sort_unstable();
        prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
        prop_assert_eq!(split(n, [0.7, 0.2, 0.1], seed).unwrap(), s);
    }

    #[test]
    fn metrics_ignore_sample_order_and_monotone_rescoring(seed in any::<u64>(), n in 1usize..40, c in 1usize..5) {
        let mut r = rng(seed);
        let truth: Vec<Vec<bool>> = (0..n).map(|_| (0..c).map(|_| r.gen_bool(0.3)).collect()).collect();
        let preds: Vec<Vec<bool>> = (0..n).map(|_| (0..c).map(|_| r.gen_bool(0.4)).collect()).collect();
        let scores: Vec<Vec<f64>> = (0..n).map(|_| (0..c).map(|_| r.gen_range(-2.0..2.0)).collect()).collect();
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut r);
        let perm = |m: &[Vec<bool>]| order.iter().map(|&i| m[i].clone()).collect::<Vec<_>>();
        let perm_scores: Vec<Vec<f64>> = order.iter().map(|&i| scores[i].clone()).collect();

        prop_assert_eq!(exact_match(&preds, &truth).unwrap(), exact_match(&perm(&preds), &perm(&truth)).unwrap());
        let a = macro_prf(&preds, &truth).unwrap();
        let b = macro_prf(&perm(&preds), &perm(&truth)).unwrap();
        prop_assert!((a.f1 - b.f1).abs() < 1e-12 && (a.precision - b.precision).abs() < 1e-12);
        prop_assert!(exact_match(&truth, &truth).unwrap() == 1.0);
        if preds != truth {
            prop_assert!(exact_match(&preds, &truth).unwrap() < 1.0);
        }

        if truth.iter().flatten().any(|&y| y) {
            let map = mean_average_precision(&scores, &truth).unwrap();
            // ties are broken by sample index, so a reorder keeps the value
            // only when scores are distinct, which a continuous draw gives
            let shuffled = mean_average_precision(&perm_scores, &perm(&truth)).unwrap();
            prop_assert!((map - shuffled).abs() < 1e-12);
            let warped: Vec<Vec<f64>> = scores.iter().map(|r| r.iter().map(|x| (2.0 * x).exp() + x).collect()).collect();
            prop_assert!((map - mean_average_precision(&warped, &truth).unwrap()).abs() < 1e-12);
        }
    }
}
