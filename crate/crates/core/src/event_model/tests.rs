use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::numerics::{grad_check, Activation, Adam, AdamConfig, Parameters};

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn random_graph(n: usize, dim: usize, p: f64, rng: &mut impl Rng) -> LevelGraph {
    let mut features = Matrix::zeros(n, dim);
    for v in 0..n {
        for x in features.row_mut(v) {
            *x = rng.gen_range(-1.0..1.0);
        }
    }
    let mut edges = Vec::new();
    for a in 0..n {
        for b in a + 1..n {
            if rng.gen_bool(p) {
                edges.push((a, b));
            }
        }
    }
    LevelGraph::new(features, &edges).unwrap()
}

fn small_config() -> EventModelConfig {
    EventModelConfig {
        embed_dim: 4,
        hidden_dim: 5,
        scales: vec![1.0, 0.5],
        ..EventModelConfig::default()
    }
}

fn zero_head(model: &mut EventModel) {
    model.params.similarity.visit_mut("", &mut |_, m| m.scale_assign(0.0));
}

fn exact_criterion(model: &EventModel, graph: &LevelGraph, omega: &[usize]) -> f64 {
    let hoods = Neighborhoods::compute(graph, model.config.radius);
    let table = affinity_table(&model.params, graph, &hoods).unwrap();
    criterion_from_table(&table, omega)
}

#[test]
fn neighborhood_examples() {
    let isolated = LevelGraph::new(Matrix::zeros(2, 1), &[]).unwrap();
    assert_eq!(neighborhood(&isolated, 0, 1).unwrap().members, vec![(0, 0)]);
    let path3 = LevelGraph::new(Matrix::zeros(3, 1), &[(0, 1), (1, 2)]).unwrap();
    let ids: Vec<usize> = neighborhood(&path3, 1, 1).unwrap().member_ids(&path3);
    assert_eq!(ids, vec![1, 0, 2]);
    let path4 = LevelGraph::new(Matrix::zeros(4, 1), &[(0, 1), (1, 2), (2, 3)]).unwrap();
    let mut ids = neighborhood(&path4, 0, 2).unwrap().member_ids(&path4);
    ids.sort_unstable();
    assert_eq!(ids, vec![0, 1, 2]);
}

#[test]
fn t_w_is_last_bias_when_head_weights_vanish() {
    let g = random_graph(4, 3, 0.5, &mut rng(1));
    let mut model = EventModel::new(3, small_config(), &mut rng(2)).unwrap();
    zero_head(&mut model);
    let mut tape = Tape::new();
    let vars = model.params.bind(&mut tape);
    let t = t_w(&mut tape, &vars, g.features.row(0), &neighborhood(&g, 0, 1).unwrap()).unwrap();
    assert_eq!(tape.value(t).item(), 0.0);

    model.params.similarity.layers[1].bias.set(0, 0, 0.37);
    let mut tape = Tape::new();
    let vars = model.params.bind(&mut tape);
    let t = t_w(&mut tape, &vars, g.features.row(2), &neighborhood(&g, 2, 1).unwrap()).unwrap();
    assert_eq!(tape.value(t).item(), 0.37);
}

#[test]
fn singleton_neighbourhood_transforms_its_only_member() {
    let g = LevelGraph::new(Matrix::from_rows(&[vec![0.3, -0.2], vec![1.0, 2.0]]).unwrap(), &[])
        .unwrap();
    let model = EventModel::new(2, small_config(), &mut rng(3)).unwrap();
    let p = &model.params;
    let nbr = neighborhood(&g, 0, 1).unwrap();
    assert_eq!(nbr.members, vec![(0, 0)]);

    // P = aggregator(hop_mix[0] * member_map(x_0)) with no other member
    let x = Matrix::row_vector(vec![0.3, -0.2]);
    let mut tape = Tape::new();
    let vars = p.bind(&mut tape);
    let xv = tape.leaf(x.clone());
    let mapped = vars.member_map.forward(&mut tape, xv).unwrap();
    let scaled = tape.scale(mapped, p.hop_mix.get(0, 0));
    let hood = vars.aggregator.forward(&mut tape, scaled).unwrap();
    let node = vars.encoder.forward(&mut tape, xv).unwrap();
    let direct = pair_scores(&mut tape, &vars, node, hood, &[(0, 0)]).unwrap();
    let expect = tape.value(direct).item();

    let mut tape = Tape::new();
    let vars = p.bind(&mut tape);
    let t = t_w(&mut tape, &vars, x.row(0), &nbr).unwrap();
    assert!((tape.value(t).item() - expect).abs() < 1e-14);
}

/// One-dimensional model with every weight 1 and every bias 0 evaluated by
/// hand on a star with centre 0 and leaves 1, 2, 3 and features 1..=4.
#[test]
fn star_value_matches_straight_line_evaluation() {
    let config = EventModelConfig {
        embed_dim: 1,
        hidden_dim: 1,
        scales: vec![1.0],
        ..EventModelConfig::default()
    };
    let mut model = EventModel::new(1, config, &mut rng(4)).unwrap();
    model.params.visit_mut("", &mut |name, m| {
        let fill = if name.ends_with("bias") { 0.0 } else { 1.0 };
        m.data_mut().fill(fill);
    });
    let features = Matrix::from_vec(4, 1, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
    let g = LevelGraph::new(features, &[(0, 1), (0, 2), (0, 3)]).unwrap();

    // centre: E = 1, P = 1/4 + (2+3+4)/4 = 2.5, S = 1 + 2.5
    // leaf 3: E = 4, P = 4/2 + 1/2 = 2.5, S = 4 + 2.5
    for (v, expect) in [(0, 3.5), (3, 6.5)] {
        let mut tape = Tape::new();
        let vars = model.params.bind(&mut tape);
        let t = t_w(&mut tape, &vars, g.features.row(v), &neighborhood(&g, v, 1).unwrap()).unwrap();
        assert!((tape.value(t).item() - expect).abs() < 1e-12, "node {v}");
    }
    // cross pair: E_3 = 4 against P_0 = 2.5
    let hoods = Neighborhoods::compute(&g, 1);
    let table = affinity_table(&model.params, &g, &hoods).unwrap();
    assert!((table.get(3, 0) - 6.5).abs() < 1e-12);
    assert!((table.get(0, 3) - 3.5).abs() < 1e-12);
}

#[test]
fn criterion_anchors_with_vanishing_affinity() {
    let g = random_graph(5, 3, 0.4, &mut rng(5));
    let mut model = EventModel::new(3, small_config(), &mut rng(6)).unwrap();
    zero_head(&mut model);
    let one = model.criterion_value(&g, &[2], None, &mut rng(0)).unwrap();
    assert!((one - (-0.693147)).abs() < 1e-6);
    let two = model.criterion_value(&g, &[0, 3], None, &mut rng(0)).unwrap();
    assert!((two - (-1.039721)).abs() < 1e-6);

    let hoods = Neighborhoods::compute(&g, 1);
    let mut tape = Tape::new();
    let vars = model.params.bind(&mut tape);
    let (loss, sel) = model.hierarchy_loss(&mut tape, &vars, &g, &hoods, 1, None, &mut rng(0)).unwrap();
    assert!((tape.value(loss).item() - 0.693147).abs() < 1e-6);
    assert_eq!(sel.local, vec![0]);
}

#[test]
fn criterion_rejects_bad_selections() {
    let g = random_graph(4, 2, 0.5, &mut rng(7));
    let model = EventModel::new(2, small_config(), &mut rng(8)).unwrap();
    assert!(model.criterion_value(&g, &[], None, &mut rng(0)).is_err());
    assert!(model.criterion_value(&g, &[1, 1], None, &mut rng(0)).is_err());
    assert!(model.criterion_value(&g, &[9], None, &mut rng(0)).is_err());
}

#[test]
fn full_sampling_equals_exact_and_tape_matches_table() {
    let g = random_graph(8, 3, 0.35, &mut rng(9));
    let model = EventModel::new(3, small_config(), &mut rng(10)).unwrap();
    let omega = [6, 1, 4, 0, 7];
    let exact = model.criterion_value(&g, &omega, None, &mut rng(0)).unwrap();
    let full = model.criterion_value(&g, &omega, Some(20), &mut rng(0)).unwrap();
    let more = model.criterion_value(&g, &omega, Some(500), &mut rng(0)).unwrap();
    assert!((exact - full).abs() < 1e-12);
    assert!((exact - more).abs() < 1e-12);
    assert!((exact - exact_criterion(&model, &g, &omega)).abs() < 1e-12);
}

#[test]
fn sampled_negatives_are_unbiased() {
    let g = random_graph(8, 3, 0.35, &mut rng(11));
    let model = EventModel::new(3, small_config(), &mut rng(12)).unwrap();
    let omega = [0, 2, 3, 5, 7];
    let exact = exact_criterion(&model, &g, &omega);
    let hoods = Neighborhoods::compute(&g, 1);
    let table = affinity_table(&model.params, &g, &hoods).unwrap();
    let pos: f64 = omega
        .iter()
        .map(|&v| crate::numerics::tape::scalar::log_sigmoid(table.get(v, v)))
        .sum::<f64>()
        / omega.len() as f64;

    // the positive part is deterministic; average only the sampled part
    let mut r = rng(13);
    let draws = 100_000;
    let mut acc = 0.0;
    for _ in 0..draws {
        let (pairs, w) = negative_pairs(omega.len(), Some(2), &mut r);
        acc += w * pairs
            .iter()
            .map(|&(i, j)| {
                crate::numerics::tape::scalar::log_sigmoid(-table.get(omega[i], omega[j]))
            })
            .sum::<f64>();
    }
    let estimate = pos + acc / draws as f64;
    assert!(((estimate - exact) / exact).abs() < 0.01, "{estimate} vs {exact}");

    // the tape route with m = 2 averages to the same value
    let mut r = rng(14);
    let n = 2_000;
    let mean: f64 = (0..n)
        .map(|_| model.criterion_value(&g, &omega, Some(2), &mut r).unwrap())
        .sum::<f64>()
        / n as f64;
    assert!(((mean - exact) / exact).abs() < 0.05, "{mean} vs {exact}");
}

#[test]
fn criterion_is_never_positive_and_order_invariant() {
    let mut r = rng(15);
    for trial in 0..20 {
        let g = random_graph(7, 2, 0.3, &mut r);
        let model = EventModel::new(2, small_config(), &mut rng(100 + trial)).unwrap();
        let omega = [5, 1, 3];
        let c = model.criterion_value(&g, &omega, None, &mut rng(0)).unwrap();
        let shuffled = model.criterion_value(&g, &[3, 5, 1], None, &mut rng(0)).unwrap();
        assert!(c <= 0.0);
        assert!((c - shuffled).abs() < 1e-12);
    }
}

#[test]
fn greedy_first_pick_and_exhaustive_ratio() {
    let mut r = rng(16);
    for trial in 0..10 {
        let n = r.gen_range(3..=8);
        let g = random_graph(n, 3, 0.4, &mut r);
        let model = EventModel::new(3, small_config(), &mut rng(200 + trial)).unwrap();
        let k = r.gen_range(1..=3.min(n));
        let sel = model.greedy_select(&g, k).unwrap();

        let singles: Vec<f64> = (0..n).map(|v| exact_criterion(&model, &g, &[v])).collect();
        let best = (0..n).fold(0, |b, v| if singles[v] > singles[b] { v } else { b });
        assert_eq!(sel.local[0], best);

        let mut optimum = f64::NEG_INFINITY;
        for mask in 0u32..(1 << n) {
            if mask.count_ones() as usize == k {
                let subset: Vec<usize> = (0..n).filter(|v| mask >> v & 1 == 1).collect();
                optimum = optimum.max(exact_criterion(&model, &g, &subset));
            }
        }
        let greedy = exact_criterion(&model, &g, &sel.local);
        assert!(greedy <= optimum + 1e-12);
        // losses are −C ≥ 0: the greedy loss stays within 1/0.9 of the best
        assert!(optimum / greedy >= 0.9, "trial {trial}: {greedy} vs {optimum}");
    }
}

#[test]
fn greedy_with_full_budget_selects_everything() {
    let g = random_graph(6, 2, 0.5, &mut rng(17));
    let model = EventModel::new(2, small_config(), &mut rng(18)).unwrap();
    let sel = model.greedy_select(&g, 6).unwrap();
    let mut all = sel.local.clone();
    all.sort_unstable();
    assert_eq!(all, (0..6).collect::<Vec<_>>());
    assert!(sel.scores.iter().all(|s| (0.0..=1.0).contains(s)));
    let again = model.greedy_select(&g, 6).unwrap();
    assert_eq!(sel, again);
    assert!(model.greedy_select(&g, 7).is_err());
}

#[test]
fn scores_are_sigmoid_of_self_affinity() {
    let g = random_graph(6, 2, 0.5, &mut rng(19));
    let model = EventModel::new(2, small_config(), &mut rng(20)).unwrap();
    let sel = model.greedy_select(&g, 3).unwrap();
    for (&v, &s) in sel.local.iter().zip(&sel.scores) {
        let mut tape = Tape::new();
        let vars = model.params.bind(&mut tape);
        let t = t_w(&mut tape, &vars, g.features.row(v), &neighborhood(&g, v, 1).unwrap()).unwrap();
        assert!((sigmoid(tape.value(t).item()) - s).abs() < 1e-12);
    }
}

fn loss_and_grads(
    model: &EventModel,
    params: &EventModelParams,
    g: &LevelGraph,
    k: usize,
) -> Result<(f64, EventModelParams)> {
    let probe = EventModel {
        config: model.config.clone(),
        params: params.clone(),
    };
    let hoods = Neighborhoods::compute(g, probe.config.radius);
    let mut tape = Tape::new();
    let vars = params.bind(&mut tape);
    let (loss, _) = probe.hierarchy_loss(&mut tape, &vars, g, &hoods, k, None, &mut rng(0))?;
    let grads = tape.backward(loss)?;
    Ok((tape.value(loss).item(), vars.map(&mut |v| grads.wrt(*v))))
}

#[test]
fn hierarchy_loss_gradients_match_finite_differences() {
    let g = random_graph(6, 3, 0.4, &mut rng(21));
    let config = EventModelConfig {
        activation: Activation::Tanh,
        radius: 2,
        ..small_config()
    };
    let model = EventModel::new(3, config, &mut rng(22)).unwrap();
    let report = grad_check(&model.params, 1e-6, |p| loss_and_grads(&model, p, &g, 3)).unwrap();
    assert!(report.max_relative_error < 1e-4, "{report:?}");
}

#[test]
fn one_adam_epoch_lowers_the_loss() {
    let g = random_graph(8, 3, 0.35, &mut rng(23));
    let mut model = EventModel::new(3, small_config(), &mut rng(24)).unwrap();
    let (before, grads) = loss_and_grads(&model, &model.params, &g, 4).unwrap();
    let mut adam = Adam::new(AdamConfig::default());
    adam.step(&mut model.params, &grads).unwrap();
    let (after, _) = loss_and_grads(&model, &model.params, &g, 4).unwrap();
    assert!(after < before, "{after} !< {before}");
}

#[test]
fn checkpoint_round_trip_restores_parameters() {
    let model = EventModel::new(3, small_config(), &mut rng(25)).unwrap();
    let ck = model.to_checkpoint("abc").unwrap();
    let back = EventModel::from_checkpoint(&Checkpoint::from_json(&ck.to_json().unwrap()).unwrap())
        .unwrap();
    assert_eq!(back, model);
}

fn pyramid_model(scales: Vec<f64>, seed: u64) -> EventModel {
    let config = EventModelConfig {
        scales,
        ..small_config()
    };
    EventModel::new(3, config, &mut rng(seed)).unwrap()
}

#[test]
fn single_unpooled_scale_reads_out_mean_embedding() {
    let g = random_graph(6, 3, 0.4, &mut rng(26));
    let model = pyramid_model(vec![1.0], 27);
    let mut tape = Tape::new();
    let vars = model.params.bind(&mut tape);
    let out = pyramid_forward(&mut tape, &model, &vars, &g, &mut rng(0)).unwrap();
    assert_eq!(out.selections[0].local.len(), 6);

    let mut t2 = Tape::new();
    let v2 = model.params.bind(&mut t2);
    let x = t2.leaf(g.features.clone());
    let z = v2.encoder.forward(&mut t2, x).unwrap();
    let m = t2.mean_rows(z).unwrap();
    let (a, b) = (tape.value(out.readout), t2.value(m));
    assert_eq!(a.shape(), b.shape());
    for (x, y) in a.data().iter().zip(b.data()) {
        assert!((x - y).abs() < 1e-12);
    }
}

#[test]
fn two_scales_halve_the_graph() {
    let g = random_graph(10, 3, 0.3, &mut rng(28));
    let model = pyramid_model(vec![1.0, 0.5], 29);
    let mut tape = Tape::new();
    let vars = model.params.bind(&mut tape);
    let out = pyramid_forward(&mut tape, &model, &vars, &g, &mut rng(0)).unwrap();
    assert_eq!(out.graphs[0].len(), 10);
    assert_eq!(out.graphs[1].len(), 5);
    assert_eq!(tape.value(out.readout).shape(), (1, 2 * model.config.embed_dim));

    // total loss is the sum of the per-scale hierarchy losses
    let sum: f64 = out.losses.iter().map(|&l| tape.value(l).item()).sum();
    assert!((tape.value(out.loss).item() - sum).abs() < 1e-12);
    let hoods = Neighborhoods::compute(&out.graphs[0], 1);
    let mut t2 = Tape::new();
    let v2 = model.params.bind(&mut t2);
    let (l1, _) = model.hierarchy_loss(&mut t2, &v2, &out.graphs[0], &hoods, 5, None, &mut rng(0)).unwrap();
    assert!((t2.value(l1).item() - tape.value(out.losses[1]).item()).abs() < 1e-12);
}

#[test]
fn zeroed_crossings_reduce_to_independent_scales() {
    let g = random_graph(10, 3, 0.3, &mut rng(30));
    let mut model = pyramid_model(vec![0.8, 0.5, 0.5], 31);
    for m in model.params.cross_down.iter_mut().chain(&mut model.params.cross_up) {
        m.scale_assign(0.0);
    }
    let mut tape = Tape::new();
    let vars = model.params.bind(&mut tape);
    let out = pyramid_forward(&mut tape, &model, &vars, &g, &mut rng(0)).unwrap();
    assert_eq!(
        out.graphs.iter().map(LevelGraph::len).collect::<Vec<_>>(),
        vec![8, 4, 2]
    );
    for (s, graph) in out.graphs.iter().enumerate() {
        let mut t2 = Tape::new();
        let v2 = model.params.bind(&mut t2);
        let x = t2.leaf(graph.features.clone());
        let z = v2.encoder.forward(&mut t2, x).unwrap();
        assert_eq!(tape.value(out.scale_features[s]), t2.value(z), "scale {s}");
    }

    // with live crossings the coarse scales do change
    let live = pyramid_model(vec![0.8, 0.5, 0.5], 31);
    let mut t3 = Tape::new();
    let v3 = live.params.bind(&mut t3);
    let out3 = pyramid_forward(&mut t3, &live, &v3, &g, &mut rng(0)).unwrap();
    let x = t3.leaf(out3.graphs[1].features.clone());
    let plain = v3.encoder.forward(&mut t3, x).unwrap();
    assert_ne!(t3.value(out3.scale_features[1]), t3.value(plain));
}

#[test]
fn pyramid_gradients_match_finite_differences() {
    let g = random_graph(6, 2, 0.4, &mut rng(32));
    let config = EventModelConfig {
        activation: Activation::Tanh,
        scales: vec![1.0, 0.5],
        ..small_config()
    };
    let model = EventModel::new(2, config, &mut rng(33)).unwrap();
    let f = |p: &EventModelParams| -> Result<(f64, EventModelParams)> {
        let probe = EventModel {
            config: model.config.clone(),
            params: p.clone(),
        };
        let mut tape = Tape::new();
        let vars = p.bind(&mut tape);
        let out = pyramid_forward(&mut tape, &probe, &vars, &g, &mut rng(0))?;
        let r = tape.sum(out.readout);
        let total = tape.add(out.loss, r)?;
        let grads = tape.backward(total)?;
        Ok((tape.value(total).item(), vars.map(&mut |v| grads.wrt(*v))))
    };
    let report = grad_check(&model.params, 1e-6, f).unwrap();
    assert!(report.max_relative_error < 1e-4, "{report:?}");
}

#[test]
fn pyramid_rejects_empty_graphs() {
    let g = LevelGraph::new(Matrix::zeros(0, 3), &[]).unwrap();
    let model = pyramid_model(vec![1.0], 34);
    let mut tape = Tape::new();
    let vars = model.params.bind(&mut tape);
    assert!(pyramid_forward(&mut tape, &model, &vars, &g, &mut rng(0)).is_err());
}
