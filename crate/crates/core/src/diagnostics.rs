//! Finite-difference checks of every training loss on small seeded toy
//! problems, shared by the `gradcheck` command and the test suites.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::classifier::{classification_loss, forward, Ablation, Classifier, ClassifierConfig, LabelSpace};
use crate::config::RunConfig;
use crate::error::Result;
use crate::event_model::{pyramid_forward, EventModel, EventModelConfig, EventModelParams};
use crate::graph::{build_level0, BuilderConfig, LevelGraph, SnapshotEdge, SnapshotGraph, SnapshotNode, TemporalKnowledgeGraph};
use crate::hierarchy::build_hierarchy;
use crate::model::{ModelBundle, TrainingMode};
use crate::numerics::{grad_check, GradCheckReport, Matrix, Tape};
use crate::train::{joint_step, JointParams};

pub const DEFAULT_EPS: f64 = 1e-5;

/// Toy widths are capped so a full sweep over every parameter stays fast.
const MAX_TOY_WIDTH: usize = 8;
const TOY_FEATURES: usize = 3;
const TOY_CATEGORIES: usize = 4;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LossCheck {
    pub loss: String,
    pub max_relative_error: f64,
    pub parameters: usize,
}

impl LossCheck {
    fn new(loss: &str, r: GradCheckReport) -> Self {
        Self {
            loss: loss.into(),
            max_relative_error: r.max_relative_error,
            parameters: r.checked,
        }
    }
}

fn toy_event_config(config: &RunConfig) -> EventModelConfig {
    EventModelConfig {
        embed_dim: config.embed_dim.min(MAX_TOY_WIDTH),
        hidden_dim: config.event_hidden_dim.min(MAX_TOY_WIDTH),
        scales: vec![1.0, 0.5],
        ..config.event_model()
    }
}

/// Six nodes with random features and a connected random edge set.
pub fn toy_level_graph(rng: &mut impl Rng) -> Result<LevelGraph> {
    let n = 6;
    let mut features = Matrix::zeros(n, TOY_FEATURES);
    for v in 0..n {
        for x in features.row_mut(v) {
            *x = rng.gen_range(-1.0..1.0);
        }
    }
    let mut edges: Vec<(usize, usize)> = (1..n).map(|v| (rng.gen_range(0..v), v)).collect();
    for a in 0..n {
        for b in a + 1..n {
            if rng.gen_bool(0.25) && !edges.contains(&(a, b)) {
                edges.push((a, b));
            }
        }
    }
    LevelGraph::new(features, &edges)
}

/// Three frames of two interacting entities.
pub fn toy_sequence(rng: &mut impl Rng) -> Vec<SnapshotGraph> {
    (0..3)
        .map(|t| {
            let mut s = SnapshotGraph::new(t as f64);
            for i in 0..2 {
                s.nodes.push(SnapshotNode {
                    entity_id: format!("e{i}"),
                    node_type: "agent".into(),
                    features: (0..TOY_FEATURES).map(|_| rng.gen_range(-1.0..1.0)).collect(),
                });
            }
            s.edges.push(SnapshotEdge {
                src: 0,
                dst: 1,
                edge_type: "near".into(),
                features: None,
            });
            s
        })
        .collect()
}

fn toy_bundle(config: &RunConfig, rng: &mut ChaCha8Rng) -> Result<(ModelBundle, TemporalKnowledgeGraph)> {
    let event = EventModel::new(TOY_FEATURES, toy_event_config(config), rng)?;
    let hierarchy = config.hierarchy();
    let space = LabelSpace {
        categories: (0..TOY_CATEGORIES).map(|i| format!("c{i}")).collect(),
        pos_weights: vec![1.0, 2.5, 0.4, 1.0],
    };
    let cls = ClassifierConfig {
        hidden_dim: config.hidden_dim.min(MAX_TOY_WIDTH),
        ..config.classifier()
    };
    let classifier = Classifier::new(TOY_FEATURES, hierarchy.levels, cls, space, Ablation::None, rng)?;
    let level0 = build_level0(&toy_sequence(rng), &BuilderConfig::default())?;
    let bundle = ModelBundle {
        mode: TrainingMode::EndToEnd,
        builder: BuilderConfig::default(),
        hierarchy,
        event: Some(event),
        classifier,
    };
    Ok((bundle, level0))
}

const TARGET: [f64; TOY_CATEGORIES] = [1.0, 0.0, 1.0, 0.0];

/// Pyramid loss of the event model on a six-node graph with two scales.
pub fn check_hierarchy_loss(config: &RunConfig, eps: f64) -> Result<LossCheck> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let graph = toy_level_graph(&mut rng)?;
    let model = EventModel::new(TOY_FEATURES, toy_event_config(config), &mut rng)?;
    let report = grad_check(&model.params, eps, |p: &EventModelParams| {
        let probe = EventModel {
            config: model.config.clone(),
            params: p.clone(),
        };
        let mut tape = Tape::new();
        let vars = p.bind(&mut tape);
        let out = pyramid_forward(&mut tape, &probe, &vars, &graph, &mut ChaCha8Rng::seed_from_u64(0))?;
        let g = tape.backward(out.loss)?;
        Ok((tape.value(out.loss).item(), vars.map(&mut |v| g.wrt(*v))))
    })?;
    Ok(LossCheck::new("hierarchy", report))
}

/// Weighted multi-label loss over four categories on a built hierarchy.
pub fn check_classification_loss(config: &RunConfig, eps: f64) -> Result<LossCheck> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let (bundle, level0) = toy_bundle(config, &mut rng)?;
    let tkg = build_hierarchy(&level0, bundle.event.as_ref().expect("toy has an event model"), &bundle.hierarchy)?;
    let c = &bundle.classifier;
    let input = c.input(&tkg)?;
    let report = grad_check(&c.params, eps, |p| {
        let mut tape = Tape::new();
        let vars = p.bind(&mut tape);
        let z = forward(&mut tape, &vars, &input, None)?;
        let loss = classification_loss(&mut tape, z, &TARGET, &c.label_space)?;
        let g = tape.backward(loss)?;
        Ok((tape.value(loss).item(), vars.map(&mut |v| g.wrt(*v))))
    })?;
    Ok(LossCheck::new("classification", report))
}

/// Joint loss mid-schedule, through the attention column and the criterion.
pub fn check_e2e_loss(config: &RunConfig, eps: f64) -> Result<LossCheck> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let (bundle, level0) = toy_bundle(config, &mut rng)?;
    let params = JointParams {
        event: bundle.event.as_ref().expect("toy has an event model").params.clone(),
        classifier: bundle.classifier.params.clone(),
    };
    let report = grad_check(&params, eps, |p: &JointParams| {
        let mut probe = bundle.clone();
        if let Some(e) = probe.event.as_mut() {
            e.params = p.event.clone();
        }
        probe.classifier.params = p.classifier.clone();
        let mut tape = Tape::new();
        let vars = p.map(&mut |m| tape.leaf(m.clone()));
        let mut step_rng = ChaCha8Rng::seed_from_u64(0);
        let (_, loss) = joint_step(&mut tape, &probe, &vars, &level0, &TARGET, 1, 3, &mut step_rng)?;
        let g = tape.backward(loss)?;
        Ok((tape.value(loss).item(), vars.map(&mut |v| g.wrt(*v))))
    })?;
    Ok(LossCheck::new("e2e", report))
}

pub fn gradient_checks(config: &RunConfig, eps: f64) -> Result<Vec<LossCheck>> {
    Ok(vec![
        check_hierarchy_loss(config, eps)?,
        check_classification_loss(config, eps)?,
        check_e2e_loss(config, eps)?,
    ])
}
