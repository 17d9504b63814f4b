//! End-to-end recipes over a dataset: splitting into windows, pretraining,
//! two-phase and joint training.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::classifier::{Ablation, Classifier, GraphInput, LabelSpace};
use crate::config::RunConfig;
use crate::datasets::{slice_windows, split, Dataset, Split, WindowSample};
use crate::error::{Error, Result};
use crate::event_model::EventModel;
use crate::graph::{build_level0, LevelGraph, TemporalKnowledgeGraph};
use crate::model::{effective_builder, ModelBundle, TrainingMode};
use crate::train::{pretrain_event_model, train_classifier, train_end_to_end, EpochRecord, Logger, TrainOutcome};

// Offsets added to the run seed so each stage draws an independent stream.
const PRETRAIN_INIT: u64 = 1;
const PRETRAIN_LOOP: u64 = 2;
const CLASSIFIER_INIT: u64 = 3;
const CLASSIFIER_LOOP: u64 = 4;

#[derive(Clone, Debug, Default)]
pub struct WindowSplits {
    pub split: Split,
    pub train: Vec<WindowSample>,
    pub val: Vec<WindowSample>,
    pub test: Vec<WindowSample>,
}

pub fn windows_of(dataset: &Dataset, indices: &[usize], config: &RunConfig, offset: usize) -> Result<Vec<WindowSample>> {
    let mut out = Vec::new();
    for &i in indices {
        out.extend(slice_windows(&dataset.sequences[i], config.window, config.stride, offset)?);
    }
    Ok(out)
}

/// Sequence-level split, then windows of each part.
pub fn window_splits(dataset: &Dataset, config: &RunConfig) -> Result<WindowSplits> {
    let s = split(dataset.len(), config.split, config.seed)?;
    Ok(WindowSplits {
        train: windows_of(dataset, &s.train, config, 0)?,
        val: windows_of(dataset, &s.val, config, 0)?,
        test: windows_of(dataset, &s.test, config, 0)?,
        split: s,
    })
}

fn feature_dim(samples: &[WindowSample]) -> Result<usize> {
    samples
        .iter()
        .flat_map(|s| &s.snapshots)
        .find_map(|g| g.feature_dim())
        .ok_or_else(|| Error::InvalidArgument("training windows hold no nodes".into()))
}

fn level0_graphs(samples: &[WindowSample], config: &RunConfig) -> Result<Vec<TemporalKnowledgeGraph>> {
    let builder = effective_builder(&config.builder(), config.ablation);
    samples.iter().map(|s| build_level0(&s.snapshots, &builder)).collect()
}

/// Trains a fresh event model on the pyramid loss over training windows.
pub fn pretrain(config: &RunConfig, train: &[WindowSample], log: Logger) -> Result<(EventModel, Vec<EpochRecord>)> {
    let dim = feature_dim(train)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(PRETRAIN_INIT));
    let mut model = EventModel::new(dim, config.event_model(), &mut rng)?;
    let graphs = level0_graphs(train, config)?
        .iter()
        .map(|g| LevelGraph::from_tkg(g, 0))
        .collect::<Result<Vec<_>>>()?;
    let history = pretrain_event_model(
        &mut model,
        &graphs,
        &config.train(),
        config.seed.wrapping_add(PRETRAIN_LOOP),
        log,
    )?;
    Ok((model, history))
}

fn fresh_bundle(
    config: &RunConfig,
    mode: TrainingMode,
    event: Option<EventModel>,
    categories: &[String],
    train: &[WindowSample],
) -> Result<ModelBundle> {
    let dim = feature_dim(train)?;
    let labels: Vec<Vec<f64>> = train.iter().map(|s| s.label.clone()).collect();
    let space = LabelSpace::from_labels(categories.to_vec(), &labels)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(CLASSIFIER_INIT));
    let classifier = Classifier::new(
        dim,
        config.hierarchy_levels,
        config.classifier(),
        space,
        config.ablation,
        &mut rng,
    )?;
    let event = if config.ablation == Ablation::NoSupernodes { None } else { event };
    Ok(ModelBundle {
        mode,
        builder: config.builder(),
        hierarchy: config.hierarchy(),
        event,
        classifier,
    })
}

fn inputs(bundle: &ModelBundle, samples: &[WindowSample]) -> Result<Vec<(GraphInput, Vec<f64>)>> {
    samples
        .iter()
        .map(|s| Ok((bundle.input(&s.snapshots)?, s.label.clone())))
        .collect()
}

/// Classifier training over hierarchies built once by a frozen event model.
/// The event model is unused (and may be absent) under the no-supernodes
/// ablation.
pub fn train_two_phase(
    config: &RunConfig,
    event: Option<EventModel>,
    categories: &[String],
    train: &[WindowSample],
    val: &[WindowSample],
    log: Logger,
) -> Result<(ModelBundle, TrainOutcome)> {
    if event.is_none() && config.ablation != Ablation::NoSupernodes {
        return Err(Error::InvalidArgument("two-phase training needs a pretrained event model".into()));
    }
    let mut bundle = fresh_bundle(config, TrainingMode::TwoPhase, event, categories, train)?;
    let train_inputs = inputs(&bundle, train)?;
    let val_inputs = inputs(&bundle, val)?;
    let outcome = train_classifier(
        &mut bundle.classifier,
        &train_inputs,
        &val_inputs,
        &config.train(),
        config.seed.wrapping_add(CLASSIFIER_LOOP),
        log,
    )?;
    Ok((bundle, outcome))
}

/// Joint training from scratch; never reads a pretrained event model.
pub fn train_joint(
    config: &RunConfig,
    categories: &[String],
    train: &[WindowSample],
    val: &[WindowSample],
    log: Logger,
) -> Result<(ModelBundle, TrainOutcome)> {
    if config.ablation == Ablation::NoSupernodes {
        return Err(Error::Config("joint training needs the hierarchy".into()));
    }
    let dim = feature_dim(train)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(PRETRAIN_INIT));
    let event = EventModel::new(dim, config.event_model(), &mut rng)?;
    let mut bundle = fresh_bundle(config, TrainingMode::EndToEnd, Some(event), categories, train)?;
    let pair = |graphs: Vec<TemporalKnowledgeGraph>, samples: &[WindowSample]| {
        graphs
            .into_iter()
            .zip(samples.iter().map(|s| s.label.clone()))
            .collect::<Vec<_>>()
    };
    let train_set = pair(level0_graphs(train, config)?, train);
    let val_set = pair(level0_graphs(val, config)?, val);
    let outcome = train_end_to_end(
        &mut bundle,
        &train_set,
        &val_set,
        &config.train(),
        config.seed.wrapping_add(CLASSIFIER_LOOP),
        log,
    )?;
    Ok((bundle, outcome))
}
