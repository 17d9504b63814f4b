//! Optimisation loops: event-model pretraining on the pyramid loss,
//! classifier training over frozen hierarchies, and joint training.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::classifier::{
    classification_loss, e2e_loss, forward, threshold_logits, Ablation, Classifier,
    ClassifierParams, GraphInput,
};
use crate::error::{Error, Result};
use crate::evaluation::metrics::macro_prf;
use crate::event_model::{
    criterion, embed, pair_scores, pool_budget, pyramid_forward, EventModel, EventModelParams,
    Neighborhoods,
};
use crate::graph::{LevelGraph, TemporalKnowledgeGraph};
use crate::hierarchy::{build_supernodes, HierarchyConfig};
use crate::model::ModelBundle;
use crate::numerics::{Adam, AdamConfig, Matrix, MultiStepLr, Parameters, Tape, Var};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    /// Epochs at which the rate is multiplied by `lr_gamma`; defaults to
    /// half and three quarters of `epochs`.
    pub milestones: Option<Vec<usize>>,
    pub lr_gamma: f64,
    /// Stop after this many epochs without a validation F1 improvement.
    pub patience: usize,
    pub pretrain_epochs: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 40,
            batch_size: 32,
            lr: 1e-3,
            milestones: None,
            lr_gamma: 0.5,
            patience: 10,
            pretrain_epochs: 5,
        }
    }
}

impl TrainConfig {
    pub fn check(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) || !(self.lr_gamma > 0.0) {
            return Err(Error::Config("learning rate and gamma must be positive".into()));
        }
        Ok(())
    }

    pub fn schedule(&self, epochs: usize) -> MultiStepLr {
        match &self.milestones {
            Some(m) => MultiStepLr {
                base_lr: self.lr,
                milestones: m.clone(),
                gamma: self.lr_gamma,
            },
            None => MultiStepLr {
                gamma: self.lr_gamma,
                ..MultiStepLr::halving(self.lr, epochs)
            },
        }
    }

    fn adam(&self) -> Adam {
        Adam::new(AdamConfig {
            lr: self.lr,
            ..AdamConfig::default()
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub phase: String,
    pub epoch: usize,
    pub lr: f64,
    /// Mean training loss over the epoch.
    pub loss: f64,
    pub val_f1: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainOutcome {
    pub history: Vec<EpochRecord>,
    /// Epoch whose parameters were kept.
    pub best_epoch: usize,
    pub best_val_f1: Option<f64>,
}

pub type Logger<'a> = &'a mut dyn FnMut(&EpochRecord);

/// Sum of gradient trees, divided by the batch size before the step.
fn accumulate<P: Parameters>(acc: &mut Option<P>, g: P) {
    match acc {
        None => *acc = Some(g),
        Some(a) => {
            let mut parts = Vec::new();
            g.visit("", &mut |_, m| parts.push(m));
            let mut i = 0;
            a.visit_mut("", &mut |_, m| {
                m.add_assign(parts[i]);
                i += 1;
            });
        }
    }
}

fn scaled<P: Parameters>(mut p: P, s: f64) -> P {
    p.visit_mut("", &mut |_, m| m.scale_assign(s));
    p
}

fn shuffled(n: usize, rng: &mut impl Rng) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    order
}

/// Pretrains on the pyramid loss over the given level-0 graphs.
pub fn pretrain_event_model(
    model: &mut EventModel,
    graphs: &[LevelGraph],
    config: &TrainConfig,
    seed: u64,
    log: Logger,
) -> Result<Vec<EpochRecord>> {
    config.check()?;
    let graphs: Vec<&LevelGraph> = graphs.iter().filter(|g| !g.is_empty()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut adam = config.adam();
    let schedule = config.schedule(config.pretrain_epochs);
    let mut history = Vec::new();
    for epoch in 0..config.pretrain_epochs {
        adam.set_lr(schedule.lr_at(epoch));
        let order = shuffled(graphs.len(), &mut rng);
        let mut total = 0.0;
        for batch in order.chunks(config.batch_size) {
            let mut acc = None;
            for &i in batch {
                let mut tape = Tape::new();
                let vars = model.params.bind(&mut tape);
                let out = pyramid_forward(&mut tape, model, &vars, graphs[i], &mut rng)?;
                let loss = tape.value(out.loss).item();
                if !loss.is_finite() {
                    return Err(Error::NonFinite(format!("pyramid loss at epoch {epoch}")));
                }
                total += loss;
                let grads = tape.backward(out.loss)?;
                accumulate(&mut acc, vars.map(&mut |v| grads.wrt(*v)));
            }
            if let Some(g) = acc {
                adam.step(&mut model.params, &scaled(g, 1.0 / batch.len() as f64))?;
            }
        }
        let record = EpochRecord {
            phase: "pretrain".into(),
            epoch,
            lr: schedule.lr_at(epoch),
            loss: total / graphs.len().max(1) as f64,
            val_f1: None,
        };
        log(&record);
        history.push(record);
    }
    Ok(history)
}

/// Macro F1 of thresholded logits against `truth`.
fn f1_of(logits: &[Vec<f64>], truth: &[Vec<f64>], threshold: f64) -> Result<f64> {
    let preds: Vec<Vec<bool>> = logits.iter().map(|z| threshold_logits(z, threshold).labels).collect();
    let truth: Vec<Vec<bool>> = truth.iter().map(|r| r.iter().map(|&y| y > 0.5).collect()).collect();
    Ok(macro_prf(&preds, &truth)?.f1)
}

/// Tracks the best validation F1 and counts epochs without improvement.
struct EarlyStop<P> {
    best: Option<(f64, usize, P)>,
    stale: usize,
    patience: usize,
}

impl<P: Clone> EarlyStop<P> {
    fn new(patience: usize) -> Self {
        Self {
            best: None,
            stale: 0,
            patience,
        }
    }

    /// Returns `true` when training should stop.
    fn observe(&mut self, f1: f64, epoch: usize, params: &P) -> bool {
        match &self.best {
            Some((b, _, _)) if f1 <= *b => self.stale += 1,
            _ => {
                self.best = Some((f1, epoch, params.clone()));
                self.stale = 0;
            }
        }
        self.patience > 0 && self.stale >= self.patience
    }
}

/// Trains the classifier over precomputed inputs. With a validation set the
/// parameters of the best-F1 epoch are kept; without one, the last.
pub fn train_classifier(
    classifier: &mut Classifier,
    train: &[(GraphInput, Vec<f64>)],
    val: &[(GraphInput, Vec<f64>)],
    config: &TrainConfig,
    seed: u64,
    log: Logger,
) -> Result<TrainOutcome> {
    config.check()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut adam = config.adam();
    let schedule = config.schedule(config.epochs);
    let mut stop = EarlyStop::new(config.patience);
    let mut outcome = TrainOutcome::default();
    for epoch in 0..config.epochs {
        adam.set_lr(schedule.lr_at(epoch));
        let order = shuffled(train.len(), &mut rng);
        let mut total = 0.0;
        for batch in order.chunks(config.batch_size) {
            let mut acc = None;
            for &i in batch {
                let (input, target) = &train[i];
                let mut tape = Tape::new();
                let vars = classifier.params.bind(&mut tape);
                let logits = forward(&mut tape, &vars, input, None)?;
                let loss = classification_loss(&mut tape, logits, target, &classifier.label_space)?;
                total += tape.value(loss).item();
                let grads = tape.backward(loss)?;
                accumulate(&mut acc, vars.map(&mut |v| grads.wrt(*v)));
            }
            if let Some(g) = acc {
                adam.step(&mut classifier.params, &scaled(g, 1.0 / batch.len() as f64))?;
            }
        }
        let val_f1 = if val.is_empty() {
            None
        } else {
            let logits = val
                .iter()
                .map(|(x, _)| classifier.logits(x))
                .collect::<Result<Vec<_>>>()?;
            let truth: Vec<Vec<f64>> = val.iter().map(|(_, y)| y.clone()).collect();
            Some(f1_of(&logits, &truth, classifier.config.threshold)?)
        };
        let record = EpochRecord {
            phase: "train".into(),
            epoch,
            lr: schedule.lr_at(epoch),
            loss: total / train.len().max(1) as f64,
            val_f1,
        };
        log(&record);
        outcome.history.push(record);
        if let Some(f1) = val_f1 {
            if stop.observe(f1, epoch, &classifier.params) {
                break;
            }
        }
    }
    match stop.best {
        Some((f1, epoch, params)) => {
            classifier.params = params;
            outcome.best_epoch = epoch;
            outcome.best_val_f1 = Some(f1);
        }
        None => outcome.best_epoch = outcome.history.len().saturating_sub(1),
    }
    Ok(outcome)
}

/// Parameters updated together in joint training.
#[derive(Clone, Debug, PartialEq)]
pub struct JointParams<T = Matrix> {
    pub event: EventModelParams<T>,
    pub classifier: ClassifierParams<T>,
}

impl<T> JointParams<T> {
    pub fn map<U>(&self, f: &mut dyn FnMut(&T) -> U) -> JointParams<U> {
        JointParams {
            event: self.event.map(f),
            classifier: self.classifier.map(f),
        }
    }
}

impl Parameters for JointParams {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, &'a Matrix)) {
        self.event.visit(&format!("{prefix}event"), f);
        self.classifier.visit(&format!("{prefix}classifier"), f);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Matrix)) {
        self.event.visit_mut(&format!("{prefix}event"), f);
        self.classifier.visit_mut(&format!("{prefix}classifier"), f);
    }
}

/// Attention `σ(T(v, N_v))` of every node of `graph` as an `n x 1` column
/// on the tape.
fn attention_column(
    tape: &mut Tape,
    vars: &EventModelParams<Var>,
    graph: &LevelGraph,
    hoods: &Neighborhoods,
) -> Result<Var> {
    let rows: Vec<usize> = (0..graph.len()).collect();
    let (node, hood) = embed(tape, vars, graph, hoods, &rows)?;
    let diag: Vec<(usize, usize)> = rows.iter().map(|&r| (r, r)).collect();
    let t = pair_scores(tape, vars, node, hood, &diag)?;
    Ok(tape.sigmoid(t))
}

/// Hierarchy built with the current event weights, with its loss and
/// node attention recorded on `tape`.
pub struct TapedHierarchy {
    pub graph: TemporalKnowledgeGraph,
    /// Sum over built levels of `−C(Ω)` at the greedy selection.
    pub loss: Var,
    /// `n x 1`, rows in node-id order.
    pub attention: Var,
}

pub fn taped_hierarchy(
    tape: &mut Tape,
    model: &EventModel,
    vars: &EventModelParams<Var>,
    level0: &TemporalKnowledgeGraph,
    config: &HierarchyConfig,
    rng: &mut impl Rng,
) -> Result<TapedHierarchy> {
    config.check()?;
    let mut graph = level0.clone();
    let mut losses = Vec::new();
    let mut columns = Vec::new();
    let mut level = 0;
    loop {
        let lower = LevelGraph::from_tkg(&graph, level)?;
        if lower.is_empty() {
            break;
        }
        let first = graph.level_nodes(level)[0];
        let expected = columns.iter().map(|c| tape.value(*c).rows()).sum::<usize>();
        if lower.node_ids.iter().enumerate().any(|(i, &id)| id != first + i) || first != expected {
            return Err(Error::InvalidArgument("level node ids are not contiguous".into()));
        }
        let hoods = Neighborhoods::compute(&lower, config.radius);
        columns.push(attention_column(tape, vars, &lower, &hoods)?);
        if level == config.levels || lower.len() <= 1 {
            break;
        }
        let scored = model.score_level(&lower, &hoods)?;
        let k = pool_budget(lower.len(), config.ratio(level + 1));
        let selection = scored.select(&lower, k)?;
        let c = criterion(
            tape,
            vars,
            &lower,
            &hoods,
            &selection.local,
            model.config.negative_samples,
            rng,
        )?;
        losses.push(tape.neg(c));
        graph = build_supernodes(&graph, &selection, level + 1, config)?;
        level += 1;
    }
    let loss = match losses.len() {
        0 => tape.constant(Matrix::scalar(0.0)),
        _ => {
            let stacked = tape.concat_rows(&losses)?;
            tape.sum(stacked)
        }
    };
    let attention = tape.concat_rows(&columns)?;
    Ok(TapedHierarchy {
        graph,
        loss,
        attention,
    })
}

/// Logits and loss of one sample under joint training.
pub fn joint_step(
    tape: &mut Tape,
    bundle: &ModelBundle,
    vars: &JointParams<Var>,
    level0: &TemporalKnowledgeGraph,
    target: &[f64],
    epoch: usize,
    total_epochs: usize,
    rng: &mut impl Rng,
) -> Result<(Var, Var)> {
    let event = bundle
        .event
        .as_ref()
        .ok_or_else(|| Error::InvalidArgument("joint training needs an event model".into()))?;
    let h = taped_hierarchy(tape, event, &vars.event, level0, &bundle.hierarchy, rng)?;
    let input = bundle.classifier.input(&h.graph)?;
    let logits = forward(tape, &vars.classifier, &input, Some(h.attention))?;
    let cls = classification_loss(tape, logits, target, &bundle.classifier.label_space)?;
    let loss = e2e_loss(tape, cls, h.loss, epoch, total_epochs)?;
    Ok((logits, loss))
}

/// Joint training over level-0 graphs.
pub fn train_end_to_end(
    bundle: &mut ModelBundle,
    train: &[(TemporalKnowledgeGraph, Vec<f64>)],
    val: &[(TemporalKnowledgeGraph, Vec<f64>)],
    config: &TrainConfig,
    seed: u64,
    log: Logger,
) -> Result<TrainOutcome> {
    config.check()?;
    if bundle.event.is_none() || bundle.ablation() == Ablation::NoSupernodes {
        return Err(Error::InvalidArgument("joint training needs the hierarchy".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut adam = config.adam();
    let schedule = config.schedule(config.epochs);
    let total_epochs = config.epochs.saturating_sub(1).max(1);
    let mut stop = EarlyStop::new(config.patience);
    let mut outcome = TrainOutcome::default();
    let current = |b: &ModelBundle| JointParams {
        event: b.event.as_ref().expect("checked above").params.clone(),
        classifier: b.classifier.params.clone(),
    };
    for epoch in 0..config.epochs {
        adam.set_lr(schedule.lr_at(epoch));
        let order = shuffled(train.len(), &mut rng);
        let mut total = 0.0;
        for batch in order.chunks(config.batch_size) {
            let mut acc = None;
            let params = current(bundle);
            for &i in batch {
                let (level0, target) = &train[i];
                let mut tape = Tape::new();
                let vars = params.map(&mut |m| tape.leaf(m.clone()));
                let (_, loss) = joint_step(&mut tape, bundle, &vars, level0, target, epoch, total_epochs, &mut rng)?;
                let value = tape.value(loss).item();
                if !value.is_finite() {
                    return Err(Error::NonFinite(format!("joint loss at epoch {epoch}")));
                }
                total += value;
                let grads = tape.backward(loss)?;
                accumulate(&mut acc, vars.map(&mut |v| grads.wrt(*v)));
            }
            if let Some(g) = acc {
                let mut params = params;
                adam.step(&mut params, &scaled(g, 1.0 / batch.len() as f64))?;
                bundle.event.as_mut().expect("checked above").params = params.event;
                bundle.classifier.params = params.classifier;
            }
        }
        let val_f1 = if val.is_empty() {
            None
        } else {
            let logits = val
                .iter()
                .map(|(g, _)| bundle.classifier.logits(&bundle.classifier.input(&bundle.lift(g)?)?))
                .collect::<Result<Vec<_>>>()?;
            let truth: Vec<Vec<f64>> = val.iter().map(|(_, y)| y.clone()).collect();
            Some(f1_of(&logits, &truth, bundle.classifier.config.threshold)?)
        };
        let record = EpochRecord {
            phase: "e2e".into(),
            epoch,
            lr: schedule.lr_at(epoch),
            loss: total / train.len().max(1) as f64,
            val_f1,
        };
        log(&record);
        outcome.history.push(record);
        if let Some(f1) = val_f1 {
            if stop.observe(f1, epoch, &current(bundle)) {
                break;
            }
        }
    }
    if let Some((f1, epoch, params)) = stop.best {
        bundle.event.as_mut().expect("checked above").params = params.event;
        bundle.classifier.params = params.classifier;
        outcome.best_epoch = epoch;
        outcome.best_val_f1 = Some(f1);
    } else {
        outcome.best_epoch = outcome.history.len().saturating_sub(1);
    }
    Ok(outcome)
}
