//! Relational message passing over the multi-level graph, the multi-level
//! readout and classification head, and the training losses.

mod input;
mod loss;
mod params;

use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};

pub use input::{Ablation, GraphInput, Relation};
pub use loss::{classification_loss, e2e_loss, e2e_weight, LabelSpace};
pub use params::{ClassifierParams, RgcnLayer};

use crate::error::{Error, Result};
use crate::graph::TemporalKnowledgeGraph;
use crate::numerics::{Checkpoint, Matrix, Tape, Var};

pub const CLASSIFIER_KIND: &str = "classifier";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassifierConfig {
    pub hidden_dim: usize,
    pub layers: usize,
    /// A category is predicted when its probability reaches this value.
    pub threshold: f64,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        Self {
            hidden_dim: 64,
            layers: 2,
            threshold: 0.5,
        }
    }
}

/// `layers` relational layers, each `relu(Σ_r mean_r(H) W_r + H W_self + b)`.
/// Relations without any edge are skipped.
pub fn rgcn_forward(
    tape: &mut Tape,
    vars: &ClassifierParams<Var>,
    input: &GraphInput,
    x: Var,
) -> Result<Var> {
    let mut h = x;
    for layer in &vars.layers {
        let mut parts = Vec::with_capacity(Relation::COUNT + 1);
        let mut weights = Vec::with_capacity(Relation::COUNT + 1);
        for (r, op) in input.relations.iter().enumerate() {
            if op.nnz() > 0 {
                parts.push(tape.spmm(op.clone(), h)?);
                weights.push(layer.relations[r]);
            }
        }
        parts.push(h);
        weights.push(layer.self_weight);
        let stacked = tape.concat_cols(&parts)?;
        let w = tape.concat_rows(&weights)?;
        let pre = tape.matmul(stacked, w)?;
        let pre = tape.add_row(pre, layer.bias)?;
        h = tape.relu(pre);
    }
    Ok(h)
}

/// Concatenated per-level means of `h`. A level without nodes contributes
/// zeros so the width stays fixed.
pub fn readout(tape: &mut Tape, h: Var, input: &GraphInput) -> Result<Var> {
    if input.is_empty() {
        return Err(Error::InvalidArgument("readout of an empty graph".into()));
    }
    let d = tape.value(h).cols();
    let mut means = Vec::with_capacity(input.level_rows.len());
    for rows in &input.level_rows {
        means.push(if rows.is_empty() {
            tape.constant(Matrix::zeros(1, d))
        } else {
            let part = tape.gather_rows(h, rows.clone())?;
            tape.mean_rows(part)?
        });
    }
    tape.concat_cols(&means)
}

/// Logits `1 x |C|` for one graph.
pub fn forward(
    tape: &mut Tape,
    vars: &ClassifierParams<Var>,
    input: &GraphInput,
    attention: Option<Var>,
) -> Result<Var> {
    let x = input.node_inputs(tape, attention)?;
    let h = rgcn_forward(tape, vars, input, x)?;
    let r = readout(tape, h, input)?;
    vars.head.forward(tape, r)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub probabilities: Vec<f64>,
    pub labels: Vec<bool>,
}

/// Thresholds in logit space: `σ(z) ≥ t ⟺ z ≥ logit(t)`, so `t = 0.5`
/// sends ties to the positive side and `t = 1` predicts nothing.
pub fn threshold_logits(logits: &[f64], threshold: f64) -> Prediction {
    let cut = if threshold <= 0.0 {
        f64::NEG_INFINITY
    } else if threshold >= 1.0 {
        f64::INFINITY
    } else {
        (threshold / (1.0 - threshold)).ln()
    };
    Prediction {
        probabilities: logits
            .iter()
            .map(|&z| crate::numerics::tape::scalar::sigmoid(z))
            .collect(),
        labels: logits.iter().map(|&z| z >= cut).collect(),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Classifier {
    pub config: ClassifierConfig,
    pub label_space: LabelSpace,
    pub ablation: Ablation,
    /// Levels above 0 the network expects.
    pub max_levels: usize,
    pub feature_dim: usize,
    pub params: ClassifierParams,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ClassifierMeta {
    config: ClassifierConfig,
    label_space: LabelSpace,
    ablation: Ablation,
    max_levels: usize,
    feature_dim: usize,
}

impl Classifier {
    /// `hierarchy_levels` is ignored (treated as 0) under the no-supernodes
    /// ablation.
    pub fn new(
        feature_dim: usize,
        hierarchy_levels: usize,
        config: ClassifierConfig,
        label_space: LabelSpace,
        ablation: Ablation,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        label_space.check()?;
        let max_levels = if ablation == Ablation::NoSupernodes {
            0
        } else {
            hierarchy_levels
        };
        let params = ClassifierParams::init(
            feature_dim + max_levels + 2,
            config.hidden_dim,
            config.layers,
            max_levels + 1,
            label_space.len(),
            rng,
        )?;
        Ok(Self {
            config,
            label_space,
            ablation,
            max_levels,
            feature_dim,
            params,
        })
    }

    pub fn input(&self, tkg: &TemporalKnowledgeGraph) -> Result<GraphInput> {
        let input = GraphInput::from_tkg(tkg, self.max_levels, self.ablation)?;
        if input.features.cols() != self.feature_dim {
            return Err(Error::Shape(format!(
                "graph features have {} columns, classifier expects {}",
                input.features.cols(),
                self.feature_dim
            )));
        }
        Ok(input)
    }

    pub fn logits(&self, input: &GraphInput) -> Result<Vec<f64>> {
        let mut tape = Tape::new();
        let vars = self.params.bind(&mut tape);
        let z = forward(&mut tape, &vars, input, None)?;
        Ok(tape.value(z).data().to_vec())
    }

    pub fn predict(&self, input: &GraphInput) -> Result<Prediction> {
        Ok(threshold_logits(&self.logits(input)?, self.config.threshold))
    }

    pub fn meta(&self) -> serde_json::Value {
        serde_json::to_value(ClassifierMeta {
            config: self.config.clone(),
            label_space: self.label_space.clone(),
            ablation: self.ablation,
            max_levels: self.max_levels,
            feature_dim: self.feature_dim,
        })
        .expect("classifier metadata serialises")
    }

    pub fn to_checkpoint(&self, config_hash: &str) -> Checkpoint {
        let mut ck = Checkpoint::new(CLASSIFIER_KIND, config_hash, self.meta());
        ck.push_params(&self.params, "classifier");
        ck
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        ck.expect_kind(CLASSIFIER_KIND)?;
        Self::from_checkpoint_meta(ck, &ck.meta)
    }

    /// Restores from any checkpoint holding `classifier.*` parameters with
    /// the classifier metadata in `meta`.
    pub fn from_checkpoint_meta(ck: &Checkpoint, meta: &serde_json::Value) -> Result<Self> {
        let m: ClassifierMeta = serde_json::from_value(meta.clone())
            .map_err(|e| Error::Checkpoint(format!("classifier metadata: {e}")))?;
        let levels = m.max_levels;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        let mut c = Self::new(m.feature_dim, levels, m.config, m.label_space, m.ablation, &mut rng)?;
        if c.max_levels != m.max_levels {
            return Err(Error::Checkpoint("level count disagrees with ablation".into()));
        }
        ck.load_params(&mut c.params, "classifier")?;
        Ok(c)
    }
}
