//! Self-supervised infomax pooling: node and neighbourhood embeddings, the
//! contrastive subset criterion, greedy selection, the hierarchy loss and the
//! multi-scale pyramid.

mod criterion;
mod greedy;
mod neighborhood;
mod params;
mod pyramid;

use rand::{Rng, SeedableRng};

pub use criterion::{
    affinity_table, criterion, criterion_from_table, embed, negative_pairs, pair_scores, t_w,
};
pub use greedy::{greedy_from_table, pool_budget, PoolSelection};
pub use neighborhood::{neighborhood, Neighborhood, Neighborhoods};
pub use params::{EventModelConfig, EventModelParams};
pub use pyramid::{pyramid_forward, PyramidOutput};

use crate::error::Result;
use crate::graph::LevelGraph;
use crate::numerics::tape::scalar::sigmoid;
use crate::numerics::{Checkpoint, Matrix, Tape, Var};

pub const EVENT_MODEL_KIND: &str = "event_model";

/// Affinity table of one graph with the derived per-node attention scores.
#[derive(Clone, Debug)]
pub struct ScoredLevel {
    pub table: Matrix,
    /// `σ(T(v, N_v))` per local node.
    pub attention: Vec<f64>,
}

impl ScoredLevel {
    pub fn select(&self, graph: &LevelGraph, k: usize) -> Result<PoolSelection> {
        greedy_from_table(graph, &self.table, k)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EventModel {
    pub config: EventModelConfig,
    pub params: EventModelParams,
}

impl EventModel {
    pub fn new(feature_dim: usize, config: EventModelConfig, rng: &mut impl Rng) -> Result<Self> {
        let params = EventModelParams::init(feature_dim, &config, rng)?;
        Ok(Self { config, params })
    }

    pub fn score_level(&self, graph: &LevelGraph, hoods: &Neighborhoods) -> Result<ScoredLevel> {
        let table = affinity_table(&self.params, graph, hoods)?;
        let attention = (0..graph.len()).map(|v| sigmoid(table.get(v, v))).collect();
        Ok(ScoredLevel { table, attention })
    }

    pub fn greedy_select(&self, graph: &LevelGraph, k: usize) -> Result<PoolSelection> {
        let hoods = Neighborhoods::compute(graph, self.config.radius);
        self.score_level(graph, &hoods)?.select(graph, k)
    }

    /// Criterion value for local nodes `omega` (no gradients).
    pub fn criterion_value(
        &self,
        graph: &LevelGraph,
        omega: &[usize],
        negative_samples: Option<usize>,
        rng: &mut impl Rng,
    ) -> Result<f64> {
        let hoods = Neighborhoods::compute(graph, self.config.radius);
        let mut tape = Tape::new();
        let vars = self.params.bind(&mut tape);
        let c = criterion(&mut tape, &vars, graph, &hoods, omega, negative_samples, rng)?;
        Ok(tape.value(c).item())
    }

    /// `−C(Ω)` at the greedy selection of size `k`, recorded on `tape`
    /// against `vars`. Selection itself is not differentiated.
    #[allow(clippy::too_many_arguments)]
    pub fn hierarchy_loss(
        &self,
        tape: &mut Tape,
        vars: &EventModelParams<Var>,
        graph: &LevelGraph,
        hoods: &Neighborhoods,
        k: usize,
        negative_samples: Option<usize>,
        rng: &mut impl Rng,
    ) -> Result<(Var, PoolSelection)> {
        let selection = self.score_level(graph, hoods)?.select(graph, k)?;
        let c = criterion(tape, vars, graph, hoods, &selection.local, negative_samples, rng)?;
        Ok((tape.neg(c), selection))
    }

    pub fn to_checkpoint(&self, config_hash: &str) -> Result<Checkpoint> {
        let mut ck = Checkpoint::new(
            EVENT_MODEL_KIND,
            config_hash,
            serde_json::json!({
                "config": self.config,
                "feature_dim": self.params.feature_dim(),
            }),
        );
        ck.push_params(&self.params, "event");
        Ok(ck)
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        ck.expect_kind(EVENT_MODEL_KIND)?;
        Self::from_checkpoint_meta(ck, &ck.meta)
    }

    /// Restores from any checkpoint holding `event.*` parameters, with the
    /// model config in `meta`.
    pub fn from_checkpoint_meta(ck: &Checkpoint, meta: &serde_json::Value) -> Result<Self> {
        let config: EventModelConfig = serde_json::from_value(meta["config"].clone())
            .map_err(|e| crate::Error::Checkpoint(format!("event model config: {e}")))?;
        let feature_dim = meta["feature_dim"]
            .as_u64()
            .ok_or_else(|| crate::Error::Checkpoint("missing feature_dim".into()))?
            as usize;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        let mut model = Self::new(feature_dim, config, &mut rng)?;
        ck.load_params(&mut model.params, "event")?;
        Ok(model)
    }
}

#[cfg(test)]
mod tests;
