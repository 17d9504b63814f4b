//! Higher-order event levels: supernodes seeded by pooled nodes, their
//! aggregated features, hierarchy edges and super-adjacency.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::event_model::{pool_budget, EventModel, Neighborhoods, PoolSelection};
use crate::graph::{EdgeKind, LevelGraph, NodeId, TemporalKnowledgeGraph, TkgEdge, TkgNode};
use crate::numerics::Matrix;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Aggregation {
    #[default]
    Mean,
    Sum,
    Max,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HierarchyConfig {
    /// Levels built above level 0.
    pub levels: usize,
    /// Pool ratio per level; the last entry repeats for deeper levels.
    pub pool_ratios: Vec<f64>,
    pub aggregation: Aggregation,
    pub radius: usize,
}

impl Default for HierarchyConfig {
    fn default() -> Self {
        Self {
            levels: 1,
            pool_ratios: vec![0.5],
            aggregation: Aggregation::Mean,
            radius: 1,
        }
    }
}

impl HierarchyConfig {
    pub fn check(&self) -> Result<()> {
        if self.levels > 0 && self.pool_ratios.is_empty() {
            return Err(Error::Config("pool_ratios is empty".into()));
        }
        if let Some(r) = self.pool_ratios.iter().find(|r| !(**r > 0.0 && **r < 1.0)) {
            return Err(Error::Config(format!("pool ratio {r} outside (0, 1)")));
        }
        Ok(())
    }

    /// Ratio for building `level` (1-based).
    pub fn ratio(&self, level: usize) -> f64 {
        let i = (level.max(1) - 1).min(self.pool_ratios.len().saturating_sub(1));
        self.pool_ratios.get(i).copied().unwrap_or(0.5)
    }
}

/// Result of contracting a graph onto seed nodes.
#[derive(Clone, Debug, PartialEq)]
pub struct Contraction {
    /// Aggregated member features, one row per seed.
    pub features: Matrix,
    /// Local member indices of each seed's closed neighbourhood.
    pub members: Vec<Vec<usize>>,
    /// Unordered supernode pairs `(a, b)`, `a < b`.
    pub super_edges: Vec<(usize, usize)>,
    pub timestamps: Vec<f64>,
}

impl Contraction {
    pub fn coarse_graph(&self) -> Result<LevelGraph> {
        let mut g = LevelGraph::new(self.features.clone(), &self.super_edges)?;
        g.timestamps = self.timestamps.clone();
        Ok(g)
    }
}

/// Contracts `graph` onto `seeds`: each seed becomes a supernode whose
/// features aggregate its closed neighbourhood; two supernodes are adjacent
/// when their neighbourhoods overlap or some pair of members is adjacent.
pub fn contract(
    graph: &LevelGraph,
    hoods: &Neighborhoods,
    seeds: &[usize],
    aggregation: Aggregation,
) -> Result<Contraction> {
    let n = graph.len();
    let dim = graph.feature_dim();
    let mut features = Matrix::zeros(seeds.len(), dim);
    let mut members = Vec::with_capacity(seeds.len());
    let mut owners: Vec<Vec<usize>> = vec![Vec::new(); n];

    for (s, &seed) in seeds.iter().enumerate() {
        if seed >= n {
            return Err(Error::UnknownNode(seed));
        }
        let list: Vec<usize> = hoods.members(seed).collect();
        let row = features.row_mut(s);
        match aggregation {
            Aggregation::Mean | Aggregation::Sum => {
                for &m in &list {
                    for (o, &x) in row.iter_mut().zip(graph.features.row(m)) {
                        *o += x;
                    }
                }
                if aggregation == Aggregation::Mean {
                    let inv = 1.0 / list.len() as f64;
                    row.iter_mut().for_each(|o| *o *= inv);
                }
            }
            Aggregation::Max => {
                row.iter_mut().for_each(|o| *o = f64::NEG_INFINITY);
                for &m in &list {
                    for (o, &x) in row.iter_mut().zip(graph.features.row(m)) {
                        *o = o.max(x);
                    }
                }
            }
        }
        for &m in &list {
            owners[m].push(s);
        }
        members.push(list);
    }

    let mut edges = BTreeSet::new();
    for (s, list) in members.iter().enumerate() {
        for &m in list {
            for &x in std::iter::once(&m).chain(&graph.adjacency[m]) {
                for &t in &owners[x] {
                    if t != s {
                        edges.insert((s.min(t), s.max(t)));
                    }
                }
            }
        }
    }

    Ok(Contraction {
        features,
        members,
        super_edges: edges.into_iter().collect(),
        timestamps: seeds.iter().map(|&s| graph.timestamps[s]).collect(),
    })
}

/// Adds one supernode level on top of `level - 1`, seeded by `selection`.
pub fn build_supernodes(
    tkg: &TemporalKnowledgeGraph,
    selection: &PoolSelection,
    level: usize,
    config: &HierarchyConfig,
) -> Result<TemporalKnowledgeGraph> {
    if level == 0 || level != tkg.level_count() {
        return Err(Error::InvalidArgument(format!(
            "cannot add level {level} to a graph with {} levels",
            tkg.level_count()
        )));
    }
    let lower = LevelGraph::from_tkg(tkg, level - 1)?;
    let local_of: std::collections::HashMap<NodeId, usize> =
        lower.node_ids.iter().enumerate().map(|(i, &id)| (id, i)).collect();
    let seeds = selection
        .selected
        .iter()
        .map(|id| local_of.get(id).copied().ok_or(Error::UnknownNode(*id)))
        .collect::<Result<Vec<_>>>()?;
    let hoods = Neighborhoods::compute(&lower, config.radius);
    let c = contract(&lower, &hoods, &seeds, config.aggregation)?;

    let mut out = tkg.clone();
    let mut ids = Vec::with_capacity(seeds.len());
    for (s, &seed) in seeds.iter().enumerate() {
        let id = out.push_node(TkgNode {
            node_id: 0,
            level,
            timestamp: lower.timestamps[seed],
            entity_id: None,
            node_type: Some("supernode".into()),
            features: c.features.row(s).to_vec(),
            attention_score: selection.scores.get(s).copied(),
        });
        ids.push(id);
    }
    for (s, list) in c.members.iter().enumerate() {
        for &m in list {
            out.push_edge(TkgEdge {
                src: ids[s],
                dst: lower.node_ids[m],
                kind: EdgeKind::Hierarchy,
                level: level - 1,
                edge_type: None,
            });
        }
    }
    for &(a, b) in &c.super_edges {
        out.push_edge(TkgEdge {
            src: ids[a],
            dst: ids[b],
            kind: EdgeKind::SuperAdjacency,
            level,
            edge_type: None,
        });
    }
    Ok(out)
}

/// Builds `config.levels` supernode levels with the event model and
/// annotates every node it scored with its attention score.
///
/// Construction stops early once a level has at most one node, since no
/// further pooling can shrink it.
pub fn build_hierarchy(
    tkg: &TemporalKnowledgeGraph,
    model: &EventModel,
    config: &HierarchyConfig,
) -> Result<TemporalKnowledgeGraph> {
    config.check()?;
    if config.levels == 0 {
        return Ok(tkg.clone());
    }
    let mut out = tkg.clone();
    let base = out.level_count() - 1;
    for step in 1..=config.levels {
        let level = base + step;
        let lower = LevelGraph::from_tkg(&out, level - 1)?;
        if lower.len() <= 1 {
            break;
        }
        let hoods = Neighborhoods::compute(&lower, config.radius);
        let scored = model.score_level(&lower, &hoods)?;
        for (&id, &score) in lower.node_ids.iter().zip(&scored.attention) {
            out.set_attention(id, score);
        }
        let k = pool_budget(lower.len(), config.ratio(step));
        let selection = scored.select(&lower, k)?;
        out = build_supernodes(&out, &selection, level, config)?;
    }
    let top = out.level_count() - 1;
    let lower = LevelGraph::from_tkg(&out, top)?;
    if !lower.is_empty() {
        let hoods = Neighborhoods::compute(&lower, config.radius);
        let scored = model.score_level(&lower, &hoods)?;
        for (&id, &score) in lower.node_ids.iter().zip(&scored.attention) {
            out.set_attention(id, score);
        }
    }
    Ok(out)
}

/// Classifier-side annotation of a node: `[attention, one-hot(level)]` with
/// `max_levels + 1` one-hot slots. Missing scores read as zero.
pub fn node_annotation(node: &TkgNode, max_levels: usize) -> Vec<f64> {
    let mut out = vec![0.0; max_levels + 2];
    out[0] = node.attention_score.unwrap_or(0.0);
    if node.level <= max_levels {
        out[1 + node.level] = 1.0;
    }
    out
}
