//! Snapshot graphs, the multi-level temporal knowledge graph, and the level-0
//! builder in batch and streaming form.

mod builder;
mod export;
mod level;
mod validate;
pub mod wire;

use serde::{Deserialize, Serialize};

pub use builder::{build_level0, BuilderConfig, StreamingBuilder};
pub use export::{TkgExport, TKG_FORMAT_VERSION};
pub use level::LevelGraph;
pub use validate::{validate, Violation};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SnapshotNode {
    pub entity_id: String,
    pub node_type: String,
    pub features: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SnapshotEdge {
    pub src: usize,
    pub dst: usize,
    pub edge_type: String,
    pub features: Option<Vec<f64>>,
}

/// One time-stamped graph of entities and their interactions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SnapshotGraph {
    pub timestamp: f64,
    pub nodes: Vec<SnapshotNode>,
    pub edges: Vec<SnapshotEdge>,
}

impl SnapshotGraph {
    pub fn new(timestamp: f64) -> Self {
        Self {
            timestamp,
            nodes: Vec::new(),
            edges: Vec::new(),
        }
    }

    pub fn feature_dim(&self) -> Option<usize> {
        self.nodes.first().map(|n| n.features.len())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum EdgeKind {
    Spatial,
    Temporal,
    Hierarchy,
    SuperAdjacency,
}

impl EdgeKind {
    pub const ALL: [EdgeKind; 4] = [
        EdgeKind::Spatial,
        EdgeKind::Temporal,
        EdgeKind::Hierarchy,
        EdgeKind::SuperAdjacency,
    ];
}

pub type NodeId = usize;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TkgNode {
    pub node_id: NodeId,
    pub level: usize,
    pub timestamp: f64,
    pub entity_id: Option<String>,
    pub node_type: Option<String>,
    pub features: Vec<f64>,
    pub attention_score: Option<f64>,
}

/// Edges are stored once. Temporal edges point from the earlier node to the
/// later one; hierarchy edges point from the supernode down to its member.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TkgEdge {
    pub src: NodeId,
    pub dst: NodeId,
    pub kind: EdgeKind,
    /// Level of the finer endpoint.
    pub level: usize,
    pub edge_type: Option<String>,
}

/// All levels of the hierarchy fused into one graph.
#[derive(Clone, Debug, PartialEq)]
pub struct TemporalKnowledgeGraph {
    pub(crate) nodes: Vec<TkgNode>,
    pub(crate) edges: Vec<TkgEdge>,
    pub(crate) levels: Vec<Vec<NodeId>>,
    pub(crate) config: BuilderConfig,
}

impl TemporalKnowledgeGraph {
    pub fn empty(config: BuilderConfig) -> Self {
        Self {
            nodes: Vec::new(),
            edges: Vec::new(),
            levels: vec![Vec::new()],
            config,
        }
    }

    pub fn nodes(&self) -> &[TkgNode] {
        &self.nodes
    }

    pub fn edges(&self) -> &[TkgEdge] {
        &self.edges
    }

    pub fn node(&self, id: NodeId) -> Option<&TkgNode> {
        self.nodes.get(id)
    }

    pub fn level_count(&self) -> usize {
        self.levels.len()
    }

    /// Node ids at `level`, in ascending order.
    pub fn level_nodes(&self, level: usize) -> &[NodeId] {
        self.levels.get(level).map_or(&[], Vec::as_slice)
    }

    pub fn builder_config(&self) -> &BuilderConfig {
        &self.config
    }

    pub fn feature_dim(&self) -> Option<usize> {
        self.nodes.first().map(|n| n.features.len())
    }

    pub fn edges_of_kind(&self, kind: EdgeKind) -> impl Iterator<Item = &TkgEdge> {
        self.edges.iter().filter(move |e| e.kind == kind)
    }

    /// Appends a node at `level`, opening the level if it is the next one.
    pub(crate) fn push_node(&mut self, mut node: TkgNode) -> NodeId {
        let id = self.nodes.len();
        node.node_id = id;
        while self.levels.len() <= node.level {
            self.levels.push(Vec::new());
        }
        self.levels[node.level].push(id);
        self.nodes.push(node);
        id
    }

    pub(crate) fn push_edge(&mut self, edge: TkgEdge) {
        self.edges.push(edge);
    }

    pub(crate) fn set_attention(&mut self, id: NodeId, score: f64) {
        self.nodes[id].attention_score = Some(score);
    }

    /// Keeps only levels `0..keep`, dropping higher nodes and their edges.
    pub fn truncate_levels(&self, keep: usize) -> Self {
        let keep = keep.max(1);
        if keep >= self.levels.len() {
            return self.clone();
        }
        let nodes: Vec<TkgNode> = self
            .nodes
            .iter()
            .filter(|n| n.level < keep)
            .cloned()
            .collect();
        // node ids are assigned level by level, so the prefix is preserved
        let limit = nodes.len();
        let edges = self
            .edges
            .iter()
            .filter(|e| e.src < limit && e.dst < limit)
            .cloned()
            .collect();
        Self {
            nodes,
            edges,
            levels: self.levels[..keep].to_vec(),
            config: self.config.clone(),
        }
    }
}
