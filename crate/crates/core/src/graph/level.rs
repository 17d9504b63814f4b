use std::collections::hash_map::Entry;
use std::collections::{HashMap, VecDeque};

use super::{NodeId, TemporalKnowledgeGraph};
use crate::error::{Error, Result};
use crate::numerics::Matrix;

/// One level of a TKG as a plain undirected graph with dense local indices.
///
/// Every edge kind whose endpoints both lie on the level contributes
/// adjacency.
#[derive(Clone, Debug, PartialEq)]
pub struct LevelGraph {
    /// TKG node id of each local index.
    pub node_ids: Vec<NodeId>,
    pub timestamps: Vec<f64>,
    pub features: Matrix,
    /// Sorted, deduplicated neighbour lists.
    pub adjacency: Vec<Vec<usize>>,
}

impl LevelGraph {
    /// Builds a standalone graph with ids `0..n` and zero timestamps.
    pub fn new(features: Matrix, edges: &[(usize, usize)]) -> Result<Self> {
        let n = features.rows();
        let mut adjacency = vec![Vec::new(); n];
        for &(a, b) in edges {
            if a >= n || b >= n {
                return Err(Error::UnknownNode(a.max(b)));
            }
            if a != b {
                adjacency[a].push(b);
                adjacency[b].push(a);
            }
        }
        for list in &mut adjacency {
            list.sort_unstable();
            list.dedup();
        }
        Ok(Self {
            node_ids: (0..n).collect(),
            timestamps: vec![0.0; n],
            features,
            adjacency,
        })
    }

    pub fn from_tkg(tkg: &TemporalKnowledgeGraph, level: usize) -> Result<Self> {
        let ids = tkg.level_nodes(level).to_vec();
        let dim = tkg.feature_dim().unwrap_or(0);
        let local: HashMap<NodeId, usize> = ids.iter().enumerate().map(|(i, &id)| (id, i)).collect();
        let mut features = Matrix::zeros(ids.len(), dim);
        let mut timestamps = Vec::with_capacity(ids.len());
        for (i, &id) in ids.iter().enumerate() {
            let node = tkg.node(id).ok_or(Error::UnknownNode(id))?;
            features.row_mut(i).copy_from_slice(&node.features);
            timestamps.push(node.timestamp);
        }
        let edges: Vec<(usize, usize)> = tkg
            .edges()
            .iter()
            .filter_map(|e| Some((*local.get(&e.src)?, *local.get(&e.dst)?)))
            .collect();
        let mut g = Self::new(features, &edges)?;
        g.node_ids = ids;
        g.timestamps = timestamps;
        Ok(g)
    }

    pub fn len(&self) -> usize {
        self.node_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.node_ids.is_empty()
    }

    pub fn feature_dim(&self) -> usize {
        self.features.cols()
    }

    /// Subgraph induced on local `nodes`, re-indexed in the given order.
    pub fn induced(&self, nodes: &[usize]) -> Result<Self> {
        let mut position = vec![usize::MAX; self.len()];
        let mut features = Matrix::zeros(nodes.len(), self.feature_dim());
        for (i, &v) in nodes.iter().enumerate() {
            if v >= self.len() {
                return Err(Error::UnknownNode(v));
            }
            position[v] = i;
            features.row_mut(i).copy_from_slice(self.features.row(v));
        }
        let mut edges = Vec::new();
        for (i, &v) in nodes.iter().enumerate() {
            for &u in &self.adjacency[v] {
                if position[u] != usize::MAX {
                    edges.push((i, position[u]));
                }
            }
        }
        let mut g = Self::new(features, &edges)?;
        g.node_ids = nodes.iter().map(|&v| self.node_ids[v]).collect();
        g.timestamps = nodes.iter().map(|&v| self.timestamps[v]).collect();
        Ok(g)
    }

    /// Breadth-first ball of `radius` hops around `center`, as
    /// `(node, hop)` pairs ordered by hop then index. Includes the center.
    pub fn ball(&self, center: usize, radius: usize) -> Vec<(usize, usize)> {
        let mut dist = HashMap::new();
        dist.insert(center, 0usize);
        let mut queue = VecDeque::from([center]);
        while let Some(v) = queue.pop_front() {
            let d = dist[&v];
            if d == radius {
                continue;
            }
            for &u in &self.adjacency[v] {
                if let Entry::Vacant(slot) = dist.entry(u) {
                    slot.insert(d + 1);
                    queue.push_back(u);
                }
            }
        }
        let mut out: Vec<(usize, usize)> = dist.into_iter().collect();
        out.sort_by_key(|&(v, d)| (d, v));
        out
    }
}
