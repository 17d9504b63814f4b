use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};

use super::{EdgeKind, NodeId, SnapshotGraph, TemporalKnowledgeGraph, TkgEdge, TkgNode};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BuilderConfig {
    /// Link an entity to its most recent earlier node even when it skipped
    /// frames. Off: only consecutive frames are linked.
    pub bridge_gaps: bool,
    /// Emit temporal edges at all. Off gives the spatial-only graph.
    pub temporal_edges: bool,
}

impl Default for BuilderConfig {
    fn default() -> Self {
        Self {
            bridge_gaps: false,
            temporal_edges: true,
        }
    }
}

/// Checks one snapshot against its own invariants and the dataset feature
/// dimension.
fn check_snapshot(snapshot: &SnapshotGraph, feature_dim: Option<usize>) -> Result<()> {
    if !snapshot.timestamp.is_finite() {
        return Err(Error::Schema(format!(
            "non-finite timestamp {}",
            snapshot.timestamp
        )));
    }
    let dim = feature_dim.or_else(|| snapshot.feature_dim());
    let mut seen = HashSet::with_capacity(snapshot.nodes.len());
    for (i, n) in snapshot.nodes.iter().enumerate() {
        if Some(n.features.len()) != dim {
            return Err(Error::Schema(format!(
                "node {i} at t={} has {} features, expected {}",
                snapshot.timestamp,
                n.features.len(),
                dim.unwrap_or(0)
            )));
        }
        if n.features.iter().any(|v| !v.is_finite()) {
            return Err(Error::Schema(format!("node {i} has non-finite features")));
        }
        if !seen.insert(n.entity_id.as_str()) {
            return Err(Error::Schema(format!(
                "entity {} appears twice at t={}",
                n.entity_id, snapshot.timestamp
            )));
        }
    }
    for (i, e) in snapshot.edges.iter().enumerate() {
        if e.src >= snapshot.nodes.len() || e.dst >= snapshot.nodes.len() {
            return Err(Error::Schema(format!(
                "edge {i} ({} -> {}) references a missing node",
                e.src, e.dst
            )));
        }
        if e.src == e.dst {
            return Err(Error::Schema(format!("edge {i} is a self-loop")));
        }
    }
    Ok(())
}

fn spatial_edge(offset: NodeId, e: &super::SnapshotEdge) -> TkgEdge {
    TkgEdge {
        src: offset + e.src,
        dst: offset + e.dst,
        kind: EdgeKind::Spatial,
        level: 0,
        edge_type: Some(e.edge_type.clone()),
    }
}

fn level0_node(snapshot: &SnapshotGraph, n: &super::SnapshotNode) -> TkgNode {
    TkgNode {
        node_id: 0,
        level: 0,
        timestamp: snapshot.timestamp,
        entity_id: Some(n.entity_id.clone()),
        node_type: Some(n.node_type.clone()),
        features: n.features.clone(),
        attention_score: None,
    }
}

fn temporal_edge(src: NodeId, dst: NodeId) -> TkgEdge {
    TkgEdge {
        src,
        dst,
        kind: EdgeKind::Temporal,
        level: 0,
        edge_type: None,
    }
}

/// Batch construction of level 0 from a full snapshot list.
pub fn build_level0(
    snapshots: &[SnapshotGraph],
    config: &BuilderConfig,
) -> Result<TemporalKnowledgeGraph> {
    let feature_dim = snapshots.iter().find_map(SnapshotGraph::feature_dim);
    for (i, s) in snapshots.iter().enumerate() {
        check_snapshot(s, feature_dim)?;
        if i > 0 && s.timestamp <= snapshots[i - 1].timestamp {
            return Err(Error::Ordering(format!(
                "snapshot {i} at t={} does not follow t={}",
                s.timestamp,
                snapshots[i - 1].timestamp
            )));
        }
    }

    let mut tkg = TemporalKnowledgeGraph::empty(config.clone());
    let mut offsets = Vec::with_capacity(snapshots.len());
    for s in snapshots {
        offsets.push(tkg.nodes.len());
        for n in &s.nodes {
            tkg.push_node(level0_node(s, n));
        }
    }
    for (s, &off) in snapshots.iter().zip(&offsets) {
        for e in &s.edges {
            tkg.push_edge(spatial_edge(off, e));
        }
    }
    if config.temporal_edges {
        let frames: Vec<HashMap<&str, NodeId>> = snapshots
            .iter()
            .zip(&offsets)
            .map(|(s, &off)| {
                s.nodes
                    .iter()
                    .enumerate()
                    .map(|(i, n)| (n.entity_id.as_str(), off + i))
                    .collect()
            })
            .collect();
        for i in 1..snapshots.len() {
            for (j, n) in snapshots[i].nodes.iter().enumerate() {
                let dst = offsets[i] + j;
                let key = n.entity_id.as_str();
                let prev = if config.bridge_gaps {
                    frames[..i].iter().rev().find_map(|f| f.get(key))
                } else {
                    frames[i - 1].get(key)
                };
                if let Some(&src) = prev {
                    tkg.push_edge(temporal_edge(src, dst));
                }
            }
        }
    }
    Ok(tkg)
}

/// Incremental level-0 builder; one snapshot per [`StreamingBuilder::ingest`].
///
/// Per-call work is proportional to the snapshot size plus hash lookups in
/// the entity index.
#[derive(Clone, Debug)]
pub struct StreamingBuilder {
    tkg: TemporalKnowledgeGraph,
    last_timestamp: Option<f64>,
    feature_dim: Option<usize>,
    /// entity -> node of its latest appearance, with the frame it came from
    latest: HashMap<String, (NodeId, usize)>,
    frames_ingested: usize,
}

impl StreamingBuilder {
    pub fn new(config: BuilderConfig) -> Self {
        Self {
            tkg: TemporalKnowledgeGraph::empty(config),
            last_timestamp: None,
            feature_dim: None,
            latest: HashMap::new(),
            frames_ingested: 0,
        }
    }

    pub fn ingest(&mut self, snapshot: &SnapshotGraph) -> Result<()> {
        if let Some(last) = self.last_timestamp {
            if snapshot.timestamp <= last {
                return Err(Error::Ordering(format!(
                    "stale snapshot t={} after t={last}",
                    snapshot.timestamp
                )));
            }
        }
        check_snapshot(snapshot, self.feature_dim)?;
        if self.feature_dim.is_none() {
            self.feature_dim = snapshot.feature_dim();
        }

        let frame = self.frames_ingested;
        let offset = self.tkg.nodes.len();
        for n in &snapshot.nodes {
            self.tkg.push_node(level0_node(snapshot, n));
        }
        for e in &snapshot.edges {
            self.tkg.push_edge(spatial_edge(offset, e));
        }
        let config = self.tkg.config.clone();
        for (j, n) in snapshot.nodes.iter().enumerate() {
            let dst = offset + j;
            let prev = self.latest.insert(n.entity_id.clone(), (dst, frame));
            if !config.temporal_edges {
                continue;
            }
            if let Some((src, prev_frame)) = prev {
                if config.bridge_gaps || prev_frame + 1 == frame {
                    self.tkg.push_edge(temporal_edge(src, dst));
                }
            }
        }
        self.last_timestamp = Some(snapshot.timestamp);
        self.frames_ingested += 1;
        Ok(())
    }

    pub fn graph(&self) -> &TemporalKnowledgeGraph {
        &self.tkg
    }

    pub fn frames_ingested(&self) -> usize {
        self.frames_ingested
    }

    pub fn finish(self) -> TemporalKnowledgeGraph {
        self.tkg
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{SnapshotEdge, SnapshotNode};

    fn snap(t: f64, ids: &[&str]) -> SnapshotGraph {
        SnapshotGraph {
            timestamp: t,
            nodes: ids
                .iter()
                .map(|id| SnapshotNode {
                    entity_id: id.to_string(),
                    node_type: "agent".into(),
                    features: vec![t, 1.0],
                })
                .collect(),
            edges: if ids.len() > 1 {
                vec![SnapshotEdge {
                    src: 0,
                    dst: 1,
                    edge_type: "near".into(),
                    features: None,
                }]
            } else {
                vec![]
            },
        }
    }

    fn temporal_pairs(tkg: &TemporalKnowledgeGraph) -> Vec<(String, f64, f64)> {
        let mut out: Vec<_> = tkg
            .edges_of_kind(EdgeKind::Temporal)
            .map(|e| {
                let a = tkg.node(e.src).unwrap();
                let b = tkg.node(e.dst).unwrap();
                assert_eq!(a.entity_id, b.entity_id);
                (a.entity_id.clone().unwrap(), a.timestamp, b.timestamp)
            })
            .collect();
        out.sort_by(|x, y| x.partial_cmp(y).unwrap());
        out
    }

    #[test]
    fn consecutive_shared_entities_get_temporal_edges() {
        let tkg = build_level0(&[snap(1.0, &["a", "b"]), snap(2.0, &["a", "b"])], &BuilderConfig::default())
            .unwrap();
        assert_eq!(
            temporal_pairs(&tkg),
            vec![("a".into(), 1.0, 2.0), ("b".into(), 1.0, 2.0)]
        );
        assert_eq!(tkg.edges_of_kind(EdgeKind::Spatial).count(), 2);
        assert_eq!(tkg.level_count(), 1);
    }

    #[test]
    fn empty_input_gives_empty_graph() {
        let tkg = build_level0(&[], &BuilderConfig::default()).unwrap();
        assert_eq!(tkg.nodes().len(), 0);
        assert_eq!(tkg.level_count(), 1);
    }

    #[test]
    fn gaps_are_not_bridged_by_default() {
        let seq = [snap(1.0, &["a", "b"]), snap(2.0, &["b"]), snap(3.0, &["a", "b"])];
        let tkg = build_level0(&seq, &BuilderConfig::default()).unwrap();
        assert!(temporal_pairs(&tkg).iter().all(|(e, _, _)| e != "a"));

        let bridged = BuilderConfig {
            bridge_gaps: true,
            ..BuilderConfig::default()
        };
        let tkg = build_level0(&seq, &bridged).unwrap();
        assert!(temporal_pairs(&tkg).contains(&("a".into(), 1.0, 3.0)));

        let mut sb = StreamingBuilder::new(bridged);
        for s in &seq {
            sb.ingest(s).unwrap();
        }
        assert_eq!(temporal_pairs(sb.graph()), temporal_pairs(&tkg));
    }

    #[test]
    fn ordering_and_schema_errors() {
        let r = build_level0(&[snap(2.0, &["a"]), snap(1.0, &["a"])], &BuilderConfig::default());
        assert!(matches!(r, Err(Error::Ordering(_))));

        let mut bad = snap(2.0, &["a"]);
        bad.nodes[0].features.push(0.0);
        let r = build_level0(&[snap(1.0, &["a"]), bad.clone()], &BuilderConfig::default());
        assert!(matches!(r, Err(Error::Schema(_))));

        let mut sb = StreamingBuilder::new(BuilderConfig::default());
        sb.ingest(&snap(1.0, &["a"])).unwrap();
        assert!(matches!(sb.ingest(&snap(1.0, &["a"])), Err(Error::Ordering(_))));
        assert!(matches!(sb.ingest(&bad), Err(Error::Schema(_))));
        // the failed ingests left the state untouched
        assert_eq!(sb.graph().nodes().len(), 1);
    }

    #[test]
    fn duplicate_entities_and_self_loops_are_rejected() {
        let dup = snap(1.0, &["a", "a"]);
        assert!(build_level0(&[dup], &BuilderConfig::default()).is_err());
        let mut lp = snap(1.0, &["a", "b"]);
        lp.edges[0].dst = 0;
        assert!(build_level0(&[lp], &BuilderConfig::default()).is_err());
    }

    #[test]
    fn streaming_first_snapshot_and_new_entities() {
        let mut sb = StreamingBuilder::new(BuilderConfig::default());
        sb.ingest(&snap(1.0, &["a", "b"])).unwrap();
        assert_eq!(sb.graph().edges_of_kind(EdgeKind::Temporal).count(), 0);
        sb.ingest(&snap(2.0, &["a", "c"])).unwrap();
        let pairs = temporal_pairs(sb.graph());
        assert_eq!(pairs, vec![("a".into(), 1.0, 2.0)]);
        assert_eq!(sb.graph().nodes().len(), 4);
    }

    #[test]
    fn disabling_temporal_edges() {
        let cfg = BuilderConfig {
            temporal_edges: false,
            ..BuilderConfig::default()
        };
        let tkg = build_level0(&[snap(1.0, &["a", "b"]), snap(2.0, &["a", "b"])], &cfg).unwrap();
        assert_eq!(tkg.edges_of_kind(EdgeKind::Temporal).count(), 0);
    }
}
