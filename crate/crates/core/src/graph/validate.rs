use std::collections::{BTreeSet, HashSet};
use std::fmt;

use super::{EdgeKind, TemporalKnowledgeGraph};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Violation {
    pub rule: &'static str,
    pub detail: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.rule, self.detail)
    }
}

/// Lists every broken graph invariant; empty means the graph is well formed.
pub fn validate(tkg: &TemporalKnowledgeGraph) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut push = |rule: &'static str, detail: String| out.push(Violation { rule, detail });

    let n = tkg.nodes.len();
    let dim = tkg.feature_dim();
    for (i, node) in tkg.nodes.iter().enumerate() {
        if node.node_id != i {
            push("dense_ids", format!("node at {i} has id {}", node.node_id));
        }
        if Some(node.features.len()) != dim {
            push("feature_dim", format!("node {i} has {} features", node.features.len()));
        }
        if node.features.iter().any(|v| !v.is_finite()) || !node.timestamp.is_finite() {
            push("finite", format!("node {i} has non-finite values"));
        }
        if let Some(a) = node.attention_score {
            if !(0.0..=1.0).contains(&a) {
                push("attention_range", format!("node {i} score {a}"));
            }
        }
        if node.level >= tkg.levels.len() {
            push("level_index", format!("node {i} at unknown level {}", node.level));
        }
    }

    let mut indexed = vec![false; n];
    for (l, ids) in tkg.levels.iter().enumerate() {
        for &id in ids {
            match tkg.nodes.get(id) {
                Some(node) if node.level == l && !indexed[id] => indexed[id] = true,
                _ => push("level_index", format!("level {l} lists bad node {id}")),
            }
        }
    }
    if let Some(missing) = indexed.iter().position(|&x| !x) {
        push("level_index", format!("node {missing} is not in the level index"));
    }
    if tkg.levels.is_empty() {
        push("level_count", "no levels".into());
    }

    // entity uniqueness per level-0 frame
    let mut frame_entities = HashSet::new();
    for node in tkg.nodes.iter().filter(|x| x.level == 0) {
        if let Some(e) = &node.entity_id {
            if !frame_entities.insert((node.timestamp.to_bits(), e.as_str())) {
                push("entity_unique", format!("{e} repeats at t={}", node.timestamp));
            }
        }
    }
    let frame_times: Vec<f64> = {
        let set: BTreeSet<u64> = tkg
            .nodes
            .iter()
            .filter(|x| x.level == 0)
            .map(|x| x.timestamp.to_bits())
            .collect();
        let mut v: Vec<f64> = set.into_iter().map(f64::from_bits).collect();
        v.sort_by(f64::total_cmp);
        v
    };
    let frame_of = |t: f64| frame_times.binary_search_by(|x| x.total_cmp(&t)).ok();

    for (i, e) in tkg.edges.iter().enumerate() {
        let (Some(a), Some(b)) = (tkg.nodes.get(e.src), tkg.nodes.get(e.dst)) else {
            push("edge_endpoints", format!("edge {i} {}->{}", e.src, e.dst));
            continue;
        };
        if e.src == e.dst {
            push("self_loop", format!("edge {i} on node {}", e.src));
        }
        match e.kind {
            EdgeKind::Spatial => {
                if a.level != b.level || a.timestamp != b.timestamp {
                    push("spatial", format!("edge {i} spans frames or levels"));
                }
                if e.level != a.level {
                    push("edge_level", format!("edge {i}"));
                }
            }
            EdgeKind::Temporal => {
                if a.level != 0 || b.level != 0 || e.level != 0 {
                    push("temporal_level", format!("edge {i} not at level 0"));
                }
                if a.entity_id.is_none() || a.entity_id != b.entity_id {
                    push("temporal_entity", format!("edge {i} joins different entities"));
                }
                match (frame_of(a.timestamp), frame_of(b.timestamp)) {
                    (Some(fa), Some(fb)) if fa < fb => {
                        if !tkg.config.bridge_gaps && fb != fa + 1 {
                            push("temporal_consecutive", format!("edge {i} skips frames"));
                        }
                    }
                    _ => push("temporal_order", format!("edge {i} does not run forward in time")),
                }
            }
            EdgeKind::Hierarchy => {
                if a.level != b.level + 1 || e.level != b.level {
                    push(
                        "hierarchy_level",
                        format!("edge {i} joins levels {} and {}", a.level, b.level),
                    );
                }
            }
            EdgeKind::SuperAdjacency => {
                if a.level != b.level || a.level == 0 || e.level != a.level {
                    push("super_adjacency_level", format!("edge {i}"));
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{build_level0, BuilderConfig, SnapshotGraph, SnapshotNode, TkgEdge};

    fn seq() -> Vec<SnapshotGraph> {
        (0..3)
            .map(|t| SnapshotGraph {
                timestamp: t as f64,
                nodes: ["a", "b"]
                    .iter()
                    .map(|id| SnapshotNode {
                        entity_id: id.to_string(),
                        node_type: "x".into(),
                        features: vec![0.5],
                    })
                    .collect(),
                edges: vec![],
            })
            .collect()
    }

    #[test]
    fn built_graph_is_valid() {
        let tkg = build_level0(&seq(), &BuilderConfig::default()).unwrap();
        assert!(validate(&tkg).is_empty());
    }

    #[test]
    fn skipping_temporal_edge_is_reported() {
        let mut tkg = build_level0(&seq(), &BuilderConfig::default()).unwrap();
        tkg.edges.push(TkgEdge {
            src: 0,
            dst: 4,
            kind: EdgeKind::Temporal,
            level: 0,
            edge_type: None,
        });
        let v = validate(&tkg);
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].rule, "temporal_consecutive");
    }

    #[test]
    fn bad_hierarchy_and_endpoints_are_reported() {
        let mut tkg = build_level0(&seq(), &BuilderConfig::default()).unwrap();
        tkg.edges.push(TkgEdge {
            src: 0,
            dst: 1,
            kind: EdgeKind::Hierarchy,
            level: 0,
            edge_type: None,
        });
        tkg.edges.push(TkgEdge {
            src: 0,
            dst: 99,
            kind: EdgeKind::Spatial,
            level: 0,
            edge_type: None,
        });
        let rules: Vec<_> = validate(&tkg).into_iter().map(|v| v.rule).collect();
        assert!(rules.contains(&"hierarchy_level"));
        assert!(rules.contains(&"edge_endpoints"));
    }
}
