//! Schema-versioned JSON export of a [`TemporalKnowledgeGraph`].
//!
//! Edges are written in a canonical order so that two constructions of the
//! same graph export to identical bytes regardless of insertion order.

use serde::{Deserialize, Serialize};

use super::{BuilderConfig, NodeId, TemporalKnowledgeGraph, TkgEdge, TkgNode};
use crate::error::{Error, Result};

pub const TKG_FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TkgExport {
    pub format_version: u32,
    pub level_count: usize,
    pub builder: BuilderConfig,
    pub nodes: Vec<TkgNode>,
    pub edges: Vec<TkgEdge>,
    pub levels: Vec<Vec<NodeId>>,
}

fn edge_key(e: &TkgEdge) -> (usize, super::EdgeKind, NodeId, NodeId, Option<&str>) {
    (e.level, e.kind, e.src, e.dst, e.edge_type.as_deref())
}

impl TemporalKnowledgeGraph {
    pub fn to_export(&self) -> TkgExport {
        let mut edges = self.edges.clone();
        edges.sort_by(|a, b| edge_key(a).cmp(&edge_key(b)));
        TkgExport {
            format_version: TKG_FORMAT_VERSION,
            level_count: self.level_count(),
            builder: self.config.clone(),
            nodes: self.nodes.clone(),
            edges,
            levels: self.levels.clone(),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&self.to_export())?)
    }

    /// Parses an export and rejects graphs that violate any invariant.
    pub fn from_json(text: &str) -> Result<Self> {
        let export: TkgExport =
            serde_json::from_str(text).map_err(|e| Error::Schema(e.to_string()))?;
        Self::from_export(export)
    }

    pub fn from_export(export: TkgExport) -> Result<Self> {
        if export.format_version != TKG_FORMAT_VERSION {
            return Err(Error::Schema(format!(
                "graph format version {} is not supported",
                export.format_version
            )));
        }
        if export.level_count != export.levels.len().max(1) {
            return Err(Error::Schema(format!(
                "level_count {} disagrees with {} level lists",
                export.level_count,
                export.levels.len()
            )));
        }
        let mut levels = export.levels;
        if levels.is_empty() {
            levels.push(Vec::new());
        }
        let tkg = Self {
            nodes: export.nodes,
            edges: export.edges,
            levels,
            config: export.builder,
        };
        let violations = super::validate(&tkg);
        if let Some(v) = violations.first() {
            return Err(Error::Schema(format!(
                "{} invariant violation(s), first: {v}",
                violations.len()
            )));
        }
        Ok(tkg)
    }
}
