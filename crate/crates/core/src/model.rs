//! A trained pipeline: graph construction settings, the optional event
//! model that builds the hierarchy, and the classifier on top.

use serde::{Deserialize, Serialize};

use crate::classifier::{threshold_logits, Ablation, Classifier, GraphInput, Prediction};
use crate::error::{Error, Result};
use crate::event_model::EventModel;
use crate::graph::{build_level0, BuilderConfig, SnapshotGraph, TemporalKnowledgeGraph};
use crate::hierarchy::{build_hierarchy, HierarchyConfig};
use crate::numerics::Checkpoint;

pub const MODEL_KIND: &str = "model";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TrainingMode {
    /// Event model pretrained and frozen, classifier trained on top.
    TwoPhase,
    /// Event model and classifier trained jointly.
    EndToEnd,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelBundle {
    pub mode: TrainingMode,
    pub builder: BuilderConfig,
    pub hierarchy: HierarchyConfig,
    /// Absent for the flat level-0 network.
    pub event: Option<EventModel>,
    pub classifier: Classifier,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BundleMeta {
    mode: TrainingMode,
    builder: BuilderConfig,
    hierarchy: HierarchyConfig,
    event: Option<serde_json::Value>,
    classifier: serde_json::Value,
}

impl ModelBundle {
    pub fn ablation(&self) -> Ablation {
        self.classifier.ablation
    }

    /// Builder settings after the ablation: the spatial-only variant never
    /// creates temporal edges.
    pub fn effective_builder(&self) -> BuilderConfig {
        effective_builder(&self.builder, self.ablation())
    }

    pub fn level0(&self, snapshots: &[SnapshotGraph]) -> Result<TemporalKnowledgeGraph> {
        build_level0(snapshots, &self.effective_builder())
    }

    /// Level 0 plus whatever hierarchy the event model builds over it.
    pub fn graph(&self, snapshots: &[SnapshotGraph]) -> Result<TemporalKnowledgeGraph> {
        let tkg = self.level0(snapshots)?;
        self.lift(&tkg)
    }

    pub fn lift(&self, level0: &TemporalKnowledgeGraph) -> Result<TemporalKnowledgeGraph> {
        match (&self.event, self.ablation()) {
            (Some(event), a) if a != Ablation::NoSupernodes => {
                build_hierarchy(level0, event, &self.hierarchy)
            }
            _ => Ok(level0.clone()),
        }
    }

    pub fn input(&self, snapshots: &[SnapshotGraph]) -> Result<GraphInput> {
        self.classifier.input(&self.graph(snapshots)?)
    }

    pub fn logits(&self, snapshots: &[SnapshotGraph]) -> Result<Vec<f64>> {
        self.classifier.logits(&self.input(snapshots)?)
    }

    pub fn predict(&self, snapshots: &[SnapshotGraph]) -> Result<Prediction> {
        Ok(threshold_logits(
            &self.logits(snapshots)?,
            self.classifier.config.threshold,
        ))
    }

    pub fn to_checkpoint(&self, config_hash: &str) -> Result<Checkpoint> {
        let event_meta = match &self.event {
            Some(e) => Some(e.to_checkpoint(config_hash)?.meta),
            None => None,
        };
        let meta = serde_json::to_value(BundleMeta {
            mode: self.mode,
            builder: self.builder.clone(),
            hierarchy: self.hierarchy.clone(),
            event: event_meta,
            classifier: self.classifier.meta(),
        })?;
        let mut ck = Checkpoint::new(MODEL_KIND, config_hash, meta);
        if let Some(e) = &self.event {
            ck.push_params(&e.params, "event");
        }
        ck.push_params(&self.classifier.params, "classifier");
        Ok(ck)
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        ck.expect_kind(MODEL_KIND)?;
        let meta: BundleMeta = serde_json::from_value(ck.meta.clone())
            .map_err(|e| Error::Checkpoint(format!("model metadata: {e}")))?;
        let event = match &meta.event {
            Some(m) => Some(EventModel::from_checkpoint_meta(ck, m)?),
            None => None,
        };
        Ok(Self {
            mode: meta.mode,
            builder: meta.builder,
            hierarchy: meta.hierarchy,
            event,
            classifier: Classifier::from_checkpoint_meta(ck, &meta.classifier)?,
        })
    }
}

pub fn effective_builder(builder: &BuilderConfig, ablation: Ablation) -> BuilderConfig {
    BuilderConfig {
        temporal_edges: builder.temporal_edges && ablation != Ablation::NoTemporal,
        ..builder.clone()
    }
}
