//! Labelled snapshot sequences: file formats, sequence-level splits, window
//! slicing and a simulator with planted ordered events.

mod io;
mod simulate;
mod split;
mod windows;

pub use io::{labels_to_text, load_dataset, load_dataset_files, parse_labels, LabelLine, LabelValue};
pub use simulate::{
    simulate, Composite, Primitive, PrimitiveEvent, SimConfig, SimManifest,
    SimOutput,
};
pub use split::{split, Split};
pub use windows::{growing_windows, slice_windows, WindowSample};

use serde::{Deserialize, Serialize};

use crate::graph::SnapshotGraph;

/// One snapshot sequence with a label vector per frame.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabeledSequence {
    pub snapshots: Vec<SnapshotGraph>,
    /// `frames x |C|`, entries 0 or 1.
    pub labels: Vec<Vec<f64>>,
}

impl LabeledSequence {
    pub fn len(&self) -> usize {
        self.snapshots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.snapshots.is_empty()
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub categories: Vec<String>,
    pub sequences: Vec<LabeledSequence>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.sequences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sequences.is_empty()
    }

    /// The sequences at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            categories: self.categories.clone(),
            sequences: indices.iter().map(|&i| self.sequences[i].clone()).collect(),
        }
    }

    pub fn feature_dim(&self) -> Option<usize> {
        self.sequences
            .iter()
            .flat_map(|s| &s.snapshots)
            .find_map(SnapshotGraph::feature_dim)
    }
}
