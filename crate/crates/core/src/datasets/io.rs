//! Label file format, one JSON object per line:
//! `{"seq": 0, "frame": 4, "labels": ["converge"]}` or with a 0/1 vector
//! `{"seq": 0, "frame": 4, "labels": [1, 0, 0]}`. Frames without a line
//! have no positive labels.

use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Dataset, LabeledSequence};
use crate::error::{Error, Result};
use crate::graph::wire::parse_sequences;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LabelValue {
    Names(Vec<String>),
    Vector(Vec<f64>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LabelLine {
    pub seq: usize,
    pub frame: usize,
    pub labels: LabelValue,
}

fn schema(line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        message: message.into(),
    }
}

/// Parses a label file against the given categories and sequence lengths,
/// returning per-sequence `frames x |C|` label matrices.
pub fn parse_labels(
    text: &str,
    categories: &[String],
    lengths: &[usize],
) -> Result<Vec<Vec<Vec<f64>>>> {
    let c = categories.len();
    let mut out: Vec<Vec<Vec<f64>>> = lengths.iter().map(|&n| vec![vec![0.0; c]; n]).collect();
    let mut seen = HashSet::new();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let raw = raw.trim();
        if raw.is_empty() {
            continue;
        }
        let line: LabelLine =
            serde_json::from_str(raw).map_err(|e| schema(line_no, e.to_string()))?;
        let Some(frames) = out.get_mut(line.seq) else {
            return Err(schema(line_no, format!("unknown sequence {}", line.seq)));
        };
        let Some(row) = frames.get_mut(line.frame) else {
            return Err(schema(
                line_no,
                format!("frame {} outside sequence {}", line.frame, line.seq),
            ));
        };
        if !seen.insert((line.seq, line.frame)) {
            return Err(schema(
                line_no,
                format!("duplicate labels for sequence {} frame {}", line.seq, line.frame),
            ));
        }
        match line.labels {
            LabelValue::Names(names) => {
                for name in names {
                    let k = categories
                        .iter()
                        .position(|c| *c == name)
                        .ok_or_else(|| Error::Schema(format!("line {line_no}: unknown category {name:?}")))?;
                    row[k] = 1.0;
                }
            }
            LabelValue::Vector(v) => {
                if v.len() != c {
                    return Err(Error::Schema(format!(
                        "line {line_no}: label vector has {} entries for {c} categories",
                        v.len()
                    )));
                }
                if let Some(bad) = v.iter().find(|&&x| x != 0.0 && x != 1.0) {
                    return Err(Error::Schema(format!("line {line_no}: label value {bad} is not 0 or 1")));
                }
                row.copy_from_slice(&v);
            }
        }
    }
    Ok(out)
}

/// Builds a dataset from snapshot and label file contents.
pub fn load_dataset(snapshot_text: &str, label_text: &str, categories: &[String]) -> Result<Dataset> {
    let seqs = parse_sequences(snapshot_text)?;
    let lengths: Vec<usize> = seqs.iter().map(Vec::len).collect();
    let labels = parse_labels(label_text, categories, &lengths)?;
    Ok(Dataset {
        categories: categories.to_vec(),
        sequences: seqs
            .into_iter()
            .zip(labels)
            .map(|(snapshots, labels)| LabeledSequence { snapshots, labels })
            .collect(),
    })
}

pub fn load_dataset_files(
    snapshots: impl AsRef<Path>,
    labels: impl AsRef<Path>,
    categories: &[String],
) -> Result<Dataset> {
    let s = std::fs::read_to_string(snapshots)?;
    let l = std::fs::read_to_string(labels)?;
    load_dataset(&s, &l, categories)
}

/// Writes one line per frame that has at least one positive label, using
/// category names.
pub fn labels_to_text(dataset: &Dataset) -> Result<String> {
    let mut out = String::new();
    for (seq, s) in dataset.sequences.iter().enumerate() {
        for (frame, row) in s.labels.iter().enumerate() {
            let names: Vec<String> = row
                .iter()
                .zip(&dataset.categories)
                .filter(|(y, _)| **y > 0.5)
                .map(|(_, c)| c.clone())
                .collect();
            if names.is_empty() {
                continue;
            }
            let line = LabelLine {
                seq,
                frame,
                labels: LabelValue::Names(names),
            };
            out.push_str(&serde_json::to_string(&line)?);
            out.push('\n');
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::wire::sequences_to_text;
    use crate::graph::{SnapshotGraph, SnapshotNode};

    fn cats() -> Vec<String> {
        vec!["a".into(), "b".into()]
    }

    fn frames(n: usize) -> Vec<SnapshotGraph> {
        (0..n)
            .map(|t| {
                let mut s = SnapshotGraph::new(t as f64);
                s.nodes.push(SnapshotNode {
                    entity_id: "x".into(),
                    node_type: "agent".into(),
                    features: vec![t as f64],
                });
                s
            })
            .collect()
    }

    #[test]
    fn empty_files_make_an_empty_dataset() {
        let d = load_dataset("", "", &cats()).unwrap();
        assert!(d.is_empty());
    }

    #[test]
    fn one_sequence_with_one_label_row() {
        let snaps = sequences_to_text(&[frames(5)]).unwrap();
        let d = load_dataset(&snaps, r#"{"seq": 0, "frame": 4, "labels": ["b"]}"#, &cats()).unwrap();
        assert_eq!(d.len(), 1);
        assert_eq!(d.sequences[0].len(), 5);
        assert_eq!(d.sequences[0].labels[4], vec![0.0, 1.0]);
        assert_eq!(d.sequences[0].labels[0], vec![0.0, 0.0]);
        let vec_form = load_dataset(&snaps, r#"{"seq":0,"frame":4,"labels":[0,1]}"#, &cats()).unwrap();
        assert_eq!(vec_form, d);
        assert_eq!(load_dataset(&snaps, &labels_to_text(&d).unwrap(), &cats()).unwrap(), d);
    }

    #[test]
    fn label_errors_carry_line_numbers() {
        let snaps = sequences_to_text(&[frames(3)]).unwrap();
        let dims = load_dataset(&snaps, "\n{\"seq\":0,\"frame\":1,\"labels\":[1,0,1]}", &cats());
        assert!(matches!(dims, Err(Error::Schema(m)) if m.contains("line 2")));
        let unknown = load_dataset(&snaps, r#"{"seq":0,"frame":1,"labels":["zzz"]}"#, &cats());
        assert!(matches!(unknown, Err(Error::Schema(_))));
        let bad = load_dataset(&snaps, "{\"seq\":0}\n", &cats());
        assert!(matches!(bad, Err(Error::Parse { line: 1, .. })));
        let out_of_range = load_dataset(&snaps, r#"{"seq":3,"frame":0,"labels":[]}"#, &cats());
        assert!(matches!(out_of_range, Err(Error::Parse { line: 1, .. })));
        let dup = "{\"seq\":0,\"frame\":0,\"labels\":[]}\n{\"seq\":0,\"frame\":0,\"labels\":[]}";
        assert!(matches!(load_dataset(&snaps, dup, &cats()), Err(Error::Parse { line: 2, .. })));
        let snap_err = load_dataset("{\"t\":0}\n", "", &cats());
        assert!(matches!(snap_err, Err(Error::Parse { line: 1, .. })));
    }
}
