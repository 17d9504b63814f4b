//! Line-delimited JSON snapshot format.
//!
//! One snapshot per line:
//! `{"t": 0.5, "nodes": [{"id": "a", "type": "agent", "x": [..]}], "edges": [{"s": 0, "d": 1, "k": "near"}]}`.
//! Several sequences may share one file, separated by blank lines.

use serde::{Deserialize, Serialize};

use super::{SnapshotEdge, SnapshotGraph, SnapshotNode};
use crate::error::{Error, Result};

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct WireNode {
    id: String,
    #[serde(rename = "type")]
    node_type: String,
    x: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct WireEdge {
    s: usize,
    d: usize,
    k: String,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct WireSnapshot {
    t: f64,
    nodes: Vec<WireNode>,
    edges: Vec<WireEdge>,
}

/// Parses one snapshot line. `line_no` is 1-based and only used in errors.
pub fn parse_snapshot_line(line: &str, line_no: usize) -> Result<SnapshotGraph> {
    let w: WireSnapshot = serde_json::from_str(line).map_err(|e| Error::Parse {
        line: line_no,
        message: e.to_string(),
    })?;
    Ok(SnapshotGraph {
        timestamp: w.t,
        nodes: w
            .nodes
            .into_iter()
            .map(|n| SnapshotNode {
                entity_id: n.id,
                node_type: n.node_type,
                features: n.x,
            })
            .collect(),
        edges: w
            .edges
            .into_iter()
            .map(|e| SnapshotEdge {
                src: e.s,
                dst: e.d,
                edge_type: e.k,
                features: None,
            })
            .collect(),
    })
}

/// Parses a file of blank-line separated sequences.
pub fn parse_sequences(text: &str) -> Result<Vec<Vec<SnapshotGraph>>> {
    let mut out = Vec::new();
    let mut current = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            if !current.is_empty() {
                out.push(std::mem::take(&mut current));
            }
            continue;
        }
        current.push(parse_snapshot_line(line, i + 1)?);
    }
    if !current.is_empty() {
        out.push(current);
    }
    Ok(out)
}

/// Parses every non-blank line as one sequence.
pub fn parse_sequence(text: &str) -> Result<Vec<SnapshotGraph>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| parse_snapshot_line(l, i + 1))
        .collect()
}

/// Serialises one snapshot as a single line (no trailing newline). Edge
/// feature vectors are not part of the wire format and are dropped.
pub fn snapshot_to_line(s: &SnapshotGraph) -> Result<String> {
    let w = WireSnapshot {
        t: s.timestamp,
        nodes: s
            .nodes
            .iter()
            .map(|n| WireNode {
                id: n.entity_id.clone(),
                node_type: n.node_type.clone(),
                x: n.features.clone(),
            })
            .collect(),
        edges: s
            .edges
            .iter()
            .map(|e| WireEdge {
                s: e.src,
                d: e.dst,
                k: e.edge_type.clone(),
            })
            .collect(),
    };
    Ok(serde_json::to_string(&w)?)
}

/// Writes sequences separated by blank lines.
pub fn sequences_to_text(seqs: &[Vec<SnapshotGraph>]) -> Result<String> {
    let mut out = String::new();
    for (i, seq) in seqs.iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        for s in seq {
            out.push_str(&snapshot_to_line(s)?);
            out.push('\n');
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    const LINE: &str = r#"{"t":1.5,"nodes":[{"id":"a","type":"agent","x":[0.1,2.0]},{"id":"b","type":"ball","x":[3.0,-1.0]}],"edges":[{"s":0,"d":1,"k":"near"}]}"#;

    #[test]
    fn parses_and_writes_canonical_line() {
        let s = parse_snapshot_line(LINE, 1).unwrap();
        assert_eq!(s.timestamp, 1.5);
        assert_eq!(s.nodes[1].node_type, "ball");
        assert_eq!(s.edges[0].edge_type, "near");
        assert_eq!(snapshot_to_line(&s).unwrap(), LINE);
    }

    #[test]
    fn unknown_fields_and_bad_lines_report_line_number() {
        let extra = LINE.replace("\"k\":\"near\"", "\"k\":\"near\",\"w\":2");
        let text = format!("{LINE}\n{extra}\n");
        match parse_sequence(&text) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
        assert!(matches!(parse_snapshot_line("{", 7), Err(Error::Parse { line: 7, .. })));
    }

    #[test]
    fn blank_lines_split_sequences() {
        let text = format!("{LINE}\n{LINE}\n\n\n{LINE}\n");
        let seqs = parse_sequences(&text).unwrap();
        assert_eq!(seqs.iter().map(Vec::len).collect::<Vec<_>>(), vec![2, 1]);
        assert_eq!(parse_sequences(&sequences_to_text(&seqs).unwrap()).unwrap(), seqs);
        assert!(parse_sequences("").unwrap().is_empty());
    }
}
