use serde::{Deserialize, Serialize};

use super::LabeledSequence;
use crate::error::{Error, Result};
use crate::graph::SnapshotGraph;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WindowSample {
    /// First frame of the window within its sequence.
    pub start: usize,
    pub snapshots: Vec<SnapshotGraph>,
    pub label: Vec<f64>,
    /// Frames between the window's last frame and the labelled frame.
    pub future_offset: usize,
}

/// Fixed windows of `window` frames at every `stride`-th start, labelled
/// `future_offset` frames past their last frame. Windows whose label frame
/// falls beyond the sequence are dropped.
pub fn slice_windows(
    seq: &LabeledSequence,
    window: usize,
    stride: usize,
    future_offset: usize,
) -> Result<Vec<WindowSample>> {
    if window == 0 || stride == 0 {
        return Err(Error::InvalidArgument("window and stride must be positive".into()));
    }
    let n = seq.len();
    let mut out = Vec::new();
    let mut start = 0;
    while start + window <= n {
        let label_frame = start + window - 1 + future_offset;
        if label_frame < n {
            out.push(WindowSample {
                start,
                snapshots: seq.snapshots[start..start + window].to_vec(),
                label: seq.labels[label_frame].clone(),
                future_offset,
            });
        }
        start += stride;
    }
    Ok(out)
}

/// Prefixes of lengths `1..=window` of the first window, each carrying the
/// full window's label. `future_offset` of a prefix counts the unseen
/// frames up to the window end.
pub fn growing_windows(seq: &LabeledSequence, window: usize) -> Result<Vec<WindowSample>> {
    if window == 0 {
        return Err(Error::InvalidArgument("window must be positive".into()));
    }
    if seq.len() < window {
        return Ok(Vec::new());
    }
    let label = &seq.labels[window - 1];
    Ok((1..=window)
        .map(|len| WindowSample {
            start: 0,
            snapshots: seq.snapshots[..len].to_vec(),
            label: label.clone(),
            future_offset: window - len,
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seq(n: usize) -> LabeledSequence {
        LabeledSequence {
            snapshots: (0..n).map(|t| SnapshotGraph::new(t as f64)).collect(),
            labels: (0..n).map(|t| vec![t as f64]).collect(),
        }
    }

    #[test]
    fn fixed_windows() {
        let w = slice_windows(&seq(10), 5, 5, 0).unwrap();
        assert_eq!(w.len(), 2);
        assert_eq!(w[1].start, 5);
        assert_eq!(w[1].label, vec![9.0]);
        assert_eq!(w[0].snapshots.len(), 5);

        let shifted = slice_windows(&seq(10), 5, 5, 2).unwrap();
        assert_eq!(shifted.len(), 1);
        assert_eq!(shifted[0].label, vec![6.0]);
        assert!(slice_windows(&seq(3), 5, 1, 0).unwrap().is_empty());
        assert!(slice_windows(&seq(3), 0, 1, 0).is_err());
    }

    #[test]
    fn every_admissible_start_is_covered() {
        for stride in 1..4 {
            let w = slice_windows(&seq(11), 4, stride, 0).unwrap();
            let starts: Vec<usize> = w.iter().map(|s| s.start).collect();
            let expected: Vec<usize> = (0..=7).step_by(stride).collect();
            assert_eq!(starts, expected);
            assert!(w.iter().all(|s| s.start + s.snapshots.len() <= 11));
        }
    }

    #[test]
    fn growing_prefixes() {
        let g = growing_windows(&seq(4), 4).unwrap();
        let lens: Vec<usize> = g.iter().map(|s| s.snapshots.len()).collect();
        assert_eq!(lens, vec![1, 2, 3, 4]);
        assert!(g.iter().all(|s| s.label == vec![3.0]));
        assert_eq!(g[0].future_offset, 3);
        assert!(growing_windows(&seq(2), 4).unwrap().is_empty());
    }
}
