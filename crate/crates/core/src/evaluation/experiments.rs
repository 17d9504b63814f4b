use serde::{Deserialize, Serialize};

use super::metrics::{format_table, MetricsReport};
use crate::classifier::threshold_logits;
use crate::datasets::{growing_windows, slice_windows, LabeledSequence, WindowSample};
use crate::error::{Error, Result};
use crate::model::ModelBundle;

/// Scores every window with `bundle` and compares against its label.
pub fn evaluate(bundle: &ModelBundle, samples: &[WindowSample], categories: &[String]) -> Result<MetricsReport> {
    let mut preds = Vec::with_capacity(samples.len());
    let mut scores = Vec::with_capacity(samples.len());
    let mut truth = Vec::with_capacity(samples.len());
    for s in samples {
        let p = threshold_logits(&bundle.logits(&s.snapshots)?, bundle.classifier.config.threshold);
        preds.push(p.labels);
        scores.push(p.probabilities);
        truth.push(s.label.iter().map(|&y| y > 0.5).collect());
    }
    MetricsReport::compute(categories, &preds, &scores, &truth)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArmReport {
    pub name: String,
    pub report: MetricsReport,
}

/// One report per named model over the same windows.
pub fn run_main_eval(
    arms: &[(String, &ModelBundle)],
    samples: &[WindowSample],
    categories: &[String],
) -> Result<Vec<ArmReport>> {
    arms.iter()
        .map(|(name, bundle)| {
            Ok(ArmReport {
                name: name.clone(),
                report: evaluate(bundle, samples, categories)?,
            })
        })
        .collect()
}

pub fn arms_table(arms: &[ArmReport]) -> String {
    let rows: Vec<(String, &MetricsReport)> = arms.iter().map(|a| (a.name.clone(), &a.report)).collect();
    format_table(&rows)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    /// Frames of history seen.
    pub prefix: usize,
    /// Exact-match accuracy.
    pub accuracy: f64,
    pub report: MetricsReport,
}

/// Metrics of growing prefixes of each sequence's first window, always
/// against the full window's label.
pub fn run_growing_window(
    bundle: &ModelBundle,
    sequences: &[LabeledSequence],
    window: usize,
    prefixes: &[usize],
    categories: &[String],
) -> Result<Vec<CurvePoint>> {
    if let Some(bad) = prefixes.iter().find(|&&p| p == 0 || p > window) {
        return Err(Error::InvalidArgument(format!("prefix {bad} outside 1..={window}")));
    }
    let mut by_prefix: Vec<Vec<WindowSample>> = vec![Vec::new(); window + 1];
    if !prefixes.is_empty() {
        for seq in sequences {
            for s in growing_windows(seq, window)? {
                let len = s.snapshots.len();
                if prefixes.contains(&len) {
                    by_prefix[len].push(s);
                }
            }
        }
    }
    prefixes
        .iter()
        .map(|&p| {
            let report = evaluate(bundle, &by_prefix[p], categories)?;
            Ok(CurvePoint {
                prefix: p,
                accuracy: report.exact_match,
                report,
            })
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub offset: usize,
    pub report: MetricsReport,
}

/// Metrics of the same model against labels `offset` frames past each
/// window. Offsets are sorted and deduplicated.
pub fn run_future_sweep(
    bundle: &ModelBundle,
    sequences: &[LabeledSequence],
    window: usize,
    stride: usize,
    offsets: &[usize],
    categories: &[String],
) -> Result<Vec<SweepPoint>> {
    let mut offsets = offsets.to_vec();
    offsets.sort_unstable();
    offsets.dedup();
    offsets
        .into_iter()
        .map(|offset| {
            let mut samples = Vec::new();
            for seq in sequences {
                samples.extend(slice_windows(seq, window, stride, offset)?);
            }
            Ok(SweepPoint {
                offset,
                report: evaluate(bundle, &samples, categories)?,
            })
        })
        .collect()
}
