use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

fn check_shapes<A, B>(a: &[Vec<A>], b: &[Vec<B>]) -> Result<usize> {
    if a.len() != b.len() {
        return Err(Error::Shape(format!("{} rows against {} rows", a.len(), b.len())));
    }
    let c = a.first().map_or(0, Vec::len);
    for (i, (ra, rb)) in a.iter().zip(b).enumerate() {
        if ra.len() != c || rb.len() != c {
            return Err(Error::Shape(format!(
                "row {i} has {} and {} columns, expected {c}",
                ra.len(),
                rb.len()
            )));
        }
    }
    Ok(c)
}

/// Fraction of rows predicted exactly. Zero rows give 0.
pub fn exact_match(preds: &[Vec<bool>], truth: &[Vec<bool>]) -> Result<f64> {
    check_shapes(preds, truth)?;
    if preds.is_empty() {
        return Ok(0.0);
    }
    let hits = preds.iter().zip(truth).filter(|(p, t)| p == t).count();
    Ok(hits as f64 / preds.len() as f64)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

fn ratio(a: usize, b: usize) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

/// Precision, recall and F1 of every category; empty denominators give 0.
pub fn per_category_prf(preds: &[Vec<bool>], truth: &[Vec<bool>]) -> Result<Vec<Prf>> {
    let c = check_shapes(preds, truth)?;
    Ok((0..c)
        .map(|k| {
            let (mut tp, mut fp, mut fn_) = (0, 0, 0);
            for (p, t) in preds.iter().zip(truth) {
                match (p[k], t[k]) {
                    (true, true) => tp += 1,
                    (true, false) => fp += 1,
                    (false, true) => fn_ += 1,
                    _ => {}
                }
            }
            let precision = ratio(tp, tp + fp);
            let recall = ratio(tp, tp + fn_);
            let f1 = if precision + recall > 0.0 {
                2.0 * precision * recall / (precision + recall)
            } else {
                0.0
            };
            Prf {
                precision,
                recall,
                f1,
            }
        })
        .collect())
}

/// Unweighted means of the per-category values.
pub fn macro_prf(preds: &[Vec<bool>], truth: &[Vec<bool>]) -> Result<Prf> {
    let per = per_category_prf(preds, truth)?;
    if per.is_empty() {
        return Ok(Prf::default());
    }
    let n = per.len() as f64;
    Ok(Prf {
        precision: per.iter().map(|p| p.precision).sum::<f64>() / n,
        recall: per.iter().map(|p| p.recall).sum::<f64>() / n,
        f1: per.iter().map(|p| p.f1).sum::<f64>() / n,
    })
}

/// Average precision of one ranking, `None` without positives. Ranking is
/// by descending score, ties broken by ascending index.
pub fn average_precision(scores: &[f64], truth: &[bool]) -> Option<f64> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    let mut hits = 0;
    let mut sum = 0.0;
    for (rank, &i) in order.iter().enumerate() {
        if truth[i] {
            hits += 1;
            sum += hits as f64 / (rank + 1) as f64;
        }
    }
    (hits > 0).then(|| sum / hits as f64)
}

/// Per-category average precision (`None` where a category has no positive).
pub fn per_category_ap(scores: &[Vec<f64>], truth: &[Vec<bool>]) -> Result<Vec<Option<f64>>> {
    let c = check_shapes(scores, truth)?;
    Ok((0..c)
        .map(|k| {
            let s: Vec<f64> = scores.iter().map(|r| r[k]).collect();
            let t: Vec<bool> = truth.iter().map(|r| r[k]).collect();
            average_precision(&s, &t)
        })
        .collect())
}

/// Mean AP over categories that have at least one positive.
pub fn mean_average_precision(scores: &[Vec<f64>], truth: &[Vec<bool>]) -> Result<f64> {
    let aps: Vec<f64> = per_category_ap(scores, truth)?.into_iter().flatten().collect();
    if aps.is_empty() {
        return Err(Error::InvalidArgument("no positive labels for mAP".into()));
    }
    Ok(aps.iter().sum::<f64>() / aps.len() as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CategoryMetrics {
    pub name: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub average_precision: Option<f64>,
    pub positives: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub samples: usize,
    pub exact_match: f64,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
    /// Absent when no category has a positive sample.
    pub map: Option<f64>,
    pub per_category: Vec<CategoryMetrics>,
}

impl MetricsReport {
    pub fn compute(
        categories: &[String],
        preds: &[Vec<bool>],
        scores: &[Vec<f64>],
        truth: &[Vec<bool>],
    ) -> Result<Self> {
        let c = check_shapes(preds, truth)?;
        check_shapes(scores, truth)?;
        if !truth.is_empty() && c != categories.len() {
            return Err(Error::Shape(format!("{c} columns for {} categories", categories.len())));
        }
        let prf = per_category_prf(preds, truth)?;
        let aps = per_category_ap(scores, truth)?;
        let macro_ = macro_prf(preds, truth)?;
        let present: Vec<f64> = aps.iter().flatten().copied().collect();
        let per_category = categories
            .iter()
            .enumerate()
            .map(|(k, name)| CategoryMetrics {
                name: name.clone(),
                precision: prf.get(k).map_or(0.0, |p| p.precision),
                recall: prf.get(k).map_or(0.0, |p| p.recall),
                f1: prf.get(k).map_or(0.0, |p| p.f1),
                average_precision: aps.get(k).copied().flatten(),
                positives: truth.iter().filter(|r| r[k]).count(),
            })
            .collect();
        Ok(Self {
            samples: truth.len(),
            exact_match: exact_match(preds, truth)?,
            macro_precision: macro_.precision,
            macro_recall: macro_.recall,
            macro_f1: macro_.f1,
            map: (!present.is_empty()).then(|| present.iter().sum::<f64>() / present.len() as f64),
            per_category,
        })
    }
}

/// Aligned text table, one row per labelled report.
pub fn format_table(rows: &[(String, &MetricsReport)]) -> String {
    let width = rows.iter().map(|(n, _)| n.len()).max().unwrap_or(0).max(4);
    let mut out = format!(
        "{:<width$}  {:>7}  {:>6}  {:>6}  {:>6}  {:>6}  {:>6}\n",
        "name", "samples", "EM", "P", "R", "F1", "mAP"
    );
    for (name, r) in rows {
        let map = r.map.map_or_else(|| "-".to_string(), |m| format!("{m:.4}"));
        out.push_str(&format!(
            "{:<width$}  {:>7}  {:>6.4}  {:>6.4}  {:>6.4}  {:>6.4}  {:>6}\n",
            name, r.samples, r.exact_match, r.macro_precision, r.macro_recall, r.macro_f1, map
        ));
    }
    out
}
