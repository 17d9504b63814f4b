use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{Matrix, Tape, Var};

/// Category names with the weight of a positive example per category.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LabelSpace {
    pub categories: Vec<String>,
    pub pos_weights: Vec<f64>,
}

impl LabelSpace {
    /// Unit weights.
    pub fn uniform(categories: Vec<String>) -> Self {
        let pos_weights = vec![1.0; categories.len()];
        Self {
            categories,
            pos_weights,
        }
    }

    /// Weights `#negatives / #positives` from training labels, clipped to
    /// `[0.1, 10]`. A category without positives gets the upper clip and
    /// one without negatives the lower.
    pub fn from_labels(categories: Vec<String>, labels: &[Vec<f64>]) -> Result<Self> {
        let c = categories.len();
        let mut pos = vec![0usize; c];
        for (i, row) in labels.iter().enumerate() {
            if row.len() != c {
                return Err(Error::Schema(format!(
                    "label row {i} has {} entries for {c} categories",
                    row.len()
                )));
            }
            for (p, &y) in pos.iter_mut().zip(row) {
                if y > 0.5 {
                    *p += 1;
                }
            }
        }
        let total = labels.len();
        let pos_weights = pos
            .iter()
            .map(|&p| {
                if p == 0 {
                    10.0
                } else {
                    ((total - p) as f64 / p as f64).clamp(0.1, 10.0)
                }
            })
            .collect();
        Ok(Self {
            categories,
            pos_weights,
        })
    }

    pub fn len(&self) -> usize {
        self.categories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.categories.is_empty()
    }

    pub fn check(&self) -> Result<()> {
        if self.categories.is_empty() {
            return Err(Error::Config("label space has no categories".into()));
        }
        if self.pos_weights.len() != self.categories.len() {
            return Err(Error::Config("one positive weight per category".into()));
        }
        if self.pos_weights.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
            return Err(Error::Config("positive weights must be finite and > 0".into()));
        }
        Ok(())
    }
}

/// Weighted binary cross-entropy over categories:
/// `−(1/|C|) Σ_c [p_c y_c ln σ(z_c) + (1 − y_c) ln σ(−z_c)]` for a
/// `1 x |C|` logit row.
pub fn classification_loss(
    tape: &mut Tape,
    logits: Var,
    target: &[f64],
    space: &LabelSpace,
) -> Result<Var> {
    let c = space.len();
    let z = tape.value(logits);
    if z.shape() != (1, c) || target.len() != c {
        return Err(Error::Shape(format!(
            "logits {:?} and {} targets for {c} categories",
            z.shape(),
            target.len()
        )));
    }
    if !z.is_finite() {
        return Err(Error::NonFinite("classification logits".into()));
    }
    let pos_w: Vec<f64> = target.iter().zip(&space.pos_weights).map(|(y, p)| p * y).collect();
    let neg_w: Vec<f64> = target.iter().map(|y| 1.0 - y).collect();
    let pos_w = tape.constant(Matrix::row_vector(pos_w));
    let neg_w = tape.constant(Matrix::row_vector(neg_w));

    let log_p = tape.log_sigmoid(logits);
    let neg_z = tape.neg(logits);
    let log_q = tape.log_sigmoid(neg_z);
    let a = tape.mul(pos_w, log_p)?;
    let b = tape.mul(neg_w, log_q)?;
    let s = tape.add(a, b)?;
    let s = tape.sum(s);
    Ok(tape.scale(s, -1.0 / c as f64))
}

/// Weight on the hierarchy loss in joint training: decays linearly from 2
/// at epoch 0 to 1 at the final epoch.
pub fn e2e_weight(epoch: usize, total_epochs: usize) -> Result<f64> {
    if total_epochs == 0 {
        return Err(Error::InvalidArgument("total_epochs must be at least 1".into()));
    }
    if epoch > total_epochs {
        return Err(Error::InvalidArgument(format!(
            "epoch {epoch} beyond {total_epochs}"
        )));
    }
    Ok(2.0 - epoch as f64 / total_epochs as f64)
}

/// `cls + α(epoch) · hier`.
pub fn e2e_loss(
    tape: &mut Tape,
    cls: Var,
    hier: Var,
    epoch: usize,
    total_epochs: usize,
) -> Result<Var> {
    let alpha = e2e_weight(epoch, total_epochs)?;
    let weighted = tape.scale(hier, alpha);
    tape.add(cls, weighted)
}
