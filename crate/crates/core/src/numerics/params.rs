//! Named parameter traversal shared by optimisers, gradient checks and
//! checkpoints.

use super::tensor::Matrix;
use crate::error::{Error, Result};

/// A tree of named parameter matrices with a fixed traversal order.
pub trait Parameters {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, &'a Matrix));
    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Matrix));
}

/// Flattens a parameter tree into `(name, matrix)` pairs in traversal order.
pub fn named(params: &impl Parameters, prefix: &str) -> Vec<(String, Matrix)> {
    let mut out = Vec::new();
    params.visit(prefix, &mut |name, m| out.push((name, m.clone())));
    out
}

pub fn param_count(params: &impl Parameters) -> usize {
    let mut n = 0;
    params.visit("", &mut |_, m| n += m.len());
    n
}

/// Overwrites every parameter from `source`, matching by name and shape.
pub fn load_named(
    params: &mut impl Parameters,
    prefix: &str,
    source: &[(String, Matrix)],
) -> Result<()> {
    let mut err = None;
    params.visit_mut(prefix, &mut |name, m| {
        if err.is_some() {
            return;
        }
        match source.iter().find(|(n, _)| *n == name) {
            Some((_, src)) if src.shape() == m.shape() => *m = src.clone(),
            Some((_, src)) => {
                err = Some(Error::Checkpoint(format!(
                    "{name}: stored shape {:?}, expected {:?}",
                    src.shape(),
                    m.shape()
                )))
            }
            None => err = Some(Error::Checkpoint(format!("missing parameter {name}"))),
        }
    });
    err.map_or(Ok(()), Err)
}

/// Flat copy of all values in traversal order.
pub fn flatten_values(params: &impl Parameters) -> Vec<f64> {
    let mut out = Vec::new();
    params.visit("", &mut |_, m| out.extend_from_slice(m.data()));
    out
}

/// Writes a flat vector back in traversal order.
pub fn assign_values(params: &mut impl Parameters, values: &[f64]) -> Result<()> {
    let mut off = 0;
    let mut short = false;
    params.visit_mut("", &mut |_, m| {
        let n = m.len();
        if off + n > values.len() {
            short = true;
            return;
        }
        m.data_mut().copy_from_slice(&values[off..off + n]);
        off += n;
    });
    if short || off != values.len() {
        return Err(Error::Shape(format!(
            "{} values for a tree of a different size",
            values.len()
        )));
    }
    Ok(())
}
