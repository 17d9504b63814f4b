//! Multi-scale pyramid: repeated pooling of one graph with per-scale
//! embeddings exchanged between adjacent scales.

use rand::Rng;

use super::greedy::{pool_budget, PoolSelection};
use super::neighborhood::Neighborhoods;
use super::params::EventModelParams;
use super::EventModel;
use crate::error::{Error, Result};
use crate::graph::LevelGraph;
use crate::hierarchy::{contract, Aggregation};
use crate::numerics::{Tape, Var};

/// Everything one pyramid pass records on the tape.
#[derive(Debug)]
pub struct PyramidOutput {
    /// Graph of each scale. Scale `s` is pooled from scale `s - 1` (the
    /// input graph for `s = 0`).
    pub graphs: Vec<LevelGraph>,
    /// Selection that produced each scale, in local indices of the graph
    /// it was made on.
    pub selections: Vec<PoolSelection>,
    /// Per-scale node embeddings after cross-scale exchange.
    pub scale_features: Vec<Var>,
    /// Concatenated per-scale mean embeddings, `1 x (scales * embed)`.
    pub readout: Var,
    /// Per-scale `−C(Ω_s)`.
    pub losses: Vec<Var>,
    pub loss: Var,
}

/// Runs the pyramid over `graph` with the model's configured scales.
///
/// A ratio of `1.0` keeps every node (reordered by selection order so rows
/// line up with the selection); smaller ratios contract onto the greedy
/// selection with mean aggregation.
pub fn pyramid_forward(
    tape: &mut Tape,
    model: &EventModel,
    vars: &EventModelParams<Var>,
    graph: &LevelGraph,
    rng: &mut impl Rng,
) -> Result<PyramidOutput> {
    let scales = &model.config.scales;
    if vars.cross_down.len() + 1 != scales.len() || vars.cross_up.len() + 1 != scales.len() {
        return Err(Error::Shape(format!(
            "{} scales need {} cross projections each way",
            scales.len(),
            scales.len() - 1
        )));
    }
    if graph.is_empty() {
        return Err(Error::InvalidArgument("pyramid over an empty graph".into()));
    }

    let mut graphs = Vec::with_capacity(scales.len());
    let mut selections = Vec::with_capacity(scales.len());
    let mut losses = Vec::with_capacity(scales.len());
    let mut current = graph.clone();
    for &ratio in scales {
        let hoods = Neighborhoods::compute(&current, model.config.radius);
        let k = pool_budget(current.len(), ratio);
        let (loss, selection) = model.hierarchy_loss(
            tape,
            vars,
            &current,
            &hoods,
            k,
            model.config.negative_samples,
            rng,
        )?;
        let next = if k == current.len() {
            current.induced(&selection.local)?
        } else {
            contract(&current, &hoods, &selection.local, Aggregation::Mean)?.coarse_graph()?
        };
        losses.push(loss);
        selections.push(selection);
        graphs.push(next.clone());
        current = next;
    }

    let mut z = Vec::with_capacity(graphs.len());
    for g in &graphs {
        let x = tape.constant(g.features.clone());
        z.push(vars.encoder.forward(tape, x)?);
    }
    for s in 1..z.len() {
        let picked = tape.gather_rows(z[s - 1], selections[s].local.clone())?;
        let moved = tape.matmul(picked, vars.cross_down[s - 1])?;
        z[s] = tape.add(z[s], moved)?;
    }
    for s in (1..z.len()).rev() {
        let n = graphs[s - 1].len();
        let spread = tape.scatter_rows(z[s], selections[s].local.clone(), n)?;
        let moved = tape.matmul(spread, vars.cross_up[s - 1])?;
        z[s - 1] = tape.add(z[s - 1], moved)?;
    }

    let means = z
        .iter()
        .map(|&zs| tape.mean_rows(zs))
        .collect::<Result<Vec<_>>>()?;
    let readout = tape.concat_cols(&means)?;
    let mut loss = losses[0];
    for &l in &losses[1..] {
        loss = tape.add(loss, l)?;
    }
    Ok(PyramidOutput {
        graphs,
        selections,
        scale_features: z,
        readout,
        losses,
        loss,
    })
}
