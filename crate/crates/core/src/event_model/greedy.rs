use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{LevelGraph, NodeId};
use crate::numerics::tape::scalar::{log_sigmoid, sigmoid};
use crate::numerics::Matrix;

/// A selected node subset in selection order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PoolSelection {
    pub selected: Vec<NodeId>,
    /// Local indices into the graph the selection was made on.
    pub local: Vec<usize>,
    pub budget: usize,
    /// `σ(T(v, N_v))` for each selected node.
    pub scores: Vec<f64>,
}

/// Greedy maximisation of the subset criterion over a precomputed affinity
/// table: seed with the best single node, then repeatedly add the node that
/// maximises the criterion of the enlarged set. Ties go to the smaller
/// local index.
pub fn greedy_from_table(graph: &LevelGraph, table: &Matrix, k: usize) -> Result<PoolSelection> {
    let n = graph.len();
    if k == 0 || k > n {
        return Err(Error::InvalidArgument(format!(
            "budget {k} for a graph of {n} nodes"
        )));
    }
    let pos: Vec<f64> = (0..n).map(|v| log_sigmoid(table.get(v, v))).collect();
    let neg = |v: usize, u: usize| log_sigmoid(-table.get(v, u));

    let mut chosen = vec![false; n];
    let mut local = Vec::with_capacity(k);
    // cross[u] = Σ_{v ∈ Ω} neg(v,u) + neg(u,v)
    let mut cross = vec![0.0; n];
    let (mut sum_pos, mut sum_neg) = (0.0, 0.0);

    while local.len() < k {
        let size = (local.len() + 1) as f64;
        let mut best: Option<(usize, f64)> = None;
        for u in (0..n).filter(|&u| !chosen[u]) {
            let value = (sum_pos + pos[u]) / size + (sum_neg + cross[u]) / (size * size);
            if best.is_none_or(|(_, b)| value > b) {
                best = Some((u, value));
            }
        }
        let (w, _) = best.expect("budget does not exceed node count");
        chosen[w] = true;
        local.push(w);
        sum_pos += pos[w];
        sum_neg += cross[w];
        for u in 0..n {
            if !chosen[u] {
                cross[u] += neg(w, u) + neg(u, w);
            }
        }
    }

    Ok(PoolSelection {
        selected: local.iter().map(|&v| graph.node_ids[v]).collect(),
        scores: local.iter().map(|&v| sigmoid(table.get(v, v))).collect(),
        local,
        budget: k,
    })
}

/// Budget for pooling `n` nodes at `ratio`: `⌈ratio · n⌉`, at least one.
pub fn pool_budget(n: usize, ratio: f64) -> usize {
    ((ratio * n as f64).ceil() as usize).clamp(1.min(n), n)
}
