//! The learned node/neighbourhood affinity and the contrastive subset
//! criterion built on it.

use rand::Rng;

use super::neighborhood::{Neighborhood, Neighborhoods};
use super::params::EventModelParams;
use crate::error::{Error, Result};
use crate::graph::LevelGraph;
use crate::numerics::tape::scalar::log_sigmoid;
use crate::numerics::{Activation, Matrix, SparseMatrix, Tape, Var};

/// Node embeddings `E(x_v)` and neighbourhood embeddings `P(y_N(v))` for
/// the local nodes `rows`, each `rows.len() x embed`.
pub fn embed(
    tape: &mut Tape,
    vars: &EventModelParams<Var>,
    graph: &LevelGraph,
    hoods: &Neighborhoods,
    rows: &[usize],
) -> Result<(Var, Var)> {
    if let Some(&bad) = rows.iter().find(|&&r| r >= graph.len()) {
        return Err(Error::UnknownNode(bad));
    }
    let x = tape.constant(graph.features.clone());
    let xr = tape.gather_rows(x, rows.to_vec())?;
    let node = vars.encoder.forward(tape, xr)?;
    let mapped = vars.member_map.forward(tape, x)?;
    let hood = aggregate(tape, vars, mapped, hoods.hop_operators(rows)?)?;
    Ok((node, hood))
}

fn aggregate(
    tape: &mut Tape,
    vars: &EventModelParams<Var>,
    mapped: Var,
    ops: Vec<std::rc::Rc<SparseMatrix>>,
) -> Result<Var> {
    let mut pre: Option<Var> = None;
    for (h, op) in ops.into_iter().enumerate() {
        let mean = tape.spmm(op, mapped)?;
        let weight = tape.gather_rows(vars.hop_mix, vec![h])?;
        let term = tape.mul_scalar(mean, weight)?;
        pre = Some(match pre {
            Some(acc) => tape.add(acc, term)?,
            None => term,
        });
    }
    let pre = pre.ok_or_else(|| Error::Shape("no hop operators".into()))?;
    vars.aggregator.forward(tape, pre)
}

/// Affinity scores `S(E_v, P_u)` for row pairs `(v, u)` of the embedding
/// matrices, as a `pairs.len() x 1` column.
pub fn pair_scores(
    tape: &mut Tape,
    vars: &EventModelParams<Var>,
    node: Var,
    hood: Var,
    pairs: &[(usize, usize)],
) -> Result<Var> {
    let left = tape.gather_rows(node, pairs.iter().map(|p| p.0).collect::<Vec<_>>())?;
    let right = tape.gather_rows(hood, pairs.iter().map(|p| p.1).collect::<Vec<_>>())?;
    let joined = tape.concat_cols(&[left, right])?;
    vars.similarity.forward(tape, joined)
}

/// `T_w(x_v, y_N)` for a node feature row and an explicit neighbourhood.
pub fn t_w(
    tape: &mut Tape,
    vars: &EventModelParams<Var>,
    x_v: &[f64],
    nbr: &Neighborhood,
) -> Result<Var> {
    let x = tape.constant(Matrix::row_vector(x_v.to_vec()));
    let node = vars.encoder.forward(tape, x)?;
    let members = tape.constant(nbr.features.clone());
    let mapped = vars.member_map.forward(tape, members)?;
    let hops = tape.value(vars.hop_mix).rows();
    let w = 1.0 / nbr.members.len() as f64;
    let ops = (0..hops)
        .map(|h| {
            let row: Vec<(usize, f64)> = nbr
                .members
                .iter()
                .enumerate()
                .filter(|(_, &(_, d))| d == h)
                .map(|(i, _)| (i, w))
                .collect();
            SparseMatrix::from_rows(nbr.members.len(), &[row]).map(std::rc::Rc::new)
        })
        .collect::<Result<Vec<_>>>()?;
    let hood = aggregate(tape, vars, mapped, ops)?;
    pair_scores(tape, vars, node, hood, &[(0, 0)])
}

/// Ordered negative pairs `(i, j)`, `i != j`, over `0..k`: all of them, or
/// `m` uniform draws when `m` is below the total. Returns the pairs and the
/// weight applied to their summed log terms.
pub fn negative_pairs(
    k: usize,
    samples: Option<usize>,
    rng: &mut impl Rng,
) -> (Vec<(usize, usize)>, f64) {
    let total = k * k.saturating_sub(1);
    let norm = 1.0 / (k * k) as f64;
    match samples {
        Some(m) if m < total => {
            let pairs = (0..m)
                .map(|_| {
                    let i = rng.gen_range(0..k);
                    let mut j = rng.gen_range(0..k - 1);
                    if j >= i {
                        j += 1;
                    }
                    (i, j)
                })
                .collect();
            (pairs, norm * total as f64 / m as f64)
        }
        _ => {
            let mut pairs = Vec::with_capacity(total);
            for i in 0..k {
                for j in 0..k {
                    if i != j {
                        pairs.push((i, j));
                    }
                }
            }
            (pairs, norm)
        }
    }
}

/// The subset criterion
/// `(1/k) Σ_v ln σ(T(v, N_v)) + (1/k²) Σ_{v≠u} ln(1 − σ(T(v, N_u)))`
/// for the local nodes `omega`, optionally with sampled negative pairs.
pub fn criterion(
    tape: &mut Tape,
    vars: &EventModelParams<Var>,
    graph: &LevelGraph,
    hoods: &Neighborhoods,
    omega: &[usize],
    negative_samples: Option<usize>,
    rng: &mut impl Rng,
) -> Result<Var> {
    let k = omega.len();
    if k == 0 {
        return Err(Error::InvalidArgument("criterion of an empty selection".into()));
    }
    let mut seen = std::collections::HashSet::new();
    if let Some(d) = omega.iter().find(|v| !seen.insert(**v)) {
        return Err(Error::InvalidArgument(format!("node {d} selected twice")));
    }
    let (node, hood) = embed(tape, vars, graph, hoods, omega)?;

    let (negatives, neg_weight) = negative_pairs(k, negative_samples, rng);
    let mut pairs: Vec<(usize, usize)> = (0..k).map(|i| (i, i)).collect();
    pairs.extend_from_slice(&negatives);
    let scores = pair_scores(tape, vars, node, hood, &pairs)?;

    let pos = tape.gather_rows(scores, (0..k).collect::<Vec<_>>())?;
    let pos = tape.log_sigmoid(pos);
    let pos = tape.sum(pos);
    let mut total = tape.scale(pos, 1.0 / k as f64);
    if !negatives.is_empty() {
        let neg = tape.gather_rows(scores, (k..pairs.len()).collect::<Vec<_>>())?;
        let neg = tape.neg(neg);
        let neg = tape.log_sigmoid(neg);
        let neg = tape.sum(neg);
        let neg = tape.scale(neg, neg_weight);
        total = tape.add(total, neg)?;
    }
    Ok(total)
}

/// Full `n x n` table `T[v][u] = S(E_v, P_u)` evaluated without a tape for
/// the similarity head; the first head layer is split over the concatenation.
pub fn affinity_table(
    params: &EventModelParams,
    graph: &LevelGraph,
    hoods: &Neighborhoods,
) -> Result<Matrix> {
    let n = graph.len();
    let rows: Vec<usize> = (0..n).collect();
    let mut tape = Tape::new();
    let vars = params.bind(&mut tape);
    let (node, hood) = embed(&mut tape, &vars, graph, hoods, &rows)?;
    let e = tape.value(node);
    let p = tape.value(hood);
    let d = e.cols();

    let head = &params.similarity;
    let first = &head.layers[0];
    let mut w_node = Matrix::zeros(d, first.output_dim());
    let mut w_hood = Matrix::zeros(d, first.output_dim());
    for i in 0..d {
        w_node.row_mut(i).copy_from_slice(first.weight.row(i));
        w_hood.row_mut(i).copy_from_slice(first.weight.row(d + i));
    }
    let a = e.matmul(&w_node)?;
    let b = p.matmul(&w_hood)?;
    let bias = first.bias.row(0);
    let rest = &head.layers[1..];

    let mut table = Matrix::zeros(n, n);
    let mut h = vec![0.0; first.output_dim()];
    for v in 0..n {
        for u in 0..n {
            for (k, hk) in h.iter_mut().enumerate() {
                *hk = a.get(v, k) + b.get(u, k) + bias[k];
            }
            let mut cur = h.clone();
            for layer in rest {
                activate(&mut cur, head.activation);
                let mut next = layer.bias.row(0).to_vec();
                for (i, &ci) in cur.iter().enumerate() {
                    for (o, &w) in next.iter_mut().zip(layer.weight.row(i)) {
                        *o += ci * w;
                    }
                }
                cur = next;
            }
            table.set(v, u, cur[0]);
        }
    }
    Ok(table)
}

fn activate(v: &mut [f64], act: Activation) {
    for x in v {
        *x = match act {
            Activation::Relu => x.max(0.0),
            Activation::Tanh => x.tanh(),
        };
    }
}

/// Criterion value of a subset straight from an affinity table, with every
/// ordered negative pair.
pub fn criterion_from_table(table: &Matrix, omega: &[usize]) -> f64 {
    let k = omega.len() as f64;
    let pos: f64 = omega.iter().map(|&v| log_sigmoid(table.get(v, v))).sum();
    let mut neg = 0.0;
    for &v in omega {
        for &u in omega {
            if v != u {
                neg += log_sigmoid(-table.get(v, u));
            }
        }
    }
    pos / k + neg / (k * k)
}
