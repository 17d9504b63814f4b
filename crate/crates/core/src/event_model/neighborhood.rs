use std::rc::Rc;

use crate::error::{Error, Result};
use crate::graph::{LevelGraph, NodeId};
use crate::numerics::{Matrix, SparseMatrix};

/// Closed ball of radius `R` around a center node.
#[derive(Clone, Debug, PartialEq)]
pub struct Neighborhood {
    /// Local index of the center.
    pub center: usize,
    /// `(local index, hop distance)`, ordered by hop then index.
    pub members: Vec<(usize, usize)>,
    /// Member feature rows in `members` order.
    pub features: Matrix,
}

impl Neighborhood {
    pub fn member_ids(&self, graph: &LevelGraph) -> Vec<NodeId> {
        self.members.iter().map(|&(m, _)| graph.node_ids[m]).collect()
    }
}

pub fn neighborhood(graph: &LevelGraph, v: usize, radius: usize) -> Result<Neighborhood> {
    if v >= graph.len() {
        return Err(Error::UnknownNode(v));
    }
    let members = graph.ball(v, radius);
    let mut features = Matrix::zeros(members.len(), graph.feature_dim());
    for (row, &(m, _)) in members.iter().enumerate() {
        features.row_mut(row).copy_from_slice(graph.features.row(m));
    }
    Ok(Neighborhood {
        center: v,
        members,
        features,
    })
}

/// Neighbourhoods of every node of one graph plus the per-hop averaging
/// operators used by the aggregator.
#[derive(Clone, Debug)]
pub struct Neighborhoods {
    pub radius: usize,
    pub lists: Vec<Vec<(usize, usize)>>,
}

impl Neighborhoods {
    pub fn compute(graph: &LevelGraph, radius: usize) -> Self {
        let lists = (0..graph.len()).map(|v| graph.ball(v, radius)).collect();
        Self { radius, lists }
    }

    pub fn len(&self) -> usize {
        self.lists.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lists.is_empty()
    }

    pub fn members(&self, v: usize) -> impl Iterator<Item = usize> + '_ {
        self.lists[v].iter().map(|&(m, _)| m)
    }

    /// For each hop `h`, a `rows.len() x n` operator whose row `i` holds
    /// `1/|N(rows[i])|` at every member of `N(rows[i])` at distance `h`.
    pub fn hop_operators(&self, rows: &[usize]) -> Result<Vec<Rc<SparseMatrix>>> {
        let n = self.lists.len();
        (0..=self.radius)
            .map(|h| {
                let entries: Vec<Vec<(usize, f64)>> = rows
                    .iter()
                    .map(|&v| {
                        let list = &self.lists[v];
                        let w = 1.0 / list.len() as f64;
                        list.iter()
                            .filter(|&&(_, d)| d == h)
                            .map(|&(m, _)| (m, w))
                            .collect()
                    })
                    .collect();
                SparseMatrix::from_rows(n, &entries).map(Rc::new)
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn star_neighborhoods() {
        let g = LevelGraph::new(Matrix::zeros(4, 2), &[(0, 1), (0, 2), (0, 3)]).unwrap();
        let n = neighborhood(&g, 1, 1).unwrap();
        assert_eq!(n.members, vec![(1, 0), (0, 1)]);
        assert_eq!(n.features.shape(), (2, 2));
        let hood = Neighborhoods::compute(&g, 2);
        assert_eq!(hood.members(1).collect::<Vec<_>>(), vec![1, 0, 2, 3]);
        assert!(neighborhood(&g, 9, 1).is_err());
    }

    #[test]
    fn hop_operators_average_over_whole_ball() {
        let g = LevelGraph::new(Matrix::zeros(3, 1), &[(0, 1), (1, 2)]).unwrap();
        let hood = Neighborhoods::compute(&g, 1);
        let ops = hood.hop_operators(&[1]).unwrap();
        assert_eq!(ops[0].row_entries(0).collect::<Vec<_>>(), vec![(1, 1.0 / 3.0)]);
        assert_eq!(
            ops[1].row_entries(0).collect::<Vec<_>>(),
            vec![(0, 1.0 / 3.0), (2, 1.0 / 3.0)]
        );
    }
}
