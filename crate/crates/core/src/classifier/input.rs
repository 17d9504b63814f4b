use std::rc::Rc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{EdgeKind, TemporalKnowledgeGraph};
use crate::hierarchy::node_annotation;
use crate::numerics::{Matrix, SparseMatrix, Tape, Var};

/// Message channels of the relational network. Each edge kind is split by
/// the direction the message travels.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Relation {
    Spatial,
    TemporalFromPast,
    TemporalFromFuture,
    HierarchyFromAbove,
    HierarchyFromBelow,
    SuperFromEarlier,
    SuperFromLater,
    SuperConcurrent,
}

impl Relation {
    pub const ALL: [Relation; 8] = [
        Relation::Spatial,
        Relation::TemporalFromPast,
        Relation::TemporalFromFuture,
        Relation::HierarchyFromAbove,
        Relation::HierarchyFromBelow,
        Relation::SuperFromEarlier,
        Relation::SuperFromLater,
        Relation::SuperConcurrent,
    ];

    pub const COUNT: usize = Self::ALL.len();

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn is_temporal(self) -> bool {
        matches!(self, Relation::TemporalFromPast | Relation::TemporalFromFuture)
    }

    pub fn is_hierarchical(self) -> bool {
        !matches!(
            self,
            Relation::Spatial | Relation::TemporalFromPast | Relation::TemporalFromFuture
        )
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Ablation {
    #[default]
    None,
    /// Level 0 only, no attention scores.
    NoSupernodes,
    /// Temporal messages zeroed.
    NoTemporal,
}

impl std::str::FromStr for Ablation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(Self::None),
            "no-supernodes" => Ok(Self::NoSupernodes),
            "no-temporal" => Ok(Self::NoTemporal),
            other => Err(Error::Config(format!("unknown ablation {other:?}"))),
        }
    }
}

/// A TKG prepared for the relational network: raw features, annotation
/// columns, one mean-aggregation operator per relation and the node rows
/// of every level. Rows are TKG node ids.
#[derive(Clone, Debug)]
pub struct GraphInput {
    pub features: Matrix,
    /// `[attention, one-hot(level)]` per node.
    pub annotations: Matrix,
    pub relations: Vec<Rc<SparseMatrix>>,
    /// Node rows per level, `max_levels + 1` entries (possibly empty).
    pub level_rows: Vec<Vec<usize>>,
}

impl GraphInput {
    pub fn from_tkg(
        tkg: &TemporalKnowledgeGraph,
        max_levels: usize,
        ablation: Ablation,
    ) -> Result<Self> {
        let flat;
        let tkg = if ablation == Ablation::NoSupernodes {
            flat = tkg.truncate_levels(1);
            &flat
        } else {
            tkg
        };
        let n = tkg.nodes().len();
        if n == 0 {
            return Err(Error::InvalidArgument("classifier input has no nodes".into()));
        }
        let dim = tkg.feature_dim().unwrap_or(0);
        let mut features = Matrix::zeros(n, dim);
        let mut annotations = Matrix::zeros(n, max_levels + 2);
        for node in tkg.nodes() {
            if node.level > max_levels {
                return Err(Error::InvalidArgument(format!(
                    "node {} sits on level {} above the configured {max_levels}",
                    node.node_id, node.level
                )));
            }
            features.row_mut(node.node_id).copy_from_slice(&node.features);
            let mut a = node_annotation(node, max_levels);
            if ablation == Ablation::NoSupernodes {
                a[0] = 0.0;
            }
            annotations.row_mut(node.node_id).copy_from_slice(&a);
        }

        let mut lists = vec![vec![Vec::new(); n]; Relation::COUNT];
        let mut add = |rel: Relation, to: usize, from: usize| lists[rel.index()][to].push(from);
        for e in tkg.edges() {
            match e.kind {
                EdgeKind::Spatial => {
                    add(Relation::Spatial, e.dst, e.src);
                    add(Relation::Spatial, e.src, e.dst);
                }
                EdgeKind::Temporal => {
                    add(Relation::TemporalFromPast, e.dst, e.src);
                    add(Relation::TemporalFromFuture, e.src, e.dst);
                }
                EdgeKind::Hierarchy => {
                    add(Relation::HierarchyFromAbove, e.dst, e.src);
                    add(Relation::HierarchyFromBelow, e.src, e.dst);
                }
                EdgeKind::SuperAdjacency => {
                    let ts = |id: usize| tkg.nodes()[id].timestamp;
                    for (to, from) in [(e.src, e.dst), (e.dst, e.src)] {
                        let rel = match ts(from).partial_cmp(&ts(to)) {
                            Some(std::cmp::Ordering::Less) => Relation::SuperFromEarlier,
                            Some(std::cmp::Ordering::Greater) => Relation::SuperFromLater,
                            _ => Relation::SuperConcurrent,
                        };
                        add(rel, to, from);
                    }
                }
            }
        }
        if ablation == Ablation::NoTemporal {
            for rel in Relation::ALL.iter().filter(|r| r.is_temporal()) {
                lists[rel.index()].iter_mut().for_each(Vec::clear);
            }
        }
        for rel_lists in &mut lists {
            for l in rel_lists.iter_mut() {
                l.sort_unstable();
            }
        }
        let relations = lists
            .iter()
            .map(|l| SparseMatrix::mean_aggregator(n, l).map(Rc::new))
            .collect::<Result<Vec<_>>>()?;

        let mut level_rows = vec![Vec::new(); max_levels + 1];
        for node in tkg.nodes() {
            level_rows[node.level].push(node.node_id);
        }
        Ok(Self {
            features,
            annotations,
            relations,
            level_rows,
        })
    }

    pub fn len(&self) -> usize {
        self.features.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.features.rows() == 0
    }

    pub fn input_dim(&self) -> usize {
        self.features.cols() + self.annotations.cols()
    }

    /// Node input matrix `[features, attention, one-hot]` as a constant, or
    /// with the attention column taken from `attention` (`n x 1`) so that
    /// gradients reach whatever produced it.
    pub fn node_inputs(&self, tape: &mut Tape, attention: Option<Var>) -> Result<Var> {
        let n = self.len();
        match attention {
            None => {
                let mut m = Matrix::zeros(n, self.input_dim());
                let f = self.features.cols();
                for r in 0..n {
                    m.row_mut(r)[..f].copy_from_slice(self.features.row(r));
                    m.row_mut(r)[f..].copy_from_slice(self.annotations.row(r));
                }
                Ok(tape.constant(m))
            }
            Some(att) => {
                if tape.value(att).shape() != (n, 1) {
                    return Err(Error::Shape(format!(
                        "attention column {:?} for {n} nodes",
                        tape.value(att).shape()
                    )));
                }
                let levels = self.annotations.cols() - 1;
                let mut onehot = Matrix::zeros(n, levels);
                for r in 0..n {
                    onehot.row_mut(r).copy_from_slice(&self.annotations.row(r)[1..]);
                }
                let x = tape.constant(self.features.clone());
                let h = tape.constant(onehot);
                tape.concat_cols(&[x, att, h])
            }
        }
    }
}
