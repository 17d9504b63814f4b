//! Reverse-mode automatic differentiation over rank-2 `f64` values.
//!
//! Every operation appends a node to the [`Tape`]; node indices are therefore
//! a topological order and [`Tape::backward`] is a single reverse sweep.

use std::rc::Rc;

use super::tensor::Matrix;
use crate::error::{Error, Result};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Constant sparse matrix in compressed-row form, used for neighbourhood
/// aggregation.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseMatrix {
    rows: usize,
    cols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl SparseMatrix {
    /// Builds from per-row `(column, value)` lists.
    pub fn from_rows(cols: usize, rows: &[Vec<(usize, f64)>]) -> Result<Self> {
        let mut row_ptr = Vec::with_capacity(rows.len() + 1);
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        row_ptr.push(0);
        for r in rows {
            for &(c, v) in r {
                if c >= cols {
                    return Err(Error::Shape(format!("sparse column {c} out of {cols}")));
                }
                col_idx.push(c);
                values.push(v);
            }
            row_ptr.push(col_idx.len());
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            row_ptr,
            col_idx,
            values,
        })
    }

    /// Row-normalised adjacency: row `i` averages the rows listed in `lists[i]`.
    /// Empty lists produce zero rows.
    pub fn mean_aggregator(cols: usize, lists: &[Vec<usize>]) -> Result<Self> {
        let rows: Vec<Vec<(usize, f64)>> = lists
            .iter()
            .map(|l| {
                let w = if l.is_empty() { 0.0 } else { 1.0 / l.len() as f64 };
                l.iter().map(|&c| (c, w)).collect()
            })
            .collect();
        Self::from_rows(cols, &rows)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row_entries(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.row_ptr[r]..self.row_ptr[r + 1];
        self.col_idx[span.clone()]
            .iter()
            .copied()
            .zip(self.values[span].iter().copied())
    }

    pub fn matmul(&self, dense: &Matrix) -> Matrix {
        let n = dense.cols();
        let mut out = Matrix::zeros(self.rows, n);
        for r in 0..self.rows {
            for (c, w) in self.row_entries(r) {
                let src = dense.row(c);
                for (o, &s) in out.row_mut(r).iter_mut().zip(src) {
                    *o += w * s;
                }
            }
        }
        out
    }

    /// `selfᵀ · dense`.
    pub fn t_matmul(&self, dense: &Matrix) -> Matrix {
        let n = dense.cols();
        let mut out = Matrix::zeros(self.cols, n);
        for r in 0..self.rows {
            let src = dense.row(r).to_vec();
            for (c, w) in self.row_entries(r) {
                for (o, &s) in out.row_mut(c).iter_mut().zip(&src) {
                    *o += w * s;
                }
            }
        }
        out
    }
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    Constant,
    MatMul(Var, Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    MulScalar(Var, Var),
    RowScale(Var, Var),
    Sigmoid(Var),
    LogSigmoid(Var),
    Log(Var),
    Relu(Var),
    Tanh(Var),
    MeanRows(Var),
    Sum(Var),
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    GatherRows(Var, Rc<[usize]>),
    ScatterRows(Var, Rc<[usize]>),
    SpMM(Rc<SparseMatrix>, Var),
}

#[derive(Debug)]
struct Node {
    value: Matrix,
    op: Op,
    /// Whether any trainable leaf feeds this value.
    live: bool,
}

/// A single-threaded recording of a differentiable computation.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients of one scalar with respect to every recorded value.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Matrix>>,
    shapes: Vec<(usize, usize)>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Matrix> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    /// Gradient for `v`, or zeros of the right shape if no path reached it.
    pub fn wrt(&self, v: Var) -> Matrix {
        match self.get(v) {
            Some(g) => g.clone(),
            None => {
                let (r, c) = self.shapes[v.0];
                Matrix::zeros(r, c)
            }
        }
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn log_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        -(-x).exp().ln_1p()
    } else {
        x - x.exp().ln_1p()
    }
}

pub mod scalar {
    //! Plain scalar versions of the tape nonlinearities.
    pub fn sigmoid(x: f64) -> f64 {
        super::sigmoid(x)
    }

    /// `ln σ(x)`, stable for large `|x|`.
    pub fn log_sigmoid(x: f64) -> f64 {
        super::log_sigmoid(x)
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[v.0].value
    }

    fn push(&mut self, value: Matrix, op: Op) -> Var {
        let live = match &op {
            Op::Leaf => true,
            Op::Constant => false,
            Op::MatMul(a, b)
            | Op::Add(a, b)
            | Op::AddRow(a, b)
            | Op::Sub(a, b)
            | Op::Mul(a, b)
            | Op::MulScalar(a, b)
            | Op::RowScale(a, b) => self.nodes[a.0].live || self.nodes[b.0].live,
            Op::Scale(a, _)
            | Op::Sigmoid(a)
            | Op::LogSigmoid(a)
            | Op::Log(a)
            | Op::Relu(a)
            | Op::Tanh(a)
            | Op::MeanRows(a)
            | Op::Sum(a)
            | Op::GatherRows(a, _)
            | Op::ScatterRows(a, _)
            | Op::SpMM(_, a) => self.nodes[a.0].live,
            Op::ConcatCols(parts) | Op::ConcatRows(parts) => {
                parts.iter().any(|p| self.nodes[p.0].live)
            }
        };
        self.nodes.push(Node { value, op, live });
        Var(self.nodes.len() - 1)
    }

    fn shape(&self, v: Var) -> (usize, usize) {
        self.nodes[v.0].value.shape()
    }

    /// Records an input value (parameter or constant).
    pub fn leaf(&mut self, value: Matrix) -> Var {
        self.push(value, Op::Leaf)
    }

    /// Records an input that never needs a gradient. The reverse sweep
    /// skips every branch fed only by constants.
    pub fn constant(&mut self, value: Matrix) -> Var {
        self.push(value, Op::Constant)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).matmul(self.value(b))?;
        Ok(self.push(value, Op::MatMul(a, b)))
    }

    fn same_shape(&self, a: Var, b: Var, what: &str) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::Shape(format!(
                "{what}: {:?} vs {:?}",
                self.shape(a),
                self.shape(b)
            )));
        }
        Ok(())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "add")?;
        let value = self.value(a).zip_map(self.value(b), |x, y| x + y);
        Ok(self.push(value, Op::Add(a, b)))
    }

    /// Adds the `1 x c` row `row` to every row of `a`.
    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var> {
        let (r, c) = self.shape(a);
        if self.shape(row) != (1, c) {
            return Err(Error::Shape(format!(
                "add_row: {r}x{c} with {:?}",
                self.shape(row)
            )));
        }
        let mut value = self.value(a).clone();
        let b = self.value(row).data().to_vec();
        for i in 0..r {
            for (o, &bv) in value.row_mut(i).iter_mut().zip(&b) {
                *o += bv;
            }
        }
        Ok(self.push(value, Op::AddRow(a, row)))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "sub")?;
        let value = self.value(a).zip_map(self.value(b), |x, y| x - y);
        Ok(self.push(value, Op::Sub(a, b)))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "mul")?;
        let value = self.value(a).zip_map(self.value(b), |x, y| x * y);
        Ok(self.push(value, Op::Mul(a, b)))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let value = self.value(a).map(|x| x * s);
        self.push(value, Op::Scale(a, s))
    }

    pub fn neg(&mut self, a: Var) -> Var {
        self.scale(a, -1.0)
    }

    /// Multiplies every entry of `a` by the `1 x 1` value `s`.
    pub fn mul_scalar(&mut self, a: Var, s: Var) -> Result<Var> {
        if self.shape(s) != (1, 1) {
            return Err(Error::Shape(format!("mul_scalar by {:?}", self.shape(s))));
        }
        let k = self.value(s).item();
        let value = self.value(a).map(|x| x * k);
        Ok(self.push(value, Op::MulScalar(a, s)))
    }

    /// Scales row `i` of `a` by entry `i` of the `r x 1` column `coeff`.
    pub fn row_scale(&mut self, a: Var, coeff: Var) -> Result<Var> {
        let (r, _) = self.shape(a);
        if self.shape(coeff) != (r, 1) {
            return Err(Error::Shape(format!(
                "row_scale: {r} rows by {:?}",
                self.shape(coeff)
            )));
        }
        let mut value = self.value(a).clone();
        for i in 0..r {
            let k = self.value(coeff).get(i, 0);
            for o in value.row_mut(i) {
                *o *= k;
            }
        }
        Ok(self.push(value, Op::RowScale(a, coeff)))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let value = self.value(a).map(sigmoid);
        self.push(value, Op::Sigmoid(a))
    }

    /// `ln σ(a)`; use instead of `log(sigmoid(a))` for large magnitudes.
    pub fn log_sigmoid(&mut self, a: Var) -> Var {
        let value = self.value(a).map(log_sigmoid);
        self.push(value, Op::LogSigmoid(a))
    }

    pub fn log(&mut self, a: Var) -> Result<Var> {
        let v = self.value(a);
        if v.data().iter().any(|&x| x <= 0.0) {
            return Err(Error::NonFinite("log of non-positive value".into()));
        }
        let value = v.map(f64::ln);
        Ok(self.push(value, Op::Log(a)))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let value = self.value(a).map(|x| x.max(0.0));
        self.push(value, Op::Relu(a))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let value = self.value(a).map(f64::tanh);
        self.push(value, Op::Tanh(a))
    }

    /// Column means, producing a `1 x c` row.
    pub fn mean_rows(&mut self, a: Var) -> Result<Var> {
        let m = self.value(a);
        if m.rows() == 0 {
            return Err(Error::Shape("mean over zero rows".into()));
        }
        let mut out = vec![0.0; m.cols()];
        for i in 0..m.rows() {
            for (o, &x) in out.iter_mut().zip(m.row(i)) {
                *o += x;
            }
        }
        let n = m.rows() as f64;
        out.iter_mut().for_each(|o| *o /= n);
        Ok(self.push(Matrix::row_vector(out), Op::MeanRows(a)))
    }

    /// Sum of all entries as a `1 x 1` value.
    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).sum();
        self.push(Matrix::scalar(s), Op::Sum(a))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let rows = parts
            .first()
            .map(|&p| self.shape(p).0)
            .ok_or_else(|| Error::Shape("concat of nothing".into()))?;
        if parts.iter().any(|&p| self.shape(p).0 != rows) {
            return Err(Error::Shape("concat_cols: row counts differ".into()));
        }
        let cols: usize = parts.iter().map(|&p| self.shape(p).1).sum();
        let mut value = Matrix::zeros(rows, cols);
        for r in 0..rows {
            let mut off = 0;
            for &p in parts {
                let src = self.value(p).row(r);
                value.row_mut(r)[off..off + src.len()].copy_from_slice(src);
                off += src.len();
            }
        }
        Ok(self.push(value, Op::ConcatCols(parts.to_vec())))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let cols = parts
            .first()
            .map(|&p| self.shape(p).1)
            .ok_or_else(|| Error::Shape("concat of nothing".into()))?;
        if parts.iter().any(|&p| self.shape(p).1 != cols) {
            return Err(Error::Shape("concat_rows: column counts differ".into()));
        }
        let mut data = Vec::new();
        for &p in parts {
            data.extend_from_slice(self.value(p).data());
        }
        let rows = parts.iter().map(|&p| self.shape(p).0).sum();
        let value = Matrix::from_vec(rows, cols, data)?;
        Ok(self.push(value, Op::ConcatRows(parts.to_vec())))
    }

    /// Selects rows of `a` in the order given (indices may repeat).
    pub fn gather_rows(&mut self, a: Var, idx: impl Into<Rc<[usize]>>) -> Result<Var> {
        let idx: Rc<[usize]> = idx.into();
        let m = self.value(a);
        if let Some(&bad) = idx.iter().find(|&&i| i >= m.rows()) {
            return Err(Error::Shape(format!("gather row {bad} of {}", m.rows())));
        }
        let mut value = Matrix::zeros(idx.len(), m.cols());
        for (o, &i) in idx.iter().enumerate() {
            value.row_mut(o).copy_from_slice(m.row(i));
        }
        Ok(self.push(value, Op::GatherRows(a, idx)))
    }

    /// Places row `i` of `a` at row `idx[i]` of an `n_rows` matrix of zeros.
    /// Indices must be distinct.
    pub fn scatter_rows(
        &mut self,
        a: Var,
        idx: impl Into<Rc<[usize]>>,
        n_rows: usize,
    ) -> Result<Var> {
        let idx: Rc<[usize]> = idx.into();
        let m = self.value(a);
        if idx.len() != m.rows() {
            return Err(Error::Shape(format!(
                "scatter {} rows with {} indices",
                m.rows(),
                idx.len()
            )));
        }
        let mut value = Matrix::zeros(n_rows, m.cols());
        let mut seen = vec![false; n_rows];
        for (i, &t) in idx.iter().enumerate() {
            if t >= n_rows || seen[t] {
                return Err(Error::Shape(format!("bad scatter target {t}")));
            }
            seen[t] = true;
            value.row_mut(t).copy_from_slice(m.row(i));
        }
        Ok(self.push(value, Op::ScatterRows(a, idx)))
    }

    /// Constant sparse matrix times `a`.
    pub fn spmm(&mut self, s: Rc<SparseMatrix>, a: Var) -> Result<Var> {
        if s.cols() != self.shape(a).0 {
            return Err(Error::Shape(format!(
                "spmm {}x{} by {:?}",
                s.rows(),
                s.cols(),
                self.shape(a)
            )));
        }
        let value = s.matmul(self.value(a));
        Ok(self.push(value, Op::SpMM(s, a)))
    }

    /// Reverse sweep from the `1 x 1` value `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        if self.shape(loss) != (1, 1) {
            return Err(Error::Shape(format!(
                "backward from non-scalar {:?}",
                self.shape(loss)
            )));
        }
        let n = loss.0 + 1;
        let mut grads: Vec<Option<Matrix>> = vec![None; n];
        let live: Vec<bool> = self.nodes[..n].iter().map(|node| node.live).collect();
        grads[loss.0] = Some(Matrix::scalar(1.0));

        for i in (0..n).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            if !node.live {
                grads[i] = Some(g);
                continue;
            }
            match &node.op {
                Op::Leaf | Op::Constant => {}
                Op::MatMul(a, b) => {
                    if live[a.0] {
                        accumulate(&mut grads, &live, *a, g.matmul_t(self.value(*b)));
                    }
                    if live[b.0] {
                        accumulate(&mut grads, &live, *b, self.value(*a).t_matmul(&g));
                    }
                }
                Op::Add(a, b) => {
                    accumulate(&mut grads, &live, *a, g.clone());
                    accumulate(&mut grads, &live, *b, g.clone());
                }
                Op::AddRow(a, row) => {
                    let mut gr = vec![0.0; g.cols()];
                    for r in 0..g.rows() {
                        for (o, &x) in gr.iter_mut().zip(g.row(r)) {
                            *o += x;
                        }
                    }
                    accumulate(&mut grads, &live, *a, g.clone());
                    accumulate(&mut grads, &live, *row, Matrix::row_vector(gr));
                }
                Op::Sub(a, b) => {
                    accumulate(&mut grads, &live, *a, g.clone());
                    accumulate(&mut grads, &live, *b, g.map(|x| -x));
                }
                Op::Mul(a, b) => {
                    let ga = g.zip_map(self.value(*b), |x, y| x * y);
                    let gb = g.zip_map(self.value(*a), |x, y| x * y);
                    accumulate(&mut grads, &live, *a, ga);
                    accumulate(&mut grads, &live, *b, gb);
                }
                Op::Scale(a, s) => {
                    let s = *s;
                    accumulate(&mut grads, &live, *a, g.map(|x| x * s));
                }
                Op::MulScalar(a, s) => {
                    let k = self.value(*s).item();
                    let dot: f64 = g
                        .data()
                        .iter()
                        .zip(self.value(*a).data())
                        .map(|(x, y)| x * y)
                        .sum();
                    accumulate(&mut grads, &live, *a, g.map(|x| x * k));
                    accumulate(&mut grads, &live, *s, Matrix::scalar(dot));
                }
                Op::RowScale(a, coeff) => {
                    let av = self.value(*a);
                    let cv = self.value(*coeff);
                    let mut ga = g.clone();
                    let mut gc = Matrix::zeros(cv.rows(), 1);
                    for r in 0..g.rows() {
                        let k = cv.get(r, 0);
                        let mut dot = 0.0;
                        for (o, &x) in ga.row_mut(r).iter_mut().zip(av.row(r)) {
                            dot += *o * x;
                            *o *= k;
                        }
                        gc.set(r, 0, dot);
                    }
                    accumulate(&mut grads, &live, *a, ga);
                    accumulate(&mut grads, &live, *coeff, gc);
                }
                Op::Sigmoid(a) => {
                    let ga = g.zip_map(&node.value, |x, s| x * s * (1.0 - s));
                    accumulate(&mut grads, &live, *a, ga);
                }
                Op::LogSigmoid(a) => {
                    let ga = g.zip_map(self.value(*a), |x, z| x * sigmoid(-z));
                    accumulate(&mut grads, &live, *a, ga);
                }
                Op::Log(a) => {
                    let ga = g.zip_map(self.value(*a), |x, z| x / z);
                    accumulate(&mut grads, &live, *a, ga);
                }
                Op::Relu(a) => {
                    let ga = g.zip_map(self.value(*a), |x, z| if z > 0.0 { x } else { 0.0 });
                    accumulate(&mut grads, &live, *a, ga);
                }
                Op::Tanh(a) => {
                    let ga = g.zip_map(&node.value, |x, t| x * (1.0 - t * t));
                    accumulate(&mut grads, &live, *a, ga);
                }
                Op::MeanRows(a) => {
                    let (r, c) = self.shape(*a);
                    let mut ga = Matrix::zeros(r, c);
                    let inv = 1.0 / r as f64;
                    for i in 0..r {
                        for (o, &x) in ga.row_mut(i).iter_mut().zip(g.data()) {
                            *o = x * inv;
                        }
                    }
                    accumulate(&mut grads, &live, *a, ga);
                }
                Op::Sum(a) => {
                    let (r, c) = self.shape(*a);
                    accumulate(&mut grads, &live, *a, Matrix::filled(r, c, g.item()));
                }
                Op::ConcatCols(parts) => {
                    let mut off = 0;
                    for &p in parts {
                        let (r, c) = self.shape(p);
                        let mut gp = Matrix::zeros(r, c);
                        for i in 0..r {
                            gp.row_mut(i).copy_from_slice(&g.row(i)[off..off + c]);
                        }
                        off += c;
                        accumulate(&mut grads, &live, p, gp);
                    }
                }
                Op::ConcatRows(parts) => {
                    let mut off = 0;
                    for &p in parts {
                        let (r, c) = self.shape(p);
                        let gp = Matrix::from_vec(r, c, g.data()[off * c..(off + r) * c].to_vec())?;
                        off += r;
                        accumulate(&mut grads, &live, p, gp);
                    }
                }
                Op::GatherRows(a, idx) => {
                    let (r, c) = self.shape(*a);
                    let mut ga = Matrix::zeros(r, c);
                    for (o, &src) in idx.iter().enumerate() {
                        for (t, &x) in ga.row_mut(src).iter_mut().zip(g.row(o)) {
                            *t += x;
                        }
                    }
                    accumulate(&mut grads, &live, *a, ga);
                }
                Op::ScatterRows(a, idx) => {
                    let (r, c) = self.shape(*a);
                    let mut ga = Matrix::zeros(r, c);
                    for (i, &t) in idx.iter().enumerate() {
                        ga.row_mut(i).copy_from_slice(g.row(t));
                    }
                    accumulate(&mut grads, &live, *a, ga);
                }
                Op::SpMM(s, a) => {
                    if live[a.0] {
                        accumulate(&mut grads, &live, *a, s.t_matmul(&g));
                    }
                }
            }
            grads[i] = Some(g);
        }

        let shapes = self.nodes[..n].iter().map(|nd| nd.value.shape()).collect();
        Ok(Gradients { grads, shapes })
    }
}

fn accumulate(grads: &mut [Option<Matrix>], live: &[bool], v: Var, g: Matrix) {
    if !live[v.0] {
        return;
    }
    match &mut grads[v.0] {
        Some(existing) => existing.add_assign(&g),
        slot @ None => *slot = Some(g),
    }
}
