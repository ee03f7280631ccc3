//! Static tape of dense-matrix operations with reverse-mode differentiation.
//!
//! A [`Graph`] is built once, then evaluated many times: every call to
//! [`Graph::forward`] rebinds leaf values and recomputes the cached output of
//! each node in insertion order, which is also a topological order. Buffers are
//! allocated at construction and reused across evaluations.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use super::tensor::{matmul_into, matmul_nt_acc, matmul_tn_acc, tanh, Tensor2};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum GraphError {
    #[error("shape mismatch at node {node} ({op}): {detail}")]
    Shape {
        node: String,
        op: &'static str,
        detail: String,
    },
    #[error("non-finite value produced at node {node} ({op})")]
    NonFinite { node: String, op: &'static str },
    #[error("leaf {0} was never bound")]
    Unbound(String),
    #[error("node {0} is not a leaf and cannot be bound")]
    NotALeaf(String),
    #[error("backward called before forward")]
    NotForwarded,
    #[error("backward requires a scalar root, found shape {0}x{1}")]
    NonScalarRoot(usize, usize),
    #[error("graph is empty")]
    Empty,
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(NodeId, NodeId),
    /// Second operand may be a single row broadcast over the first.
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Tanh(NodeId),
    SumSquares(NodeId),
    Scale(NodeId, f64),
    GatherCols(NodeId, Vec<usize>),
    GatherRows(NodeId, Vec<usize>),
    ConcatCols(Vec<NodeId>),
    ConcatRows(Vec<NodeId>),
    Reshape(NodeId),
    ColumnMix(NodeId, Arc<ColumnMix>),
}

/// Fixed sparse linear map applied to each row: output column `j` is
/// `sum_k w_k * input[:, src_k]` over the terms listed for `j`.
#[derive(Debug, Clone, PartialEq)]
pub struct ColumnMix {
    in_cols: usize,
    terms: Vec<Vec<(usize, f64)>>,
}

impl ColumnMix {
    /// Panics if a source column is out of range.
    pub fn new(in_cols: usize, terms: Vec<Vec<(usize, f64)>>) -> Self {
        for t in terms.iter().flatten() {
            assert!(
                t.0 < in_cols,
                "source column {} out of range {in_cols}",
                t.0
            );
        }
        Self { in_cols, terms }
    }

    pub fn in_cols(&self) -> usize {
        self.in_cols
    }

    pub fn out_cols(&self) -> usize {
        self.terms.len()
    }

    pub fn terms(&self) -> &[Vec<(usize, f64)>] {
        &self.terms
    }

    /// Applies the map to every row of `x`.
    pub fn apply(&self, x: &Tensor2) -> Tensor2 {
        assert_eq!(x.cols(), self.in_cols);
        let mut out = Tensor2::zeros(x.rows(), self.out_cols());
        self.apply_into(x, &mut out);
        out
    }

    fn apply_into(&self, x: &Tensor2, out: &mut Tensor2) {
        let (ic, oc) = (self.in_cols, self.out_cols());
        let (xd, od) = (x.data(), out.data_mut());
        for (orow, xrow) in od.chunks_mut(oc).zip(xd.chunks(ic)) {
            for (o, terms) in orow.iter_mut().zip(&self.terms) {
                *o = terms.iter().map(|&(k, w)| w * xrow[k]).sum();
            }
        }
    }
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::MatMul(..) => "matmul",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Mul(..) => "mul",
            Op::Tanh(..) => "tanh",
            Op::SumSquares(..) => "sum_squares",
            Op::Scale(..) => "scale",
            Op::GatherCols(..) => "gather_cols",
            Op::GatherRows(..) => "gather_rows",
            Op::ConcatCols(..) => "concat_cols",
            Op::ConcatRows(..) => "concat_rows",
            Op::Reshape(..) => "reshape",
            Op::ColumnMix(..) => "column_mix",
        }
    }
}

#[derive(Debug, Clone)]
struct Node {
    op: Op,
    label: Option<String>,
    value: Tensor2,
    grad: Tensor2,
    requires_grad: bool,
    bound: bool,
}

#[derive(Debug, Clone, Default)]
pub struct Graph {
    nodes: Vec<Node>,
    forwarded: bool,
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn describe(&self, id: NodeId) -> String {
        let node = &self.nodes[id.0];
        match &node.label {
            Some(label) => format!("{id} '{label}'"),
            None => format!("{id}"),
        }
    }

    fn shape(&self, id: NodeId) -> (usize, usize) {
        self.nodes[id.0].value.shape()
    }

    fn push(&mut self, op: Op, rows: usize, cols: usize, requires_grad: bool) -> NodeId {
        let id = NodeId(self.nodes.len());
        self.nodes.push(Node {
            op,
            label: None,
            value: Tensor2::zeros(rows, cols),
            grad: if requires_grad {
                Tensor2::zeros(rows, cols)
            } else {
                Tensor2::zeros(0, 0)
            },
            requires_grad,
            bound: false,
        });
        self.forwarded = false;
        id
    }

    fn shape_err(&self, op: &'static str, detail: String) -> GraphError {
        GraphError::Shape {
            node: format!("#{} (pending)", self.nodes.len()),
            op,
            detail,
        }
    }

    /// Declares a leaf whose value is supplied through [`Graph::forward`].
    /// Gradients are reported only for leaves declared with `requires_grad`.
    pub fn leaf(&mut self, label: &str, rows: usize, cols: usize, requires_grad: bool) -> NodeId {
        let id = self.push(Op::Leaf, rows, cols, requires_grad);
        self.nodes[id.0].label = Some(label.to_string());
        id
    }

    /// A leaf bound once to a fixed value that never receives gradients.
    pub fn constant(&mut self, label: &str, value: Tensor2) -> NodeId {
        let (r, c) = value.shape();
        let id = self.leaf(label, r, c, false);
        self.nodes[id.0].value = value;
        self.nodes[id.0].bound = true;
        id
    }

    pub fn label(&mut self, id: NodeId, label: &str) {
        self.nodes[id.0].label = Some(label.to_string());
    }

    fn rg(&self, ids: &[NodeId]) -> bool {
        ids.iter().any(|id| self.nodes[id.0].requires_grad)
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, GraphError> {
        let (ar, ac) = self.shape(a);
        let (br, bc) = self.shape(b);
        if ac != br {
            return Err(self.shape_err(
                "matmul",
                format!(
                    "{} is {ar}x{ac} but {} is {br}x{bc}",
                    self.describe(a),
                    self.describe(b)
                ),
            ));
        }
        let rg = self.rg(&[a, b]);
        Ok(self.push(Op::MatMul(a, b), ar, bc, rg))
    }

    fn check_broadcast(&self, op: &'static str, a: NodeId, b: NodeId) -> Result<(), GraphError> {
        let (ar, ac) = self.shape(a);
        let (br, bc) = self.shape(b);
        if (ar, ac) == (br, bc) || (br == 1 && bc == ac) {
            Ok(())
        } else {
            Err(self.shape_err(
                op,
                format!(
                    "{} is {ar}x{ac} and {} is {br}x{bc} (second operand must match or be a 1x{ac} row)",
                    self.describe(a),
                    self.describe(b)
                ),
            ))
        }
    }

    /// Elementwise `a + b`; `b` may be a single row broadcast over `a` (biases).
    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, GraphError> {
        self.check_broadcast("add", a, b)?;
        let (r, c) = self.shape(a);
        let rg = self.rg(&[a, b]);
        Ok(self.push(Op::Add(a, b), r, c, rg))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, GraphError> {
        self.check_broadcast("sub", a, b)?;
        let (r, c) = self.shape(a);
        let rg = self.rg(&[a, b]);
        Ok(self.push(Op::Sub(a, b), r, c, rg))
    }

    /// Elementwise product; `b` may be a broadcast row.
    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, GraphError> {
        self.check_broadcast("mul", a, b)?;
        let (r, c) = self.shape(a);
        let rg = self.rg(&[a, b]);
        Ok(self.push(Op::Mul(a, b), r, c, rg))
    }

    pub fn tanh(&mut self, a: NodeId) -> NodeId {
        let (r, c) = self.shape(a);
        let rg = self.rg(&[a]);
        self.push(Op::Tanh(a), r, c, rg)
    }

    /// Sum of squares of all entries, as a 1x1 tensor.
    pub fn sum_squares(&mut self, a: NodeId) -> NodeId {
        let rg = self.rg(&[a]);
        self.push(Op::SumSquares(a), 1, 1, rg)
    }

    pub fn scale(&mut self, a: NodeId, factor: f64) -> NodeId {
        let (r, c) = self.shape(a);
        let rg = self.rg(&[a]);
        self.push(Op::Scale(a, factor), r, c, rg)
    }

    pub fn gather_cols(&mut self, a: NodeId, cols: Vec<usize>) -> Result<NodeId, GraphError> {
        let (r, c) = self.shape(a);
        if let Some(&bad) = cols.iter().find(|&&k| k >= c) {
            return Err(self.shape_err(
                "gather_cols",
                format!(
                    "column {bad} out of range for {} with {c} columns",
                    self.describe(a)
                ),
            ));
        }
        let rg = self.rg(&[a]);
        let n = cols.len();
        Ok(self.push(Op::GatherCols(a, cols), r, n, rg))
    }

    pub fn gather_rows(&mut self, a: NodeId, rows: Vec<usize>) -> Result<NodeId, GraphError> {
        let (r, c) = self.shape(a);
        if let Some(&bad) = rows.iter().find(|&&k| k >= r) {
            return Err(self.shape_err(
                "gather_rows",
                format!(
                    "row {bad} out of range for {} with {r} rows",
                    self.describe(a)
                ),
            ));
        }
        let rg = self.rg(&[a]);
        let n = rows.len();
        Ok(self.push(Op::GatherRows(a, rows), n, c, rg))
    }

    pub fn concat_cols(&mut self, parts: Vec<NodeId>) -> Result<NodeId, GraphError> {
        let Some(&first) = parts.first() else {
            return Err(self.shape_err("concat_cols", "no operands".into()));
        };
        let rows = self.shape(first).0;
        let mut cols = 0;
        for &p in &parts {
            let (r, c) = self.shape(p);
            if r != rows {
                return Err(self.shape_err(
                    "concat_cols",
                    format!("{} has {r} rows, expected {rows}", self.describe(p)),
                ));
            }
            cols += c;
        }
        let rg = self.rg(&parts);
        Ok(self.push(Op::ConcatCols(parts), rows, cols, rg))
    }

    pub fn concat_rows(&mut self, parts: Vec<NodeId>) -> Result<NodeId, GraphError> {
        let Some(&first) = parts.first() else {
            return Err(self.shape_err("concat_rows", "no operands".into()));
        };
        let cols = self.shape(first).1;
        let mut rows = 0;
        for &p in &parts {
            let (r, c) = self.shape(p);
            if c != cols {
                return Err(self.shape_err(
                    "concat_rows",
                    format!("{} has {c} columns, expected {cols}", self.describe(p)),
                ));
            }
            rows += r;
        }
        let rg = self.rg(&parts);
        Ok(self.push(Op::ConcatRows(parts), rows, cols, rg))
    }

    /// Reinterprets the row-major data under a new shape.
    pub fn reshape(&mut self, a: NodeId, rows: usize, cols: usize) -> Result<NodeId, GraphError> {
        let (r, c) = self.shape(a);
        if r * c != rows * cols {
            return Err(self.shape_err(
                "reshape",
                format!(
                    "cannot view {} ({r}x{c}) as {rows}x{cols}",
                    self.describe(a)
                ),
            ));
        }
        let rg = self.rg(&[a]);
        Ok(self.push(Op::Reshape(a), rows, cols, rg))
    }

    /// Applies a fixed sparse column map (see [`ColumnMix`]) to every row of `a`.
    pub fn column_mix(&mut self, a: NodeId, mix: Arc<ColumnMix>) -> Result<NodeId, GraphError> {
        let (r, c) = self.shape(a);
        if c != mix.in_cols {
            return Err(self.shape_err(
                "column_mix",
                format!(
                    "{} has {c} columns but the map expects {}",
                    self.describe(a),
                    mix.in_cols
                ),
            ));
        }
        let rg = self.rg(&[a]);
        let oc = mix.out_cols();
        Ok(self.push(Op::ColumnMix(a, mix), r, oc, rg))
    }

    /// Cached output of a node from the last forward pass.
    pub fn value(&self, id: NodeId) -> &Tensor2 {
        &self.nodes[id.0].value
    }

    pub fn requires_grad(&self, id: NodeId) -> bool {
        self.nodes[id.0].requires_grad
    }

    /// Binds leaves and evaluates every node; returns the output of the last node.
    ///
    /// Leaves not present in `bindings` keep their previous value (constants
    /// are bound at construction).
    pub fn forward(&mut self, bindings: &[(NodeId, &Tensor2)]) -> Result<Tensor2, GraphError> {
        if self.nodes.is_empty() {
            return Err(GraphError::Empty);
        }
        self.forwarded = false;
        for &(id, value) in bindings {
            if !matches!(self.nodes[id.0].op, Op::Leaf) {
                return Err(GraphError::NotALeaf(self.describe(id)));
            }
            let expected = self.shape(id);
            if value.shape() != expected {
                return Err(GraphError::Shape {
                    node: self.describe(id),
                    op: "leaf",
                    detail: format!(
                        "bound {}x{} but declared {}x{}",
                        value.rows(),
                        value.cols(),
                        expected.0,
                        expected.1
                    ),
                });
            }
            if !value.is_finite() {
                return Err(GraphError::NonFinite {
                    node: self.describe(id),
                    op: "leaf",
                });
            }
            let node = &mut self.nodes[id.0];
            node.value.data_mut().copy_from_slice(value.data());
            node.bound = true;
        }
        for i in 0..self.nodes.len() {
            if matches!(self.nodes[i].op, Op::Leaf) {
                if !self.nodes[i].bound {
                    return Err(GraphError::Unbound(self.describe(NodeId(i))));
                }
                continue;
            }
            let (before, rest) = self.nodes.split_at_mut(i);
            let node = &mut rest[0];
            eval_node(&node.op, before, &mut node.value);
            if !node.value.is_finite() {
                let op = node.op.name();
                return Err(GraphError::NonFinite {
                    node: self.describe(NodeId(i)),
                    op,
                });
            }
        }
        self.forwarded = true;
        Ok(self.nodes.last().expect("non-empty").value.clone())
    }

    /// Reverse sweep from the (scalar) last node. Returns the gradient of that
    /// node with respect to every leaf declared with `requires_grad`.
    pub fn backward(&mut self) -> Result<BTreeMap<NodeId, Tensor2>, GraphError> {
        if !self.forwarded {
            return Err(GraphError::NotForwarded);
        }
        let root = self.nodes.len() - 1;
        let (r, c) = self.nodes[root].value.shape();
        if (r, c) != (1, 1) {
            return Err(GraphError::NonScalarRoot(r, c));
        }
        for node in self.nodes.iter_mut().filter(|n| n.requires_grad) {
            node.grad.data_mut().iter_mut().for_each(|g| *g = 0.0);
        }
        if self.nodes[root].requires_grad {
            self.nodes[root].grad.data_mut()[0] = 1.0;
        }
        for i in (0..self.nodes.len()).rev() {
            if !self.nodes[i].requires_grad || matches!(self.nodes[i].op, Op::Leaf) {
                continue;
            }
            let (before, rest) = self.nodes.split_at_mut(i);
            let node = &rest[0];
            backprop_node(&node.op, &node.value, &node.grad, before);
        }
        let mut out = BTreeMap::new();
        for (i, node) in self.nodes.iter_mut().enumerate() {
            if node.requires_grad && matches!(node.op, Op::Leaf) {
                let (r, c) = node.grad.shape();
                out.insert(
                    NodeId(i),
                    std::mem::replace(&mut node.grad, Tensor2::zeros(r, c)),
                );
            }
        }
        self.forwarded = false;
        Ok(out)
    }
}

fn eval_node(op: &Op, nodes: &[Node], out: &mut Tensor2) {
    let v = |id: &NodeId| &nodes[id.0].value;
    match op {
        Op::Leaf => unreachable!("leaves are bound, not evaluated"),
        Op::MatMul(a, b) => matmul_into(v(a), v(b), out),
        Op::Add(a, b) => zip_broadcast(v(a), v(b), out, |x, y| x + y),
        Op::Sub(a, b) => zip_broadcast(v(a), v(b), out, |x, y| x - y),
        Op::Mul(a, b) => zip_broadcast(v(a), v(b), out, |x, y| x * y),
        Op::Tanh(a) => {
            for (o, &x) in out.data_mut().iter_mut().zip(v(a).data()) {
                *o = tanh(x);
            }
        }
        Op::SumSquares(a) => {
            out.data_mut()[0] = v(a).data().iter().map(|x| x * x).sum();
        }
        Op::Scale(a, s) => {
            for (o, &x) in out.data_mut().iter_mut().zip(v(a).data()) {
                *o = x * s;
            }
        }
        Op::GatherCols(a, cols) => {
            let src = v(a);
            let (rows, sc) = src.shape();
            let n = cols.len();
            let (sd, od) = (src.data(), out.data_mut());
            for r in 0..rows {
                for (k, &c) in cols.iter().enumerate() {
                    od[r * n + k] = sd[r * sc + c];
                }
            }
        }
        Op::GatherRows(a, rows) => {
            let src = v(a);
            let c = src.cols();
            for (k, &r) in rows.iter().enumerate() {
                out.data_mut()[k * c..(k + 1) * c].copy_from_slice(src.row_slice(r));
            }
        }
        Op::ConcatCols(parts) => {
            let total = out.cols();
            let mut offset = 0;
            for p in parts {
                let src = v(p);
                let c = src.cols();
                for r in 0..src.rows() {
                    out.data_mut()[r * total + offset..r * total + offset + c]
                        .copy_from_slice(src.row_slice(r));
                }
                offset += c;
            }
        }
        Op::ConcatRows(parts) => {
            let mut offset = 0;
            for p in parts {
                let src = v(p).data();
                out.data_mut()[offset..offset + src.len()].copy_from_slice(src);
                offset += src.len();
            }
        }
        Op::Reshape(a) => out.data_mut().copy_from_slice(v(a).data()),
        Op::ColumnMix(a, mix) => mix.apply_into(v(a), out),
    }
}

fn zip_broadcast(a: &Tensor2, b: &Tensor2, out: &mut Tensor2, f: impl Fn(f64, f64) -> f64) {
    let od = out.data_mut();
    if a.shape() == b.shape() {
        for ((o, &x), &y) in od.iter_mut().zip(a.data()).zip(b.data()) {
            *o = f(x, y);
        }
    } else {
        let c = a.cols();
        for (orow, arow) in od.chunks_mut(c).zip(a.data().chunks(c)) {
            for ((o, &x), &y) in orow.iter_mut().zip(arow).zip(b.data()) {
                *o = f(x, y);
            }
        }
    }
}

/// Runs `f` with the gradient buffer of `id` temporarily moved out so the
/// remaining nodes stay readable.
fn with_grad(nodes: &mut [Node], id: NodeId, f: impl FnOnce(&mut Tensor2, &[Node])) {
    if !nodes[id.0].requires_grad {
        return;
    }
    let mut grad = std::mem::take(&mut nodes[id.0].grad);
    f(&mut grad, nodes);
    nodes[id.0].grad = grad;
}

/// Accumulates `sign * g` into `acc`, summing over rows when `acc` is a broadcast row.
fn acc_broadcast(acc: &mut Tensor2, g: &Tensor2, weight: Option<&Tensor2>, sign: f64) {
    let broadcast = acc.shape() != g.shape();
    let c = g.cols();
    let ad = acc.data_mut();
    match (broadcast, weight) {
        (false, None) => {
            for (a, &x) in ad.iter_mut().zip(g.data()) {
                *a += sign * x;
            }
        }
        (false, Some(w)) => {
            for ((a, &x), &y) in ad.iter_mut().zip(g.data()).zip(w.data()) {
                *a += sign * x * y;
            }
        }
        (true, None) => {
            for grow in g.data().chunks(c) {
                for (a, &x) in ad.iter_mut().zip(grow) {
                    *a += sign * x;
                }
            }
        }
        (true, Some(w)) => {
            for (grow, wrow) in g.data().chunks(c).zip(w.data().chunks(c)) {
                for ((a, &x), &y) in ad.iter_mut().zip(grow).zip(wrow) {
                    *a += sign * x * y;
                }
            }
        }
    }
}

fn backprop_node(op: &Op, value: &Tensor2, g: &Tensor2, nodes: &mut [Node]) {
    match op {
        Op::Leaf => {}
        Op::MatMul(a, b) => {
            let (a, b) = (*a, *b);
            with_grad(nodes, a, |ga, n| matmul_nt_acc(g, &n[b.0].value, ga));
            with_grad(nodes, b, |gb, n| matmul_tn_acc(&n[a.0].value, g, gb));
        }
        Op::Add(a, b) | Op::Sub(a, b) => {
            let sign = if matches!(op, Op::Sub(..)) { -1.0 } else { 1.0 };
            with_grad(nodes, *a, |ga, _| acc_broadcast(ga, g, None, 1.0));
            with_grad(nodes, *b, |gb, _| acc_broadcast(gb, g, None, sign));
        }
        Op::Mul(a, b) => {
            let (a, b) = (*a, *b);
            with_grad(nodes, a, |ga, n| {
                let bv = &n[b.0].value;
                if bv.shape() == g.shape() {
                    acc_broadcast(ga, g, Some(bv), 1.0);
                } else {
                    let c = g.cols();
                    for (arow, grow) in ga.data_mut().chunks_mut(c).zip(g.data().chunks(c)) {
                        for ((x, &y), &w) in arow.iter_mut().zip(grow).zip(bv.data()) {
                            *x += y * w;
                        }
                    }
                }
            });
            with_grad(nodes, b, |gb, n| {
                acc_broadcast(gb, g, Some(&n[a.0].value), 1.0)
            });
        }
        Op::Tanh(a) => with_grad(nodes, *a, |ga, _| {
            for ((x, &y), &t) in ga.data_mut().iter_mut().zip(g.data()).zip(value.data()) {
                *x += y * (1.0 - t * t);
            }
        }),
        Op::SumSquares(a) => {
            let a = *a;
            let s = 2.0 * g.data()[0];
            with_grad(nodes, a, |ga, n| {
                for (x, &y) in ga.data_mut().iter_mut().zip(n[a.0].value.data()) {
                    *x += s * y;
                }
            });
        }
        Op::Scale(a, s) => with_grad(nodes, *a, |ga, _| acc_broadcast(ga, g, None, *s)),
        Op::GatherCols(a, cols) => with_grad(nodes, *a, |ga, _| {
            let sc = ga.cols();
            let n = cols.len();
            let (gd, ad) = (g.data(), ga.data_mut());
            for r in 0..g.rows() {
                for (k, &c) in cols.iter().enumerate() {
                    ad[r * sc + c] += gd[r * n + k];
                }
            }
        }),
        Op::GatherRows(a, rows) => with_grad(nodes, *a, |ga, _| {
            let c = ga.cols();
            for (k, &r) in rows.iter().enumerate() {
                let src = &g.data()[k * c..(k + 1) * c];
                for (x, &y) in ga.data_mut()[r * c..(r + 1) * c].iter_mut().zip(src) {
                    *x += y;
                }
            }
        }),
        Op::ConcatCols(parts) => {
            let total = g.cols();
            let mut offset = 0;
            for p in parts {
                let c = nodes[p.0].value.cols();
                with_grad(nodes, *p, |gp, _| {
                    for r in 0..gp.rows() {
                        let src = &g.data()[r * total + offset..r * total + offset + c];
                        for (x, &y) in gp.data_mut()[r * c..(r + 1) * c].iter_mut().zip(src) {
                            *x += y;
                        }
                    }
                });
                offset += c;
            }
        }
        Op::ConcatRows(parts) => {
            let mut offset = 0;
            for p in parts {
                let len = nodes[p.0].value.len();
                with_grad(nodes, *p, |gp, _| {
                    for (x, &y) in gp
                        .data_mut()
                        .iter_mut()
                        .zip(&g.data()[offset..offset + len])
                    {
                        *x += y;
                    }
                });
                offset += len;
            }
        }
        Op::Reshape(a) => with_grad(nodes, *a, |ga, _| {
            for (x, &y) in ga.data_mut().iter_mut().zip(g.data()) {
                *x += y;
            }
        }),
        Op::ColumnMix(a, mix) => with_grad(nodes, *a, |ga, _| {
            let (ic, oc) = (mix.in_cols, mix.out_cols());
            for (arow, grow) in ga.data_mut().chunks_mut(ic).zip(g.data().chunks(oc)) {
                for (&y, terms) in grow.iter().zip(&mix.terms) {
                    for &(k, w) in terms {
                        arow[k] += w * y;
                    }
                }
            }
        }),
    }
}
