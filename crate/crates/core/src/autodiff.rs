//! Minimal reverse-mode automatic differentiation over dense f64 tensors.
//!
//! A [`Tape`] is a define-by-run Wengert list: every [`Tape::apply`] call
//! computes the forward value and records a node; [`Tape::backward`] replays
//! the nodes in reverse, accumulating exact gradients. Tapes are rebuilt per
//! example or minibatch, which keeps variable-length sequence models simple.
//!
//! Shapes are `[]` (scalar), `[n]` (vector) or `[r, c]` (row-major matrix).
//! The primitive set is deliberately small; everything the model needs
//! (sigmoid, gated cells, attention scores) is composed from it, so one
//! finite-difference check covers the whole zoo.

use crate::error::{Error, Result};

/// Handle to a tensor slot on a tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TensorId(usize);

/// One tensor slot: values, shape, and (for differentiable slots) a gradient
/// buffer of identical length.
#[derive(Debug, Clone)]
pub struct Tensor {
    values: Vec<f64>,
    shape: Vec<usize>,
    requires_grad: bool,
    grad: Option<Vec<f64>>,
}

/// Primitive operations. Attributes that never receive gradients (indices,
/// constants) ride along in the variant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Op {
    /// `[m,k]x[k,n] -> [m,n]`, `[m,k]x[k] -> [m]`, `[k]x[k,n] -> [n]`.
    Matmul,
    /// Elementwise; one side may be a scalar (broadcast).
    Add,
    /// Elementwise product; one side may be a scalar (broadcast).
    Mul,
    /// Concatenate vectors/scalars into one vector.
    Concat,
    Tanh,
    /// Softmax over the last axis.
    Softmax,
    /// Sum of all entries -> scalar.
    Sum,
    /// Euclidean norm of all entries -> scalar.
    L2Norm,
    /// Row `i` of a matrix -> vector; entry `i` of a vector -> scalar.
    PickRow(usize),
    /// `-ln(p[i])` of a probability vector -> scalar.
    LogLoss(usize),
    /// Multiply by a constant.
    Scale(f64),
    /// Identity forward; backward multiplies the upstream gradient by
    /// `-lambda`.
    GradReverse(f64),
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Matmul => "matmul",
            Op::Add => "add",
            Op::Mul => "elementwise_mul",
            Op::Concat => "concat",
            Op::Tanh => "tanh",
            Op::Softmax => "softmax",
            Op::Sum => "sum",
            Op::L2Norm => "l2_norm",
            Op::PickRow(_) => "pick_row",
            Op::LogLoss(_) => "logloss",
            Op::Scale(_) => "scale",
            Op::GradReverse(_) => "grad_reverse",
        }
    }
}

#[derive(Debug, Clone)]
struct Node {
    op: Op,
    inputs: Vec<TensorId>,
    output: TensorId,
}

/// Define-by-run tape. Single-threaded; independent tapes may run in
/// parallel.
#[derive(Debug, Default)]
pub struct Tape {
    slots: Vec<Tensor>,
    nodes: Vec<Node>,
}

fn numel(shape: &[usize]) -> usize {
    shape.iter().product()
}

impl Tape {
    pub fn new() -> Tape {
        Tape::default()
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    /// Constant leaf (no gradient).
    pub fn leaf(&mut self, values: Vec<f64>, shape: &[usize]) -> TensorId {
        self.push(values, shape.to_vec(), false)
    }

    /// Differentiable leaf.
    pub fn leaf_grad(&mut self, values: Vec<f64>, shape: &[usize]) -> TensorId {
        self.push(values, shape.to_vec(), true)
    }

    pub fn scalar(&mut self, v: f64) -> TensorId {
        self.push(vec![v], vec![], false)
    }

    pub fn zeros(&mut self, shape: &[usize]) -> TensorId {
        self.push(vec![0.0; numel(shape)], shape.to_vec(), false)
    }

    fn push(&mut self, values: Vec<f64>, shape: Vec<usize>, requires_grad: bool) -> TensorId {
        assert_eq!(
            values.len(),
            numel(&shape),
            "values length must match shape"
        );
        let id = TensorId(self.slots.len());
        self.slots.push(Tensor {
            values,
            shape,
            requires_grad,
            grad: None,
        });
        id
    }

    pub fn values(&self, id: TensorId) -> &[f64] {
        &self.slots[id.0].values
    }

    pub fn shape(&self, id: TensorId) -> &[usize] {
        &self.slots[id.0].shape
    }

    pub fn requires_grad(&self, id: TensorId) -> bool {
        self.slots[id.0].requires_grad
    }

    /// Gradient buffer, present after `backward` for slots that require one.
    pub fn grad(&self, id: TensorId) -> Option<&[f64]> {
        self.slots[id.0].grad.as_deref()
    }

    // ── forward ─────────────────────────────────────────────────────────

    pub fn apply(&mut self, op: Op, inputs: &[TensorId]) -> Result<TensorId> {
        let (values, shape) = self.forward(op, inputs)?;
        let requires_grad = inputs.iter().any(|&i| self.slots[i.0].requires_grad);
        let out = self.push(values, shape, requires_grad);
        self.nodes.push(Node {
            op,
            inputs: inputs.to_vec(),
            output: out,
        });
        Ok(out)
    }

    fn arity(&self, op: Op, inputs: &[TensorId], n: usize) -> Result<()> {
        if inputs.len() != n {
            return Err(Error::Shape {
                op: op.name(),
                detail: format!("expected {n} inputs, got {}", inputs.len()),
            });
        }
        Ok(())
    }

    fn forward(&self, op: Op, inputs: &[TensorId]) -> Result<(Vec<f64>, Vec<usize>)> {
        match op {
            Op::Matmul => {
                self.arity(op, inputs, 2)?;
                let (a, b) = (&self.slots[inputs[0].0], &self.slots[inputs[1].0]);
                matmul_forward(op.name(), &a.values, &a.shape, &b.values, &b.shape)
            }
            Op::Add | Op::Mul => {
                self.arity(op, inputs, 2)?;
                let (a, b) = (&self.slots[inputs[0].0], &self.slots[inputs[1].0]);
                let mul = matches!(op, Op::Mul);
                elementwise_forward(op.name(), a, b, mul)
            }
            Op::Concat => {
                if inputs.is_empty() {
                    return Err(Error::Shape {
                        op: op.name(),
                        detail: "no inputs".into(),
                    });
                }
                let mut out = Vec::new();
                for &i in inputs {
                    let t = &self.slots[i.0];
                    if t.shape.len() > 1 {
                        return Err(Error::Shape {
                            op: op.name(),
                            detail: format!("input must be scalar or vector, got {:?}", t.shape),
                        });
                    }
                    out.extend_from_slice(&t.values);
                }
                let n = out.len();
                Ok((out, vec![n]))
            }
            Op::Tanh => {
                self.arity(op, inputs, 1)?;
                let t = &self.slots[inputs[0].0];
                Ok((t.values.iter().map(|v| v.tanh()).collect(), t.shape.clone()))
            }
            Op::Softmax => {
                self.arity(op, inputs, 1)?;
                let t = &self.slots[inputs[0].0];
                let width = *t.shape.last().unwrap_or(&0);
                if width == 0 || t.values.is_empty() {
                    return Err(Error::Shape {
                        op: op.name(),
                        detail: "softmax over empty axis".into(),
                    });
                }
                let mut out = vec![0.0; t.values.len()];
                for (row_out, row_in) in out.chunks_mut(width).zip(t.values.chunks(width)) {
                    softmax_row(row_in, row_out);
                }
                Ok((out, t.shape.clone()))
            }
            Op::Sum => {
                self.arity(op, inputs, 1)?;
                let t = &self.slots[inputs[0].0];
                Ok((vec![t.values.iter().sum()], vec![]))
            }
            Op::L2Norm => {
                self.arity(op, inputs, 1)?;
                let t = &self.slots[inputs[0].0];
                let sq: f64 = t.values.iter().map(|v| v * v).sum();
                Ok((vec![sq.sqrt()], vec![]))
            }
            Op::PickRow(i) => {
                self.arity(op, inputs, 1)?;
                let t = &self.slots[inputs[0].0];
                match t.shape.len() {
                    1 => {
                        if i >= t.shape[0] {
                            return Err(Error::Shape {
                                op: op.name(),
                                detail: format!("index {i} out of bounds for {:?}", t.shape),
                            });
                        }
                        Ok((vec![t.values[i]], vec![]))
                    }
                    2 => {
                        let (r, c) = (t.shape[0], t.shape[1]);
                        if i >= r {
                            return Err(Error::Shape {
                                op: op.name(),
                                detail: format!("row {i} out of bounds for {:?}", t.shape),
                            });
                        }
                        Ok((t.values[i * c..(i + 1) * c].to_vec(), vec![c]))
                    }
                    _ => Err(Error::Shape {
                        op: op.name(),
                        detail: format!("expected vector or matrix, got {:?}", t.shape),
                    }),
                }
            }
            Op::LogLoss(i) => {
                self.arity(op, inputs, 1)?;
                let t = &self.slots[inputs[0].0];
                if t.shape.len() != 1 || i >= t.shape[0] {
                    return Err(Error::Shape {
                        op: op.name(),
                        detail: format!("index {i} vs shape {:?}", t.shape),
                    });
                }
                let p = t.values[i];
                if p <= 0.0 {
                    return Err(Error::Numeric(format!(
                        "logloss of non-positive probability {p}"
                    )));
                }
                Ok((vec![-p.ln()], vec![]))
            }
            Op::Scale(c) => {
                self.arity(op, inputs, 1)?;
                let t = &self.slots[inputs[0].0];
                Ok((t.values.iter().map(|v| v * c).collect(), t.shape.clone()))
            }
            Op::GradReverse(_) => {
                self.arity(op, inputs, 1)?;
                let t = &self.slots[inputs[0].0];
                Ok((t.values.clone(), t.shape.clone()))
            }
        }
    }

    // ── backward ────────────────────────────────────────────────────────

    /// Backpropagate from a scalar loss. Each call computes one full adjoint
    /// pass and adds it into the persistent gradient buffers, so calling
    /// twice without a reset exactly doubles every gradient.
    pub fn backward(&mut self, loss: TensorId) -> Result<()> {
        if loss.0 >= self.slots.len() {
            return Err(Error::usage("backward: loss tensor is not on this tape"));
        }
        if numel(&self.slots[loss.0].shape) != 1 {
            return Err(Error::usage(format!(
                "backward requires a scalar loss, got shape {:?}",
                self.slots[loss.0].shape
            )));
        }
        let mut adjoint: Vec<Option<Vec<f64>>> = vec![None; self.slots.len()];
        adjoint[loss.0] = Some(vec![1.0]);
        for ni in (0..self.nodes.len()).rev() {
            let node = &self.nodes[ni];
            if !self.slots[node.output.0].requires_grad {
                continue;
            }
            let Some(dy) = adjoint[node.output.0].take() else {
                continue; // not on any path to the loss
            };
            self.backward_node(node, &dy, &mut adjoint);
            adjoint[node.output.0] = Some(dy);
        }
        for (slot, adj) in self.slots.iter_mut().zip(adjoint) {
            if !slot.requires_grad {
                continue;
            }
            let Some(adj) = adj else { continue };
            let grad = slot
                .grad
                .get_or_insert_with(|| vec![0.0; slot.values.len()]);
            for (g, a) in grad.iter_mut().zip(&adj) {
                *g += a;
            }
        }
        Ok(())
    }

    fn backward_node(&self, node: &Node, dy: &[f64], adjoint: &mut [Option<Vec<f64>>]) {
        let out = node.output;
        let seed = |tape: &Tape, id: TensorId, adjoint: &mut [Option<Vec<f64>>]| {
            if adjoint[id.0].is_none() {
                adjoint[id.0] = Some(vec![0.0; tape.slots[id.0].values.len()]);
            }
        };
        match node.op {
            Op::Matmul => {
                let (a, b) = (node.inputs[0], node.inputs[1]);
                let (ash, bsh) = (self.shape(a), self.shape(b));
                if self.slots[a.0].requires_grad {
                    seed(self, a, adjoint);
                    let bv = &self.slots[b.0].values;
                    matmul_backward_a(adjoint[a.0].as_mut().unwrap(), dy, bv, ash, bsh);
                }
                if self.slots[b.0].requires_grad {
                    seed(self, b, adjoint);
                    let av = &self.slots[a.0].values;
                    matmul_backward_b(adjoint[b.0].as_mut().unwrap(), dy, av, ash, bsh);
                }
            }
            Op::Add => {
                for &inp in &node.inputs {
                    if !self.slots[inp.0].requires_grad {
                        continue;
                    }
                    seed(self, inp, adjoint);
                    let g = adjoint[inp.0].as_mut().unwrap();
                    if g.len() == dy.len() {
                        for (gi, d) in g.iter_mut().zip(dy) {
                            *gi += d;
                        }
                    } else {
                        // scalar broadcast side
                        g[0] += dy.iter().sum::<f64>();
                    }
                }
            }
            Op::Mul => {
                let (a, b) = (node.inputs[0], node.inputs[1]);
                if self.slots[a.0].requires_grad {
                    seed(self, a, adjoint);
                    mul_backward(adjoint[a.0].as_mut().unwrap(), dy, &self.slots[b.0].values);
                }
                if self.slots[b.0].requires_grad {
                    seed(self, b, adjoint);
                    mul_backward(adjoint[b.0].as_mut().unwrap(), dy, &self.slots[a.0].values);
                }
            }
            Op::Concat => {
                let mut offset = 0;
                for &inp in &node.inputs {
                    let n = self.slots[inp.0].values.len();
                    if self.slots[inp.0].requires_grad {
                        seed(self, inp, adjoint);
                        let g = adjoint[inp.0].as_mut().unwrap();
                        for (gi, d) in g.iter_mut().zip(&dy[offset..offset + n]) {
                            *gi += d;
                        }
                    }
                    offset += n;
                }
            }
            Op::Tanh => {
                let inp = node.inputs[0];
                if self.slots[inp.0].requires_grad {
                    seed(self, inp, adjoint);
                    let y = &self.slots[out.0].values;
                    let g = adjoint[inp.0].as_mut().unwrap();
                    for i in 0..g.len() {
                        g[i] += dy[i] * (1.0 - y[i] * y[i]);
                    }
                }
            }
            Op::Softmax => {
                let inp = node.inputs[0];
                if self.slots[inp.0].requires_grad {
                    seed(self, inp, adjoint);
                    let y = &self.slots[out.0].values;
                    let width = *self.slots[out.0].shape.last().unwrap();
                    let g = adjoint[inp.0].as_mut().unwrap();
                    for r in 0..y.len() / width {
                        let lo = r * width;
                        let dot: f64 = (0..width).map(|j| y[lo + j] * dy[lo + j]).sum();
                        for j in 0..width {
                            g[lo + j] += y[lo + j] * (dy[lo + j] - dot);
                        }
                    }
                }
            }
            Op::Sum => {
                let inp = node.inputs[0];
                if self.slots[inp.0].requires_grad {
                    seed(self, inp, adjoint);
                    let g = adjoint[inp.0].as_mut().unwrap();
                    for gi in g.iter_mut() {
                        *gi += dy[0];
                    }
                }
            }
            Op::L2Norm => {
                let inp = node.inputs[0];
                if self.slots[inp.0].requires_grad {
                    seed(self, inp, adjoint);
                    let norm = self.slots[out.0].values[0];
                    let x = &self.slots[inp.0].values;
                    let g = adjoint[inp.0].as_mut().unwrap();
                    if norm > 1e-300 {
                        for i in 0..g.len() {
                            g[i] += dy[0] * x[i] / norm;
                        }
                    }
                    // subgradient 0 at the origin
                }
            }
            Op::PickRow(i) => {
                let inp = node.inputs[0];
                if self.slots[inp.0].requires_grad {
                    seed(self, inp, adjoint);
                    let width = dy.len();
                    let g = adjoint[inp.0].as_mut().unwrap();
                    for (j, d) in dy.iter().enumerate() {
                        g[i * width + j] += d;
                    }
                }
            }
            Op::LogLoss(i) => {
                let inp = node.inputs[0];
                if self.slots[inp.0].requires_grad {
                    seed(self, inp, adjoint);
                    let p = self.slots[inp.0].values[i];
                    adjoint[inp.0].as_mut().unwrap()[i] += -dy[0] / p;
                }
            }
            Op::Scale(c) => {
                let inp = node.inputs[0];
                if self.slots[inp.0].requires_grad {
                    seed(self, inp, adjoint);
                    let g = adjoint[inp.0].as_mut().unwrap();
                    for (gi, d) in g.iter_mut().zip(dy) {
                        *gi += c * d;
                    }
                }
            }
            Op::GradReverse(lambda) => {
                let inp = node.inputs[0];
                if self.slots[inp.0].requires_grad {
                    seed(self, inp, adjoint);
                    let g = adjoint[inp.0].as_mut().unwrap();
                    for (gi, d) in g.iter_mut().zip(dy) {
                        *gi += -lambda * d;
                    }
                }
            }
        }
    }

    // ── convenience wrappers ────────────────────────────────────────────

    pub fn matmul(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        self.apply(Op::Matmul, &[a, b])
    }
    pub fn add(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        self.apply(Op::Add, &[a, b])
    }
    pub fn mul(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        self.apply(Op::Mul, &[a, b])
    }
    pub fn concat(&mut self, inputs: &[TensorId]) -> Result<TensorId> {
        self.apply(Op::Concat, inputs)
    }
    pub fn tanh(&mut self, x: TensorId) -> Result<TensorId> {
        self.apply(Op::Tanh, &[x])
    }
    pub fn softmax(&mut self, x: TensorId) -> Result<TensorId> {
        self.apply(Op::Softmax, &[x])
    }
    pub fn sum(&mut self, x: TensorId) -> Result<TensorId> {
        self.apply(Op::Sum, &[x])
    }
    pub fn l2_norm(&mut self, x: TensorId) -> Result<TensorId> {
        self.apply(Op::L2Norm, &[x])
    }
    pub fn pick_row(&mut self, x: TensorId, i: usize) -> Result<TensorId> {
        self.apply(Op::PickRow(i), &[x])
    }
    pub fn logloss(&mut self, p: TensorId, i: usize) -> Result<TensorId> {
        self.apply(Op::LogLoss(i), &[p])
    }
    pub fn scale(&mut self, x: TensorId, c: f64) -> Result<TensorId> {
        self.apply(Op::Scale(c), &[x])
    }
    pub fn grad_reverse(&mut self, x: TensorId, lambda: f64) -> Result<TensorId> {
        self.apply(Op::GradReverse(lambda), &[x])
    }

    /// `sigma(x) = (1 + tanh(x/2)) / 2`, composed so no extra backward rule
    /// is needed.
    pub fn sigmoid(&mut self, x: TensorId) -> Result<TensorId> {
        let half = self.apply(Op::Scale(0.5), &[x])?;
        let t = self.tanh(half)?;
        let t2 = self.apply(Op::Scale(0.5), &[t])?;
        let halves = {
            let n = self.values(x).len();
            let shape = self.shape(x).to_vec();
            self.leaf(vec![0.5; n], &shape)
        };
        self.add(t2, halves)
    }

    /// Sum a list of same-shaped tensors.
    pub fn add_all(&mut self, items: &[TensorId]) -> Result<TensorId> {
        let mut it = items.iter();
        let first = *it
            .next()
            .ok_or_else(|| Error::usage("add_all of nothing"))?;
        let mut acc = first;
        for &x in it {
            acc = self.add(acc, x)?;
        }
        Ok(acc)
    }
}

fn softmax_row(row: &[f64], out: &mut [f64]) {
    let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for (o, &v) in out.iter_mut().zip(row) {
        let e = (v - max).exp();
        *o = e;
        sum += e;
    }
    for o in out.iter_mut() {
        *o /= sum;
    }
}

fn matmul_forward(
    name: &'static str,
    a: &[f64],
    ash: &[usize],
    b: &[f64],
    bsh: &[usize],
) -> Result<(Vec<f64>, Vec<usize>)> {
    let err = |detail: String| Error::Shape { op: name, detail };
    match (ash.len(), bsh.len()) {
        (2, 2) => {
            let (m, k, k2, n) = (ash[0], ash[1], bsh[0], bsh[1]);
            if k != k2 {
                return Err(err(format!("inner dims differ: {ash:?} x {bsh:?}")));
            }
            let mut out = vec![0.0; m * n];
            for i in 0..m {
                let arow = &a[i * k..(i + 1) * k];
                let orow = &mut out[i * n..(i + 1) * n];
                for (p, &av) in arow.iter().enumerate() {
                    let brow = &b[p * n..(p + 1) * n];
                    for (o, &bv) in orow.iter_mut().zip(brow) {
                        *o += av * bv;
                    }
                }
            }
            Ok((out, vec![m, n]))
        }
        (2, 1) => {
            let (m, k) = (ash[0], ash[1]);
            if k != bsh[0] {
                return Err(err(format!("inner dims differ: {ash:?} x {bsh:?}")));
            }
            let mut out = vec![0.0; m];
            for i in 0..m {
                let arow = &a[i * k..(i + 1) * k];
                let mut s = 0.0;
                for (av, bv) in arow.iter().zip(b) {
                    s += av * bv;
                }
                out[i] = s;
            }
            Ok((out, vec![m]))
        }
        (1, 2) => {
            let (k, n) = (bsh[0], bsh[1]);
            if ash[0] != k {
                return Err(err(format!("inner dims differ: {ash:?} x {bsh:?}")));
            }
            let mut out = vec![0.0; n];
            for (p, &av) in a.iter().enumerate() {
                let brow = &b[p * n..(p + 1) * n];
                for (o, &bv) in out.iter_mut().zip(brow) {
                    *o += av * bv;
                }
            }
            Ok((out, vec![n]))
        }
        _ => Err(err(format!("unsupported operand ranks: {ash:?} x {bsh:?}"))),
    }
}

fn matmul_backward_a(ga: &mut [f64], dy: &[f64], b: &[f64], ash: &[usize], bsh: &[usize]) {
    match (ash.len(), bsh.len()) {
        (2, 2) => {
            // dA = dY . B^T
            let (m, k, n) = (ash[0], ash[1], bsh[1]);
            for i in 0..m {
                let dyrow = &dy[i * n..(i + 1) * n];
                let garow = &mut ga[i * k..(i + 1) * k];
                for p in 0..k {
                    let brow = &b[p * n..(p + 1) * n];
                    let mut s = 0.0;
                    for (d, bv) in dyrow.iter().zip(brow) {
                        s += d * bv;
                    }
                    garow[p] += s;
                }
            }
        }
        (2, 1) => {
            // y = A.b : dA = dy (outer) b
            let (m, k) = (ash[0], ash[1]);
            for i in 0..m {
                let garow = &mut ga[i * k..(i + 1) * k];
                let d = dy[i];
                for (g, bv) in garow.iter_mut().zip(b) {
                    *g += d * bv;
                }
            }
        }
        (1, 2) => {
            // y = a.B : da_k = sum_j dy_j B_kj
            let (k, n) = (bsh[0], bsh[1]);
            for p in 0..k {
                let brow = &b[p * n..(p + 1) * n];
                let mut s = 0.0;
                for (d, bv) in dy.iter().zip(brow) {
                    s += d * bv;
                }
                ga[p] += s;
            }
        }
        _ => unreachable!(),
    }
}

fn matmul_backward_b(gb: &mut [f64], dy: &[f64], a: &[f64], ash: &[usize], bsh: &[usize]) {
    match (ash.len(), bsh.len()) {
        (2, 2) => {
            // dB = A^T . dY
            let (m, k, n) = (ash[0], ash[1], bsh[1]);
            for i in 0..m {
                let arow = &a[i * k..(i + 1) * k];
                let dyrow = &dy[i * n..(i + 1) * n];
                for (p, &av) in arow.iter().enumerate() {
                    let gbrow = &mut gb[p * n..(p + 1) * n];
                    for (g, d) in gbrow.iter_mut().zip(dyrow) {
                        *g += av * d;
                    }
                }
            }
        }
        (2, 1) => {
            // y = A.b : db = A^T . dy
            let (m, k) = (ash[0], ash[1]);
            for i in 0..m {
                let arow = &a[i * k..(i + 1) * k];
                let d = dy[i];
                for (g, av) in gb.iter_mut().zip(arow) {
                    *g += av * d;
                }
            }
        }
        (1, 2) => {
            // y = a.B : dB_kj = a_k dy_j
            let (k, n) = (bsh[0], bsh[1]);
            for p in 0..k {
                let gbrow = &mut gb[p * n..(p + 1) * n];
                let av = a[p];
                for (g, d) in gbrow.iter_mut().zip(dy) {
                    *g += av * d;
                }
            }
        }
        _ => unreachable!(),
    }
}

fn mul_backward(g: &mut [f64], dy: &[f64], other: &[f64]) {
    if g.len() == dy.len() {
        if other.len() == dy.len() {
            for i in 0..g.len() {
                g[i] += dy[i] * other[i];
            }
        } else {
            // other is the broadcast scalar
            for i in 0..g.len() {
                g[i] += dy[i] * other[0];
            }
        }
    } else {
        // this side is the broadcast scalar
        let mut s = 0.0;
        for i in 0..dy.len() {
            s += dy[i] * other[i];
        }
        g[0] += s;
    }
}

fn elementwise_forward(
    name: &'static str,
    a: &Tensor,
    b: &Tensor,
    mul: bool,
) -> Result<(Vec<f64>, Vec<usize>)> {
    let combine = |x: f64, y: f64| if mul { x * y } else { x + y };
    if a.shape == b.shape {
        let out = a
            .values
            .iter()
            .zip(&b.values)
            .map(|(&x, &y)| combine(x, y))
            .collect();
        Ok((out, a.shape.clone()))
    } else if b.values.len() == 1 {
        let s = b.values[0];
        Ok((
            a.values.iter().map(|&x| combine(x, s)).collect(),
            a.shape.clone(),
        ))
    } else if a.values.len() == 1 {
        let s = a.values[0];
        Ok((
            b.values.iter().map(|&y| combine(s, y)).collect(),
            b.shape.clone(),
        ))
    } else {
        Err(Error::Shape {
            op: name,
            detail: format!("shapes {:?} and {:?} do not match", a.shape, b.shape),
        })
    }
}

// ── gradient checking ───────────────────────────────────────────────────

/// Compare the analytic gradient of `f` at `point` against central finite
/// differences. Returns the max over coordinates of
/// `|analytic - numeric| / max(1e-8, |analytic| + |numeric|)`.
///
/// `f` must build a scalar loss from the supplied leaf; it is re-evaluated
/// `2 * point.len() + 1` times and must be deterministic.
pub fn grad_check<F>(f: F, point: &[f64], shape: &[usize], eps: f64) -> Result<f64>
where
    F: Fn(&mut Tape, TensorId) -> Result<TensorId>,
{
    if eps <= 0.0 {
        return Err(Error::usage("grad_check: eps must be positive"));
    }
    let eval = |values: &[f64], with_grad: bool| -> Result<(f64, Option<Vec<f64>>)> {
        let mut tape = Tape::new();
        let x = if with_grad {
            tape.leaf_grad(values.to_vec(), shape)
        } else {
            tape.leaf(values.to_vec(), shape)
        };
        let loss = f(&mut tape, x)?;
        if numel(tape.shape(loss)) != 1 {
            return Err(Error::usage("grad_check: f must return a scalar"));
        }
        let v = tape.values(loss)[0];
        if with_grad {
            tape.backward(loss)?;
            let g = tape
                .grad(x)
                .map(|g| g.to_vec())
                .unwrap_or_else(|| vec![0.0; values.len()]);
            Ok((v, Some(g)))
        } else {
            Ok((v, None))
        }
    };

    let (_, analytic) = eval(point, true)?;
    let analytic = analytic.unwrap();

    let mut worst = 0.0f64;
    let mut probe = point.to_vec();
    for i in 0..point.len() {
        probe[i] = point[i] + eps;
        let (up, _) = eval(&probe, false)?;
        probe[i] = point[i] - eps;
        let (down, _) = eval(&probe, false)?;
        probe[i] = point[i];
        let numeric = (up - down) / (2.0 * eps);
        let denom = (analytic[i].abs() + numeric.abs()).max(1e-8);
        worst = worst.max((analytic[i] - numeric).abs() / denom);
    }
    Ok(worst)
}
