//! Minimal dense reverse-mode automatic differentiation over 64-bit reals.
//!
//! All values are row-major matrices (`rows x cols`); scalars are 1x1 and
//! per-point label vectors are Nx1. A [`Tape`] records every executed
//! primitive in topological order; [`Tape::backward`] replays it in
//! reverse, accumulating exact vector-Jacobian products. No operation
//! mutates its inputs.

mod losses;

use crate::error::{CsError, Result};

/// A plain dense matrix of f64, used to hold parameters and constants
/// outside any tape.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Tensor {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Tensor> {
        if data.len() != rows * cols {
            return Err(CsError::shape(format!(
                "tensor data length {} != {}x{}",
                data.len(),
                rows,
                cols
            )));
        }
        Ok(Tensor { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Tensor {
        Tensor {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }
}

/// Handle to a value on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Value(usize);

pub(crate) enum Op {
    Leaf,
    Add(Value, Value),
    Sub(Value, Value),
    Mul(Value, Value),
    ScalarMul(Value, f64),
    MatMul(Value, Value),
    Relu(Value),
    Sigmoid(Value),
    Tanh(Value),
    Concat { axis: usize, inputs: Vec<Value> },
    ReduceMax { input: Value, argmax: Vec<usize> },
    ReduceMean { input: Value, axis: usize },
    Repeat { input: Value, axis: usize },
    GatherRows { input: Value, indices: Vec<usize> },
    Reshape(Value),
    SumAll(Value),
    ChamferLoss { pred: Value, gt: Vec<[f64; 3]>, pred_match: Vec<usize>, gt_match: Vec<usize> },
    BceLoss { pred: Value, gt: Vec<f64> },
}

struct Node {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
    requires_grad: bool,
    op: Op,
}

/// Records primitives in execution order; inputs always precede outputs.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Tape {
        Tape::default()
    }

    fn push(&mut self, rows: usize, cols: usize, data: Vec<f64>, requires_grad: bool, op: Op) -> Value {
        debug_assert_eq!(data.len(), rows * cols);
        self.nodes.push(Node {
            rows,
            cols,
            data,
            requires_grad,
            op,
        });
        Value(self.nodes.len() - 1)
    }

    fn needs_grad(&self, v: Value) -> bool {
        self.nodes[v.0].requires_grad
    }

    pub fn leaf(&mut self, rows: usize, cols: usize, data: Vec<f64>, requires_grad: bool) -> Result<Value> {
        if data.len() != rows * cols {
            return Err(CsError::shape(format!(
                "leaf data length {} != {}x{}",
                data.len(),
                rows,
                cols
            )));
        }
        Ok(self.push(rows, cols, data, requires_grad, Op::Leaf))
    }

    pub fn leaf_tensor(&mut self, t: &Tensor, requires_grad: bool) -> Value {
        self.push(t.rows, t.cols, t.data.clone(), requires_grad, Op::Leaf)
    }

    /// Constant Nx3 leaf from point coordinates.
    pub fn leaf_points(&mut self, points: &[[f64; 3]], requires_grad: bool) -> Value {
        let data: Vec<f64> = points.iter().flatten().cloned().collect();
        self.push(points.len(), 3, data, requires_grad, Op::Leaf)
    }

    pub fn shape(&self, v: Value) -> (usize, usize) {
        let n = &self.nodes[v.0];
        (n.rows, n.cols)
    }

    pub fn value(&self, v: Value) -> &[f64] {
        &self.nodes[v.0].data
    }

    /// Copy of an Nx3 value as points (shape must have 3 columns).
    pub fn points(&self, v: Value) -> Result<Vec<[f64; 3]>> {
        let n = &self.nodes[v.0];
        if n.cols != 3 {
            return Err(CsError::shape(format!(
                "expected 3 columns for points, got {}",
                n.cols
            )));
        }
        Ok(n.data.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect())
    }

    fn binary_same_shape(&mut self, a: Value, b: Value, op_name: &str) -> Result<(usize, usize)> {
        let (ra, ca) = self.shape(a);
        let (rb, cb) = self.shape(b);
        if (ra, ca) != (rb, cb) {
            return Err(CsError::shape(format!(
                "{}: {}x{} vs {}x{}",
                op_name, ra, ca, rb, cb
            )));
        }
        Ok((ra, ca))
    }

    pub fn add(&mut self, a: Value, b: Value) -> Result<Value> {
        let (r, c) = self.binary_same_shape(a, b, "add")?;
        let data: Vec<f64> = self.nodes[a.0]
            .data
            .iter()
            .zip(&self.nodes[b.0].data)
            .map(|(x, y)| x + y)
            .collect();
        let rg = self.needs_grad(a) || self.needs_grad(b);
        Ok(self.push(r, c, data, rg, Op::Add(a, b)))
    }

    pub fn sub(&mut self, a: Value, b: Value) -> Result<Value> {
        let (r, c) = self.binary_same_shape(a, b, "sub")?;
        let data: Vec<f64> = self.nodes[a.0]
            .data
            .iter()
            .zip(&self.nodes[b.0].data)
            .map(|(x, y)| x - y)
            .collect();
        let rg = self.needs_grad(a) || self.needs_grad(b);
        Ok(self.push(r, c, data, rg, Op::Sub(a, b)))
    }

    pub fn mul(&mut self, a: Value, b: Value) -> Result<Value> {
        let (r, c) = self.binary_same_shape(a, b, "mul")?;
        let data: Vec<f64> = self.nodes[a.0]
            .data
            .iter()
            .zip(&self.nodes[b.0].data)
            .map(|(x, y)| x * y)
            .collect();
        let rg = self.needs_grad(a) || self.needs_grad(b);
        Ok(self.push(r, c, data, rg, Op::Mul(a, b)))
    }

    pub fn scalar_mul(&mut self, a: Value, s: f64) -> Value {
        let (r, c) = self.shape(a);
        let data: Vec<f64> = self.nodes[a.0].data.iter().map(|x| x * s).collect();
        let rg = self.needs_grad(a);
        self.push(r, c, data, rg, Op::ScalarMul(a, s))
    }

    pub fn matmul(&mut self, a: Value, b: Value) -> Result<Value> {
        let (ra, ca) = self.shape(a);
        let (rb, cb) = self.shape(b);
        if ca != rb {
            return Err(CsError::shape(format!(
                "matmul: {}x{} . {}x{}",
                ra, ca, rb, cb
            )));
        }
        let mut data = vec![0.0; ra * cb];
        {
            let ad = &self.nodes[a.0].data;
            let bd = &self.nodes[b.0].data;
            for i in 0..ra {
                for k in 0..ca {
                    let av = ad[i * ca + k];
                    if av == 0.0 {
                        continue;
                    }
                    let brow = &bd[k * cb..(k + 1) * cb];
                    let orow = &mut data[i * cb..(i + 1) * cb];
                    for (o, &bv) in orow.iter_mut().zip(brow) {
                        *o += av * bv;
                    }
                }
            }
        }
        let rg = self.needs_grad(a) || self.needs_grad(b);
        Ok(self.push(ra, cb, data, rg, Op::MatMul(a, b)))
    }

    pub fn relu(&mut self, a: Value) -> Value {
        let (r, c) = self.shape(a);
        let data: Vec<f64> = self.nodes[a.0].data.iter().map(|&x| x.max(0.0)).collect();
        let rg = self.needs_grad(a);
        self.push(r, c, data, rg, Op::Relu(a))
    }

    pub fn sigmoid(&mut self, a: Value) -> Value {
        let (r, c) = self.shape(a);
        let data: Vec<f64> = self.nodes[a.0]
            .data
            .iter()
            .map(|&x| 1.0 / (1.0 + (-x).exp()))
            .collect();
        let rg = self.needs_grad(a);
        self.push(r, c, data, rg, Op::Sigmoid(a))
    }

    pub fn tanh(&mut self, a: Value) -> Value {
        let (r, c) = self.shape(a);
        let data: Vec<f64> = self.nodes[a.0].data.iter().map(|&x| x.tanh()).collect();
        let rg = self.needs_grad(a);
        self.push(r, c, data, rg, Op::Tanh(a))
    }

    /// Concatenate along `axis` (0: stack rows, 1: join columns).
    pub fn concat(&mut self, axis: usize, inputs: &[Value]) -> Result<Value> {
        if inputs.is_empty() {
            return Err(CsError::invalid("concat: no inputs"));
        }
        if axis > 1 {
            return Err(CsError::invalid("concat: axis must be 0 or 1"));
        }
        let (r0, c0) = self.shape(inputs[0]);
        let (mut rows, mut cols) = (r0, c0);
        for &v in &inputs[1..] {
            let (r, c) = self.shape(v);
            if axis == 0 {
                if c != c0 {
                    return Err(CsError::shape(format!("concat axis 0: cols {} vs {}", c, c0)));
                }
                rows += r;
            } else {
                if r != r0 {
                    return Err(CsError::shape(format!("concat axis 1: rows {} vs {}", r, r0)));
                }
                cols += c;
            }
        }
        let mut data = Vec::with_capacity(rows * cols);
        if axis == 0 {
            for &v in inputs {
                data.extend_from_slice(&self.nodes[v.0].data);
            }
        } else {
            for row in 0..rows {
                for &v in inputs {
                    let (_, c) = self.shape(v);
                    let d = &self.nodes[v.0].data;
                    data.extend_from_slice(&d[row * c..(row + 1) * c]);
                }
            }
        }
        let rg = inputs.iter().any(|&v| self.needs_grad(v));
        Ok(self.push(rows, cols, data, rg, Op::Concat { axis, inputs: inputs.to_vec() }))
    }

    /// Max over `axis` with keepdim semantics ([N,C] -> [1,C] for axis 0).
    /// Gradient routes to the first index attaining the max in each slice.
    pub fn reduce_max(&mut self, a: Value, axis: usize) -> Result<Value> {
        let (r, c) = self.shape(a);
        if axis > 1 {
            return Err(CsError::invalid("reduce_max: axis must be 0 or 1"));
        }
        let d = &self.nodes[a.0].data;
        let (or, oc) = if axis == 0 { (1, c) } else { (r, 1) };
        let mut data = vec![f64::NEG_INFINITY; or * oc];
        let mut argmax = vec![0usize; or * oc];
        for i in 0..r {
            for j in 0..c {
                let out_idx = if axis == 0 { j } else { i };
                let v = d[i * c + j];
                if v > data[out_idx] {
                    data[out_idx] = v;
                    argmax[out_idx] = i * c + j;
                }
            }
        }
        let rg = self.needs_grad(a);
        Ok(self.push(or, oc, data, rg, Op::ReduceMax { input: a, argmax }))
    }

    /// Mean over `axis` with keepdim semantics.
    pub fn reduce_mean(&mut self, a: Value, axis: usize) -> Result<Value> {
        let (r, c) = self.shape(a);
        if axis > 1 {
            return Err(CsError::invalid("reduce_mean: axis must be 0 or 1"));
        }
        let d = &self.nodes[a.0].data;
        let (or, oc) = if axis == 0 { (1, c) } else { (r, 1) };
        let mut data = vec![0.0; or * oc];
        for i in 0..r {
            for j in 0..c {
                let out_idx = if axis == 0 { j } else { i };
                data[out_idx] += d[i * c + j];
            }
        }
        let denom = if axis == 0 { r } else { c } as f64;
        for v in &mut data {
            *v /= denom;
        }
        let rg = self.needs_grad(a);
        Ok(self.push(or, oc, data, rg, Op::ReduceMean { input: a, axis }))
    }

    /// Tile `times` copies along `axis`: [1,C] -> [N,C] or [N,1] -> [N,C].
    pub fn broadcast_repeat(&mut self, a: Value, axis: usize, times: usize) -> Result<Value> {
        let (r, c) = self.shape(a);
        if axis > 1 {
            return Err(CsError::invalid("broadcast_repeat: axis must be 0 or 1"));
        }
        if times == 0 {
            return Err(CsError::invalid("broadcast_repeat: times must be >= 1"));
        }
        let d = &self.nodes[a.0].data;
        let (or, oc) = if axis == 0 { (r * times, c) } else { (r, c * times) };
        let mut data = Vec::with_capacity(or * oc);
        if axis == 0 {
            for _ in 0..times {
                data.extend_from_slice(d);
            }
        } else {
            for i in 0..r {
                let row = &d[i * c..(i + 1) * c];
                for _ in 0..times {
                    data.extend_from_slice(row);
                }
            }
        }
        let rg = self.needs_grad(a);
        Ok(self.push(or, oc, data, rg, Op::Repeat { input: a, axis }))
    }

    /// Select rows by index; gradient scatters additively back to the
    /// source rows (this is how gradients flow through FPS and KNN
    /// index selection).
    pub fn gather_rows(&mut self, a: Value, indices: &[usize]) -> Result<Value> {
        let (r, c) = self.shape(a);
        let mut data = Vec::with_capacity(indices.len() * c);
        for &i in indices {
            if i >= r {
                return Err(CsError::invalid(format!(
                    "gather_rows: index {} out of range for {} rows",
                    i, r
                )));
            }
            data.extend_from_slice(&self.nodes[a.0].data[i * c..(i + 1) * c]);
        }
        let rg = self.needs_grad(a);
        Ok(self.push(
            indices.len(),
            c,
            data,
            rg,
            Op::GatherRows { input: a, indices: indices.to_vec() },
        ))
    }

    /// Row-major reinterpretation to a new shape with the same element count.
    pub fn reshape(&mut self, a: Value, rows: usize, cols: usize) -> Result<Value> {
        let (r, c) = self.shape(a);
        if r * c != rows * cols {
            return Err(CsError::shape(format!(
                "reshape: {}x{} -> {}x{}",
                r, c, rows, cols
            )));
        }
        let data = self.nodes[a.0].data.clone();
        let rg = self.needs_grad(a);
        Ok(self.push(rows, cols, data, rg, Op::Reshape(a)))
    }

    /// Sum of all elements, producing a 1x1 scalar.
    pub fn sum_all(&mut self, a: Value) -> Value {
        let s: f64 = self.nodes[a.0].data.iter().sum();
        let rg = self.needs_grad(a);
        self.push(1, 1, vec![s], rg, Op::SumAll(a))
    }

    pub fn scalar(&self, v: Value) -> Result<f64> {
        let n = &self.nodes[v.0];
        if n.rows * n.cols != 1 {
            return Err(CsError::invalid(format!(
                "expected scalar, got {}x{}",
                n.rows, n.cols
            )));
        }
        Ok(n.data[0])
    }

    /// Populates gradients of `loss` (a 1x1 scalar) with respect to every
    /// value reachable on the tape. Returns the gradient table; use
    /// [`Tape::grad`] to read individual entries.
    pub fn backward(&self, loss: Value) -> Result<Gradients> {
        let n = &self.nodes[loss.0];
        if n.rows * n.cols != 1 {
            return Err(CsError::invalid(format!(
                "backward: loss must be scalar, got {}x{}",
                n.rows, n.cols
            )));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(vec![1.0]);
        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            self.accumulate(idx, &g, &mut grads);
            grads[idx] = Some(g);
        }
        Ok(Gradients { grads })
    }

    fn add_grad(&self, grads: &mut [Option<Vec<f64>>], v: Value, contrib: impl FnOnce(&mut [f64])) {
        if !self.needs_grad(v) {
            return;
        }
        let node = &self.nodes[v.0];
        let g = grads[v.0].get_or_insert_with(|| vec![0.0; node.rows * node.cols]);
        contrib(g);
    }

    fn accumulate(&self, idx: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let node = &self.nodes[idx];
        match &node.op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                self.add_grad(grads, *a, |ga| {
                    for (x, y) in ga.iter_mut().zip(g) {
                        *x += y;
                    }
                });
                self.add_grad(grads, *b, |gb| {
                    for (x, y) in gb.iter_mut().zip(g) {
                        *x += y;
                    }
                });
            }
            Op::Sub(a, b) => {
                self.add_grad(grads, *a, |ga| {
                    for (x, y) in ga.iter_mut().zip(g) {
                        *x += y;
                    }
                });
                self.add_grad(grads, *b, |gb| {
                    for (x, y) in gb.iter_mut().zip(g) {
                        *x -= y;
                    }
                });
            }
            Op::Mul(a, b) => {
                let bd = &self.nodes[b.0].data;
                self.add_grad(grads, *a, |ga| {
                    for ((x, y), z) in ga.iter_mut().zip(g).zip(bd) {
                        *x += y * z;
                    }
                });
                let ad = &self.nodes[a.0].data;
                self.add_grad(grads, *b, |gb| {
                    for ((x, y), z) in gb.iter_mut().zip(g).zip(ad) {
                        *x += y * z;
                    }
                });
            }
            Op::ScalarMul(a, s) => {
                let s = *s;
                self.add_grad(grads, *a, |ga| {
                    for (x, y) in ga.iter_mut().zip(g) {
                        *x += y * s;
                    }
                });
            }
            Op::MatMul(a, b) => {
                let (ra, ca) = (self.nodes[a.0].rows, self.nodes[a.0].cols);
                let cb = self.nodes[b.0].cols;
                let ad = &self.nodes[a.0].data;
                let bd = &self.nodes[b.0].data;
                // dA = g . B^T
                self.add_grad(grads, *a, |ga| {
                    for i in 0..ra {
                        for k in 0..ca {
                            let mut acc = 0.0;
                            for j in 0..cb {
                                acc += g[i * cb + j] * bd[k * cb + j];
                            }
                            ga[i * ca + k] += acc;
                        }
                    }
                });
                // dB = A^T . g
                self.add_grad(grads, *b, |gb| {
                    for k in 0..ca {
                        for j in 0..cb {
                            let mut acc = 0.0;
                            for i in 0..ra {
                                acc += ad[i * ca + k] * g[i * cb + j];
                            }
                            gb[k * cb + j] += acc;
                        }
                    }
                });
            }
            Op::Relu(a) => {
                let ad = &self.nodes[a.0].data;
                self.add_grad(grads, *a, |ga| {
                    for ((x, y), &v) in ga.iter_mut().zip(g).zip(ad) {
                        if v > 0.0 {
                            *x += y;
                        }
                    }
                });
            }
            Op::Sigmoid(a) => {
                let out = &node.data;
                self.add_grad(grads, *a, |ga| {
                    for ((x, y), &s) in ga.iter_mut().zip(g).zip(out) {
                        *x += y * s * (1.0 - s);
                    }
                });
            }
            Op::Tanh(a) => {
                let out = &node.data;
                self.add_grad(grads, *a, |ga| {
                    for ((x, y), &t) in ga.iter_mut().zip(g).zip(out) {
                        *x += y * (1.0 - t * t);
                    }
                });
            }
            Op::Concat { axis, inputs } => {
                if *axis == 0 {
                    let mut offset = 0;
                    for &v in inputs {
                        let len = self.nodes[v.0].data.len();
                        self.add_grad(grads, v, |gv| {
                            for (x, y) in gv.iter_mut().zip(&g[offset..offset + len]) {
                                *x += y;
                            }
                        });
                        offset += len;
                    }
                } else {
                    let rows = node.rows;
                    let total_cols = node.cols;
                    let mut col_offset = 0;
                    for &v in inputs {
                        let c = self.nodes[v.0].cols;
                        self.add_grad(grads, v, |gv| {
                            for i in 0..rows {
                                for j in 0..c {
                                    gv[i * c + j] += g[i * total_cols + col_offset + j];
                                }
                            }
                        });
                        col_offset += c;
                    }
                }
            }
            Op::ReduceMax { input, argmax, .. } => {
                self.add_grad(grads, *input, |gi| {
                    for (out_idx, &src) in argmax.iter().enumerate() {
                        gi[src] += g[out_idx];
                    }
                });
            }
            Op::ReduceMean { input, axis } => {
                let (r, c) = (self.nodes[input.0].rows, self.nodes[input.0].cols);
                let denom = if *axis == 0 { r } else { c } as f64;
                let axis = *axis;
                self.add_grad(grads, *input, |gi| {
                    for i in 0..r {
                        for j in 0..c {
                            let out_idx = if axis == 0 { j } else { i };
                            gi[i * c + j] += g[out_idx] / denom;
                        }
                    }
                });
            }
            Op::Repeat { input, axis } => {
                let (r, c) = (self.nodes[input.0].rows, self.nodes[input.0].cols);
                let (or, oc) = (node.rows, node.cols);
                let axis = *axis;
                self.add_grad(grads, *input, |gi| {
                    for i in 0..or {
                        for j in 0..oc {
                            let (si, sj) = if axis == 0 { (i % r, j) } else { (i, j % c) };
                            gi[si * c + sj] += g[i * oc + j];
                        }
                    }
                });
            }
            Op::GatherRows { input, indices } => {
                let c = self.nodes[input.0].cols;
                self.add_grad(grads, *input, |gi| {
                    for (out_row, &src) in indices.iter().enumerate() {
                        for j in 0..c {
                            gi[src * c + j] += g[out_row * c + j];
                        }
                    }
                });
            }
            Op::Reshape(a) => {
                self.add_grad(grads, *a, |ga| {
                    for (x, y) in ga.iter_mut().zip(g) {
                        *x += y;
                    }
                });
            }
            Op::SumAll(a) => {
                self.add_grad(grads, *a, |ga| {
                    for x in ga.iter_mut() {
                        *x += g[0];
                    }
                });
            }
            Op::ChamferLoss { pred, gt, pred_match, gt_match } => {
                losses::chamfer_backward(self, *pred, gt, pred_match, gt_match, g[0], grads);
            }
            Op::BceLoss { pred, gt } => {
                losses::bce_backward(self, *pred, gt, g[0], grads);
            }
        }
    }

    pub fn chamfer_loss(&mut self, pred: Value, gt: &[[f64; 3]]) -> Result<Value> {
        losses::chamfer_loss(self, pred, gt)
    }

    pub fn bce_loss(&mut self, pred: Value, gt: &[f64]) -> Result<Value> {
        losses::bce_loss(self, pred, gt)
    }

    pub(crate) fn push_loss(&mut self, value: f64, requires_grad: bool, op: Op) -> Value {
        self.push(1, 1, vec![value], requires_grad, op)
    }
}

/// Gradient table produced by [`Tape::backward`].
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
}

impl Gradients {
    /// Gradient of the loss w.r.t. `v`, zeros if the value was never
    /// touched by the backward pass.
    pub fn get(&self, tape: &Tape, v: Value) -> Vec<f64> {
        let (r, c) = tape.shape(v);
        match &self.grads[v.0] {
            Some(g) => g.clone(),
            None => vec![0.0; r * c],
        }
    }
}
