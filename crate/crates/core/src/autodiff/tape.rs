//! Dynamic reverse-mode tape.
//!
//! Every forward operation appends a node holding its output value and enough
//! context to produce vector-Jacobian products. Nodes are appended in
//! evaluation order, so reverse index order is a valid topological order and
//! [`Tape::backward`] is a single sweep. The tape is consumed by `backward`,
//! which releases the graph and returns the leaf gradients.

use rand::Rng;

use super::kernels;
use super::Tensor;
use crate::error::{contract_err, dim_err, Error, Result};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    Linear { x: Var, w: Var, b: Option<Var> },
    Conv1d { x: Var, w: Var, b: Option<Var>, stride: usize, padding: usize },
    MaxPool1d { x: Var, argmax: Vec<usize> },
    LeakyRelu { x: Var, slope: f64 },
    Relu { x: Var },
    Sigmoid { x: Var },
    Softmax { x: Var },
    Add { a: Var, b: Var },
    Mul { a: Var, b: Var },
    Affine { x: Var, scale: f64 },
    ConcatLast { a: Var, b: Var },
    NarrowLast { x: Var, start: usize },
    Reshape { x: Var },
    BroadcastTokens { x: Var, tokens: usize },
    Bmm { a: Var, b: Var },
    TransposeLast { x: Var },
    MeanLast { x: Var },
    MaxLast { x: Var, argmax: Vec<usize> },
    ScaleRows { x: Var, a: Var },
    LogFloor { x: Var, floor: f64 },
    Sum { x: Var },
    Mean { x: Var },
    WeightedNll { p: Var, target: Tensor, weights: Vec<f64>, floor: f64 },
}

impl Op {
    fn inputs(&self) -> Vec<Var> {
        use Op::*;
        match self {
            Leaf => vec![],
            Linear { x, w, b } | Conv1d { x, w, b, .. } => {
                let mut v = vec![*x, *w];
                v.extend(b.iter().copied());
                v
            }
            MaxPool1d { x, .. }
            | LeakyRelu { x, .. }
            | Relu { x }
            | Sigmoid { x }
            | Softmax { x }
            | Affine { x, .. }
            | NarrowLast { x, .. }
            | Reshape { x }
            | BroadcastTokens { x, .. }
            | TransposeLast { x }
            | MeanLast { x }
            | MaxLast { x, .. }
            | LogFloor { x, .. }
            | Sum { x }
            | Mean { x } => vec![*x],
            WeightedNll { p, .. } => vec![*p],
            Add { a, b } | Mul { a, b } | ConcatLast { a, b } | Bmm { a, b } => vec![*a, *b],
            ScaleRows { x, a } => vec![*x, *a],
        }
    }
}

struct Node {
    value: Tensor,
    requires_grad: bool,
    op: Op,
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients of a scalar with respect to every recorded value that required one.
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&[f64]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }

    /// Gradient for `v`, or zeros of length `len` when `v` received none.
    pub fn take_or_zeros(&mut self, v: Var, len: usize) -> Vec<f64> {
        self.grads.get_mut(v.0).and_then(Option::take).unwrap_or_else(|| vec![0.0; len])
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        let requires_grad = op.inputs().iter().any(|v| self.nodes[v.0].requires_grad);
        self.nodes.push(Node { value, requires_grad, op });
        Var(self.nodes.len() - 1)
    }

    pub fn leaf(&mut self, value: Tensor, requires_grad: bool) -> Var {
        self.nodes.push(Node { value, requires_grad, op: Op::Leaf });
        Var(self.nodes.len() - 1)
    }

    /// Trainable leaf.
    pub fn param(&mut self, value: Tensor) -> Var {
        self.leaf(value, true)
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.leaf(value, false)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    // ---- layers -------------------------------------------------------

    /// `y = x·W + b` for `x:[n,in]`, `W:[in,out]`, `b:[out]`.
    pub fn linear(&mut self, x: Var, w: Var, b: Option<Var>) -> Result<Var> {
        let (xs, ws) = (self.shape(x), self.shape(w));
        if xs.len() != 2 || ws.len() != 2 || xs[1] != ws[0] {
            return Err(dim_err!("linear: input {:?} incompatible with weight {:?}", xs, ws));
        }
        let (n, k, m) = (xs[0], xs[1], ws[1]);
        if let Some(b) = b {
            if self.shape(b) != [m] {
                return Err(dim_err!("linear: bias {:?} does not match output width {m}", self.shape(b)));
            }
        }
        let mut out = vec![0.0; n * m];
        kernels::matmul(self.value(x).data(), self.value(w).data(), &mut out, n, k, m);
        if let Some(b) = b {
            let bias = self.value(b).data();
            for row in out.chunks_mut(m) {
                row.iter_mut().zip(bias).for_each(|(o, b)| *o += b);
            }
        }
        Ok(self.push(Tensor::new(vec![n, m], out)?, Op::Linear { x, w, b }))
    }

    /// Cross-correlation of `x:[batch, ch_in, len]` with `w:[ch_out, ch_in, k]`.
    pub fn conv1d(
        &mut self,
        x: Var,
        w: Var,
        b: Option<Var>,
        stride: usize,
        padding: usize,
    ) -> Result<Var> {
        let (xs, ws) = (self.shape(x).to_vec(), self.shape(w).to_vec());
        let geom = kernels::ConvGeom::new(&xs, &ws, stride, padding)?;
        if let Some(b) = b {
            if self.shape(b) != [geom.c_out] {
                return Err(dim_err!("conv1d: bias {:?} does not match {} output channels", self.shape(b), geom.c_out));
            }
        }
        let bias = b.map(|b| self.value(b).data());
        let out = kernels::conv1d_forward(&geom, self.value(x).data(), self.value(w).data(), bias);
        let shape = vec![geom.batch, geom.c_out, geom.len_out];
        Ok(self.push(Tensor::new(shape, out)?, Op::Conv1d { x, w, b, stride, padding }))
    }

    /// Non-overlapping max pooling over the last axis of `[batch, ch, len]`.
    /// A trailing window shorter than `size` is dropped.
    pub fn maxpool1d(&mut self, x: Var, size: usize) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        if xs.len() != 3 {
            return Err(dim_err!("maxpool1d expects [batch, ch, len], got {:?}", xs));
        }
        if size == 0 || xs[2] < size {
            return Err(dim_err!("maxpool1d: window {size} does not fit length {}", xs[2]));
        }
        let (rows, len) = (xs[0] * xs[1], xs[2]);
        let len_out = len / size;
        let data = self.value(x).data();
        let mut out = Vec::with_capacity(rows * len_out);
        let mut argmax = Vec::with_capacity(rows * len_out);
        for r in 0..rows {
            for t in 0..len_out {
                let start = r * len + t * size;
                let mut best = start;
                for i in start + 1..start + size {
                    if data[i] > data[best] {
                        best = i;
                    }
                }
                out.push(data[best]);
                argmax.push(best);
            }
        }
        let t = Tensor::new(vec![xs[0], xs[1], len_out], out)?;
        Ok(self.push(t, Op::MaxPool1d { x, argmax }))
    }

    // ---- elementwise --------------------------------------------------

    pub fn leaky_relu(&mut self, x: Var, slope: f64) -> Var {
        let t = self.value(x).map(|v| if v > 0.0 { v } else { slope * v });
        self.push(t, Op::LeakyRelu { x, slope })
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let t = self.value(x).map(|v| v.max(0.0));
        self.push(t, Op::Relu { x })
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let t = self.value(x).map(kernels::sigmoid);
        self.push(t, Op::Sigmoid { x })
    }

    /// Softmax over the trailing axis.
    pub fn softmax(&mut self, x: Var) -> Result<Var> {
        let v = self.value(x);
        let n = v.last_dim();
        if n == 0 {
            return Err(dim_err!("softmax over an empty axis"));
        }
        let mut out = v.data().to_vec();
        out.chunks_mut(n).for_each(kernels::softmax_in_place);
        let t = Tensor::new(v.shape().to_vec(), out)?;
        Ok(self.push(t, Op::Softmax { x }))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("add", a, b)?;
        let data = self.value(a).data().iter().zip(self.value(b).data()).map(|(x, y)| x + y).collect();
        let t = Tensor::new(self.shape(a).to_vec(), data)?;
        Ok(self.push(t, Op::Add { a, b }))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("mul", a, b)?;
        let data = self.value(a).data().iter().zip(self.value(b).data()).map(|(x, y)| x * y).collect();
        let t = Tensor::new(self.shape(a).to_vec(), data)?;
        Ok(self.push(t, Op::Mul { a, b }))
    }

    /// `scale·x + shift`.
    pub fn affine(&mut self, x: Var, scale: f64, shift: f64) -> Var {
        let t = self.value(x).map(|v| scale * v + shift);
        self.push(t, Op::Affine { x, scale })
    }

    /// `ln(max(x, floor))`; the gradient is zero where the floor is active.
    pub fn log_floor(&mut self, x: Var, floor: f64) -> Var {
        let t = self.value(x).map(|v| v.max(floor).ln());
        self.push(t, Op::LogFloor { x, floor })
    }

    /// Inverted dropout. The mask is drawn from `rng` and recorded as a constant.
    pub fn dropout<R: Rng>(&mut self, x: Var, p: f64, rng: &mut R) -> Result<Var> {
        if p <= 0.0 {
            return Ok(x);
        }
        if p >= 1.0 {
            return Err(contract_err!("dropout probability {p} must be below 1"));
        }
        let keep = 1.0 / (1.0 - p);
        let shape = self.shape(x).to_vec();
        let mask: Vec<f64> =
            (0..self.value(x).numel()).map(|_| if rng.gen::<f64>() < p { 0.0 } else { keep }).collect();
        let m = self.constant(Tensor::new(shape, mask)?);
        self.mul(x, m)
    }

    // ---- structural ---------------------------------------------------

    /// Concatenation along the trailing axis; leading dimensions must agree.
    pub fn concat_last(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        if sa.len() != sb.len() || sa.is_empty() || sa[..sa.len() - 1] != sb[..sb.len() - 1] {
            return Err(dim_err!("concat: leading dimensions of {:?} and {:?} differ", sa, sb));
        }
        let (na, nb) = (sa[sa.len() - 1], sb[sb.len() - 1]);
        let (da, db) = (self.value(a).data(), self.value(b).data());
        let rows: usize = sa[..sa.len() - 1].iter().product();
        let mut out = Vec::with_capacity(rows * (na + nb));
        for r in 0..rows {
            out.extend_from_slice(&da[r * na..(r + 1) * na]);
            out.extend_from_slice(&db[r * nb..(r + 1) * nb]);
        }
        let mut shape = sa.clone();
        *shape.last_mut().unwrap() = na + nb;
        Ok(self.push(Tensor::new(shape, out)?, Op::ConcatLast { a, b }))
    }

    /// Columns `start..start+len` of the trailing axis.
    pub fn narrow_last(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let s = self.shape(x).to_vec();
        let n = *s.last().ok_or_else(|| dim_err!("narrow on a scalar"))?;
        if start + len > n {
            return Err(dim_err!("narrow {start}..{} exceeds trailing width {n}", start + len));
        }
        let out: Vec<f64> =
            self.value(x).data().chunks(n).flat_map(|row| row[start..start + len].iter().copied()).collect();
        let mut shape = s;
        *shape.last_mut().unwrap() = len;
        Ok(self.push(Tensor::new(shape, out)?, Op::NarrowLast { x, start }))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let t = self.value(x).clone().reshape(shape.to_vec())?;
        Ok(self.push(t, Op::Reshape { x }))
    }

    /// `[batch, c] → [batch, tokens, c]`, repeating each row.
    pub fn broadcast_tokens(&mut self, x: Var, tokens: usize) -> Result<Var> {
        let s = self.shape(x).to_vec();
        if s.len() != 2 {
            return Err(dim_err!("broadcast_tokens expects a matrix, got {:?}", s));
        }
        let mut out = Vec::with_capacity(s[0] * tokens * s[1]);
        for row in self.value(x).data().chunks(s[1].max(1)) {
            for _ in 0..tokens {
                out.extend_from_slice(row);
            }
        }
        Ok(self.push(Tensor::new(vec![s[0], tokens, s[1]], out)?, Op::BroadcastTokens { x, tokens }))
    }

    /// Batched matrix product `[b,m,k]·[b,k,n] → [b,m,n]`.
    pub fn bmm(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        if sa.len() != 3 || sb.len() != 3 || sa[0] != sb[0] || sa[2] != sb[1] {
            return Err(dim_err!("bmm: {:?} incompatible with {:?}", sa, sb));
        }
        let (bs, m, k, n) = (sa[0], sa[1], sa[2], sb[2]);
        let mut out = vec![0.0; bs * m * n];
        let (da, db) = (self.value(a).data(), self.value(b).data());
        for i in 0..bs {
            kernels::matmul(
                &da[i * m * k..(i + 1) * m * k],
                &db[i * k * n..(i + 1) * k * n],
                &mut out[i * m * n..(i + 1) * m * n],
                m,
                k,
                n,
            );
        }
        Ok(self.push(Tensor::new(vec![bs, m, n], out)?, Op::Bmm { a, b }))
    }

    /// Swaps the last two axes of a rank-3 tensor.
    pub fn transpose_last(&mut self, x: Var) -> Result<Var> {
        let s = self.shape(x).to_vec();
        if s.len() != 3 {
            return Err(dim_err!("transpose_last expects rank 3, got {:?}", s));
        }
        let out = kernels::transpose3(self.value(x).data(), s[0], s[1], s[2]);
        Ok(self.push(Tensor::new(vec![s[0], s[2], s[1]], out)?, Op::TransposeLast { x }))
    }

    /// Mean over the trailing axis; the axis is removed.
    pub fn mean_last(&mut self, x: Var) -> Result<Var> {
        let s = self.shape(x).to_vec();
        let n = *s.last().filter(|&&n| n > 0).ok_or_else(|| dim_err!("mean over empty axis {:?}", s))?;
        let out = self.value(x).data().chunks(n).map(|r| r.iter().sum::<f64>() / n as f64).collect();
        Ok(self.push(Tensor::new(s[..s.len() - 1].to_vec(), out)?, Op::MeanLast { x }))
    }

    /// Max over the trailing axis (first maximal index receives the gradient).
    pub fn max_last(&mut self, x: Var) -> Result<Var> {
        let s = self.shape(x).to_vec();
        let n = *s.last().filter(|&&n| n > 0).ok_or_else(|| dim_err!("max over empty axis {:?}", s))?;
        let data = self.value(x).data();
        let mut out = Vec::with_capacity(data.len() / n);
        let mut argmax = Vec::with_capacity(data.len() / n);
        for (r, row) in data.chunks(n).enumerate() {
            let mut best = 0;
            for (i, &v) in row.iter().enumerate().skip(1) {
                if v > row[best] {
                    best = i;
                }
            }
            out.push(row[best]);
            argmax.push(r * n + best);
        }
        Ok(self.push(Tensor::new(s[..s.len() - 1].to_vec(), out)?, Op::MaxLast { x, argmax }))
    }

    /// `x[..., l] · a[...]`: scales each trailing-axis row of `x` by one entry of `a`.
    pub fn scale_rows(&mut self, x: Var, a: Var) -> Result<Var> {
        let (sx, sa) = (self.shape(x).to_vec(), self.shape(a).to_vec());
        if sx.is_empty() || sx[..sx.len() - 1] != sa[..] {
            return Err(dim_err!("scale_rows: {:?} cannot scale {:?}", sa, sx));
        }
        let n = sx[sx.len() - 1];
        let av = self.value(a).data();
        let mut out = self.value(x).data().to_vec();
        if n > 0 {
            for (row, &s) in out.chunks_mut(n).zip(av) {
                row.iter_mut().for_each(|v| *v *= s);
            }
        }
        Ok(self.push(Tensor::new(sx, out)?, Op::ScaleRows { x, a }))
    }

    // ---- reductions and losses ----------------------------------------

    pub fn sum(&mut self, x: Var) -> Var {
        let t = Tensor::scalar(self.value(x).sum());
        self.push(t, Op::Sum { x })
    }

    pub fn mean(&mut self, x: Var) -> Result<Var> {
        let v = self.value(x);
        if v.numel() == 0 {
            return Err(contract_err!("mean of an empty tensor"));
        }
        let t = Tensor::scalar(v.sum() / v.numel() as f64);
        Ok(self.push(t, Op::Mean { x }))
    }

    /// `mean_rows( −Σ_i w_i · y_i · ln max(p_i, floor) )` with `target` held constant.
    pub fn weighted_nll(&mut self, p: Var, target: &Tensor, weights: &[f64], floor: f64) -> Result<Var> {
        let sp = self.shape(p);
        if sp.len() != 2 || sp != target.shape() || sp[1] != weights.len() {
            return Err(dim_err!(
                "weighted_nll: probs {:?}, target {:?}, {} weights",
                sp,
                target.shape(),
                weights.len()
            ));
        }
        let (n, c) = (sp[0], sp[1]);
        if n == 0 {
            return Err(contract_err!("loss over an empty batch"));
        }
        let pv = self.value(p).data();
        let mut total = 0.0;
        for (prow, yrow) in pv.chunks(c).zip(target.data().chunks(c)) {
            for i in 0..c {
                if yrow[i] != 0.0 {
                    total -= weights[i] * yrow[i] * prow[i].max(floor).ln();
                }
            }
        }
        let t = Tensor::scalar(total / n as f64);
        Ok(self.push(t, Op::WeightedNll { p, target: target.clone(), weights: weights.to_vec(), floor }))
    }

    fn same_shape(&self, what: &str, a: Var, b: Var) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return Err(dim_err!("{what}: shapes {:?} and {:?} differ", self.shape(a), self.shape(b)));
        }
        Ok(())
    }

    // ---- reverse sweep ------------------------------------------------

    /// Populates gradients of the scalar `loss` for every value that requires
    /// one, then drops the graph.
    pub fn backward(self, loss: Var) -> Result<Gradients> {
        let nodes = self.nodes;
        let loss_node = nodes.get(loss.0).ok_or_else(|| Error::Internal(format!("{loss:?} is not on this tape")))?;
        if loss_node.value.numel() != 1 {
            return Err(contract_err!("backward needs a scalar loss, got shape {:?}", loss_node.value.shape()));
        }
        if !loss_node.value.item().is_finite() {
            return Err(Error::Numeric(format!("loss is {}", loss_node.value.item())));
        }
        let mut grads: Vec<Option<Vec<f64>>> = (0..nodes.len()).map(|_| None).collect();
        if !loss_node.requires_grad {
            return Ok(Gradients { grads });
        }
        grads[loss.0] = Some(vec![1.0]);

        for id in (0..=loss.0).rev() {
            let node = &nodes[id];
            if !node.requires_grad {
                continue;
            }
            let Some(dy) = grads[id].take() else { continue };
            if let Op::Leaf = node.op {
                grads[id] = Some(dy);
                continue;
            }
            for input in node.op.inputs() {
                if input.0 >= id {
                    return Err(Error::Internal(format!("cycle: node {id} consumes later node {}", input.0)));
                }
            }
            let mut acc = |v: Var, g: Vec<f64>| {
                if !nodes[v.0].requires_grad {
                    return;
                }
                match &mut grads[v.0] {
                    Some(existing) => existing.iter_mut().zip(&g).for_each(|(e, d)| *e += d),
                    slot @ None => *slot = Some(g),
                }
            };
            let val = |v: Var| &nodes[v.0].value;
            let need = |v: Var| nodes[v.0].requires_grad;
            match &node.op {
                Op::Leaf => unreachable!(),
                Op::Linear { x, w, b } => {
                    let (xs, ws) = (val(*x).shape(), val(*w).shape());
                    let (n, k, m) = (xs[0], xs[1], ws[1]);
                    if need(*x) {
                        let mut dx = vec![0.0; n * k];
                        kernels::matmul_bt(&dy, val(*w).data(), &mut dx, n, m, k);
                        acc(*x, dx);
                    }
                    if need(*w) {
                        let mut dw = vec![0.0; k * m];
                        kernels::matmul_at(val(*x).data(), &dy, &mut dw, n, k, m);
                        acc(*w, dw);
                    }
                    if let Some(b) = b {
                        if need(*b) {
                            let mut db = vec![0.0; m];
                            for row in dy.chunks(m) {
                                db.iter_mut().zip(row).for_each(|(d, g)| *d += g);
                            }
                            acc(*b, db);
                        }
                    }
                }
                Op::Conv1d { x, w, b, stride, padding } => {
                    let geom = kernels::ConvGeom::new(val(*x).shape(), val(*w).shape(), *stride, *padding)?;
                    if need(*x) {
                        acc(*x, kernels::conv1d_grad_input(&geom, &dy, val(*w).data()));
                    }
                    if need(*w) {
                        acc(*w, kernels::conv1d_grad_weight(&geom, &dy, val(*x).data()));
                    }
                    if let Some(b) = b {
                        if need(*b) {
                            acc(*b, kernels::conv1d_grad_bias(&geom, &dy));
                        }
                    }
                }
                Op::MaxPool1d { x, argmax } => {
                    let mut dx = vec![0.0; val(*x).numel()];
                    for (g, &i) in dy.iter().zip(argmax) {
                        dx[i] += g;
                    }
                    acc(*x, dx);
                }
                Op::LeakyRelu { x, slope } => {
                    let dx = val(*x).data().iter().zip(&dy).map(|(&v, &g)| if v > 0.0 { g } else { slope * g }).collect();
                    acc(*x, dx);
                }
                Op::Relu { x } => {
                    let dx = val(*x).data().iter().zip(&dy).map(|(&v, &g)| if v > 0.0 { g } else { 0.0 }).collect();
                    acc(*x, dx);
                }
                Op::Sigmoid { x } => {
                    let dx = node.value.data().iter().zip(&dy).map(|(&y, &g)| g * y * (1.0 - y)).collect();
                    acc(*x, dx);
                }
                Op::Softmax { x } => {
                    let n = node.value.last_dim();
                    let mut dx = vec![0.0; dy.len()];
                    for ((y, g), d) in node.value.data().chunks(n).zip(dy.chunks(n)).zip(dx.chunks_mut(n)) {
                        let dot: f64 = y.iter().zip(g).map(|(a, b)| a * b).sum();
                        for i in 0..n {
                            d[i] = y[i] * (g[i] - dot);
                        }
                    }
                    acc(*x, dx);
                }
                Op::Add { a, b } => {
                    acc(*b, dy.clone());
                    acc(*a, dy);
                }
                Op::Mul { a, b } => {
                    if need(*a) {
                        acc(*a, dy.iter().zip(val(*b).data()).map(|(g, v)| g * v).collect());
                    }
                    if need(*b) {
                        acc(*b, dy.iter().zip(val(*a).data()).map(|(g, v)| g * v).collect());
                    }
                }
                Op::Affine { x, scale } => {
                    acc(*x, dy.iter().map(|g| g * scale).collect());
                }
                Op::ConcatLast { a, b } => {
                    let (na, nb) = (val(*a).last_dim(), val(*b).last_dim());
                    let rows: usize = node.value.shape()[..node.value.rank() - 1].iter().product();
                    let mut da = Vec::with_capacity(rows * na);
                    let mut db = Vec::with_capacity(rows * nb);
                    for r in 0..rows {
                        let row = &dy[r * (na + nb)..(r + 1) * (na + nb)];
                        da.extend_from_slice(&row[..na]);
                        db.extend_from_slice(&row[na..]);
                    }
                    acc(*a, da);
                    acc(*b, db);
                }
                Op::NarrowLast { x, start } => {
                    let n = val(*x).last_dim();
                    let len = node.value.last_dim();
                    let mut dx = vec![0.0; val(*x).numel()];
                    if len > 0 {
                        for (r, g) in dy.chunks(len).enumerate() {
                            dx[r * n + start..r * n + start + len].copy_from_slice(g);
                        }
                    }
                    acc(*x, dx);
                }
                Op::Reshape { x } => acc(*x, dy),
                Op::BroadcastTokens { x, tokens } => {
                    let c = val(*x).last_dim();
                    let mut dx = vec![0.0; val(*x).numel()];
                    if c > 0 {
                        for (r, d) in dx.chunks_mut(c).enumerate() {
                            for t in 0..*tokens {
                                let g = &dy[(r * tokens + t) * c..(r * tokens + t + 1) * c];
                                d.iter_mut().zip(g).for_each(|(a, b)| *a += b);
                            }
                        }
                    }
                    acc(*x, dx);
                }
                Op::Bmm { a, b } => {
                    let (sa, sb) = (val(*a).shape(), val(*b).shape());
                    let (bs, m, k, n) = (sa[0], sa[1], sa[2], sb[2]);
                    if need(*a) {
                        let mut da = vec![0.0; bs * m * k];
                        for i in 0..bs {
                            kernels::matmul_bt(
                                &dy[i * m * n..(i + 1) * m * n],
                                &val(*b).data()[i * k * n..(i + 1) * k * n],
                                &mut da[i * m * k..(i + 1) * m * k],
                                m,
                                n,
                                k,
                            );
                        }
                        acc(*a, da);
                    }
                    if need(*b) {
                        let mut db = vec![0.0; bs * k * n];
                        for i in 0..bs {
                            kernels::matmul_at(
                                &val(*a).data()[i * m * k..(i + 1) * m * k],
                                &dy[i * m * n..(i + 1) * m * n],
                                &mut db[i * k * n..(i + 1) * k * n],
                                m,
                                k,
                                n,
                            );
                        }
                        acc(*b, db);
                    }
                }
                Op::TransposeLast { x } => {
                    let s = node.value.shape();
                    acc(*x, kernels::transpose3(&dy, s[0], s[1], s[2]));
                }
                Op::MeanLast { x } => {
                    let n = val(*x).last_dim();
                    let dx = dy.iter().flat_map(|&g| std::iter::repeat(g / n as f64).take(n)).collect();
                    acc(*x, dx);
                }
                Op::MaxLast { x, argmax } => {
                    let mut dx = vec![0.0; val(*x).numel()];
                    for (g, &i) in dy.iter().zip(argmax) {
                        dx[i] += g;
                    }
                    acc(*x, dx);
                }
                Op::ScaleRows { x, a } => {
                    let n = val(*x).last_dim();
                    let av = val(*a).data();
                    if need(*x) {
                        let mut dx = dy.clone();
                        if n > 0 {
                            for (row, &s) in dx.chunks_mut(n).zip(av) {
                                row.iter_mut().for_each(|v| *v *= s);
                            }
                        }
                        acc(*x, dx);
                    }
                    if need(*a) {
                        let da = if n == 0 {
                            vec![0.0; av.len()]
                        } else {
                            dy.chunks(n)
                                .zip(val(*x).data().chunks(n))
                                .map(|(g, v)| g.iter().zip(v).map(|(a, b)| a * b).sum())
                                .collect()
                        };
                        acc(*a, da);
                    }
                }
                Op::LogFloor { x, floor } => {
                    let dx = val(*x).data().iter().zip(&dy).map(|(&v, &g)| if v > *floor { g / v } else { 0.0 }).collect();
                    acc(*x, dx);
                }
                Op::Sum { x } => acc(*x, vec![dy[0]; val(*x).numel()]),
                Op::Mean { x } => {
                    let n = val(*x).numel();
                    acc(*x, vec![dy[0] / n as f64; n]);
                }
                Op::WeightedNll { p, target, weights, floor } => {
                    let pv = val(*p);
                    let (n, c) = (pv.shape()[0], pv.shape()[1]);
                    let scale = dy[0] / n as f64;
                    let mut dp = vec![0.0; n * c];
                    for (idx, (&pi, &yi)) in pv.data().iter().zip(target.data()).enumerate() {
                        if yi != 0.0 && pi > *floor {
                            dp[idx] = -scale * weights[idx % c] * yi / pi;
                        }
                    }
                    acc(*p, dp);
                }
            }
        }

        for (id, g) in grads.iter().enumerate() {
            if let Some(g) = g {
                if g.iter().any(|v| !v.is_finite()) {
                    return Err(Error::Numeric(format!("non-finite gradient at node {id}")));
                }
            }
        }
        Ok(Gradients { grads })
    }
}
