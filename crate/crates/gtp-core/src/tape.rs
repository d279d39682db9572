//! Reverse-mode differentiation over a linear operation tape.
//!
//! Forward calls record each operation together with its input node ids; the
//! backward pass replays the tape in exact reverse execution order and
//! accumulates gradients into per-node buffers. Accumulation order is fixed
//! by tape order, so repeated runs are bitwise identical.

use alloc::vec;
use alloc::vec::Vec;

use crate::math;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct TensorId(pub(crate) usize);

/// Probability floor applied before logs in the pointer loss.
pub const PROB_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone)]
enum Op {
    /// Input or parameter; no backward rule.
    Leaf,
    Matmul(TensorId, TensorId),
    Add(TensorId, TensorId),
    /// Matrix plus a 1×c row vector broadcast over rows.
    AddRow(TensorId, TensorId),
    Mul(TensorId, TensorId),
    /// alpha * x + beta, elementwise; only alpha matters for the backward.
    Affine(TensorId, f64),
    Sigmoid(TensorId),
    Tanh(TensorId),
    Relu(TensorId),
    Transpose(TensorId),
    ConcatCols(TensorId, TensorId),
    /// Stack 1×c rows into an n×c matrix.
    StackRows(Vec<TensorId>),
    Row(TensorId, usize),
    /// Row-wise softmax of scale·x.
    SoftmaxRows(TensorId, f64),
    /// Softmax over active slots of a 1×L vector; inactive slots exactly 0.
    MaskedSoftmax(TensorId, Vec<bool>),
    /// x, gain (1×d), bias (1×d), eps; normalization per row.
    LayerNormRows(TensorId, TensorId, TensorId, f64),
    MeanRows(TensorId),
    /// -ln(max(x[idx], PROB_FLOOR)) for a 1×L probability vector.
    NegLogPick(TensorId, usize),
    /// Summed binary cross entropy of n×1 logits against 0/1 targets.
    BceWithLogits(TensorId, Vec<f64>),
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::Matmul(..) => "matmul",
            Op::Add(..) => "add",
            Op::AddRow(..) => "add_row",
            Op::Mul(..) => "mul",
            Op::Affine(..) => "affine",
            Op::Sigmoid(..) => "sigmoid",
            Op::Tanh(..) => "tanh",
            Op::Relu(..) => "relu",
            Op::Transpose(..) => "transpose",
            Op::ConcatCols(..) => "concat_cols",
            Op::StackRows(..) => "stack_rows",
            Op::Row(..) => "row",
            Op::SoftmaxRows(..) => "softmax_rows",
            Op::MaskedSoftmax(..) => "masked_softmax",
            Op::LayerNormRows(..) => "layer_norm_rows",
            Op::MeanRows(..) => "mean_rows",
            Op::NegLogPick(..) => "neg_log_pick",
            Op::BceWithLogits(..) => "bce_with_logits",
        }
    }
}

struct Node {
    value: Tensor,
    op: Op,
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
    grads: Vec<Option<Tensor>>,
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    fn push(&mut self, value: Tensor, op: Op) -> TensorId {
        debug_assert!(value.all_finite(), "non-finite output of {}", op.name());
        self.nodes.push(Node { value, op });
        self.grads.push(None);
        TensorId(self.nodes.len() - 1)
    }

    pub fn leaf(&mut self, value: Tensor) -> TensorId {
        self.push(value, Op::Leaf)
    }

    pub fn value(&self, id: TensorId) -> &Tensor {
        &self.nodes[id.0].value
    }

    /// Gradient accumulated for `id`; zeros if the node was never reached.
    pub fn grad(&self, id: TensorId) -> Tensor {
        match &self.grads[id.0] {
            Some(g) => g.clone(),
            None => {
                let v = &self.nodes[id.0].value;
                Tensor::zeros(v.rows(), v.cols())
            }
        }
    }

    /// First node holding a non-finite value, with the producing op name.
    pub fn first_nonfinite(&self) -> Option<(usize, &'static str)> {
        self.nodes
            .iter()
            .enumerate()
            .find(|(_, n)| !n.value.all_finite())
            .map(|(i, n)| (i, n.op.name()))
    }

    // ---- forward builders ------------------------------------------------

    pub fn matmul(&mut self, a: TensorId, b: TensorId) -> TensorId {
        let z = self.nodes[a.0].value.matmul(&self.nodes[b.0].value).expect("matmul shapes");
        self.push(z, Op::Matmul(a, b))
    }

    pub fn add(&mut self, a: TensorId, b: TensorId) -> TensorId {
        let z = self.nodes[a.0].value.add(&self.nodes[b.0].value).expect("add shapes");
        self.push(z, Op::Add(a, b))
    }

    /// `m + r` with `r` a 1×c row vector added to every row of `m`.
    pub fn add_row(&mut self, m: TensorId, r: TensorId) -> TensorId {
        let (mv, rv) = (&self.nodes[m.0].value, &self.nodes[r.0].value);
        assert_eq!(rv.rows(), 1, "broadcast operand must be a row vector");
        assert_eq!(mv.cols(), rv.cols(), "add_row column mismatch");
        let mut z = mv.clone();
        for row in 0..z.rows() {
            for c in 0..z.cols() {
                let v = z.get(row, c) + rv.get(0, c);
                z.set(row, c, v);
            }
        }
        self.push(z, Op::AddRow(m, r))
    }

    pub fn mul(&mut self, a: TensorId, b: TensorId) -> TensorId {
        let (av, bv) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        assert!(av.same_shape(bv), "mul shape mismatch");
        let mut z = av.clone();
        for (o, v) in z.data_mut().iter_mut().zip(bv.data()) {
            *o *= v;
        }
        self.push(z, Op::Mul(a, b))
    }

    pub fn affine(&mut self, a: TensorId, alpha: f64, beta: f64) -> TensorId {
        let z = self.nodes[a.0].value.map(|v| alpha * v + beta);
        self.push(z, Op::Affine(a, alpha))
    }

    pub fn sigmoid(&mut self, a: TensorId) -> TensorId {
        let z = self.nodes[a.0].value.map(math::logistic);
        self.push(z, Op::Sigmoid(a))
    }

    pub fn tanh(&mut self, a: TensorId) -> TensorId {
        let z = self.nodes[a.0].value.map(math::tanh);
        self.push(z, Op::Tanh(a))
    }

    pub fn relu(&mut self, a: TensorId) -> TensorId {
        let z = self.nodes[a.0].value.map(|v| if v > 0.0 { v } else { 0.0 });
        self.push(z, Op::Relu(a))
    }

    pub fn transpose(&mut self, a: TensorId) -> TensorId {
        let z = self.nodes[a.0].value.transpose();
        self.push(z, Op::Transpose(a))
    }

    pub fn concat_cols(&mut self, a: TensorId, b: TensorId) -> TensorId {
        let (av, bv) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        assert_eq!(av.rows(), bv.rows(), "concat_cols row mismatch");
        let mut z = Tensor::zeros(av.rows(), av.cols() + bv.cols());
        for r in 0..av.rows() {
            for c in 0..av.cols() {
                z.set(r, c, av.get(r, c));
            }
            for c in 0..bv.cols() {
                z.set(r, av.cols() + c, bv.get(r, c));
            }
        }
        self.push(z, Op::ConcatCols(a, b))
    }

    pub fn stack_rows(&mut self, rows: &[TensorId]) -> TensorId {
        assert!(!rows.is_empty(), "stack_rows needs at least one row");
        let cols = self.nodes[rows[0].0].value.cols();
        let mut z = Tensor::zeros(rows.len(), cols);
        for (r, id) in rows.iter().enumerate() {
            let rv = &self.nodes[id.0].value;
            assert_eq!(rv.rows(), 1, "stack_rows operand must be 1×c");
            assert_eq!(rv.cols(), cols, "stack_rows column mismatch");
            for c in 0..cols {
                z.set(r, c, rv.get(0, c));
            }
        }
        self.push(z, Op::StackRows(rows.to_vec()))
    }

    pub fn row(&mut self, m: TensorId, r: usize) -> TensorId {
        let z = self.nodes[m.0].value.row_tensor(r);
        self.push(z, Op::Row(m, r))
    }

    pub fn softmax_rows(&mut self, a: TensorId, scale: f64) -> TensorId {
        let av = &self.nodes[a.0].value;
        let mut z = Tensor::zeros(av.rows(), av.cols());
        let mask = vec![true; av.cols()];
        for r in 0..av.rows() {
            let scaled: Vec<f64> = av.row(r).iter().map(|v| scale * v).collect();
            let p = crate::tensor::masked_softmax(&scaled, &mask).expect("non-empty row");
            for (c, v) in p.iter().enumerate() {
                z.set(r, c, *v);
            }
        }
        self.push(z, Op::SoftmaxRows(a, scale))
    }

    pub fn masked_softmax(&mut self, a: TensorId, mask: &[bool]) -> TensorId {
        let av = &self.nodes[a.0].value;
        assert_eq!(av.rows(), 1, "masked_softmax expects a 1×L score vector");
        let p = crate::tensor::masked_softmax(av.row(0), mask).expect("mask has an active slot");
        self.push(Tensor::row_vec(p), Op::MaskedSoftmax(a, mask.to_vec()))
    }

    pub fn layer_norm_rows(&mut self, x: TensorId, gain: TensorId, bias: TensorId, eps: f64) -> TensorId {
        let (xv, gv, bv) =
            (&self.nodes[x.0].value, &self.nodes[gain.0].value, &self.nodes[bias.0].value);
        assert_eq!(gv.rows(), 1);
        assert_eq!(bv.rows(), 1);
        let mut z = Tensor::zeros(xv.rows(), xv.cols());
        for r in 0..xv.rows() {
            let y = crate::tensor::layer_norm(xv.row(r), gv.row(0), bv.row(0), eps)
                .expect("layer_norm shapes");
            for (c, v) in y.iter().enumerate() {
                z.set(r, c, *v);
            }
        }
        self.push(z, Op::LayerNormRows(x, gain, bias, eps))
    }

    pub fn mean_rows(&mut self, a: TensorId) -> TensorId {
        let av = &self.nodes[a.0].value;
        let mut z = Tensor::zeros(1, av.cols());
        for r in 0..av.rows() {
            for c in 0..av.cols() {
                z.set(0, c, z.get(0, c) + av.get(r, c));
            }
        }
        let inv = 1.0 / av.rows() as f64;
        for c in 0..av.cols() {
            z.set(0, c, z.get(0, c) * inv);
        }
        self.push(z, Op::MeanRows(a))
    }

    pub fn neg_log_pick(&mut self, p: TensorId, idx: usize) -> TensorId {
        let pv = &self.nodes[p.0].value;
        assert_eq!(pv.rows(), 1);
        let v = pv.get(0, idx).max(PROB_FLOOR);
        self.push(Tensor::row_vec(vec![-math::ln(v)]), Op::NegLogPick(p, idx))
    }

    pub fn bce_with_logits(&mut self, logits: TensorId, targets: &[f64]) -> TensorId {
        let lv = &self.nodes[logits.0].value;
        assert_eq!(lv.cols(), 1, "bce expects n×1 logits");
        assert_eq!(lv.rows(), targets.len(), "bce target count mismatch");
        let mut loss = 0.0;
        for (r, y) in targets.iter().enumerate() {
            let l = lv.get(r, 0);
            // log(1 + exp(-|l|)) form keeps large logits finite
            let max = l.max(0.0);
            loss += max - l * y + math::ln(1.0 + math::exp(-math::abs(l)));
        }
        self.push(Tensor::row_vec(vec![loss]), Op::BceWithLogits(logits, targets.to_vec()))
    }

    // ---- backward --------------------------------------------------------

    fn accumulate(&mut self, id: TensorId, delta: &Tensor) {
        let slot = &mut self.grads[id.0];
        match slot {
            Some(g) => {
                for (o, d) in g.data_mut().iter_mut().zip(delta.data()) {
                    *o += d;
                }
            }
            None => *slot = Some(delta.clone()),
        }
    }

    /// Propagate from a 1×1 scalar node back through the tape.
    pub fn backward(&mut self, loss: TensorId) {
        assert_eq!(self.nodes[loss.0].value.len(), 1, "backward expects a scalar loss");
        for g in self.grads.iter_mut() {
            *g = None;
        }
        self.grads[loss.0] = Some(Tensor::row_vec(vec![1.0]));

        for i in (0..self.nodes.len()).rev() {
            let dz = match &self.grads[i] {
                Some(g) => g.clone(),
                None => continue,
            };
            let op = self.nodes[i].op.clone();
            match op {
                Op::Leaf => {}
                Op::Matmul(a, b) => {
                    let bt = self.nodes[b.0].value.transpose();
                    let at = self.nodes[a.0].value.transpose();
                    let da = dz.matmul(&bt).expect("matmul backward");
                    let db = at.matmul(&dz).expect("matmul backward");
                    self.accumulate(a, &da);
                    self.accumulate(b, &db);
                }
                Op::Add(a, b) => {
                    self.accumulate(a, &dz);
                    self.accumulate(b, &dz);
                }
                Op::AddRow(m, r) => {
                    self.accumulate(m, &dz);
                    let mut dr = Tensor::zeros(1, dz.cols());
                    for row in 0..dz.rows() {
                        for c in 0..dz.cols() {
                            dr.set(0, c, dr.get(0, c) + dz.get(row, c));
                        }
                    }
                    self.accumulate(r, &dr);
                }
                Op::Mul(a, b) => {
                    let bv = self.nodes[b.0].value.clone();
                    let av = self.nodes[a.0].value.clone();
                    let mut da = dz.clone();
                    for (o, v) in da.data_mut().iter_mut().zip(bv.data()) {
                        *o *= v;
                    }
                    let mut db = dz.clone();
                    for (o, v) in db.data_mut().iter_mut().zip(av.data()) {
                        *o *= v;
                    }
                    self.accumulate(a, &da);
                    self.accumulate(b, &db);
                }
                Op::Affine(a, alpha) => {
                    self.accumulate(a, &dz.scale(alpha));
                }
                Op::Sigmoid(a) => {
                    let y = self.nodes[i].value.clone();
                    let mut da = dz.clone();
                    for (o, v) in da.data_mut().iter_mut().zip(y.data()) {
                        *o *= v * (1.0 - v);
                    }
                    self.accumulate(a, &da);
                }
                Op::Tanh(a) => {
                    let y = self.nodes[i].value.clone();
                    let mut da = dz.clone();
                    for (o, v) in da.data_mut().iter_mut().zip(y.data()) {
                        *o *= 1.0 - v * v;
                    }
                    self.accumulate(a, &da);
                }
                Op::Relu(a) => {
                    let x = self.nodes[a.0].value.clone();
                    let mut da = dz.clone();
                    for (o, v) in da.data_mut().iter_mut().zip(x.data()) {
                        if *v <= 0.0 {
                            *o = 0.0;
                        }
                    }
                    self.accumulate(a, &da);
                }
                Op::Transpose(a) => {
                    self.accumulate(a, &dz.transpose());
                }
                Op::ConcatCols(a, b) => {
                    let ac = self.nodes[a.0].value.cols();
                    let bc = self.nodes[b.0].value.cols();
                    let mut da = Tensor::zeros(dz.rows(), ac);
                    let mut db = Tensor::zeros(dz.rows(), bc);
                    for r in 0..dz.rows() {
                        for c in 0..ac {
                            da.set(r, c, dz.get(r, c));
                        }
                        for c in 0..bc {
                            db.set(r, c, dz.get(r, ac + c));
                        }
                    }
                    self.accumulate(a, &da);
                    self.accumulate(b, &db);
                }
                Op::StackRows(rows) => {
                    for (r, id) in rows.iter().enumerate() {
                        let dr = Tensor::row_vec(dz.row(r).to_vec());
                        self.accumulate(*id, &dr);
                    }
                }
                Op::Row(m, r) => {
                    let mv = &self.nodes[m.0].value;
                    let mut dm = Tensor::zeros(mv.rows(), mv.cols());
                    for c in 0..dz.cols() {
                        dm.set(r, c, dz.get(0, c));
                    }
                    self.accumulate(m, &dm);
                }
                Op::SoftmaxRows(a, scale) => {
                    let y = self.nodes[i].value.clone();
                    let mut da = Tensor::zeros(y.rows(), y.cols());
                    for r in 0..y.rows() {
                        let dot: f64 =
                            y.row(r).iter().zip(dz.row(r)).map(|(p, d)| p * d).sum();
                        for c in 0..y.cols() {
                            da.set(r, c, scale * y.get(r, c) * (dz.get(r, c) - dot));
                        }
                    }
                    self.accumulate(a, &da);
                }
                Op::MaskedSoftmax(a, mask) => {
                    let y = self.nodes[i].value.clone();
                    let dot: f64 = y.row(0).iter().zip(dz.row(0)).map(|(p, d)| p * d).sum();
                    let mut da = Tensor::zeros(1, y.cols());
                    for c in 0..y.cols() {
                        if mask[c] {
                            da.set(0, c, y.get(0, c) * (dz.get(0, c) - dot));
                        }
                    }
                    self.accumulate(a, &da);
                }
                Op::LayerNormRows(x, gain, bias, eps) => {
                    let xv = self.nodes[x.0].value.clone();
                    let gv = self.nodes[gain.0].value.clone();
                    let d = xv.cols() as f64;
                    let mut dx = Tensor::zeros(xv.rows(), xv.cols());
                    let mut dg = Tensor::zeros(1, xv.cols());
                    let mut db = Tensor::zeros(1, xv.cols());
                    for r in 0..xv.rows() {
                        let row = xv.row(r);
                        let mean = row.iter().sum::<f64>() / d;
                        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d;
                        let inv = 1.0 / math::sqrt(var + eps);
                        // xhat and upstream-through-gain dy per element
                        let mut mean_dy = 0.0;
                        let mut mean_dy_xhat = 0.0;
                        let mut xhat = vec![0.0; row.len()];
                        let mut dy = vec![0.0; row.len()];
                        for c in 0..row.len() {
                            xhat[c] = (row[c] - mean) * inv;
                            dy[c] = dz.get(r, c) * gv.get(0, c);
                            mean_dy += dy[c];
                            mean_dy_xhat += dy[c] * xhat[c];
                            dg.set(0, c, dg.get(0, c) + dz.get(r, c) * xhat[c]);
                            db.set(0, c, db.get(0, c) + dz.get(r, c));
                        }
                        mean_dy /= d;
                        mean_dy_xhat /= d;
                        for c in 0..row.len() {
                            dx.set(r, c, inv * (dy[c] - mean_dy - xhat[c] * mean_dy_xhat));
                        }
                    }
                    self.accumulate(x, &dx);
                    self.accumulate(gain, &dg);
                    self.accumulate(bias, &db);
                }
                Op::MeanRows(a) => {
                    let av = &self.nodes[a.0].value;
                    let inv = 1.0 / av.rows() as f64;
                    let mut da = Tensor::zeros(av.rows(), av.cols());
                    for r in 0..av.rows() {
                        for c in 0..av.cols() {
                            da.set(r, c, dz.get(0, c) * inv);
                        }
                    }
                    self.accumulate(a, &da);
                }
                Op::NegLogPick(p, idx) => {
                    let pv = &self.nodes[p.0].value;
                    let v = pv.get(0, idx);
                    let mut dp = Tensor::zeros(1, pv.cols());
                    if v > PROB_FLOOR {
                        dp.set(0, idx, -dz.get(0, 0) / v);
                    }
                    self.accumulate(p, &dp);
                }
                Op::BceWithLogits(logits, targets) => {
                    let lv = &self.nodes[logits.0].value;
                    let mut dl = Tensor::zeros(lv.rows(), 1);
                    for (r, y) in targets.iter().enumerate() {
                        dl.set(r, 0, dz.get(0, 0) * (math::logistic(lv.get(r, 0)) - y));
                    }
                    self.accumulate(logits, &dl);
                }
            }
        }
    }
}
