//! Hand-rolled gated recurrent units and bidirectional sequence encoding.
//!
//! Parameter structs are generic over their payload so the same layout serves
//! both stored tensors (`GruDir<Tensor>`) and tape-bound nodes
//! (`GruDir<TensorId>`).

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::Rng;

use crate::tape::{Tape, TensorId};
use crate::tensor::Tensor;

/// One direction of a GRU: update (z), reset (r), and candidate (c) gates.
/// Input weights are `d_in×H`, hidden weights `H×H`, biases `1×H`.
#[derive(Debug, Clone)]
pub struct GruDir<P> {
    pub w_z: P,
    pub u_z: P,
    pub b_z: P,
    pub w_r: P,
    pub u_r: P,
    pub b_r: P,
    pub w_c: P,
    pub u_c: P,
    pub b_c: P,
}

#[derive(Debug, Clone)]
pub struct BiGru<P> {
    pub fwd: GruDir<P>,
    pub bwd: GruDir<P>,
}

pub fn xavier(rng: &mut impl Rng, rows: usize, cols: usize) -> Tensor {
    let r = crate::math::sqrt(6.0 / (rows + cols) as f64);
    let mut t = Tensor::zeros(rows, cols);
    for v in t.data_mut() {
        *v = rng.gen_range(-r..r);
    }
    t
}

impl GruDir<Tensor> {
    pub fn init(rng: &mut impl Rng, d_in: usize, h: usize) -> Self {
        GruDir {
            w_z: xavier(rng, d_in, h),
            u_z: xavier(rng, h, h),
            b_z: Tensor::zeros(1, h),
            w_r: xavier(rng, d_in, h),
            u_r: xavier(rng, h, h),
            b_r: Tensor::zeros(1, h),
            w_c: xavier(rng, d_in, h),
            u_c: xavier(rng, h, h),
            b_c: Tensor::zeros(1, h),
        }
    }

    pub fn zeros(d_in: usize, h: usize) -> Self {
        GruDir {
            w_z: Tensor::zeros(d_in, h),
            u_z: Tensor::zeros(h, h),
            b_z: Tensor::zeros(1, h),
            w_r: Tensor::zeros(d_in, h),
            u_r: Tensor::zeros(h, h),
            b_r: Tensor::zeros(1, h),
            w_c: Tensor::zeros(d_in, h),
            u_c: Tensor::zeros(h, h),
            b_c: Tensor::zeros(1, h),
        }
    }

    pub fn hidden(&self) -> usize {
        self.b_z.cols()
    }

    pub fn visit(&self, prefix: &str, f: &mut impl FnMut(String, &Tensor)) {
        f(format!("{prefix}.w_z"), &self.w_z);
        f(format!("{prefix}.u_z"), &self.u_z);
        f(format!("{prefix}.b_z"), &self.b_z);
        f(format!("{prefix}.w_r"), &self.w_r);
        f(format!("{prefix}.u_r"), &self.u_r);
        f(format!("{prefix}.b_r"), &self.b_r);
        f(format!("{prefix}.w_c"), &self.w_c);
        f(format!("{prefix}.u_c"), &self.u_c);
        f(format!("{prefix}.b_c"), &self.b_c);
    }

    pub fn visit_mut(&mut self, prefix: &str, f: &mut impl FnMut(String, &mut Tensor)) {
        f(format!("{prefix}.w_z"), &mut self.w_z);
        f(format!("{prefix}.u_z"), &mut self.u_z);
        f(format!("{prefix}.b_z"), &mut self.b_z);
        f(format!("{prefix}.w_r"), &mut self.w_r);
        f(format!("{prefix}.u_r"), &mut self.u_r);
        f(format!("{prefix}.b_r"), &mut self.b_r);
        f(format!("{prefix}.w_c"), &mut self.w_c);
        f(format!("{prefix}.u_c"), &mut self.u_c);
        f(format!("{prefix}.b_c"), &mut self.b_c);
    }

    pub fn bind(&self, tape: &mut Tape, reg: &mut Vec<(String, TensorId)>, prefix: &str) -> GruDir<TensorId> {
        let mut leaf = |name: &str, t: &Tensor| {
            let id = tape.leaf(t.clone());
            reg.push((format!("{prefix}.{name}"), id));
            id
        };
        GruDir {
            w_z: leaf("w_z", &self.w_z),
            u_z: leaf("u_z", &self.u_z),
            b_z: leaf("b_z", &self.b_z),
            w_r: leaf("w_r", &self.w_r),
            u_r: leaf("u_r", &self.u_r),
            b_r: leaf("b_r", &self.b_r),
            w_c: leaf("w_c", &self.w_c),
            u_c: leaf("u_c", &self.u_c),
            b_c: leaf("b_c", &self.b_c),
        }
    }
}

impl BiGru<Tensor> {
    pub fn init(rng: &mut impl Rng, d_in: usize, h: usize) -> Self {
        BiGru { fwd: GruDir::init(rng, d_in, h), bwd: GruDir::init(rng, d_in, h) }
    }

    pub fn zeros(d_in: usize, h: usize) -> Self {
        BiGru { fwd: GruDir::zeros(d_in, h), bwd: GruDir::zeros(d_in, h) }
    }

    pub fn hidden(&self) -> usize {
        self.fwd.hidden()
    }

    pub fn visit(&self, prefix: &str, f: &mut impl FnMut(String, &Tensor)) {
        self.fwd.visit(&format!("{prefix}.fwd"), f);
        self.bwd.visit(&format!("{prefix}.bwd"), f);
    }

    pub fn visit_mut(&mut self, prefix: &str, f: &mut impl FnMut(String, &mut Tensor)) {
        self.fwd.visit_mut(&format!("{prefix}.fwd"), f);
        self.bwd.visit_mut(&format!("{prefix}.bwd"), f);
    }

    pub fn bind(&self, tape: &mut Tape, reg: &mut Vec<(String, TensorId)>, prefix: &str) -> BiGru<TensorId> {
        BiGru {
            fwd: self.fwd.bind(tape, reg, &format!("{prefix}.fwd")),
            bwd: self.bwd.bind(tape, reg, &format!("{prefix}.bwd")),
        }
    }
}

/// One GRU step: `h' = (1-z)⊙h + z⊙tanh(x·W_c + (r⊙h)·U_c + b_c)`.
pub fn gru_cell(tape: &mut Tape, x: TensorId, h: TensorId, p: &GruDir<TensorId>) -> TensorId {
    let gate = |tape: &mut Tape, w, u, b| {
        let xi = tape.matmul(x, w);
        let hi = tape.matmul(h, u);
        let s = tape.add(xi, hi);
        tape.add(s, b)
    };
    let z_pre = gate(tape, p.w_z, p.u_z, p.b_z);
    let z = tape.sigmoid(z_pre);
    let r_pre = gate(tape, p.w_r, p.u_r, p.b_r);
    let r = tape.sigmoid(r_pre);
    let rh = tape.mul(r, h);
    let xc = tape.matmul(x, p.w_c);
    let hc = tape.matmul(rh, p.u_c);
    let c_sum = tape.add(xc, hc);
    let c_pre = tape.add(c_sum, p.b_c);
    let c = tape.tanh(c_pre);
    let keep = tape.affine(z, -1.0, 1.0);
    let kept = tape.mul(keep, h);
    let new = tape.mul(z, c);
    tape.add(kept, new)
}

/// Bidirectional encoding with zero initial states; row `t` of the result is
/// the concatenation `[forward_t ‖ backward_t]`, shape `T×2H`.
pub fn bigru_encode(tape: &mut Tape, inputs: &[TensorId], p: &BiGru<TensorId>, h: usize) -> TensorId {
    let t_len = inputs.len();
    assert!(t_len >= 1, "sequence must be nonempty");
    let mut fwd = Vec::with_capacity(t_len);
    let mut state = tape.leaf(Tensor::zeros(1, h));
    for &x in inputs {
        state = gru_cell(tape, x, state, &p.fwd);
        fwd.push(state);
    }
    let mut bwd = vec_of_none(t_len);
    state = tape.leaf(Tensor::zeros(1, h));
    for (i, &x) in inputs.iter().enumerate().rev() {
        state = gru_cell(tape, x, state, &p.bwd);
        bwd[i] = Some(state);
    }
    let rows: Vec<TensorId> = fwd
        .iter()
        .zip(bwd)
        .map(|(&f, b)| tape.concat_cols(f, b.unwrap()))
        .collect();
    tape.stack_rows(&rows)
}

fn vec_of_none(n: usize) -> Vec<Option<TensorId>> {
    let mut v = Vec::with_capacity(n);
    for _ in 0..n {
        v.push(None);
    }
    v
}

/// Encode a clip feature matrix (`T×d_v`), one row per clip.
pub fn encode_video(tape: &mut Tape, clips: TensorId, p: &BiGru<TensorId>) -> TensorId {
    encode_matrix(tape, clips, p)
}

/// Encode a word embedding matrix (`N×d_w`), one row per token.
pub fn encode_sentence(tape: &mut Tape, words: TensorId, p: &BiGru<TensorId>) -> TensorId {
    encode_matrix(tape, words, p)
}

fn encode_matrix(tape: &mut Tape, m: TensorId, p: &BiGru<TensorId>) -> TensorId {
    let rows: Vec<TensorId> = (0..tape.value(m).rows()).map(|r| tape.row(m, r)).collect();
    let h = tape.value(p.fwd.b_z).cols();
    bigru_encode(tape, &rows, p, h)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math;
    use alloc::vec;
    use alloc::vec::Vec;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Independent scalar-loop GRU, kept free of the tape machinery.
    fn oracle_cell(x: &[f64], h: &[f64], p: &GruDir<Tensor>) -> Vec<f64> {
        let hdim = h.len();
        let gate = |w: &Tensor, u: &Tensor, b: &Tensor, j: usize| {
            let mut s = b.get(0, j);
            for (i, xv) in x.iter().enumerate() {
                s += xv * w.get(i, j);
            }
            for (i, hv) in h.iter().enumerate() {
                s += hv * u.get(i, j);
            }
            s
        };
        let mut out = vec![0.0; hdim];
        for j in 0..hdim {
            let z = math::logistic(gate(&p.w_z, &p.u_z, &p.b_z, j));
            let r_all: Vec<f64> = (0..hdim)
                .map(|i| math::logistic(gate(&p.w_r, &p.u_r, &p.b_r, i)))
                .collect();
            let mut c = p.b_c.get(0, j);
            for (i, xv) in x.iter().enumerate() {
                c += xv * p.w_c.get(i, j);
            }
            for i in 0..hdim {
                c += r_all[i] * h[i] * p.u_c.get(i, j);
            }
            let c = math::tanh(c);
            out[j] = (1.0 - z) * h[j] + z * c;
        }
        out
    }

    fn run_cell(x: Vec<f64>, h: Vec<f64>, p: &GruDir<Tensor>) -> Vec<f64> {
        let mut tape = Tape::new();
        let mut reg = Vec::new();
        let pb = p.bind(&mut tape, &mut reg, "g");
        let xi = tape.leaf(Tensor::row_vec(x));
        let hi = tape.leaf(Tensor::row_vec(h));
        let out = gru_cell(&mut tape, xi, hi, &pb);
        tape.value(out).row(0).to_vec()
    }

    #[test]
    fn zero_params_zero_state() {
        let p = GruDir::zeros(2, 3);
        let out = run_cell(vec![1.0, -1.0], vec![0.0; 3], &p);
        assert_eq!(out, vec![0.0; 3]);
    }

    #[test]
    fn zero_params_halve_state() {
        // z = 0.5 and candidate = 0 at zero weights, so h' = 0.5 h
        let p = GruDir::zeros(2, 3);
        let out = run_cell(vec![0.3, 0.7], vec![2.0, -4.0, 6.0], &p);
        assert_eq!(out, vec![1.0, -2.0, 3.0]);
    }

    #[test]
    fn cell_matches_scalar_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let p = GruDir::init(&mut rng, 3, 3);
        let x = vec![0.2, -0.5, 0.9];
        let h = vec![0.1, 0.4, -0.3];
        let got = run_cell(x.clone(), h.clone(), &p);
        let want = oracle_cell(&x, &h, &p);
        for (g, w) in got.iter().zip(&want) {
            assert!((g - w).abs() < 1e-12, "{g} vs {w}");
        }
    }

    fn encode(inputs: &Tensor, p: &BiGru<Tensor>) -> Tensor {
        let mut tape = Tape::new();
        let mut reg = Vec::new();
        let pb = p.bind(&mut tape, &mut reg, "enc");
        let m = tape.leaf(inputs.clone());
        let out = encode_video(&mut tape, m, &pb);
        tape.value(out).clone()
    }

    #[test]
    fn length_one_halves_match() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = BiGru::init(&mut rng, 2, 3);
        // same single input in both directions only matches when the two
        // directions share parameters
        let shared = BiGru { fwd: p.fwd.clone(), bwd: p.fwd.clone() };
        let out = encode(&Tensor::from_vec(1, 2, vec![0.5, -0.2]), &shared);
        assert_eq!(out.rows(), 1);
        assert_eq!(out.cols(), 6);
        for c in 0..3 {
            assert!((out.get(0, c) - out.get(0, 3 + c)).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_params_zero_output() {
        let p = BiGru::zeros(2, 3);
        let out = encode(&Tensor::from_vec(3, 2, vec![1.0; 6]), &p);
        assert!(out.data().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn sequence_matches_scalar_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let p = BiGru::init(&mut rng, 2, 3);
        let inputs = Tensor::from_vec(3, 2, vec![0.1, 0.2, -0.3, 0.4, 0.5, -0.6]);
        let got = encode(&inputs, &p);

        // forward direction
        let mut h = vec![0.0; 3];
        let mut fwd = Vec::new();
        for t in 0..3 {
            h = oracle_cell(inputs.row(t), &h, &p.fwd);
            fwd.push(h.clone());
        }
        // backward direction
        let mut h = vec![0.0; 3];
        let mut bwd = vec![Vec::new(), Vec::new(), Vec::new()];
        for t in (0..3).rev() {
            h = oracle_cell(inputs.row(t), &h, &p.bwd);
            bwd[t] = h.clone();
        }
        for t in 0..3 {
            for c in 0..3 {
                assert!((got.get(t, c) - fwd[t][c]).abs() < 1e-12);
                assert!((got.get(t, 3 + c) - bwd[t][c]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn bidirectional_symmetry() {
        // reversing the input and swapping directions reverses rows and
        // swaps the two output halves
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let p = BiGru::init(&mut rng, 2, 3);
        let inputs = Tensor::from_vec(4, 2, vec![0.1, 0.9, -0.3, 0.4, 0.5, -0.6, 0.2, 0.0]);
        let out = encode(&inputs, &p);

        let mut rev = Tensor::zeros(4, 2);
        for t in 0..4 {
            for c in 0..2 {
                rev.set(t, c, inputs.get(3 - t, c));
            }
        }
        let swapped = BiGru { fwd: p.bwd.clone(), bwd: p.fwd.clone() };
        let out_rev = encode(&rev, &swapped);
        for t in 0..4 {
            for c in 0..3 {
                assert!((out.get(t, c) - out_rev.get(3 - t, 3 + c)).abs() < 1e-12);
                assert!((out.get(t, 3 + c) - out_rev.get(3 - t, c)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn every_output_row_sees_every_input() {
        // gradient of one output element w.r.t. each input row is nonzero
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let p = BiGru::init(&mut rng, 2, 3);
        let inputs = Tensor::from_vec(3, 2, vec![0.1, 0.2, -0.3, 0.4, 0.5, -0.6]);
        let mut tape = Tape::new();
        let mut reg = Vec::new();
        let pb = p.bind(&mut tape, &mut reg, "enc");
        let m = tape.leaf(inputs);
        let enc = encode_video(&mut tape, m, &pb);
        let mid = tape.row(enc, 1);
        let sq = tape.mul(mid, mid);
        let ones = tape.leaf(Tensor::from_vec(6, 1, vec![1.0; 6]));
        let loss = tape.matmul(sq, ones);
        tape.backward(loss);
        let g = tape.grad(m);
        for t in 0..3 {
            assert!(g.row(t).iter().any(|v| v.abs() > 1e-12), "input row {t} has zero gradient");
        }
    }
}
