//! Word-by-clip attention and sentence-video fusion.
//!
//! For each clip the sentence words are soft-attended, giving a clip-specific
//! sentence summary that is concatenated with the clip encoding and passed
//! through an activated linear layer.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::Rng;

use crate::gru::xavier;
use crate::tape::{Tape, TensorId};
use crate::tensor::Tensor;

/// Activation applied by the fusion layer and the graph convolution stack.
/// The rectifier keeps fused features nonnegative, which keeps the affinity
/// dot products well behaved; tanh is available as an alternative.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Tanh,
}

impl Activation {
    pub fn apply(&self, tape: &mut Tape, x: TensorId) -> TensorId {
        match self {
            Activation::Relu => tape.relu(x),
            Activation::Tanh => tape.tanh(x),
        }
    }
}

/// Parameters of the attention score and fusion layers. The attention inner
/// dimension equals the encoder output width 2H.
#[derive(Debug, Clone)]
pub struct InteractionParams<P> {
    /// Word projection, 2H×2H.
    pub w_s: P,
    /// Clip projection, 2H×2H.
    pub w_v: P,
    /// Score bias, 1×2H.
    pub b_a: P,
    /// Score vector, 2H×1.
    pub w: P,
    /// Fusion weights, 4H×d_f.
    pub w_f: P,
    /// Fusion bias, 1×d_f.
    pub b_f: P,
}

impl InteractionParams<Tensor> {
    pub fn init(rng: &mut impl Rng, two_h: usize, d_f: usize) -> Self {
        InteractionParams {
            w_s: xavier(rng, two_h, two_h),
            w_v: xavier(rng, two_h, two_h),
            b_a: Tensor::zeros(1, two_h),
            w: xavier(rng, two_h, 1),
            w_f: xavier(rng, 2 * two_h, d_f),
            b_f: Tensor::zeros(1, d_f),
        }
    }

    pub fn visit(&self, prefix: &str, f: &mut impl FnMut(String, &Tensor)) {
        f(format!("{prefix}.w_s"), &self.w_s);
        f(format!("{prefix}.w_v"), &self.w_v);
        f(format!("{prefix}.b_a"), &self.b_a);
        f(format!("{prefix}.w"), &self.w);
        f(format!("{prefix}.w_f"), &self.w_f);
        f(format!("{prefix}.b_f"), &self.b_f);
    }

    pub fn visit_mut(&mut self, prefix: &str, f: &mut impl FnMut(String, &mut Tensor)) {
        f(format!("{prefix}.w_s"), &mut self.w_s);
        f(format!("{prefix}.w_v"), &mut self.w_v);
        f(format!("{prefix}.b_a"), &mut self.b_a);
        f(format!("{prefix}.w"), &mut self.w);
        f(format!("{prefix}.w_f"), &mut self.w_f);
        f(format!("{prefix}.b_f"), &mut self.b_f);
    }

    pub fn bind(
        &self,
        tape: &mut Tape,
        reg: &mut Vec<(String, TensorId)>,
        prefix: &str,
    ) -> InteractionParams<TensorId> {
        let mut leaf = |name: &str, t: &Tensor| {
            let id = tape.leaf(t.clone());
            reg.push((format!("{prefix}.{name}"), id));
            id
        };
        InteractionParams {
            w_s: leaf("w_s", &self.w_s),
            w_v: leaf("w_v", &self.w_v),
            b_a: leaf("b_a", &self.b_a),
            w: leaf("w", &self.w),
            w_f: leaf("w_f", &self.w_f),
            b_f: leaf("b_f", &self.b_f),
        }
    }
}

/// Attention weights of every clip over the sentence words, `T×N`, each row a
/// probability vector.
pub fn word_clip_attention(
    tape: &mut Tape,
    u_s: TensorId,
    u_v: TensorId,
    p: &InteractionParams<TensorId>,
) -> TensorId {
    let t_len = tape.value(u_v).rows();
    let proj_s = tape.matmul(u_s, p.w_s); // N×a
    let proj_s = tape.add_row(proj_s, p.b_a);
    let proj_v = tape.matmul(u_v, p.w_v); // T×a
    let mut score_rows = Vec::with_capacity(t_len);
    for t in 0..t_len {
        let vrow = tape.row(proj_v, t);
        let sum = tape.add_row(proj_s, vrow); // N×a
        let act = tape.tanh(sum);
        let scores = tape.matmul(act, p.w); // N×1
        let row = tape.transpose(scores); // 1×N
        score_rows.push(row);
    }
    let beta = tape.stack_rows(&score_rows); // T×N
    tape.softmax_rows(beta, 1.0)
}

/// Clip-specific sentence features: row `t` is the attention-weighted sum of
/// word encodings, `T×2H`.
pub fn clip_specific_sentence(tape: &mut Tape, attention: TensorId, u_s: TensorId) -> TensorId {
    tape.matmul(attention, u_s)
}

/// Fused interaction features `H_I`: activated linear layer over
/// `[u_t^V ‖ c_t^S]`, `T×d_f`.
pub fn fuse(
    tape: &mut Tape,
    u_v: TensorId,
    c_s: TensorId,
    p: &InteractionParams<TensorId>,
    activation: Activation,
) -> TensorId {
    let cat = tape.concat_cols(u_v, c_s);
    let lin = tape.matmul(cat, p.w_f);
    let pre = tape.add_row(lin, p.b_f);
    activation.apply(tape, pre)
}
