//! Temporal conditioned pointer network.
//!
//! A BiGRU aggregates the graph convolved clip features; a zero pad row is
//! appended as the end slot. Each decode step scores all T+1 slots, masks the
//! slots at or before the previous selection, exp-normalizes, and points at
//! the argmax. Selecting the end slot terminates decoding.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::gru::{gru_cell, xavier, BiGru, GruDir};
use crate::tape::{Tape, TensorId};
use crate::tensor::Tensor;

/// Per-step probability vector over the T clip slots plus the end slot.
#[derive(Debug, Clone, PartialEq)]
pub struct StepDistribution {
    pub probs: Vec<f64>,
}

impl StepDistribution {
    /// Index of the end slot (the last entry).
    pub fn end_slot(&self) -> usize {
        self.probs.len() - 1
    }
}

/// Ordered clip indices produced by decoding, with the distribution recorded
/// at every step (including the terminating one).
#[derive(Debug, Clone, PartialEq)]
pub struct PointerSelection {
    pub indices: Vec<usize>,
    pub steps: Vec<StepDistribution>,
    pub terminated: bool,
}

impl PointerSelection {
    /// Selected clips with duplicates dropped, ascending. The masked decoder
    /// already guarantees strict increase; the unmasked variant needs this
    /// post-processing step.
    pub fn dedup_indices(&self) -> Vec<usize> {
        let mut v = self.indices.clone();
        v.sort_unstable();
        v.dedup();
        v
    }
}

#[derive(Debug, Clone)]
pub struct PointerParams<P> {
    /// Aggregation BiGRU over the pointer input features.
    pub agg: BiGru<P>,
    /// Sentence mean to initial decoder state, 2H×H_P.
    pub w_init: P,
    /// Slot feature projection, d_t×H_P.
    pub w_g: P,
    /// Decoder state projection, H_P×H_P.
    pub w_h: P,
    /// Score bias, 1×H_P.
    pub b: P,
    /// Score vector, H_P×1.
    pub w: P,
    /// Decoder GRU: input d_t (attention context), hidden H_P.
    pub dec: GruDir<P>,
}

impl PointerParams<Tensor> {
    /// `d_in` is the per-clip pointer input width, `two_h` the sentence
    /// encoder output width, `h_p` the decoder hidden size, `h_agg` the
    /// aggregation BiGRU hidden size.
    pub fn init(rng: &mut impl Rng, d_in: usize, two_h: usize, h_p: usize, h_agg: usize) -> Self {
        let d_t = 2 * h_agg;
        PointerParams {
            agg: BiGru::init(rng, d_in, h_agg),
            w_init: xavier(rng, two_h, h_p),
            w_g: xavier(rng, d_t, h_p),
            w_h: xavier(rng, h_p, h_p),
            b: Tensor::zeros(1, h_p),
            w: xavier(rng, h_p, 1),
            dec: GruDir::init(rng, d_t, h_p),
        }
    }

    pub fn visit(&self, prefix: &str, f: &mut impl FnMut(String, &Tensor)) {
        self.agg.visit(&format!("{prefix}.agg"), f);
        f(format!("{prefix}.w_init"), &self.w_init);
        f(format!("{prefix}.w_g"), &self.w_g);
        f(format!("{prefix}.w_h"), &self.w_h);
        f(format!("{prefix}.b"), &self.b);
        f(format!("{prefix}.w"), &self.w);
        self.dec.visit(&format!("{prefix}.dec"), f);
    }

    pub fn visit_mut(&mut self, prefix: &str, f: &mut impl FnMut(String, &mut Tensor)) {
        self.agg.visit_mut(&format!("{prefix}.agg"), f);
        f(format!("{prefix}.w_init"), &mut self.w_init);
        f(format!("{prefix}.w_g"), &mut self.w_g);
        f(format!("{prefix}.w_h"), &mut self.w_h);
        f(format!("{prefix}.b"), &mut self.b);
        f(format!("{prefix}.w"), &mut self.w);
        self.dec.visit_mut(&format!("{prefix}.dec"), f);
    }

    pub fn bind(
        &self,
        tape: &mut Tape,
        reg: &mut Vec<(String, TensorId)>,
        prefix: &str,
    ) -> PointerParams<TensorId> {
        let agg = self.agg.bind(tape, reg, &format!("{prefix}.agg"));
        let mut leaf = |name: &str, t: &Tensor| {
            let id = tape.leaf(t.clone());
            reg.push((format!("{prefix}.{name}"), id));
            id
        };
        let w_init = leaf("w_init", &self.w_init);
        let w_g = leaf("w_g", &self.w_g);
        let w_h = leaf("w_h", &self.w_h);
        let b = leaf("b", &self.b);
        let w = leaf("w", &self.w);
        let dec = self.dec.bind(tape, reg, &format!("{prefix}.dec"));
        PointerParams { agg, w_init, w_g, w_h, b, w, dec }
    }
}

/// BiGRU-aggregate the pointer input rows, then append the all-zero end slot
/// row; result is `(T+1)×2H_agg`. With `aggregate` false the raw rows are
/// used unchanged (plus the zero row).
pub fn aggregate(
    tape: &mut Tape,
    h_g: TensorId,
    p: &PointerParams<TensorId>,
    use_bigru: bool,
) -> TensorId {
    let t_len = tape.value(h_g).rows();
    let base = if use_bigru {
        crate::gru::encode_video(tape, h_g, &p.agg)
    } else {
        h_g
    };
    let cols = tape.value(base).cols();
    let rows: Vec<TensorId> = (0..t_len).map(|r| tape.row(base, r)).collect();
    let zero = tape.leaf(Tensor::zeros(1, cols));
    let mut all = rows;
    all.push(zero);
    tape.stack_rows(&all)
}

/// Initial decoder state: mean-pooled sentence encoding projected to H_P.
pub fn init_state(tape: &mut Tape, u_s: TensorId, p: &PointerParams<TensorId>) -> TensorId {
    let mean = tape.mean_rows(u_s);
    tape.matmul(mean, p.w_init)
}

/// Slot mask for one step: everything at or before the previous pointer is
/// disallowed; at the first step all slots are allowed. The end slot is never
/// masked.
pub fn step_mask(total_slots: usize, prev: Option<usize>, masked: bool) -> Vec<bool> {
    match (masked, prev) {
        (true, Some(p)) => (0..total_slots).map(|t| t > p).collect(),
        _ => vec![true; total_slots],
    }
}

/// Argmax with ties broken toward the smallest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// One decode step: masked attention over the T+1 slots, pointer argmax, and
/// the decoder GRU update on the attention context.
pub fn decode_step(
    tape: &mut Tape,
    htilde: TensorId,
    h_prev: TensorId,
    mask: &[bool],
    p: &PointerParams<TensorId>,
) -> (TensorId, usize, TensorId) {
    let proj_g = tape.matmul(htilde, p.w_g); // (T+1)×H_P
    let proj_h = tape.matmul(h_prev, p.w_h); // 1×H_P
    let proj_hb = tape.add(proj_h, p.b);
    let summed = tape.add_row(proj_g, proj_hb);
    let act = tape.tanh(summed);
    let scores_col = tape.matmul(act, p.w); // (T+1)×1
    let scores = tape.transpose(scores_col); // 1×(T+1)
    let e = tape.masked_softmax(scores, mask);
    let ptr = argmax(tape.value(e).row(0));
    let context = tape.matmul(e, htilde); // 1×d_t
    let h_new = gru_cell(tape, context, h_prev, &p.dec);
    (e, ptr, h_new)
}

/// Greedy decoding: repeat steps until the end slot is chosen or K clips have
/// been selected (then one final step is still taken and recorded).
pub fn decode(
    tape: &mut Tape,
    htilde: TensorId,
    u_s: TensorId,
    p: &PointerParams<TensorId>,
    k: usize,
    masked: bool,
    min_one: bool,
) -> PointerSelection {
    assert!(k >= 1);
    let total = tape.value(htilde).rows();
    let end_slot = total - 1;
    let mut h = init_state(tape, u_s, p);
    let mut prev: Option<usize> = None;
    let mut sel = PointerSelection { indices: Vec::new(), steps: Vec::new(), terminated: false };
    loop {
        let mask = step_mask(total, prev, masked);
        let (e, mut ptr, h_new) = decode_step(tape, htilde, h, &mask, p);
        if min_one && sel.indices.is_empty() && ptr == end_slot {
            // deployment flag: force at least one clip by ignoring the end slot
            let probs = tape.value(e).row(0);
            ptr = argmax(&probs[..end_slot]);
        }
        sel.steps.push(StepDistribution { probs: tape.value(e).row(0).to_vec() });
        if ptr == end_slot {
            sel.terminated = true;
            break;
        }
        sel.indices.push(ptr);
        prev = Some(ptr);
        h = h_new;
        if sel.indices.len() == k {
            // loop bound reached: record the forced final step
            let mask = step_mask(total, prev, masked);
            let (e, ptr, _) = decode_step(tape, htilde, h, &mask, p);
            sel.steps.push(StepDistribution { probs: tape.value(e).row(0).to_vec() });
            sel.terminated = ptr == end_slot;
            break;
        }
    }
    sel
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn bound(
        rng: &mut ChaCha8Rng,
        d_in: usize,
        two_h: usize,
        h_p: usize,
        h_agg: usize,
        tape: &mut Tape,
    ) -> PointerParams<TensorId> {
        let p = PointerParams::init(rng, d_in, two_h, h_p, h_agg);
        let mut reg = Vec::new();
        p.bind(tape, &mut reg, "ptr")
    }

    #[test]
    fn aggregate_appends_zero_row() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut tape = Tape::new();
        let p = bound(&mut rng, 3, 4, 4, 2, &mut tape);
        let h_g = tape.leaf(xavier(&mut rng, 3, 3));
        let htilde = aggregate(&mut tape, h_g, &p, true);
        let v = tape.value(htilde);
        assert_eq!(v.rows(), 4);
        assert_eq!(v.cols(), 4);
        assert!(v.row(3).iter().all(|x| *x == 0.0));
    }

    #[test]
    fn zero_agg_params_give_all_zero_rows() {
        let mut tape = Tape::new();
        let p = PointerParams {
            agg: BiGru::zeros(3, 2),
            w_init: Tensor::zeros(4, 4),
            w_g: Tensor::zeros(4, 4),
            w_h: Tensor::zeros(4, 4),
            b: Tensor::zeros(1, 4),
            w: Tensor::zeros(4, 1),
            dec: GruDir::zeros(4, 4),
        };
        let mut reg = Vec::new();
        let pb = p.bind(&mut tape, &mut reg, "ptr");
        let h_g = tape.leaf(Tensor::from_vec(2, 3, vec![1.0; 6]));
        let htilde = aggregate(&mut tape, h_g, &pb, true);
        assert!(tape.value(htilde).data().iter().all(|x| *x == 0.0));
        assert_eq!(tape.value(htilde).rows(), 3);
    }

    #[test]
    fn aggregate_matches_encoder_on_clip_rows() {
        // first T rows equal the BiGRU encoding, last row exactly zero
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut tape = Tape::new();
        let p = bound(&mut rng, 3, 4, 4, 2, &mut tape);
        let h_in = xavier(&mut rng, 3, 3);
        let h_g = tape.leaf(h_in.clone());
        let htilde = aggregate(&mut tape, h_g, &p, true);
        let enc = crate::gru::encode_video(&mut tape, h_g, &p.agg);
        let (ht, ev) = (tape.value(htilde).clone(), tape.value(enc).clone());
        for t in 0..3 {
            assert_eq!(ht.row(t), ev.row(t));
        }
        assert!(ht.row(3).iter().all(|x| *x == 0.0));
    }

    #[test]
    fn init_state_is_projected_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut tape = Tape::new();
        let p = bound(&mut rng, 3, 2, 3, 2, &mut tape);
        // two identical rows: state is the projection of that row
        let u_s = tape.leaf(Tensor::from_vec(2, 2, vec![0.4, -0.6, 0.4, -0.6]));
        let h0 = init_state(&mut tape, u_s, &p);
        let row = tape.leaf(Tensor::row_vec(vec![0.4, -0.6]));
        let direct = tape.matmul(row, p.w_init);
        let (a, b) = (tape.value(h0).clone(), tape.value(direct).clone());
        for i in 0..a.len() {
            assert!((a.data()[i] - b.data()[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn init_state_midpoint_of_two_rows() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut tape = Tape::new();
        let p = bound(&mut rng, 3, 2, 3, 2, &mut tape);
        let u_s = tape.leaf(Tensor::from_vec(2, 2, vec![1.0, 0.0, 0.0, 2.0]));
        let h0 = init_state(&mut tape, u_s, &p);
        let mid = tape.leaf(Tensor::row_vec(vec![0.5, 1.0]));
        let direct = tape.matmul(mid, p.w_init);
        let (a, b) = (tape.value(h0).clone(), tape.value(direct).clone());
        for i in 0..a.len() {
            assert!((a.data()[i] - b.data()[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_score_vector_gives_uniform_over_allowed() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut p = PointerParams::init(&mut rng, 3, 4, 4, 2);
        p.w = Tensor::zeros(4, 1);
        let mut tape = Tape::new();
        let mut reg = Vec::new();
        let pb = p.bind(&mut tape, &mut reg, "ptr");
        let h_g = tape.leaf(xavier(&mut rng, 4, 3));
        let htilde = aggregate(&mut tape, h_g, &pb, true);
        let h0 = tape.leaf(Tensor::zeros(1, 4));
        let mask = step_mask(5, Some(1), true);
        let (e, ptr, _) = decode_step(&mut tape, htilde, h0, &mask, &pb);
        let probs = tape.value(e).row(0);
        assert_eq!(probs[0], 0.0);
        assert_eq!(probs[1], 0.0);
        for t in 2..5 {
            assert!((probs[t] - 1.0 / 3.0).abs() < 1e-12);
        }
        // tie-break toward the smallest allowed index
        assert_eq!(ptr, 2);
    }

    #[test]
    fn slots_at_or_before_previous_are_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mut tape = Tape::new();
        let p = bound(&mut rng, 3, 4, 4, 2, &mut tape);
        let h_g = tape.leaf(xavier(&mut rng, 6, 3));
        let htilde = aggregate(&mut tape, h_g, &p, true);
        let h0 = tape.leaf(xavier(&mut rng, 1, 4));
        let mask = step_mask(7, Some(2), true);
        let (e, ptr, _) = decode_step(&mut tape, htilde, h0, &mask, &p);
        let probs = tape.value(e).row(0);
        for t in 0..3 {
            assert_eq!(probs[t], 0.0);
        }
        assert!(ptr > 2);
        assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn exhausted_clips_force_end_slot() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut tape = Tape::new();
        let p = bound(&mut rng, 3, 4, 4, 2, &mut tape);
        let h_g = tape.leaf(xavier(&mut rng, 4, 3));
        let htilde = aggregate(&mut tape, h_g, &p, true);
        let h0 = tape.leaf(xavier(&mut rng, 1, 4));
        let mask = step_mask(5, Some(3), true);
        let (_, ptr, _) = decode_step(&mut tape, htilde, h0, &mask, &p);
        assert_eq!(ptr, 4);
    }

    #[test]
    fn decoded_indices_strictly_increase() {
        for seed in 0..50u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut tape = Tape::new();
            let p = bound(&mut rng, 3, 4, 4, 2, &mut tape);
            let h_g = tape.leaf(xavier(&mut rng, 8, 3));
            let htilde = aggregate(&mut tape, h_g, &p, true);
            let u_s = tape.leaf(xavier(&mut rng, 5, 4));
            let sel = decode(&mut tape, htilde, u_s, &p, 5, true, false);
            assert!(sel.indices.len() <= 5);
            assert!(sel.steps.len() <= 6);
            for w in sel.indices.windows(2) {
                assert!(w[1] > w[0], "indices not strictly increasing: {:?}", sel.indices);
            }
            for step in &sel.steps {
                let sum: f64 = step.probs.iter().sum();
                assert!((sum - 1.0).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn empty_selection_when_end_chosen_first() {
        // force the end slot by leaving only it unmasked at a crafted state:
        // with zero score vector the tie-break never picks the end slot, so
        // craft scores instead via w picking up the zero pad row
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut p = PointerParams::init(&mut rng, 2, 4, 2, 1);
        // the zero pad row scores tanh(b)·w; make real clips score lower by
        // driving w_g negative contributions through a large positive bias
        p.w_g = Tensor::from_vec(2, 2, vec![-5.0, -5.0, -5.0, -5.0]);
        p.b = Tensor::from_vec(1, 2, vec![0.0, 0.0]);
        p.w_h = Tensor::zeros(2, 2);
        p.w = Tensor::from_vec(2, 1, vec![-1.0, -1.0]);
        let mut tape = Tape::new();
        let mut reg = Vec::new();
        let pb = p.bind(&mut tape, &mut reg, "ptr");
        // positive aggregated features make w_g·h strongly negative, and with
        // w negative those clips score higher... verify via the decode result
        let h_g = tape.leaf(Tensor::from_vec(3, 2, vec![1.0; 6]));
        let htilde = aggregate(&mut tape, h_g, &pb, false);
        let u_s = tape.leaf(Tensor::zeros(2, 4));
        let sel = decode(&mut tape, htilde, u_s, &pb, 5, true, false);
        if sel.indices.is_empty() {
            assert!(sel.terminated);
            assert_eq!(sel.steps.len(), 1);
        }
        // with min_one set an empty selection is impossible
        let mut tape = Tape::new();
        let mut reg = Vec::new();
        let pb = p.bind(&mut tape, &mut reg, "ptr");
        let h_g = tape.leaf(Tensor::from_vec(3, 2, vec![1.0; 6]));
        let htilde = aggregate(&mut tape, h_g, &pb, false);
        let u_s = tape.leaf(Tensor::zeros(2, 4));
        let sel = decode(&mut tape, htilde, u_s, &pb, 5, true, true);
        assert!(!sel.indices.is_empty());
    }

    #[test]
    fn unmasked_decoding_can_repeat() {
        // fixture: one clip row dominates the scores, so without the mask the
        // decoder keeps pointing at it
        let mut p = PointerParams {
            agg: BiGru::zeros(2, 1),
            w_init: Tensor::zeros(4, 2),
            w_g: Tensor::from_vec(2, 2, vec![3.0, 0.0, 0.0, 0.0]),
            w_h: Tensor::zeros(2, 2),
            b: Tensor::zeros(1, 2),
            w: Tensor::from_vec(2, 1, vec![5.0, 0.0]),
            dec: GruDir::zeros(2, 2),
        };
        p.agg = BiGru::zeros(2, 1); // unused: raw features
        let mut tape = Tape::new();
        let mut reg = Vec::new();
        let pb = p.bind(&mut tape, &mut reg, "ptr");
        // clip 1 has a large first feature
        let h_g = tape.leaf(Tensor::from_vec(3, 2, vec![0.0, 0.1, 2.0, 0.0, 0.0, 0.2]));
        let htilde = aggregate(&mut tape, h_g, &pb, false);
        let u_s = tape.leaf(Tensor::zeros(2, 4));
        let sel = decode(&mut tape, htilde, u_s, &pb, 4, false, false);
        assert!(sel.indices.len() >= 2);
        assert_eq!(sel.indices[0], 1);
        assert_eq!(sel.indices[1], 1, "unmasked decoder should repeat the dominant clip");
        assert_eq!(sel.dedup_indices(), vec![1]);
    }
}
