//! Full model assembly: encoders, interaction, graph stack, and the pointer
//! decoder (or the ablation variants), plus teacher-forced loss construction.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::graph::{graph_stack, GraphConfig, GraphLayerParams};
use crate::gru::{encode_sentence, encode_video, xavier, BiGru};
use crate::interaction::{clip_specific_sentence, fuse, word_clip_attention, Activation, InteractionParams};
use crate::pointer::{aggregate, decode, decode_step, init_state, step_mask, PointerParams, PointerSelection, StepDistribution};
use crate::tape::{Tape, TensorId};
use crate::tensor::Tensor;

/// Ablation variants: the full pipeline, graph dropped (GTP-G), pointer
/// replaced by a per-clip classifier (GTP-P), and mask removed (GTP-C).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    Full,
    NoGraph,
    NoPointer,
    NoMask,
}

impl Variant {
    pub fn tag(&self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::NoGraph => "no-graph",
            Variant::NoPointer => "no-pointer",
            Variant::NoMask => "no-mask",
        }
    }

    pub fn from_tag(tag: &str) -> Option<Variant> {
        match tag {
            "full" => Some(Variant::Full),
            "no-graph" => Some(Variant::NoGraph),
            "no-pointer" => Some(Variant::NoPointer),
            "no-mask" => Some(Variant::NoMask),
            _ => None,
        }
    }

    /// Whether decoding applies the temporal constraint mask.
    pub fn masked(&self) -> bool {
        !matches!(self, Variant::NoMask)
    }
}

#[derive(Debug, Clone)]
pub struct ModelDims {
    pub d_v: usize,
    pub d_w: usize,
    /// GRU hidden size H; encoder outputs are 2H wide.
    pub hidden: usize,
    /// Fused interaction feature width.
    pub d_f: usize,
    /// Pointer decoder hidden size.
    pub h_p: usize,
    pub layer_count: usize,
    /// Maximum thumbnail length K.
    pub k: usize,
    pub lambda: f64,
    pub activation: Activation,
    pub layer_norm_eps: f64,
    /// Run the aggregation BiGRU before pointer scoring (default); when off
    /// the pointer scores raw graph features.
    pub aggregate_pointer_input: bool,
    pub per_layer_adjacency: bool,
}

impl ModelDims {
    /// Full-scale defaults: H = 256, two graph layers, λ = 150, K = 5.
    pub fn full_scale(d_v: usize, d_w: usize) -> Self {
        ModelDims {
            d_v,
            d_w,
            hidden: 256,
            d_f: 256,
            h_p: 256,
            layer_count: 2,
            k: 5,
            lambda: 150.0,
            activation: Activation::Relu,
            layer_norm_eps: 1e-5,
            aggregate_pointer_input: true,
            per_layer_adjacency: false,
        }
    }

    /// Desk-scale configuration for tests.
    pub fn tiny(d_v: usize, d_w: usize, hidden: usize) -> Self {
        ModelDims {
            d_v,
            d_w,
            hidden,
            d_f: hidden,
            h_p: hidden,
            layer_count: 2,
            k: 5,
            lambda: 150.0,
            activation: Activation::Relu,
            layer_norm_eps: 1e-5,
            aggregate_pointer_input: true,
            per_layer_adjacency: false,
        }
    }

    pub fn graph_config(&self) -> GraphConfig {
        GraphConfig {
            layer_count: self.layer_count,
            lambda: self.lambda,
            activation: self.activation,
            layer_norm_eps: self.layer_norm_eps,
            per_layer_adjacency: self.per_layer_adjacency,
        }
    }

    /// Per-clip feature width entering the pointer network.
    fn pointer_input_dim(&self, variant: Variant) -> usize {
        match variant {
            Variant::NoGraph => 4 * self.hidden,
            _ => self.d_f,
        }
    }
}

/// Per-clip 0-1 classifier used by the no-pointer variant.
#[derive(Debug, Clone)]
pub struct ClassifierParams<P> {
    pub w: P,
    pub b: P,
}

impl ClassifierParams<Tensor> {
    fn init(rng: &mut impl Rng, d_f: usize) -> Self {
        ClassifierParams { w: xavier(rng, d_f, 1), b: Tensor::zeros(1, 1) }
    }

    fn visit(&self, f: &mut impl FnMut(String, &Tensor)) {
        f(String::from("classifier.w"), &self.w);
        f(String::from("classifier.b"), &self.b);
    }

    fn visit_mut(&mut self, f: &mut impl FnMut(String, &mut Tensor)) {
        f(String::from("classifier.w"), &mut self.w);
        f(String::from("classifier.b"), &mut self.b);
    }

    fn bind(&self, tape: &mut Tape, reg: &mut Vec<(String, TensorId)>) -> ClassifierParams<TensorId> {
        let w = tape.leaf(self.w.clone());
        reg.push((String::from("classifier.w"), w));
        let b = tape.leaf(self.b.clone());
        reg.push((String::from("classifier.b"), b));
        ClassifierParams { w, b }
    }
}

/// All learnable tensors, grouped per submodule. Which groups are present
/// depends on the variant.
#[derive(Debug, Clone)]
pub struct ModelParams {
    pub video_enc: BiGru<Tensor>,
    pub sent_enc: BiGru<Tensor>,
    pub interaction: Option<InteractionParams<Tensor>>,
    pub graph: Vec<GraphLayerParams<Tensor>>,
    pub pointer: Option<PointerParams<Tensor>>,
    pub classifier: Option<ClassifierParams<Tensor>>,
}

#[derive(Debug, Clone)]
pub struct Model {
    pub dims: ModelDims,
    pub variant: Variant,
    pub params: ModelParams,
}

/// Tape nodes produced by one forward pass, up to the pointer input.
struct ForwardNodes {
    u_s: TensorId,
    attention: Option<TensorId>,
    adjacency: Option<TensorId>,
    /// Per-clip features entering the pointer (or classifier): T×d.
    features: TensorId,
}

/// Inference output: the selected clip set plus exportable intermediates.
#[derive(Debug, Clone)]
pub struct Prediction {
    pub clips: Vec<usize>,
    pub selection: Option<PointerSelection>,
    /// Per-clip selection probabilities (no-pointer variant only).
    pub clip_scores: Option<Vec<f64>>,
    pub attention: Option<Tensor>,
    pub adjacency: Option<Tensor>,
}

impl Model {
    /// Build a freshly initialized model for the given variant; `build_variant`
    /// in the training flow resolves ablation tags to this constructor.
    pub fn init(dims: ModelDims, variant: Variant, seed: u64) -> Model {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let two_h = 2 * dims.hidden;
        let video_enc = BiGru::init(&mut rng, dims.d_v, dims.hidden);
        let sent_enc = BiGru::init(&mut rng, dims.d_w, dims.hidden);
        let with_graph = !matches!(variant, Variant::NoGraph);
        let interaction = with_graph.then(|| InteractionParams::init(&mut rng, two_h, dims.d_f));
        let graph = if with_graph {
            (0..dims.layer_count).map(|_| GraphLayerParams::init(&mut rng, dims.d_f)).collect()
        } else {
            Vec::new()
        };
        let (pointer, classifier) = match variant {
            Variant::NoPointer => (None, Some(ClassifierParams::init(&mut rng, dims.d_f))),
            _ => {
                let d_in = dims.pointer_input_dim(variant);
                (Some(PointerParams::init(&mut rng, d_in, two_h, dims.h_p, dims.hidden)), None)
            }
        };
        Model {
            dims,
            variant,
            params: ModelParams { video_enc, sent_enc, interaction, graph, pointer, classifier },
        }
    }

    /// Visit every parameter tensor in the fixed checkpoint order.
    pub fn visit(&self, f: &mut impl FnMut(String, &Tensor)) {
        self.params.video_enc.visit("video_enc", f);
        self.params.sent_enc.visit("sent_enc", f);
        if let Some(i) = &self.params.interaction {
            i.visit("interaction", f);
        }
        for (n, layer) in self.params.graph.iter().enumerate() {
            layer.visit(&alloc::format!("graph.{n}"), f);
        }
        if let Some(p) = &self.params.pointer {
            p.visit("pointer", f);
        }
        if let Some(c) = &self.params.classifier {
            c.visit(f);
        }
    }

    pub fn visit_mut(&mut self, f: &mut impl FnMut(String, &mut Tensor)) {
        self.params.video_enc.visit_mut("video_enc", f);
        self.params.sent_enc.visit_mut("sent_enc", f);
        if let Some(i) = &mut self.params.interaction {
            i.visit_mut("interaction", f);
        }
        for (n, layer) in self.params.graph.iter_mut().enumerate() {
            layer.visit_mut(&alloc::format!("graph.{n}"), f);
        }
        if let Some(p) = &mut self.params.pointer {
            p.visit_mut("pointer", f);
        }
        if let Some(c) = &mut self.params.classifier {
            c.visit_mut(f);
        }
    }

    pub fn param_count(&self) -> usize {
        let mut n = 0;
        self.visit(&mut |_, t| n += t.len());
        n
    }

    /// Round every parameter through 32-bit precision. Training applies this
    /// after initialization and after every update so checkpoints (stored as
    /// f32) round-trip without loss.
    pub fn quantize_f32(&mut self) {
        self.visit_mut(&mut |_, t| {
            for v in t.data_mut() {
                *v = *v as f32 as f64;
            }
        });
    }

    /// Bind all parameters onto a tape; the registry lists them in visit
    /// order for gradient extraction.
    fn bind(&self, tape: &mut Tape, reg: &mut Vec<(String, TensorId)>) -> BoundParams {
        let video_enc = self.params.video_enc.bind(tape, reg, "video_enc");
        let sent_enc = self.params.sent_enc.bind(tape, reg, "sent_enc");
        let interaction = self.params.interaction.as_ref().map(|i| i.bind(tape, reg, "interaction"));
        let graph = self
            .params
            .graph
            .iter()
            .enumerate()
            .map(|(n, l)| l.bind(tape, reg, &alloc::format!("graph.{n}")))
            .collect();
        let pointer = self.params.pointer.as_ref().map(|p| p.bind(tape, reg, "pointer"));
        let classifier = self.params.classifier.as_ref().map(|c| c.bind(tape, reg));
        BoundParams { video_enc, sent_enc, interaction, graph, pointer, classifier }
    }

    fn forward(&self, tape: &mut Tape, bound: &BoundParams, clips: &Tensor, words: &Tensor) -> ForwardNodes {
        let t_len = clips.rows();
        let clips_id = tape.leaf(clips.clone());
        let words_id = tape.leaf(words.clone());
        let u_v = encode_video(tape, clips_id, &bound.video_enc);
        let u_s = encode_sentence(tape, words_id, &bound.sent_enc);
        match self.variant {
            Variant::NoGraph => {
                // mean sentence encoding broadcast onto every clip row
                let mean = tape.mean_rows(u_s);
                let rows = vec![mean; t_len];
                let tiled = tape.stack_rows(&rows);
                let features = tape.concat_cols(u_v, tiled);
                ForwardNodes { u_s, attention: None, adjacency: None, features }
            }
            _ => {
                let ip = bound.interaction.as_ref().expect("interaction params present");
                let attention = word_clip_attention(tape, u_s, u_v, ip);
                let c_s = clip_specific_sentence(tape, attention, u_s);
                let h_i = fuse(tape, u_v, c_s, ip, self.dims.activation);
                let (g, h_g) = graph_stack(tape, h_i, &self.dims.graph_config(), &bound.graph);
                ForwardNodes { u_s, attention: Some(attention), adjacency: Some(g), features: h_g }
            }
        }
    }

    /// Supervised loss for one sample. `targets` are the pointer indices
    /// (ascending clip indices followed by the end slot T); the no-pointer
    /// variant reads them as the member clip set instead.
    ///
    /// With `teacher_forcing` each step's mask is conditioned on the previous
    /// ground-truth index; without it, on the model's own argmax.
    ///
    /// Returns the scalar loss node and the bound parameter registry.
    pub fn sample_loss(
        &self,
        tape: &mut Tape,
        clips: &Tensor,
        words: &Tensor,
        targets: &[usize],
        teacher_forcing: bool,
    ) -> (TensorId, Vec<(String, TensorId)>) {
        let mut reg = Vec::new();
        let bound = self.bind(tape, &mut reg);
        let fwd = self.forward(tape, &bound, clips, words);
        let loss = match self.variant {
            Variant::NoPointer => {
                let c = bound.classifier.as_ref().expect("classifier present");
                let lin = tape.matmul(fwd.features, c.w);
                let logits = tape.add_row(lin, c.b);
                let mut membership = vec![0.0; clips.rows()];
                for &t in targets {
                    if t < clips.rows() {
                        membership[t] = 1.0;
                    }
                }
                tape.bce_with_logits(logits, &membership)
            }
            _ => {
                let p = bound.pointer.as_ref().expect("pointer params present");
                let htilde = aggregate(tape, fwd.features, p, self.dims.aggregate_pointer_input);
                let total = tape.value(htilde).rows();
                let mut h = init_state(tape, fwd.u_s, p);
                let mut prev: Option<usize> = None;
                let mut loss: Option<TensorId> = None;
                for &target in targets {
                    let mask = step_mask(total, prev, self.variant.masked());
                    let (e, ptr, h_new) = decode_step(tape, htilde, h, &mask, p);
                    let step = tape.neg_log_pick(e, target);
                    loss = Some(match loss {
                        Some(acc) => tape.add(acc, step),
                        None => step,
                    });
                    prev = Some(if teacher_forcing { target } else { ptr });
                    h = h_new;
                }
                loss.expect("at least one target")
            }
        };
        (loss, reg)
    }

    /// Greedy inference for one sample.
    pub fn predict(&self, clips: &Tensor, words: &Tensor, min_one: bool) -> Prediction {
        let mut tape = Tape::new();
        let mut reg = Vec::new();
        let bound = self.bind(&mut tape, &mut reg);
        let fwd = self.forward(&mut tape, &bound, clips, words);
        match self.variant {
            Variant::NoPointer => {
                let c = bound.classifier.as_ref().expect("classifier present");
                let lin = tape.matmul(fwd.features, c.w);
                let logits = tape.add_row(lin, c.b);
                let scores: Vec<f64> =
                    tape.value(logits).data().iter().map(|l| crate::math::logistic(*l)).collect();
                // top-K by probability, ties toward the earlier clip
                let mut order: Vec<usize> = (0..scores.len()).collect();
                order.sort_by(|a, b| {
                    scores[*b].partial_cmp(&scores[*a]).unwrap().then(a.cmp(b))
                });
                let mut clips_sel: Vec<usize> =
                    order.into_iter().take(self.dims.k).collect();
                clips_sel.sort_unstable();
                Prediction {
                    clips: clips_sel,
                    selection: None,
                    clip_scores: Some(scores),
                    attention: fwd.attention.map(|a| tape.value(a).clone()),
                    adjacency: fwd.adjacency.map(|g| tape.value(g).clone()),
                }
            }
            _ => {
                let p = bound.pointer.as_ref().expect("pointer params present");
                let htilde = aggregate(&mut tape, fwd.features, p, self.dims.aggregate_pointer_input);
                let sel = decode(&mut tape, htilde, fwd.u_s, p, self.dims.k, self.variant.masked(), min_one);
                let clips_sel = sel.dedup_indices();
                Prediction {
                    clips: clips_sel,
                    selection: Some(sel),
                    clip_scores: None,
                    attention: fwd.attention.map(|a| tape.value(a).clone()),
                    adjacency: fwd.adjacency.map(|g| tape.value(g).clone()),
                }
            }
        }
    }

    /// Teacher-forced step distributions for one sample, for loss reporting
    /// and tests.
    pub fn teacher_distributions(
        &self,
        clips: &Tensor,
        words: &Tensor,
        targets: &[usize],
    ) -> Vec<StepDistribution> {
        assert!(!matches!(self.variant, Variant::NoPointer));
        let mut tape = Tape::new();
        let mut reg = Vec::new();
        let bound = self.bind(&mut tape, &mut reg);
        let fwd = self.forward(&mut tape, &bound, clips, words);
        let p = bound.pointer.as_ref().expect("pointer params present");
        let htilde = aggregate(&mut tape, fwd.features, p, self.dims.aggregate_pointer_input);
        let total = tape.value(htilde).rows();
        let mut h = init_state(&mut tape, fwd.u_s, p);
        let mut prev: Option<usize> = None;
        let mut out = Vec::new();
        for &target in targets {
            let mask = step_mask(total, prev, self.variant.masked());
            let (e, _, h_new) = decode_step(&mut tape, htilde, h, &mask, p);
            out.push(StepDistribution { probs: tape.value(e).row(0).to_vec() });
            prev = Some(target);
            h = h_new;
        }
        out
    }
}

struct BoundParams {
    video_enc: BiGru<TensorId>,
    sent_enc: BiGru<TensorId>,
    interaction: Option<InteractionParams<TensorId>>,
    graph: Vec<GraphLayerParams<TensorId>>,
    pointer: Option<PointerParams<TensorId>>,
    classifier: Option<ClassifierParams<TensorId>>,
}
