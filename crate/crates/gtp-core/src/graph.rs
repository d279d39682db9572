//! Sentence-specified clip affinity graph and stacked graph convolutions.
//!
//! The affinity matrix is the Gram matrix of the interaction features; its
//! rows are exp-normalized (with the scaling factor λ) into a row-stochastic
//! adjacency. Each convolution layer computes `(G+I)·X·W`, then per-row layer
//! normalization and the configured activation.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::Rng;

use crate::gru::xavier;
use crate::interaction::Activation;
use crate::tape::{Tape, TensorId};
use crate::tensor::Tensor;

#[derive(Debug, Clone)]
pub struct GraphConfig {
    pub layer_count: usize,
    pub lambda: f64,
    pub activation: Activation,
    pub layer_norm_eps: f64,
    /// Recompute the adjacency from each layer's input instead of sharing the
    /// one built from `H_I`. Off by default.
    pub per_layer_adjacency: bool,
}

impl Default for GraphConfig {
    fn default() -> Self {
        GraphConfig {
            layer_count: 2,
            lambda: 150.0,
            activation: Activation::Relu,
            layer_norm_eps: 1e-5,
            per_layer_adjacency: false,
        }
    }
}

/// One convolution layer: square weights plus layer-norm gain and bias.
#[derive(Debug, Clone)]
pub struct GraphLayerParams<P> {
    pub w_g: P,
    pub ln_gain: P,
    pub ln_bias: P,
}

impl GraphLayerParams<Tensor> {
    pub fn init(rng: &mut impl Rng, d_f: usize) -> Self {
        GraphLayerParams {
            w_g: xavier(rng, d_f, d_f),
            ln_gain: Tensor::from_vec(1, d_f, alloc::vec![1.0; d_f]),
            ln_bias: Tensor::zeros(1, d_f),
        }
    }

    pub fn visit(&self, prefix: &str, f: &mut impl FnMut(String, &Tensor)) {
        f(format!("{prefix}.w_g"), &self.w_g);
        f(format!("{prefix}.ln_gain"), &self.ln_gain);
        f(format!("{prefix}.ln_bias"), &self.ln_bias);
    }

    pub fn visit_mut(&mut self, prefix: &str, f: &mut impl FnMut(String, &mut Tensor)) {
        f(format!("{prefix}.w_g"), &mut self.w_g);
        f(format!("{prefix}.ln_gain"), &mut self.ln_gain);
        f(format!("{prefix}.ln_bias"), &mut self.ln_bias);
    }

    pub fn bind(
        &self,
        tape: &mut Tape,
        reg: &mut Vec<(String, TensorId)>,
        prefix: &str,
    ) -> GraphLayerParams<TensorId> {
        let mut leaf = |name: &str, t: &Tensor| {
            let id = tape.leaf(t.clone());
            reg.push((format!("{prefix}.{name}"), id));
            id
        };
        GraphLayerParams {
            w_g: leaf("w_g", &self.w_g),
            ln_gain: leaf("ln_gain", &self.ln_gain),
            ln_bias: leaf("ln_bias", &self.ln_bias),
        }
    }
}

/// Symmetric affinity `F = H_I·H_Iᵀ`.
pub fn affinity(tape: &mut Tape, h_i: TensorId) -> TensorId {
    let ht = tape.transpose(h_i);
    tape.matmul(h_i, ht)
}

/// Row-stochastic adjacency: stable row softmax of `λ·F`.
pub fn adjacency(tape: &mut Tape, f: TensorId, lambda: f64) -> TensorId {
    assert!(lambda >= 0.0, "lambda must be nonnegative");
    tape.softmax_rows(f, lambda)
}

/// One layer: `(G+I)·X·W`, per-row layer norm, activation.
pub fn graph_conv_layer(
    tape: &mut Tape,
    g: TensorId,
    x: TensorId,
    p: &GraphLayerParams<TensorId>,
    config: &GraphConfig,
) -> TensorId {
    let gx = tape.matmul(g, x);
    let mixed = tape.add(gx, x); // (G+I)X
    let lin = tape.matmul(mixed, p.w_g);
    let normed = tape.layer_norm_rows(lin, p.ln_gain, p.ln_bias, config.layer_norm_eps);
    config.activation.apply(tape, normed)
}

/// Full stack: adjacency from `H_I` shared across layers (unless
/// `per_layer_adjacency`), layers applied in order. Returns `(G, H_G)`.
pub fn graph_stack(
    tape: &mut Tape,
    h_i: TensorId,
    config: &GraphConfig,
    layers: &[GraphLayerParams<TensorId>],
) -> (TensorId, TensorId) {
    assert_eq!(layers.len(), config.layer_count, "layer parameter count mismatch");
    let f = affinity(tape, h_i);
    let g = adjacency(tape, f, config.lambda);
    let mut x = h_i;
    let mut g_cur = g;
    for (i, p) in layers.iter().enumerate() {
        if config.per_layer_adjacency && i > 0 {
            let f_cur = affinity(tape, x);
            g_cur = adjacency(tape, f_cur, config.lambda);
        }
        x = graph_conv_layer(tape, g_cur, x, p, config);
    }
    (g, x)
}
