//! Planted-structure synthetic corpora for desk-scale training.
//!
//! Each corpus fixes a small set of concepts, each with a video-space and a
//! word-space prototype. Clips draw a concept; the sentence names one to
//! three target concepts plus filler tokens; the planted thumbnail is the set
//! of clips matching a target concept (truncated to K in temporal order).
//! The four annotations perturb the planted set independently at the
//! configured noise rate.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::VideoSample;
use crate::tensor::Tensor;

#[derive(Debug, Clone)]
pub struct SynthConfig {
    pub sample_count: usize,
    /// Inclusive clip-count range.
    pub t_min: usize,
    pub t_max: usize,
    /// Inclusive filler-token range; total words = targets + fillers.
    pub n_filler_min: usize,
    pub n_filler_max: usize,
    pub d_v: usize,
    pub d_w: usize,
    pub concept_count: usize,
    /// Per-element annotator corruption probability.
    pub noise_rate: f64,
    pub k: usize,
    pub seed: u64,
}

impl SynthConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.t_min == 0 || self.t_min > self.t_max {
            return Err(format!("bad clip range {}..={}", self.t_min, self.t_max));
        }
        if self.n_filler_min > self.n_filler_max {
            return Err(format!("bad filler range {}..={}", self.n_filler_min, self.n_filler_max));
        }
        if !(0.0..=1.0).contains(&self.noise_rate) {
            return Err(format!("noise rate {} outside [0,1]", self.noise_rate));
        }
        if self.concept_count == 0 || self.k == 0 {
            return Err(String::from("concept count and k must be positive"));
        }
        Ok(())
    }
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            sample_count: 32,
            t_min: 8,
            t_max: 12,
            n_filler_min: 2,
            n_filler_max: 4,
            d_v: 16,
            d_w: 16,
            concept_count: 6,
            noise_rate: 0.0,
            k: 5,
            seed: 0,
        }
    }
}

/// A generated sample with its planted thumbnail (the noise-free truth).
#[derive(Debug, Clone, PartialEq)]
pub struct SynthSample {
    pub sample: VideoSample,
    pub truth: Vec<usize>,
}

fn quantized_uniform(rng: &mut impl Rng, rows: usize, cols: usize, scale: f64) -> Tensor {
    // values are rounded through f32 so binary feature files round-trip
    let mut t = Tensor::zeros(rows, cols);
    for v in t.data_mut() {
        *v = (rng.gen_range(-scale..scale) as f32) as f64;
    }
    t
}

fn perturb_annotation(
    rng: &mut impl Rng,
    truth: &[usize],
    t: usize,
    k: usize,
    noise: f64,
) -> Vec<usize> {
    let mut out: Vec<usize> = Vec::new();
    for &idx in truth {
        if rng.gen_bool(noise) {
            // half the corruptions drop the clip, half move it
            if rng.gen_bool(0.5) {
                continue;
            }
            out.push(rng.gen_range(0..t));
        } else {
            out.push(idx);
        }
    }
    out.sort_unstable();
    out.dedup();
    out.truncate(k);
    if out.is_empty() {
        out.push(truth[0]);
    }
    out
}

/// Deterministic corpus generation; per-sample generators are derived from
/// the corpus seed, so sample `i` is stable regardless of batching.
pub fn synth_generate(config: &SynthConfig) -> Result<Vec<SynthSample>, String> {
    config.validate()?;
    let mut proto_rng = ChaCha8Rng::seed_from_u64(config.seed);
    let video_protos: Vec<Tensor> = (0..config.concept_count)
        .map(|_| quantized_uniform(&mut proto_rng, 1, config.d_v, 1.0))
        .collect();
    let word_protos: Vec<Tensor> = (0..config.concept_count)
        .map(|_| quantized_uniform(&mut proto_rng, 1, config.d_w, 1.0))
        .collect();

    let mut out = Vec::with_capacity(config.sample_count);
    for i in 0..config.sample_count {
        let mut rng =
            ChaCha8Rng::seed_from_u64(config.seed ^ (i as u64).wrapping_mul(0x9e3779b97f4a7c15));
        let t = rng.gen_range(config.t_min..=config.t_max);
        let target_count = rng.gen_range(1..=3usize.min(config.concept_count));
        let mut targets: Vec<usize> = Vec::new();
        while targets.len() < target_count {
            let c = rng.gen_range(0..config.concept_count);
            if !targets.contains(&c) {
                targets.push(c);
            }
        }

        let mut clip_concepts: Vec<usize> =
            (0..t).map(|_| rng.gen_range(0..config.concept_count)).collect();
        if !clip_concepts.iter().any(|c| targets.contains(c)) {
            let pos = rng.gen_range(0..t);
            clip_concepts[pos] = targets[0];
        }

        let mut clips = Tensor::zeros(t, config.d_v);
        for (row, &concept) in clip_concepts.iter().enumerate() {
            let noise = quantized_uniform(&mut rng, 1, config.d_v, 0.1);
            for c in 0..config.d_v {
                let v = video_protos[concept].get(0, c) + noise.get(0, c);
                clips.set(row, c, (v as f32) as f64);
            }
        }

        let filler_count = rng.gen_range(config.n_filler_min..=config.n_filler_max);
        let n = target_count + filler_count;
        let mut words = Tensor::zeros(n, config.d_w);
        let mut tokens = Vec::with_capacity(n);
        // target words first, fillers after; positions carry no signal since
        // the encoder is bidirectional
        for (row, &concept) in targets.iter().enumerate() {
            let noise = quantized_uniform(&mut rng, 1, config.d_w, 0.05);
            for c in 0..config.d_w {
                let v = word_protos[concept].get(0, c) + noise.get(0, c);
                words.set(row, c, (v as f32) as f64);
            }
            tokens.push(format!("concept{concept}"));
        }
        for row in 0..filler_count {
            let filler = quantized_uniform(&mut rng, 1, config.d_w, 0.3);
            for c in 0..config.d_w {
                words.set(target_count + row, c, filler.get(0, c));
            }
            tokens.push(format!("filler{row}"));
        }

        let mut truth: Vec<usize> = clip_concepts
            .iter()
            .enumerate()
            .filter(|(_, c)| targets.contains(c))
            .map(|(idx, _)| idx)
            .collect();
        truth.truncate(config.k);

        let annotations = [
            perturb_annotation(&mut rng, &truth, t, config.k, config.noise_rate),
            perturb_annotation(&mut rng, &truth, t, config.k, config.noise_rate),
            perturb_annotation(&mut rng, &truth, t, config.k, config.noise_rate),
            perturb_annotation(&mut rng, &truth, t, config.k, config.noise_rate),
        ];

        let sample = VideoSample {
            id: format!("synth-{:06}", i),
            clips,
            words,
            tokens,
            annotations,
        };
        sample.validate(config.k).map_err(|e| format!("generated invalid sample: {e}"))?;
        out.push(SynthSample { sample, truth });
    }
    Ok(out)
}
