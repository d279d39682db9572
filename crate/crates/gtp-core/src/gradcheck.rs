//! Finite-difference verification of the tape gradients across every
//! parameter of a bound model.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::model::Model;
use crate::tape::Tape;
use crate::tensor::Tensor;

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    /// Worst relative error per parameter tensor, in visit order.
    pub per_tensor: Vec<(String, f64)>,
    pub worst: f64,
    pub worst_name: String,
    pub pass: bool,
    pub tolerance: f64,
}

/// Central differences carry cancellation noise around 1e-11 for unit-scale
/// losses; disagreements below this are indistinguishable from that noise.
const ABS_AGREEMENT: f64 = 1e-7;

/// Relative error with an absolute floor so near-zero gradients compare
/// sensibly.
pub fn rel_err(a: f64, n: f64) -> f64 {
    let scale = a.abs().max(n.abs()).max(1e-8);
    (a - n).abs() / scale
}

/// Error for one entry: relative error, except that absolute agreement within
/// the noise floor of the differencing counts as exact.
pub fn entry_err(a: f64, n: f64) -> f64 {
    if (a - n).abs() <= ABS_AGREEMENT {
        0.0
    } else {
        rel_err(a, n)
    }
}

fn eval_loss(model: &Model, clips: &Tensor, words: &Tensor, targets: &[usize]) -> Result<f64, String> {
    let mut tape = Tape::new();
    let (loss, _) = model.sample_loss(&mut tape, clips, words, targets, true);
    let v = tape.value(loss).get(0, 0);
    if !v.is_finite() {
        let op = tape.first_nonfinite().map(|(_, n)| n).unwrap_or("unknown");
        return Err(format!("non-finite loss during finite differencing (op {op})"));
    }
    Ok(v)
}

/// Analytic gradients from one backward pass, named and in visit order.
pub fn analytic_grads(
    model: &Model,
    clips: &Tensor,
    words: &Tensor,
    targets: &[usize],
) -> Result<Vec<(String, Tensor)>, String> {
    let mut tape = Tape::new();
    let (loss, reg) = model.sample_loss(&mut tape, clips, words, targets, true);
    let v = tape.value(loss).get(0, 0);
    if !v.is_finite() {
        let op = tape.first_nonfinite().map(|(_, n)| n).unwrap_or("unknown");
        return Err(format!("non-finite loss before backward (op {op})"));
    }
    tape.backward(loss);
    Ok(reg.into_iter().map(|(name, id)| (name, tape.grad(id))).collect())
}

fn set_entry(model: &mut Model, tensor_idx: usize, entry: usize, value: f64) {
    let mut i = 0;
    model.visit_mut(&mut |_, t| {
        if i == tensor_idx {
            t.data_mut()[entry] = value;
        }
        i += 1;
    });
}

/// Central-difference gradients, one loss pair per parameter entry.
pub fn numeric_grads(
    model: &mut Model,
    clips: &Tensor,
    words: &Tensor,
    targets: &[usize],
    eps: f64,
) -> Result<Vec<Tensor>, String> {
    let mut shapes = Vec::new();
    model.visit(&mut |_, t| shapes.push((t.rows(), t.cols(), t.data().to_vec())));
    let mut out = Vec::with_capacity(shapes.len());
    for (ti, (rows, cols, base)) in shapes.iter().enumerate() {
        let mut g = Tensor::zeros(*rows, *cols);
        for (j, &b) in base.iter().enumerate() {
            set_entry(model, ti, j, b + eps);
            let up = eval_loss(model, clips, words, targets)?;
            set_entry(model, ti, j, b - eps);
            let down = eval_loss(model, clips, words, targets)?;
            set_entry(model, ti, j, b);
            g.data_mut()[j] = (up - down) / (2.0 * eps);
        }
        out.push(g);
    }
    Ok(out)
}

/// Worst relative error per tensor and overall.
pub fn compare(analytic: &[(String, Tensor)], numeric: &[Tensor], tolerance: f64) -> GradCheckReport {
    assert_eq!(analytic.len(), numeric.len());
    let mut per_tensor = Vec::with_capacity(analytic.len());
    let mut worst = 0.0;
    let mut worst_name = String::new();
    for ((name, a), n) in analytic.iter().zip(numeric) {
        let mut tensor_worst = 0.0f64;
        for (av, nv) in a.data().iter().zip(n.data()) {
            tensor_worst = tensor_worst.max(entry_err(*av, *nv));
        }
        if tensor_worst > worst {
            worst = tensor_worst;
            worst_name = name.clone();
        }
        per_tensor.push((name.clone(), tensor_worst));
    }
    GradCheckReport { per_tensor, worst, worst_name, pass: worst <= tolerance, tolerance }
}

/// Check every parameter gradient of `model` on one sample against central
/// differences.
pub fn grad_check(
    model: &mut Model,
    clips: &Tensor,
    words: &Tensor,
    targets: &[usize],
    eps: f64,
    tolerance: f64,
) -> Result<GradCheckReport, String> {
    let analytic = analytic_grads(model, clips, words, targets)?;
    let numeric = numeric_grads(model, clips, words, targets, eps)?;
    Ok(compare(&analytic, &numeric, tolerance))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gru::xavier;
    use crate::model::{ModelDims, Variant};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn inputs(t: usize, n: usize, d_v: usize, d_w: usize, seed: u64) -> (Tensor, Tensor) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (xavier(&mut rng, t, d_v), xavier(&mut rng, n, d_w))
    }

    #[test]
    fn rel_err_floors_near_zero() {
        assert_eq!(rel_err(0.0, 0.0), 0.0);
        assert!((rel_err(2.0, 1.0) - 0.5).abs() < 1e-12);
        assert!(rel_err(1e-12, 0.0) < 1e-3);
    }

    #[test]
    fn full_variant_tiny_gradcheck_passes() {
        let mut dims = ModelDims::tiny(4, 4, 3);
        dims.lambda = 5.0; // keep the softmax away from saturation at this scale
        let mut model = Model::init(dims, Variant::Full, 21);
        let (clips, words) = inputs(4, 3, 4, 4, 1);
        let report = grad_check(&mut model, &clips, &words, &[1, 3, 4], 1e-5, 1e-4).unwrap();
        assert!(report.pass, "worst {} at {}", report.worst, report.worst_name);
    }

    #[test]
    fn no_graph_variant_gradcheck_passes() {
        let dims = ModelDims::tiny(4, 4, 3);
        let mut model = Model::init(dims, Variant::NoGraph, 23);
        let (clips, words) = inputs(4, 3, 4, 4, 2);
        let report = grad_check(&mut model, &clips, &words, &[0, 2, 4], 1e-5, 1e-4).unwrap();
        assert!(report.pass, "worst {} at {}", report.worst, report.worst_name);
    }

    #[test]
    fn no_pointer_variant_gradcheck_passes() {
        let dims = ModelDims::tiny(4, 4, 3);
        let mut model = Model::init(dims, Variant::NoPointer, 25);
        let (clips, words) = inputs(5, 3, 4, 4, 3);
        let report = grad_check(&mut model, &clips, &words, &[1, 3], 1e-5, 1e-4).unwrap();
        assert!(report.pass, "worst {} at {}", report.worst, report.worst_name);
    }

    #[test]
    fn corrupted_gradient_is_detected() {
        let dims = ModelDims::tiny(4, 4, 3);
        let mut model = Model::init(dims, Variant::NoGraph, 27);
        let (clips, words) = inputs(4, 3, 4, 4, 4);
        let mut analytic = analytic_grads(&model, &clips, &words, &[1, 4]).unwrap();
        let numeric = numeric_grads(&mut model, &clips, &words, &[1, 4], 1e-5).unwrap();
        // doubling one tensor's gradient must break the check
        let victim = analytic
            .iter()
            .position(|(_, g)| g.data().iter().any(|v| v.abs() > 1e-3))
            .expect("some tensor has a visible gradient");
        for v in analytic[victim].1.data_mut() {
            *v *= 2.0;
        }
        let report = compare(&analytic, &numeric, 1e-4);
        assert!(!report.pass);
        assert_eq!(report.worst_name, analytic[victim].0);
    }
}
