//! Sample types: per-clip features, tokenized sentences, multi-annotator
//! thumbnail labels, and the derived ground-truth annotation matrix.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq)]
pub enum DataError {
    /// Annotation index out of range, duplicated, or not strictly increasing.
    BadAnnotation(String),
    /// Sample-level structural problem (dimension or count mismatch).
    BadSample(String),
}

impl fmt::Display for DataError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DataError::BadAnnotation(msg) => write!(f, "bad annotation: {msg}"),
            DataError::BadSample(msg) => write!(f, "bad sample: {msg}"),
        }
    }
}

/// `T×K` binary matrix: entry (t, k) is 1 iff clip `t` is the k-th thumbnail
/// clip. Stored as the ordered index list; the matrix is derived.
#[derive(Debug, Clone, PartialEq)]
pub struct AnnotationMatrix {
    t: usize,
    k: usize,
    indices: Vec<usize>,
}

impl AnnotationMatrix {
    /// Build from strictly increasing clip indices, at most `k` of them, all
    /// below `t`.
    pub fn new(indices: &[usize], t: usize, k: usize) -> Result<Self, DataError> {
        if indices.len() > k {
            return Err(DataError::BadAnnotation(format!(
                "{} marked clips exceed the limit {k}",
                indices.len()
            )));
        }
        for w in indices.windows(2) {
            if w[1] <= w[0] {
                return Err(DataError::BadAnnotation(format!(
                    "indices must strictly increase, got {} after {}",
                    w[1], w[0]
                )));
            }
        }
        if let Some(&last) = indices.last() {
            if last >= t {
                return Err(DataError::BadAnnotation(format!("index {last} out of range for T={t}")));
            }
        }
        Ok(AnnotationMatrix { t, k, indices: indices.to_vec() })
    }

    pub fn t(&self) -> usize {
        self.t
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    /// Materialize the binary matrix (one-hot columns in selection order).
    pub fn dense(&self) -> Tensor {
        let mut b = Tensor::zeros(self.t, self.k);
        for (col, &row) in self.indices.iter().enumerate() {
            b.set(row, col, 1.0);
        }
        b
    }
}

/// One video-sentence pair with its four thumbnail annotations.
#[derive(Debug, Clone, PartialEq)]
pub struct VideoSample {
    pub id: String,
    /// T×d_v clip features.
    pub clips: Tensor,
    /// N×d_w word embeddings.
    pub words: Tensor,
    /// Word strings, display only.
    pub tokens: Vec<String>,
    /// Exactly four annotator clip-index sets, each strictly increasing.
    pub annotations: [Vec<usize>; 4],
}

impl VideoSample {
    /// Validate invariants: four in-range, strictly increasing annotations of
    /// size 1..=k, nonempty sequences, finite features.
    pub fn validate(&self, k: usize) -> Result<(), DataError> {
        if self.clips.rows() == 0 || self.words.rows() == 0 {
            return Err(DataError::BadSample(format!("{}: empty clip or word sequence", self.id)));
        }
        if !self.clips.all_finite() || !self.words.all_finite() {
            return Err(DataError::BadSample(format!("{}: non-finite features", self.id)));
        }
        if self.tokens.len() != self.words.rows() {
            return Err(DataError::BadSample(format!(
                "{}: {} tokens vs {} embedding rows",
                self.id,
                self.tokens.len(),
                self.words.rows()
            )));
        }
        for (i, ann) in self.annotations.iter().enumerate() {
            if ann.is_empty() {
                return Err(DataError::BadAnnotation(format!("{}: annotation {i} is empty", self.id)));
            }
            AnnotationMatrix::new(ann, self.clips.rows(), k)
                .map_err(|e| DataError::BadAnnotation(format!("{} annotation {i}: {e}", self.id)))?;
        }
        Ok(())
    }

    /// Ground-truth annotation chosen by consistency, as a matrix.
    pub fn ground_truth(&self, k: usize) -> Result<AnnotationMatrix, DataError> {
        let chosen = select_ground_truth(&self.annotations);
        AnnotationMatrix::new(&self.annotations[chosen], self.clips.rows(), k)
    }
}

fn iou(a: &[usize], b: &[usize]) -> f64 {
    let inter = a.iter().filter(|x| b.contains(x)).count();
    let union = a.len() + b.len() - inter;
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}

/// Mean pairwise overlap of one annotator's set against the other three.
pub fn consistency_of(annotations: &[Vec<usize>; 4], i: usize) -> f64 {
    let mut sum = 0.0;
    for j in 0..4 {
        if j != i {
            sum += iou(&annotations[i], &annotations[j]);
        }
    }
    sum / 3.0
}

/// Index of the annotation with the highest consistency; ties break toward
/// the lowest annotator index.
pub fn select_ground_truth(annotations: &[Vec<usize>; 4]) -> usize {
    let mut best = 0;
    let mut best_score = consistency_of(annotations, 0);
    for i in 1..4 {
        let s = consistency_of(annotations, i);
        if s > best_score {
            best = i;
            best_score = s;
        }
    }
    best
}

/// Free-function form of `AnnotationMatrix::new`.
pub fn build_annotation_matrix(indices: &[usize], t: usize, k: usize) -> Result<AnnotationMatrix, DataError> {
    AnnotationMatrix::new(indices, t, k)
}

/// Supervised pointer targets: the marked clip indices in order, then the end
/// slot index T.
pub fn pointer_targets(b: &AnnotationMatrix) -> Vec<usize> {
    let mut v = b.indices().to_vec();
    v.push(b.t());
    v
}
