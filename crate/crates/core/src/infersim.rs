//! Visual similarity: run target samples through the frozen source head and
//! score each source output, taken as a binary detector of each target
//! class, by its F1.

use std::path::Path;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::matrixio::{
    read_matrix, write_matrix_with_comment, FeatureDataset, Matrix, PredictionRecord,
};

/// Final linear layer: one weight row and one bias per class.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierHead {
    weights: Matrix,
    bias: Vec<f64>,
}

pub(crate) const HEAD_COMMENT: &str =
    "classifier head: one row per class, feature weights then bias in the last column";

impl ClassifierHead {
    pub fn new(weights: Matrix, bias: Vec<f64>) -> Result<Self> {
        if bias.len() != weights.rows() {
            return Err(Error::DimensionMismatch {
                expected: weights.rows(),
                found: bias.len(),
            });
        }
        if bias.iter().any(|b| !b.is_finite()) {
            return Err(Error::NonFinite {
                line: 0,
                token: "bias".into(),
            });
        }
        Ok(ClassifierHead { weights, bias })
    }

    pub fn zeros(classes: usize, dim: usize) -> Self {
        ClassifierHead {
            weights: Matrix::zeros(classes, dim),
            bias: vec![0.0; classes],
        }
    }

    pub fn classes(&self) -> usize {
        self.weights.rows()
    }

    pub fn dim(&self) -> usize {
        self.weights.cols()
    }

    pub fn weights(&self) -> &Matrix {
        &self.weights
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub(crate) fn parts_mut(&mut self) -> (&mut Matrix, &mut [f64]) {
        (&mut self.weights, &mut self.bias)
    }

    /// `W x + b`.
    pub fn logits(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: x.len(),
            });
        }
        Ok(self.logits_unchecked(x))
    }

    pub(crate) fn logits_unchecked(&self, x: &[f64]) -> Vec<f64> {
        self.weights
            .iter_rows()
            .zip(&self.bias)
            .map(|(w, b)| w.iter().zip(x).map(|(a, v)| a * v).sum::<f64>() + b)
            .collect()
    }

    /// Index of the largest logit, lowest index on ties.
    pub fn predict(&self, x: &[f64]) -> Result<usize> {
        Ok(argmax(&self.logits(x)?))
    }

    /// Weights with the bias appended as a final column.
    pub fn to_augmented(&self) -> Matrix {
        let rows: Vec<Vec<f64>> = self
            .weights
            .iter_rows()
            .zip(&self.bias)
            .map(|(w, &b)| w.iter().copied().chain([b]).collect())
            .collect();
        Matrix::from_rows(&rows).expect("head rows share a width")
    }

    /// Splits a `classes x (dim + 1)` matrix whose last column is the bias.
    pub fn from_augmented(m: &Matrix) -> Result<Self> {
        if m.cols() < 2 {
            return Err(Error::Shape(format!(
                "head matrix needs at least 2 columns (weights + bias), got {}",
                m.cols()
            )));
        }
        let dim = m.cols() - 1;
        let mut weights = Vec::with_capacity(m.rows() * dim);
        let mut bias = Vec::with_capacity(m.rows());
        for row in m.iter_rows() {
            weights.extend_from_slice(&row[..dim]);
            bias.push(row[dim]);
        }
        ClassifierHead::new(Matrix::new(m.rows(), dim, weights)?, bias)
    }
}

pub(crate) fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

pub fn read_head(path: impl AsRef<Path>) -> Result<ClassifierHead> {
    ClassifierHead::from_augmented(&read_matrix(path)?)
}

pub fn write_head(head: &ClassifierHead, path: impl AsRef<Path>) -> Result<()> {
    write_matrix_with_comment(&head.to_augmented(), HEAD_COMMENT, path)
}

/// Target x source similarities, every entry in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityMatrix {
    values: Matrix,
}

impl SimilarityMatrix {
    pub fn new(values: Matrix) -> Result<Self> {
        for i in 0..values.rows() {
            for (j, &v) in values.row(i).iter().enumerate() {
                if !(0.0..=1.0).contains(&v) {
                    return Err(Error::SimilarityRange { row: i, col: j, value: v });
                }
            }
        }
        Ok(SimilarityMatrix { values })
    }

    pub fn n_targets(&self) -> usize {
        self.values.rows()
    }

    pub fn n_sources(&self) -> usize {
        self.values.cols()
    }

    pub fn get(&self, target: usize, source: usize) -> f64 {
        self.values.get(target, source)
    }

    pub fn row(&self, target: usize) -> &[f64] {
        self.values.row(target)
    }

    pub fn values(&self) -> &Matrix {
        &self.values
    }

    pub fn into_matrix(self) -> Matrix {
        self.values
    }
}

/// Argmax source output for every sample; sample ids are the 0-based
/// sample positions.
pub fn predict_source(head: &ClassifierHead, features: &FeatureDataset) -> Result<Vec<PredictionRecord>> {
    if features.dim() != head.dim() {
        return Err(Error::DimensionMismatch {
            expected: head.dim(),
            found: features.dim(),
        });
    }
    Ok(features
        .samples()
        .par_iter()
        .enumerate()
        .map(|(i, s)| PredictionRecord {
            sample_id: i.to_string(),
            target_class: s.class,
            predicted_source: argmax(&head.logits_unchecked(&s.features)),
        })
        .collect())
}

/// Balanced F1 from confusion counts; 0 whenever `tp == 0`.
pub fn fscore(tp: usize, fp: usize, fn_: usize) -> f64 {
    if tp == 0 {
        return 0.0;
    }
    let precision = tp as f64 / (tp + fp) as f64;
    let recall = tp as f64 / (tp + fn_) as f64;
    2.0 * precision * recall / (precision + recall)
}

/// `sim(i, j)` is the F1 of "source output j fired" as a detector of
/// "sample belongs to target class i".
pub fn inference_similarity_matrix(
    preds: &[PredictionRecord],
    n_targets: usize,
    n_sources: usize,
) -> Result<SimilarityMatrix> {
    if preds.is_empty() {
        return Err(Error::EmptyPredictions);
    }
    if n_targets == 0 || n_sources == 0 {
        return Err(Error::Shape("need at least one target and one source class".into()));
    }
    let mut joint = vec![0usize; n_targets * n_sources];
    let mut per_target = vec![0usize; n_targets];
    let mut per_source = vec![0usize; n_sources];
    for p in preds {
        if p.target_class >= n_targets {
            return Err(Error::IndexOutOfRange {
                what: "target class",
                index: p.target_class,
                size: n_targets,
            });
        }
        if p.predicted_source >= n_sources {
            return Err(Error::IndexOutOfRange {
                what: "source class",
                index: p.predicted_source,
                size: n_sources,
            });
        }
        joint[p.target_class * n_sources + p.predicted_source] += 1;
        per_target[p.target_class] += 1;
        per_source[p.predicted_source] += 1;
    }

    let mut values = Matrix::zeros(n_targets, n_sources);
    for i in 0..n_targets {
        for j in 0..n_sources {
            let tp = joint[i * n_sources + j];
            values.set(i, j, fscore(tp, per_source[j] - tp, per_target[i] - tp));
        }
    }
    SimilarityMatrix::new(values)
}
