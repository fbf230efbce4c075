//! Softmax head training over fixed feature vectors: mean cross-entropy,
//! inverted dropout on the input features, Adam with bias correction.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::infersim::{argmax, fscore, ClassifierHead};
use crate::matrixio::{format_f64, FeatureDataset, Matrix, Sample};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub batch_size: usize,
    pub dropout_rate: f64,
    pub epochs: usize,
    pub seed: u64,
    pub eval_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            batch_size: 64,
            dropout_rate: 0.75,
            epochs: 30,
            seed: 0,
            eval_every: 10,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidConfig(what.to_string()));
        if !(self.learning_rate > 0.0) {
            return bad("learning_rate must be positive");
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return bad("beta1 and beta2 must lie in [0, 1)");
        }
        if !(self.epsilon > 0.0) {
            return bad("epsilon must be positive");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1");
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return bad("dropout_rate must lie in [0, 1)");
        }
        if self.eval_every == 0 {
            return bad("eval_every must be at least 1");
        }
        Ok(())
    }
}

/// First and second moment estimates for every head parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub step: u64,
    m_w: Vec<f64>,
    v_w: Vec<f64>,
    m_b: Vec<f64>,
    v_b: Vec<f64>,
}

impl AdamState {
    pub fn new(head: &ClassifierHead) -> Self {
        let nw = head.classes() * head.dim();
        let nb = head.classes();
        AdamState {
            step: 0,
            m_w: vec![0.0; nw],
            v_w: vec![0.0; nw],
            m_b: vec![0.0; nb],
            v_b: vec![0.0; nb],
        }
    }
}

/// One bias-corrected Adam update at (1-based) step `t`.
pub fn adam_update(
    params: &mut [f64],
    grads: &[f64],
    m: &mut [f64],
    v: &mut [f64],
    t: u64,
    config: &TrainConfig,
) {
    let (b1, b2) = (config.beta1, config.beta2);
    let c1 = 1.0 - b1.powi(t as i32);
    let c2 = 1.0 - b2.powi(t as i32);
    for (((p, &g), m), v) in params.iter_mut().zip(grads).zip(m.iter_mut()).zip(v.iter_mut()) {
        *m = b1 * *m + (1.0 - b1) * g;
        *v = b2 * *v + (1.0 - b2) * g * g;
        let m_hat = *m / c1;
        let v_hat = *v / c2;
        *p -= config.learning_rate * m_hat / (v_hat.sqrt() + config.epsilon);
    }
}

fn softmax_in_place(z: &mut [f64]) {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for v in z.iter_mut() {
        *v = (*v - max).exp();
        total += *v;
    }
    z.iter_mut().for_each(|v| *v /= total);
}

/// `log(sum exp z) - z_y`, stable for large logits.
fn cross_entropy(z: &[f64], y: usize) -> f64 {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + z.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
    lse - z[y]
}

/// Class probabilities `softmax(W x + b)`.
pub fn forward(head: &ClassifierHead, x: &[f64]) -> Result<Vec<f64>> {
    let mut z = head.logits(x)?;
    softmax_in_place(&mut z);
    Ok(z)
}

/// Gradient of the mean cross-entropy over a batch.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadGradient {
    pub loss: f64,
    pub weights: Matrix,
    pub bias: Vec<f64>,
}

/// Loss and analytic gradient over `(features, class)` pairs, no dropout.
pub fn loss_and_gradient(head: &ClassifierHead, batch: &[(&[f64], usize)]) -> Result<HeadGradient> {
    if batch.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let (n, d) = (head.classes(), head.dim());
    let mut gw = Matrix::zeros(n, d);
    let mut gb = vec![0.0; n];
    let mut loss = 0.0;
    for &(x, y) in batch {
        if y >= n {
            return Err(Error::IndexOutOfRange {
                what: "target class",
                index: y,
                size: n,
            });
        }
        let z = head.logits(x)?;
        loss += cross_entropy(&z, y);
        let mut p = z;
        softmax_in_place(&mut p);
        p[y] -= 1.0;
        for (k, &delta) in p.iter().enumerate() {
            gb[k] += delta;
            for (g, &xv) in gw.row_mut(k).iter_mut().zip(x) {
                *g += delta * xv;
            }
        }
    }
    let scale = 1.0 / batch.len() as f64;
    let weights = Matrix::new(n, d, gw.data().iter().map(|g| g * scale).collect())?;
    gb.iter_mut().for_each(|g| *g *= scale);
    Ok(HeadGradient {
        loss: loss * scale,
        weights,
        bias: gb,
    })
}

/// Applies inverted dropout to a copy of `x`.
fn dropout<R: Rng>(x: &[f64], rate: f64, rng: &mut R) -> Vec<f64> {
    if rate == 0.0 {
        return x.to_vec();
    }
    let scale = 1.0 / (1.0 - rate);
    x.iter()
        .map(|&v| if rng.random::<f64>() < rate { 0.0 } else { v * scale })
        .collect()
}

/// One optimizer step on `batch`; returns the (dropped-out) batch loss.
pub fn grad_step<R: Rng>(
    head: &mut ClassifierHead,
    batch: &[&Sample],
    config: &TrainConfig,
    state: &mut AdamState,
    rng: &mut R,
) -> Result<f64> {
    if state.m_b.len() != head.classes() || state.m_w.len() != head.classes() * head.dim() {
        return Err(Error::Shape("Adam state does not match head".into()));
    }
    let dropped: Vec<Vec<f64>> = batch
        .iter()
        .map(|s| dropout(&s.features, config.dropout_rate, rng))
        .collect();
    let pairs: Vec<(&[f64], usize)> = dropped
        .iter()
        .zip(batch)
        .map(|(x, s)| (x.as_slice(), s.class))
        .collect();
    let grad = loss_and_gradient(head, &pairs)?;

    state.step += 1;
    let t = state.step;
    let (weights, bias) = head.parts_mut();
    adam_update(weights.data_mut(), grad.weights.data(), &mut state.m_w, &mut state.v_w, t, config);
    adam_update(bias, &grad.bias, &mut state.m_b, &mut state.v_b, t, config);
    Ok(grad.loss)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub macro_f1: f64,
    pub per_class_f1: Vec<f64>,
    pub loss: f64,
    /// How many samples were predicted as each class.
    pub predicted_counts: Vec<usize>,
    pub true_counts: Vec<usize>,
}

/// Argmax predictions, per-class F1 and their unweighted mean, and mean
/// cross-entropy. Never mutates the head.
pub fn evaluate(head: &ClassifierHead, data: &FeatureDataset) -> Result<Evaluation> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if data.dim() != head.dim() {
        return Err(Error::DimensionMismatch {
            expected: head.dim(),
            found: data.dim(),
        });
    }
    let n = head.classes();
    let mut tp = vec![0usize; n];
    let mut predicted = vec![0usize; n];
    let mut truth = vec![0usize; n];
    let mut loss = 0.0;
    for s in data.samples() {
        if s.class >= n {
            return Err(Error::IndexOutOfRange {
                what: "target class",
                index: s.class,
                size: n,
            });
        }
        let z = head.logits_unchecked(&s.features);
        loss += cross_entropy(&z, s.class);
        let p = argmax(&z);
        predicted[p] += 1;
        truth[s.class] += 1;
        if p == s.class {
            tp[p] += 1;
        }
    }
    let per_class_f1: Vec<f64> = (0..n)
        .map(|k| fscore(tp[k], predicted[k] - tp[k], truth[k] - tp[k]))
        .collect();
    Ok(Evaluation {
        macro_f1: per_class_f1.iter().sum::<f64>() / n as f64,
        per_class_f1,
        loss: loss / data.len() as f64,
        predicted_counts: predicted,
        true_counts: truth,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricRecord {
    pub step: usize,
    pub macro_f1: f64,
    pub per_class_f1: Vec<f64>,
    pub loss: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct MetricHistory {
    pub records: Vec<MetricRecord>,
}

impl MetricHistory {
    /// Evaluation before any update.
    pub fn first(&self) -> Option<&MetricRecord> {
        self.records.first()
    }

    /// Record with the highest macro F1 (earliest on ties).
    pub fn best(&self) -> Option<&MetricRecord> {
        self.records
            .iter()
            .reduce(|best, r| if r.macro_f1 > best.macro_f1 { r } else { best })
    }

    pub fn last(&self) -> Option<&MetricRecord> {
        self.records.last()
    }

    fn push(&mut self, step: usize, eval: Evaluation) {
        self.records.push(MetricRecord {
            step,
            macro_f1: eval.macro_f1,
            per_class_f1: eval.per_class_f1,
            loss: eval.loss,
        });
    }

    /// `step,loss,macro_f1,f1_class_0,...`
    pub fn to_csv(&self) -> String {
        let n = self.records.first().map_or(0, |r| r.per_class_f1.len());
        let mut out = String::from("step,loss,macro_f1");
        for k in 0..n {
            write!(out, ",f1_class_{k}").unwrap();
        }
        out.push('\n');
        for r in &self.records {
            write!(out, "{},{},{}", r.step, format_f64(r.loss), format_f64(r.macro_f1)).unwrap();
            for f in &r.per_class_f1 {
                write!(out, ",{}", format_f64(*f)).unwrap();
            }
            out.push('\n');
        }
        out
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }
}

/// Trains a copy of `init` on `data`, evaluating on `eval_data` at step 0,
/// every `eval_every` steps and at the final step.
pub fn train(
    init: &ClassifierHead,
    data: &FeatureDataset,
    eval_data: &FeatureDataset,
    config: &TrainConfig,
) -> Result<(ClassifierHead, MetricHistory)> {
    config.validate()?;
    if data.is_empty() || eval_data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    for d in [data, eval_data] {
        if d.dim() != init.dim() {
            return Err(Error::DimensionMismatch {
                expected: init.dim(),
                found: d.dim(),
            });
        }
    }
    data.require_classes(init.classes())?;

    let mut head = init.clone();
    let mut history = MetricHistory::default();
    history.push(0, evaluate(&head, eval_data)?);

    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut dropout_rng = ChaCha8Rng::seed_from_u64(config.seed);
    dropout_rng.set_stream(1);
    let mut state = AdamState::new(&head);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let samples = data.samples();
    let mut step = 0;
    for _ in 0..config.epochs {
        order.shuffle(&mut shuffle_rng);
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<&Sample> = chunk.iter().map(|&i| &samples[i]).collect();
            grad_step(&mut head, &batch, config, &mut state, &mut dropout_rng)?;
            step += 1;
            if step % config.eval_every == 0 {
                history.push(step, evaluate(&head, eval_data)?);
            }
        }
    }
    if history.last().map(|r| r.step) != Some(step) {
        history.push(step, evaluate(&head, eval_data)?);
    }
    Ok((head, history))
}
