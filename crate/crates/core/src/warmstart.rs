//! Target head synthesis: each target row is a convex combination of its
//! most similar source rows, with the similarities normalized into weights.
//!
//! Similarities are compared as ratios to the row maximum, rounded to a
//! multiple of 2^-32. Scaling a similarity row by any positive constant
//! only perturbs those ratios by a few ulps, which the rounding absorbs, so
//! selection order and coefficients come out bit-identical.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::infersim::{ClassifierHead, SimilarityMatrix};
use crate::matrixio::Matrix;
use crate::taxonomy::TargetType;

const RATIO_QUANTUM: f64 = 4294967296.0; // 2^32

/// One selected source class.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    pub source: usize,
    pub raw_sim: f64,
    pub coefficient: f64,
}

/// Neighbor count per target type plus the seed for Xavier fallback rows.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct InitSpec {
    pub k_disjoint: usize,
    pub k_included: usize,
    pub k_inclusive: usize,
    pub fallback_seed: u64,
}

impl InitSpec {
    pub fn uniform(k: usize, fallback_seed: u64) -> Self {
        InitSpec {
            k_disjoint: k,
            k_included: k,
            k_inclusive: k,
            fallback_seed,
        }
    }

    pub fn k_for(&self, t: TargetType) -> usize {
        match t {
            TargetType::Included => self.k_included,
            TargetType::Inclusive => self.k_inclusive,
            TargetType::Disjoint => self.k_disjoint,
        }
    }

    pub fn validate(&self, n_sources: usize) -> Result<()> {
        for (name, k) in [
            ("k_disjoint", self.k_disjoint),
            ("k_included", self.k_included),
            ("k_inclusive", self.k_inclusive),
        ] {
            if k == 0 || k > n_sources {
                return Err(Error::InvalidConfig(format!(
                    "{name} = {k} must lie in [1, {n_sources}]"
                )));
            }
        }
        Ok(())
    }
}

impl Default for InitSpec {
    fn default() -> Self {
        InitSpec {
            k_disjoint: 1,
            k_included: 1,
            k_inclusive: 3,
            fallback_seed: 0,
        }
    }
}

fn quantized_ratio(sim: f64, max: f64) -> f64 {
    ((sim / max) * RATIO_QUANTUM).round() / RATIO_QUANTUM
}

/// The `k` most similar sources of one similarity row, zero similarities
/// dropped, ties to the lowest index. Empty when the row is all zero.
pub fn select_from_row(row: &[f64], k: usize) -> Vec<Neighbor> {
    let max = row.iter().copied().fold(0.0, f64::max);
    if max <= 0.0 {
        return Vec::new();
    }
    let mut ranked: Vec<(usize, f64)> = row
        .iter()
        .enumerate()
        .filter(|(_, &s)| s > 0.0)
        .map(|(j, &s)| (j, quantized_ratio(s, max)))
        .collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    ranked.truncate(k);

    let total: f64 = ranked.iter().map(|r| r.1).sum();
    ranked
        .into_iter()
        .map(|(source, ratio)| Neighbor {
            source,
            raw_sim: row[source],
            coefficient: ratio / total,
        })
        .collect()
}

pub fn select_neighbors(sim: &SimilarityMatrix, target: usize, k: usize) -> Vec<Neighbor> {
    select_from_row(sim.row(target), k)
}

/// `sum_j c_j W_j` and the same combination of biases, clamped to the
/// componentwise envelope of the selected rows so rounding never leaves
/// the convex hull.
pub fn combine(head: &ClassifierHead, selection: &[Neighbor]) -> Result<(Vec<f64>, f64)> {
    let (first, rest) = selection.split_first().ok_or(Error::EmptySelection)?;
    if let Some(bad) = selection.iter().find(|n| n.source >= head.classes()) {
        return Err(Error::IndexOutOfRange {
            what: "source class",
            index: bad.source,
            size: head.classes(),
        });
    }
    let w = head.weights();
    let b = head.bias();

    let mut row: Vec<f64> = w.row(first.source).iter().map(|v| first.coefficient * v).collect();
    let mut bias = first.coefficient * b[first.source];
    let mut lo: Vec<f64> = w.row(first.source).to_vec();
    let mut hi = lo.clone();
    let (mut blo, mut bhi) = (b[first.source], b[first.source]);
    for n in rest {
        for (d, &v) in w.row(n.source).iter().enumerate() {
            row[d] += n.coefficient * v;
            lo[d] = lo[d].min(v);
            hi[d] = hi[d].max(v);
        }
        bias += n.coefficient * b[n.source];
        blo = blo.min(b[n.source]);
        bhi = bhi.max(b[n.source]);
    }
    for d in 0..row.len() {
        row[d] = row[d].clamp(lo[d], hi[d]);
    }
    Ok((row, bias.clamp(blo, bhi)))
}

/// Per-target neighbor selections using the type-dependent `k`.
pub fn plan_selections(
    sim: &SimilarityMatrix,
    types: &[TargetType],
    spec: &InitSpec,
) -> Result<Vec<Vec<Neighbor>>> {
    if types.len() != sim.n_targets() {
        return Err(Error::Shape(format!(
            "{} target types for {} similarity rows",
            types.len(),
            sim.n_targets()
        )));
    }
    spec.validate(sim.n_sources())?;
    Ok(types
        .iter()
        .enumerate()
        .map(|(i, &t)| select_neighbors(sim, i, spec.k_for(t)))
        .collect())
}

/// Builds the head from precomputed selections; empty selections become
/// the matching row of `xavier_init(n, d, fallback_seed)`.
pub fn assemble_head(
    head: &ClassifierHead,
    selections: &[Vec<Neighbor>],
    fallback_seed: u64,
) -> Result<ClassifierHead> {
    let n = selections.len();
    if n == 0 {
        return Err(Error::Shape("no target classes".into()));
    }
    let fallback = selections
        .iter()
        .any(Vec::is_empty)
        .then(|| xavier_init(n, head.dim(), fallback_seed));

    let mut weights = Vec::with_capacity(n * head.dim());
    let mut bias = Vec::with_capacity(n);
    for (i, sel) in selections.iter().enumerate() {
        if sel.is_empty() {
            let x = fallback.as_ref().unwrap();
            weights.extend_from_slice(x.weights().row(i));
            bias.push(x.bias()[i]);
        } else {
            let (row, b) = combine(head, sel)?;
            weights.extend(row);
            bias.push(b);
        }
    }
    ClassifierHead::new(Matrix::new(n, head.dim(), weights)?, bias)
}

pub fn build_target_head(
    head: &ClassifierHead,
    sim: &SimilarityMatrix,
    types: &[TargetType],
    spec: &InitSpec,
) -> Result<ClassifierHead> {
    if sim.n_sources() != head.classes() {
        return Err(Error::Shape(format!(
            "similarity matrix has {} source columns, head has {} rows",
            sim.n_sources(),
            head.classes()
        )));
    }
    let selections = plan_selections(sim, types, spec)?;
    assemble_head(head, &selections, spec.fallback_seed)
}

/// Uniform Xavier/Glorot head: weights on `[-a, a]`, `a = sqrt(6 / (n + d))`,
/// zero bias.
pub fn xavier_init(n: usize, d: usize, seed: u64) -> ClassifierHead {
    assert!(n > 0 && d > 0, "xavier_init needs n, d >= 1");
    let bound = (6.0 / (n + d) as f64).sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = (0..n * d).map(|_| rng.random_range(-bound..=bound)).collect();
    ClassifierHead::new(Matrix::new(n, d, data).unwrap(), vec![0.0; n]).unwrap()
}
