//! Independent reference implementations used by the integration tests.
#![allow(dead_code)]

use std::collections::{BTreeSet, HashMap};

use headstart::infersim::ClassifierHead;
use headstart::matrixio::PredictionRecord;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Random DAG (possibly a forest) over nodes `v0..v{n-1}`; each node only
/// points at lower-numbered parents. Returns `(child, parent)` edges.
pub fn random_dag(rng: &mut ChaCha8Rng, max_nodes: usize) -> (Vec<String>, Vec<(String, String)>) {
    let n = rng.random_range(1..=max_nodes);
    let ids: Vec<String> = (0..n).map(|i| format!("v{i}")).collect();
    let mut edges = Vec::new();
    for i in 1..n {
        if rng.random_bool(0.1) {
            continue; // another root
        }
        let parents = rng.random_range(1..=3usize.min(i));
        let mut chosen = BTreeSet::new();
        while chosen.len() < parents {
            chosen.insert(rng.random_range(0..i));
        }
        for p in chosen {
            edges.push((ids[i].clone(), ids[p].clone()));
        }
    }
    (ids, edges)
}

/// Every upward path from `node` to a root, by brute-force recursion.
pub fn root_paths(node: &str, parents: &HashMap<String, Vec<String>>) -> Vec<Vec<String>> {
    match parents.get(node) {
        None => vec![vec![node.to_string()]],
        Some(ps) if ps.is_empty() => vec![vec![node.to_string()]],
        Some(ps) => ps
            .iter()
            .flat_map(|p| root_paths(p, parents))
            .map(|mut path| {
                path.insert(0, node.to_string());
                path
            })
            .collect(),
    }
}

pub struct WuPalmerOracle {
    paths: HashMap<String, Vec<Vec<String>>>,
}

impl WuPalmerOracle {
    pub fn new(ids: &[String], edges: &[(String, String)]) -> Self {
        let mut parents: HashMap<String, Vec<String>> = HashMap::new();
        for (c, p) in edges {
            parents.entry(c.clone()).or_default().push(p.clone());
        }
        let paths = ids.iter().map(|id| (id.clone(), root_paths(id, &parents))).collect();
        WuPalmerOracle { paths }
    }

    /// Nodes on the shortest root path, root counted as 1.
    pub fn depth(&self, id: &str) -> usize {
        self.paths[id].iter().map(Vec::len).min().unwrap()
    }

    fn ancestors(&self, id: &str) -> BTreeSet<String> {
        self.paths[id].iter().flatten().cloned().collect()
    }

    pub fn lcs(&self, a: &str, b: &str) -> Option<String> {
        let common: Vec<String> = self.ancestors(a).intersection(&self.ancestors(b)).cloned().collect();
        let best = common.iter().map(|c| self.depth(c)).max()?;
        // BTreeSet order is lexicographic, so the first hit is the smallest id.
        common.into_iter().find(|c| self.depth(c) == best)
    }

    pub fn similarity(&self, a: &str, b: &str) -> f64 {
        match self.lcs(a, b) {
            None => 0.0,
            Some(l) => (2.0 * self.depth(&l) as f64 / (self.depth(a) + self.depth(b)) as f64).min(1.0),
        }
    }
}

/// Per-cell F1 from a full scan of the records for every (target, source).
pub fn confusion_oracle(preds: &[PredictionRecord], n_targets: usize, n_sources: usize) -> Vec<Vec<f64>> {
    (0..n_targets)
        .map(|i| {
            (0..n_sources)
                .map(|j| {
                    let tp = preds.iter().filter(|p| p.target_class == i && p.predicted_source == j).count();
                    let fp = preds.iter().filter(|p| p.target_class != i && p.predicted_source == j).count();
                    let fn_ = preds.iter().filter(|p| p.target_class == i && p.predicted_source != j).count();
                    if tp == 0 {
                        0.0
                    } else {
                        let p = tp as f64 / (tp + fp) as f64;
                        let r = tp as f64 / (tp + fn_) as f64;
                        2.0 * p * r / (p + r)
                    }
                })
                .collect()
        })
        .collect()
}

/// Mean cross-entropy computed directly from the definition.
pub fn naive_loss(head: &ClassifierHead, batch: &[(Vec<f64>, usize)]) -> f64 {
    let mut total = 0.0;
    for (x, y) in batch {
        let z: Vec<f64> = (0..head.classes())
            .map(|k| head.weights().row(k).iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + head.bias()[k])
            .collect();
        let denom: f64 = z.iter().map(|v| v.exp()).sum();
        total -= (z[*y].exp() / denom).ln();
    }
    total / batch.len() as f64
}

/// Row oracle for the warm start: sort by raw similarity, keep the top
/// `k` non-zero entries, weight by similarity share.
pub fn oracle_row(head: &ClassifierHead, sims: &[f64], k: usize) -> Option<(Vec<f64>, f64, Vec<usize>)> {
    let mut order: Vec<usize> = (0..sims.len()).filter(|&j| sims[j] > 0.0).collect();
    order.sort_by(|&a, &b| sims[b].total_cmp(&sims[a]).then(a.cmp(&b)));
    order.truncate(k);
    if order.is_empty() {
        return None;
    }
    let total: f64 = order.iter().map(|&j| sims[j]).sum();
    let mut row = vec![0.0; head.dim()];
    let mut bias = 0.0;
    for &j in &order {
        let c = sims[j] / total;
        for (r, w) in row.iter_mut().zip(head.weights().row(j)) {
            *r += c * w;
        }
        bias += c * head.bias()[j];
    }
    Some((row, bias, order))
}
