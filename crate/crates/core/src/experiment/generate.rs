//! Synthetic source/target tasks with known included / inclusive /
//! disjoint structure.
//!
//! Source classes are Gaussian clusters. Each target class is tied to one
//! or more "visual" source clusters:
//! - included: a tighter sub-cluster inside one source cluster
//! - inclusive: the union of 2 or 3 source clusters
//! - disjoint: a fresh cluster that sits closest to one source cluster
//!
//! The taxonomy and the embedding table are built from the same ties, but
//! with probability `semantic_noise` a target's semantic tie is redirected
//! to an unrelated source (independently for the two semantic views), so
//! label-based similarities make some wrong matchings that the
//! data-driven one does not.

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::embedsim::EmbeddingTable;
use crate::error::{Error, Result};
use crate::infersim::ClassifierHead;
use crate::matrixio::{FeatureDataset, Label, LabelSet, Sample};
use crate::taxonomy::{TargetType, Taxonomy};
use crate::trainer::{evaluate, train, TrainConfig};
use crate::warmstart::xavier_init;

/// Macro F1 the source head must reach on its own training data.
pub const SOURCE_F1_TARGET: f64 = 0.95;

#[derive(Debug, Clone, PartialEq)]
pub struct TaskConfig {
    pub m_sources: usize,
    pub n_targets: usize,
    pub dim: usize,
    /// Target training samples per class.
    pub samples_per_class: usize,
    pub test_per_class: usize,
    pub source_samples_per_class: usize,
    /// Within-cluster standard deviation; cluster means are standard normal.
    pub cluster_spread: f64,
    /// Probability that a target's taxonomy (or embedding) tie is redirected.
    pub semantic_noise: f64,
    pub groups: usize,
    pub embedding_dim: usize,
    pub seed: u64,
}

impl Default for TaskConfig {
    fn default() -> Self {
        TaskConfig {
            m_sources: 30,
            n_targets: 9,
            dim: 32,
            samples_per_class: 100,
            test_per_class: 50,
            source_samples_per_class: 100,
            cluster_spread: 1.5,
            semantic_noise: 0.25,
            groups: 5,
            embedding_dim: 24,
            seed: 0,
        }
    }
}

impl TaskConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.n_targets == 0 || !self.n_targets.is_multiple_of(3) {
            return bad(format!("n_targets = {} must be a positive multiple of 3", self.n_targets));
        }
        if self.m_sources < self.n_targets {
            return bad(format!(
                "m_sources = {} must be at least n_targets = {}",
                self.m_sources, self.n_targets
            ));
        }
        if self.dim == 0 || self.embedding_dim == 0 || self.groups == 0 {
            return bad("dim, embedding_dim and groups must be positive".into());
        }
        if self.samples_per_class == 0 || self.test_per_class == 0 || self.source_samples_per_class == 0 {
            return bad("sample counts must be positive".into());
        }
        if !(self.cluster_spread > 0.0) {
            return bad("cluster_spread must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.semantic_noise) {
            return bad("semantic_noise must lie in [0, 1]".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticTask {
    pub config: TaskConfig,
    pub source_head: ClassifierHead,
    pub source_labels: LabelSet,
    pub target_labels: LabelSet,
    pub taxonomy: Taxonomy,
    pub embeddings: EmbeddingTable,
    pub source_data: FeatureDataset,
    pub train: FeatureDataset,
    pub test: FeatureDataset,
    pub types: Vec<TargetType>,
    /// Source clusters each target's samples are drawn around.
    pub visual_sources: Vec<Vec<usize>>,
    /// Source macro F1 reached on `source_data`.
    pub source_f1: f64,
}

impl SyntheticTask {
    pub fn n_targets(&self) -> usize {
        self.types.len()
    }

    pub fn n_sources(&self) -> usize {
        self.source_head.classes()
    }
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

fn gaussian(rng: &mut ChaCha8Rng, dim: usize, scale: f64) -> Vec<f64> {
    (0..dim).map(|_| scale * rng.sample::<f64, _>(StandardNormal)).collect()
}

enum Shape {
    Blob { center: Vec<f64>, spread: f64 },
    Mixture { centers: Vec<Vec<f64>>, spread: f64 },
}

impl Shape {
    fn draw(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        let (center, spread) = match self {
            Shape::Blob { center, spread } => (center, *spread),
            Shape::Mixture { centers, spread } => (&centers[rng.random_range(0..centers.len())], *spread),
        };
        center
            .iter()
            .map(|c| c + spread * rng.sample::<f64, _>(StandardNormal))
            .collect()
    }
}

fn draw_dataset(shapes: &[Shape], per_class: usize, dim: usize, rng: &mut ChaCha8Rng) -> Result<FeatureDataset> {
    let mut samples = Vec::with_capacity(shapes.len() * per_class);
    for (class, shape) in shapes.iter().enumerate() {
        for _ in 0..per_class {
            samples.push(Sample {
                features: shape.draw(rng),
                class,
            });
        }
    }
    FeatureDataset::new(dim, samples)
}

/// Hands out distinct sources until exhausted, then starts reusing.
struct SourcePool {
    order: Vec<usize>,
    next: usize,
    m: usize,
}

impl SourcePool {
    fn take(&mut self, rng: &mut ChaCha8Rng) -> usize {
        if self.next == self.order.len() {
            self.order = (0..self.m).collect();
            self.order.shuffle(rng);
            self.next = 0;
        }
        self.next += 1;
        self.order[self.next - 1]
    }

    fn take_distinct(&mut self, count: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
        let mut out = Vec::with_capacity(count);
        let mut guard = 0;
        while out.len() < count && guard < 4 * self.m + count {
            let s = self.take(rng);
            if !out.contains(&s) {
                out.push(s);
            }
            guard += 1;
        }
        out
    }
}

/// Swaps a semantic tie for an unrelated source with probability `p`,
/// preferring sources no target is visually tied to.
fn corrupt(ties: &[usize], p: f64, free: &[usize], m: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut out = ties.to_vec();
    if m < 2 || !rng.random_bool(p) {
        return out;
    }
    let slot = rng.random_range(0..out.len());
    let candidates: Vec<usize> = {
        let unused: Vec<usize> = free.iter().copied().filter(|s| !out.contains(s)).collect();
        if unused.is_empty() {
            (0..m).filter(|s| !out.contains(s)).collect()
        } else {
            unused
        }
    };
    if let Some(&decoy) = candidates.choose(rng) {
        out[slot] = decoy;
    }
    out
}

fn source_id(j: usize) -> String {
    format!("n_src_{j:03}")
}

fn target_id(i: usize) -> String {
    format!("n_tgt_{i:03}")
}

/// Generates a task with default settings for everything but the shape.
pub fn generate_task(
    m_sources: usize,
    n_targets: usize,
    dim: usize,
    samples_per_class: usize,
    seed: u64,
) -> Result<SyntheticTask> {
    generate(&TaskConfig {
        m_sources,
        n_targets,
        dim,
        samples_per_class,
        seed,
        ..TaskConfig::default()
    })
}

pub fn generate(cfg: &TaskConfig) -> Result<SyntheticTask> {
    cfg.validate()?;
    let (m, n, d) = (cfg.m_sources, cfg.n_targets, cfg.dim);
    let sigma = cfg.cluster_spread;
    let mut rng = stream(cfg.seed, 0);

    let means: Vec<Vec<f64>> = (0..m).map(|_| gaussian(&mut rng, d, 1.0)).collect();
    let group_of = |j: usize| j % cfg.groups;

    let types: Vec<TargetType> = (0..n).map(|i| TargetType::ALL[i % 3]).collect();
    let mut order: Vec<usize> = (0..m).collect();
    order.shuffle(&mut rng);
    let mut pool = SourcePool { order, next: 0, m };
    let visual: Vec<Vec<usize>> = types
        .iter()
        .map(|t| match t {
            TargetType::Inclusive => {
                let k = rng.random_range(2..=3usize).min(m);
                pool.take_distinct(k, &mut rng)
            }
            _ => vec![pool.take(&mut rng)],
        })
        .collect();
    let free: Vec<usize> = (0..m).filter(|s| !visual.iter().any(|v| v.contains(s))).collect();

    let shapes: Vec<Shape> = types
        .iter()
        .zip(&visual)
        .map(|(t, v)| match t {
            TargetType::Included => {
                let offset = gaussian(&mut rng, d, 0.3 * sigma);
                Shape::Blob {
                    center: means[v[0]].iter().zip(&offset).map(|(a, b)| a + b).collect(),
                    spread: 0.7 * sigma,
                }
            }
            TargetType::Inclusive => Shape::Mixture {
                centers: v.iter().map(|&s| means[s].clone()).collect(),
                spread: sigma,
            },
            TargetType::Disjoint => {
                let fresh = gaussian(&mut rng, d, 1.0);
                Shape::Blob {
                    center: means[v[0]].iter().zip(&fresh).map(|(a, b)| 0.7 * a + 0.7 * b).collect(),
                    spread: sigma,
                }
            }
        })
        .collect();

    let taxonomy_ties: Vec<Vec<usize>> = visual
        .iter()
        .map(|v| corrupt(v, cfg.semantic_noise, &free, m, &mut rng))
        .collect();
    let embedding_ties: Vec<Vec<usize>> = visual
        .iter()
        .map(|v| corrupt(v, cfg.semantic_noise, &free, m, &mut rng))
        .collect();

    let taxonomy = build_taxonomy(cfg, &types, &taxonomy_ties, &group_of)?;
    let embeddings = build_embeddings(cfg, &types, &embedding_ties, &group_of, &mut stream(cfg.seed, 1))?;

    let source_labels = LabelSet::new(
        (0..m)
            .map(|j| Label {
                index: j,
                label: format!("src{j} gw{}", group_of(j)),
                synset: Some(source_id(j)),
            })
            .collect(),
    )?;
    let target_labels = LabelSet::new(
        (0..n)
            .map(|i| {
                let g = group_of(embedding_ties[i][0]);
                // Odd targets carry an out-of-vocabulary qualifier.
                let label = if i % 2 == 1 {
                    format!("tgt{i} gw{g}, novel{i}")
                } else {
                    format!("tgt{i} gw{g}")
                };
                Label {
                    index: i,
                    label,
                    synset: Some(target_id(i)),
                }
            })
            .collect(),
    )?;

    let source_shapes: Vec<Shape> = means
        .iter()
        .map(|c| Shape::Blob {
            center: c.clone(),
            spread: sigma,
        })
        .collect();
    let source_data = draw_dataset(&source_shapes, cfg.source_samples_per_class, d, &mut stream(cfg.seed, 2))?;
    let train_set = draw_dataset(&shapes, cfg.samples_per_class, d, &mut stream(cfg.seed, 3))?;
    let test = draw_dataset(&shapes, cfg.test_per_class, d, &mut stream(cfg.seed, 4))?;

    let (source_head, source_f1) = train_source_head(&source_data, m, cfg.seed)?;

    Ok(SyntheticTask {
        config: cfg.clone(),
        source_head,
        source_labels,
        target_labels,
        taxonomy,
        embeddings,
        source_data,
        train: train_set,
        test,
        types,
        visual_sources: visual,
        source_f1,
    })
}

fn build_taxonomy(
    cfg: &TaskConfig,
    types: &[TargetType],
    ties: &[Vec<usize>],
    group_of: &dyn Fn(usize) -> usize,
) -> Result<Taxonomy> {
    let group = |g: usize| format!("n_group_{g}");
    let mut edges: Vec<(String, String)> = (0..cfg.groups).map(|g| (group(g), "n_entity".to_string())).collect();

    // Sources start under their group; inclusive and disjoint targets
    // re-home the sources they are tied to.
    let mut source_parents: Vec<Vec<String>> = (0..cfg.m_sources).map(|j| vec![group(group_of(j))]).collect();
    let mut rehomed = vec![false; cfg.m_sources];
    let mut rehome = |j: usize, parent: String, parents: &mut Vec<Vec<String>>| {
        if rehomed[j] {
            parents[j].push(parent);
        } else {
            parents[j] = vec![parent];
            rehomed[j] = true;
        }
    };

    for (i, (t, tie)) in types.iter().zip(ties).enumerate() {
        let id = target_id(i);
        match t {
            TargetType::Included => edges.push((id, source_id(tie[0]))),
            TargetType::Inclusive => {
                edges.push((id.clone(), group(group_of(tie[0]))));
                for &s in tie {
                    rehome(s, id.clone(), &mut source_parents);
                }
            }
            TargetType::Disjoint => {
                let kind = format!("n_kind_{i:03}");
                edges.push((kind.clone(), group(group_of(tie[0]))));
                edges.push((id, kind.clone()));
                rehome(tie[0], kind, &mut source_parents);
            }
        }
    }
    for (j, parents) in source_parents.into_iter().enumerate() {
        for p in parents {
            edges.push((source_id(j), p));
        }
    }
    Taxonomy::from_edges(edges)
}

fn build_embeddings(
    cfg: &TaskConfig,
    types: &[TargetType],
    ties: &[Vec<usize>],
    group_of: &dyn Fn(usize) -> usize,
    rng: &mut ChaCha8Rng,
) -> Result<EmbeddingTable> {
    let e = cfg.embedding_dim;
    let mut table = EmbeddingTable::new(e)?;
    let group_vecs: Vec<Vec<f64>> = (0..cfg.groups).map(|_| gaussian(rng, e, 1.0)).collect();
    let source_vecs: Vec<Vec<f64>> = (0..cfg.m_sources).map(|_| gaussian(rng, e, 1.0)).collect();
    for (g, v) in group_vecs.iter().enumerate() {
        table.insert(&format!("gw{g}"), v.clone())?;
    }
    for (j, v) in source_vecs.iter().enumerate() {
        table.insert(&format!("src{j}"), v.clone())?;
    }
    for (i, (t, tie)) in types.iter().zip(ties).enumerate() {
        let jitter = gaussian(rng, e, 0.3);
        let base: Vec<f64> = match t {
            TargetType::Included => source_vecs[tie[0]].clone(),
            TargetType::Inclusive => (0..e)
                .map(|k| tie.iter().map(|&s| source_vecs[s][k]).sum::<f64>() / tie.len() as f64)
                .collect(),
            TargetType::Disjoint => {
                let fresh = gaussian(rng, e, 1.0);
                source_vecs[tie[0]].iter().zip(&fresh).map(|(a, b)| 0.6 * a + 0.8 * b).collect()
            }
        };
        let _ = group_of;
        table.insert(&format!("tgt{i}"), base.iter().zip(&jitter).map(|(a, b)| a + b).collect())?;
    }
    Ok(table)
}

/// Trains the source head on the source clusters until it separates them.
fn train_source_head(data: &FeatureDataset, m: usize, seed: u64) -> Result<(ClassifierHead, f64)> {
    const ATTEMPTS: usize = 4;
    let mut head = xavier_init(m, data.dim(), seed);
    let mut reached = 0.0;
    for attempt in 0..ATTEMPTS {
        let cfg = TrainConfig {
            learning_rate: 1e-2,
            dropout_rate: 0.0,
            epochs: 20,
            seed: seed.wrapping_add(attempt as u64),
            eval_every: usize::MAX,
            ..TrainConfig::default()
        };
        head = train(&head, data, data, &cfg)?.0;
        reached = evaluate(&head, data)?.macro_f1;
        if reached >= SOURCE_F1_TARGET {
            return Ok((head, reached));
        }
    }
    Err(Error::SourceNotSeparable {
        reached,
        required: SOURCE_F1_TARGET,
        attempts: ATTEMPTS,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> TaskConfig {
        TaskConfig {
            m_sources: 12,
            n_targets: 6,
            dim: 32,
            samples_per_class: 20,
            test_per_class: 10,
            source_samples_per_class: 40,
            seed: 5,
            ..TaskConfig::default()
        }
    }

    #[test]
    fn taxonomy_reproduces_intended_types() {
        for seed in 0..5 {
            let task = generate(&TaskConfig { seed, ..small() }).unwrap();
            let got = task.taxonomy.classify_labels(&task.source_labels, &task.target_labels).unwrap();
            assert_eq!(got, task.types, "seed {seed}");
        }
    }

    #[test]
    fn types_split_in_thirds_and_test_is_balanced() {
        let task = generate(&small()).unwrap();
        for t in TargetType::ALL {
            assert_eq!(task.types.iter().filter(|&&x| x == t).count(), 2);
        }
        assert_eq!(task.test.class_counts(6), vec![10; 6]);
        assert_eq!(task.train.class_counts(6), vec![20; 6]);
    }

    #[test]
    fn source_head_separates_sources() {
        let task = generate(&small()).unwrap();
        assert!(task.source_f1 >= SOURCE_F1_TARGET);
        assert!(evaluate(&task.source_head, &task.source_data).unwrap().macro_f1 >= SOURCE_F1_TARGET);
    }

    #[test]
    fn same_seed_same_task() {
        let a = generate(&small()).unwrap();
        let b = generate(&small()).unwrap();
        assert_eq!(a.source_head, b.source_head);
        assert_eq!(a.train, b.train);
        assert_eq!(a.test, b.test);
        assert_eq!(a.embeddings, b.embeddings);
        assert_eq!(a.target_labels, b.target_labels);
        assert_eq!(a.taxonomy.edges().collect::<Vec<_>>(), b.taxonomy.edges().collect::<Vec<_>>());
        let c = generate(&TaskConfig { seed: 6, ..small() }).unwrap();
        assert_ne!(a.train, c.train);
    }

    #[test]
    fn test_set_independent_of_training_size() {
        let a = generate(&small()).unwrap();
        let b = generate(&TaskConfig { samples_per_class: 3, ..small() }).unwrap();
        assert_eq!(a.test, b.test);
        assert_eq!(a.source_head, b.source_head);
    }

    #[test]
    fn invalid_shapes_are_rejected() {
        assert!(generate(&TaskConfig { n_targets: 7, ..small() }).is_err());
        assert!(generate(&TaskConfig { m_sources: 3, ..small() }).is_err());
        assert!(generate(&TaskConfig { semantic_noise: 1.5, ..small() }).is_err());
        assert!(generate_task(9, 9, 32, 5, 0).is_ok());
    }
}
