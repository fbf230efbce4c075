use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::generate::{generate, SyntheticTask, TaskConfig};
use crate::embedsim::word2vec_similarity_matrix;
use crate::error::{Error, Result};
use crate::infersim::{inference_similarity_matrix, predict_source, ClassifierHead, SimilarityMatrix};
use crate::matrixio::{format_f64, FeatureDataset, Sample};
use crate::taxonomy::{wordnet_similarity_matrix, TargetType};
use crate::trainer::{evaluate, train, MetricHistory, TrainConfig};
use crate::warmstart::{build_target_head, xavier_init, InitSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    Random,
    Inference,
    WordNet,
    Word2Vec,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Random, Method::Inference, Method::WordNet, Method::Word2Vec];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Random => "random",
            Method::Inference => "inference",
            Method::WordNet => "wordnet",
            Method::Word2Vec => "word2vec",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str() == s.trim().to_ascii_lowercase())
            .ok_or_else(|| Error::InvalidConfig(format!("unknown method {s:?}")))
    }
}

/// Expected macro F1 of a predictor whose outputs are independent of the
/// labels but keep the observed predicted-class counts.
pub fn chance_macro_f1(true_counts: &[usize], predicted_counts: &[usize]) -> f64 {
    let total: usize = true_counts.iter().sum();
    if true_counts.is_empty() || total == 0 {
        return 0.0;
    }
    let sum: f64 = true_counts
        .iter()
        .zip(predicted_counts)
        .map(|(&n, &m)| {
            if n + m == 0 {
                0.0
            } else {
                2.0 * n as f64 * m as f64 / (total as f64 * (n + m) as f64)
            }
        })
        .sum();
    sum / true_counts.len() as f64
}

/// Mean per-class F1 over the targets of each type.
pub fn per_type_f1(per_class: &[f64], types: &[TargetType]) -> [Option<f64>; 3] {
    TargetType::ALL.map(|t| {
        let vals: Vec<f64> = per_class
            .iter()
            .zip(types)
            .filter(|(_, &ty)| ty == t)
            .map(|(&f, _)| f)
            .collect();
        (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Similarities {
    pub inference: SimilarityMatrix,
    pub wordnet: SimilarityMatrix,
    pub word2vec: SimilarityMatrix,
}

impl Similarities {
    pub fn get(&self, method: Method) -> Option<&SimilarityMatrix> {
        match method {
            Method::Random => None,
            Method::Inference => Some(&self.inference),
            Method::WordNet => Some(&self.wordnet),
            Method::Word2Vec => Some(&self.word2vec),
        }
    }
}

/// Inference similarity from `train`; the semantic ones use labels only.
pub fn compute_similarities(task: &SyntheticTask, train_set: &FeatureDataset) -> Result<Similarities> {
    let preds = predict_source(&task.source_head, train_set)?;
    Ok(Similarities {
        inference: inference_similarity_matrix(&preds, task.n_targets(), task.n_sources())?,
        wordnet: wordnet_similarity_matrix(&task.taxonomy, &task.source_labels, &task.target_labels)?,
        word2vec: word2vec_similarity_matrix(&task.embeddings, &task.source_labels, &task.target_labels)?,
    })
}

pub fn initial_head(
    task: &SyntheticTask,
    method: Method,
    sims: &Similarities,
    spec: &InitSpec,
) -> Result<ClassifierHead> {
    match sims.get(method) {
        None => Ok(xavier_init(task.n_targets(), task.source_head.dim(), spec.fallback_seed)),
        Some(sim) => build_target_head(&task.source_head, sim, &task.types, spec),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MethodResult {
    pub method: Method,
    pub first: f64,
    pub best: f64,
    pub best_step: usize,
    pub first_per_class: Vec<f64>,
    pub best_per_class: Vec<f64>,
    /// Chance-level macro F1 given the initial head's predicted-class counts.
    pub chance: f64,
    pub history: MetricHistory,
}

impl MethodResult {
    pub fn first_per_type(&self, types: &[TargetType]) -> [Option<f64>; 3] {
        per_type_f1(&self.first_per_class, types)
    }

    pub fn best_per_type(&self, types: &[TargetType]) -> [Option<f64>; 3] {
        per_type_f1(&self.best_per_class, types)
    }
}

fn run_method(
    task: &SyntheticTask,
    method: Method,
    sims: &Similarities,
    train_set: &FeatureDataset,
    spec: &InitSpec,
    config: &TrainConfig,
) -> Result<MethodResult> {
    let init = initial_head(task, method, sims, spec)?;
    let start = evaluate(&init, &task.test)?;
    let (_, history) = train(&init, train_set, &task.test, config)?;
    let first = history.first().ok_or(Error::EmptyDataset)?;
    let best = history.best().ok_or(Error::EmptyDataset)?;
    Ok(MethodResult {
        method,
        first: first.macro_f1,
        best: best.macro_f1,
        best_step: best.step,
        first_per_class: first.per_class_f1.clone(),
        best_per_class: best.per_class_f1.clone(),
        chance: chance_macro_f1(&start.true_counts, &start.predicted_counts),
        history,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonReport {
    pub types: Vec<TargetType>,
    pub methods: Vec<MethodResult>,
}

impl ComparisonReport {
    pub fn get(&self, method: Method) -> &MethodResult {
        self.methods
            .iter()
            .find(|r| r.method == method)
            .expect("every method is run")
    }

    /// `method,first,best,best_step,chance,first_<type>...,best_<type>...`
    pub fn to_csv(&self) -> String {
        let mut out = String::from("method,first,best,best_step,chance");
        for prefix in ["first", "best"] {
            for t in TargetType::ALL {
                out.push_str(&format!(",{prefix}_{t}"));
            }
        }
        out.push('\n');
        for r in &self.methods {
            out.push_str(&format!(
                "{},{},{},{},{}",
                r.method,
                format_f64(r.first),
                format_f64(r.best),
                r.best_step,
                format_f64(r.chance)
            ));
            for v in r.first_per_type(&self.types).into_iter().chain(r.best_per_type(&self.types)) {
                out.push(',');
                if let Some(v) = v {
                    out.push_str(&format_f64(v));
                }
            }
            out.push('\n');
        }
        out
    }
}

/// Trains every method's head on the task's training split and evaluates
/// on its test split.
pub fn run_comparison(task: &SyntheticTask, spec: &InitSpec, config: &TrainConfig) -> Result<ComparisonReport> {
    let sims = compute_similarities(task, &task.train)?;
    let methods = Method::ALL
        .par_iter()
        .map(|&m| run_method(task, m, &sims, &task.train, spec, config))
        .collect::<Result<Vec<_>>>()?;
    Ok(ComparisonReport {
        types: task.types.clone(),
        methods,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct KSweepRow {
    pub method: Method,
    pub k: usize,
    pub macro_f1: f64,
    pub per_type: [Option<f64>; 3],
}

/// Step-0 macro F1 of each similarity-based head with the same `k` for
/// every target type.
pub fn run_k_sweep(task: &SyntheticTask, k_values: &[usize], fallback_seed: u64) -> Result<Vec<KSweepRow>> {
    let sims = compute_similarities(task, &task.train)?;
    let mut jobs = Vec::new();
    for m in Method::ALL.into_iter().filter(|&m| m != Method::Random) {
        for &k in k_values {
            jobs.push((m, k));
        }
    }
    jobs.par_iter()
        .map(|&(method, k)| {
            let spec = InitSpec::uniform(k, fallback_seed);
            let head = initial_head(task, method, &sims, &spec)?;
            let eval = evaluate(&head, &task.test)?;
            Ok(KSweepRow {
                method,
                k,
                macro_f1: eval.macro_f1,
                per_type: per_type_f1(&eval.per_class_f1, &task.types),
            })
        })
        .collect()
}

pub fn k_sweep_csv(rows: &[KSweepRow]) -> String {
    let mut out = String::from("method,k,macro_f1,included,inclusive,disjoint\n");
    for r in rows {
        out.push_str(&format!("{},{},{}", r.method, r.k, format_f64(r.macro_f1)));
        for v in r.per_type {
            out.push(',');
            if let Some(v) = v {
                out.push_str(&format_f64(v));
            }
        }
        out.push('\n');
    }
    out
}

/// `count` samples per class, a prefix of one fixed per-class shuffle, so
/// smaller subsets are contained in larger ones.
pub fn subsample(data: &FeatureDataset, n_classes: usize, count: usize, seed: u64) -> Result<FeatureDataset> {
    if count == 0 {
        return Err(Error::InvalidConfig("samples per class must be positive".into()));
    }
    let mut by_class: Vec<Vec<&Sample>> = vec![Vec::new(); n_classes];
    for s in data.samples() {
        if s.class < n_classes {
            by_class[s.class].push(s);
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked = Vec::with_capacity(n_classes * count);
    for (class, members) in by_class.iter_mut().enumerate() {
        if members.len() < count {
            return Err(Error::InvalidConfig(format!(
                "class {class} has {} samples, {count} requested",
                members.len()
            )));
        }
        members.shuffle(&mut rng);
        picked.extend(members[..count].iter().map(|&s| s.clone()));
    }
    FeatureDataset::new(data.dim(), picked)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReductionRow {
    pub count: usize,
    pub method: Method,
    pub first: f64,
    pub best: f64,
}

/// For each per-class count: subsample the training split, recompute the
/// inference similarity from the subsample, rebuild every head and train.
pub fn run_data_reduction(
    task: &SyntheticTask,
    counts: &[usize],
    spec: &InitSpec,
    config: &TrainConfig,
) -> Result<Vec<ReductionRow>> {
    let per_count = counts
        .par_iter()
        .map(|&c| {
            let subset = subsample(&task.train, task.n_targets(), c, config.seed)?;
            let sims = compute_similarities(task, &subset)?;
            Method::ALL
                .iter()
                .map(|&m| {
                    let r = run_method(task, m, &sims, &subset, spec, config)?;
                    Ok(ReductionRow {
                        count: c,
                        method: m,
                        first: r.first,
                        best: r.best,
                    })
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(per_count.into_iter().flatten().collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Summary {
    pub mean: f64,
    /// Sample standard deviation; 0 for a single value.
    pub sd: f64,
    pub n: usize,
}

impl Summary {
    pub fn of(values: &[f64]) -> Summary {
        let n = values.len();
        if n == 0 {
            return Summary { mean: f64::NAN, sd: f64::NAN, n };
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let sd = if n > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        Summary { mean, sd, n }
    }

    pub fn standard_error(&self) -> f64 {
        self.sd / (self.n as f64).sqrt()
    }
}

/// Everything a seeded run varies: task draw, training shuffle and the
/// random/fallback initialization.
#[derive(Debug, Clone, PartialEq)]
pub struct SeedPlan {
    pub task: TaskConfig,
    pub spec: InitSpec,
    pub train: TrainConfig,
}

impl SeedPlan {
    pub fn for_seed(&self, seed: u64) -> (TaskConfig, InitSpec, TrainConfig) {
        (
            TaskConfig { seed, ..self.task.clone() },
            InitSpec { fallback_seed: seed, ..self.spec },
            TrainConfig { seed, ..self.train.clone() },
        )
    }
}

pub fn compare_over_seeds(plan: &SeedPlan, seeds: &[u64]) -> Result<Vec<ComparisonReport>> {
    seeds
        .par_iter()
        .map(|&s| {
            let (task_cfg, spec, cfg) = plan.for_seed(s);
            run_comparison(&generate(&task_cfg)?, &spec, &cfg)
        })
        .collect()
}

pub fn reduce_over_seeds(plan: &SeedPlan, counts: &[usize], seeds: &[u64]) -> Result<Vec<Vec<ReductionRow>>> {
    seeds
        .par_iter()
        .map(|&s| {
            let (task_cfg, spec, cfg) = plan.for_seed(s);
            run_data_reduction(&generate(&task_cfg)?, counts, &spec, &cfg)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct MethodSummary {
    pub method: Method,
    pub first: Summary,
    pub best: Summary,
    pub chance: Summary,
}

pub fn summarize_comparisons(reports: &[ComparisonReport]) -> Vec<MethodSummary> {
    Method::ALL
        .into_iter()
        .map(|m| {
            let pick = |f: fn(&MethodResult) -> f64| -> Vec<f64> { reports.iter().map(|r| f(r.get(m))).collect() };
            MethodSummary {
                method: m,
                first: Summary::of(&pick(|r| r.first)),
                best: Summary::of(&pick(|r| r.best)),
                chance: Summary::of(&pick(|r| r.chance)),
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReductionSummary {
    pub count: usize,
    pub method: Method,
    pub first: Summary,
    pub best: Summary,
}

pub fn summarize_reductions(runs: &[Vec<ReductionRow>]) -> Vec<ReductionSummary> {
    let Some(template) = runs.first() else {
        return Vec::new();
    };
    template
        .iter()
        .map(|t| {
            let rows: Vec<&ReductionRow> = runs
                .iter()
                .filter_map(|run| run.iter().find(|r| r.count == t.count && r.method == t.method))
                .collect();
            ReductionSummary {
                count: t.count,
                method: t.method,
                first: Summary::of(&rows.iter().map(|r| r.first).collect::<Vec<_>>()),
                best: Summary::of(&rows.iter().map(|r| r.best).collect::<Vec<_>>()),
            }
        })
        .collect()
}

pub fn comparison_summary_csv(rows: &[MethodSummary]) -> String {
    let mut out = String::from("method,first,first_sd,best,best_sd,chance\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.method,
            format_f64(r.first.mean),
            format_f64(r.first.sd),
            format_f64(r.best.mean),
            format_f64(r.best.sd),
            format_f64(r.chance.mean)
        ));
    }
    out
}

pub fn comparison_summary_table(rows: &[MethodSummary]) -> String {
    let header = ["method", "first", "(sd)", "best", "(sd)", "chance"];
    let body: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.method.to_string(),
                format!("{:.4}", r.first.mean),
                format!("{:.4}", r.first.sd),
                format!("{:.4}", r.best.mean),
                format!("{:.4}", r.best.sd),
                format!("{:.4}", r.chance.mean),
            ]
        })
        .collect();
    aligned(&header, &body)
}

/// `images_per_class,method,first,best,first_sd,best_sd`
pub fn reduction_csv(rows: &[ReductionSummary]) -> String {
    let mut out = String::from("images_per_class,method,first,best,first_sd,best_sd\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.count,
            r.method,
            format_f64(r.first.mean),
            format_f64(r.best.mean),
            format_f64(r.first.sd),
            format_f64(r.best.sd)
        ));
    }
    out
}

/// One row per count, a first/best column pair per method.
pub fn reduction_table(rows: &[ReductionSummary]) -> String {
    let mut counts: Vec<usize> = rows.iter().map(|r| r.count).collect();
    counts.dedup();
    let mut header = vec!["images_per_class".to_string()];
    for m in Method::ALL {
        header.push(format!("{m} first"));
        header.push(format!("{m} best"));
    }
    let body: Vec<Vec<String>> = counts
        .iter()
        .map(|&c| {
            let mut line = vec![c.to_string()];
            for m in Method::ALL {
                match rows.iter().find(|r| r.count == c && r.method == m) {
                    Some(r) => {
                        line.push(format!("{:.4}", r.first.mean));
                        line.push(format!("{:.4}", r.best.mean));
                    }
                    None => line.extend(["-".to_string(), "-".to_string()]),
                }
            }
            line
        })
        .collect();
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    aligned(&header, &body)
}

fn aligned(header: &[&str], body: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = header.iter().map(|h| h.len()).collect();
    for row in body {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.len());
        }
    }
    let line = |cells: Vec<&str>| -> String {
        let parts: Vec<String> = cells
            .iter()
            .zip(&widths)
            .enumerate()
            .map(|(i, (c, &w))| if i == 0 { format!("{c:<w$}") } else { format!("{c:>w$}") })
            .collect();
        parts.join("  ").trim_end().to_string()
    };
    let mut out = line(header.to_vec());
    out.push('\n');
    out.push_str(&"-".repeat(widths.iter().sum::<usize>() + 2 * (widths.len() - 1)));
    out.push('\n');
    for row in body {
        out.push_str(&line(row.iter().map(String::as_str).collect()));
        out.push('\n');
    }
    out
}
