//! `headstart` command line.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::embedsim::{read_embeddings, word2vec_similarity_matrix, write_embeddings};
use crate::error::{Error, Result};
use crate::experiment::{
    compare_over_seeds, comparison_summary_csv, comparison_summary_table, generate, k_sweep_csv, reduce_over_seeds,
    reduction_csv, reduction_table, run_k_sweep, summarize_comparisons, summarize_reductions, ComparisonReport,
    SeedPlan, TaskConfig,
};
use crate::infersim::{
    inference_similarity_matrix, predict_source, read_head, write_head, SimilarityMatrix,
};
use crate::matrixio::{
    format_f64, read_features, read_labels, read_matrix, read_predictions, write_features, write_labels,
    write_matrix, LabelSet,
};
use crate::taxonomy::{format_types, parse_types, read_taxonomy, wordnet_similarity_matrix, write_taxonomy, TargetType};
use crate::trainer::{evaluate, train, TrainConfig};
use crate::warmstart::{assemble_head, plan_selections, xavier_init, InitSpec, Neighbor};

#[derive(Parser, Debug)]
#[command(name = "headstart", version, about = "Similarity-based initialization of target classifier heads")]
pub struct Cli {
    /// Seed for every random choice a subcommand makes.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Compute a target x source similarity matrix.
    Sim {
        #[command(subcommand)]
        kind: SimKind,
    },
    /// Build a target head from a similarity matrix and a source head.
    Init(InitArgs),
    /// Derive the target type of every target label from the taxonomy.
    Types {
        #[arg(long)]
        taxonomy: PathBuf,
        #[command(flatten)]
        labels: LabelArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fine-tune a head and write its metric history.
    Train(TrainArgs),
    /// Evaluate a head on a feature file.
    Eval {
        #[arg(long)]
        head: PathBuf,
        #[arg(long)]
        features: PathBuf,
        /// Optional `class,f1` CSV.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Synthetic experiments.
    Experiment {
        #[command(subcommand)]
        kind: ExperimentKind,
    },
}

#[derive(Args, Debug)]
struct LabelArgs {
    #[arg(long)]
    source_labels: PathBuf,
    #[arg(long)]
    target_labels: PathBuf,
}

#[derive(Subcommand, Debug)]
enum SimKind {
    Wordnet {
        #[arg(long)]
        taxonomy: PathBuf,
        #[command(flatten)]
        labels: LabelArgs,
        #[arg(long)]
        out: PathBuf,
    },
    Word2vec {
        #[arg(long)]
        embeddings: PathBuf,
        #[command(flatten)]
        labels: LabelArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// From a prediction CSV, or from a source head run over target features.
    Inference {
        #[arg(long, conflicts_with_all = ["source_head", "features"], required_unless_present = "source_head")]
        predictions: Option<PathBuf>,
        #[arg(long, requires = "features")]
        source_head: Option<PathBuf>,
        #[arg(long, requires = "source_head")]
        features: Option<PathBuf>,
        #[command(flatten)]
        labels: LabelArgs,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args, Debug)]
struct InitArgs {
    #[arg(long, required_unless_present = "random")]
    sim: Option<PathBuf>,
    #[arg(long)]
    source_head: PathBuf,
    /// Neighbor count for every target type.
    #[arg(long, conflicts_with_all = ["k_disjoint", "k_included", "k_inclusive"])]
    k: Option<usize>,
    #[arg(long, requires = "types")]
    k_disjoint: Option<usize>,
    #[arg(long, requires = "types")]
    k_included: Option<usize>,
    #[arg(long, requires = "types")]
    k_inclusive: Option<usize>,
    /// `<index>\t<type>` lines.
    #[arg(long)]
    types: Option<PathBuf>,
    /// Xavier head instead of a similarity-based one.
    #[arg(long, conflicts_with = "k")]
    random: bool,
    /// Target class count for `--random` without `--sim` or `--types`.
    #[arg(long)]
    n_targets: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[arg(long)]
    head: PathBuf,
    #[arg(long)]
    features: PathBuf,
    /// Defaults to the training features.
    #[arg(long)]
    eval_features: Option<PathBuf>,
    #[arg(long, default_value_t = TrainConfig::default().epochs)]
    epochs: usize,
    #[arg(long, default_value_t = TrainConfig::default().learning_rate)]
    lr: f64,
    #[arg(long, default_value_t = TrainConfig::default().batch_size)]
    batch_size: usize,
    #[arg(long, default_value_t = TrainConfig::default().dropout_rate)]
    dropout: f64,
    #[arg(long, default_value_t = TrainConfig::default().eval_every)]
    eval_every: usize,
    /// Metric history CSV.
    #[arg(long)]
    out: PathBuf,
    /// Where to write the trained head.
    #[arg(long)]
    head_out: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
struct TaskArgs {
    #[arg(long, default_value_t = TaskConfig::default().m_sources)]
    m_sources: usize,
    #[arg(long, default_value_t = TaskConfig::default().n_targets)]
    n_targets: usize,
    #[arg(long, default_value_t = TaskConfig::default().dim)]
    dim: usize,
    #[arg(long, default_value_t = TaskConfig::default().samples_per_class)]
    samples_per_class: usize,
    #[arg(long, default_value_t = TaskConfig::default().semantic_noise)]
    semantic_noise: f64,
}

impl TaskArgs {
    fn config(&self, seed: u64) -> TaskConfig {
        TaskConfig {
            m_sources: self.m_sources,
            n_targets: self.n_targets,
            dim: self.dim,
            samples_per_class: self.samples_per_class,
            semantic_noise: self.semantic_noise,
            seed,
            ..TaskConfig::default()
        }
    }
}

#[derive(Args, Debug, Clone)]
struct RunArgs {
    #[command(flatten)]
    task: TaskArgs,
    /// Number of seeds, starting at `--seed`.
    #[arg(long, default_value_t = 10)]
    seeds: u64,
    #[arg(long, default_value_t = TrainConfig::default().epochs)]
    epochs: usize,
    #[arg(long, default_value_t = InitSpec::default().k_disjoint)]
    k_disjoint: usize,
    #[arg(long, default_value_t = InitSpec::default().k_included)]
    k_included: usize,
    #[arg(long, default_value_t = InitSpec::default().k_inclusive)]
    k_inclusive: usize,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Subcommand, Debug)]
enum ExperimentKind {
    /// Write one synthetic task's files.
    Generate {
        #[command(flatten)]
        task: TaskArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Four-method comparison averaged over seeds.
    Compare(RunArgs),
    /// Step-0 macro F1 for each K.
    Ksweep {
        #[command(flatten)]
        task: TaskArgs,
        #[arg(long, value_delimiter = ',', default_value = "1,2,3,5,10")]
        k_values: Vec<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Data-reduction protocol averaged over seeds.
    Reduce {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, value_delimiter = ',', default_value = "100,50,25,10,5,2,1")]
        counts: Vec<usize>,
    },
}

enum Failure {
    Usage(String),
    Data(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Data(e)
    }
}

type CliResult<T> = std::result::Result<T, Failure>;

/// Parses `args` and runs the subcommand. Exit code 0 on success, 2 on
/// usage errors, 1 on data or I/O errors.
pub fn run<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Data(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

fn dispatch(cli: Cli) -> CliResult<()> {
    let seed = cli.seed;
    match cli.command {
        Command::Sim { kind } => cmd_sim(kind),
        Command::Init(args) => cmd_init(args, seed),
        Command::Types { taxonomy, labels, out } => {
            let (source, target) = read_label_pair(&labels)?;
            let types = read_taxonomy(&taxonomy)?.classify_labels(&source, &target)?;
            write_text(&out, &format_types(&types))?;
            for (i, t) in types.iter().enumerate() {
                println!("{}\t{}", target.get(i).map_or("", |l| l.label.as_str()), t);
            }
            Ok(())
        }
        Command::Train(args) => cmd_train(args, seed),
        Command::Eval { head, features, out } => {
            let head = read_head(&head)?;
            let data = read_features(&features)?;
            let eval = evaluate(&head, &data)?;
            println!("macro_f1\t{}", format_f64(eval.macro_f1));
            println!("loss\t{}", format_f64(eval.loss));
            let mut csv = String::from("class,f1\n");
            for (k, f) in eval.per_class_f1.iter().enumerate() {
                println!("class {k}\t{}", format_f64(*f));
                csv.push_str(&format!("{k},{}\n", format_f64(*f)));
            }
            if let Some(out) = out {
                write_text(&out, &csv)?;
            }
            Ok(())
        }
        Command::Experiment { kind } => cmd_experiment(kind, seed),
    }
}

fn read_label_pair(args: &LabelArgs) -> Result<(LabelSet, LabelSet)> {
    Ok((read_labels(&args.source_labels)?, read_labels(&args.target_labels)?))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn cmd_sim(kind: SimKind) -> CliResult<()> {
    let (sim, labels, out) = match kind {
        SimKind::Wordnet { taxonomy, labels, out } => {
            let (s, t) = read_label_pair(&labels)?;
            (wordnet_similarity_matrix(&read_taxonomy(&taxonomy)?, &s, &t)?, (s, t), out)
        }
        SimKind::Word2vec { embeddings, labels, out } => {
            let (s, t) = read_label_pair(&labels)?;
            (word2vec_similarity_matrix(&read_embeddings(&embeddings)?, &s, &t)?, (s, t), out)
        }
        SimKind::Inference { predictions, source_head, features, labels, out } => {
            let (s, t) = read_label_pair(&labels)?;
            let preds = match (predictions, source_head, features) {
                (Some(p), _, _) => read_predictions(&p, &s, &t)?,
                (None, Some(h), Some(f)) => {
                    let head = read_head(&h)?;
                    if head.classes() != s.len() {
                        return Err(Error::DimensionMismatch { expected: s.len(), found: head.classes() }.into());
                    }
                    let data = read_features(&f)?;
                    data.require_classes(t.len())?;
                    predict_source(&head, &data)?
                }
                _ => return Err(Failure::Usage("need --predictions or --source-head with --features".into())),
            };
            (inference_similarity_matrix(&preds, t.len(), s.len())?, (s, t), out)
        }
    };
    write_matrix(sim.values(), &out)?;
    print_top_neighbors(&sim, &labels.0, &labels.1);
    Ok(())
}

fn print_top_neighbors(sim: &SimilarityMatrix, source: &LabelSet, target: &LabelSet) {
    let name = |set: &LabelSet, i: usize| set.get(i).map_or_else(|| i.to_string(), |l| l.label.clone());
    for i in 0..sim.n_targets() {
        let mut order: Vec<usize> = (0..sim.n_sources()).collect();
        order.sort_by(|&a, &b| sim.get(i, b).total_cmp(&sim.get(i, a)).then(a.cmp(&b)));
        let top: Vec<String> = order
            .iter()
            .take(5)
            .map(|&j| format!("{} ({:.4})", name(source, j), sim.get(i, j)))
            .collect();
        println!("{}: {}", name(target, i), top.join(", "));
    }
}

fn read_types_file(path: &Path) -> Result<Vec<TargetType>> {
    parse_types(&fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
}

fn cmd_init(args: InitArgs, seed: u64) -> CliResult<()> {
    let source = read_head(&args.source_head)?;
    let sim = args.sim.as_deref().map(read_matrix).transpose()?.map(SimilarityMatrix::new).transpose()?;
    let types = args.types.as_deref().map(read_types_file).transpose()?;

    if args.random {
        let n = match (&sim, &types, args.n_targets) {
            (Some(s), _, _) => s.n_targets(),
            (None, Some(t), _) => t.len(),
            (None, None, Some(n)) if n > 0 => n,
            _ => return Err(Failure::Usage("--random needs --sim, --types or --n-targets".into())),
        };
        write_head(&xavier_init(n, source.dim(), seed), &args.out)?;
        println!("xavier head: {n} x {} (seed {seed})", source.dim());
        return Ok(());
    }

    let sim = sim.expect("clap requires --sim without --random");
    if sim.n_sources() != source.classes() {
        return Err(Error::DimensionMismatch { expected: source.classes(), found: sim.n_sources() }.into());
    }
    let defaults = InitSpec::default();
    let spec = match args.k {
        Some(k) => InitSpec::uniform(k, seed),
        None => InitSpec {
            k_disjoint: args.k_disjoint.unwrap_or(defaults.k_disjoint),
            k_included: args.k_included.unwrap_or(defaults.k_included),
            k_inclusive: args.k_inclusive.unwrap_or(defaults.k_inclusive),
            fallback_seed: seed,
        },
    };
    let types = match types {
        Some(t) => t,
        None if args.k.is_some() => vec![TargetType::Disjoint; sim.n_targets()],
        None => return Err(Failure::Usage("per-type K needs --types (or give a single --k)".into())),
    };
    let selections = plan_selections(&sim, &types, &spec)?;
    let head = assemble_head(&source, &selections, spec.fallback_seed)?;
    write_head(&head, &args.out)?;
    for (i, sel) in selections.iter().enumerate() {
        println!("target {i} [{}]: {}", types[i], describe(sel));
    }
    Ok(())
}

fn describe(sel: &[Neighbor]) -> String {
    if sel.is_empty() {
        return "no similar source, xavier row".into();
    }
    sel.iter()
        .map(|n| format!("source {} sim {:.4} coef {:.4}", n.source, n.raw_sim, n.coefficient))
        .collect::<Vec<_>>()
        .join("; ")
}

fn cmd_train(args: TrainArgs, seed: u64) -> CliResult<()> {
    let head = read_head(&args.head)?;
    let data = read_features(&args.features)?;
    let eval_data = match &args.eval_features {
        Some(p) => read_features(p)?,
        None => data.clone(),
    };
    let cfg = TrainConfig {
        learning_rate: args.lr,
        batch_size: args.batch_size,
        dropout_rate: args.dropout,
        epochs: args.epochs,
        eval_every: args.eval_every,
        seed,
        ..TrainConfig::default()
    };
    let (trained, history) = train(&head, &data, &eval_data, &cfg)?;
    history.write_csv(&args.out)?;
    if let Some(p) = &args.head_out {
        write_head(&trained, p)?;
    }
    if let (Some(first), Some(best)) = (history.first(), history.best()) {
        println!(
            "first {:.4}  best {:.4} (step {})",
            first.macro_f1, best.macro_f1, best.step
        );
    }
    Ok(())
}

fn plan(args: &RunArgs, seed: u64) -> SeedPlan {
    SeedPlan {
        task: args.task.config(seed),
        spec: InitSpec {
            k_disjoint: args.k_disjoint,
            k_included: args.k_included,
            k_inclusive: args.k_inclusive,
            fallback_seed: seed,
        },
        train: TrainConfig {
            epochs: args.epochs,
            seed,
            ..TrainConfig::default()
        },
    }
}

fn seed_list(start: u64, count: u64) -> CliResult<Vec<u64>> {
    if count == 0 {
        return Err(Failure::Usage("--seeds must be positive".into()));
    }
    Ok((start..start + count).collect())
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn cmd_experiment(kind: ExperimentKind, seed: u64) -> CliResult<()> {
    match kind {
        ExperimentKind::Generate { task, out } => {
            let task = generate(&task.config(seed))?;
            create_dir(&out)?;
            write_generated(&task, &out)?;
            println!(
                "task: {} sources, {} targets, source head macro F1 {:.4}",
                task.n_sources(),
                task.n_targets(),
                task.source_f1
            );
            Ok(())
        }
        ExperimentKind::Compare(args) => {
            let seeds = seed_list(seed, args.seeds)?;
            let reports = compare_over_seeds(&plan(&args, seed), &seeds)?;
            let summary = summarize_comparisons(&reports);
            create_dir(&args.out)?;
            write_text(&args.out.join("compare.csv"), &comparison_summary_csv(&summary))?;
            write_text(&args.out.join("compare_runs.csv"), &runs_csv(&seeds, &reports))?;
            let table = comparison_summary_table(&summary);
            write_text(&args.out.join("compare.txt"), &table)?;
            print!("{table}");
            Ok(())
        }
        ExperimentKind::Ksweep { task, k_values, out } => {
            let task = generate(&task.config(seed))?;
            let rows = run_k_sweep(&task, &k_values, seed)?;
            create_dir(&out)?;
            let csv = k_sweep_csv(&rows);
            write_text(&out.join("ksweep.csv"), &csv)?;
            print!("{csv}");
            Ok(())
        }
        ExperimentKind::Reduce { run, counts } => {
            let seeds = seed_list(seed, run.seeds)?;
            let runs = reduce_over_seeds(&plan(&run, seed), &counts, &seeds)?;
            let summary = summarize_reductions(&runs);
            create_dir(&run.out)?;
            write_text(&run.out.join("reduce.csv"), &reduction_csv(&summary))?;
            let table = reduction_table(&summary);
            write_text(&run.out.join("reduce.txt"), &table)?;
            print!("{table}");
            Ok(())
        }
    }
}

fn runs_csv(seeds: &[u64], reports: &[ComparisonReport]) -> String {
    let mut out = String::from("seed,method,first,best,best_step,chance\n");
    for (s, r) in seeds.iter().zip(reports) {
        for m in &r.methods {
            out.push_str(&format!(
                "{s},{},{},{},{},{}\n",
                m.method,
                format_f64(m.first),
                format_f64(m.best),
                m.best_step,
                format_f64(m.chance)
            ));
        }
    }
    out
}

fn write_generated(task: &crate::experiment::SyntheticTask, dir: &Path) -> Result<()> {
    write_head(&task.source_head, dir.join("source_head.txt"))?;
    write_labels(&task.source_labels, dir.join("source_labels.tsv"))?;
    write_labels(&task.target_labels, dir.join("target_labels.tsv"))?;
    write_taxonomy(&task.taxonomy, dir.join("taxonomy.tsv"))?;
    write_embeddings(&task.embeddings, dir.join("embeddings.txt"))?;
    write_features(&task.source_data, dir.join("source_features.txt"))?;
    write_features(&task.train, dir.join("train.txt"))?;
    write_features(&task.test, dir.join("test.txt"))?;
    write_text(&dir.join("types.tsv"), &format_types(&task.types))
}
