//! Synthetic transfer tasks and the comparison, K-sweep and data-reduction
//! protocols run over them.

mod generate;
mod protocols;

pub use generate::{generate, generate_task, SyntheticTask, TaskConfig, SOURCE_F1_TARGET};
pub use protocols::{
    chance_macro_f1, compare_over_seeds, comparison_summary_csv, comparison_summary_table, compute_similarities,
    initial_head, k_sweep_csv, per_type_f1, reduce_over_seeds, reduction_csv, reduction_table, run_comparison,
    run_data_reduction, run_k_sweep, subsample, summarize_comparisons, summarize_reductions, ComparisonReport,
    KSweepRow, Method, MethodResult, MethodSummary, ReductionRow, ReductionSummary, SeedPlan, Similarities, Summary,
};
