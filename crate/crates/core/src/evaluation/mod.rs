//! Datasets, AUROC and the standard-vs-multiparty benchmark.

mod bench;
mod dataset;
mod metrics;

pub use bench::{
    bench, mean_auroc, run_cell, summarize, write_results_csv, BenchCell, BenchConfig, BenchFailure, BenchReport,
    BenchResult, GroupSummary, Mode, DEFAULT_BENCH_KEYSIZE, DEFAULT_CLIENTS, DEFAULT_RUNS, DEFAULT_T_VALUES,
    RESULTS_HEADER,
};
pub use dataset::{load_csv, partition_uniform, read_csv, synth, LabeledDataset};
pub use metrics::auroc;
