//! Standard-vs-multiparty benchmark sweep.
//!
//! A cell is one (dataset, algorithm, mode, T, run) combination. Standard
//! cells fit on the plain pooled data and ignore T; multiparty cells run a
//! full protocol round over a uniform partition and score with the
//! broadcast vector. Cells run in parallel but results keep enumeration order.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::dataset::{partition_uniform, LabeledDataset};
use super::metrics::auroc;
use crate::error::{Error, Result};
use crate::isoforest::{Algorithm, Forest, ForestParams};
use crate::protocol::{run_full_round, ClientInput, OutlierPolicy, RoundConfig};

pub const DEFAULT_T_VALUES: [f64; 4] = [2.0, 10.0, 100.0, 1000.0];
pub const DEFAULT_RUNS: usize = 20;
pub const DEFAULT_CLIENTS: usize = 3;
/// Key size for benchmark rounds; detection results do not depend on it.
pub const DEFAULT_BENCH_KEYSIZE: u64 = 512;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Standard,
    Multiparty,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Standard => "standard",
            Mode::Multiparty => "multiparty",
        })
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "standard" => Ok(Mode::Standard),
            "multiparty" => Ok(Mode::Multiparty),
            other => Err(Error::invalid(format!("unknown mode {other:?}; expected standard or multiparty"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct BenchConfig {
    pub datasets: Vec<LabeledDataset>,
    pub algos: Vec<Algorithm>,
    pub modes: Vec<Mode>,
    pub t_values: Vec<f64>,
    pub runs: usize,
    pub clients: usize,
    pub trees: usize,
    pub psi: usize,
    pub keysize: u64,
    pub policy: OutlierPolicy,
    /// Run `r` uses seed `seed + r`.
    pub seed: u64,
}

impl BenchConfig {
    pub fn new(datasets: Vec<LabeledDataset>) -> Self {
        let defaults = ForestParams::default();
        Self {
            datasets,
            algos: vec![Algorithm::If, Algorithm::Eif],
            modes: vec![Mode::Standard, Mode::Multiparty],
            t_values: DEFAULT_T_VALUES.to_vec(),
            runs: DEFAULT_RUNS,
            clients: DEFAULT_CLIENTS,
            trees: defaults.trees,
            psi: defaults.psi,
            keysize: DEFAULT_BENCH_KEYSIZE,
            policy: OutlierPolicy::default(),
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.datasets.is_empty() || self.algos.is_empty() || self.modes.is_empty() {
            return Err(Error::invalid("benchmark needs at least one dataset, algorithm and mode"));
        }
        if self.runs == 0 {
            return Err(Error::invalid("benchmark needs at least one run"));
        }
        if self.modes.contains(&Mode::Multiparty) {
            if self.t_values.is_empty() {
                return Err(Error::invalid("multiparty mode needs at least one T value"));
            }
            if self.clients < 2 {
                return Err(Error::invalid("multiparty mode needs at least two clients"));
            }
        }
        if self.trees == 0 || self.psi == 0 {
            return Err(Error::invalid("forest needs at least one tree and psi >= 1"));
        }
        Ok(())
    }

    /// Every cell in output order.
    pub fn cells(&self) -> Vec<BenchCell> {
        let mut cells = Vec::new();
        for (dataset, _) in self.datasets.iter().enumerate() {
            for &algo in &self.algos {
                for &mode in &self.modes {
                    let ts: Vec<Option<f64>> = match mode {
                        Mode::Standard => vec![None],
                        Mode::Multiparty => self.t_values.iter().copied().map(Some).collect(),
                    };
                    for t_param in ts {
                        for run in 0..self.runs {
                            cells.push(BenchCell {
                                dataset,
                                algo,
                                mode,
                                t_param,
                                run_seed: self.seed.wrapping_add(run as u64),
                            });
                        }
                    }
                }
            }
        }
        cells
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BenchCell {
    /// Index into [`BenchConfig::datasets`].
    pub dataset: usize,
    pub algo: Algorithm,
    pub mode: Mode,
    pub t_param: Option<f64>,
    pub run_seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchResult {
    pub dataset: String,
    pub algo: Algorithm,
    pub mode: Mode,
    pub t_param: Option<f64>,
    pub run_seed: u64,
    pub auroc: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchFailure {
    pub dataset: String,
    pub algo: Algorithm,
    pub mode: Mode,
    pub t_param: Option<f64>,
    pub run_seed: u64,
    pub error: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct BenchReport {
    pub results: Vec<BenchResult>,
    pub failures: Vec<BenchFailure>,
}

/// Computes one cell's AUROC.
pub fn run_cell(config: &BenchConfig, cell: &BenchCell) -> Result<f64> {
    let ds = &config.datasets[cell.dataset];
    let params = ForestParams {
        algo: cell.algo,
        trees: config.trees,
        psi: config.psi,
    };
    match cell.mode {
        Mode::Standard => {
            let forest = Forest::fit(&ds.features, &params, cell.run_seed)?;
            let scores = forest.score_all(&ds.features)?;
            auroc(scores.as_slice(), &ds.labels)
        }
        Mode::Multiparty => {
            let t_param = cell
                .t_param
                .ok_or_else(|| Error::invalid("multiparty cell without a T value"))?;
            let parts = partition_uniform(ds, config.clients, cell.run_seed)?;
            let part_labels: Vec<Vec<u8>> = parts.iter().map(|p| p.labels.clone()).collect();
            let inputs = parts
                .into_iter()
                .map(|p| ClientInput::with_labels(p.features, p.labels))
                .collect();
            let mut round = RoundConfig::new(cell.algo, Some(cell.run_seed));
            round.keysize = config.keysize;
            round.t_param = t_param;
            round.detection.forest = params;
            round.detection.policy = config.policy;
            let outcome = run_full_round(round, inputs)?;
            if outcome.scores.len() != ds.len() {
                return Err(Error::shape(format!(
                    "broadcast {} scores for {} rows",
                    outcome.scores.len(),
                    ds.len()
                )));
            }
            // each client pairs the broadcast scores at its rows with its own labels
            let mut scores = Vec::with_capacity(ds.len());
            let mut labels = Vec::with_capacity(ds.len());
            for (client, client_labels) in outcome.clients.iter().zip(&part_labels) {
                scores.extend_from_slice(&client.local_scores);
                labels.extend_from_slice(client_labels);
            }
            auroc(&scores, &labels)
        }
    }
}

pub fn bench(config: &BenchConfig) -> Result<BenchReport> {
    config.validate()?;
    let cells = config.cells();
    log::info!("benchmark: {} cells", cells.len());
    let outcomes: Vec<(BenchCell, Result<f64>)> = cells
        .into_par_iter()
        .map(|cell| {
            let r = run_cell(config, &cell);
            log::debug!("cell {cell:?}: {r:?}");
            (cell, r)
        })
        .collect();

    let mut report = BenchReport::default();
    for (cell, outcome) in outcomes {
        let dataset = config.datasets[cell.dataset].name.clone();
        match outcome {
            Ok(auroc) => report.results.push(BenchResult {
                dataset,
                algo: cell.algo,
                mode: cell.mode,
                t_param: cell.t_param,
                run_seed: cell.run_seed,
                auroc,
            }),
            Err(e) => {
                log::warn!("{dataset} {} {} T={:?} seed {} failed: {e}", cell.algo, cell.mode, cell.t_param, cell.run_seed);
                report.failures.push(BenchFailure {
                    dataset,
                    algo: cell.algo,
                    mode: cell.mode,
                    t_param: cell.t_param,
                    run_seed: cell.run_seed,
                    error: e.to_string(),
                });
            }
        }
    }
    Ok(report)
}

pub const RESULTS_HEADER: &str = "dataset,algo,mode,T,seed,auroc";

/// One CSV row per result; `T` is empty for standard cells.
pub fn write_results_csv(results: &[BenchResult], mut writer: impl Write) -> Result<()> {
    writeln!(writer, "{RESULTS_HEADER}")?;
    for r in results {
        let t = r.t_param.map(|t| t.to_string()).unwrap_or_default();
        writeln!(writer, "{},{},{},{},{},{}", r.dataset, r.algo, r.mode, t, r.run_seed, r.auroc)?;
    }
    Ok(())
}

/// Boxplot statistics of one (dataset, algo, mode, T) group.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupSummary {
    pub dataset: String,
    pub algo: Algorithm,
    pub mode: Mode,
    #[serde(rename = "T")]
    pub t_param: Option<f64>,
    pub runs: usize,
    pub mean: f64,
    pub std: f64,
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
}

/// Linearly interpolated quantile of sorted values.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Groups results in first-appearance order.
pub fn summarize(results: &[BenchResult]) -> Vec<GroupSummary> {
    let mut order = Vec::new();
    let mut groups: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    for r in results {
        let key = (&r.dataset, r.algo, r.mode, r.t_param.map(f64::to_bits));
        let idx = match order.iter().position(|k| *k == key) {
            Some(i) => i,
            None => {
                order.push(key);
                order.len() - 1
            }
        };
        groups.entry(idx).or_default().push(r.auroc);
    }
    order
        .into_iter()
        .enumerate()
        .map(|(i, (dataset, algo, mode, t_bits))| {
            let mut values = groups.remove(&i).expect("every group has a value");
            values.sort_by(f64::total_cmp);
            let n = values.len();
            let mean = values.iter().sum::<f64>() / n as f64;
            let std = if n > 1 {
                (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
            } else {
                0.0
            };
            GroupSummary {
                dataset: dataset.clone(),
                algo,
                mode,
                t_param: t_bits.map(f64::from_bits),
                runs: n,
                mean,
                std,
                min: values[0],
                q1: quantile(&values, 0.25),
                median: quantile(&values, 0.5),
                q3: quantile(&values, 0.75),
                max: values[n - 1],
            }
        })
        .collect()
}

/// Mean AUROC over the results matching a filter.
pub fn mean_auroc<'a>(results: impl IntoIterator<Item = &'a BenchResult>) -> Option<f64> {
    let (sum, n) = results.into_iter().fold((0.0, 0usize), |(s, n), r| (s + r.auroc, n + 1));
    (n > 0).then(|| sum / n as f64)
}
