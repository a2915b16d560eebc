use std::fmt::Display;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::anyhow;
use log::info;
use maskforest::evaluation::{
    bench as run_bench, load_csv, partition_uniform, summarize, synth as make_synth, write_results_csv, BenchConfig,
    LabeledDataset, Mode, DEFAULT_BENCH_KEYSIZE, DEFAULT_CLIENTS, DEFAULT_RUNS, DEFAULT_T_VALUES,
};
use maskforest::isoforest::{Algorithm, DEFAULT_PSI, DEFAULT_TREES};
use maskforest::paillier::DEFAULT_KEYSIZE;
use maskforest::protocol::{audit_transcript, run_full_round, ClientInput, OutlierPolicy, RoundConfig, Transcript, DEFAULT_T};
use serde::de::DeserializeOwned;

use crate::args::{AuditArgs, BenchArgs, RunArgs, SynthArgs};

/// A command failure and the process exit code it maps to.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub error: anyhow::Error,
}

impl Failure {
    /// Exit 1: invalid configuration or a domain error.
    pub fn domain(error: impl Into<anyhow::Error>) -> Self {
        Self {
            code: 1,
            error: error.into(),
        }
    }

    /// Exit 2: unreadable input or malformed file contents.
    pub fn format(error: impl Into<anyhow::Error>) -> Self {
        Self {
            code: 2,
            error: error.into(),
        }
    }
}

impl From<maskforest::Error> for Failure {
    fn from(e: maskforest::Error) -> Self {
        match e {
            maskforest::Error::Io(_) | maskforest::Error::Parse { .. } | maskforest::Error::Format(_) => {
                Failure::format(e)
            }
            _ => Failure::domain(e),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::format(e)
    }
}

trait Context<T> {
    fn context(self, what: impl Display) -> Result<T, Failure>;
}

impl<T, E: Into<Failure>> Context<T> for Result<T, E> {
    fn context(self, what: impl Display) -> Result<T, Failure> {
        self.map_err(|e| {
            let f: Failure = e.into();
            Failure {
                code: f.code,
                error: f.error.context(what.to_string()),
            }
        })
    }
}

fn required<T>(value: Option<T>, flag: &str) -> Result<T, Failure> {
    value.ok_or_else(|| Failure::domain(anyhow!("missing required flag --{flag}")))
}

fn read_config<T: DeserializeOwned>(path: &Path) -> Result<T, Failure> {
    let text = fs::read_to_string(path).context(format!("reading config {}", path.display()))?;
    serde_json::from_str(&text)
        .map_err(|e| Failure::format(anyhow!("config {}: {e}", path.display())))
}

fn parse_algo(s: &str) -> Result<Algorithm, Failure> {
    s.parse::<Algorithm>().map_err(Failure::domain)
}

pub fn run(mut args: RunArgs) -> Result<(), Failure> {
    if let Some(path) = args.config.clone() {
        args.merge(read_config(&path)?);
    }
    let data = required(args.data, "data")?;
    let clients = required(args.clients, "clients")?;
    let algo = parse_algo(&required(args.algo, "algo")?)?;
    let seed = required(args.seed, "seed")?;
    let out = required(args.out, "out")?;

    let mut config = RoundConfig::new(algo, Some(seed));
    config.keysize = args.keysize.unwrap_or(DEFAULT_KEYSIZE);
    config.t_param = args.t_param.unwrap_or(DEFAULT_T);
    config.detection.forest.trees = args.trees.unwrap_or(DEFAULT_TREES);
    config.detection.forest.psi = args.psi.unwrap_or(DEFAULT_PSI);
    config.detection.policy = match (args.contamination, args.threshold) {
        (_, Some(tau)) => OutlierPolicy::Threshold(tau),
        (Some(f), None) => OutlierPolicy::Contamination(f),
        (None, None) => OutlierPolicy::default(),
    };
    config.validate()?;
    if clients < 2 {
        return Err(Failure::domain(anyhow!(
            "the protocol needs at least two clients (m >= 2), got --clients {clients}"
        )));
    }

    let ds = load_csv(&data).context(format!("loading {}", data.display()))?;
    info!("{}: {} rows, {} features, {} labelled outliers", ds.name, ds.len(), ds.dims(), ds.positives());
    let parts = partition_uniform(&ds, clients, seed)?;
    let inputs = parts
        .iter()
        .map(|p| ClientInput::with_labels(p.features.clone(), p.labels.clone()))
        .collect();
    let outcome = run_full_round(config, inputs)?;

    fs::create_dir_all(&out).context(format!("creating {}", out.display()))?;
    for (i, client) in outcome.clients.iter().enumerate() {
        let cleaned = LabeledDataset {
            name: format!("client_{i}"),
            features: client.cleaned.clone(),
            labels: client.cleaned_labels.clone().unwrap_or_default(),
            header: ds.header.clone(),
        };
        let path = out.join(format!("client_{i}.csv"));
        cleaned.save_csv(&path).context(format!("writing {}", path.display()))?;
        let flagged = client.flags.iter().filter(|&&f| f).count();
        println!(
            "client {i}: {} rows, {flagged} flagged, {} kept",
            client.flags.len(),
            client.cleaned.rows()
        );
    }

    let mut scores = String::from("row,score\n");
    for (k, s) in outcome.scores.as_slice().iter().enumerate() {
        scores.push_str(&format!("{k},{s}\n"));
    }
    let scores_path = out.join("scores.csv");
    fs::write(&scores_path, scores).context(format!("writing {}", scores_path.display()))?;

    let transcript_path = out.join("transcript.ndjson");
    outcome
        .transcript
        .save(&transcript_path)
        .context(format!("writing {}", transcript_path.display()))?;
    let report = audit_transcript(&outcome.transcript);
    println!(
        "transcript: {} envelopes, privacy audit {}",
        outcome.transcript.len(),
        if report.passed() { "passed" } else { "FAILED" }
    );
    println!("outputs written to {}", out.display());
    Ok(())
}

pub fn bench(mut args: BenchArgs) -> Result<(), Failure> {
    if let Some(path) = args.config.clone() {
        args.merge(read_config(&path)?);
    }
    let paths: Vec<PathBuf> = required(args.data, "data")?;
    let out = required(args.out, "out")?;

    let mut datasets = Vec::with_capacity(paths.len());
    for path in &paths {
        let ds = load_csv(path).map_err(|e| Failure::domain(anyhow!(e).context(format!("loading {}", path.display()))))?;
        datasets.push(ds);
    }
    let mut config = BenchConfig::new(datasets);
    config.runs = args.runs.unwrap_or(DEFAULT_RUNS);
    if let Some(algos) = args.algos {
        config.algos = algos.iter().map(|a| parse_algo(a)).collect::<Result<_, _>>()?;
    }
    if let Some(modes) = args.modes {
        config.modes = modes
            .iter()
            .map(|m| m.parse::<Mode>().map_err(Failure::domain))
            .collect::<Result<_, _>>()?;
    }
    config.t_values = args.t_values.unwrap_or_else(|| DEFAULT_T_VALUES.to_vec());
    config.clients = args.clients.unwrap_or(DEFAULT_CLIENTS);
    config.trees = args.trees.unwrap_or(DEFAULT_TREES);
    config.psi = args.psi.unwrap_or(DEFAULT_PSI);
    config.keysize = args.keysize.unwrap_or(DEFAULT_BENCH_KEYSIZE);
    config.seed = args.seed.unwrap_or(0);

    let report = run_bench(&config)?;
    for f in &report.failures {
        eprintln!(
            "warning: {} {} {} T={} seed {} failed: {}",
            f.dataset,
            f.algo,
            f.mode,
            f.t_param.map(|t| t.to_string()).unwrap_or_default(),
            f.run_seed,
            f.error
        );
    }
    if report.results.is_empty() {
        return Err(Failure::domain(anyhow!("every benchmark cell failed")));
    }

    fs::create_dir_all(&out).context(format!("creating {}", out.display()))?;
    let results_path = out.join("results.csv");
    let file = fs::File::create(&results_path).context(format!("writing {}", results_path.display()))?;
    write_results_csv(&report.results, std::io::BufWriter::new(file))
        .context(format!("writing {}", results_path.display()))?;

    let groups = summarize(&report.results);
    let summary = serde_json::json!({ "groups": groups, "failures": report.failures });
    let summary_path = out.join("summary.json");
    fs::write(&summary_path, serde_json::to_string_pretty(&summary).expect("summary serializes"))
        .context(format!("writing {}", summary_path.display()))?;

    println!("{:<12} {:<4} {:<11} {:>7} {:>5} {:>8} {:>8}", "dataset", "algo", "mode", "T", "runs", "mean", "std");
    for g in &groups {
        let t = g.t_param.map(|t| t.to_string()).unwrap_or_else(|| "-".into());
        println!(
            "{:<12} {:<4} {:<11} {:>7} {:>5} {:>8.4} {:>8.4}",
            g.dataset,
            g.algo.to_string(),
            g.mode.to_string(),
            t,
            g.runs,
            g.mean,
            g.std
        );
    }
    println!("{} results written to {}", report.results.len(), out.display());
    Ok(())
}

pub fn synth(args: SynthArgs) -> Result<(), Failure> {
    let ds = make_synth(args.inliers, args.outliers, args.dims, args.seed)?;
    ds.save_csv(&args.out)
        .map_err(|e| Failure::domain(anyhow!(e).context(format!("writing {}", args.out.display()))))?;
    println!("{} rows ({} outliers) written to {}", ds.len(), ds.positives(), args.out.display());
    Ok(())
}

/// Exit 0 when all checks pass, 1 when any fails, 2 when the file is unusable.
pub fn audit(args: AuditArgs) -> Result<bool, Failure> {
    let path = &args.transcript;
    let transcript = Transcript::load(path)
        .map_err(|e| Failure::format(anyhow!(e).context(format!("reading {}", path.display()))))?;
    if transcript.is_empty() {
        return Err(Failure::format(anyhow!("{} contains no envelopes", path.display())));
    }
    let report = audit_transcript(&transcript);
    print!("{report}");
    Ok(report.passed())
}
