//! Acceptance criteria, one PASS/FAIL line each. Exits non-zero if any fails.

use std::fs;
use std::path::PathBuf;
use std::process::Command;
use std::time::{Duration, Instant};

use maskforest::detrng::{permutation, RngStream};
use maskforest::evaluation::{bench, load_csv, mean_auroc, synth, BenchConfig, BenchResult, Mode};
use maskforest::isoforest::{Algorithm, Forest, ForestParams};
use maskforest::linalg::{build_masking_matrix, Matrix};
use maskforest::paillier;
use maskforest::protocol::{
    audit_transcript, wire, AuditCheck, ClientInput, MessageKind, OutlierPolicy, PartyId, RoundConfig, Session,
};
use num_bigint::{BigUint, RandBigInt};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

const TOLERANCE: f64 = 0.05;

struct Verdict {
    passed: bool,
    detail: String,
}

fn verdict(passed: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        passed,
        detail: detail.into(),
    }
}

fn glass_path() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/glass.csv")
}

fn round_config(algo: Algorithm, seed: u64) -> RoundConfig {
    let mut c = RoundConfig::new(algo, Some(seed));
    c.keysize = 512;
    c
}

fn paillier_properties() -> Verdict {
    let start = Instant::now();
    let mut rng = ChaCha20Rng::seed_from_u64(1);
    let (pk, sk) = paillier::gen(512, &mut rng).unwrap();
    let n = pk.n().clone();
    let mut violations = 0;
    for _ in 0..1000 {
        let x = rng.gen_biguint_below(&n);
        let y = rng.gen_biguint_below(&n);
        let k = rng.gen_biguint(64);
        let cx = paillier::enc(&x, &pk, &mut rng).unwrap();
        let cy = paillier::enc(&y, &pk, &mut rng).unwrap();
        let sum = paillier::dec(&paillier::hom_add(&cx, &cy, &pk), &sk, &pk).unwrap();
        let prod = paillier::dec(&paillier::scalar_mul(&k, &cx, &pk), &sk, &pk).unwrap();
        if paillier::dec(&cx, &sk, &pk).unwrap() != x || sum != (&x + &y) % &n || prod != (&k * &x) % &n {
            violations += 1;
        }
    }
    let elapsed = start.elapsed();
    verdict(
        violations == 0 && elapsed < Duration::from_secs(60),
        format!("1000 pairs at 512 bits, {violations} violations, {elapsed:.1?} (limit 60 s)"),
    )
}

fn random_inputs(counts: &[usize], cols: usize, stream: &mut RngStream, scale: f64) -> Vec<ClientInput> {
    counts
        .iter()
        .map(|&n| {
            let data = (0..n * cols).map(|_| scale * (2.0 * stream.uniform01() - 1.0)).collect();
            ClientInput::new(Matrix::new(n, cols, data).unwrap())
        })
        .collect()
}

fn index_partition() -> Verdict {
    let mut gen = RngStream::new(0xACCE);
    let mut violations = 0;
    let mut configs = 0;
    while configs < 100 {
        let m = 2 + gen.below(5) as usize;
        let counts: Vec<usize> = (0..m).map(|_| gen.below(51) as usize).collect();
        let total: usize = counts.iter().sum();
        if total == 0 {
            continue;
        }
        configs += 1;
        let inputs = random_inputs(&counts, 1, &mut gen, 1.0);
        let mut session = Session::new(round_config(Algorithm::If, gen.next_u64()), inputs).unwrap();
        session.distribute_keys().unwrap();
        session.agree_seed().unwrap();
        session.secure_total_count().unwrap();
        session.assign_indices().unwrap();
        let mut seen = vec![0u32; total];
        for (client, &n) in session.clients().iter().zip(&counts) {
            let z = client.z_set().unwrap();
            if z.len() != n {
                violations += 1;
            }
            for &k in z {
                match seen.get_mut(k) {
                    Some(c) => *c += 1,
                    None => violations += 1,
                }
            }
        }
        violations += seen.iter().filter(|&&c| c != 1).count();
    }
    verdict(violations == 0, format!("{configs} configurations, {violations} violations"))
}

fn masking_reconstruction() -> Verdict {
    let mut gen = RngStream::new(0x3A5C);
    let mut worst: f64 = 0.0;
    let mut violations = 0usize;
    for _ in 0..20 {
        let m = 2 + gen.below(3) as usize;
        let d = 1 + gen.below(20) as usize;
        let total = 1 + gen.below(500) as usize;
        // random split of `total` rows among m clients
        let mut cuts: Vec<usize> = (0..m - 1).map(|_| gen.below(total as u64 + 1) as usize).collect();
        cuts.sort_unstable();
        let counts: Vec<usize> = std::iter::once(0)
            .chain(cuts.iter().copied())
            .zip(cuts.iter().copied().chain(std::iter::once(total)))
            .map(|(a, b)| b - a)
            .collect();
        let inputs = random_inputs(&counts, d, &mut gen, 1e3);
        let originals: Vec<Matrix> = inputs.iter().map(|i| i.data.clone()).collect();

        let mut cfg = round_config(Algorithm::If, gen.next_u64());
        cfg.detection.forest.trees = 5;
        let mut session = Session::new(cfg, inputs).unwrap();
        session.run().unwrap();
        let shares: Vec<u64> = session.clients().iter().map(|c| c.seed_share().unwrap()).collect();
        let order = session.server_a().order().to_vec();
        let h = session.server_a().h_offset().unwrap();
        let outcome = session.finish().unwrap();

        // assemble the permuted X M from the shares, the ordering and the offset alone
        let xi: u64 = shares.iter().sum();
        let perm = permutation(total, xi).unwrap();
        let masking = build_masking_matrix(d, xi, cfg.t_param).unwrap();
        let mut expected = Matrix::zeros(total, d);
        let mut start: u64 = order[..h].iter().map(|&k| shares[k]).sum();
        for &c in &order {
            let x_tilde = originals[c].matmul(masking.matrix()).unwrap();
            for j in 0..counts[c] {
                let k = perm[((start + j as u64) % total as u64) as usize];
                expected.row_mut(k).copy_from_slice(x_tilde.row(j));
            }
            start += counts[c] as u64;
        }
        for (a, b) in outcome.view.x_masked.as_slice().iter().zip(expected.as_slice()) {
            let rel = (a - b).abs() / (1.0 + b.abs());
            worst = worst.max(rel);
            if rel > 1e-6 {
                violations += 1;
            }
        }
    }
    verdict(
        violations == 0,
        format!("20 datasets, {violations} elements beyond 1e-6, worst relative error {worst:.2e}"),
    )
}

fn masking_spectrum() -> Verdict {
    let mut worst: f64 = 0.0;
    for d in [2usize, 9, 36, 274] {
        for t in [2.0, 1000.0] {
            let mm = build_masking_matrix(d, 0xD1A6 + d as u64, t).unwrap();
            let m = mm.matrix();
            let na = nalgebra::DMatrix::from_row_slice(d, d, m.as_slice());
            let mut singular: Vec<f64> = na.singular_values().iter().copied().collect();
            let mut diag = mm.scaling().to_vec();
            singular.sort_by(f64::total_cmp);
            diag.sort_by(f64::total_cmp);
            for (s, e) in singular.iter().zip(&diag) {
                worst = worst.max((s - e).abs());
            }
        }
    }
    verdict(worst <= 1e-9, format!("D in {{2, 9, 36, 274}}, T in {{2, 1000}}, max deviation {worst:.2e} (limit 1e-9)"))
}

fn forest_sanity() -> Verdict {
    let start = Instant::now();
    let mut means = Vec::new();
    for algo in [Algorithm::If, Algorithm::Eif] {
        let mut total = 0.0;
        for seed in 0..10 {
            let ds = synth(500, 25, 2, seed).unwrap();
            let forest = Forest::fit(&ds.features, &ForestParams::new(algo), seed).unwrap();
            let scores = forest.score_all(&ds.features).unwrap();
            total += maskforest::evaluation::auroc(scores.as_slice(), &ds.labels).unwrap();
        }
        means.push((algo, total / 10.0));
    }
    let elapsed = start.elapsed();
    let ok = means.iter().all(|(_, m)| *m >= 0.95) && elapsed < Duration::from_secs(30);
    let detail = means
        .iter()
        .map(|(a, m)| format!("{a} {m:.4}"))
        .collect::<Vec<_>>()
        .join(", ");
    verdict(ok, format!("mean AUROC {detail} (min 0.95), {elapsed:.1?} (limit 30 s)"))
}

struct GlassSweep {
    results: Vec<BenchResult>,
    failures: usize,
    elapsed: Duration,
}

impl GlassSweep {
    fn run() -> Self {
        let start = Instant::now();
        let mut cfg = BenchConfig::new(vec![load_csv(glass_path()).unwrap()]);
        cfg.runs = 20;
        cfg.clients = 3;
        cfg.seed = 1;
        let report = bench(&cfg).unwrap();
        Self {
            results: report.results,
            failures: report.failures.len(),
            elapsed: start.elapsed(),
        }
    }

    fn mean(&self, algo: Algorithm, mode: Mode, t: Option<f64>) -> f64 {
        mean_auroc(
            self.results
                .iter()
                .filter(|r| r.algo == algo && r.mode == mode && (t.is_none() || r.t_param == t)),
        )
        .expect("group is populated")
    }
}

fn standard_vs_multiparty(sweep: &GlassSweep) -> Verdict {
    let mut ok = sweep.failures == 0 && sweep.elapsed < Duration::from_secs(600);
    let mut parts = Vec::new();
    for algo in [Algorithm::If, Algorithm::Eif] {
        let std_mean = sweep.mean(algo, Mode::Standard, None);
        let mp_mean = sweep.mean(algo, Mode::Multiparty, None);
        let diff = (std_mean - mp_mean).abs();
        ok &= diff <= TOLERANCE;
        parts.push(format!("{algo}: standard {std_mean:.4} vs multiparty {mp_mean:.4}, |diff| {diff:.4}"));
    }
    verdict(
        ok,
        format!(
            "{} (limit {TOLERANCE}), {} cells in {:.1?}",
            parts.join("; "),
            sweep.results.len(),
            sweep.elapsed
        ),
    )
}

fn t_insensitivity(sweep: &GlassSweep) -> Verdict {
    let mut ok = true;
    let mut parts = Vec::new();
    for algo in [Algorithm::If, Algorithm::Eif] {
        let means: Vec<f64> = [2.0, 10.0, 100.0, 1000.0]
            .iter()
            .map(|&t| sweep.mean(algo, Mode::Multiparty, Some(t)))
            .collect();
        let spread = means.iter().cloned().fold(f64::MIN, f64::max) - means.iter().cloned().fold(f64::MAX, f64::min);
        ok &= spread <= TOLERANCE;
        let shown: Vec<String> = means.iter().map(|m| format!("{m:.4}")).collect();
        parts.push(format!("{algo}: [{}], max pairwise {spread:.4}", shown.join(", ")));
    }
    verdict(ok, format!("{} (limit {TOLERANCE})", parts.join("; ")))
}

fn if_vs_eif(sweep: &GlassSweep) -> Verdict {
    let a = sweep.mean(Algorithm::If, Mode::Multiparty, None);
    let b = sweep.mean(Algorithm::Eif, Mode::Multiparty, None);
    let diff = (a - b).abs();
    verdict(
        diff <= TOLERANCE,
        format!("multiparty IF {a:.4} vs EIF {b:.4}, |diff| {diff:.4} (limit {TOLERANCE})"),
    )
}

fn privacy_audit() -> Verdict {
    let glass = load_csv(glass_path()).unwrap();
    let mut honest_failures = 0;
    let runs = 12;
    let mut last = None;
    for seed in 0..runs {
        let m = 2 + (seed as usize % 4);
        let algo = if seed % 2 == 0 { Algorithm::If } else { Algorithm::Eif };
        let parts = maskforest::evaluation::partition_uniform(&glass, m, seed).unwrap();
        let inputs = parts
            .iter()
            .map(|p| ClientInput::with_labels(p.features.clone(), p.labels.clone()))
            .collect();
        let mut cfg = round_config(algo, seed);
        cfg.detection.policy = OutlierPolicy::Contamination(0.05);
        let outcome = maskforest::protocol::run_full_round(cfg, inputs).unwrap();
        let report = audit_transcript(&outcome.transcript);
        if !report.passed() {
            honest_failures += 1;
        }
        last = Some((outcome.transcript, parts[0].features.clone()));
    }
    let (mut tampered, x0) = last.unwrap();
    tampered.record(PartyId::Client(0), PartyId::ServerP, MessageKind::MaskedMatrix, wire::encode_matrix(&x0));
    let negative = audit_transcript(&tampered);
    let caught = !negative.check(AuditCheck::PrincipalView).passed;
    verdict(
        honest_failures == 0 && caught,
        format!(
            "{runs} honest runs, {honest_failures} failing; injected leak {}",
            if caught { "fails check (b)" } else { "NOT detected" }
        ),
    )
}

fn cli_determinism() -> Verdict {
    let dir = tempfile::tempdir().unwrap();
    let glass = glass_path();
    let mut outputs = Vec::new();
    for name in ["first", "second"] {
        let out_dir = dir.path().join(name);
        let status = Command::new(env!("CARGO_BIN_EXE_maskforest"))
            .args(["run", "--data", glass.to_str().unwrap(), "--clients", "3", "--algo", "eif"])
            .args(["--keysize", "512", "--seed", "42", "--out", out_dir.to_str().unwrap()])
            .output()
            .unwrap();
        if !status.status.success() {
            return verdict(false, format!("run failed: {}", String::from_utf8_lossy(&status.stderr)));
        }
        outputs.push(out_dir);
    }
    let files = ["transcript.ndjson", "scores.csv", "client_0.csv", "client_1.csv", "client_2.csv"];
    let differing: Vec<&str> = files
        .iter()
        .copied()
        .filter(|f| fs::read(outputs[0].join(f)).unwrap() != fs::read(outputs[1].join(f)).unwrap())
        .collect();
    verdict(
        differing.is_empty(),
        format!("{} files compared, differing: {differing:?}", files.len()),
    )
}

fn main() {
    let sweep = GlassSweep::run();
    let criteria: Vec<(&str, Box<dyn Fn() -> Verdict + '_>)> = vec![
        ("paillier property suite", Box::new(paillier_properties)),
        ("index-assignment partition", Box::new(index_partition)),
        ("masking reconstruction", Box::new(masking_reconstruction)),
        ("masking-matrix spectrum", Box::new(masking_spectrum)),
        ("forest sanity", Box::new(forest_sanity)),
        ("standard vs multiparty on glass", Box::new(|| standard_vs_multiparty(&sweep))),
        ("T-insensitivity on glass", Box::new(|| t_insensitivity(&sweep))),
        ("IF vs EIF under masking", Box::new(|| if_vs_eif(&sweep))),
        ("privacy audit", Box::new(privacy_audit)),
        ("run determinism", Box::new(cli_determinism)),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let v = check();
        if !v.passed {
            failed += 1;
        }
        println!(
            "acceptance {:>2} {} {name}: {}",
            i + 1,
            if v.passed { "PASS" } else { "FAIL" },
            v.detail
        );
    }
    println!("acceptance: {} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
