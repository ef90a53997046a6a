//! Exit criteria for the engine model. Each test prints one PASS/FAIL line.

use std::path::Path;
use std::process::Command;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use demm::engine::{reconfigure_density_check, run_gemm, run_gemm_with, DemmConfig, DemmEngine, Stage};
use demm::experiment::{Experiment, Job, RUN_COLUMNS};
use demm::functional::dense_matmul;
use demm::matrix::DenseMatrix;
use demm::sparse::{
    pack, prune_to_pattern, random_dense, random_sparse, unpack, validate_pattern, PackedSparseMatrix,
    SparsityPattern,
};
use demm::workloads::{load_layer_file, WeightMode};
use demm::Execution;

fn report(id: &str, what: &str, ok: bool, detail: String) {
    println!("[{}] {id}: {what} ({detail})", if ok { "PASS" } else { "FAIL" });
    assert!(ok, "{id} failed: {detail}");
}

fn pat(n: usize, m: usize) -> SparsityPattern {
    SparsityPattern::new(n, m).unwrap()
}

fn cfg(n: usize, m: usize, c: usize, k: usize) -> DemmConfig {
    DemmConfig::new(n, m, c, k).unwrap()
}

fn data_dir() -> &'static Path {
    Path::new(concat!(env!("CARGO_MANIFEST_DIR"), "/data"))
}

#[test]
fn ac01_oracle_equivalence() {
    let patterns = [pat(1, 2), pat(1, 4), pat(1, 8), pat(1, 16), pat(4, 16), pat(8, 128)];
    let configs = [cfg(8, 128, 64, 8), cfg(4, 64, 32, 4), cfg(2, 8, 4, 2)];
    let per_combo = 56;
    let mut rng = ChaCha8Rng::seed_from_u64(0xDE33);
    let mut cases = Vec::new();
    for p in patterns {
        for c in configs {
            for _ in 0..per_combo {
                let dims = (rng.random_range(1..=16), rng.random_range(1..=300), rng.random_range(1..=96));
                cases.push((p, c, dims, rng.random::<u64>()));
            }
        }
    }
    let mismatches = demm::par::map(Execution::Parallel, &cases, |&(p, c, (r, k, cd), seed)| {
        let a = random_sparse(r, k, p, seed).unwrap();
        let b = random_dense(k, cd, seed.rotate_left(17));
        let (out, rep) = run_gemm(&a, &b, c).unwrap();
        out != dense_matmul(&unpack(&a), &b).unwrap() || !rep.is_consistent()
    })
    .into_iter()
    .filter(|&bad| bad)
    .count();
    report(
        "AC1",
        "engine output bit-identical to dense oracle",
        cases.len() >= 1000 && mismatches == 0,
        format!("{} cases, {mismatches} mismatches", cases.len()),
    );
}

#[test]
fn ac02_resource_formula() {
    let c = cfg(8, 128, 64, 8);
    report(
        "AC2",
        "DeMM(8,128,64,8) has 512 multipliers",
        c.multipliers() == 512 && c.reduction_trees() == 64 && c.reduction_fan_in() == 8,
        format!("{} multipliers, {} trees of {}-to-1", c.multipliers(), c.reduction_trees(), c.reduction_fan_in()),
    );
}

#[test]
fn ac03_preload_law() {
    let mut eng = DemmEngine::new(cfg(8, 128, 64, 8));
    eng.enable_trace();
    let full = eng.preload(&random_dense(128, 64, 1)).unwrap();
    let full_trace = eng.take_trace().unwrap();
    eng.enable_trace();
    let partial = eng.preload(&random_dense(100, 64, 2)).unwrap();
    let partial_trace = eng.take_trace().unwrap();
    let one_row_per_cycle = |t: &demm::engine::PipelineTrace| {
        t.events_for(Stage::Preload).count() == t.cycles_with(Stage::Preload)
    };
    let ok = full == 128
        && partial == 100
        && full_trace.cycles_with(Stage::Preload) == 128
        && partial_trace.cycles_with(Stage::Preload) == 100
        && one_row_per_cycle(&full_trace)
        && one_row_per_cycle(&partial_trace);
    report(
        "AC3",
        "preload takes one cycle per tile row",
        ok,
        format!(
            "full {full} (trace {}), partial {partial} (trace {})",
            full_trace.cycles_with(Stage::Preload),
            partial_trace.cycles_with(Stage::Preload)
        ),
    );
}

#[test]
fn ac04_throughput_law() {
    let a = random_sparse(64, 128, pat(8, 128), 4).unwrap();
    let b = random_dense(128, 64, 5);
    let run = run_gemm_with(&a, &b, cfg(8, 128, 64, 8), Execution::Sequential, true).unwrap();
    let t = run.trace.unwrap();
    let issue = t.cycles_with(Stage::Issue) as u64;
    let last_issue = t.events_for(Stage::Issue).map(|e| e.cycle).max().unwrap();
    let end = t.span().unwrap().1;
    let drain = end - last_issue;
    let total = end + 1;
    let r = run.report;
    let ok = issue == 64
        && drain == 6
        && total == 198
        && (r.compute_cycles, r.drain_cycles, r.total_cycles) == (64, 6, 198)
        && run.output == dense_matmul(&unpack(&a), &b).unwrap();
    report(
        "AC4",
        "64 rows x 8 nnz: 128 + 64 + 6 = 198 cycles",
        ok,
        format!("trace: compute {issue}, drain {drain}, total {total}"),
    );
}

#[test]
fn ac05_time_sharing_law() {
    let b = random_dense(128, 64, 6);
    let k2 = cfg(8, 128, 64, 2);
    let issue = |nnz: usize| {
        let a = random_sparse(64, 128, pat(nnz, 128), nnz as u64).unwrap();
        let run = run_gemm_with(&a, &b, k2, Execution::Sequential, true).unwrap();
        assert_eq!(run.output, dense_matmul(&unpack(&a), &b).unwrap());
        run.trace.unwrap().cycles_with(Stage::Issue) as u64
    };
    let (sixteen, eight) = (issue(16), issue(8));
    report(
        "AC5",
        "16-nnz rows take 2x the issue cycles of 8-nnz rows with k=2",
        sixteen == 2 * eight && eight == 64,
        format!("16 nnz: {sixteen}, 8 nnz: {eight}"),
    );
}

#[test]
fn ac06_reconfiguration_capability() {
    let small = cfg(4, 64, 16, 4);
    let big = cfg(8, 128, 64, 8);
    let cases = [
        ("4:16 on (4,64,.,4)", reconfigure_density_check(&small, pat(4, 16)), true),
        ("4:32 on (4,64,.,4)", reconfigure_density_check(&small, pat(4, 32)), true),
        ("4:8 on (4,64,.,4)", reconfigure_density_check(&small, pat(4, 8)), false),
        ("4:8 on (4,64,.,8)", reconfigure_density_check(&cfg(4, 64, 16, 8), pat(4, 8)), true),
        ("1:2 on (8,128,64,8)", reconfigure_density_check(&big, pat(1, 2)), true),
        ("8:128 on (8,128,64,8)", reconfigure_density_check(&big, pat(8, 128)), true),
    ];
    let bad: Vec<&str> = cases.iter().filter(|(_, got, want)| got != want).map(|c| c.0).collect();
    report(
        "AC6",
        "density support matches worked reconfiguration cases",
        bad.is_empty(),
        format!("{} cases, wrong: {bad:?}", cases.len()),
    );
}

#[test]
fn ac07_overflow_path() {
    let b = random_dense(128, 64, 7);
    let mut got = Vec::new();
    let mut exact = true;
    for e in [9usize, 20, 65] {
        let row = random_sparse(1, 128, pat(e, 128), e as u64).unwrap();
        let mut eng = DemmEngine::new(cfg(8, 128, 64, 8));
        eng.preload(&b).unwrap();
        let mut acc = DenseMatrix::zeros(1, 64);
        let mut s = eng.begin(&mut acc).unwrap();
        got.push(s.issue_row(0, row.row(0)).unwrap());
        s.drain();
        exact &= acc == dense_matmul(&unpack(&row), &b).unwrap();
    }
    report(
        "AC7",
        "overflow rows take ceil(e/8) issue cycles",
        got == [2, 3, 9] && exact,
        format!("issue cycles {got:?}, oracle exact: {exact}"),
    );
}

#[test]
fn ac08_resnet50_trend() {
    let layers = load_layer_file(&data_dir().join("resnet50.json")).unwrap();
    let jobs: Vec<Job> = layers.into_iter().map(Job::Layer).collect();
    let exp = Experiment {
        engines: vec![cfg(8, 128, 64, 8)],
        baselines: vec!["dense-ws:32x16".parse().unwrap()],
        weights: WeightMode::Pattern(pat(8, 128)),
        seed: 0,
        verify: false,
        trace: false,
        exec: Execution::Parallel,
    };
    let out = exp.run(&jobs).unwrap();
    let total = |engine: &str| -> u64 {
        out.rows.iter().filter(|r| r.engine == engine).map(|r| r.total_cycles).sum()
    };
    let demm = total("demm:8,128,64,8");
    let dense = total("dense-ws:32x16");
    let ratio = dense as f64 / demm as f64;
    report(
        "AC8",
        "ResNet50 at 8:128: DeMM at least 5x fewer cycles than dense 32x16 WS (trend only)",
        ratio >= 5.0,
        format!("{} layers, demm {demm}, dense-ws {dense}, ratio {ratio:.2}", jobs.len()),
    );
}

#[test]
fn ac09_format_suite() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let patterns = [pat(1, 2), pat(1, 4), pat(2, 4), pat(4, 16), pat(8, 128), pat(3, 7)];
    let mut roundtrip_failures = 0;
    let mut prune_failures = 0;
    for i in 0..10_000 {
        let (r, c) = (rng.random_range(1..=16), rng.random_range(1..=64));
        let zero_pct = rng.random_range(0..=100);
        let d = DenseMatrix::from_fn(r, c, |_, _| {
            if rng.random_range(0..100) < zero_pct {
                0
            } else {
                rng.random::<i16>()
            }
        });
        if unpack(&pack(&d)) != d {
            roundtrip_failures += 1;
        }
        let p = patterns[i % patterns.len()];
        let pruned = prune_to_pattern(&d, p);
        let subset = pruned
            .row_entries()
            .iter()
            .enumerate()
            .all(|(row, es)| es.iter().all(|e| d.get(row, e.col) == e.value));
        if !validate_pattern(&pruned, p) || !subset {
            prune_failures += 1;
        }
    }
    let deterministic = patterns.iter().enumerate().all(|(i, &p)| {
        let a: PackedSparseMatrix = random_sparse(12, 200, p, i as u64).unwrap();
        a == random_sparse(12, 200, p, i as u64).unwrap()
            && validate_pattern(&a, p)
            && random_dense(9, 9, i as u64) == random_dense(9, 9, i as u64)
    });
    report(
        "AC9",
        "pack/unpack roundtrip, prune validity, seeded determinism",
        roundtrip_failures == 0 && prune_failures == 0 && deterministic,
        format!("10000 matrices, roundtrip failures {roundtrip_failures}, prune failures {prune_failures}, deterministic {deterministic}"),
    );
}

fn check_csv(path: &Path) -> Result<Vec<csv::StringRecord>, String> {
    let mut rd = csv::Reader::from_path(path).map_err(|e| e.to_string())?;
    let header: Vec<String> = rd.headers().map_err(|e| e.to_string())?.iter().map(String::from).collect();
    if header != RUN_COLUMNS {
        return Err(format!("header {header:?}"));
    }
    let mut rows = Vec::new();
    for rec in rd.records() {
        let rec = rec.map_err(|e| e.to_string())?;
        if &rec[0] != "1" {
            return Err(format!("schema_version {}", &rec[0]));
        }
        for col in ["r", "kdim", "cdim", "preload_cycles", "compute_cycles", "drain_cycles", "total_cycles", "mac_units", "useful_macs"] {
            let i = RUN_COLUMNS.iter().position(|c| *c == col).unwrap();
            rec[i].parse::<u64>().map_err(|_| format!("{col} = `{}`", &rec[i]))?;
        }
        let util: f64 = rec[16].parse().map_err(|_| "mac_utilization".to_string())?;
        if !(0.0..=1.0).contains(&util) {
            return Err(format!("utilization {util}"));
        }
        rows.push(rec);
    }
    Ok(rows)
}

#[test]
fn ac10_cli_integration() {
    let dir = tempfile::tempdir().unwrap();
    let fixture = data_dir().join("fixture_3layer.json");
    let start = Instant::now();
    let runs: [(Vec<String>, usize); 2] = [
        (
            vec![
                "run".into(),
                "--layers".into(),
                fixture.display().to_string(),
                "--pattern".into(),
                "8:128".into(),
                "--engine".into(),
                "demm:8,128,64,8".into(),
                "--baseline".into(),
                "dense-ws:32x16".into(),
            ],
            6,
        ),
        (
            vec!["run".into(), "--gemm".into(), "64x128x64".into(), "--pattern".into(), "1:4".into(), "--verify".into()],
            1,
        ),
    ];
    let mut problems = Vec::new();
    for (i, (args, expected_rows)) in runs.iter().enumerate() {
        let out_dir = dir.path().join(format!("run{i}"));
        let out = Command::new(env!("CARGO_BIN_EXE_demm"))
            .args(args)
            .arg("--out")
            .arg(&out_dir)
            .output()
            .unwrap();
        if !out.status.success() {
            problems.push(format!("run{i} exit {:?}: {}", out.status.code(), String::from_utf8_lossy(&out.stderr)));
            continue;
        }
        match check_csv(&out_dir.join("results.csv")) {
            Ok(rows) => {
                if rows.len() != *expected_rows {
                    problems.push(format!("run{i}: {} rows", rows.len()));
                }
                for r in rows.iter().filter(|r| r[3].starts_with("demm")) {
                    if &r[17] != "true" {
                        problems.push(format!("run{i}: {} verified={}", &r[2], &r[17]));
                    }
                }
                for r in rows.iter().filter(|r| !r[3].starts_with("demm")) {
                    if &r[18] != "true" {
                        problems.push(format!("run{i}: baseline not flagged approximate"));
                    }
                }
            }
            Err(e) => problems.push(format!("run{i}: {e}")),
        }
    }
    let secs = start.elapsed().as_secs_f64();
    report(
        "AC10",
        "CLI runs end-to-end, schema-valid CSV, all verified",
        problems.is_empty() && secs < 60.0,
        format!("{secs:.1}s, problems {problems:?}"),
    );
}
