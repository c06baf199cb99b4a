use std::collections::HashMap;
use std::path::PathBuf;
use std::process::Command;

use mmlab::runner::plot::parse_points;
use mmlab::runner::results::{read_aggregates, read_results, RESULTS_HEADER};
use mmlab::runner::{emit_plots, load_csv, run_sweep, ExperimentConfig, RunOptions};

const SMALL: &str = r#"
name = "tiny_je"
kind = "synthetic_je"
seed = 5
repetitions = 2
d_z = [2, 5]
[schedule]
batches = 40
batch_size = 32
[eval]
batches = 50
batch_size = 16
"#;

fn scratch(name: &str) -> PathBuf {
    let p = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join(name);
    let _ = std::fs::remove_dir_all(&p);
    std::fs::create_dir_all(&p).unwrap();
    p
}

fn opts(out: &PathBuf, resume: bool) -> RunOptions {
    RunOptions {
        out: Some(out.clone()),
        jobs: 1,
        resume,
        verbose: false,
    }
}

#[test]
fn resume_recomputes_only_missing_cells_with_identical_values() {
    let out = scratch("resume");
    let cfg = ExperimentConfig::from_toml(SMALL).unwrap();
    let first = run_sweep(&cfg, &opts(&out, false)).unwrap();
    assert_eq!(first.cells.len(), 4);

    // Drop every row of one cell, as if the run had been interrupted.
    let path = out.join("results.csv");
    let text = std::fs::read_to_string(&path).unwrap();
    let kept: Vec<&str> = text.lines().filter(|l| !l.starts_with("tiny_je,5,1,")).collect();
    assert!(kept.len() < text.lines().count());
    std::fs::write(&path, kept.join("\n") + "\n").unwrap();

    let second = run_sweep(&cfg, &opts(&out, true)).unwrap();
    assert_eq!(second.cells.len(), 4);
    for (a, b) in first.cells.iter().zip(&second.cells) {
        assert_eq!((a.d_z, a.rep), (b.d_z, b.rep));
        for (x, y) in a.metrics.iter().zip(&b.metrics) {
            assert_eq!(x.name, y.name);
            assert_eq!(x.value.to_bits(), y.value.to_bits(), "{} at d_z={} rep={}", x.name, a.d_z, a.rep);
        }
    }
    assert_eq!(first.aggregates, second.aggregates);
}

#[test]
fn aggregates_and_plots_agree_with_results_csv() {
    let out = scratch("agree");
    let cfg = ExperimentConfig::from_toml(SMALL).unwrap();
    let result = run_sweep(&cfg, &opts(&out, false)).unwrap();

    let header = std::fs::read_to_string(out.join("results.csv")).unwrap();
    assert_eq!(header.lines().next().unwrap(), RESULTS_HEADER.join(","));

    // Independent recomputation from the raw rows.
    let cells = read_results(std::fs::File::open(out.join("results.csv")).unwrap()).unwrap();
    let aggs = read_aggregates(std::fs::File::open(out.join("aggregates.csv")).unwrap()).unwrap();
    for a in &aggs {
        let vals: Vec<f64> = cells
            .iter()
            .filter(|c| c.d_z == a.d_z && c.is_ok())
            .filter_map(|c| c.metric(&a.metric))
            .collect();
        let n = vals.len() as f64;
        let mean = vals.iter().sum::<f64>() / n;
        let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        assert_eq!(a.count, vals.len());
        assert!((a.mean - mean).abs() < 1e-12, "{}: {} vs {mean}", a.metric, a.mean);
        assert!((a.std - var.sqrt()).abs() < 1e-12);
    }
    assert_eq!(load_csv(&out).unwrap().aggregates, result.aggregates);

    let d_min = HashMap::from([(cfg.label(), 12usize)]);
    let files = emit_plots(&result, &out.join("plots"), &d_min).unwrap();
    let svg = std::fs::read_to_string(&files[0]).unwrap();
    let points = parse_points(&svg);
    assert!(!points.is_empty());
    for (series, d_z, mean, std) in points {
        if d_z == 0.0 {
            assert_eq!(mean, 1.0, "d_z = 0 is drawn at chance");
            continue;
        }
        // Series labels start with the metric name, e.g. "r_m (shared)".
        let metric = series.split(' ').next().unwrap();
        let want = result.aggregates.iter().find(|a| a.metric == metric && a.d_z as f64 == d_z).unwrap();
        assert!((want.mean - mean).abs() <= 1e-6 * want.mean.abs().max(1.0), "{series} {d_z}");
        assert!((want.std - std).abs() <= 1e-6 * want.std.abs().max(1.0));
    }
}

#[test]
fn cli_exit_status_reflects_failed_cells() {
    let bin = env!("CARGO_BIN_EXE_mmlab");
    let dir = scratch("cli");
    let good = dir.join("good.toml");
    std::fs::write(&good, SMALL.replace("repetitions = 2", "repetitions = 1")).unwrap();
    let run = |cfg: &PathBuf, out: &str| {
        Command::new(bin)
            .args(["run", "--config", cfg.to_str().unwrap(), "--out", dir.join(out).to_str().unwrap(), "--jobs", "1", "--seed", "9"])
            .output()
            .unwrap()
    };
    let ok = run(&good, "good");
    assert!(ok.status.success(), "{}", String::from_utf8_lossy(&ok.stderr));
    assert!(dir.join("good/aggregates.csv").exists());
    assert!(dir.join("good/report.md").exists());
    assert!(dir.join("good/plots/tiny_je.svg").exists());
    let written = ExperimentConfig::load(&dir.join("good/tiny_je.config.toml")).unwrap();
    assert_eq!(written.seed, 9);

    // A learning rate this large overflows on the first update.
    let bad = dir.join("bad.toml");
    std::fs::write(&bad, SMALL.replace("batch_size = 32", "batch_size = 32\nlr = 1e30")).unwrap();
    let failed = run(&bad, "bad");
    assert_eq!(failed.status.code(), Some(1));
    let rows = std::fs::read_to_string(dir.join("bad/results.csv")).unwrap();
    assert!(rows.contains("failed"));

    let report = Command::new(bin).args(["report", "--out", dir.join("good").to_str().unwrap()]).output().unwrap();
    assert!(report.status.success());
    assert!(String::from_utf8_lossy(&report.stdout).contains("tiny_je"));

    let missing = Command::new(bin).args(["run", "--config", "/nonexistent.toml"]).output().unwrap();
    assert_eq!(missing.status.code(), Some(2));
}

#[test]
fn gen_data_writes_loadable_containers() {
    let bin = env!("CARGO_BIN_EXE_mmlab");
    let dir = scratch("gen");
    let cfg = dir.join("arm.toml");
    std::fs::write(&cfg, "kind = \"robot_je\"\n[robot]\nsamples = 200\n").unwrap();
    let out = Command::new(bin)
        .args(["gen-data", "--config", cfg.to_str().unwrap(), "--out", dir.to_str().unwrap(), "--frames", "3"])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let c = mmlab::formats::Container::load(&dir.join("arm_dataset.bin")).unwrap();
    let d = mmlab::arm::Dataset::from_container(&c).unwrap();
    assert_eq!(d.len(), 200);
    assert!(dir.join("frames/frame_0002.pgm").exists());

    let syn = Command::new(bin)
        .args(["gen-data", "--out", dir.to_str().unwrap(), "--batches", "2"])
        .output()
        .unwrap();
    assert!(syn.status.success());
    let c = mmlab::formats::Container::load(&dir.join("synthetic.bin")).unwrap();
    assert_eq!(c.kind, "synthetic");
}

#[test]
fn shipped_configs_parse() {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut n = 0;
    for e in std::fs::read_dir(&dir).unwrap() {
        let p = e.unwrap().path();
        if p.extension().is_some_and(|x| x == "toml") {
            ExperimentConfig::load(&p).unwrap_or_else(|e| panic!("{}: {e}", p.display()));
            n += 1;
        }
    }
    assert!(n >= 8);
}

#[test]
fn probe_reports_every_contract_clause() {
    let bin = env!("CARGO_BIN_EXE_mmlab");
    let dir = scratch("probe");
    let cfg = dir.join("arm.toml");
    std::fs::write(&cfg, "kind = \"robot_je\"\n[robot]\nsamples = 500\n[readout]\nbatches = 20\nbatch_size = 16\n").unwrap();
    let out = Command::new(bin).args(["probe", "--config", cfg.to_str().unwrap()]).output().unwrap();
    // A 20-batch probe need not meet the contract; the verdict must still be a clean 0 or 1.
    assert!(matches!(out.status.code(), Some(0 | 1)), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8_lossy(&out.stdout);
    let verdicts = text.lines().filter(|l| l.starts_with("PASS") || l.starts_with("FAIL")).count();
    assert_eq!(verdicts, 3, "{text}");
    assert_eq!(out.status.code() == Some(0), !text.contains("FAIL"));
}
