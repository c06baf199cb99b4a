//! A small resumable sweep: CSV results, aggregates, SVG plots and a report.
//!
//! cargo run --release --example sweep_harness -- [out_dir]

use std::collections::HashMap;
use std::path::PathBuf;

use mmlab::runner::{emit_plots, render_report, run_sweep, ExperimentConfig, RunOptions};

fn main() -> mmlab::Result<()> {
    let out = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "sweep_out".into()));
    let cfg = ExperimentConfig::from_toml(
        r#"
        name = "je_small"
        kind = "synthetic_je"
        repetitions = 2
        d_z = [2, 8, 16]
        [schedule]
        batches = 300
        [eval]
        batches = 50
        "#,
    )?;
    let opts = RunOptions {
        out: Some(out.clone()),
        jobs: 0,
        resume: true,
        verbose: true,
    };
    let result = run_sweep(&cfg, &opts)?;
    let d_min = HashMap::from([(cfg.label(), cfg.synthetic.spec(0).d_min())]);
    for p in emit_plots(&result, &out.join("plots"), &d_min)? {
        println!("wrote {}", p.display());
    }
    print!("{}", render_report(&result));
    // A second call finds every cell in results.csv and trains nothing.
    let again = run_sweep(&cfg, &opts)?;
    assert_eq!(again.aggregates, result.aggregates);
    Ok(())
}
