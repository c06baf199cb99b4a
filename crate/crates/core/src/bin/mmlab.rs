use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use mmlab::arm::{render, ArmState, WorldState};
use mmlab::formats::{dump_synthetic, write_pgm, Container};
use mmlab::nn::RngStream;
use mmlab::readout::robot::probe_raw_modalities;
use mmlab::runner::sweep::{arm_dataset, synthetic_world};
use mmlab::runner::{emit_plots, load_csv, render_report, run_sweep, ExperimentConfig, RunOptions};
use mmlab::{Error, Result};

/// Multimodal compression experiments: data generation, sweeps, plots.
#[derive(Parser)]
#[command(name = "mmlab", version)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct Common {
    /// Experiment config (TOML); built-in defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override the master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Cmd {
    /// Dump synthetic batches or an arm dataset (plus a few frames as PGM).
    GenData {
        #[command(flatten)]
        common: Common,
        /// Synthetic batches to dump.
        #[arg(long, default_value_t = 10)]
        batches: usize,
        /// Arm frames exported as graymaps.
        #[arg(long, default_value_t = 8)]
        frames: usize,
    },
    /// Run the configured sweep and write CSV, plots and a report.
    Run {
        #[command(flatten)]
        common: Common,
        /// Worker threads (0 = all cores).
        #[arg(long, default_value_t = 0)]
        jobs: usize,
        /// Keep completed cells from a previous run.
        #[arg(long)]
        resume: bool,
    },
    /// Redraw plots from `results.csv`.
    Plot {
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Probe the raw arm modalities for the information contract.
    Probe {
        #[command(flatten)]
        common: Common,
    },
    /// Print the summary tables of `results.csv`.
    Report {
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
}

fn load_config(c: &Common) -> Result<ExperimentConfig> {
    let mut cfg = match &c.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = c.seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn mkdir(p: &Path) -> Result<()> {
    std::fs::create_dir_all(p).map_err(|e| Error::Io {
        path: p.to_path_buf(),
        source: e,
    })
}

fn gen_data(common: &Common, batches: usize, frames: usize) -> Result<()> {
    let cfg = load_config(common)?;
    mkdir(&common.out)?;
    if cfg.kind.is_robot() {
        let d = arm_dataset(&cfg, 0)?;
        let path = common.out.join("arm_dataset.bin");
        d.to_container()?.save(&path)?;
        println!("wrote {} ({} samples)", path.display(), d.len());
        let dir = common.out.join("frames");
        mkdir(&dir)?;
        for i in 0..frames.min(d.len()) {
            let v: Vec<f64> = d.images.row(i).iter().map(|&x| (x as f64 + 1.0) / 2.0).collect();
            write_pgm(&dir.join(format!("frame_{i:04}.pgm")), &v, d.config.height, d.config.width)?;
        }
        let rest = WorldState {
            left: ArmState::at_rest(vec![0.0; d.config.joints]),
            right: ArmState::at_rest(vec![0.0; d.config.joints]),
        };
        let v: Vec<f64> = render(&rest, &d.config).iter().map(|&x| (x as f64 + 1.0) / 2.0).collect();
        write_pgm(&dir.join("rest_pose.pgm"), &v, d.config.height, d.config.width)?;
    } else {
        let world = synthetic_world(&cfg, 0)?;
        let mut rng = RngStream::new(cfg.seed, 7);
        let c: Container = dump_synthetic(&world, batches, cfg.schedule.batch_size, &mut rng)?;
        let path = common.out.join("synthetic.bin");
        c.save(&path)?;
        println!("wrote {} ({batches} batches)", path.display());
    }
    Ok(())
}

fn d_min_map(out: &Path) -> HashMap<String, usize> {
    let mut map = HashMap::new();
    let Ok(entries) = std::fs::read_dir(out) else {
        return map;
    };
    for e in entries.flatten() {
        let p = e.path();
        if p.to_string_lossy().ends_with(".config.toml") {
            if let Ok(cfg) = ExperimentConfig::load(&p) {
                if !cfg.kind.is_robot() {
                    map.insert(cfg.label(), cfg.synthetic.spec(0).d_min());
                }
            }
        }
    }
    map
}

fn plot(out: &Path) -> Result<()> {
    let result = load_csv(out)?;
    for p in emit_plots(&result, &out.join("plots"), &d_min_map(out))? {
        println!("wrote {}", p.display());
    }
    Ok(())
}

fn report(out: &Path) -> Result<()> {
    let text = render_report(&load_csv(out)?);
    let path = out.join("report.md");
    std::fs::write(&path, &text).map_err(|e| Error::Io { path, source: e })?;
    print!("{text}");
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.cmd {
        Cmd::GenData { common, batches, frames } => gen_data(common, *batches, *frames).map(|_| true),
        Cmd::Run { common, jobs, resume } => (|| {
            let cfg = load_config(common)?;
            let opts = RunOptions {
                out: Some(common.out.clone()),
                jobs: *jobs,
                resume: *resume,
                verbose: true,
            };
            let result = run_sweep(&cfg, &opts)?;
            plot(&common.out)?;
            report(&common.out)?;
            if result.failed() > 0 {
                eprintln!("{} of {} cells failed", result.failed(), result.cells.len());
            }
            Ok(result.failed() == 0)
        })(),
        Cmd::Plot { out } => plot(out).map(|_| true),
        Cmd::Probe { common } => (|| {
            let mut cfg = load_config(common)?;
            cfg.kind = mmlab::runner::ExperimentKind::RobotJe;
            let d = arm_dataset(&cfg, 0)?;
            let r = probe_raw_modalities(&d, &cfg.readout_schedule(), &mut RngStream::new(cfg.seed, 0))?;
            let checks = r.check();
            for c in &checks {
                println!("{} {}: {}", if c.pass { "PASS" } else { "FAIL" }, c.clause, c.detail);
            }
            Ok(checks.iter().all(|c| c.pass))
        })(),
        Cmd::Report { out } => report(out).map(|_| true),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
