//! Cell-parallel sweeps over `d_z` and repetitions.

use std::collections::HashSet;
use std::fs::OpenOptions;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::Instant;

use rayon::prelude::*;

use super::config::{ExperimentConfig, ExperimentKind};
use super::results::{append_cell, emit_csv, load_csv, CellResult, CellStatus, Metric, SweepResult};
use crate::arch::robot::{train_aes_pre, train_robot_pipeline, train_robot_predictors, AesPreEncoder, RobotInputs, RobotOption};
use crate::arch::synthetic::{train_cm, train_control, train_je, SyntheticEncoder};
use crate::arm::{generate_dataset, Dataset};
use crate::error::{Error, Result};
use crate::formats::write_error_map;
use crate::nn::{derive_seed, label_hash, LossTrace, RngStream};
use crate::readout::probe_synthetic;
use crate::readout::robot::probe_robot;
use crate::synthetic::{SyntheticSpec, SyntheticWorld};

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Output directory; nothing is written when `None`.
    pub out: Option<PathBuf>,
    /// Worker threads; 0 means one per available core.
    pub jobs: usize,
    /// Skip cells already recorded as successful in `out/results.csv`.
    pub resume: bool,
    /// Log one line per finished cell to stderr.
    pub verbose: bool,
}

/// Child seed of one cell; independent of sweep order and parallelism.
pub fn cell_seed(cfg: &ExperimentConfig, d_z: usize, rep: usize) -> u64 {
    derive_seed(cfg.seed, &[label_hash(&cfg.seed_label()), d_z as u64, rep as u64])
}

/// Seed of a per-repetition artefact (synthetic world, arm dataset, ...).
pub fn rep_seed(cfg: &ExperimentConfig, what: &str, rep: usize) -> u64 {
    derive_seed(cfg.seed, &[label_hash(what), rep as u64])
}

pub fn synthetic_world(cfg: &ExperimentConfig, rep: usize) -> Result<SyntheticWorld> {
    let spec: SyntheticSpec = cfg.synthetic.spec(rep_seed(cfg, "synthetic-world", rep));
    SyntheticWorld::new(spec)
}

pub fn arm_dataset(cfg: &ExperimentConfig, rep: usize) -> Result<Dataset> {
    generate_dataset(&cfg.arm, cfg.robot.samples, rep_seed(cfg, "arm-dataset", rep))
}

/// Everything a robot cell needs that does not depend on `d_z`.
pub struct RobotContext {
    pub dataset: Dataset,
    pub aes: Option<AesPreEncoder>,
    /// What the pipeline reads: observations (JE) or predictions (CM).
    pub inputs: RobotInputs,
    pub stage_metrics: Vec<Metric>,
}

pub fn robot_context(cfg: &ExperimentConfig, rep: usize) -> Result<RobotContext> {
    let dataset = arm_dataset(cfg, rep)?;
    let mut stage_metrics = Vec::new();
    let option = cfg.robot.option;
    let aes = match option {
        RobotOption::Aes => {
            let mut rng = RngStream::new(rep_seed(cfg, "aes-pre-encoder", rep), 0);
            let a = train_aes_pre(&dataset, &cfg.robot.stage_schedule, &mut rng)?;
            stage_metrics.push(Metric::new("aes_loss_tail", a.trace.tail_mean(50)));
            Some(a)
        }
        RobotOption::Default => None,
    };
    let observed = RobotInputs::observed(&dataset, aes.as_ref())?;
    let inputs = match cfg.kind {
        ExperimentKind::RobotCm => {
            let seed = rep_seed(cfg, &format!("{}/predictors", cfg.seed_label()), rep);
            let m = train_robot_predictors(&dataset, &observed, option, &cfg.robot.stage_schedule, &mut RngStream::new(seed, 0))?;
            stage_metrics.push(Metric::new("predictor_loss_tail", m.trace.tail_mean(50)));
            m.predict(&observed)?
        }
        _ => observed,
    };
    Ok(RobotContext {
        dataset,
        aes,
        inputs,
        stage_metrics,
    })
}

fn trace_metrics(trace: &LossTrace) -> [Metric; 2] {
    [
        Metric::new("loss_head", trace.head_mean(10)),
        Metric::new("loss_tail", trace.tail_mean(10)),
    ]
}

pub fn synthetic_cell(cfg: &ExperimentConfig, world: &SyntheticWorld, d_z: usize, rep: usize) -> Result<Vec<Metric>> {
    let mut rng = RngStream::new(cell_seed(cfg, d_z, rep), 0);
    let mut metrics = Vec::new();
    let encoder: Box<dyn SyntheticEncoder> = match cfg.kind {
        ExperimentKind::SyntheticJe => {
            let ae = train_je(world, d_z, &cfg.schedule, &mut rng)?;
            metrics.extend(trace_metrics(&ae.trace));
            Box::new(ae)
        }
        ExperimentKind::SyntheticControl => {
            let ae = train_control(world, d_z, &cfg.schedule, &mut rng)?;
            metrics.extend(trace_metrics(&ae.trace));
            Box::new(ae)
        }
        ExperimentKind::SyntheticCm => {
            let cm = train_cm(world, d_z, &cfg.schedule, &mut rng)?;
            metrics.extend(trace_metrics(&cm.autoencoder.trace));
            metrics.push(Metric::new("predictor_loss_tail", cm.predictors.trace.tail_mean(10)));
            Box::new(cm)
        }
        k => return Err(Error::Config(format!("{k:?} is not a synthetic experiment"))),
    };
    let report = probe_synthetic(encoder.as_ref(), world, &cfg.eval_config(), &mut rng.fork(1000))?;
    if let Some(s) = report.r_m {
        metrics.push(Metric::with_stderr("r_m", s.mse, s.stderr));
    }
    if let Some(s) = report.r_e {
        metrics.push(Metric::with_stderr("r_e", s.mse, s.stderr));
    }
    for (i, s) in report.r_e_per_modality.iter().enumerate() {
        metrics.push(Metric::with_stderr(format!("r_e_{i}"), s.mse, s.stderr));
    }
    Ok(metrics)
}

pub fn robot_cell(
    cfg: &ExperimentConfig,
    ctx: &RobotContext,
    d_z: usize,
    rep: usize,
    maps: Option<&Path>,
) -> Result<Vec<Metric>> {
    let mut rng = RngStream::new(cell_seed(cfg, d_z, rep), 0);
    let d = &ctx.dataset;
    let pipe = train_robot_pipeline(cfg.robot.option, d, &ctx.inputs, d_z, cfg.robot.split_index, &cfg.schedule, &mut rng)?;
    let codes = pipe.encode(&ctx.inputs.vision, &ctx.inputs.proprio)?;
    let e = d.eval_range();
    let (vision, _) = pipe.decode(&codes.slice_rows(e.start, e.len())?)?;
    let recon = match &ctx.aes {
        Some(a) => a.decode(&vision)?,
        None => vision,
    };
    let report = probe_robot(d, &codes, &recon, &cfg.readout_schedule(), &mut rng.fork(1000))?;
    let mut metrics: Vec<Metric> = trace_metrics(&pipe.trace).to_vec();
    metrics.extend(ctx.stage_metrics.iter().cloned());
    for s in &report.streams {
        metrics.push(Metric::with_stderr(s.stream.label(), s.score.mse, s.score.stderr));
    }
    metrics.push(Metric::new("vision_left", report.vision.left));
    metrics.push(Metric::new("vision_right", report.vision.right));
    metrics.push(Metric::new("chance_left", report.chance.left));
    metrics.push(Metric::new("chance_right", report.chance.right));
    if let Some(dir) = maps {
        let stem = dir.join(format!("{}_dz{d_z}_rep{rep}", cfg.label()));
        write_error_map(&stem, &report.error_map, d.config.height, d.config.width)?;
    }
    Ok(metrics)
}

fn run_guarded(f: impl FnOnce() -> Result<Vec<Metric>>) -> CellStatusAndMetrics {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(m)) => (CellStatus::Ok, m),
        Ok(Err(e)) => (CellStatus::Failed(e.to_string()), Vec::new()),
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            (CellStatus::Failed(format!("panic: {msg}")), Vec::new())
        }
    }
}

type CellStatusAndMetrics = (CellStatus, Vec<Metric>);

/// Runs every `(d_z, rep)` cell not already completed.
///
/// Repetitions run one after another (they own the large per-repetition
/// state); cells within a repetition run on `jobs` workers. Finished cells are
/// appended to `out/results.csv` as they complete; at the end the file is
/// rewritten in sorted order together with `aggregates.csv`. A failing cell is
/// recorded and the sweep continues.
pub fn run_sweep(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<SweepResult> {
    cfg.validate()?;
    let label = cfg.label();
    let mut kept = Vec::new();
    if let Some(out) = &opts.out {
        std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
        std::fs::write(out.join(format!("{label}.config.toml")), cfg.to_toml()?)
            .map_err(|e| Error::io(out, e))?;
        if out.join("results.csv").exists() {
            let prev = load_csv(out)?;
            kept = prev
                .cells
                .into_iter()
                .filter(|c| c.experiment != label || (opts.resume && c.is_ok()))
                .collect();
        }
        // Rewrite so that only kept rows remain before appending new ones.
        emit_csv(&SweepResult::from_cells(kept.clone()), out)?;
    }
    let done: HashSet<(usize, usize)> = kept
        .iter()
        .filter(|c| c.experiment == label)
        .map(|c| (c.d_z, c.rep))
        .collect();
    let maps = match (&opts.out, cfg.kind.is_robot() && cfg.robot.error_maps) {
        (Some(out), true) => {
            let m = out.join("maps");
            std::fs::create_dir_all(&m).map_err(|e| Error::io(&m, e))?;
            Some(m)
        }
        _ => None,
    };

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.jobs)
        .build()
        .map_err(|e| Error::Usage(format!("cannot start worker pool: {e}")))?;
    let writer = match &opts.out {
        Some(out) => {
            let p = out.join("results.csv");
            let f = OpenOptions::new().append(true).open(&p).map_err(|e| Error::io(&p, e))?;
            Some(Mutex::new(csv::Writer::from_writer(f)))
        }
        None => None,
    };
    let record = |c: &CellResult| -> Result<()> {
        if opts.verbose {
            let status = match &c.status {
                CellStatus::Ok => "ok".to_string(),
                CellStatus::Failed(m) => format!("FAILED {m}"),
            };
            eprintln!("{} d_z={} rep={}: {status}", c.experiment, c.d_z, c.rep);
        }
        if let Some(w) = &writer {
            let mut w = w.lock().expect("results writer");
            append_cell(&mut w, c)?;
            w.flush().map_err(|e| Error::io("results.csv", e))?;
        }
        Ok(())
    };

    let sweep = cfg.sweep();
    let mut new_cells = Vec::new();
    for rep in 0..cfg.repetitions {
        let todo: Vec<usize> = sweep.iter().copied().filter(|&d| !done.contains(&(d, rep))).collect();
        if todo.is_empty() {
            continue;
        }
        let started = Instant::now();
        let cells: Vec<CellResult> = if cfg.kind.is_robot() {
            match robot_context(cfg, rep) {
                Ok(ctx) => pool.install(|| {
                    todo.par_iter()
                        .map(|&d_z| {
                            let (status, metrics) = run_guarded(|| robot_cell(cfg, &ctx, d_z, rep, maps.as_deref()));
                            finish(&label, d_z, rep, status, metrics, &record)
                        })
                        .collect()
                }),
                Err(e) => failed_all(&label, &todo, rep, &e, &record),
            }
        } else {
            match synthetic_world(cfg, rep) {
                Ok(world) => pool.install(|| {
                    todo.par_iter()
                        .map(|&d_z| {
                            let (status, metrics) = run_guarded(|| synthetic_cell(cfg, &world, d_z, rep));
                            finish(&label, d_z, rep, status, metrics, &record)
                        })
                        .collect()
                }),
                Err(e) => failed_all(&label, &todo, rep, &e, &record),
            }
        };
        if opts.verbose {
            eprintln!("{label} rep {rep}: {} cells in {:.1}s", cells.len(), started.elapsed().as_secs_f64());
        }
        new_cells.extend(cells);
    }

    let mut all: Vec<CellResult> = kept;
    all.extend(new_cells);
    let full = SweepResult::from_cells(all);
    if let Some(out) = &opts.out {
        emit_csv(&full, out)?;
    }
    Ok(full.select(&label))
}

fn finish(
    label: &str,
    d_z: usize,
    rep: usize,
    status: CellStatus,
    metrics: Vec<Metric>,
    record: &(dyn Fn(&CellResult) -> Result<()> + Sync),
) -> CellResult {
    let cell = CellResult {
        experiment: label.to_string(),
        d_z,
        rep,
        status,
        metrics,
    };
    if let Err(e) = record(&cell) {
        eprintln!("could not record {label} d_z={d_z} rep={rep}: {e}");
    }
    cell
}

fn failed_all(
    label: &str,
    todo: &[usize],
    rep: usize,
    e: &Error,
    record: &(dyn Fn(&CellResult) -> Result<()> + Sync),
) -> Vec<CellResult> {
    todo.iter()
        .map(|&d_z| finish(label, d_z, rep, CellStatus::Failed(format!("setup: {e}")), Vec::new(), record))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Schedule;

    fn tiny_cfg() -> ExperimentConfig {
        ExperimentConfig {
            d_z: Some(vec![1, 3]),
            repetitions: 2,
            schedule: Schedule::new(3, 8, 1e-3),
            readout: Some(Schedule::new(3, 8, 1e-3)),
            eval: super::super::config::EvalParams {
                batches: 50,
                batch_size: 4,
            },
            synthetic: super::super::config::SyntheticParams {
                d_m: 1,
                d_e: 1,
                n: 2,
                k: 2,
            },
            ..ExperimentConfig::default()
        }
    }

    #[test]
    fn seeds_depend_on_cell_only() {
        let c = tiny_cfg();
        assert_ne!(cell_seed(&c, 1, 0), cell_seed(&c, 1, 1));
        assert_ne!(cell_seed(&c, 1, 0), cell_seed(&c, 3, 0));
        let named = ExperimentConfig {
            name: Some("other".into()),
            ..c.clone()
        };
        assert_eq!(cell_seed(&c, 1, 0), cell_seed(&named, 1, 0));
    }

    #[test]
    fn counts_cells_and_aggregates() {
        let r = run_sweep(&tiny_cfg(), &RunOptions { jobs: 1, ..RunOptions::default() }).unwrap();
        assert_eq!(r.cells.len(), 4);
        assert_eq!(r.failed(), 0);
        let dz: HashSet<usize> = r.aggregates.iter().map(|a| a.d_z).collect();
        assert_eq!(dz.len(), 2);
    }

    #[test]
    fn parallelism_does_not_change_results() {
        let a = run_sweep(&tiny_cfg(), &RunOptions { jobs: 1, ..RunOptions::default() }).unwrap();
        let b = run_sweep(&tiny_cfg(), &RunOptions { jobs: 3, ..RunOptions::default() }).unwrap();
        assert_eq!(a.aggregates, b.aggregates);
    }
}
