//! Readout probes on frozen latent codes.
//!
//! A readout is a three-layer MLP trained to reconstruct a ground-truth stream
//! from a code. Its per-component error on fresh data measures how much of
//! that stream the code retains; 1.0 is chance for unit-variance targets.

pub mod robot;

use serde::{Deserialize, Serialize};

use crate::arch::synthetic::SyntheticEncoder;
use crate::error::{Error, Result};
use crate::nn::{fit, Graph, LossTrace, Network, ParamStore, RngStream, Schedule, Tensor};
use crate::synthetic::SyntheticWorld;

/// Minimum number of fresh evaluation batches.
pub const MIN_EVAL_BATCHES: usize = 50;

#[derive(Debug, Clone)]
pub struct ReadoutNet {
    pub store: ParamStore,
    pub net: Network,
    pub trace: LossTrace,
}

impl ReadoutNet {
    pub fn predict(&self, codes: &Tensor) -> Result<Tensor> {
        self.net.infer(&self.store, codes)
    }

    pub fn d_in(&self) -> usize {
        self.net.in_dim()
    }

    pub fn d_out(&self) -> usize {
        self.net.out_dim()
    }
}

/// Trains one readout per entry of `outs`, all on the same code batches.
///
/// `batch` yields the codes and one target tensor per readout. Readouts share
/// no parameters, so joint optimization equals separate training.
pub fn train_readouts<F>(
    d_in: usize,
    outs: &[usize],
    schedule: &Schedule,
    rng: &mut RngStream,
    mut batch: F,
) -> Result<Vec<ReadoutNet>>
where
    F: FnMut(usize) -> Result<(Tensor, Vec<Tensor>)>,
{
    let mut store = ParamStore::new();
    let nets: Vec<Network> = outs
        .iter()
        .enumerate()
        .map(|(i, &d)| Network::mlp3(&mut store, &format!("readout{i}"), d_in, d, rng))
        .collect();
    let mut per_head: Vec<Vec<f64>> = vec![Vec::with_capacity(schedule.batches); nets.len()];
    let trace = fit("readout", &mut store, schedule, None, |store, b| {
        let (codes, targets) = batch(b)?;
        if targets.len() != nets.len() {
            return Err(Error::shape("readout targets", &[nets.len()], &[targets.len()]));
        }
        let rows = codes.rows() as f64;
        let mut g = Graph::new(store);
        let z = g.input(codes);
        let mut total = None;
        for ((net, target), hist) in nets.iter().zip(targets).zip(per_head.iter_mut()) {
            let t = g.input(target);
            let p = net.forward(&mut g, z)?;
            let l = g.mse(p, t, net.out_dim() as f64)?;
            hist.push(g.scalar(l) / rows);
            total = Some(match total {
                None => l,
                Some(acc) => g.add(acc, l)?,
            });
        }
        let total = total.ok_or_else(|| Error::Usage("no readout heads".into()))?;
        Ok((g.scalar(total) / rows, g.backward(total)?))
    })?;
    drop(trace);
    Ok(nets
        .into_iter()
        .zip(per_head)
        .map(|(net, hist)| ReadoutNet {
            store: store.clone(),
            net,
            trace: LossTrace(hist),
        })
        .collect())
}

/// A single readout on `(codes, target)` batches.
pub fn train_readout<F>(
    d_in: usize,
    d_out: usize,
    schedule: &Schedule,
    rng: &mut RngStream,
    mut batch: F,
) -> Result<ReadoutNet>
where
    F: FnMut(usize) -> Result<(Tensor, Tensor)>,
{
    let mut nets = train_readouts(d_in, &[d_out], schedule, rng, |b| {
        let (c, t) = batch(b)?;
        Ok((c, vec![t]))
    })?;
    Ok(nets.remove(0))
}

/// Mean per-component squared error with its Monte Carlo standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Score {
    pub mse: f64,
    pub stderr: f64,
    pub samples: usize,
}

impl Score {
    /// The analytic chance value for unit-variance targets.
    pub fn chance() -> Self {
        Score {
            mse: 1.0,
            stderr: 0.0,
            samples: 0,
        }
    }
}

/// Streaming accumulator over per-sample errors.
#[derive(Debug, Clone, Copy, Default)]
pub struct ErrorAccumulator {
    sum: f64,
    sum_sq: f64,
    count: usize,
}

impl ErrorAccumulator {
    pub fn push(&mut self, e: f64) {
        self.sum += e;
        self.sum_sq += e * e;
        self.count += 1;
    }

    /// Adds the per-sample mean squared error of every row.
    pub fn push_rows(&mut self, pred: &Tensor, target: &Tensor) -> Result<()> {
        for e in row_errors(pred, target)? {
            self.push(e);
        }
        Ok(())
    }

    pub fn score(&self) -> Score {
        let n = self.count.max(1) as f64;
        let mean = self.sum / n;
        let var = (self.sum_sq / n - mean * mean).max(0.0);
        Score {
            mse: mean,
            stderr: (var / n).sqrt(),
            samples: self.count,
        }
    }
}

/// Per-row mean squared error.
pub fn row_errors(pred: &Tensor, target: &Tensor) -> Result<Vec<f64>> {
    if pred.shape() != target.shape() {
        return Err(Error::shape("row_errors", target.shape(), pred.shape()));
    }
    let d = pred.cols().max(1) as f64;
    Ok((0..pred.rows())
        .map(|r| {
            pred.row(r)
                .iter()
                .zip(target.row(r))
                .map(|(&p, &t)| (p as f64 - t as f64).powi(2))
                .sum::<f64>()
                / d
        })
        .collect())
}

pub fn evaluate_readout(readout: &ReadoutNet, codes: &Tensor, targets: &Tensor) -> Result<Score> {
    let mut acc = ErrorAccumulator::default();
    acc.push_rows(&readout.predict(codes)?, targets)?;
    Ok(acc.score())
}

/// Readout errors for the shared and exclusive sources at one code size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticReadoutReport {
    pub d_z: usize,
    /// `None` when there is no shared source.
    pub r_m: Option<Score>,
    /// Uniform average over modalities; `None` when there is no exclusive source.
    pub r_e: Option<Score>,
    pub r_e_per_modality: Vec<Score>,
}

impl SyntheticReadoutReport {
    /// The `d_z = 0` point: nothing passes, so both errors are exactly chance.
    pub fn zero_latent(n: usize) -> Self {
        SyntheticReadoutReport {
            d_z: 0,
            r_m: Some(Score::chance()),
            r_e: Some(Score::chance()),
            r_e_per_modality: vec![Score::chance(); n],
        }
    }
}

/// Readout settings for the synthetic experiments.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub schedule: Schedule,
    pub eval_batches: usize,
    pub eval_batch_size: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            schedule: Schedule::default(),
            eval_batches: 100,
            eval_batch_size: 128,
        }
    }
}

/// Trains `R_m` and one `R_{e,i}` per modality on the frozen encoder, then
/// scores them on fresh batches.
pub fn probe_synthetic(
    encoder: &dyn SyntheticEncoder,
    world: &SyntheticWorld,
    cfg: &EvalConfig,
    rng: &mut RngStream,
) -> Result<SyntheticReadoutReport> {
    if cfg.eval_batches < MIN_EVAL_BATCHES {
        return Err(Error::Usage(format!(
            "at least {MIN_EVAL_BATCHES} evaluation batches are required, got {}",
            cfg.eval_batches
        )));
    }
    let spec = world.spec;
    let d_z = encoder.d_z();
    let mut outs = Vec::new();
    if spec.d_m > 0 {
        outs.push(spec.d_m);
    }
    if spec.d_e > 0 {
        outs.extend(std::iter::repeat(spec.d_e).take(spec.n));
    }
    let mut init = rng.fork(rng.stream_id() + 1);
    let mut data = rng.fork(rng.stream_id() + 2);
    let heads = train_readouts(d_z, &outs, &cfg.schedule, &mut init, |_| {
        let (s, m) = world.sample(cfg.schedule.batch_size, &mut data)?;
        let z = encoder.encode_batch(&s, &m)?;
        let mut targets = Vec::new();
        if spec.d_m > 0 {
            targets.push(s.x_m.clone());
        }
        if spec.d_e > 0 {
            targets.extend(s.x_e.iter().cloned());
        }
        Ok((z, targets))
    })?;

    let mut eval = rng.fork(rng.stream_id() + 3);
    let mut acc_m = ErrorAccumulator::default();
    let mut acc_e = ErrorAccumulator::default();
    let mut acc_ei = vec![ErrorAccumulator::default(); if spec.d_e > 0 { spec.n } else { 0 }];
    for _ in 0..cfg.eval_batches {
        let (s, m) = world.sample(cfg.eval_batch_size, &mut eval)?;
        let z = encoder.encode_batch(&s, &m)?;
        let mut heads = heads.iter();
        if spec.d_m > 0 {
            let h = heads.next().expect("shared head");
            acc_m.push_rows(&h.predict(&z)?, &s.x_m)?;
        }
        if spec.d_e > 0 {
            let mut per_sample = vec![0.0; s.batch()];
            for (i, h) in heads.enumerate() {
                let errs = row_errors(&h.predict(&z)?, &s.x_e[i])?;
                for (acc, e) in per_sample.iter_mut().zip(&errs) {
                    *acc += e / spec.n as f64;
                }
                errs.iter().for_each(|&e| acc_ei[i].push(e));
            }
            per_sample.iter().for_each(|&e| acc_e.push(e));
        }
    }
    Ok(SyntheticReadoutReport {
        d_z,
        r_m: (spec.d_m > 0).then(|| acc_m.score()),
        r_e: (spec.d_e > 0).then(|| acc_e.score()),
        r_e_per_modality: acc_ei.iter().map(ErrorAccumulator::score).collect(),
    })
}
