//! Synthetic multimodal data with controlled shared and exclusive content.
//!
//! Every modality `i` sees `x_i = x_{e,i} ⊕ x_m` through its own frozen random
//! MLP, normalized per output component to zero mean and unit variance.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{Network, ParamStore, RngStream, Tensor};

/// Calibration sample used to estimate the per-component normalization.
pub const CALIBRATION_SAMPLES: usize = 100_000;
const MIN_STD: f64 = 1e-6;
const MAX_RESAMPLES: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    /// Shared-source dimension.
    pub d_m: usize,
    /// Exclusive-source dimension, per modality.
    pub d_e: usize,
    /// Number of modalities.
    pub n: usize,
    /// Expansion factor from sources to observations.
    pub k: usize,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            d_m: 4,
            d_e: 4,
            n: 2,
            k: 10,
            seed: 0,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.d_m + self.d_e == 0 {
            return Err(Error::Config("d_m + d_e must be at least 1".into()));
        }
        if self.n < 2 {
            return Err(Error::Config(format!("need at least 2 modalities, got {}", self.n)));
        }
        if self.k < 1 {
            return Err(Error::Config("expansion factor k must be at least 1".into()));
        }
        Ok(())
    }

    pub fn d_x(&self) -> usize {
        self.d_m + self.d_e
    }

    pub fn d_y(&self) -> usize {
        self.k * self.d_x()
    }

    /// Smallest code size that can carry every source: `d_m + n d_e`.
    pub fn d_min(&self) -> usize {
        self.d_m + self.n * self.d_e
    }
}

/// Hidden causes of one batch.
#[derive(Debug, Clone)]
pub struct SourceBatch {
    /// `[batch, d_m]`, shared by all modalities.
    pub x_m: Tensor,
    /// Per modality `[batch, d_e]`.
    pub x_e: Vec<Tensor>,
}

impl SourceBatch {
    pub fn batch(&self) -> usize {
        self.x_m.rows()
    }

    /// `x_i = x_{e,i} ⊕ x_m`, `[batch, d_x]`.
    pub fn x_i(&self, i: usize) -> Tensor {
        Tensor::concat_cols(&[&self.x_e[i], &self.x_m]).expect("sources share the batch extent")
    }

    /// `x_0 ⊕ ... ⊕ x_{n-1}`, `[batch, n d_x]`.
    pub fn x_concat(&self) -> Tensor {
        let parts: Vec<Tensor> = (0..self.x_e.len()).map(|i| self.x_i(i)).collect();
        let views: Vec<&Tensor> = parts.iter().collect();
        Tensor::concat_cols(&views).expect("sources share the batch extent")
    }
}

pub fn sample_sources(spec: &SyntheticSpec, batch: usize, rng: &mut RngStream) -> SourceBatch {
    let mut gauss = |cols: usize| Tensor::from_fn(&[batch, cols], |_| rng.normal() as f32);
    let x_m = gauss(spec.d_m);
    let x_e = (0..spec.n).map(|_| gauss(spec.d_e)).collect();
    SourceBatch { x_m, x_e }
}

/// Frozen random MLP `d_x -> 200 -> 200 -> d_y` with output normalization.
#[derive(Debug, Clone)]
pub struct ConstructionNet {
    store: ParamStore,
    net: Network,
    mean: Vec<f32>,
    std: Vec<f32>,
}

impl ConstructionNet {
    /// Draws weights and calibrates; fails if any output is near-constant.
    pub fn build(spec: &SyntheticSpec, rng: &mut RngStream, calibration: usize) -> Result<Self> {
        let mut store = ParamStore::new();
        let net = Network::mlp3(&mut store, "construction", spec.d_x(), spec.d_y(), rng);
        let x = Tensor::from_fn(&[calibration, spec.d_x()], |_| rng.normal() as f32);
        let raw = net.infer(&store, &x)?;
        let (mean, std) = column_stats(&raw);
        if let Some((component, &s)) = std.iter().enumerate().find(|(_, &s)| s < MIN_STD) {
            return Err(Error::DegenerateNetwork { component, std: s });
        }
        Ok(ConstructionNet {
            store,
            net,
            mean: mean.iter().map(|&m| m as f32).collect(),
            std: std.iter().map(|&s| s as f32).collect(),
        })
    }

    /// Normalized observation `(C(x) - mu) / sigma`.
    pub fn apply(&self, x: &Tensor) -> Result<Tensor> {
        let mut y = self.net.infer(&self.store, x)?;
        let d = self.mean.len();
        for row in y.data_mut().chunks_mut(d) {
            for ((v, &m), &s) in row.iter_mut().zip(&self.mean).zip(&self.std) {
                *v = (*v - m) / s;
            }
        }
        Ok(y)
    }

    pub fn params(&self) -> &ParamStore {
        &self.store
    }

    pub fn normalization(&self) -> (&[f32], &[f32]) {
        (&self.mean, &self.std)
    }
}

fn column_stats(t: &Tensor) -> (Vec<f64>, Vec<f64>) {
    let (rows, cols) = (t.rows(), t.cols());
    let mut mean = vec![0.0; cols];
    for r in 0..rows {
        for (m, &v) in mean.iter_mut().zip(t.row(r)) {
            *m += v as f64;
        }
    }
    mean.iter_mut().for_each(|m| *m /= rows as f64);
    let mut var = vec![0.0; cols];
    for r in 0..rows {
        for ((s, &v), &m) in var.iter_mut().zip(t.row(r)).zip(&mean) {
            *s += (v as f64 - m).powi(2);
        }
    }
    let std = var.iter().map(|s| (s / rows as f64).sqrt()).collect();
    (mean, std)
}

/// One net per modality; a degenerate draw is replaced by a fresh one.
pub fn build_construction_nets(spec: &SyntheticSpec, rng: &mut RngStream) -> Result<Vec<ConstructionNet>> {
    build_construction_nets_with(spec, rng, CALIBRATION_SAMPLES)
}

pub fn build_construction_nets_with(
    spec: &SyntheticSpec,
    rng: &mut RngStream,
    calibration: usize,
) -> Result<Vec<ConstructionNet>> {
    spec.validate()?;
    (0..spec.n)
        .map(|i| {
            let mut last = None;
            for attempt in 0..MAX_RESAMPLES {
                let mut stream = rng.fork(1000 + (i * MAX_RESAMPLES + attempt) as u64);
                match ConstructionNet::build(spec, &mut stream, calibration) {
                    Ok(net) => return Ok(net),
                    Err(e @ Error::DegenerateNetwork { .. }) => last = Some(e),
                    Err(e) => return Err(e),
                }
            }
            Err(last.expect("at least one attempt"))
        })
        .collect()
}

/// Observed modalities of one batch.
#[derive(Debug, Clone)]
pub struct ModalityBatch {
    /// Per modality `[batch, d_y]`.
    pub y: Vec<Tensor>,
}

impl ModalityBatch {
    /// `y_0 ⊕ ... ⊕ y_{n-1}`.
    pub fn y_concat(&self) -> Tensor {
        let views: Vec<&Tensor> = self.y.iter().collect();
        Tensor::concat_cols(&views).expect("modalities share the batch extent")
    }

    /// `⊕_{j != i} y_j`, ascending `j`.
    pub fn y_without(&self, i: usize) -> Tensor {
        let views: Vec<&Tensor> = self
            .y
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != i)
            .map(|(_, t)| t)
            .collect();
        Tensor::concat_cols(&views).expect("modalities share the batch extent")
    }
}

pub fn construct_modalities(nets: &[ConstructionNet], sources: &SourceBatch) -> Result<ModalityBatch> {
    if nets.len() != sources.x_e.len() {
        return Err(Error::shape("construct_modalities", &[nets.len()], &[sources.x_e.len()]));
    }
    let y = nets
        .iter()
        .enumerate()
        .map(|(i, net)| net.apply(&sources.x_i(i)))
        .collect::<Result<_>>()?;
    Ok(ModalityBatch { y })
}

/// A spec together with its frozen construction networks.
#[derive(Debug, Clone)]
pub struct SyntheticWorld {
    pub spec: SyntheticSpec,
    pub nets: Vec<ConstructionNet>,
}

impl SyntheticWorld {
    /// Builds the networks from `spec.seed`.
    pub fn new(spec: SyntheticSpec) -> Result<Self> {
        let mut rng = RngStream::new(spec.seed, 0);
        let nets = build_construction_nets(&spec, &mut rng)?;
        Ok(SyntheticWorld { spec, nets })
    }

    pub fn sample(&self, batch: usize, rng: &mut RngStream) -> Result<(SourceBatch, ModalityBatch)> {
        let sources = sample_sources(&self.spec, batch, rng);
        let modalities = construct_modalities(&self.nets, &sources)?;
        Ok((sources, modalities))
    }
}
