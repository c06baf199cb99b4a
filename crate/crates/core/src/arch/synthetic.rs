//! Joint encoding, the source-reconstructing control, and cross-modality
//! prediction on synthetic data.

use crate::error::{Error, Result};
use crate::nn::{fit, Graph, LossTrace, Network, ParamStore, RngStream, Schedule, Tensor};
use crate::synthetic::{ModalityBatch, SourceBatch, SyntheticWorld};

/// Anything that maps a synthetic batch to a latent code.
pub trait SyntheticEncoder: Sync {
    fn d_z(&self) -> usize;
    fn encode_batch(&self, sources: &SourceBatch, modalities: &ModalityBatch) -> Result<Tensor>;
}

/// What the decoder is asked to reproduce.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AeTarget {
    /// `y_0 ⊕ ... ⊕ y_{n-1}` (joint encoding).
    Observations,
    /// `x_0 ⊕ ... ⊕ x_{n-1}` (control).
    Sources,
    /// The encoder input itself (autoencoding cross-modal predictions).
    Input,
}

/// Encoder/decoder pair, each a three-layer MLP.
#[derive(Debug, Clone)]
pub struct Autoencoder {
    pub store: ParamStore,
    pub encoder: Network,
    pub decoder: Network,
    pub target: AeTarget,
    pub trace: LossTrace,
}

impl Autoencoder {
    fn new(d_in: usize, d_z: usize, d_out: usize, target: AeTarget, rng: &mut RngStream) -> Self {
        let mut store = ParamStore::new();
        let encoder = Network::mlp3(&mut store, "encoder", d_in, d_z, rng);
        let decoder = Network::mlp3(&mut store, "decoder", d_z, d_out, rng);
        Autoencoder {
            store,
            encoder,
            decoder,
            target,
            trace: LossTrace::default(),
        }
    }

    pub fn d_z(&self) -> usize {
        self.encoder.out_dim()
    }

    pub fn encode(&self, input: &Tensor) -> Result<Tensor> {
        self.encoder.infer(&self.store, input)
    }

    pub fn decode(&self, z: &Tensor) -> Result<Tensor> {
        self.decoder.infer(&self.store, z)
    }

    pub fn reconstruct(&self, input: &Tensor) -> Result<Tensor> {
        self.decode(&self.encode(input)?)
    }

    /// One Adam run on `(1 / d_out) * sum (target - D(E(input)))^2`.
    fn train<F>(&mut self, what: &str, schedule: &Schedule, mut batch: F) -> Result<()>
    where
        F: FnMut(usize) -> Result<(Tensor, Tensor)>,
    {
        let (enc, dec) = (self.encoder.clone(), self.decoder.clone());
        let norm = dec.out_dim() as f64;
        self.trace = fit(what, &mut self.store, schedule, None, |store, b| {
            let (input, target) = batch(b)?;
            let rows = input.rows() as f64;
            let mut g = Graph::new(store);
            let x = g.input(input);
            let t = g.input(target);
            let z = enc.forward(&mut g, x)?;
            let y = dec.forward(&mut g, z)?;
            let loss = g.mse(y, t, norm)?;
            Ok((g.scalar(loss) / rows, g.backward(loss)?))
        })?;
        Ok(())
    }
}

impl SyntheticEncoder for Autoencoder {
    fn d_z(&self) -> usize {
        Autoencoder::d_z(self)
    }

    fn encode_batch(&self, _sources: &SourceBatch, modalities: &ModalityBatch) -> Result<Tensor> {
        self.encode(&modalities.y_concat())
    }
}

fn check_dz(d_z: usize) -> Result<()> {
    if d_z == 0 {
        return Err(Error::Usage("latent size d_z must be at least 1; d_z = 0 is reported analytically".into()));
    }
    Ok(())
}

/// Joint encoding: autoencode the concatenated observations.
pub fn train_je(world: &SyntheticWorld, d_z: usize, schedule: &Schedule, rng: &mut RngStream) -> Result<Autoencoder> {
    check_dz(d_z)?;
    let spec = world.spec;
    let width = spec.n * spec.d_y();
    let mut ae = Autoencoder::new(width, d_z, width, AeTarget::Observations, &mut rng.fork(rng.stream_id() + 1));
    ae.train("joint-encoding autoencoder", schedule, |_| {
        let (_, m) = world.sample(schedule.batch_size, rng)?;
        let y = m.y_concat();
        Ok((y.clone(), y))
    })?;
    Ok(ae)
}

/// Control: encode the observations, decode the original sources.
pub fn train_control(
    world: &SyntheticWorld,
    d_z: usize,
    schedule: &Schedule,
    rng: &mut RngStream,
) -> Result<Autoencoder> {
    check_dz(d_z)?;
    let spec = world.spec;
    let mut ae = Autoencoder::new(
        spec.n * spec.d_y(),
        d_z,
        spec.n * spec.d_x(),
        AeTarget::Sources,
        &mut rng.fork(rng.stream_id() + 1),
    );
    ae.train("control autoencoder", schedule, |_| {
        let (s, m) = world.sample(schedule.batch_size, rng)?;
        Ok((m.y_concat(), s.x_concat()))
    })?;
    Ok(ae)
}

/// One predictor per modality, `M_i : y_i -> ⊕_{j != i} y_j`.
#[derive(Debug, Clone)]
pub struct CrossModalPredictors {
    pub store: ParamStore,
    pub nets: Vec<Network>,
    pub trace: LossTrace,
}

impl CrossModalPredictors {
    pub fn n(&self) -> usize {
        self.nets.len()
    }

    /// `ỹ_{∖i}` for one modality.
    pub fn predict(&self, i: usize, y_i: &Tensor) -> Result<Tensor> {
        self.nets[i].infer(&self.store, y_i)
    }

    /// `ỹ_{∖0} ⊕ ... ⊕ ỹ_{∖(n-1)}`, the high-dimensional shared code.
    pub fn predict_all(&self, m: &ModalityBatch) -> Result<Tensor> {
        let parts = (0..self.n())
            .map(|i| self.predict(i, &m.y[i]))
            .collect::<Result<Vec<_>>>()?;
        let views: Vec<&Tensor> = parts.iter().collect();
        Tensor::concat_cols(&views)
    }

    pub fn code_dim(&self) -> usize {
        self.nets.iter().map(Network::out_dim).sum()
    }
}

/// Trains every `M_i` on its own loss `(1 / ((n-1) d_y)) sum (y_{∖i} - ỹ_{∖i})^2`.
///
/// The nets share batches and an optimizer run but no parameters, so each
/// one follows exactly the trajectory it would have alone.
pub fn train_cross_modal(world: &SyntheticWorld, schedule: &Schedule, rng: &mut RngStream) -> Result<CrossModalPredictors> {
    let spec = world.spec;
    let d_y = spec.d_y();
    let mut init = rng.fork(rng.stream_id() + 1);
    let mut store = ParamStore::new();
    let nets: Vec<Network> = (0..spec.n)
        .map(|i| Network::mlp3(&mut store, &format!("predictor{i}"), d_y, (spec.n - 1) * d_y, &mut init))
        .collect();
    let norm = ((spec.n - 1) * d_y) as f64;
    let trace = fit("cross-modal predictors", &mut store, schedule, None, |store, _| {
        let (_, m) = world.sample(schedule.batch_size, rng)?;
        let rows = schedule.batch_size as f64;
        let mut g = Graph::new(store);
        let mut total = None;
        for (i, net) in nets.iter().enumerate() {
            let x = g.input(m.y[i].clone());
            let t = g.input(m.y_without(i));
            let p = net.forward(&mut g, x)?;
            let l = g.mse(p, t, norm)?;
            total = Some(match total {
                None => l,
                Some(acc) => g.add(acc, l)?,
            });
        }
        let total = total.expect("n >= 2");
        Ok((g.scalar(total) / rows / nets.len() as f64, g.backward(total)?))
    })?;
    Ok(CrossModalPredictors { store, nets, trace })
}

/// Cross-modality prediction followed by an autoencoder over the predictions.
#[derive(Debug, Clone)]
pub struct CmPipeline {
    pub predictors: CrossModalPredictors,
    pub autoencoder: Autoencoder,
}

/// `z = E(ỹ_{∖0} ⊕ ... ⊕ ỹ_{∖(n-1)})`.
pub fn encode_cm(predictors: &CrossModalPredictors, autoencoder: &Autoencoder, m: &ModalityBatch) -> Result<Tensor> {
    autoencoder.encode(&predictors.predict_all(m)?)
}

impl SyntheticEncoder for CmPipeline {
    fn d_z(&self) -> usize {
        self.autoencoder.d_z()
    }

    fn encode_batch(&self, _sources: &SourceBatch, modalities: &ModalityBatch) -> Result<Tensor> {
        encode_cm(&self.predictors, &self.autoencoder, modalities)
    }
}

/// Stage two of the cross-modal architecture, with frozen predictors.
pub fn train_cm_autoencoder(
    world: &SyntheticWorld,
    predictors: &CrossModalPredictors,
    d_z: usize,
    schedule: &Schedule,
    rng: &mut RngStream,
) -> Result<Autoencoder> {
    check_dz(d_z)?;
    let width = predictors.code_dim();
    let mut ae = Autoencoder::new(width, d_z, width, AeTarget::Input, &mut rng.fork(rng.stream_id() + 1));
    ae.train("cross-modal autoencoder", schedule, |_| {
        let (_, m) = world.sample(schedule.batch_size, rng)?;
        let code = predictors.predict_all(&m)?;
        Ok((code.clone(), code))
    })?;
    Ok(ae)
}

/// Predictors first, then the autoencoder on their outputs.
pub fn train_cm(world: &SyntheticWorld, d_z: usize, schedule: &Schedule, rng: &mut RngStream) -> Result<CmPipeline> {
    check_dz(d_z)?;
    let mut stage1 = rng.fork(rng.stream_id() + 10);
    let predictors = train_cross_modal(world, schedule, &mut stage1)?;
    let autoencoder = train_cm_autoencoder(world, &predictors, d_z, schedule, rng)?;
    Ok(CmPipeline {
        predictors,
        autoencoder,
    })
}
