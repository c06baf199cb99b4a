//! Vision/proprioception pipelines for the two-arm world.
//!
//! A pipeline encodes `z_pre = E_v(y_v) ⊕ E_p(y_p)` down to `z`, decodes to
//! `z_post`, splits it at `split_index` and decodes the two halves with
//! `D_v` and `D_p`. `E_p` and `D_p` are always the identity. Under the AES
//! option the vision input is a frozen 100-dim code and `E_v`, `D_v` are the
//! identity as well.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::arm::Dataset;
use crate::error::{Error, Result};
use crate::nn::{conv_encoder, deconv_decoder, fit, Graph, LossTrace, Network, ParamStore, RngStream, Schedule, Tensor, Var};

/// Width of the visual code, both from `E_v` and from the AES pre-encoder.
pub const VISION_CODE: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RobotOption {
    Default,
    Aes,
}

impl RobotOption {
    pub fn label(self) -> &'static str {
        match self {
            RobotOption::Default => "default",
            RobotOption::Aes => "aes",
        }
    }
}

/// Uniform row indices from `range`, with replacement.
pub fn sample_rows(range: &Range<usize>, batch: usize, rng: &mut RngStream) -> Vec<usize> {
    (0..batch).map(|_| range.start + rng.below(range.len())).collect()
}

fn image_shape(dataset: &Dataset) -> (usize, usize, usize) {
    (1, dataset.config.height, dataset.config.width)
}

/// Row-chunked inference through an arbitrary graph builder.
fn chunked<F>(store: &ParamStore, inputs: &[&Tensor], out_cols: usize, mut build: F) -> Result<Tensor>
where
    F: FnMut(&mut Graph<'_>, &[Var]) -> Result<Var>,
{
    const CHUNK: usize = 256;
    let rows = inputs[0].rows();
    let mut data = Vec::with_capacity(rows * out_cols);
    let mut start = 0;
    while start < rows {
        let len = CHUNK.min(rows - start);
        let mut g = Graph::new(store);
        let vars = inputs
            .iter()
            .map(|t| Ok(g.input(t.slice_rows(start, len)?.reshape(&[len, t.cols()])?)))
            .collect::<Result<Vec<_>>>()?;
        let y = build(&mut g, &vars)?;
        data.extend_from_slice(g.value(y).data());
        start += len;
    }
    Tensor::new(&[rows, out_cols], data)
}

/// Convolutional autoencoder trained before the joint stage, then frozen.
#[derive(Debug, Clone)]
pub struct AesPreEncoder {
    pub store: ParamStore,
    pub encoder: Network,
    pub decoder: Network,
    pub trace: LossTrace,
}

impl AesPreEncoder {
    pub fn encode(&self, images: &Tensor) -> Result<Tensor> {
        self.encoder.infer(&self.store, images)
    }

    pub fn decode(&self, codes: &Tensor) -> Result<Tensor> {
        self.decoder.infer(&self.store, codes)
    }
}

pub fn train_aes_pre(dataset: &Dataset, schedule: &Schedule, rng: &mut RngStream) -> Result<AesPreEncoder> {
    let shape = image_shape(dataset);
    let mut init = rng.fork(rng.stream_id() + 1);
    let mut store = ParamStore::new();
    let encoder = conv_encoder(&mut store, "aes.encoder", shape, VISION_CODE, &mut init)?;
    let decoder = deconv_decoder(&mut store, "aes.decoder", VISION_CODE, shape, &mut init)?;
    let train = dataset.train_range();
    let d_v = dataset.config.pixels() as f64;
    let trace = fit("visual pre-encoder", &mut store, schedule, None, |store, _| {
        let x = dataset.images.gather_rows(&sample_rows(&train, schedule.batch_size, rng));
        let mut g = Graph::new(store);
        let xv = g.input(x);
        let z = encoder.forward(&mut g, xv)?;
        let y = decoder.forward(&mut g, z)?;
        let l = g.mse(y, xv, d_v)?;
        Ok((g.scalar(l) / schedule.batch_size as f64, g.backward(l)?))
    })?;
    Ok(AesPreEncoder {
        store,
        encoder,
        decoder,
        trace,
    })
}

/// What a pipeline reads and reconstructs: vision (pixels or AES codes) and
/// proprioception, row-aligned with the dataset.
#[derive(Debug, Clone)]
pub struct RobotInputs {
    pub vision: Tensor,
    pub proprio: Tensor,
}

impl RobotInputs {
    /// The raw modalities, with vision optionally replaced by AES codes.
    pub fn observed(dataset: &Dataset, aes: Option<&AesPreEncoder>) -> Result<Self> {
        let vision = match aes {
            Some(a) => a.encode(&dataset.images)?,
            None => dataset.images.clone(),
        };
        Ok(RobotInputs {
            vision,
            proprio: dataset.proprio.clone(),
        })
    }
}

/// The joint autoencoder over vision and proprioception.
#[derive(Debug, Clone)]
pub struct RobotPipeline {
    pub option: RobotOption,
    pub store: ParamStore,
    /// `None` is the identity.
    pub e_v: Option<Network>,
    pub e_pre: Network,
    pub d_post: Network,
    pub d_v: Option<Network>,
    pub split_index: usize,
    pub d_p: usize,
    pub trace: LossTrace,
}

impl RobotPipeline {
    fn new(
        option: RobotOption,
        (d_v, d_p): (usize, usize),
        image: (usize, usize, usize),
        d_z: usize,
        split_index: usize,
        rng: &mut RngStream,
    ) -> Result<Self> {
        if d_z == 0 {
            return Err(Error::Usage("latent size d_z must be at least 1".into()));
        }
        let mut store = ParamStore::new();
        let (e_v, d_v_net, code) = match option {
            RobotOption::Default => {
                let e = conv_encoder(&mut store, "e_v", image, VISION_CODE, rng)?;
                let d = deconv_decoder(&mut store, "d_v", split_index, image, rng)?;
                (Some(e), Some(d), VISION_CODE)
            }
            RobotOption::Aes => {
                if split_index != d_v {
                    return Err(Error::Config(format!(
                        "with identity vision decoding the split index must equal the code width {d_v}, got {split_index}"
                    )));
                }
                (None, None, d_v)
            }
        };
        let e_pre = Network::mlp3(&mut store, "e_pre", code + d_p, d_z, rng);
        let d_post = Network::mlp3(&mut store, "d_post", d_z, split_index + d_p, rng);
        Ok(RobotPipeline {
            option,
            store,
            e_v,
            e_pre,
            d_post,
            d_v: d_v_net,
            split_index,
            d_p,
            trace: LossTrace::default(),
        })
    }

    pub fn d_z(&self) -> usize {
        self.e_pre.out_dim()
    }

    fn encode_graph(&self, g: &mut Graph<'_>, v: Var, p: Var) -> Result<Var> {
        let v = match &self.e_v {
            Some(e) => e.forward(g, v)?,
            None => v,
        };
        let pre = g.concat(&[v, p])?;
        self.e_pre.forward(g, pre)
    }

    fn decode_graph(&self, g: &mut Graph<'_>, z: Var) -> Result<(Var, Var)> {
        let post = self.d_post.forward(g, z)?;
        let v = g.slice(post, 0, self.split_index)?;
        let p = g.slice(post, self.split_index, self.d_p)?;
        let v = match &self.d_v {
            Some(d) => d.forward(g, v)?,
            None => v,
        };
        Ok((v, p))
    }

    pub fn encode(&self, vision: &Tensor, proprio: &Tensor) -> Result<Tensor> {
        chunked(&self.store, &[vision, proprio], self.d_z(), |g, x| self.encode_graph(g, x[0], x[1]))
    }

    /// Reconstructed `(vision, proprioception)`.
    pub fn decode(&self, z: &Tensor) -> Result<(Tensor, Tensor)> {
        let d_v = match &self.d_v {
            Some(d) => d.out_dim(),
            None => self.split_index,
        };
        let v = chunked(&self.store, &[z], d_v, |g, x| Ok(self.decode_graph(g, x[0])?.0))?;
        let p = chunked(&self.store, &[z], self.d_p, |g, x| Ok(self.decode_graph(g, x[0])?.1))?;
        Ok((v, p))
    }
}

/// Trains a pipeline to reproduce `inputs` on rows of `train`, with the loss
/// `(1/(2 d_p)) Σ(ỹ_p - y_p)^2 + (1/(2 d_v)) Σ(ỹ_v - y_v)^2`.
pub fn train_robot_pipeline(
    option: RobotOption,
    dataset: &Dataset,
    inputs: &RobotInputs,
    d_z: usize,
    split_index: usize,
    schedule: &Schedule,
    rng: &mut RngStream,
) -> Result<RobotPipeline> {
    let (d_v, d_p) = (inputs.vision.cols(), inputs.proprio.cols());
    let mut init = rng.fork(rng.stream_id() + 1);
    let mut pipe = RobotPipeline::new(option, (d_v, d_p), image_shape(dataset), d_z, split_index, &mut init)?;
    let train = dataset.train_range();
    let model = pipe.clone();
    pipe.trace = fit("robot autoencoder", &mut pipe.store, schedule, None, |store, _| {
        let rows = sample_rows(&train, schedule.batch_size, rng);
        let mut g = Graph::new(store);
        let v = g.input(inputs.vision.gather_rows(&rows));
        let p = g.input(inputs.proprio.gather_rows(&rows));
        let z = model.encode_graph(&mut g, v, p)?;
        let (rv, rp) = model.decode_graph(&mut g, z)?;
        let lp = g.mse(rp, p, 2.0 * d_p as f64)?;
        let lv = g.mse(rv, v, 2.0 * d_v as f64)?;
        let l = g.add(lp, lv)?;
        Ok((g.scalar(l) / rows.len() as f64, g.backward(l)?))
    })?;
    Ok(pipe)
}

/// Joint encoding of the observed modalities.
pub fn train_robot_default(
    dataset: &Dataset,
    d_z: usize,
    split_index: usize,
    schedule: &Schedule,
    rng: &mut RngStream,
) -> Result<RobotPipeline> {
    let inputs = RobotInputs::observed(dataset, None)?;
    train_robot_pipeline(RobotOption::Default, dataset, &inputs, d_z, split_index, schedule, rng)
}

/// `M_v : y_p -> ỹ_v` and `M_p : y_v -> ỹ_p`.
#[derive(Debug, Clone)]
pub struct RobotPredictors {
    pub store: ParamStore,
    pub m_v: Network,
    pub m_p: Network,
    pub trace: LossTrace,
}

impl RobotPredictors {
    /// The cross-modal predictions for every row, shaped like the inputs.
    pub fn predict(&self, inputs: &RobotInputs) -> Result<RobotInputs> {
        Ok(RobotInputs {
            vision: self.m_v.infer(&self.store, &inputs.proprio)?,
            proprio: self.m_p.infer(&self.store, &inputs.vision)?,
        })
    }
}

/// Trains both predictors on their own losses (they share no parameters).
/// Vision may be pixels (conv predictors) or AES codes (MLP predictors).
pub fn train_robot_predictors(
    dataset: &Dataset,
    inputs: &RobotInputs,
    option: RobotOption,
    schedule: &Schedule,
    rng: &mut RngStream,
) -> Result<RobotPredictors> {
    let (d_v, d_p) = (inputs.vision.cols(), inputs.proprio.cols());
    let mut init = rng.fork(rng.stream_id() + 1);
    let mut store = ParamStore::new();
    let (m_v, m_p) = match option {
        RobotOption::Default => {
            let shape = image_shape(dataset);
            (
                deconv_decoder(&mut store, "m_v", d_p, shape, &mut init)?,
                conv_encoder(&mut store, "m_p", shape, d_p, &mut init)?,
            )
        }
        RobotOption::Aes => (
            Network::mlp3(&mut store, "m_v", d_p, d_v, &mut init),
            Network::mlp3(&mut store, "m_p", d_v, d_p, &mut init),
        ),
    };
    let train = dataset.train_range();
    let trace = fit("robot cross-modal predictors", &mut store, schedule, None, |store, _| {
        let rows = sample_rows(&train, schedule.batch_size, rng);
        let mut g = Graph::new(store);
        let v = g.input(inputs.vision.gather_rows(&rows));
        let p = g.input(inputs.proprio.gather_rows(&rows));
        let pv = m_v.forward(&mut g, p)?;
        let pp = m_p.forward(&mut g, v)?;
        let lv = g.mse(pv, v, d_v as f64)?;
        let lp = g.mse(pp, p, d_p as f64)?;
        let l = g.add(lv, lp)?;
        Ok((g.scalar(l) / rows.len() as f64, g.backward(l)?))
    })?;
    Ok(RobotPredictors {
        store,
        m_v,
        m_p,
        trace,
    })
}

/// Stage two of robot CM: the pipeline autoencodes the frozen predictions.
/// Returns the pipeline together with the prediction inputs it reads.
pub fn train_robot_cm(
    dataset: &Dataset,
    predictors: &RobotPredictors,
    observed: &RobotInputs,
    option: RobotOption,
    d_z: usize,
    split_index: usize,
    schedule: &Schedule,
    rng: &mut RngStream,
) -> Result<(RobotPipeline, RobotInputs)> {
    let predicted = predictors.predict(observed)?;
    let pipe = train_robot_pipeline(option, dataset, &predicted, d_z, split_index, schedule, rng)?;
    Ok((pipe, predicted))
}
