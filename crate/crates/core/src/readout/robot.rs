//! Readouts and image-error measures for the two-arm world.

use serde::{Deserialize, Serialize};

use super::{ErrorAccumulator, Score};
use crate::arch::robot::sample_rows;
use crate::arm::{Dataset, Stream};
use crate::error::{Error, Result};
use crate::nn::{fit, Graph, Network, ParamStore, RngStream, Schedule, Tensor};

/// Mean per-pixel squared error over the left (`col < W/2`) and right halves.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HalfSplit {
    pub left: f64,
    pub right: f64,
}

pub fn vision_error_split(recon: &Tensor, images: &Tensor, width: usize) -> Result<HalfSplit> {
    if width == 0 || width % 2 != 0 {
        return Err(Error::Config(format!("image width {width} must be even to split in halves")));
    }
    if recon.shape() != images.shape() {
        return Err(Error::shape("vision_error_split", images.shape(), recon.shape()));
    }
    let (mut left, mut right) = (0.0f64, 0.0f64);
    for (i, (&p, &t)) in recon.data().iter().zip(images.data()).enumerate() {
        let e = (p as f64 - t as f64).powi(2);
        if i % width < width / 2 {
            left += e;
        } else {
            right += e;
        }
    }
    let half = (images.len() / 2).max(1) as f64;
    Ok(HalfSplit {
        left: left / half,
        right: right / half,
    })
}

/// Per-pixel squared error averaged over samples.
pub fn error_map(recon: &Tensor, images: &Tensor) -> Result<Vec<f64>> {
    if recon.shape() != images.shape() {
        return Err(Error::shape("error_map", images.shape(), recon.shape()));
    }
    let cols = images.cols();
    let mut map = vec![0.0f64; cols];
    for r in 0..images.rows() {
        for ((m, &p), &t) in map.iter_mut().zip(recon.row(r)).zip(images.row(r)) {
            *m += (p as f64 - t as f64).powi(2);
        }
    }
    let n = images.rows().max(1) as f64;
    map.iter_mut().for_each(|m| *m /= n);
    Ok(map)
}

/// The blank predictor: the mean training image, repeated for every eval row.
pub fn blank_reconstruction(dataset: &Dataset) -> Result<Tensor> {
    let train = dataset.train_range();
    let px = dataset.config.pixels();
    let mut mean = vec![0.0f64; px];
    for r in train.clone() {
        for (m, &v) in mean.iter_mut().zip(dataset.images.row(r)) {
            *m += v as f64;
        }
    }
    let mean: Vec<f32> = mean.iter().map(|&m| (m / train.len().max(1) as f64) as f32).collect();
    let rows = dataset.eval_range().len();
    Tensor::new(&[rows, px], mean.iter().copied().cycle().take(rows * px).collect())
}

pub fn eval_images(dataset: &Dataset) -> Result<Tensor> {
    let r = dataset.eval_range();
    dataset.images.slice_rows(r.start, r.len())
}

/// Chance-level vision error per half.
pub fn chance_split(dataset: &Dataset) -> Result<HalfSplit> {
    vision_error_split(&blank_reconstruction(dataset)?, &eval_images(dataset)?, dataset.config.width)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StreamScore {
    pub stream: Stream,
    pub score: Score,
}

pub fn find_stream(scores: &[StreamScore], s: Stream) -> Option<Score> {
    scores.iter().find(|x| x.stream == s).map(|x| x.score)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobotReadoutReport {
    pub d_z: usize,
    pub streams: Vec<StreamScore>,
    pub vision: HalfSplit,
    pub chance: HalfSplit,
    /// `H * W` row-major mean squared error per pixel.
    pub error_map: Vec<f64>,
}

impl RobotReadoutReport {
    pub fn stream(&self, s: Stream) -> f64 {
        find_stream(&self.streams, s).map_or(f64::NAN, |x| x.mse)
    }

    /// `d_z = 0`: readouts at chance, reconstruction equal to the blank predictor.
    pub fn zero_latent(dataset: &Dataset) -> Result<Self> {
        let blank = blank_reconstruction(dataset)?;
        let images = eval_images(dataset)?;
        let chance = vision_error_split(&blank, &images, dataset.config.width)?;
        Ok(RobotReadoutReport {
            d_z: 0,
            streams: Stream::ALL
                .iter()
                .map(|&stream| StreamScore {
                    stream,
                    score: Score::chance(),
                })
                .collect(),
            vision: chance,
            chance,
            error_map: error_map(&blank, &images)?,
        })
    }
}

/// Trains one MLP from `inputs` to the concatenated `streams` on training rows
/// and scores each stream on evaluation rows.
pub fn probe_streams(
    dataset: &Dataset,
    inputs: &Tensor,
    streams: &[Stream],
    schedule: &Schedule,
    rng: &mut RngStream,
) -> Result<Vec<StreamScore>> {
    if inputs.rows() != dataset.len() {
        return Err(Error::shape("probe inputs", &[dataset.len(), inputs.cols()], inputs.shape()));
    }
    let parts: Vec<Tensor> = streams.iter().map(|&s| dataset.stream(s)).collect();
    let targets = Tensor::concat_cols(&parts.iter().collect::<Vec<_>>())?;
    let mut init = rng.fork(rng.stream_id() + 1);
    let mut store = ParamStore::new();
    let net = Network::mlp3(&mut store, "readout", inputs.cols(), targets.cols(), &mut init);
    let train = dataset.train_range();
    let norm = targets.cols() as f64;
    fit("robot readout", &mut store, schedule, None, |store, _| {
        let rows = sample_rows(&train, schedule.batch_size, rng);
        let mut g = Graph::new(store);
        let x = g.input(inputs.gather_rows(&rows));
        let t = g.input(targets.gather_rows(&rows));
        let y = net.forward(&mut g, x)?;
        let l = g.mse(y, t, norm)?;
        Ok((g.scalar(l) / rows.len() as f64, g.backward(l)?))
    })?;

    let eval = dataset.eval_range();
    let pred = net.infer(&store, &inputs.slice_rows(eval.start, eval.len())?)?;
    let truth = targets.slice_rows(eval.start, eval.len())?;
    let mut out = Vec::with_capacity(streams.len());
    let mut col = 0;
    for (&stream, part) in streams.iter().zip(&parts) {
        let w = part.cols();
        let mut acc = ErrorAccumulator::default();
        acc.push_rows(&pred.slice_cols(col, w)?, &truth.slice_cols(col, w)?)?;
        out.push(StreamScore {
            stream,
            score: acc.score(),
        });
        col += w;
    }
    Ok(out)
}

/// Readout of every ground-truth stream from frozen codes, plus the image
/// errors of the pipeline's reconstruction of the evaluation rows.
pub fn probe_robot(
    dataset: &Dataset,
    codes: &Tensor,
    recon_eval: &Tensor,
    schedule: &Schedule,
    rng: &mut RngStream,
) -> Result<RobotReadoutReport> {
    let streams = probe_streams(dataset, codes, &Stream::ALL, schedule, rng)?;
    let images = eval_images(dataset)?;
    Ok(RobotReadoutReport {
        d_z: codes.cols(),
        streams,
        vision: vision_error_split(recon_eval, &images, dataset.config.width)?,
        chance: chance_split(dataset)?,
        error_map: error_map(recon_eval, &images)?,
    })
}

/// Direct probes on the raw modalities, before any compression.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawProbeReport {
    /// Right-arm position, velocity, end effector from proprioception.
    pub from_proprio: Vec<StreamScore>,
    /// Left position, left end effector, right position from vision.
    pub from_vision: Vec<StreamScore>,
    /// Left-arm velocity from both modalities together.
    pub left_velocity_from_both: Score,
}

/// Probe error bounds of the information contract.
pub const DETERMINISTIC_MAX: f64 = 0.05;
pub const VISIBLE_MAX: f64 = 0.3;
pub const PARTIAL_MAX: f64 = 0.5;
pub const CHANCE_MIN: f64 = 0.9;

#[derive(Debug, Clone, PartialEq)]
pub struct ClauseCheck {
    pub clause: &'static str,
    pub pass: bool,
    pub detail: String,
}

impl RawProbeReport {
    /// The three clauses: (a) the right arm is a function of proprioception,
    /// (b) the left arm is visible and the right arm at least partly so,
    /// (c) left-arm velocity is in neither modality.
    pub fn check(&self) -> Vec<ClauseCheck> {
        let fmt = |v: &[StreamScore]| {
            v.iter().map(|s| format!("{} {:.3}", s.stream.label(), s.score.mse)).collect::<Vec<_>>().join(", ")
        };
        let a = self.from_proprio.iter().all(|s| s.score.mse < DETERMINISTIC_MAX);
        let b = self.from_vision.iter().all(|s| match s.stream.side {
            crate::arm::Side::Left => s.score.mse < VISIBLE_MAX,
            crate::arm::Side::Right => s.score.mse < PARTIAL_MAX,
        });
        let c = self.left_velocity_from_both.mse >= CHANCE_MIN;
        vec![
            ClauseCheck {
                clause: "right arm from proprioception",
                pass: a,
                detail: format!("{} (each < {DETERMINISTIC_MAX})", fmt(&self.from_proprio)),
            },
            ClauseCheck {
                clause: "arms from vision",
                pass: b,
                detail: format!("{} (left < {VISIBLE_MAX}, right < {PARTIAL_MAX})", fmt(&self.from_vision)),
            },
            ClauseCheck {
                clause: "left velocity from neither",
                pass: c,
                detail: format!("left_vel {:.3} (>= {CHANCE_MIN})", self.left_velocity_from_both.mse),
            },
        ]
    }
}

pub fn probe_raw_modalities(dataset: &Dataset, schedule: &Schedule, rng: &mut RngStream) -> Result<RawProbeReport> {
    use crate::arm::{Quantity::*, Side::*};
    let from_proprio = probe_streams(
        dataset,
        &dataset.proprio,
        &[Stream::new(Right, Position), Stream::new(Right, Velocity), Stream::new(Right, EndEffector)],
        schedule,
        &mut rng.fork(rng.stream_id() + 10),
    )?;
    let from_vision = probe_streams(
        dataset,
        &dataset.images,
        &[Stream::new(Left, Position), Stream::new(Left, EndEffector), Stream::new(Right, Position)],
        schedule,
        &mut rng.fork(rng.stream_id() + 20),
    )?;
    let both = Tensor::concat_cols(&[&dataset.images, &dataset.proprio])?;
    let vel = probe_streams(
        dataset,
        &both,
        &[Stream::new(Left, Velocity)],
        schedule,
        &mut rng.fork(rng.stream_id() + 30),
    )?;
    Ok(RawProbeReport {
        from_proprio,
        from_vision,
        left_velocity_from_both: vel[0].score,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn odd_width_is_a_config_error() {
        let t = Tensor::zeros(&[1, 3]);
        assert!(matches!(vision_error_split(&t, &t, 3), Err(Error::Config(_))));
    }

    #[test]
    fn perfect_reconstruction_has_zero_error() {
        let t = Tensor::from_fn(&[3, 8], |i| i as f32 * 0.1);
        let s = vision_error_split(&t, &t, 4).unwrap();
        assert_eq!((s.left, s.right), (0.0, 0.0));
        assert!(error_map(&t, &t).unwrap().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn halves_are_column_based() {
        // 1 row, 2 x 4 image; error only in column 3 (right half).
        let t = Tensor::zeros(&[1, 8]);
        let mut p = t.clone();
        p.data_mut()[3] = 2.0;
        p.data_mut()[7] = 2.0;
        let s = vision_error_split(&p, &t, 4).unwrap();
        assert_eq!(s.left, 0.0);
        assert_eq!(s.right, 2.0);
    }
}
