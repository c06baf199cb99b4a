//! Minimal deterministic neural-network engine.

mod adam;
pub mod conv;
mod graph;
mod layers;
mod params;
mod real;
mod rng;
mod tensor;
mod train;

pub use adam::AdamState;
pub use conv::ConvGeom;
pub use graph::{Graph, Var};
pub use layers::{
    conv_encoder, deconv_decoder, dense_forward, Activation, Conv2d, Deconv2d, Dense, Layer, Network, HALVING, HIDDEN,
};
pub use params::{Gradients, ParamId, ParamStore};
pub use real::Real;
pub use rng::{derive_seed, label_hash, mix64, RngStream};
pub use tensor::Tensor;
pub use train::{fit, LossTrace, Schedule};

use crate::error::{Error, Result};

/// `(1 / normalizer) * sum over batch and components of (pred - target)^2`,
/// accumulated in `f64`.
pub fn mse_loss<T: Real>(pred: &Tensor<T>, target: &Tensor<T>, normalizer: f64) -> Result<f64> {
    if pred.shape() != target.shape() {
        return Err(Error::shape("mse_loss", target.shape(), pred.shape()));
    }
    if !(normalizer > 0.0) {
        return Err(Error::Usage(format!("mse normalizer must be positive, got {normalizer}")));
    }
    let s: f64 = pred
        .data()
        .iter()
        .zip(target.data())
        .map(|(&p, &t)| (p.f64() - t.f64()).powi(2))
        .sum();
    Ok(s / normalizer)
}

/// Mean over samples of the per-component squared error.
pub fn per_sample_mse<T: Real>(pred: &Tensor<T>, target: &Tensor<T>) -> Result<f64> {
    let n = pred.rows().max(1) as f64;
    mse_loss(pred, target, pred.cols().max(1) as f64).map(|s| s / n)
}
