use super::{AdamState, Gradients, ParamId, ParamStore};
use crate::error::{Error, Result};

/// Batch budget shared by every trained network.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Schedule {
    pub batches: usize,
    pub batch_size: usize,
    pub lr: f64,
}

impl Default for Schedule {
    fn default() -> Self {
        Schedule {
            batches: 2500,
            batch_size: 128,
            lr: 1e-3,
        }
    }
}

impl Schedule {
    pub fn new(batches: usize, batch_size: usize, lr: f64) -> Self {
        Schedule {
            batches,
            batch_size,
            lr,
        }
    }
}

/// Per-batch training losses, as returned by the loss closure.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LossTrace(pub Vec<f64>);

impl LossTrace {
    /// Mean of the first `n` recorded losses.
    pub fn head_mean(&self, n: usize) -> f64 {
        let n = n.min(self.0.len()).max(1);
        self.0[..n].iter().sum::<f64>() / n as f64
    }

    /// Mean of the last `n` recorded losses.
    pub fn tail_mean(&self, n: usize) -> f64 {
        let n = n.min(self.0.len()).max(1);
        self.0[self.0.len() - n..].iter().sum::<f64>() / n as f64
    }

    pub fn last(&self) -> Option<f64> {
        self.0.last().copied()
    }
}

/// Runs `schedule.batches` Adam steps.
///
/// `step` receives the current parameters and the batch index and returns the
/// batch loss with its gradients. Only parameters in `trainable` (or all, when
/// `None`) are updated. A non-finite loss aborts the run.
pub fn fit<F>(
    what: &str,
    store: &mut ParamStore,
    schedule: &Schedule,
    trainable: Option<&[ParamId]>,
    mut step: F,
) -> Result<LossTrace>
where
    F: FnMut(&ParamStore, usize) -> Result<(f64, Gradients)>,
{
    let mut adam = AdamState::new(store, schedule.lr);
    let mut trace = Vec::with_capacity(schedule.batches);
    for batch in 0..schedule.batches {
        let (loss, mut grads) = step(store, batch)?;
        if !loss.is_finite() {
            return Err(Error::NonFinite {
                what: what.to_string(),
                batch,
                value: loss,
            });
        }
        if let Some(keep) = trainable {
            grads.retain(|id| keep.contains(&id));
        }
        adam.step(store, &grads)?;
        trace.push(loss);
    }
    Ok(LossTrace(trace))
}
