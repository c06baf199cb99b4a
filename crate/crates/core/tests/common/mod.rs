//! Test-only oracles shared by integration tests.
#![allow(dead_code)]

use mmlab::nn::{Gradients, ParamStore, RngStream};

/// Worst relative error between analytic gradients and central differences.
///
/// Up to `per_param` coordinates of every parameter tensor are probed.
pub fn finite_difference_error(
    store: &ParamStore<f64>,
    grads: &Gradients<f64>,
    h: f64,
    per_param: usize,
    rng: &mut RngStream,
    loss: impl Fn(&ParamStore<f64>) -> f64,
) -> f64 {
    let mut worst: f64 = 0.0;
    let mut probe = store.clone();
    for (id, _, t) in store.iter() {
        let n = t.len();
        let coords: Vec<usize> = if n <= per_param {
            (0..n).collect()
        } else {
            (0..per_param).map(|_| rng.below(n)).collect()
        };
        for i in coords {
            let orig = t.data()[i];
            probe.get_mut(id).data_mut()[i] = orig + h;
            let up = loss(&probe);
            probe.get_mut(id).data_mut()[i] = orig - h;
            let down = loss(&probe);
            probe.get_mut(id).data_mut()[i] = orig;
            let numeric = (up - down) / (2.0 * h);
            let analytic = grads.get(id).map_or(0.0, |g| g.data()[i]);
            let scale = analytic.abs().max(numeric.abs()).max(1e-6);
            worst = worst.max((analytic - numeric).abs() / scale);
        }
    }
    worst
}

/// Population mean and variance of a slice.
pub fn mean_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n;
    (m, v)
}
