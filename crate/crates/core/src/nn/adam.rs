use super::{Gradients, ParamStore, Real, Tensor};
use crate::error::{Error, Result};

/// Adam optimizer state for one [`ParamStore`].
#[derive(Debug, Clone)]
pub struct AdamState<T = f32> {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    m: Vec<Tensor<T>>,
    v: Vec<Tensor<T>>,
}

impl<T: Real> AdamState<T> {
    pub fn new(store: &ParamStore<T>, lr: f64) -> Self {
        let zeros: Vec<Tensor<T>> = store.iter().map(|(_, _, t)| Tensor::zeros(t.shape())).collect();
        AdamState {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn first_moment(&self, i: usize) -> &Tensor<T> {
        &self.m[i]
    }

    pub fn second_moment(&self, i: usize) -> &Tensor<T> {
        &self.v[i]
    }

    /// One bias-corrected Adam update.
    ///
    /// Parameters without a gradient, or with an identically zero one, are
    /// left untouched together with their moments.
    pub fn step(&mut self, store: &mut ParamStore<T>, grads: &Gradients<T>) -> Result<()> {
        if store.len() != self.m.len() {
            return Err(Error::shape("adam", &[self.m.len()], &[store.len()]));
        }
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        let (b1, b2) = (T::of(self.beta1), T::of(self.beta2));
        let (nb1, nb2) = (T::of(1.0 - self.beta1), T::of(1.0 - self.beta2));
        let step_size = T::of(self.lr / c1);
        let c2_sqrt = T::of(c2.sqrt());
        let eps = T::of(self.eps);
        for id in store.ids() {
            let Some(g) = grads.get(id) else { continue };
            let p = store.get_mut(id);
            if g.shape() != p.shape() {
                return Err(Error::shape("adam", p.shape(), g.shape()));
            }
            if g.data().iter().all(|x| *x == T::zero()) {
                continue;
            }
            let (m, v) = (&mut self.m[id.index()], &mut self.v[id.index()]);
            for (((pv, &gv), mv), vv) in p
                .data_mut()
                .iter_mut()
                .zip(g.data())
                .zip(m.data_mut())
                .zip(v.data_mut())
            {
                *mv = b1 * *mv + nb1 * gv;
                *vv = b2 * *vv + nb2 * gv * gv;
                *pv = *pv - step_size * *mv / (vv.sqrt() / c2_sqrt + eps);
            }
        }
        Ok(())
    }
}
