use crate::error::Result;
use crate::params::ParamSet;
use crate::real::Real;

/// Adam optimizer state: first/second moments per parameter and the step count.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<T> {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub t: u64,
    m: Vec<Vec<T>>,
    v: Vec<Vec<T>>,
}

impl<T: Real> AdamState<T> {
    pub fn new(params: &ParamSet<T>, lr: f64) -> Self {
        let zeros = || (0..params.len()).map(|i| vec![T::zero(); params.get(i).numel()]).collect();
        Self { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8, t: 0, m: zeros(), v: zeros() }
    }

    pub fn first_moment(&self) -> &[Vec<T>] {
        &self.m
    }

    pub fn second_moment(&self) -> &[Vec<T>] {
        &self.v
    }

    /// One bias-corrected Adam update of every parameter.
    pub fn step(&mut self, params: &mut ParamSet<T>, grads: &[Vec<T>]) -> Result<()> {
        params.check_grads(grads)?;
        self.t += 1;
        let b1 = T::of(self.beta1);
        let b2 = T::of(self.beta2);
        let one = T::one();
        let c1 = T::of(1.0 - self.beta1.powi(self.t as i32));
        let c2 = T::of(1.0 - self.beta2.powi(self.t as i32));
        let lr = T::of(self.lr);
        let eps = T::of(self.eps);
        for (i, g) in grads.iter().enumerate() {
            let p = params.get_mut(i).data_mut();
            let m = &mut self.m[i];
            let v = &mut self.v[i];
            for j in 0..g.len() {
                m[j] = b1 * m[j] + (one - b1) * g[j];
                v[j] = b2 * v[j] + (one - b2) * g[j] * g[j];
                let mh = m[j] / c1;
                let vh = v[j] / c2;
                p[j] -= lr * mh / (vh.sqrt() + eps);
            }
        }
        Ok(())
    }
}

/// Rescales `grads` in place so their joint L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_global_norm<T: Real>(grads: &mut [Vec<T>], max_norm: f64) -> f64 {
    let norm = grads.iter().flatten().map(|g| g.as_f64() * g.as_f64()).sum::<f64>().sqrt();
    if norm > max_norm && norm > 0.0 {
        let k = T::of(max_norm / norm);
        grads.iter_mut().flatten().for_each(|g| *g *= k);
    }
    norm
}
