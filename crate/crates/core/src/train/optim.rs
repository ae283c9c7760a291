use crate::model::{ModelParams, Scalar};

/// Adam with first and second moments kept in f64.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Updates taken so far.
    pub t: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new<T: Scalar>(params: &ModelParams<T>) -> Self {
        let sizes: Vec<usize> = params.tensors().iter().map(|(_, m)| m.as_slice().len()).collect();
        Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            v: sizes.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    /// One bias-corrected update with step size `lr`.
    pub fn step<T: Scalar>(&mut self, params: &mut ModelParams<T>, grad: &ModelParams<T>, lr: f64) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t as i32);
        let c2 = 1.0 - self.beta2.powi(self.t as i32);
        let tensors = params.tensors_mut().into_iter().zip(grad.tensors());
        for (k, ((_, p), (_, g))) in tensors.enumerate() {
            let (m, v) = (&mut self.m[k], &mut self.v[k]);
            for (i, (x, gi)) in p.as_mut_slice().iter_mut().zip(g.as_slice()).enumerate() {
                let gi = gi.to_f64();
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * gi;
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * gi * gi;
                let step = lr * (m[i] / c1) / ((v[i] / c2).sqrt() + self.eps);
                *x = T::from_f64(x.to_f64() - step);
            }
        }
    }
}
