use super::{ModelParams, Real};

/// Adam with bias-corrected moment estimates.
#[derive(Debug, Clone)]
pub struct Adam<F> {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: i32,
    m: ModelParams<F>,
    v: ModelParams<F>,
}

impl<F: Real> Adam<F> {
    pub fn new(
        params: &ModelParams<F>,
        learning_rate: f64,
        beta1: f64,
        beta2: f64,
        eps: f64,
    ) -> Self {
        Adam {
            learning_rate,
            beta1,
            beta2,
            eps,
            step: 0,
            m: params.zeros_like(),
            v: params.zeros_like(),
        }
    }

    pub fn steps(&self) -> i32 {
        self.step
    }

    /// Apply one update from `grads`.
    pub fn step(&mut self, params: &mut ModelParams<F>, grads: &ModelParams<F>) {
        self.step += 1;
        let b1 = F::lit(self.beta1);
        let b2 = F::lit(self.beta2);
        let one = F::one();
        let c1 = F::lit(1.0 - crate::float::Float::powi(self.beta1, self.step));
        let c2 = F::lit(1.0 - crate::float::Float::powi(self.beta2, self.step));
        let lr = F::lit(self.learning_rate);
        let eps = F::lit(self.eps);
        let ps = params.tensors_mut();
        let ms = self.m.tensors_mut();
        let vs = self.v.tensors_mut();
        let gs = grads.tensors();
        for (((p, m), v), g) in ps.into_iter().zip(ms).zip(vs).zip(gs) {
            for i in 0..p.data.len() {
                let gi = g.data[i];
                m.data[i] = b1 * m.data[i] + (one - b1) * gi;
                v.data[i] = b2 * v.data[i] + (one - b2) * gi * gi;
                let mh = m.data[i] / c1;
                let vh = v.data[i] / c2;
                p.data[i] -= lr * mh / (vh.sqrt() + eps);
            }
        }
    }
}
