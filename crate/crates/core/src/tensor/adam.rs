use super::{ParamStore, Scalar, Tensor};

#[derive(Clone, Copy, Debug)]
pub struct AdamConfig<T> {
    pub lr: T,
    pub beta1: T,
    pub beta2: T,
    pub eps: T,
    /// L2 coefficient; `2 * weight_decay * param` is added to each gradient.
    pub weight_decay: T,
}

impl<T: Scalar> AdamConfig<T> {
    pub fn new(lr: T, weight_decay: T) -> Self {
        Self {
            lr,
            beta1: T::lit(0.9),
            beta2: T::lit(0.999),
            eps: T::lit(1e-8),
            weight_decay,
        }
    }
}

/// First and second moments mirroring a [`ParamStore`].
#[derive(Clone, Debug)]
pub struct AdamState<T> {
    m: Vec<Tensor<T>>,
    v: Vec<Tensor<T>>,
    step: u64,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(params: &ParamStore<T>) -> Self {
        let zeros: Vec<_> = params
            .tensors()
            .map(|t| Tensor::zeros(t.rows(), t.cols()))
            .collect();
        Self {
            m: zeros.clone(),
            v: zeros,
            step: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// One bias-corrected Adam update. `grads[i]` pairs with parameter `i`.
    pub fn step(&mut self, params: &mut ParamStore<T>, grads: &[Tensor<T>], cfg: &AdamConfig<T>) {
        assert_eq!(grads.len(), params.len(), "one gradient per parameter");
        self.step += 1;
        let t = self.step as i32;
        let c1 = T::one() - cfg.beta1.powi(t);
        let c2 = T::one() - cfg.beta2.powi(t);
        let two_l2 = T::lit(2.0) * cfg.weight_decay;
        for (i, g) in grads.iter().enumerate() {
            let p = params.tensor_mut_at(i);
            let (m, v) = (&mut self.m[i], &mut self.v[i]);
            for (((w, &gr), mi), vi) in p
                .data_mut()
                .iter_mut()
                .zip(g.data())
                .zip(m.data_mut())
                .zip(v.data_mut())
            {
                let gr = gr + two_l2 * *w;
                *mi = cfg.beta1 * *mi + (T::one() - cfg.beta1) * gr;
                *vi = cfg.beta2 * *vi + (T::one() - cfg.beta2) * gr * gr;
                let mhat = *mi / c1;
                let vhat = *vi / c2;
                *w = *w - cfg.lr * mhat / (vhat.sqrt() + cfg.eps);
            }
        }
    }
}
