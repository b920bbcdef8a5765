use crate::error::{NumError, Result};
use crate::params::ParamStore;
use crate::scalar::Real;
use crate::tensor::Tensor;

/// Bias-corrected Adam over one parameter group.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam<T> {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    first: Vec<Tensor<T>>,
    second: Vec<Tensor<T>>,
}

impl<T: Real> Adam<T> {
    /// Zero moments shaped like every parameter in `store`.
    pub fn new(store: &ParamStore<T>, lr: f64) -> Self {
        let zeros: Vec<Tensor<T>> = store.iter().map(|(_, _, t)| Tensor::zeros(t.shape())).collect();
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            first: zeros.clone(),
            second: zeros,
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn moments(&self) -> (&[Tensor<T>], &[Tensor<T>]) {
        (&self.first, &self.second)
    }

    /// Restores a saved state. Moment shapes must match the current ones.
    pub fn restore(&mut self, step: u64, first: Vec<Tensor<T>>, second: Vec<Tensor<T>>) -> Result<()> {
        if first.len() != self.first.len() || second.len() != self.second.len() {
            return Err(NumError::Checkpoint(format!(
                "optimizer holds {} moments, checkpoint has {}",
                self.first.len(),
                first.len()
            )));
        }
        for (cur, new) in self.first.iter().chain(&self.second).zip(first.iter().chain(&second)) {
            if cur.shape() != new.shape() {
                return Err(NumError::ShapeMismatch {
                    op: "Adam::restore",
                    left: cur.shape().to_vec(),
                    right: new.shape().to_vec(),
                });
            }
        }
        self.step = step;
        self.first = first;
        self.second = second;
        Ok(())
    }

    /// Applies one update. Gradients are validated before anything is
    /// modified, so a non-finite gradient leaves parameters and state intact.
    pub fn step(&mut self, store: &mut ParamStore<T>, grads: &[Tensor<T>]) -> Result<()> {
        if grads.len() != store.len() {
            return Err(NumError::InvalidArgument {
                op: "Adam::step",
                reason: format!("{} gradients for {} parameters", grads.len(), store.len()),
            });
        }
        for (id, g) in store.ids().zip(grads) {
            if g.shape() != store.get(id).shape() {
                return Err(NumError::ShapeMismatch {
                    op: "Adam::step",
                    left: store.get(id).shape().to_vec(),
                    right: g.shape().to_vec(),
                });
            }
            if !g.all_finite() {
                return Err(NumError::NonFiniteGradient(store.name(id).to_string()));
            }
        }

        self.step += 1;
        let t = self.step as i32;
        let b1 = T::lit(self.beta1);
        let b2 = T::lit(self.beta2);
        let one = T::one();
        let bias1 = T::lit(1.0 - self.beta1.powi(t));
        let bias2 = T::lit(1.0 - self.beta2.powi(t));
        let lr = T::lit(self.lr);
        let eps = T::lit(self.eps);

        for (k, id) in store.ids().collect::<Vec<_>>().into_iter().enumerate() {
            let g = grads[k].data();
            let m = self.first[k].data_mut();
            let v = self.second[k].data_mut();
            let p = store.get_mut(id).data_mut();
            for j in 0..p.len() {
                m[j] = b1 * m[j] + (one - b1) * g[j];
                v[j] = b2 * v[j] + (one - b2) * g[j] * g[j];
                let m_hat = m[j] / bias1;
                let v_hat = v[j] / bias2;
                p[j] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tape::Tape;

    fn single(x: f64) -> (ParamStore<f64>, crate::ParamId) {
        let mut store = ParamStore::new();
        let id = store.add("x", Tensor::scalar(x));
        (store, id)
    }

    #[test]
    fn first_step_moves_by_lr_times_sign() {
        for g in [3.0, -0.25] {
            let (mut store, id) = single(1.0);
            let mut adam = Adam::new(&store, 0.01);
            adam.step(&mut store, &[Tensor::scalar(g)]).unwrap();
            let delta = store.get(id).item() - 1.0;
            assert!((delta + 0.01 * f64::signum(g)).abs() < 1e-8, "{delta}");
        }
    }

    #[test]
    fn zero_gradient_leaves_param() {
        let (mut store, id) = single(1.5);
        let mut adam = Adam::new(&store, 0.01);
        adam.step(&mut store, &[Tensor::scalar(0.0)]).unwrap();
        assert_eq!(store.get(id).item(), 1.5);
    }

    #[test]
    fn nan_gradient_aborts_without_update() {
        let (mut store, id) = single(1.5);
        let mut adam = Adam::new(&store, 0.01);
        let err = adam.step(&mut store, &[Tensor::scalar(f64::NAN)]).unwrap_err();
        assert!(err.to_string().contains("`x`"));
        assert_eq!(store.get(id).item(), 1.5);
        assert_eq!(adam.steps(), 0);
    }

    #[test]
    fn minimizes_square() {
        let (mut store, id) = single(1.0);
        let mut adam = Adam::new(&store, 0.1);
        for _ in 0..100 {
            let mut tape = Tape::new();
            let x = tape.param(&store, id);
            let loss = tape.square(x);
            let grads = tape.backward(loss).unwrap().for_store(&store);
            adam.step(&mut store, &grads).unwrap();
        }
        assert!(store.get(id).item().abs() < 0.05, "{}", store.get(id).item());
    }
}
