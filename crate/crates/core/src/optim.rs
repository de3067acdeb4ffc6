//! AdamW with a cosine learning-rate schedule.

use numkit::{ParamStore, Tensor};

use crate::error::{Error, Result};

/// `lr0 · ½ · (1 + cos(π · step / total))`.
pub fn cosine_lr(step: usize, total_steps: usize, lr0: f64) -> f64 {
    if total_steps == 0 {
        return lr0;
    }
    let frac = step.min(total_steps) as f64 / total_steps as f64;
    lr0 * 0.5 * (1.0 + (std::f64::consts::PI * frac).cos())
}

/// Decoupled weight decay Adam. Moments and step counts are tracked per
/// parameter; parameters without a gradient in a step are left untouched.
#[derive(Clone, Debug)]
pub struct AdamW {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
    steps: Vec<u64>,
}

impl AdamW {
    pub fn new(store: &ParamStore, weight_decay: f64) -> Self {
        let zeros: Vec<Tensor> = store
            .iter()
            .map(|(_, t)| Tensor::zeros(t.rows(), t.cols()))
            .collect();
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay,
            m: zeros.clone(),
            v: zeros,
            steps: vec![0; store.len()],
        }
    }

    pub fn step(
        &mut self,
        store: &mut ParamStore,
        grads: &[Option<Tensor>],
        lr: f64,
    ) -> Result<()> {
        if grads.len() != store.len() || self.m.len() != store.len() {
            return Err(Error::Data(format!(
                "optimizer registry mismatch: {} gradients, {} parameters, {} moment slots",
                grads.len(),
                store.len(),
                self.m.len()
            )));
        }
        let ids: Vec<_> = store.ids().collect();
        for (i, (id, g)) in ids.into_iter().zip(grads).enumerate() {
            let Some(g) = g else { continue };
            let p = store.get_mut(id);
            if p.shape() != g.shape() {
                return Err(Error::Data(format!(
                    "gradient shape {:?} for parameter of shape {:?}",
                    g.shape(),
                    p.shape()
                )));
            }
            self.steps[i] += 1;
            let t = self.steps[i] as i32;
            let c1 = 1.0 - self.beta1.powi(t);
            let c2 = 1.0 - self.beta2.powi(t);
            let decay = 1.0 - lr * self.weight_decay;
            let (m, v) = (self.m[i].data_mut(), self.v[i].data_mut());
            for (((x, &gj), mj), vj) in p.data_mut().iter_mut().zip(g.data()).zip(m).zip(v) {
                *mj = self.beta1 * *mj + (1.0 - self.beta1) * gj;
                *vj = self.beta2 * *vj + (1.0 - self.beta2) * gj * gj;
                let m_hat = *mj / c1;
                let v_hat = *vj / c2;
                *x = *x * decay - lr * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cosine_endpoints() {
        assert_eq!(cosine_lr(0, 100, 2e-4), 2e-4);
        assert!(cosine_lr(100, 100, 2e-4).abs() < 1e-20);
        assert!((cosine_lr(50, 100, 2e-4) - 1e-4).abs() < 1e-18);
    }

    #[test]
    fn one_step_on_square_matches_hand_update() {
        let mut store = ParamStore::new();
        store.add("x", Tensor::scalar(1.0)).unwrap();
        let mut opt = AdamW::new(&store, 0.01);
        let lr = 2e-4;
        // f(x) = x², f'(1) = 2; m̂ = 2, v̂ = 4
        opt.step(&mut store, &[Some(Tensor::scalar(2.0))], lr)
            .unwrap();
        let expect = 1.0 * (1.0 - lr * 0.01) - lr * 2.0 / (2.0 + 1e-8);
        let got = store.get(store.id("x").unwrap()).item();
        assert!((got - expect).abs() < 1e-15, "{got} vs {expect}");
    }

    #[test]
    fn missing_gradient_leaves_parameter() {
        let mut store = ParamStore::new();
        store.add("a", Tensor::scalar(3.0)).unwrap();
        store.add("b", Tensor::scalar(3.0)).unwrap();
        let mut opt = AdamW::new(&store, 0.5);
        opt.step(&mut store, &[None, Some(Tensor::scalar(1.0))], 0.1)
            .unwrap();
        assert_eq!(store.get(store.id("a").unwrap()).item(), 3.0);
        assert!(store.get(store.id("b").unwrap()).item() < 3.0);
        assert!(opt.step(&mut store, &[None], 0.1).is_err());
    }
}
