use super::{ParamSet, Scalar};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamConfig {
    /// Betas (0, 0.99) and epsilon 1e-8, as used for all three networks.
    pub fn with_lr(lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.0,
            beta2: 0.99,
            eps: 1e-8,
        }
    }
}

/// Adam with bias correction, one moment pair per parameter tensor.
#[derive(Debug, Clone)]
pub struct Adam<T> {
    pub config: AdamConfig,
    m: Vec<Vec<T>>,
    v: Vec<Vec<T>>,
    step: u64,
}

impl<T: Scalar> Adam<T> {
    pub fn new(config: AdamConfig, params: &ParamSet<T>) -> Self {
        let zeros = |i: usize| vec![T::zero(); params.get(i).len()];
        Self {
            config,
            m: (0..params.len()).map(zeros).collect(),
            v: (0..params.len()).map(zeros).collect(),
            step: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// One update. `grads[i]` pairs with parameter `i`; `None` leaves that
    /// parameter and its moments untouched.
    pub fn step(&mut self, params: &mut ParamSet<T>, grads: &[Option<&[T]>]) -> Result<()> {
        if grads.len() != params.len() || self.m.len() != params.len() {
            return Err(Error::ShapeMismatch {
                expected: vec![params.len()],
                actual: vec![grads.len()],
            });
        }
        for (i, g) in grads.iter().enumerate() {
            if let Some(g) = g {
                if g.len() != params.get(i).len() {
                    return Err(Error::ShapeMismatch {
                        expected: params.get(i).shape().to_vec(),
                        actual: vec![g.len()],
                    });
                }
            }
        }
        self.step += 1;
        let c = self.config;
        let t = self.step as i32;
        let bc1 = 1.0 - c.beta1.powi(t);
        let bc2 = 1.0 - c.beta2.powi(t);
        let (b1, b2) = (T::lit(c.beta1), T::lit(c.beta2));
        let (one_b1, one_b2) = (T::lit(1.0 - c.beta1), T::lit(1.0 - c.beta2));
        let step_size = T::lit(c.lr / bc1);
        let inv_bc2 = T::lit(1.0 / bc2);
        let eps = T::lit(c.eps);
        for (i, g) in grads.iter().enumerate() {
            let Some(g) = g else { continue };
            let (m, v) = (&mut self.m[i], &mut self.v[i]);
            for (((p, &gv), mv), vv) in params.get_mut(i).data_mut().iter_mut().zip(*g).zip(m.iter_mut()).zip(v.iter_mut()) {
                *mv = b1 * *mv + one_b1 * gv;
                *vv = b2 * *vv + one_b2 * gv * gv;
                *p = *p - step_size * *mv / ((*vv * inv_bc2).sqrt() + eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::Tensor;

    fn single(values: Vec<f64>) -> ParamSet<f64> {
        let mut p = ParamSet::new();
        let n = values.len();
        p.add("x", Tensor::new(vec![n], values).unwrap());
        p
    }

    #[test]
    fn limit_case_is_sign_descent() {
        let mut p = single(vec![1.0, 1.0]);
        let cfg = AdamConfig {
            lr: 0.01,
            beta1: 0.0,
            beta2: 0.0,
            eps: 1e-300,
        };
        let mut adam = Adam::new(cfg, &p);
        adam.step(&mut p, &[Some(&[3.0, -0.002])]).unwrap();
        assert!((p.get(0).data()[0] - 0.99).abs() < 1e-12);
        assert!((p.get(0).data()[1] - 1.01).abs() < 1e-12);
    }

    #[test]
    fn quadratic_loss_decreases() {
        let a = [1.0, 4.0, 0.5];
        let mut p = single(vec![5.0, -3.0, 2.0]);
        let mut adam = Adam::new(AdamConfig::with_lr(1e-2), &p);
        let loss = |x: &[f64]| x.iter().zip(&a).map(|(x, a)| a * x * x).sum::<f64>();
        let mut prev = loss(p.get(0).data());
        for step in 0..200 {
            let g: Vec<f64> = p.get(0).data().iter().zip(&a).map(|(x, a)| 2.0 * a * x).collect();
            adam.step(&mut p, &[Some(&g)]).unwrap();
            let now = loss(p.get(0).data());
            if step >= 5 {
                assert!(now < prev, "step {step}: {now} >= {prev}");
            }
            prev = now;
        }
        assert_eq!(adam.steps(), 200);
    }

    #[test]
    fn rejects_mismatched_gradients() {
        let mut p = single(vec![1.0]);
        let mut adam = Adam::new(AdamConfig::with_lr(1e-3), &p);
        assert!(adam.step(&mut p, &[Some(&[1.0, 2.0])]).is_err());
        assert!(adam.step(&mut p, &[]).is_err());
    }
}
