use crate::error::{NnError, Result};
use crate::float::Float;
use crate::graph::ParamStore;

/// Hyper-parameters of SGD with momentum, L2 weight decay and a multi-step
/// learning-rate schedule.
#[derive(Debug, Clone, PartialEq)]
pub struct SgdConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    /// Epoch indices at which the rate is multiplied by `lr_decay_factor`.
    pub milestones: Vec<usize>,
    pub lr_decay_factor: f64,
}

impl Default for SgdConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-2,
            momentum: 0.9,
            weight_decay: 5e-4,
            milestones: Vec::new(),
            lr_decay_factor: 0.1,
        }
    }
}

impl SgdConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.learning_rate > 0.0
            && (0.0..1.0).contains(&self.momentum)
            && self.weight_decay >= 0.0
            && self.lr_decay_factor > 0.0
            && self.lr_decay_factor <= 1.0
            && self.milestones.windows(2).all(|w| w[0] <= w[1]);
        if ok {
            Ok(())
        } else {
            Err(NnError::Config(format!("invalid SGD settings {self:?}")))
        }
    }

    pub fn lr_at(&self, epoch: usize) -> f64 {
        let passed = self.milestones.iter().filter(|&&m| m <= epoch).count();
        self.learning_rate * self.lr_decay_factor.powi(passed as i32)
    }
}

#[derive(Debug, Clone)]
pub struct Sgd<T> {
    config: SgdConfig,
    velocity: Vec<Vec<T>>,
}

impl<T: Float> Sgd<T> {
    pub fn new(config: SgdConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            config,
            velocity: Vec::new(),
        })
    }

    pub fn config(&self) -> &SgdConfig {
        &self.config
    }

    /// `v <- momentum * v + grad + wd * param; param <- param - lr(epoch) * v`,
    /// then clears every gradient.
    pub fn step(&mut self, params: &mut ParamStore<T>, epoch: usize) -> Result<()> {
        if let Some(t) = params.tensors().iter().position(|t| t.grad().is_none()) {
            let id = params.ids().nth(t).expect("index in range");
            return Err(NnError::MissingGrad(params.name(id).to_string()));
        }
        if self.velocity.is_empty() {
            self.velocity = params.tensors().iter().map(|t| vec![T::zero(); t.len()]).collect();
        }
        let lr = T::from_f64(self.config.lr_at(epoch));
        let mu = T::from_f64(self.config.momentum);
        let wd = T::from_f64(self.config.weight_decay);
        for (t, v) in params.tensors_mut().iter_mut().zip(&mut self.velocity) {
            let g = t.take_grad().expect("checked above");
            for ((p, vi), gi) in t.data_mut().iter_mut().zip(v.iter_mut()).zip(g) {
                *vi = mu * *vi + gi + wd * *p;
                *p -= lr * *vi;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;

    fn one_param(v: f64, g: f64) -> ParamStore<f64> {
        let mut s = ParamStore::new();
        let id = s.add("p", Tensor::scalar(v));
        s.get_mut(id).accumulate_grad(&[g]).unwrap();
        s
    }

    #[test]
    fn plain_step() {
        let mut s = one_param(1.0, 1.0);
        let mut opt = Sgd::new(SgdConfig {
            learning_rate: 0.1,
            momentum: 0.0,
            weight_decay: 0.0,
            ..SgdConfig::default()
        })
        .unwrap();
        opt.step(&mut s, 0).unwrap();
        assert!((s.tensors()[0].data()[0] - 0.9).abs() < 1e-15);
        assert!(s.tensors()[0].grad().is_none(), "grads cleared");
    }

    #[test]
    fn multistep_schedule() {
        let cfg = SgdConfig {
            milestones: vec![10],
            lr_decay_factor: 0.1,
            ..SgdConfig::default()
        };
        assert_eq!(cfg.lr_at(9), 1e-2);
        assert!((cfg.lr_at(10) - 1e-3).abs() < 1e-18);
    }

    #[test]
    fn two_momentum_steps_match_hand_recurrence() {
        let (lr, mu, wd, grad) = (0.05, 0.9, 5e-4, 0.7);
        let mut s = one_param(2.0, grad);
        let mut opt = Sgd::new(SgdConfig {
            learning_rate: lr,
            momentum: mu,
            weight_decay: wd,
            ..SgdConfig::default()
        })
        .unwrap();
        opt.step(&mut s, 0).unwrap();
        s.tensors_mut()[0].accumulate_grad(&[grad]).unwrap();
        opt.step(&mut s, 1).unwrap();

        let mut p = 2.0f64;
        let v1 = grad + wd * p;
        p -= lr * v1;
        let v2 = mu * v1 + grad + wd * p;
        p -= lr * v2;
        assert_eq!(s.tensors()[0].data()[0], p);
    }

    #[test]
    fn missing_grad_is_error() {
        let mut s = ParamStore::<f64>::new();
        s.add("lonely", Tensor::scalar(1.0));
        let mut opt = Sgd::new(SgdConfig::default()).unwrap();
        let err = opt.step(&mut s, 0).unwrap_err();
        assert!(err.to_string().contains("lonely"));
    }
}
