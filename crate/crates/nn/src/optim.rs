use crate::error::{NnError, Result};
use crate::float::Float;
use crate::network::Network;
use crate::tensor::Tensor;

/// Mini-batch SGD with classical momentum:
/// `v <- momentum * v + g`, `theta <- theta - lr * v`.
///
/// Velocity buffers are created on the first step and persist across calls.
#[derive(Debug, Clone)]
pub struct Sgd<T> {
    lr: f64,
    momentum: f64,
    velocity: Vec<Vec<T>>,
}

impl<T: Float> Sgd<T> {
    pub fn new(lr: f64, momentum: f64) -> Result<Self> {
        if !(lr >= 0.0 && lr.is_finite()) {
            return Err(NnError::Config(format!(
                "learning rate must be >= 0, got {lr}"
            )));
        }
        if !(0.0..1.0).contains(&momentum) {
            return Err(NnError::Config(format!(
                "momentum must lie in [0, 1), got {momentum}"
            )));
        }
        Ok(Sgd {
            lr,
            momentum,
            velocity: Vec::new(),
        })
    }

    pub fn lr(&self) -> f64 {
        self.lr
    }

    pub fn set_lr(&mut self, lr: f64) {
        self.lr = lr;
    }

    pub fn momentum(&self) -> f64 {
        self.momentum
    }

    /// Drops accumulated velocity.
    pub fn reset(&mut self) {
        self.velocity.clear();
    }

    /// Applies one update to every network parameter using its accumulated gradient.
    pub fn step(&mut self, net: &mut Network<T>) -> Result<()> {
        if let Some((name, _)) = net
            .named_params()
            .into_iter()
            .find(|(_, p)| p.grad().is_some_and(|g| g.iter().any(|v| !v.is_finite())))
        {
            return Err(NnError::NonFinite(name));
        }
        self.update(net.params_mut())
    }

    /// Applies one update to an explicit parameter list (same order every call).
    pub fn update(&mut self, mut params: Vec<&mut Tensor<T>>) -> Result<()> {
        if self.velocity.is_empty() {
            self.velocity = params.iter().map(|p| vec![T::zero(); p.len()]).collect();
        }
        if self.velocity.len() != params.len()
            || self
                .velocity
                .iter()
                .zip(&params)
                .any(|(v, p)| v.len() != p.len())
        {
            return Err(NnError::Usage(
                "optimizer reused with a different parameter layout".into(),
            ));
        }
        for (i, p) in params.iter().enumerate() {
            let g = p
                .grad()
                .ok_or_else(|| NnError::Usage(format!("parameter #{i} has no gradient buffer")))?;
            if g.iter().any(|v| !v.is_finite()) {
                return Err(NnError::NonFinite(format!("#{i}")));
            }
        }
        let lr = T::of(self.lr);
        let mu = T::of(self.momentum);
        for (p, vel) in params.iter_mut().zip(self.velocity.iter_mut()) {
            let (data, grad) = p.data_and_grad_mut();
            let grad = grad.expect("checked above");
            for ((theta, v), &g) in data.iter_mut().zip(vel.iter_mut()).zip(grad.iter()) {
                *v = mu * *v + g;
                *theta -= lr * *v;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(theta: f64, grad: f64) -> Tensor<f64> {
        let mut t = Tensor::parameter(&[1]);
        t.data_mut()[0] = theta;
        t.grad_mut().unwrap()[0] = grad;
        t
    }

    #[test]
    fn plain_step() {
        let mut p = scalar(0.0, 1.0);
        let mut opt = Sgd::new(0.1, 0.0).unwrap();
        opt.update(vec![&mut p]).unwrap();
        assert!((p.data()[0] + 0.1).abs() < 1e-15);
    }

    #[test]
    fn zero_lr_is_a_no_op() {
        let mut p = scalar(0.7, 3.0);
        let mut opt = Sgd::new(0.0, 0.9).unwrap();
        opt.update(vec![&mut p]).unwrap();
        opt.update(vec![&mut p]).unwrap();
        assert_eq!(p.data()[0], 0.7);
    }

    #[test]
    fn momentum_accumulates() {
        // v1 = 1, theta1 = -1; v2 = 0.9 + 1 = 1.9, theta2 = -2.9
        let mut p = scalar(0.0, 1.0);
        let mut opt = Sgd::new(1.0, 0.9).unwrap();
        opt.update(vec![&mut p]).unwrap();
        opt.update(vec![&mut p]).unwrap();
        assert!((p.data()[0] + 2.9).abs() < 1e-12);
    }

    #[test]
    fn non_finite_gradient_aborts_without_touching_params() {
        let mut p = scalar(1.0, f64::NAN);
        let mut opt = Sgd::new(0.1, 0.0).unwrap();
        assert!(matches!(
            opt.update(vec![&mut p]),
            Err(NnError::NonFinite(_))
        ));
        assert_eq!(p.data()[0], 1.0);
    }

    #[test]
    fn rejects_bad_hyperparameters() {
        assert!(Sgd::<f32>::new(-0.1, 0.0).is_err());
        assert!(Sgd::<f32>::new(0.1, 1.0).is_err());
    }
}
