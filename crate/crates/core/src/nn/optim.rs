use crate::error::{Error, Result};

use super::{Param, Real};

/// Stochastic gradient descent with classical momentum:
/// `v ← momentum·v − lr·g`, `p ← p + v`.
#[derive(Debug, Clone)]
pub struct Sgd<T> {
    pub lr: T,
    pub momentum: T,
    velocity: Vec<Param<T>>,
}

impl<T: Real> Sgd<T> {
    pub fn new(lr: T, momentum: T, params: &[Param<T>]) -> Result<Self> {
        if !(lr >= T::zero()) || !lr.is_finite() {
            return Err(Error::Argument(format!("learning rate {lr} must be finite and >= 0")));
        }
        if !(momentum >= T::zero() && momentum < T::one()) {
            return Err(Error::Argument(format!("momentum {momentum} outside [0, 1)")));
        }
        Ok(Sgd {
            lr,
            momentum,
            velocity: params.iter().map(Param::zeros_like).collect(),
        })
    }

    pub fn velocity(&self) -> &[Param<T>] {
        &self.velocity
    }

    /// Applies one update. Non-finite gradients leave parameters untouched
    /// and return an error naming the offending layer.
    pub fn step(&mut self, params: &mut [Param<T>], grads: &[Param<T>]) -> Result<()> {
        if params.len() != grads.len() || params.len() != self.velocity.len() {
            return Err(Error::Shape("optimizer state does not match parameters".into()));
        }
        for (i, g) in grads.iter().enumerate() {
            if !(g.weight.all_finite() && g.bias.all_finite()) {
                return Err(Error::NonFinite {
                    epoch: 0,
                    batch: 0,
                    what: format!("gradient of parameter set {i}"),
                });
            }
        }
        for ((p, g), v) in params.iter_mut().zip(grads).zip(self.velocity.iter_mut()) {
            for ((pt, gt), vt) in p.tensors_mut().into_iter().zip(g.tensors()).zip(v.tensors_mut()) {
                if pt.dims() != gt.dims() {
                    return Err(Error::Shape(format!(
                        "gradient dims {:?} do not match parameter {:?}",
                        gt.dims(),
                        pt.dims()
                    )));
                }
                for ((pv, &gv), vv) in pt.data_mut().iter_mut().zip(gt.data()).zip(vt.data_mut()) {
                    *vv = self.momentum * *vv - self.lr * gv;
                    *pv += *vv;
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Tensor;

    fn scalar_param(v: f64) -> Param<f64> {
        Param {
            weight: Tensor::new(vec![1], vec![v]).unwrap(),
            bias: Tensor::new(vec![1], vec![0.0]).unwrap(),
        }
    }

    #[test]
    fn plain_step() {
        let mut p = vec![scalar_param(1.0)];
        let g = vec![scalar_param(2.0)];
        let mut opt = Sgd::new(0.1, 0.0, &p).unwrap();
        opt.step(&mut p, &g).unwrap();
        assert!((p[0].weight.data()[0] - 0.8).abs() < 1e-15);
    }

    #[test]
    fn zero_gradient_is_a_no_op() {
        let mut p = vec![scalar_param(0.37)];
        let before = p.clone();
        let mut opt = Sgd::new(0.1, 0.9, &p).unwrap();
        opt.step(&mut p, &[scalar_param(0.0)]).unwrap();
        assert_eq!(p, before);
    }

    #[test]
    fn momentum_recurrence() {
        let mut p = vec![scalar_param(0.0)];
        let g = vec![scalar_param(1.0)];
        let mut opt = Sgd::new(0.1, 0.9, &p).unwrap();
        opt.step(&mut p, &g).unwrap();
        assert!((p[0].weight.data()[0] + 0.1).abs() < 1e-15);
        opt.step(&mut p, &g).unwrap();
        assert!((p[0].weight.data()[0] + 0.29).abs() < 1e-15);
    }

    #[test]
    fn non_finite_gradient_aborts() {
        let mut p = vec![scalar_param(1.0)];
        let mut opt = Sgd::new(0.1, 0.9, &p).unwrap();
        assert!(matches!(
            opt.step(&mut p, &[scalar_param(f64::NAN)]),
            Err(Error::NonFinite { .. })
        ));
        assert_eq!(p[0].weight.data()[0], 1.0);
    }
}
