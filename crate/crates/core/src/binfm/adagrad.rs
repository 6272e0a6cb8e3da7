use crate::scalar::Scalar;

/// Per-coordinate Adagrad accumulators for the linear and factor proxies.
#[derive(Clone, Debug, PartialEq)]
pub struct AdagradState<T> {
    pub s_w: Vec<T>,
    pub s_v: Vec<T>,
    pub eta: T,
    pub eps: T,
}

impl<T: Scalar> AdagradState<T> {
    pub fn new(p: usize, m: usize, eta: T, eps: T) -> Self {
        assert!(eps > T::zero(), "Adagrad eps must be positive");
        AdagradState {
            s_w: vec![T::zero(); p],
            s_v: vec![T::zero(); p * m],
            eta,
            eps,
        }
    }

    #[inline]
    pub fn update_w(&mut self, j: usize, param: &mut T, grad: T) {
        adagrad_step(&mut self.s_w[j], param, grad, self.eta, self.eps);
    }

    /// `idx` is the row-major position `j * m + f`.
    #[inline]
    pub fn update_v(&mut self, idx: usize, param: &mut T, grad: T) {
        adagrad_step(&mut self.s_v[idx], param, grad, self.eta, self.eps);
    }
}

/// `acc += g^2; param -= eta * g / sqrt(acc + eps)`.
#[inline]
pub fn adagrad_step<T: Scalar>(acc: &mut T, param: &mut T, grad: T, eta: T, eps: T) {
    *acc += grad * grad;
    *param -= eta * grad / (*acc + eps).sqrt();
}
