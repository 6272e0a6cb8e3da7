//! Straight-through gradients for the proxy variables.
//!
//! The sign function is treated as the identity on `[-1, 1]` and as constant
//! outside it, so every gradient carries the indicator `|proxy| <= 1`. The
//! indicator multiplies the regularizer term as well: a clipped coordinate
//! does not move at all.

use super::model::BinFmModel;
use crate::scalar::Scalar;

#[inline]
fn clip_indicator<T: Scalar>(proxy: T) -> bool {
    proxy.abs() <= T::one()
}

/// `d f / d v^b_jf` for a one-hot input with `v^b` relaxed to a real value:
/// `beta^2 * (sum_f - v_jf)`, where `sum_f` is the cached per-factor sum.
#[inline]
pub fn interaction_partial<T: Scalar>(beta: T, cached_sum_f: T, v_jf: T) -> T {
    beta * beta * (cached_sum_f - v_jf)
}

impl<T: Scalar> BinFmModel<T> {
    /// Gradient for `proxy_w[j]`, where `j` is an active index of the sample.
    #[inline]
    pub fn ste_grad_w(&self, dldf: T, lambda1: T, j: usize) -> T {
        if !clip_indicator(self.proxy_w[j]) {
            return T::zero();
        }
        let wb = self.sign_w[j].value::<T>();
        dldf * self.alpha + lambda1 * self.alpha * wb
    }

    /// Gradient for `proxy_v[j, f]` given the cached sum of factor `f`.
    #[inline]
    pub fn ste_grad_v(&self, dldf: T, lambda2: T, j: usize, f: usize, cached_sum_f: T) -> T {
        let idx = j * self.m + f;
        if !clip_indicator(self.proxy_v[idx]) {
            return T::zero();
        }
        let vb = self.sign_v[idx].value::<T>();
        dldf * interaction_partial(self.beta, cached_sum_f, vb) + lambda2 * self.beta * vb
    }
}
