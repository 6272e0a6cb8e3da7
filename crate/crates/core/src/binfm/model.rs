use rand::Rng;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// A binary coefficient.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[repr(i8)]
pub enum Sign {
    Minus = -1,
    Plus = 1,
}

impl Sign {
    /// `+1` for `v >= 0`, `-1` otherwise.
    #[inline]
    pub fn of<T: Scalar>(v: T) -> Sign {
        if v >= T::zero() {
            Sign::Plus
        } else {
            Sign::Minus
        }
    }

    #[inline]
    pub fn value<T: Scalar>(self) -> T {
        match self {
            Sign::Plus => T::one(),
            Sign::Minus => -T::one(),
        }
    }

    #[inline]
    pub fn as_i64(self) -> i64 {
        self as i8 as i64
    }

    #[inline]
    pub fn is_plus(self) -> bool {
        self == Sign::Plus
    }
}

/// Element-wise sign with `sign(0) = +1`.
pub fn quantize_sign<T: Scalar>(v: &[T]) -> Vec<Sign> {
    v.iter().map(|&x| Sign::of(x)).collect()
}

/// Mean absolute value, the least-squares scale for `v ~ s * sign(v)`.
/// All-zero input yields the floor `1e-8`.
pub fn mean_abs<T: Scalar>(v: &[T]) -> T {
    let floor = T::lit(1e-8);
    if v.is_empty() {
        return floor;
    }
    let mean = v.iter().map(|x| x.abs()).sum::<T>() / T::lit(v.len() as f64);
    if mean > T::zero() {
        mean
    } else {
        floor
    }
}

/// Binarized FM during training: proxies, their signs and the two scales.
#[derive(Clone, Debug, PartialEq)]
pub struct BinFmModel<T> {
    pub(crate) p: usize,
    pub(crate) m: usize,
    pub(crate) proxy_w: Vec<T>,
    /// `p x m`, row-major.
    pub(crate) proxy_v: Vec<T>,
    pub(crate) sign_w: Vec<Sign>,
    pub(crate) sign_v: Vec<Sign>,
    pub(crate) alpha: T,
    pub(crate) beta: T,
}

impl<T: Scalar> BinFmModel<T> {
    /// Builds a model from proxies; signs follow the proxies and both scales start at 1.
    pub fn from_proxies(p: usize, m: usize, proxy_w: Vec<T>, proxy_v: Vec<T>) -> Result<Self> {
        if m == 0 {
            return Err(Error::invalid("rank must be >= 1"));
        }
        if proxy_w.len() != p || proxy_v.len() != p * m {
            return Err(Error::DimensionMismatch(format!(
                "expected proxies of length {p} and {}, got {} and {}",
                p * m,
                proxy_w.len(),
                proxy_v.len()
            )));
        }
        if proxy_w.iter().chain(&proxy_v).any(|x| !x.is_finite()) {
            return Err(Error::invalid("proxies must be finite"));
        }
        Ok(BinFmModel {
            p,
            m,
            sign_w: quantize_sign(&proxy_w),
            sign_v: quantize_sign(&proxy_v),
            proxy_w,
            proxy_v,
            alpha: T::one(),
            beta: T::one(),
        })
    }

    /// Zero linear proxies; factor proxies uniform in `[-scale, scale]`.
    pub fn init(p: usize, m: usize, scale: T, rng: &mut impl Rng) -> Self {
        let s = scale.to_f64_lossy();
        let proxy_v = (0..p * m)
            .map(|_| T::lit(rng.random_range(-s..=s)))
            .collect();
        Self::from_proxies(p, m, vec![T::zero(); p], proxy_v).expect("dimensions are consistent")
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn rank(&self) -> usize {
        self.m
    }

    pub fn alpha(&self) -> T {
        self.alpha
    }

    pub fn beta(&self) -> T {
        self.beta
    }

    pub fn set_scales(&mut self, alpha: T, beta: T) {
        self.alpha = alpha;
        self.beta = beta;
    }

    pub fn proxy_w(&self) -> &[T] {
        &self.proxy_w
    }

    pub fn proxy_v(&self) -> &[T] {
        &self.proxy_v
    }

    pub fn sign_w(&self) -> &[Sign] {
        &self.sign_w
    }

    pub fn sign_v(&self) -> &[Sign] {
        &self.sign_v
    }

    #[inline]
    pub fn sign_v_row(&self, j: usize) -> &[Sign] {
        &self.sign_v[j * self.m..(j + 1) * self.m]
    }

    /// Recomputes `alpha` and `beta` as mean absolute proxy values.
    pub fn refresh_scaling(&mut self) -> (T, T) {
        self.alpha = mean_abs(&self.proxy_w);
        self.beta = mean_abs(&self.proxy_v);
        (self.alpha, self.beta)
    }

    /// True when every stored sign equals the sign of its proxy.
    pub fn signs_consistent(&self) -> bool {
        self.sign_w
            .iter()
            .zip(&self.proxy_w)
            .all(|(&s, &x)| s == Sign::of(x))
            && self
                .sign_v
                .iter()
                .zip(&self.proxy_v)
                .all(|(&s, &x)| s == Sign::of(x))
    }

    /// Per-factor sums of `V^b` over the active indices, as integers.
    pub fn factor_sums(&self, active: &[usize], sums: &mut [i64]) {
        sums.fill(0);
        for &j in active {
            for (s, &sign) in sums.iter_mut().zip(self.sign_v_row(j)) {
                *s += sign.as_i64();
            }
        }
    }

    /// Score of a one-hot sample from its active indices.
    ///
    /// Uses `sum_j (v^b_jf)^2 z_j^2 = d` for ±1 factors and 0/1 inputs.
    pub fn predict(&self, active: &[usize]) -> T {
        let mut sums = vec![0i64; self.m];
        self.factor_sums(active, &mut sums);
        self.predict_with_sums(active, &sums)
    }

    pub fn predict_with_sums(&self, active: &[usize], sums: &[i64]) -> T {
        let d = active.len() as i64;
        let linear: i64 = active.iter().map(|&j| self.sign_w[j].as_i64()).sum();
        let interaction: i64 = sums.iter().map(|&s| s * s - d).sum();
        self.alpha * T::lit(linear as f64)
            + T::lit(0.5) * self.beta * self.beta * T::lit(interaction as f64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// `alpha * sum w^b + beta^2 * sum_{j<k} <v^b_j, v^b_k>` over the active set.
    fn brute_force(model: &BinFmModel<f64>, active: &[usize]) -> f64 {
        let mut f: f64 = active
            .iter()
            .map(|&j| model.alpha * model.sign_w[j].value::<f64>())
            .sum();
        for (a, &j) in active.iter().enumerate() {
            for &k in &active[a + 1..] {
                let dot: f64 = model
                    .sign_v_row(j)
                    .iter()
                    .zip(model.sign_v_row(k))
                    .map(|(x, y)| x.value::<f64>() * y.value::<f64>())
                    .sum();
                f += model.beta * model.beta * dot;
            }
        }
        f
    }

    #[test]
    fn sign_convention() {
        assert_eq!(
            quantize_sign(&[0.5, -1.5, 0.0]),
            vec![Sign::Plus, Sign::Minus, Sign::Plus]
        );
        assert!(quantize_sign(&[-1.0f32, -1e-30, -7.0])
            .iter()
            .all(|&s| s == Sign::Minus));
        let v = [0.3, -2.0, 0.0, -0.0, 5.0];
        let once = quantize_sign(&v);
        let reals: Vec<f64> = once.iter().map(|s| s.value()).collect();
        assert_eq!(quantize_sign(&reals), once);
    }

    #[test]
    fn scaling_is_mean_absolute_value() {
        let mut model =
            BinFmModel::<f64>::from_proxies(3, 1, vec![0.5, -1.5, 1.0], vec![0.2, -0.2, 0.2])
                .unwrap();
        let (alpha, beta) = model.refresh_scaling();
        assert!((alpha - 1.0).abs() < 1e-15);
        assert!((beta - 0.2).abs() < 1e-15);
        let mut zero = BinFmModel::<f64>::from_proxies(2, 1, vec![0.0; 2], vec![0.0; 2]).unwrap();
        assert_eq!(zero.refresh_scaling(), (1e-8, 1e-8));
    }

    #[test]
    fn closed_form_score() {
        let model = BinFmModel::from_proxies(4, 1, vec![1.0; 4], vec![1.0; 4]).unwrap();
        assert_eq!(model.predict(&[0, 2]), 3.0);
        let model = BinFmModel::from_proxies(2, 1, vec![1.0, 1.0], vec![-0.5, 0.5]).unwrap();
        assert_eq!(model.predict(&[0]), 1.0);
    }

    #[test]
    fn matches_pairwise_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let d = rng.random_range(1..6);
            let b = rng.random_range(2..5);
            let m = rng.random_range(1..6);
            let p = d * b;
            let w: Vec<f64> = (0..p).map(|_| rng.random_range(-1.0..1.0)).collect();
            let v: Vec<f64> = (0..p * m).map(|_| rng.random_range(-1.0..1.0)).collect();
            let mut model = BinFmModel::from_proxies(p, m, w, v).unwrap();
            model.set_scales(rng.random_range(0.01..2.0), rng.random_range(0.01..2.0));
            let active: Vec<usize> = (0..d).map(|j| j * b + rng.random_range(0..b)).collect();
            let (fast, slow) = (model.predict(&active), brute_force(&model, &active));
            assert!((fast - slow).abs() <= 1e-9 * slow.abs().max(1.0));
        }
    }
}
