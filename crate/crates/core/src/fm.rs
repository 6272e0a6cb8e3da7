//! Full-precision degree-2 factorization machine.
//!
//! Serves as the FM baseline on raw features and, trained on one-hot encoded
//! rows, as the SEFM baseline. There is no global bias term.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::loss::LossKind;
use crate::scalar::Scalar;

/// Sparse input row: `(index, value)` pairs.
pub type Row<T> = [(usize, T)];

#[derive(Clone, Debug, PartialEq)]
pub struct FmModel<T> {
    p: usize,
    m: usize,
    w: Vec<T>,
    /// `p x m`, row-major: factor vector of feature `j` is `v[j*m..(j+1)*m]`.
    v: Vec<T>,
}

impl<T: Scalar> FmModel<T> {
    pub fn zeros(p: usize, m: usize) -> Self {
        FmModel {
            p,
            m,
            w: vec![T::zero(); p],
            v: vec![T::zero(); p * m],
        }
    }

    pub fn from_parts(p: usize, m: usize, w: Vec<T>, v: Vec<T>) -> Result<Self> {
        if m == 0 {
            return Err(Error::invalid("rank must be >= 1"));
        }
        if w.len() != p || v.len() != p * m {
            return Err(Error::DimensionMismatch(format!(
                "expected w of length {p} and V of length {}, got {} and {}",
                p * m,
                w.len(),
                v.len()
            )));
        }
        if w.iter().chain(&v).any(|x| !x.is_finite()) {
            return Err(Error::invalid("model parameters must be finite"));
        }
        Ok(FmModel { p, m, w, v })
    }

    /// Zero linear weights, factors uniform in `[-scale, scale]`.
    pub fn random(p: usize, m: usize, scale: T, rng: &mut impl Rng) -> Self {
        let scale = scale.to_f64_lossy();
        let v = (0..p * m)
            .map(|_| T::lit(rng.random_range(-scale..=scale)))
            .collect();
        FmModel {
            p,
            m,
            w: vec![T::zero(); p],
            v,
        }
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn rank(&self) -> usize {
        self.m
    }

    pub fn w(&self) -> &[T] {
        &self.w
    }

    pub fn v(&self) -> &[T] {
        &self.v
    }

    #[inline]
    pub fn v_row(&self, j: usize) -> &[T] {
        &self.v[j * self.m..(j + 1) * self.m]
    }

    /// Per-factor sums `sum_j v_jf x_j`, written into `sums` (length `m`).
    pub fn factor_sums(&self, x: &Row<T>, sums: &mut [T]) {
        sums.fill(T::zero());
        for &(j, xj) in x {
            for (s, &vjf) in sums.iter_mut().zip(self.v_row(j)) {
                *s += vjf * xj;
            }
        }
    }

    /// Score via the factorized identity, `O(m * nnz)`.
    pub fn predict(&self, x: &Row<T>) -> T {
        let mut sums = vec![T::zero(); self.m];
        self.factor_sums(x, &mut sums);
        self.predict_with_sums(x, &sums)
    }

    pub fn predict_with_sums(&self, x: &Row<T>, sums: &[T]) -> T {
        let mut linear = T::zero();
        let mut squares = vec![T::zero(); self.m];
        for &(j, xj) in x {
            linear += self.w[j] * xj;
            for (sq, &vjf) in squares.iter_mut().zip(self.v_row(j)) {
                *sq += vjf * vjf * xj * xj;
            }
        }
        let interaction: T = sums.iter().zip(&squares).map(|(&s, &q)| s * s - q).sum();
        linear + T::lit(0.5) * interaction
    }

    /// One SGD step on `(x, y)` with `y` in {-1, +1}; returns the loss before the step.
    pub fn sgd_step(&mut self, x: &Row<T>, y: T, cfg: &FmConfig<T>, sums: &mut [T]) -> T {
        self.factor_sums(x, sums);
        let f = self.predict_with_sums(x, sums);
        let (loss, dldf) = cfg.loss.eval(y, f);
        let eta = cfg.eta;
        let m = self.m;
        for &(j, xj) in x {
            let wj = &mut self.w[j];
            *wj -= eta * (dldf * xj + cfg.lambda1 * *wj);
            for (f, &sum) in sums.iter().enumerate() {
                let vjf = &mut self.v[j * m + f];
                let g = dldf * factor_partial(xj, *vjf, sum) + cfg.lambda2 * *vjf;
                *vjf -= eta * g;
            }
        }
        loss
    }

    pub fn mean_loss<R: AsRef<Row<T>>>(&self, rows: &[R], targets: &[T], loss: LossKind) -> f64 {
        let total: f64 = rows
            .iter()
            .zip(targets)
            .map(|(x, &y)| loss.loss(y, self.predict(x.as_ref())).to_f64_lossy())
            .sum();
        total / rows.len().max(1) as f64
    }

    /// Converts every parameter to another scalar type.
    pub fn cast<U: Scalar>(&self) -> FmModel<U> {
        let conv = |x: &T| U::lit(x.to_f64_lossy());
        FmModel {
            p: self.p,
            m: self.m,
            w: self.w.iter().map(conv).collect(),
            v: self.v.iter().map(conv).collect(),
        }
    }
}

/// `d f / d v_jf = x_j * sum_f - v_jf * x_j^2`, with `sum_f` cached before any update.
#[inline]
pub fn factor_partial<T: Scalar>(xj: T, vjf: T, sum_f: T) -> T {
    xj * sum_f - vjf * xj * xj
}

#[derive(Clone, Debug, PartialEq)]
pub struct FmConfig<T> {
    pub rank: usize,
    pub eta: T,
    pub lambda1: T,
    pub lambda2: T,
    pub loss: LossKind,
    pub epochs: usize,
    pub seed: u64,
    /// Factors start uniform in `[-init_scale, init_scale]`.
    pub init_scale: T,
    /// Stop once an epoch improves training loss by less than this fraction.
    pub tol: Option<f64>,
}

impl<T: Scalar> Default for FmConfig<T> {
    fn default() -> Self {
        FmConfig {
            rank: 16,
            eta: T::lit(0.05),
            lambda1: T::lit(1e-4),
            lambda2: T::lit(1e-4),
            loss: LossKind::Logistic,
            epochs: 30,
            seed: 0,
            init_scale: T::lit(0.01),
            tol: None,
        }
    }
}

impl<T: Scalar> FmConfig<T> {
    pub fn validate(&self) -> Result<()> {
        if self.rank == 0 {
            return Err(Error::invalid("rank must be >= 1"));
        }
        if self.epochs == 0 {
            return Err(Error::invalid("epochs must be >= 1"));
        }
        if !(self.eta > T::zero() && self.eta.is_finite()) {
            return Err(Error::invalid("learning rate must be positive"));
        }
        if self.lambda1 < T::zero() || self.lambda2 < T::zero() {
            return Err(Error::invalid("regularization must be non-negative"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct FmFit<T> {
    pub model: FmModel<T>,
    /// Mean training loss of the initial model.
    pub initial_loss: f64,
    /// Mean training loss after each completed epoch.
    pub epoch_losses: Vec<f64>,
}

/// Trains an FM with plain SGD over `rows`, `targets` in {-1, +1}.
pub fn train<T: Scalar, R: AsRef<Row<T>>>(
    rows: &[R],
    targets: &[T],
    p: usize,
    cfg: &FmConfig<T>,
) -> Result<FmFit<T>> {
    cfg.validate()?;
    if rows.is_empty() {
        return Err(Error::EmptyDataset("no training rows".into()));
    }
    if rows.len() != targets.len() {
        return Err(Error::DimensionMismatch(
            "rows and targets differ in length".into(),
        ));
    }
    if let Some(j) = rows
        .iter()
        .flat_map(|r| r.as_ref().iter().map(|&(j, _)| j))
        .find(|&j| j >= p)
    {
        return Err(Error::DimensionMismatch(format!(
            "feature index {j} >= p = {p}"
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut model = FmModel::random(p, cfg.rank, cfg.init_scale, &mut rng);
    let initial_loss = model.mean_loss(rows, targets, cfg.loss);
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);
    let mut order: Vec<usize> = (0..rows.len()).collect();
    let mut sums = vec![T::zero(); cfg.rank];

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for &i in &order {
            let loss = model.sgd_step(rows[i].as_ref(), targets[i], cfg, &mut sums);
            if !loss.is_finite() {
                return Err(Error::Divergence {
                    epoch: epoch + 1,
                    sample: i,
                });
            }
        }
        let loss = model.mean_loss(rows, targets, cfg.loss);
        if !loss.is_finite() || model.w.iter().chain(&model.v).any(|x| !x.is_finite()) {
            return Err(Error::Divergence {
                epoch: epoch + 1,
                sample: rows.len(),
            });
        }
        let prev = epoch_losses.last().copied().unwrap_or(initial_loss);
        epoch_losses.push(loss);
        if cfg.tol.is_some_and(|tol| converged(prev, loss, tol)) {
            break;
        }
    }
    Ok(FmFit {
        model,
        initial_loss,
        epoch_losses,
    })
}

pub(crate) fn converged(prev: f64, cur: f64, tol: f64) -> bool {
    prev > 0.0 && (prev - cur) / prev < tol
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Explicit pairwise double sum, independent of the factorized path.
    fn brute_force(model: &FmModel<f64>, x: &[(usize, f64)]) -> f64 {
        let mut f: f64 = x.iter().map(|&(j, xj)| model.w()[j] * xj).sum();
        for (a, &(j, xj)) in x.iter().enumerate() {
            for &(k, xk) in &x[a + 1..] {
                let dot: f64 = model
                    .v_row(j)
                    .iter()
                    .zip(model.v_row(k))
                    .map(|(p, q)| p * q)
                    .sum();
                f += dot * xj * xk;
            }
        }
        f
    }

    #[test]
    fn zero_model_scores_zero() {
        let model = FmModel::<f64>::zeros(4, 3);
        assert_eq!(model.predict(&[(0, 1.0), (3, -2.0)]), 0.0);
    }

    #[test]
    fn worked_example() {
        let model = FmModel::from_parts(2, 1, vec![0.1, 0.2], vec![1.0, 3.0]).unwrap();
        let x = [(0, 1.0), (1, 2.0)];
        assert!((brute_force(&model, &x) - 6.5).abs() < 1e-12);
        assert!((model.predict(&x) - 6.5).abs() < 1e-12);
    }

    #[test]
    fn no_op_step_when_gradient_vanishes() {
        // Squared loss with f == y gives dL/df = 0.
        let mut model = FmModel::from_parts(2, 1, vec![0.5, 0.0], vec![0.0, 0.0]).unwrap();
        let before = model.clone();
        let cfg = FmConfig {
            loss: LossKind::Squared,
            lambda1: 0.0,
            lambda2: 0.0,
            ..FmConfig::default()
        };
        model.sgd_step(&[(0, 1.0)], 0.5, &cfg, &mut [0.0]);
        assert_eq!(model, before);
    }

    #[test]
    fn single_feature_has_no_self_interaction() {
        let mut model = FmModel::from_parts(1, 1, vec![0.0], vec![0.7]).unwrap();
        let cfg = FmConfig {
            lambda2: 0.0,
            ..FmConfig::default()
        };
        model.sgd_step(&[(0, 2.0)], 1.0, &cfg, &mut [0.0]);
        assert_eq!(model.v(), &[0.7]);
        assert!(model.w()[0] > 0.0);
    }

    #[test]
    fn training_reduces_loss() {
        let rows: Vec<Vec<(usize, f64)>> = (0..40)
            .map(|i| vec![(i % 4, 1.0), (4 + (i / 4) % 3, 1.0)])
            .collect();
        let targets: Vec<f64> = (0..40)
            .map(|i| if i % 4 < 2 { 1.0 } else { -1.0 })
            .collect();
        let cfg = FmConfig {
            epochs: 5,
            ..FmConfig::default()
        };
        let fit = train(&rows, &targets, 7, &cfg).unwrap();
        assert_eq!(fit.epoch_losses.len(), 5);
        assert!(fit.epoch_losses[4] < fit.initial_loss);
    }

    #[test]
    fn training_is_generic_over_f32() {
        let rows: Vec<Vec<(usize, f32)>> = (0..20).map(|i| vec![(i % 2, 1.0)]).collect();
        let targets: Vec<f32> = (0..20)
            .map(|i| if i % 2 == 0 { 1.0 } else { -1.0 })
            .collect();
        let fit = train(&rows, &targets, 2, &FmConfig::default()).unwrap();
        assert!(fit.model.predict(&[(0, 1.0)]) > 0.0);
        assert!(fit.model.predict(&[(1, 1.0)]) < 0.0);
    }

    #[test]
    fn divergence_is_reported() {
        let rows = vec![vec![(0, 1e200), (1, 1e200)]; 4];
        let targets = vec![1.0, -1.0, 1.0, -1.0];
        let cfg = FmConfig {
            loss: LossKind::Squared,
            eta: 10.0,
            ..FmConfig::default()
        };
        assert!(matches!(
            train(&rows, &targets, 2, &cfg),
            Err(Error::Divergence { .. })
        ));
    }

    #[test]
    fn rejects_out_of_range_rows() {
        let rows = vec![vec![(5, 1.0)]];
        assert!(matches!(
            train(&rows, &[1.0], 3, &FmConfig::default()),
            Err(Error::DimensionMismatch(_))
        ));
    }
}
