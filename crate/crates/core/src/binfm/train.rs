use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::adagrad::AdagradState;
use super::model::{BinFmModel, Sign};
use crate::encoder::EncodedSample;
use crate::error::{Error, Result};
use crate::fm::converged;
use crate::loss::LossKind;
use crate::scalar::Scalar;

/// Update rule for the proxy variables.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub enum Optimizer {
    #[default]
    Adagrad,
    Sgd,
}

impl std::str::FromStr for Optimizer {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "adagrad" => Ok(Optimizer::Adagrad),
            "sgd" => Ok(Optimizer::Sgd),
            other => Err(Error::invalid(format!("unknown optimizer {other:?}"))),
        }
    }
}

impl std::fmt::Display for Optimizer {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Optimizer::Adagrad => "adagrad",
            Optimizer::Sgd => "sgd",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BinFmConfig<T> {
    pub rank: usize,
    pub eta: T,
    pub lambda1: T,
    pub lambda2: T,
    pub eps: T,
    pub loss: LossKind,
    pub epochs: usize,
    pub optimizer: Optimizer,
    /// When false, `alpha = beta = 1` throughout.
    pub use_scaling: bool,
    pub seed: u64,
    /// Factor proxies start uniform in `[-init_scale, init_scale]`.
    pub init_scale: T,
    /// Stop once an epoch improves training loss by less than this fraction.
    pub tol: Option<f64>,
}

impl<T: Scalar> Default for BinFmConfig<T> {
    fn default() -> Self {
        BinFmConfig {
            rank: 16,
            eta: T::lit(0.1),
            lambda1: T::lit(1e-4),
            lambda2: T::lit(1e-4),
            eps: T::lit(1e-8),
            loss: LossKind::Logistic,
            epochs: 20,
            optimizer: Optimizer::Adagrad,
            use_scaling: true,
            seed: 0,
            init_scale: T::lit(0.01),
            tol: None,
        }
    }
}

impl<T: Scalar> BinFmConfig<T> {
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
        if self.eps.partial_cmp(&T::zero()) != Some(std::cmp::Ordering::Greater) {
            return Err(Error::invalid("eps must be positive"));
        }
        if self.lambda1 < T::zero() || self.lambda2 < T::zero() {
            return Err(Error::invalid("regularization must be non-negative"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct BinFmFit<T> {
    pub model: BinFmModel<T>,
    pub adagrad: Option<AdagradState<T>>,
    /// Mean training loss of the initial model.
    pub initial_loss: f64,
    /// Mean training loss after each completed epoch (after the scale refresh).
    pub epoch_losses: Vec<f64>,
}

impl<T: Scalar> BinFmModel<T> {
    pub fn mean_loss(&self, samples: &[EncodedSample], targets: &[T], loss: LossKind) -> f64 {
        let total: f64 = samples
            .iter()
            .zip(targets)
            .map(|(z, &y)| loss.loss(y, self.predict(&z.active)).to_f64_lossy())
            .sum();
        total / samples.len().max(1) as f64
    }
}

enum Stepper<T> {
    Adagrad(AdagradState<T>),
    Sgd(T),
}

/// Learns binary coefficients with straight-through proxies.
///
/// Per sample: cache the per-factor sums of `V^b`, score, then update each
/// active linear proxy followed by each factor proxy, re-deriving its sign
/// right after the update. The cached sums are not refreshed inside a
/// sample. Scales are refreshed once per epoch.
pub fn train<T: Scalar>(
    samples: &[EncodedSample],
    targets: &[T],
    p: usize,
    cfg: &BinFmConfig<T>,
) -> Result<BinFmFit<T>> {
    cfg.validate()?;
    if samples.is_empty() {
        return Err(Error::EmptyDataset("no training samples".into()));
    }
    if samples.len() != targets.len() {
        return Err(Error::DimensionMismatch(
            "samples and targets differ in length".into(),
        ));
    }
    if let Some(j) = samples
        .iter()
        .flat_map(|z| z.active.iter().copied())
        .find(|&j| j >= p)
    {
        return Err(Error::DimensionMismatch(format!(
            "active index {j} >= p = {p}"
        )));
    }

    let m = cfg.rank;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut model = BinFmModel::init(p, m, cfg.init_scale, &mut rng);
    let mut stepper = match cfg.optimizer {
        Optimizer::Adagrad => Stepper::Adagrad(AdagradState::new(p, m, cfg.eta, cfg.eps)),
        Optimizer::Sgd => Stepper::Sgd(cfg.eta),
    };

    let initial_loss = model.mean_loss(samples, targets, cfg.loss);
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut sums = vec![0i64; m];

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for &i in &order {
            let active = &samples[i].active;
            model.factor_sums(active, &mut sums);
            let score = model.predict_with_sums(active, &sums);
            let (loss, dldf) = cfg.loss.eval(targets[i], score);
            if !loss.is_finite() {
                return Err(Error::Divergence {
                    epoch: epoch + 1,
                    sample: i,
                });
            }

            for &j in active {
                let g = model.ste_grad_w(dldf, cfg.lambda1, j);
                let param = &mut model.proxy_w[j];
                match &mut stepper {
                    Stepper::Adagrad(st) => st.update_w(j, param, g),
                    Stepper::Sgd(eta) => *param -= *eta * g,
                }
                model.sign_w[j] = Sign::of(*param);
            }

            for (f, &sum) in sums.iter().enumerate() {
                let cached = T::lit(sum as f64);
                for &j in active {
                    let g = model.ste_grad_v(dldf, cfg.lambda2, j, f, cached);
                    let idx = j * m + f;
                    let param = &mut model.proxy_v[idx];
                    match &mut stepper {
                        Stepper::Adagrad(st) => st.update_v(idx, param, g),
                        Stepper::Sgd(eta) => *param -= *eta * g,
                    }
                    model.sign_v[idx] = Sign::of(*param);
                }
            }
        }

        if cfg.use_scaling {
            model.refresh_scaling();
        }
        let loss = model.mean_loss(samples, targets, cfg.loss);
        if !loss.is_finite() {
            return Err(Error::Divergence {
                epoch: epoch + 1,
                sample: samples.len(),
            });
        }
        let prev = epoch_losses.last().copied().unwrap_or(initial_loss);
        epoch_losses.push(loss);
        if cfg.tol.is_some_and(|tol| converged(prev, loss, tol)) {
            break;
        }
    }

    Ok(BinFmFit {
        model,
        adagrad: match stepper {
            Stepper::Adagrad(st) => Some(st),
            Stepper::Sgd(_) => None,
        },
        initial_loss,
        epoch_losses,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Two features with 3 bins each; the label is an XOR of the bin parities.
    fn xor_data() -> (Vec<EncodedSample>, Vec<f64>) {
        let mut samples = Vec::new();
        let mut targets = Vec::new();
        for _ in 0..10 {
            for a in 0..3 {
                for b in 0..3 {
                    samples.push(EncodedSample {
                        active: vec![a, 3 + b],
                        label: 0,
                    });
                    targets.push(if (a + b) % 2 == 0 { 1.0 } else { -1.0 });
                }
            }
        }
        (samples, targets)
    }

    #[test]
    fn signs_track_proxies_and_loss_drops() {
        let (samples, targets) = xor_data();
        let cfg = BinFmConfig {
            rank: 8,
            epochs: 15,
            ..BinFmConfig::default()
        };
        let fit = train(&samples, &targets, 6, &cfg).unwrap();
        assert!(fit.model.signs_consistent());
        assert_eq!(fit.epoch_losses.len(), 15);
        assert!(fit.epoch_losses.last().unwrap() < &fit.initial_loss);
        let acc = samples
            .iter()
            .zip(&targets)
            .filter(|(z, &y)| fit.model.predict(&z.active) * y > 0.0)
            .count() as f64
            / samples.len() as f64;
        assert!(acc > 0.8, "acc {acc}");
        let st = fit.adagrad.unwrap();
        assert!(st.s_w.iter().chain(&st.s_v).all(|&s| s >= 0.0));
    }

    #[test]
    fn scaling_off_keeps_unit_scales() {
        let (samples, targets) = xor_data();
        let cfg = BinFmConfig {
            use_scaling: false,
            optimizer: Optimizer::Sgd,
            epochs: 3,
            ..BinFmConfig::default()
        };
        let fit = train(&samples, &targets, 6, &cfg).unwrap();
        assert_eq!((fit.model.alpha(), fit.model.beta()), (1.0, 1.0));
        assert!(fit.adagrad.is_none());
    }

    #[test]
    fn deterministic_given_seed() {
        let (samples, targets) = xor_data();
        let cfg = BinFmConfig::<f64> {
            epochs: 4,
            ..BinFmConfig::default()
        };
        let a = train(&samples, &targets, 6, &cfg).unwrap();
        let b = train(&samples, &targets, 6, &cfg).unwrap();
        assert_eq!(a.model, b.model);
        assert_eq!(a.epoch_losses, b.epoch_losses);
    }

    #[test]
    fn early_stop_cuts_the_epoch_budget() {
        let (samples, targets) = xor_data();
        let cfg = BinFmConfig::<f64> {
            epochs: 200,
            tol: Some(0.05),
            ..BinFmConfig::default()
        };
        let fit = train(&samples, &targets, 6, &cfg).unwrap();
        assert!(fit.epoch_losses.len() < 200);
    }

    #[test]
    fn f32_training() {
        let (samples, targets) = xor_data();
        let targets: Vec<f32> = targets.iter().map(|&t| t as f32).collect();
        let fit = train(&samples, &targets, 6, &BinFmConfig::<f32>::default()).unwrap();
        assert!(fit.model.signs_consistent());
        assert!(fit.epoch_losses.last().copied().unwrap() < fit.initial_loss);
    }

    #[test]
    fn rejects_bad_config() {
        let (samples, targets) = xor_data();
        let bad = BinFmConfig::<f64> {
            epochs: 0,
            ..BinFmConfig::default()
        };
        assert!(train(&samples, &targets, 6, &bad).is_err());
        assert!(train(&samples, &targets, 4, &BinFmConfig::default()).is_err());
    }
}
