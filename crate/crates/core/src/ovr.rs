//! One-vs-all reduction for multiclass problems.
//!
//! Two classes train a single head whose positive class is class 1. With
//! `k > 2` classes there is one head per class and the prediction is the
//! argmax of the head scores, ties going to the lowest class id.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Clone, Debug, PartialEq)]
pub struct OneVsRest<M> {
    heads: Vec<M>,
    classes: usize,
}

/// Number of heads needed for `classes` classes.
pub fn head_count(classes: usize) -> usize {
    if classes == 2 {
        1
    } else {
        classes
    }
}

/// ±1 targets for head `head`.
pub fn head_targets<T: Scalar>(labels: &[usize], classes: usize, head: usize) -> Vec<T> {
    let positive = if classes == 2 { 1 } else { head };
    labels
        .iter()
        .map(|&l| if l == positive { T::one() } else { -T::one() })
        .collect()
}

impl<M> OneVsRest<M> {
    pub fn from_heads(heads: Vec<M>, classes: usize) -> Result<Self> {
        if classes < 2 {
            return Err(Error::invalid("one-vs-rest needs at least 2 classes"));
        }
        if heads.len() != head_count(classes) {
            return Err(Error::invalid(format!(
                "{classes} classes need {} heads, got {}",
                head_count(classes),
                heads.len()
            )));
        }
        Ok(OneVsRest { heads, classes })
    }

    /// Trains every head with `fit(head_index, targets)`.
    ///
    /// Heads are independent; with `jobs > 1` they train on a dedicated
    /// thread pool. Results do not depend on `jobs`.
    pub fn fit<T, F>(labels: &[usize], classes: usize, jobs: usize, fit: F) -> Result<Self>
    where
        T: Scalar,
        M: Send,
        F: Fn(usize, &[T]) -> Result<M> + Sync,
    {
        if classes < 2 {
            return Err(Error::invalid("one-vs-rest needs at least 2 classes"));
        }
        let mut seen = vec![false; classes];
        for &l in labels {
            if l >= classes {
                return Err(Error::invalid(format!("label {l} outside [0, {classes})")));
            }
            seen[l] = true;
        }
        if let Some(missing) = seen.iter().position(|&s| !s) {
            return Err(Error::MissingClass(missing));
        }

        let train_head = |h: usize| fit(h, &head_targets::<T>(labels, classes, h));
        let n_heads = head_count(classes);
        let heads = if jobs > 1 && n_heads > 1 {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(jobs)
                .build()
                .map_err(|e| Error::invalid(format!("thread pool: {e}")))?;
            pool.install(|| {
                (0..n_heads)
                    .into_par_iter()
                    .map(train_head)
                    .collect::<Result<Vec<_>>>()
            })?
        } else {
            (0..n_heads).map(train_head).collect::<Result<Vec<_>>>()?
        };
        Ok(OneVsRest { heads, classes })
    }

    pub fn heads(&self) -> &[M] {
        &self.heads
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn map<N>(&self, f: impl FnMut(&M) -> N) -> OneVsRest<N> {
        OneVsRest {
            heads: self.heads.iter().map(f).collect(),
            classes: self.classes,
        }
    }

    /// Class decided by per-head scores (in head order).
    pub fn decide(&self, scores: &[f64]) -> usize {
        decide(scores, self.classes)
    }
}

pub fn decide(scores: &[f64], classes: usize) -> usize {
    if classes == 2 {
        return usize::from(scores[0] > 0.0);
    }
    let mut best = 0;
    for (c, &s) in scores.iter().enumerate().skip(1) {
        if s > scores[best] {
            best = c;
        }
    }
    best
}
