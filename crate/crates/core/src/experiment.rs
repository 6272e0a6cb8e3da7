//! Training, evaluation and model selection across the three FM variants.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::binfm::{self, BinFmConfig, Optimizer};
use crate::dataio::{split, Dataset, Sample};
use crate::encoder::{fit_bins, BinStrategy};
use crate::error::{Error, Result};
use crate::fm::{self, FmConfig};
use crate::loss::LossKind;
use crate::modelfile::{FloatClassifier, SavedModel};
use crate::ovr::OneVsRest;
use crate::packed::{memory_report, PackedClassifier, PackedModel};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Method {
    /// Plain FM on raw features.
    Fm,
    /// Full-precision FM on one-hot bins.
    Sefm,
    /// Binarized FM on one-hot bins.
    BinFm,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Fm, Method::Sefm, Method::BinFm];

    pub fn name(self) -> &'static str {
        match self {
            Method::Fm => "fm",
            Method::Sefm => "sefm",
            Method::BinFm => "binfm",
        }
    }

    pub fn uses_bins(self) -> bool {
        self != Method::Fm
    }

    pub fn default_eta(self) -> f64 {
        match self {
            Method::Fm => 0.05,
            Method::Sefm => 0.05,
            Method::BinFm => 0.1,
        }
    }

    /// Parameter memory relative to FM.
    pub fn memory_ratio(self, d: usize, bins: usize, rank: usize) -> f64 {
        let r = memory_report(d as u64, bins as u64, rank as u64);
        let key = match self {
            Method::Fm => "FM",
            Method::Sefm => "SEFM",
            Method::BinFm => "Binarized FM",
        };
        r.row(key).map_or(f64::NAN, |row| row.ratio)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "fm" => Ok(Method::Fm),
            "sefm" => Ok(Method::Sefm),
            "binfm" | "bfm" => Ok(Method::BinFm),
            other => Err(Error::invalid(format!(
                "unknown model '{other}' (fm, sefm, binfm)"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct HyperParams {
    pub bins: usize,
    pub strategy: BinStrategy,
    pub rank: usize,
    pub eta: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    pub eps: f64,
    pub loss: LossKind,
    pub optimizer: Optimizer,
    pub epochs: usize,
    pub use_scaling: bool,
    pub seed: u64,
    pub init_scale: f64,
    pub tol: Option<f64>,
    /// Threads for one-vs-rest heads and repeated runs.
    pub jobs: usize,
}

impl HyperParams {
    pub fn for_method(method: Method) -> Self {
        HyperParams {
            bins: 30,
            strategy: BinStrategy::Quantile,
            rank: 16,
            eta: method.default_eta(),
            lambda1: 1e-4,
            lambda2: 1e-4,
            eps: 1e-8,
            loss: LossKind::Logistic,
            optimizer: Optimizer::Adagrad,
            epochs: 20,
            use_scaling: true,
            seed: 0,
            init_scale: 0.01,
            tol: None,
            jobs: 1,
        }
    }

    pub fn fm_config(&self, seed: u64) -> FmConfig<f64> {
        FmConfig {
            rank: self.rank,
            eta: self.eta,
            lambda1: self.lambda1,
            lambda2: self.lambda2,
            loss: self.loss,
            epochs: self.epochs,
            seed,
            init_scale: self.init_scale,
            tol: self.tol,
        }
    }

    pub fn binfm_config(&self, seed: u64) -> BinFmConfig<f64> {
        BinFmConfig {
            rank: self.rank,
            eta: self.eta,
            lambda1: self.lambda1,
            lambda2: self.lambda2,
            eps: self.eps,
            loss: self.loss,
            epochs: self.epochs,
            optimizer: self.optimizer,
            use_scaling: self.use_scaling,
            seed,
            init_scale: self.init_scale,
            tol: self.tol,
        }
    }

    /// Checks everything that can be checked without data.
    pub fn validate(&self, method: Method) -> Result<()> {
        if method.uses_bins() && self.bins < 2 {
            return Err(Error::invalid("bins must be >= 2"));
        }
        if self.jobs == 0 {
            return Err(Error::invalid("jobs must be >= 1"));
        }
        if let Some(t) = self.tol {
            if !(t.is_finite() && t >= 0.0) {
                return Err(Error::invalid(
                    "early-stop tolerance must be finite and >= 0",
                ));
            }
        }
        if !(self.init_scale.is_finite() && self.init_scale >= 0.0) {
            return Err(Error::invalid("init scale must be finite and >= 0"));
        }
        match method {
            Method::BinFm => self.binfm_config(self.seed).validate(),
            _ => self.fm_config(self.seed).validate(),
        }
    }
}

fn head_seed(seed: u64, head: usize) -> u64 {
    seed.wrapping_add((head as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

#[derive(Clone, Debug)]
pub struct FitReport {
    pub model: SavedModel,
    /// Mean over heads of the initial training loss.
    pub initial_loss: f64,
    /// Mean over heads of the training loss after each epoch.
    pub epoch_losses: Vec<f64>,
    pub train_secs: f64,
}

fn mean_curves(curves: &[(f64, Vec<f64>)]) -> (f64, Vec<f64>) {
    let k = curves.len().max(1) as f64;
    let initial = curves.iter().map(|c| c.0).sum::<f64>() / k;
    let len = curves.iter().map(|c| c.1.len()).max().unwrap_or(0);
    // heads that stopped early hold their last value
    let epochs = (0..len)
        .map(|e| {
            curves
                .iter()
                .map(|c| c.1.get(e).or(c.1.last()).copied().unwrap_or(c.0))
                .sum::<f64>()
                / k
        })
        .collect();
    (initial, epochs)
}

/// Trains `method` on `train` with one-vs-rest heads.
pub fn fit(method: Method, train: &Dataset, hp: &HyperParams) -> Result<FitReport> {
    hp.validate(method)?;
    if train.is_empty() {
        return Err(Error::EmptyDataset("training set is empty".into()));
    }
    let start = Instant::now();
    let labels = train.labels();
    let classes = train.classes();
    let names = train.label_names().to_vec();

    let (model, curves) = match method {
        Method::Fm => {
            let rows: Vec<Vec<(usize, f64)>> =
                train.samples().iter().map(|s| s.features.clone()).collect();
            let p = train.dim();
            let ovr = OneVsRest::fit::<f64, _>(&labels, classes, hp.jobs, |h, t| {
                fm::train(&rows, t, p, &hp.fm_config(head_seed(hp.seed, h)))
            })?;
            let curves = ovr
                .heads()
                .iter()
                .map(|f| (f.initial_loss, f.epoch_losses.clone()))
                .collect();
            let heads = ovr.heads().iter().map(|f| f.model.clone()).collect();
            (
                SavedModel::Float(FloatClassifier::fm(p, heads, names)?),
                curves,
            )
        }
        Method::Sefm => {
            let spec = fit_bins(train, hp.bins, hp.strategy)?;
            let enc = spec.encode_dataset(train)?;
            let rows: Vec<Vec<(usize, f64)>> = enc
                .samples
                .iter()
                .map(|z| z.active.iter().map(|&j| (j, 1.0)).collect())
                .collect();
            let ovr = OneVsRest::fit::<f64, _>(&labels, classes, hp.jobs, |h, t| {
                fm::train(&rows, t, enc.p, &hp.fm_config(head_seed(hp.seed, h)))
            })?;
            let curves = ovr
                .heads()
                .iter()
                .map(|f| (f.initial_loss, f.epoch_losses.clone()))
                .collect();
            let heads = ovr.heads().iter().map(|f| f.model.clone()).collect();
            (
                SavedModel::Float(FloatClassifier::sefm(spec, heads, names)?),
                curves,
            )
        }
        Method::BinFm => {
            let spec = fit_bins(train, hp.bins, hp.strategy)?;
            let enc = spec.encode_dataset(train)?;
            let ovr = OneVsRest::fit::<f64, _>(&labels, classes, hp.jobs, |h, t| {
                binfm::train(
                    &enc.samples,
                    t,
                    enc.p,
                    &hp.binfm_config(head_seed(hp.seed, h)),
                )
            })?;
            let curves = ovr
                .heads()
                .iter()
                .map(|f| (f.initial_loss, f.epoch_losses.clone()))
                .collect();
            let heads = ovr
                .heads()
                .iter()
                .map(|f| PackedModel::pack(&f.model, &spec))
                .collect::<Result<Vec<_>>>()?;
            (
                SavedModel::Binarized(PackedClassifier::new(heads, names)?),
                curves,
            )
        }
    };
    let curves: Vec<(f64, Vec<f64>)> = curves;
    let (initial_loss, epoch_losses) = mean_curves(&curves);
    Ok(FitReport {
        model,
        initial_loss,
        epoch_losses,
        train_secs: start.elapsed().as_secs_f64(),
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub accuracy: f64,
    pub correct: usize,
    pub total: usize,
    pub predict_secs: f64,
}

impl EvalReport {
    pub fn secs_per_sample(&self) -> f64 {
        self.predict_secs / self.total.max(1) as f64
    }
}

/// Predicts every sample of `test` and compares with its label.
///
/// Labels are matched by name, so `test` may carry its own label order.
pub fn evaluate(model: &SavedModel, test: &Dataset) -> Result<EvalReport> {
    if test.is_empty() {
        return Err(Error::EmptyDataset("test set is empty".into()));
    }
    if test.dim() > model.input_dim() {
        return Err(Error::DimensionMismatch(format!(
            "test data has {} features, model expects {}",
            test.dim(),
            model.input_dim()
        )));
    }
    let names = model.labels();
    let truth: Vec<Option<usize>> = test
        .labels()
        .iter()
        .map(|&l| {
            let name = &test.label_names()[l];
            names.iter().position(|n| n == name)
        })
        .collect();
    let start = Instant::now();
    let predicted = test
        .samples()
        .iter()
        .map(|s| model.predict(s))
        .collect::<Result<Vec<_>>>()?;
    let predict_secs = start.elapsed().as_secs_f64();
    let correct = predicted
        .iter()
        .zip(&truth)
        .filter(|(p, t)| Some(**p) == **t)
        .count();
    Ok(EvalReport {
        accuracy: correct as f64 / test.len() as f64,
        correct,
        total: test.len(),
        predict_secs,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunOutcome {
    pub seed: u64,
    pub accuracy: f64,
    pub train_secs: f64,
    pub predict_secs: f64,
    pub final_loss: f64,
}

/// Repeats a seeded `train_frac` split, fit and evaluation `repeats` times.
/// Run `r` uses seed `seed + r` for both the split and the model.
pub fn repeated_split(
    method: Method,
    ds: &Dataset,
    hp: &HyperParams,
    repeats: usize,
    train_frac: f64,
    seed: u64,
) -> Result<Vec<RunOutcome>> {
    if repeats == 0 {
        return Err(Error::invalid("repeats must be >= 1"));
    }
    hp.validate(method)?;
    let run = |r: usize| -> Result<RunOutcome> {
        let s = seed.wrapping_add(r as u64);
        let (tr, te) = split(ds, train_frac, s)?;
        let hp = HyperParams {
            seed: s,
            jobs: 1,
            ..hp.clone()
        };
        let fit = fit(method, &tr, &hp)?;
        let ev = evaluate(&fit.model, &te)?;
        Ok(RunOutcome {
            seed: s,
            accuracy: ev.accuracy,
            train_secs: fit.train_secs,
            predict_secs: ev.predict_secs,
            final_loss: fit.epoch_losses.last().copied().unwrap_or(fit.initial_loss),
        })
    };
    if hp.jobs > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(hp.jobs)
            .build()
            .map_err(|e| Error::invalid(format!("thread pool: {e}")))?;
        pool.install(|| (0..repeats).into_par_iter().map(run).collect())
    } else {
        (0..repeats).map(run).collect()
    }
}

/// Mean and population standard deviation.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Shuffled fold assignment: `folds` disjoint index sets covering `0..n`.
pub fn kfold_indices(n: usize, folds: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if folds < 2 || folds > n {
        return Err(Error::invalid(format!(
            "need 2 <= folds <= {n}, got {folds}"
        )));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut out = vec![Vec::new(); folds];
    for (k, i) in idx.into_iter().enumerate() {
        out[k % folds].push(i);
    }
    for f in &mut out {
        f.sort_unstable();
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Grid {
    pub ranks: Vec<usize>,
    pub bins: Vec<usize>,
    pub lambdas: Vec<f64>,
}

impl Default for Grid {
    fn default() -> Self {
        Grid {
            ranks: vec![16, 32, 64, 128],
            bins: vec![10, 20, 30, 40, 50],
            lambdas: vec![1e-2, 1e-1, 1.0, 1e1, 1e2],
        }
    }
}

impl Grid {
    /// Candidate settings; `bins` is ignored for methods without binning.
    pub fn candidates(&self, method: Method, base: &HyperParams) -> Vec<HyperParams> {
        let bins: Vec<usize> = if method.uses_bins() {
            self.bins.clone()
        } else {
            vec![base.bins]
        };
        let mut out = Vec::new();
        for &rank in &self.ranks {
            for &b in &bins {
                for &lambda in &self.lambdas {
                    out.push(HyperParams {
                        rank,
                        bins: b,
                        lambda1: lambda,
                        lambda2: lambda,
                        ..base.clone()
                    });
                }
            }
        }
        out
    }
}

#[derive(Clone, Debug)]
pub struct CvResult {
    pub best: HyperParams,
    pub best_accuracy: f64,
    /// Every candidate with its mean validation accuracy, in grid order.
    pub scores: Vec<(HyperParams, f64)>,
}

/// `folds`-fold cross-validation over `grid`; ties keep the earlier candidate.
pub fn cross_validate(
    method: Method,
    ds: &Dataset,
    grid: &Grid,
    folds: usize,
    base: &HyperParams,
) -> Result<CvResult> {
    let fold_sets = kfold_indices(ds.len(), folds, base.seed)?;
    let candidates = grid.candidates(method, base);
    if candidates.is_empty() {
        return Err(Error::invalid("empty search grid"));
    }
    let mut scores = Vec::with_capacity(candidates.len());
    for hp in candidates {
        let mut acc = 0.0;
        for (k, held) in fold_sets.iter().enumerate() {
            let train_idx: Vec<usize> = fold_sets
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != k)
                .flat_map(|(_, f)| f.iter().copied())
                .collect();
            let tr = ds.subset(&train_idx);
            let va = ds.subset(held);
            let model = match fit(method, &tr, &hp) {
                Ok(f) => f.model,
                // a fold missing a class cannot train; score it as zero
                Err(Error::MissingClass(_)) => continue,
                Err(e) => return Err(e),
            };
            acc += evaluate(&model, &va)?.accuracy;
        }
        scores.push((hp, acc / folds as f64));
    }
    let mut best = 0;
    for (i, s) in scores.iter().enumerate() {
        if s.1 > scores[best].1 {
            best = i;
        }
    }
    Ok(CvResult {
        best: scores[best].0.clone(),
        best_accuracy: scores[best].1,
        scores,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct BoundaryPoint {
    pub x: f64,
    pub y: f64,
    /// Head-0 score for two classes, otherwise the winning head's score.
    pub score: f64,
    pub class: usize,
}

/// Scores a `steps x steps` lattice over a 2-D input box.
pub fn boundary_grid(
    model: &SavedModel,
    (xmin, xmax): (f64, f64),
    (ymin, ymax): (f64, f64),
    steps: usize,
) -> Result<Vec<BoundaryPoint>> {
    if model.input_dim() != 2 {
        return Err(Error::DimensionMismatch(format!(
            "decision boundaries need 2 input features, model has {}",
            model.input_dim()
        )));
    }
    if steps < 2 {
        return Err(Error::invalid("steps must be >= 2"));
    }
    if !(xmin.is_finite() && xmax.is_finite() && ymin.is_finite() && ymax.is_finite())
        || xmin >= xmax
        || ymin >= ymax
    {
        return Err(Error::invalid("grid bounds must be finite with min < max"));
    }
    let at = |lo: f64, hi: f64, i: usize| lo + (hi - lo) * i as f64 / (steps - 1) as f64;
    let mut out = Vec::with_capacity(steps * steps);
    for iy in 0..steps {
        let y = at(ymin, ymax, iy);
        for ix in 0..steps {
            let x = at(xmin, xmax, ix);
            let s = Sample::new(vec![(0, x), (1, y)], 0);
            let scores = model.scores(&s)?;
            let class = crate::ovr::decide(&scores, model.classes());
            let score = if model.classes() == 2 {
                scores[0]
            } else {
                scores[class]
            };
            out.push(BoundaryPoint { x, y, score, class });
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq)]
pub struct BenchRow {
    pub dataset: String,
    pub method: Method,
    pub acc_mean: f64,
    pub acc_std: f64,
    pub train_secs: f64,
    /// Mean prediction time per test sample, in microseconds.
    pub predict_us: f64,
    pub memory_ratio: f64,
}

impl BenchRow {
    pub fn from_runs(
        dataset: &str,
        method: Method,
        runs: &[RunOutcome],
        d: usize,
        hp: &HyperParams,
        test_len: usize,
    ) -> Self {
        let accs: Vec<f64> = runs.iter().map(|r| r.accuracy).collect();
        let (acc_mean, acc_std) = mean_std(&accs);
        let k = runs.len().max(1) as f64;
        BenchRow {
            dataset: dataset.to_string(),
            method,
            acc_mean,
            acc_std,
            train_secs: runs.iter().map(|r| r.train_secs).sum::<f64>() / k,
            predict_us: runs.iter().map(|r| r.predict_secs).sum::<f64>()
                / k
                / test_len.max(1) as f64
                * 1e6,
            memory_ratio: method.memory_ratio(d, hp.bins, hp.rank),
        }
    }
}

pub fn bench_csv(rows: &[BenchRow]) -> String {
    let mut out =
        String::from("dataset,method,acc_mean,acc_std,train_secs,predict_us,memory_ratio\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{:.6},{:.6},{:.6},{:.4},{}\n",
            r.dataset, r.method, r.acc_mean, r.acc_std, r.train_secs, r.predict_us, r.memory_ratio
        ));
    }
    out
}

pub fn bench_markdown(rows: &[BenchRow]) -> String {
    let mut out = String::from(
        "| dataset | method | accuracy (%) | train (s) | predict (us/sample) | memory vs FM |\n\
         |---|---|---|---|---|---|\n",
    );
    for r in rows {
        out.push_str(&format!(
            "| {} | {} | {:.2} ± {:.2} | {:.3} | {:.3} | {:.4}x |\n",
            r.dataset,
            r.method,
            100.0 * r.acc_mean,
            100.0 * r.acc_std,
            r.train_secs,
            r.predict_us,
            r.memory_ratio
        ));
    }
    out
}
