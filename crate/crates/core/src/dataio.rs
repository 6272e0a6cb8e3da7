//! Dataset ingestion: libsvm text files, synthetic generators and splits.
//!
//! Labels are stored as contiguous 0-based class ids. The original label
//! strings are kept alongside so predictions can be reported in the input's
//! own vocabulary.

use std::collections::BTreeSet;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};

/// One labeled sample with sparse features.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    /// `(index, value)` pairs with 0-based, strictly increasing indices.
    pub features: Vec<(usize, f64)>,
    pub label: usize,
}

impl Sample {
    pub fn new(features: Vec<(usize, f64)>, label: usize) -> Self {
        Sample { features, label }
    }

    /// Value of feature `j`, with absent features read as 0.
    pub fn value(&self, j: usize) -> f64 {
        match self.features.binary_search_by_key(&j, |&(i, _)| i) {
            Ok(pos) => self.features[pos].1,
            Err(_) => 0.0,
        }
    }

    /// Dense view of the first `dim` features.
    pub fn to_dense(&self, dim: usize) -> Vec<f64> {
        let mut out = vec![0.0; dim];
        for &(i, v) in &self.features {
            if i < dim {
                out[i] = v;
            }
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    samples: Vec<Sample>,
    dim: usize,
    label_names: Vec<String>,
}

impl Dataset {
    /// Builds a dataset and checks every sample against it.
    ///
    /// `label_names[c]` names class id `c`; the class count is its length.
    pub fn new(samples: Vec<Sample>, dim: usize, label_names: Vec<String>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("dataset dimensionality must be at least 1"));
        }
        if label_names.len() < 2 {
            return Err(Error::invalid(format!(
                "a dataset needs at least 2 classes, got {}",
                label_names.len()
            )));
        }
        for (n, s) in samples.iter().enumerate() {
            validate_sample(s, dim, label_names.len())
                .map_err(|msg| Error::invalid(format!("sample {n}: {msg}")))?;
        }
        Ok(Dataset {
            samples,
            dim,
            label_names,
        })
    }

    /// Dataset whose classes are named "0", "1", ...
    pub fn with_numeric_labels(samples: Vec<Sample>, dim: usize, classes: usize) -> Result<Self> {
        Self::new(samples, dim, (0..classes).map(|c| c.to_string()).collect())
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn classes(&self) -> usize {
        self.label_names.len()
    }

    pub fn label_names(&self) -> &[String] {
        &self.label_names
    }

    pub fn labels(&self) -> Vec<usize> {
        self.samples.iter().map(|s| s.label).collect()
    }

    /// New dataset holding the samples at `indices`, same dim and classes.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            samples: indices.iter().map(|&i| self.samples[i].clone()).collect(),
            dim: self.dim,
            label_names: self.label_names.clone(),
        }
    }

    /// Raises the dimensionality; never lowers it.
    pub fn with_min_dim(mut self, dim: usize) -> Dataset {
        self.dim = self.dim.max(dim);
        self
    }
}

fn validate_sample(s: &Sample, dim: usize, classes: usize) -> std::result::Result<(), String> {
    if s.label >= classes {
        return Err(format!("label {} outside [0, {classes})", s.label));
    }
    let mut prev: Option<usize> = None;
    for &(i, v) in &s.features {
        if i >= dim {
            return Err(format!("feature index {i} >= dim {dim}"));
        }
        if prev.is_some_and(|p| i <= p) {
            return Err("feature indices must be strictly increasing".into());
        }
        if !v.is_finite() {
            return Err(format!("non-finite value for feature {i}"));
        }
        prev = Some(i);
    }
    Ok(())
}

/// Options for [`load_libsvm_with`].
#[derive(Clone, Debug, Default)]
pub struct LoadOptions {
    /// Lower bound on the dimensionality (the format does not record it).
    pub min_dim: usize,
    /// Fixed label vocabulary, e.g. the one recorded in a trained model.
    /// Labels outside it are parse errors.
    pub labels: Option<Vec<String>>,
}

/// Loads a libsvm file, deriving the label vocabulary from its contents.
pub fn load_libsvm(path: impl AsRef<Path>) -> Result<Dataset> {
    load_libsvm_with(path, &LoadOptions::default())
}

pub fn load_libsvm_with(path: impl AsRef<Path>, opts: &LoadOptions) -> Result<Dataset> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_libsvm(BufReader::new(file), &path.display().to_string(), opts)
}

/// Parses libsvm text from any reader. `origin` names the source in errors.
pub fn read_libsvm(reader: impl BufRead, origin: &str, opts: &LoadOptions) -> Result<Dataset> {
    let parse_err = |line: usize, msg: String| Error::Parse {
        origin: origin.to_string(),
        line,
        msg,
    };

    let mut rows: Vec<(String, Vec<(usize, f64)>)> = Vec::new();
    let mut max_index = 0usize;
    for (n, line) in reader.lines().enumerate() {
        let lineno = n + 1;
        let line = line.map_err(|e| Error::io(origin, e))?;
        let content = match line.find('#') {
            Some(pos) => &line[..pos],
            None => &line[..],
        };
        let mut tokens = content.split_whitespace();
        let Some(label) = tokens.next() else {
            continue;
        };
        let label = canonical_label(label);
        let mut features = Vec::new();
        for tok in tokens {
            let (idx, val) = tok.split_once(':').ok_or_else(|| {
                parse_err(lineno, format!("expected <index>:<value>, got {tok:?}"))
            })?;
            let idx: usize = idx
                .parse()
                .map_err(|_| parse_err(lineno, format!("bad feature index {idx:?}")))?;
            if idx == 0 {
                return Err(parse_err(lineno, "feature indices are 1-based".into()));
            }
            let val: f64 = val
                .parse()
                .map_err(|_| parse_err(lineno, format!("bad feature value {val:?}")))?;
            if !val.is_finite() {
                return Err(parse_err(
                    lineno,
                    format!("non-finite value for index {idx}"),
                ));
            }
            if features.last().is_some_and(|&(prev, _)| idx - 1 <= prev) {
                return Err(parse_err(
                    lineno,
                    format!("index {idx} is not strictly increasing"),
                ));
            }
            max_index = max_index.max(idx);
            features.push((idx - 1, val));
        }
        rows.push((label, features));
    }

    if rows.is_empty() {
        return Err(Error::EmptyDataset(format!("{origin} contains no samples")));
    }

    let label_names = match &opts.labels {
        Some(names) => names.clone(),
        None => {
            let seen: BTreeSet<&str> = rows.iter().map(|(l, _)| l.as_str()).collect();
            sort_labels(seen.into_iter().map(str::to_string).collect())
        }
    };
    if label_names.len() < 2 {
        return Err(Error::invalid(format!(
            "{origin}: need at least 2 distinct labels, found {}",
            label_names.len()
        )));
    }

    let mut samples = Vec::with_capacity(rows.len());
    for (n, (label, features)) in rows.into_iter().enumerate() {
        let id = label_names
            .iter()
            .position(|l| *l == label)
            .ok_or_else(|| parse_err(n + 1, format!("label {label:?} is not a known class")))?;
        samples.push(Sample::new(features, id));
    }
    let dim = max_index.max(opts.min_dim).max(1);
    Dataset::new(samples, dim, label_names)
}

/// Numeric labels are normalized so that "+1", "1" and "1.0" coincide.
fn canonical_label(raw: &str) -> String {
    match raw.parse::<f64>() {
        Ok(v) if v.is_finite() && v.fract() == 0.0 && v.abs() < 1e15 => format!("{}", v as i64),
        _ => raw.to_string(),
    }
}

/// Numeric labels sort by value, the rest lexicographically after them.
fn sort_labels(mut labels: Vec<String>) -> Vec<String> {
    labels.sort_by(|a, b| match (a.parse::<f64>(), b.parse::<f64>()) {
        (Ok(x), Ok(y)) => x.total_cmp(&y),
        (Ok(_), Err(_)) => std::cmp::Ordering::Less,
        (Err(_), Ok(_)) => std::cmp::Ordering::Greater,
        (Err(_), Err(_)) => a.cmp(b),
    });
    labels
}

/// Writes libsvm text; values use the shortest round-tripping decimal form.
pub fn write_libsvm(ds: &Dataset, mut out: impl Write) -> std::io::Result<()> {
    for s in ds.samples() {
        write!(out, "{}", ds.label_names()[s.label])?;
        for &(i, v) in &s.features {
            write!(out, " {}:{}", i + 1, v)?;
        }
        writeln!(out)?;
    }
    Ok(())
}

pub fn save_libsvm(ds: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    write_libsvm(ds, &mut w)
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(path, e))
}

fn check_synth_args(n: usize, noise: f64) -> Result<()> {
    if n < 2 || !n.is_multiple_of(2) {
        return Err(Error::invalid(format!("n must be even and >= 2, got {n}")));
    }
    if !(noise >= 0.0 && noise.is_finite()) {
        return Err(Error::invalid(format!(
            "noise must be finite and >= 0, got {noise}"
        )));
    }
    Ok(())
}

fn finish_synth(
    points: Vec<([f64; 2], usize)>,
    noise: f64,
    rng: &mut ChaCha8Rng,
) -> Result<Dataset> {
    let normal = Normal::new(0.0, noise).map_err(|e| Error::invalid(e.to_string()))?;
    let mut samples: Vec<Sample> = points
        .into_iter()
        .map(|([x, y], label)| {
            let (x, y) = if noise > 0.0 {
                (x + normal.sample(rng), y + normal.sample(rng))
            } else {
                (x, y)
            };
            Sample::new(vec![(0, x), (1, y)], label)
        })
        .collect();
    samples.shuffle(rng);
    Dataset::with_numeric_labels(samples, 2, 2)
}

/// Two concentric circles: class 0 on radius 1.0, class 1 on radius 0.5.
pub fn gen_circles(n: usize, noise: f64, seed: u64) -> Result<Dataset> {
    check_synth_args(n, noise)?;
    let half = n / 2;
    let mut points = Vec::with_capacity(n);
    for (radius, label) in [(1.0, 0), (0.5, 1)] {
        for i in 0..half {
            let t = std::f64::consts::TAU * i as f64 / half as f64;
            points.push(([radius * t.cos(), radius * t.sin()], label));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    finish_synth(points, noise, &mut rng)
}

/// Two interleaving half circles: class 0 is the upper arc centred at the
/// origin, class 1 the lower arc centred at (1, 0.5).
pub fn gen_moons(n: usize, noise: f64, seed: u64) -> Result<Dataset> {
    check_synth_args(n, noise)?;
    let half = n / 2;
    let step = if half > 1 {
        std::f64::consts::PI / (half - 1) as f64
    } else {
        0.0
    };
    let mut points = Vec::with_capacity(n);
    for i in 0..half {
        let t = step * i as f64;
        points.push(([t.cos(), t.sin()], 0));
    }
    for i in 0..half {
        let t = step * i as f64;
        points.push(([1.0 - t.cos(), 0.5 - t.sin()], 1));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    finish_synth(points, noise, &mut rng)
}

/// Number of samples that go to the first part of a split.
pub fn split_size(n: usize, train_frac: f64) -> usize {
    // Guard against 0.7 * 10 = 7.000000000000001 rounding up to 8.
    let k = (train_frac * n as f64 - 1e-9).ceil();
    (k.max(0.0) as usize).min(n)
}

/// Random partition into `(train, test)` of sizes `ceil(frac * n)` and the rest.
pub fn split(ds: &Dataset, train_frac: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    if ds.is_empty() {
        return Err(Error::EmptyDataset("cannot split an empty dataset".into()));
    }
    if !(train_frac > 0.0 && train_frac < 1.0) {
        return Err(Error::invalid(format!(
            "train fraction must lie in (0, 1), got {train_frac}"
        )));
    }
    let mut order: Vec<usize> = (0..ds.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let k = split_size(ds.len(), train_frac);
    Ok((ds.subset(&order[..k]), ds.subset(&order[k..])))
}
