//! Per-feature binning and one-hot encoding.
//!
//! Feature `j` with value `v` maps to encoded index `j * b + bin(v)`, where
//! `bin(v)` counts the cut points `<= v`. Bins are half-open
//! `[cut_{h-1}, cut_h)`, the last one closed above, and values outside the
//! fitted range clamp to the edge bins, so every encoded sample has exactly
//! `d` active indices.

use crate::dataio::{Dataset, Sample};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub enum BinStrategy {
    EqualWidth,
    #[default]
    Quantile,
}

impl BinStrategy {
    pub fn tag(self) -> u32 {
        match self {
            BinStrategy::EqualWidth => 0,
            BinStrategy::Quantile => 1,
        }
    }

    pub fn from_tag(tag: u32) -> Option<Self> {
        match tag {
            0 => Some(BinStrategy::EqualWidth),
            1 => Some(BinStrategy::Quantile),
            _ => None,
        }
    }
}

impl std::str::FromStr for BinStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "equal" | "equal-width" => Ok(BinStrategy::EqualWidth),
            "quantile" => Ok(BinStrategy::Quantile),
            other => Err(Error::invalid(format!("unknown bin strategy {other:?}"))),
        }
    }
}

impl std::fmt::Display for BinStrategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            BinStrategy::EqualWidth => "equal",
            BinStrategy::Quantile => "quantile",
        })
    }
}

/// Cut points for every input feature.
#[derive(Clone, Debug, PartialEq)]
pub struct BinningSpec {
    d: usize,
    bins: usize,
    strategy: BinStrategy,
    /// `d` rows of `bins - 1` nondecreasing cut points, row-major.
    cuts: Vec<f64>,
}

impl BinningSpec {
    /// Assembles a spec from explicit cut points (row-major, `bins - 1` per feature).
    pub fn from_cuts(d: usize, bins: usize, strategy: BinStrategy, cuts: Vec<f64>) -> Result<Self> {
        if d == 0 {
            return Err(Error::invalid("binning needs at least one feature"));
        }
        if bins < 2 {
            return Err(Error::invalid(format!("bins must be >= 2, got {bins}")));
        }
        if cuts.len() != d * (bins - 1) {
            return Err(Error::invalid(format!(
                "expected {} cut points, got {}",
                d * (bins - 1),
                cuts.len()
            )));
        }
        for row in cuts.chunks(bins - 1) {
            if row.iter().any(|c| !c.is_finite()) {
                return Err(Error::invalid("cut points must be finite"));
            }
            if row.windows(2).any(|w| w[0] > w[1]) {
                return Err(Error::invalid("cut points must be nondecreasing"));
            }
        }
        Ok(BinningSpec {
            d,
            bins,
            strategy,
            cuts,
        })
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn bins(&self) -> usize {
        self.bins
    }

    /// Encoded dimensionality `d * b`.
    pub fn p(&self) -> usize {
        self.d * self.bins
    }

    pub fn strategy(&self) -> BinStrategy {
        self.strategy
    }

    pub fn cuts(&self, feature: usize) -> &[f64] {
        let w = self.bins - 1;
        &self.cuts[feature * w..(feature + 1) * w]
    }

    pub fn all_cuts(&self) -> &[f64] {
        &self.cuts
    }

    /// Bin of `value` for `feature`; ties with a cut resolve to the higher bin.
    #[inline]
    pub fn bin(&self, feature: usize, value: f64) -> usize {
        self.cuts(feature).partition_point(|&c| c <= value)
    }

    /// Encodes a sample; absent features are read as 0.
    pub fn encode(&self, s: &Sample) -> Result<EncodedSample> {
        let mut active = Vec::with_capacity(self.d);
        let mut it = s.features.iter().peekable();
        for j in 0..self.d {
            let mut value = 0.0;
            while let Some(&&(i, v)) = it.peek() {
                if i > j {
                    break;
                }
                if i == j {
                    value = v;
                }
                it.next();
            }
            if !value.is_finite() {
                return Err(Error::invalid(format!("non-finite value for feature {j}")));
            }
            active.push(j * self.bins + self.bin(j, value));
        }
        if let Some(&(i, _)) = it.next() {
            return Err(Error::DimensionMismatch(format!(
                "feature index {i} outside the {} features the bins were fit on",
                self.d
            )));
        }
        Ok(EncodedSample {
            active,
            label: s.label,
        })
    }

    pub fn encode_dataset(&self, ds: &Dataset) -> Result<EncodedDataset> {
        let samples = ds
            .samples()
            .iter()
            .map(|s| self.encode(s))
            .collect::<Result<Vec<_>>>()?;
        Ok(EncodedDataset {
            samples,
            p: self.p(),
            d: self.d,
            classes: ds.classes(),
        })
    }
}

/// One-hot encoded sample: one active index per input feature, values all 1.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EncodedSample {
    /// Increasing, one index per block `[j*b, (j+1)*b)`.
    pub active: Vec<usize>,
    pub label: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EncodedDataset {
    pub samples: Vec<EncodedSample>,
    pub p: usize,
    pub d: usize,
    pub classes: usize,
}

impl EncodedDataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn labels(&self) -> Vec<usize> {
        self.samples.iter().map(|s| s.label).collect()
    }
}

/// Fits `bins` bins per feature over the dense view of `ds`.
pub fn fit_bins(ds: &Dataset, bins: usize, strategy: BinStrategy) -> Result<BinningSpec> {
    if bins < 2 {
        return Err(Error::invalid(format!("bins must be >= 2, got {bins}")));
    }
    if ds.is_empty() {
        return Err(Error::EmptyDataset(
            "cannot fit bins on an empty dataset".into(),
        ));
    }
    let n = ds.len();
    let d = ds.dim();

    let mut columns: Vec<Vec<f64>> = vec![Vec::new(); d];
    for s in ds.samples() {
        for &(i, v) in &s.features {
            columns[i].push(v);
        }
    }

    let mut cuts = Vec::with_capacity(d * (bins - 1));
    for mut col in columns {
        // Samples without an explicit entry hold an implicit zero.
        let zeros = n - col.len();
        col.sort_by(f64::total_cmp);
        let column = Column {
            sorted: &col,
            zeros,
        };
        match strategy {
            BinStrategy::EqualWidth => {
                let (lo, hi) = (column.at(0), column.at(n - 1));
                let width = hi - lo;
                cuts.extend((1..bins).map(|h| lo + width * h as f64 / bins as f64));
            }
            BinStrategy::Quantile => {
                cuts.extend((1..bins).map(|h| column.quantile(h as f64 / bins as f64)));
            }
        }
    }
    BinningSpec::from_cuts(d, bins, strategy, cuts)
}

/// Sorted explicit values plus a count of implicit zeros.
struct Column<'a> {
    sorted: &'a [f64],
    zeros: usize,
}

impl Column<'_> {
    fn len(&self) -> usize {
        self.sorted.len() + self.zeros
    }

    /// Order statistic `rank` of the column with zeros merged in.
    fn at(&self, rank: usize) -> f64 {
        let neg = self.sorted.partition_point(|&v| v < 0.0);
        if rank < neg {
            self.sorted[rank]
        } else if rank < neg + self.zeros {
            0.0
        } else {
            self.sorted[rank - self.zeros]
        }
    }

    /// Linearly interpolated empirical quantile.
    fn quantile(&self, q: f64) -> f64 {
        let pos = q * (self.len() - 1) as f64;
        let lo = pos.floor() as usize;
        let hi = (lo + 1).min(self.len() - 1);
        let frac = pos - lo as f64;
        let (a, b) = (self.at(lo), self.at(hi));
        if frac == 0.0 {
            a
        } else {
            a + (b - a) * frac
        }
    }
}

/// Fraction of samples in which each encoded index is active.
#[derive(Clone, Debug, PartialEq)]
pub struct SparsityReport {
    pub d: usize,
    pub bins: usize,
    /// Length `p`, indexed like the encoded features.
    pub rates: Vec<f64>,
}

impl SparsityReport {
    pub fn feature_rates(&self, feature: usize) -> &[f64] {
        &self.rates[feature * self.bins..(feature + 1) * self.bins]
    }

    pub fn mean_rate(&self) -> f64 {
        self.rates.iter().sum::<f64>() / self.rates.len() as f64
    }

    /// CSV with columns `feature,bin,index,rate`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("feature,bin,index,rate\n");
        for (idx, rate) in self.rates.iter().enumerate() {
            out.push_str(&format!(
                "{},{},{},{}\n",
                idx / self.bins,
                idx % self.bins,
                idx,
                rate
            ));
        }
        out
    }
}

pub fn sparsity_report(spec: &BinningSpec, ds: &Dataset) -> Result<SparsityReport> {
    if ds.is_empty() {
        return Err(Error::EmptyDataset("sparsity of an empty dataset".into()));
    }
    let mut counts = vec![0usize; spec.p()];
    for s in ds.samples() {
        for idx in spec.encode(s)?.active {
            counts[idx] += 1;
        }
    }
    let n = ds.len() as f64;
    Ok(SparsityReport {
        d: spec.d(),
        bins: spec.bins(),
        rates: counts.into_iter().map(|c| c as f64 / n).collect(),
    })
}
