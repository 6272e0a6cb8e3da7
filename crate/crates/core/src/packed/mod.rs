//! Deployable binarized model: one bit per coefficient.
//!
//! Bit `k` of word `i` holds coefficient `64 * i + k`; a set bit means `+1`.
//! Factor signs are packed column-major, one run of `ceil(p / 64)` words per
//! factor. A one-hot sample is an [`ActiveMask`] with exactly `d` bits set,
//! and every sum of signs over its active set is `2 * popcount(mask & bits) - d`.

pub(crate) mod io;
mod memory;

pub use io::{read_bits_header, FORMAT_MAGIC, FORMAT_VERSION, FORMAT_VERSION_MULTI};
pub use memory::{memory_report, MemoryReport, MemoryRow};

use crate::binfm::{BinFmModel, Sign};
use crate::dataio::Sample;
use crate::encoder::BinningSpec;
use crate::error::{Error, Result};
use crate::ovr::{decide, head_count};
use crate::scalar::Scalar;

#[inline]
pub fn words_for(p: usize) -> usize {
    p.div_ceil(64)
}

/// Bitset over the `p` encoded indices of one sample.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ActiveMask {
    words: Vec<u64>,
    d: usize,
}

impl ActiveMask {
    pub fn from_active(active: &[usize], p: usize) -> Result<Self> {
        let mut words = vec![0u64; words_for(p)];
        for &j in active {
            if j >= p {
                return Err(Error::DimensionMismatch(format!(
                    "active index {j} >= p = {p}"
                )));
            }
            let bit = 1u64 << (j % 64);
            if words[j / 64] & bit != 0 {
                return Err(Error::invalid(format!("active index {j} repeated")));
            }
            words[j / 64] |= bit;
        }
        Ok(ActiveMask {
            words,
            d: active.len(),
        })
    }

    /// Wraps raw words; `d` is their popcount.
    pub fn from_words(words: Vec<u64>) -> Self {
        let d = words.iter().map(|w| w.count_ones() as usize).sum();
        ActiveMask { words, d }
    }

    pub fn words(&self) -> &[u64] {
        &self.words
    }

    pub fn count(&self) -> usize {
        self.d
    }
}

/// `sum_{j active} sign_j` as `2 * popcount(mask & bits) - d`.
#[inline]
pub fn signed_sum(mask: &[u64], bits: &[u64], d: usize) -> i64 {
    let hits: u32 = mask
        .iter()
        .zip(bits)
        .map(|(a, b)| (a & b).count_ones())
        .sum();
    2 * hits as i64 - d as i64
}

#[derive(Clone, Debug, PartialEq)]
pub struct PackedModel {
    p: usize,
    m: usize,
    alpha: f64,
    beta: f64,
    w_bits: Vec<u64>,
    /// `m` runs of `words_for(p)` words.
    v_bits: Vec<u64>,
    spec: BinningSpec,
}

fn pack_signs<'a>(signs: impl Iterator<Item = &'a Sign>, p: usize) -> Vec<u64> {
    let mut words = vec![0u64; words_for(p)];
    for (k, s) in signs.enumerate() {
        if s.is_plus() {
            words[k / 64] |= 1u64 << (k % 64);
        }
    }
    words
}

impl PackedModel {
    /// Packs the signs and scales of a trained model; proxies are dropped.
    pub fn pack<T: Scalar>(model: &BinFmModel<T>, spec: &BinningSpec) -> Result<Self> {
        let (p, m) = (model.p(), model.rank());
        if p != spec.p() {
            return Err(Error::DimensionMismatch(format!(
                "model has p = {p} but the binning spec encodes {}",
                spec.p()
            )));
        }
        let w_bits = pack_signs(model.sign_w().iter(), p);
        let mut v_bits = Vec::with_capacity(m * words_for(p));
        for f in 0..m {
            v_bits.extend(pack_signs((0..p).map(|j| &model.sign_v()[j * m + f]), p));
        }
        Self::from_parts(
            m,
            model.alpha().to_f64_lossy(),
            model.beta().to_f64_lossy(),
            w_bits,
            v_bits,
            spec.clone(),
        )
    }

    pub fn from_parts(
        m: usize,
        alpha: f64,
        beta: f64,
        w_bits: Vec<u64>,
        v_bits: Vec<u64>,
        spec: BinningSpec,
    ) -> Result<Self> {
        let p = spec.p();
        let words = words_for(p);
        if m == 0 {
            return Err(Error::Format("rank must be >= 1".into()));
        }
        if !(alpha.is_finite() && alpha > 0.0 && beta.is_finite() && beta > 0.0) {
            return Err(Error::Format(format!(
                "scales must be finite and positive, got {alpha}, {beta}"
            )));
        }
        if w_bits.len() != words || v_bits.len() != m * words {
            return Err(Error::Format("bit payload has the wrong length".into()));
        }
        let pad = padding_mask(p);
        if w_bits.last().is_some_and(|w| w & pad != 0)
            || v_bits
                .chunks(words)
                .any(|run| run.last().is_some_and(|w| w & pad != 0))
        {
            return Err(Error::Format("padding bits beyond p must be zero".into()));
        }
        Ok(PackedModel {
            p,
            m,
            alpha,
            beta,
            w_bits,
            v_bits,
            spec,
        })
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn rank(&self) -> usize {
        self.m
    }

    pub fn d(&self) -> usize {
        self.spec.d()
    }

    pub fn bins(&self) -> usize {
        self.spec.bins()
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn spec(&self) -> &BinningSpec {
        &self.spec
    }

    pub fn w_bits(&self) -> &[u64] {
        &self.w_bits
    }

    pub fn v_bits(&self) -> &[u64] {
        &self.v_bits
    }

    pub fn v_column(&self, f: usize) -> &[u64] {
        let words = words_for(self.p);
        &self.v_bits[f * words..(f + 1) * words]
    }

    /// Bits needed for the signs alone: `p * (1 + m)`.
    pub fn sign_payload_bits(&self) -> u64 {
        (self.p * (1 + self.m)) as u64
    }

    /// Signs of `w` and of `V` (row-major `p x m`).
    pub fn unpack_signs(&self) -> (Vec<Sign>, Vec<Sign>) {
        let bit = |words: &[u64], k: usize| {
            if words[k / 64] >> (k % 64) & 1 == 1 {
                Sign::Plus
            } else {
                Sign::Minus
            }
        };
        let w = (0..self.p).map(|j| bit(&self.w_bits, j)).collect();
        let mut v = Vec::with_capacity(self.p * self.m);
        for j in 0..self.p {
            for f in 0..self.m {
                v.push(bit(self.v_column(f), j));
            }
        }
        (w, v)
    }

    /// Score from bit operations only; the mask must have exactly `d` bits set.
    pub fn popcount_predict(&self, mask: &ActiveMask) -> Result<f64> {
        if mask.count() != self.d() || mask.words.len() != self.w_bits.len() {
            return Err(Error::DimensionMismatch(format!(
                "mask has {} active bits over {} words, model expects {} over {}",
                mask.count(),
                mask.words.len(),
                self.d(),
                self.w_bits.len()
            )));
        }
        Ok(self.score_unchecked(&mask.words))
    }

    #[inline]
    fn score_unchecked(&self, mask: &[u64]) -> f64 {
        let d = self.d();
        let linear = signed_sum(mask, &self.w_bits, d);
        let words = mask.len();
        let mut interaction = 0i64;
        for run in self.v_bits.chunks_exact(words) {
            let s = signed_sum(mask, run, d);
            interaction += s * s - d as i64;
        }
        self.alpha * linear as f64 + 0.5 * self.beta * self.beta * interaction as f64
    }

    /// Encodes a raw sample and scores it.
    pub fn predict_sample(&self, s: &Sample) -> Result<f64> {
        let z = self.spec.encode(s)?;
        let mask = ActiveMask::from_active(&z.active, self.p)?;
        self.popcount_predict(&mask)
    }
}

fn padding_mask(p: usize) -> u64 {
    match p % 64 {
        0 => 0,
        r => !0u64 << r,
    }
}

/// A set of packed heads sharing one binning spec, plus the label vocabulary.
#[derive(Clone, Debug, PartialEq)]
pub struct PackedClassifier {
    heads: Vec<PackedModel>,
    labels: Vec<String>,
}

impl PackedClassifier {
    pub fn new(heads: Vec<PackedModel>, labels: Vec<String>) -> Result<Self> {
        if labels.len() < 2 {
            return Err(Error::Format("a classifier needs at least 2 labels".into()));
        }
        if heads.len() != head_count(labels.len()) {
            return Err(Error::Format(format!(
                "{} labels need {} heads, got {}",
                labels.len(),
                head_count(labels.len()),
                heads.len()
            )));
        }
        let first = &heads[0];
        if heads.iter().any(|h| h.spec != first.spec || h.m != first.m) {
            return Err(Error::Format("heads must share rank and binning".into()));
        }
        Ok(PackedClassifier { heads, labels })
    }

    pub fn heads(&self) -> &[PackedModel] {
        &self.heads
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn classes(&self) -> usize {
        self.labels.len()
    }

    pub fn spec(&self) -> &BinningSpec {
        self.heads[0].spec()
    }

    /// Head scores for one sample, in head order.
    pub fn scores(&self, s: &Sample) -> Result<Vec<f64>> {
        let head = &self.heads[0];
        let z = head.spec.encode(s)?;
        let mask = ActiveMask::from_active(&z.active, head.p)?;
        Ok(self
            .heads
            .iter()
            .map(|h| h.score_unchecked(mask.words()))
            .collect())
    }

    pub fn predict(&self, s: &Sample) -> Result<usize> {
        Ok(decide(&self.scores(s)?, self.classes()))
    }
}
