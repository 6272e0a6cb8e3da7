//! Saved classifiers: the bit-packed `BFM1` format for binarized models and
//! `FMF1` for the full-precision FM / SEFM baselines.
//!
//! `FMF1` layout, little-endian:
//!
//! ```text
//! "FMF1" | version u32 | kind u32 (0 = fm, 1 = sefm) | p, m, d, b u64
//!        | sefm only: strategy u32 | d * (b - 1) cut points f64
//!        | classes u64 | classes * (len u32, utf-8 bytes)
//!        | heads u64 | heads * (w: p f64, V: p * m f64 row-major)
//! ```
//!
//! For `fm`, `b` is 0 and `p = d`.

use std::io::{Read, Write};
use std::path::Path;

use crate::dataio::Sample;
use crate::encoder::BinningSpec;
use crate::error::{Error, Result};
use crate::fm::FmModel;
use crate::ovr::{decide, head_count};
use crate::packed::io::wire::*;
use crate::packed::io::{load_with, save_with};
use crate::packed::{memory_report, MemoryReport, PackedClassifier, FORMAT_MAGIC};

pub const FLOAT_MAGIC: [u8; 4] = *b"FMF1";
pub const FLOAT_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum FloatKind {
    /// FM on the raw features.
    Fm,
    /// FM on one-hot encoded features.
    Sefm,
}

/// Full-precision one-vs-rest classifier.
#[derive(Clone, Debug, PartialEq)]
pub struct FloatClassifier {
    kind: FloatKind,
    d: usize,
    spec: Option<BinningSpec>,
    heads: Vec<FmModel<f64>>,
    labels: Vec<String>,
}

impl FloatClassifier {
    pub fn fm(d: usize, heads: Vec<FmModel<f64>>, labels: Vec<String>) -> Result<Self> {
        Self::checked(FloatKind::Fm, d, None, heads, labels)
    }

    pub fn sefm(spec: BinningSpec, heads: Vec<FmModel<f64>>, labels: Vec<String>) -> Result<Self> {
        Self::checked(FloatKind::Sefm, spec.d(), Some(spec), heads, labels)
    }

    fn checked(
        kind: FloatKind,
        d: usize,
        spec: Option<BinningSpec>,
        heads: Vec<FmModel<f64>>,
        labels: Vec<String>,
    ) -> Result<Self> {
        if labels.len() < 2 || heads.len() != head_count(labels.len()) {
            return Err(Error::Format(format!(
                "{} labels cannot pair with {} heads",
                labels.len(),
                heads.len()
            )));
        }
        let p = spec.as_ref().map_or(d, |s| s.p());
        if heads
            .iter()
            .any(|h| h.p() != p || h.rank() != heads[0].rank())
        {
            return Err(Error::Format("heads disagree on dimensions".into()));
        }
        Ok(FloatClassifier {
            kind,
            d,
            spec,
            heads,
            labels,
        })
    }

    pub fn kind(&self) -> FloatKind {
        self.kind
    }

    pub fn heads(&self) -> &[FmModel<f64>] {
        &self.heads
    }

    pub fn spec(&self) -> Option<&BinningSpec> {
        self.spec.as_ref()
    }

    fn row(&self, s: &Sample) -> Result<Vec<(usize, f64)>> {
        match &self.spec {
            Some(spec) => Ok(spec
                .encode(s)?
                .active
                .into_iter()
                .map(|j| (j, 1.0))
                .collect()),
            None => {
                if let Some(&(i, _)) = s.features.iter().find(|&&(i, _)| i >= self.d) {
                    return Err(Error::DimensionMismatch(format!(
                        "feature index {i} outside the model's {} features",
                        self.d
                    )));
                }
                Ok(s.features.clone())
            }
        }
    }

    pub fn scores(&self, s: &Sample) -> Result<Vec<f64>> {
        let row = self.row(s)?;
        Ok(self.heads.iter().map(|h| h.predict(&row)).collect())
    }

    pub fn write_to(&self, w: &mut impl Write) -> std::io::Result<()> {
        w.write_all(&FLOAT_MAGIC)?;
        put_u32(w, FLOAT_VERSION)?;
        put_u32(w, matches!(self.kind, FloatKind::Sefm) as u32)?;
        let (p, m) = (self.heads[0].p(), self.heads[0].rank());
        let b = self.spec.as_ref().map_or(0, |s| s.bins());
        for v in [p, m, self.d, b] {
            put_u64(w, v as u64)?;
        }
        if let Some(spec) = &self.spec {
            put_spec(w, spec)?;
        }
        put_u64(w, self.labels.len() as u64)?;
        for l in &self.labels {
            put_str(w, l)?;
        }
        put_u64(w, self.heads.len() as u64)?;
        for h in &self.heads {
            h.w().iter().chain(h.v()).try_for_each(|&x| put_f64(w, x))?;
        }
        Ok(())
    }

    pub fn read_from(r: &mut impl Read) -> Result<Self> {
        let magic = get::<4>(r)?;
        if magic != FLOAT_MAGIC {
            return Err(Error::Format(format!(
                "bad magic {magic:?}, expected \"FMF1\""
            )));
        }
        let version = get_u32(r)?;
        if version != FLOAT_VERSION {
            return Err(Error::Format(format!("unsupported version {version}")));
        }
        let kind = match get_u32(r)? {
            0 => FloatKind::Fm,
            1 => FloatKind::Sefm,
            k => return Err(Error::Format(format!("unknown model kind {k}"))),
        };
        let p = get_usize(r, "p")?;
        let m = get_usize(r, "m")?;
        let d = get_usize(r, "d")?;
        let b = get_usize(r, "b")?;
        if d == 0 || m == 0 {
            return Err(Error::Format(format!("invalid dimensions d={d} m={m}")));
        }
        let spec = match kind {
            FloatKind::Fm if b == 0 && p == d => None,
            FloatKind::Sefm if b >= 2 && d.checked_mul(b) == Some(p) => Some(get_spec(r, d, b)?),
            _ => {
                return Err(Error::Format(format!(
                    "inconsistent dimensions p={p} d={d} b={b}"
                )))
            }
        };
        let classes = get_usize(r, "class count")?;
        let labels = get_many(r, classes, get_str)?;
        let n_heads = get_usize(r, "head count")?;
        if classes < 2 || n_heads != head_count(classes) {
            return Err(Error::Format(format!(
                "{classes} classes but {n_heads} heads"
            )));
        }
        let per_head = p
            .checked_mul(m + 1)
            .ok_or_else(|| Error::Format("payload size overflows".into()))?;
        let mut heads = Vec::with_capacity(n_heads);
        for _ in 0..n_heads {
            let mut params = get_many(r, per_head, get_f64)?;
            let v = params.split_off(p);
            heads.push(
                FmModel::from_parts(p, m, params, v).map_err(|e| Error::Format(e.to_string()))?,
            );
        }
        Self::checked(kind, d, spec, heads, labels)
    }
}

/// Any saved classifier.
#[derive(Clone, Debug, PartialEq)]
pub enum SavedModel {
    Binarized(PackedClassifier),
    Float(FloatClassifier),
}

impl SavedModel {
    pub fn kind_name(&self) -> &'static str {
        match self {
            SavedModel::Binarized(_) => "binfm",
            SavedModel::Float(f) if f.kind == FloatKind::Fm => "fm",
            SavedModel::Float(_) => "sefm",
        }
    }

    /// Number of raw input features.
    pub fn input_dim(&self) -> usize {
        match self {
            SavedModel::Binarized(c) => c.spec().d(),
            SavedModel::Float(f) => f.d,
        }
    }

    pub fn labels(&self) -> &[String] {
        match self {
            SavedModel::Binarized(c) => c.labels(),
            SavedModel::Float(f) => &f.labels,
        }
    }

    pub fn classes(&self) -> usize {
        self.labels().len()
    }

    pub fn rank(&self) -> usize {
        match self {
            SavedModel::Binarized(c) => c.heads()[0].rank(),
            SavedModel::Float(f) => f.heads[0].rank(),
        }
    }

    /// Bins per feature, or 1 for a raw-feature FM.
    pub fn bins(&self) -> usize {
        match self {
            SavedModel::Binarized(c) => c.spec().bins(),
            SavedModel::Float(f) => f.spec.as_ref().map_or(1, |s| s.bins()),
        }
    }

    pub fn heads(&self) -> usize {
        match self {
            SavedModel::Binarized(c) => c.heads().len(),
            SavedModel::Float(f) => f.heads.len(),
        }
    }

    pub fn scores(&self, s: &Sample) -> Result<Vec<f64>> {
        match self {
            SavedModel::Binarized(c) => c.scores(s),
            SavedModel::Float(f) => f.scores(s),
        }
    }

    pub fn predict(&self, s: &Sample) -> Result<usize> {
        Ok(decide(&self.scores(s)?, self.classes()))
    }

    /// Memory table for this model's `d`, `b` and `m`, per head.
    pub fn memory_report(&self) -> MemoryReport {
        memory_report(
            self.input_dim() as u64,
            self.bins() as u64,
            self.rank() as u64,
        )
    }

    pub fn write_to(&self, w: &mut impl Write) -> std::io::Result<()> {
        match self {
            SavedModel::Binarized(c) => c.write_to(w),
            SavedModel::Float(f) => f.write_to(w),
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        self.write_to(&mut buf)
            .expect("writing to a Vec cannot fail");
        buf
    }

    pub fn from_bytes(mut bytes: &[u8]) -> Result<Self> {
        let model = Self::read_from(&mut bytes)?;
        expect_eof(&mut bytes)?;
        Ok(model)
    }

    /// Dispatches on the magic bytes.
    pub fn read_from(r: &mut impl Read) -> Result<Self> {
        let magic = get::<4>(r)?;
        let mut chained = magic.as_slice().chain(r);
        if magic == FORMAT_MAGIC {
            PackedClassifier::read_from(&mut chained).map(SavedModel::Binarized)
        } else if magic == FLOAT_MAGIC {
            FloatClassifier::read_from(&mut chained).map(SavedModel::Float)
        } else {
            Err(Error::Format(format!(
                "unrecognized model file (magic {magic:?})"
            )))
        }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        save_with(path.as_ref(), |w| self.write_to(w))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        load_with(path.as_ref(), |r| {
            let model = Self::read_from(r)?;
            expect_eof(r)?;
            Ok(model)
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoder::BinStrategy;

    fn labels() -> Vec<String> {
        vec!["-1".into(), "1".into()]
    }

    #[test]
    fn fm_roundtrip_and_scoring() {
        let head = FmModel::from_parts(2, 1, vec![0.1, 0.2], vec![1.0, 3.0]).unwrap();
        let clf = SavedModel::Float(FloatClassifier::fm(2, vec![head], labels()).unwrap());
        let back = SavedModel::from_bytes(&clf.to_bytes()).unwrap();
        assert_eq!(back, clf);
        let s = Sample::new(vec![(0, 1.0), (1, 2.0)], 0);
        assert!((back.scores(&s).unwrap()[0] - 6.5).abs() < 1e-12);
        assert_eq!(back.predict(&s).unwrap(), 1);
        assert!(back.scores(&Sample::new(vec![(4, 1.0)], 0)).is_err());
    }

    #[test]
    fn sefm_roundtrip() {
        let spec =
            BinningSpec::from_cuts(2, 3, BinStrategy::Quantile, vec![0.0, 1.0, 0.5, 0.7]).unwrap();
        let heads = (0..3)
            .map(|k| FmModel::from_parts(6, 2, vec![k as f64; 6], vec![0.25; 12]).unwrap())
            .collect();
        let clf =
            FloatClassifier::sefm(spec, heads, vec!["a".into(), "b".into(), "c".into()]).unwrap();
        let saved = SavedModel::Float(clf);
        let back = SavedModel::from_bytes(&saved.to_bytes()).unwrap();
        assert_eq!(back, saved);
        assert_eq!(back.kind_name(), "sefm");
        assert_eq!(back.predict(&Sample::new(vec![(0, 2.0)], 0)).unwrap(), 2);
    }

    #[test]
    fn rejects_unknown_magic() {
        assert!(matches!(
            SavedModel::from_bytes(b"NOPE1234"),
            Err(Error::Format(_))
        ));
        assert!(matches!(
            SavedModel::from_bytes(b"FM"),
            Err(Error::Format(_))
        ));
    }
}
