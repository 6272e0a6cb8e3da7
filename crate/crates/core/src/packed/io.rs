//! The `BFM1` model file.
//!
//! All integers and floats are little-endian:
//!
//! ```text
//! "BFM1" | version u32 | p, m, d, b u64 | alpha, beta f64
//!        | strategy u32 | d * (b - 1) cut points f64
//!        | w_bits: ceil(p/64) u64 | v_bits: m * ceil(p/64) u64
//! ```
//!
//! Version 1 ends there and holds a single binary head. Version 2 appends
//! the label vocabulary and the remaining one-vs-rest heads:
//!
//! ```text
//!        | classes u64 | classes * (len u32, utf-8 bytes)
//!        | heads u64 | (heads - 1) * (alpha f64, beta f64, w_bits, v_bits)
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{words_for, PackedClassifier, PackedModel};
use crate::encoder::{BinStrategy, BinningSpec};
use crate::error::{Error, Result};
use crate::ovr::head_count;

pub const FORMAT_MAGIC: [u8; 4] = *b"BFM1";
pub const FORMAT_VERSION: u32 = 1;
pub const FORMAT_VERSION_MULTI: u32 = 2;

/// Little-endian primitives shared by the model file formats.
pub(crate) mod wire {
    use super::*;

    pub fn io_err(e: std::io::Error) -> Error {
        if e.kind() == std::io::ErrorKind::UnexpectedEof {
            Error::Format("truncated file".into())
        } else {
            Error::Format(format!("read failed: {e}"))
        }
    }

    pub fn put_u32(w: &mut impl Write, v: u32) -> std::io::Result<()> {
        w.write_all(&v.to_le_bytes())
    }

    pub fn put_u64(w: &mut impl Write, v: u64) -> std::io::Result<()> {
        w.write_all(&v.to_le_bytes())
    }

    pub fn put_f64(w: &mut impl Write, v: f64) -> std::io::Result<()> {
        w.write_all(&v.to_le_bytes())
    }

    pub fn put_str(w: &mut impl Write, s: &str) -> std::io::Result<()> {
        put_u32(w, s.len() as u32)?;
        w.write_all(s.as_bytes())
    }

    pub fn get<const N: usize>(r: &mut impl Read) -> Result<[u8; N]> {
        let mut buf = [0u8; N];
        r.read_exact(&mut buf).map_err(io_err)?;
        Ok(buf)
    }

    pub fn get_u32(r: &mut impl Read) -> Result<u32> {
        get::<4>(r).map(u32::from_le_bytes)
    }

    pub fn get_u64(r: &mut impl Read) -> Result<u64> {
        get::<8>(r).map(u64::from_le_bytes)
    }

    pub fn get_f64(r: &mut impl Read) -> Result<f64> {
        get::<8>(r).map(f64::from_le_bytes)
    }

    pub fn get_usize(r: &mut impl Read, what: &str) -> Result<usize> {
        let v = get_u64(r)?;
        usize::try_from(v).map_err(|_| Error::Format(format!("{what} {v} does not fit in memory")))
    }

    pub fn get_str(r: &mut impl Read) -> Result<String> {
        let len = get_u32(r)? as usize;
        let mut bytes = Vec::new();
        r.take(len as u64).read_to_end(&mut bytes).map_err(io_err)?;
        if bytes.len() != len {
            return Err(Error::Format("truncated file".into()));
        }
        String::from_utf8(bytes).map_err(|_| Error::Format("label is not valid UTF-8".into()))
    }

    /// Reads `n` values one at a time so a corrupt count cannot force a huge allocation.
    pub fn get_many<R: Read, T>(
        r: &mut R,
        n: usize,
        mut f: impl FnMut(&mut R) -> Result<T>,
    ) -> Result<Vec<T>> {
        let mut out = Vec::with_capacity(n.min(1 << 16));
        for _ in 0..n {
            out.push(f(r)?);
        }
        Ok(out)
    }

    pub fn put_spec(w: &mut impl Write, spec: &BinningSpec) -> std::io::Result<()> {
        put_u32(w, spec.strategy().tag())?;
        spec.all_cuts().iter().try_for_each(|&c| put_f64(w, c))
    }

    pub fn get_spec(r: &mut impl Read, d: usize, b: usize) -> Result<BinningSpec> {
        let tag = get_u32(r)?;
        let strategy = BinStrategy::from_tag(tag)
            .ok_or_else(|| Error::Format(format!("unknown bin strategy tag {tag}")))?;
        let n = d
            .checked_mul(b - 1)
            .ok_or_else(|| Error::Format("binning dimensions overflow".into()))?;
        let cuts = get_many(r, n, get_f64)?;
        BinningSpec::from_cuts(d, b, strategy, cuts).map_err(|e| Error::Format(e.to_string()))
    }

    /// Fails unless the reader is exhausted.
    pub fn expect_eof(r: &mut impl Read) -> Result<()> {
        let mut probe = [0u8; 1];
        match r.read(&mut probe) {
            Ok(0) => Ok(()),
            Ok(_) => Err(Error::Format("trailing bytes after model".into())),
            Err(e) => Err(io_err(e)),
        }
    }
}

use wire::*;

struct Header {
    version: u32,
    m: usize,
    d: usize,
    b: usize,
}

fn write_bits(w: &mut impl Write, bits: &[u64]) -> std::io::Result<()> {
    bits.iter().try_for_each(|&x| put_u64(w, x))
}

fn read_bits(r: &mut impl Read, n: usize) -> Result<Vec<u64>> {
    get_many(r, n, get_u64)
}

fn write_head_body(w: &mut impl Write, head: &PackedModel) -> std::io::Result<()> {
    put_f64(w, head.alpha)?;
    put_f64(w, head.beta)?;
    write_bits(w, &head.w_bits)?;
    write_bits(w, &head.v_bits)
}

fn write_first(w: &mut impl Write, head: &PackedModel, version: u32) -> std::io::Result<()> {
    w.write_all(&FORMAT_MAGIC)?;
    put_u32(w, version)?;
    for v in [head.p, head.m, head.d(), head.bins()] {
        put_u64(w, v as u64)?;
    }
    put_f64(w, head.alpha)?;
    put_f64(w, head.beta)?;
    put_spec(w, &head.spec)?;
    write_bits(w, &head.w_bits)?;
    write_bits(w, &head.v_bits)
}

/// Reads magic, version and dimensions, validating `p = d * b`.
fn read_header(r: &mut impl Read, accepted: &[u32]) -> Result<(Header, usize)> {
    let magic = get::<4>(r)?;
    if magic != FORMAT_MAGIC {
        return Err(Error::Format(format!(
            "bad magic {magic:?}, expected \"BFM1\""
        )));
    }
    let version = get_u32(r)?;
    if !accepted.contains(&version) {
        return Err(Error::Format(format!("unsupported version {version}")));
    }
    let p = get_usize(r, "p")?;
    let m = get_usize(r, "m")?;
    let d = get_usize(r, "d")?;
    let b = get_usize(r, "b")?;
    if d == 0 || b < 2 || m == 0 {
        return Err(Error::Format(format!(
            "invalid dimensions d={d} b={b} m={m}"
        )));
    }
    if d.checked_mul(b) != Some(p) {
        return Err(Error::Format(format!("p = {p} but d * b = {d} * {b}")));
    }
    Ok((Header { version, m, d, b }, p))
}

fn read_head_bits(r: &mut impl Read, p: usize, m: usize) -> Result<(Vec<u64>, Vec<u64>)> {
    let words = words_for(p);
    let v_words = m
        .checked_mul(words)
        .ok_or_else(|| Error::Format("payload size overflows".into()))?;
    let w_bits = read_bits(r, words)?;
    let v_bits = read_bits(r, v_words)?;
    Ok((w_bits, v_bits))
}

fn read_first(r: &mut impl Read, accepted: &[u32]) -> Result<(u32, PackedModel)> {
    let (h, p) = read_header(r, accepted)?;
    let alpha = get_f64(r)?;
    let beta = get_f64(r)?;
    let spec = get_spec(r, h.d, h.b)?;
    let (w_bits, v_bits) = read_head_bits(r, p, h.m)?;
    Ok((
        h.version,
        PackedModel::from_parts(h.m, alpha, beta, w_bits, v_bits, spec)?,
    ))
}

impl PackedModel {
    pub fn write_to(&self, w: &mut impl Write) -> std::io::Result<()> {
        write_first(w, self, FORMAT_VERSION)
    }

    /// Reads a version-1 model. Bytes after it are left unread.
    pub fn read_from(r: &mut impl Read) -> Result<Self> {
        read_first(r, &[FORMAT_VERSION]).map(|(_, m)| m)
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

impl PackedClassifier {
    /// Writes version 2: the first head in the version-1 layout, then the trailer.
    pub fn write_to(&self, w: &mut impl Write) -> std::io::Result<()> {
        write_first(w, &self.heads[0], FORMAT_VERSION_MULTI)?;
        put_u64(w, self.labels.len() as u64)?;
        for label in &self.labels {
            put_str(w, label)?;
        }
        put_u64(w, self.heads.len() as u64)?;
        self.heads[1..]
            .iter()
            .try_for_each(|h| write_head_body(w, h))
    }

    /// Reads version 2, or version 1 as a binary classifier labelled "0"/"1".
    pub fn read_from(r: &mut impl Read) -> Result<Self> {
        let (version, first) = read_first(r, &[FORMAT_VERSION, FORMAT_VERSION_MULTI])?;
        if version == FORMAT_VERSION {
            return PackedClassifier::new(vec![first], vec!["0".into(), "1".into()]);
        }
        let classes = get_usize(r, "class count")?;
        if classes < 2 {
            return Err(Error::Format(format!("class count {classes} < 2")));
        }
        let labels = get_many(r, classes, get_str)?;
        let heads = get_usize(r, "head count")?;
        if heads != head_count(classes) {
            return Err(Error::Format(format!(
                "{classes} classes but {heads} heads"
            )));
        }
        let mut all = vec![first];
        for _ in 1..heads {
            let alpha = get_f64(r)?;
            let beta = get_f64(r)?;
            let (w_bits, v_bits) = read_head_bits(r, all[0].p, all[0].m)?;
            all.push(PackedModel::from_parts(
                all[0].m,
                alpha,
                beta,
                w_bits,
                v_bits,
                all[0].spec.clone(),
            )?);
        }
        PackedClassifier::new(all, labels)
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

/// Reads the magic and version of a `BFM1` stream without consuming the rest.
pub fn read_bits_header(bytes: &[u8]) -> Option<u32> {
    if bytes.len() >= 8 && bytes[..4] == FORMAT_MAGIC {
        Some(u32::from_le_bytes(bytes[4..8].try_into().ok()?))
    } else {
        None
    }
}

pub(crate) fn save_with(
    path: &Path,
    write: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>,
) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    write(&mut w)
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(path, e))
}

pub(crate) fn load_with<T>(
    path: &Path,
    read: impl FnOnce(&mut BufReader<File>) -> Result<T>,
) -> Result<T> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read(&mut BufReader::new(file))
}
