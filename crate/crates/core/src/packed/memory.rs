//! Parameter memory of the FM variants, in bits.
//!
//! Full-precision coefficients count 32 bits each. Only `w` and `V` are
//! counted; scales and bin boundaries are reported separately by the file
//! size of a saved model.

use std::fmt;

#[derive(Clone, Debug, PartialEq)]
pub struct MemoryRow {
    pub method: &'static str,
    pub formula: &'static str,
    pub bits: u64,
    /// `bits / fm_bits`.
    pub ratio: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MemoryReport {
    pub d: u64,
    pub b: u64,
    pub m: u64,
    pub rows: Vec<MemoryRow>,
}

/// Bits for FM, SEFM, DFM and the binarized FM on `d` features, `b` bins, rank `m`.
pub fn memory_report(d: u64, b: u64, m: u64) -> MemoryReport {
    let fm = 32 * (d + m * d);
    let entries = [
        ("FM", "32 x (d + m x d)", fm),
        ("SEFM", "32 x (d x b + m x d x b)", 32 * (d * b + m * d * b)),
        ("DFM", "32 x d + m x d", 32 * d + m * d),
        ("Binarized FM", "d x b + m x d x b", d * b + m * d * b),
    ];
    MemoryReport {
        d,
        b,
        m,
        rows: entries
            .into_iter()
            .map(|(method, formula, bits)| MemoryRow {
                method,
                formula,
                bits,
                ratio: bits as f64 / fm as f64,
            })
            .collect(),
    }
}

impl MemoryReport {
    pub fn row(&self, method: &str) -> Option<&MemoryRow> {
        self.rows.iter().find(|r| r.method == method)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("method,formula,bits,ratio_vs_fm\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{}\n",
                r.method, r.formula, r.bits, r.ratio
            ));
        }
        out
    }
}

impl fmt::Display for MemoryReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "memory (d={}, b={}, m={}):", self.d, self.b, self.m)?;
        for r in &self.rows {
            writeln!(
                f,
                "  {:<13} {:>14} bits  {:>8.4}x FM   [{}]",
                r.method, r.bits, r.ratio, r.formula
            )?;
        }
        Ok(())
    }
}
