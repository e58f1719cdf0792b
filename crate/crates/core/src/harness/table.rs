use std::collections::HashSet;
use std::path::Path;

use crate::error::{Error, Result};

pub const CSV_HEADER: [&str; 6] = ["key", "scheme", "statistic", "value", "std_err", "n"];

#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    /// Time step, SNR in dB, or a summary label such as `steady`.
    pub key: String,
    pub scheme: String,
    pub statistic: String,
    pub value: f64,
    pub std_err: f64,
    pub n: u64,
}

/// Rows in insertion order, unique on `(key, scheme, statistic)`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ResultTable {
    rows: Vec<ResultRow>,
    index: HashSet<(String, String, String)>,
}

impl ResultTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(
        &mut self,
        key: impl Into<String>,
        scheme: impl Into<String>,
        statistic: impl Into<String>,
        value: f64,
        std_err: f64,
        n: u64,
    ) -> Result<()> {
        let row = ResultRow {
            key: key.into(),
            scheme: scheme.into(),
            statistic: statistic.into(),
            value,
            std_err,
            n,
        };
        if !(row.std_err >= 0.0) {
            return Err(Error::invalid(format!(
                "std_err of ({}, {}, {}) must be nonnegative, got {}",
                row.key, row.scheme, row.statistic, row.std_err
            )));
        }
        let id = (row.key.clone(), row.scheme.clone(), row.statistic.clone());
        if !self.index.insert(id) {
            return Err(Error::invalid(format!(
                "duplicate row ({}, {}, {})",
                row.key, row.scheme, row.statistic
            )));
        }
        self.rows.push(row);
        Ok(())
    }

    pub fn rows(&self) -> &[ResultRow] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn get(&self, key: &str, scheme: &str, statistic: &str) -> Option<&ResultRow> {
        self.rows
            .iter()
            .find(|r| r.key == key && r.scheme == scheme && r.statistic == statistic)
    }

    pub fn extend(&mut self, other: ResultTable) -> Result<()> {
        for r in other.rows {
            self.push(r.key, r.scheme, r.statistic, r.value, r.std_err, r.n)?;
        }
        Ok(())
    }
}

/// Decimal rendering with 9 significant digits and trailing zeros removed;
/// scientific notation outside `[1e−5, 1e9)`.
pub fn format_value(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0".into();
    }
    let sci = format!("{x:.8e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-5..9).contains(&exp) {
        let decimals = (8 - exp).max(0) as usize;
        trim_zeros(format!("{x:.decimals$}"))
    } else {
        format!("{}e{exp}", trim_zeros(mantissa.to_string()))
    }
}

fn trim_zeros(s: String) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

/// Writes the table as CSV with a header row and LF line endings.
pub fn export_csv(table: &ResultTable, path: &Path) -> Result<()> {
    let csv_err = |source| Error::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(path)
        .map_err(csv_err)?;
    w.write_record(CSV_HEADER).map_err(csv_err)?;
    for r in table.rows() {
        w.write_record([
            r.key.as_str(),
            r.scheme.as_str(),
            r.statistic.as_str(),
            &format_value(r.value),
            &format_value(r.std_err),
            &r.n.to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.flush().map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Reads a file written by [`export_csv`].
pub fn import_csv(path: &Path) -> Result<ResultTable> {
    let csv_err = |source| Error::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut rd = csv::Reader::from_path(path).map_err(csv_err)?;
    let header = rd.headers().map_err(csv_err)?.clone();
    if header.iter().ne(CSV_HEADER.iter().copied()) {
        return Err(Error::Config(format!("{}: unexpected header {header:?}", path.display())));
    }
    let mut table = ResultTable::new();
    for rec in rd.records() {
        let rec = rec.map_err(csv_err)?;
        let num = |i: usize| -> Result<f64> {
            rec[i]
                .parse()
                .map_err(|_| Error::Config(format!("{}: bad number {:?}", path.display(), &rec[i])))
        };
        let n = rec[5]
            .parse()
            .map_err(|_| Error::Config(format!("{}: bad count {:?}", path.display(), &rec[5])))?;
        table.push(&rec[0], &rec[1], &rec[2], num(3)?, num(4)?, n)?;
    }
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nine_significant_digits() {
        assert_eq!(format_value(11.4509746), "11.4509746");
        assert_eq!(format_value(1.0 / 3.0), "0.333333333");
        assert_eq!(format_value(2.0), "2");
        assert_eq!(format_value(-0.0001234567891), "-0.000123456789");
        assert_eq!(format_value(123456789.4), "123456789");
        assert_eq!(format_value(1.5e12), "1.5e12");
        assert_eq!(format_value(-2.5e-9), "-2.5e-9");
        assert_eq!(format_value(0.0), "0");
        assert_eq!(format_value(f64::INFINITY), "inf");
        assert_eq!(format_value(999999999.6), "1e9");
    }

    #[test]
    fn formatted_values_keep_nine_digits() {
        for x in [std::f64::consts::PI, 1e-7 / 3.0, 7.77e20, -123.456, 0.1] {
            let back: f64 = format_value(x).parse().unwrap();
            assert!(((back - x) / x).abs() < 5e-9, "{x} -> {}", format_value(x));
        }
    }

    #[test]
    fn duplicate_and_negative_rows_rejected() {
        let mut t = ResultTable::new();
        t.push("1", "linear", "cost", 1.0, 0.1, 4).unwrap();
        assert!(t.push("1", "linear", "cost", 2.0, 0.1, 4).is_err());
        assert!(t.push("2", "linear", "cost", 2.0, -0.1, 4).is_err());
        assert!(t.push("2", "linear", "cost", 2.0, f64::NAN, 4).is_err());
        assert_eq!(t.len(), 1);
    }
}
