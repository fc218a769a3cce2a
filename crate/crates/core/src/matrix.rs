//! Hour x category matrices (24 x 10) used for start targets, ES and EDM.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::taxonomy::{Mid10, N_CATEGORIES, N_HOURS};

/// What the entries of a matrix measure.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatrixKind {
    Counts,
    Minutes,
    TargetMass,
    Probability,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HourCategoryMatrix {
    pub kind: MatrixKind,
    pub m: [[f64; N_CATEGORIES]; N_HOURS],
}

impl HourCategoryMatrix {
    pub fn zeros(kind: MatrixKind) -> Self {
        HourCategoryMatrix {
            kind,
            m: [[0.0; N_CATEGORIES]; N_HOURS],
        }
    }

    pub fn from_rows(kind: MatrixKind, m: [[f64; N_CATEGORIES]; N_HOURS]) -> Result<Self> {
        if m.iter().flatten().any(|x| !x.is_finite() || *x < 0.0) {
            return Err(invalid("hour x category matrix has a negative or non-finite entry"));
        }
        let out = HourCategoryMatrix { kind, m };
        if kind == MatrixKind::Probability && (out.total() - 1.0).abs() > 1e-9 {
            return Err(invalid(format!(
                "probability matrix sums to {}, expected 1",
                out.total()
            )));
        }
        Ok(out)
    }

    #[inline]
    pub fn get(&self, hour: usize, c: Mid10) -> f64 {
        self.m[hour][c.index()]
    }

    #[inline]
    pub fn add(&mut self, hour: usize, c: usize, v: f64) {
        self.m[hour][c] += v;
    }

    pub fn row_sums(&self) -> [f64; N_HOURS] {
        let mut r = [0.0; N_HOURS];
        for (h, row) in self.m.iter().enumerate() {
            r[h] = row.iter().sum();
        }
        r
    }

    pub fn col_sums(&self) -> [f64; N_CATEGORIES] {
        let mut c = [0.0; N_CATEGORIES];
        for row in &self.m {
            for (j, v) in row.iter().enumerate() {
                c[j] += v;
            }
        }
        c
    }

    pub fn total(&self) -> f64 {
        self.m.iter().flatten().sum()
    }

    /// Rescaled to total one. `None` for an all-zero matrix.
    pub fn normalized(&self) -> Option<Self> {
        let t = self.total();
        if t <= 0.0 {
            return None;
        }
        let mut out = self.clone();
        out.kind = MatrixKind::Probability;
        out.m.iter_mut().flatten().for_each(|x| *x /= t);
        Some(out)
    }

    pub fn frobenius(&self) -> f64 {
        self.m.iter().flatten().map(|x| x * x).sum::<f64>().sqrt()
    }

    /// Cellwise `self - other`. The result may be negative, so it is a plain array.
    pub fn diff(&self, other: &Self) -> [[f64; N_CATEGORIES]; N_HOURS] {
        let mut d = [[0.0; N_CATEGORIES]; N_HOURS];
        for h in 0..N_HOURS {
            for c in 0..N_CATEGORIES {
                d[h][c] = self.m[h][c] - other.m[h][c];
            }
        }
        d
    }

    pub fn add_assign(&mut self, other: &Self) {
        for h in 0..N_HOURS {
            for c in 0..N_CATEGORIES {
                self.m[h][c] += other.m[h][c];
            }
        }
    }

    /// CSV with one row per category (MID10 order) and hour columns 0..23.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        write_category_by_hour(w, |h, c| self.m[h][c])
    }

    pub fn read_csv<R: Read>(r: R, kind: MatrixKind) -> Result<Self> {
        let m = read_category_by_hour(r)?;
        Self::from_rows(kind, m)
    }
}

/// Writes a 24 x 10 array transposed as category rows x hour columns.
pub fn write_category_by_hour<W: Write>(w: W, value: impl Fn(usize, usize) -> f64) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    let mut header = vec!["category".to_string()];
    header.extend((0..N_HOURS).map(|h| h.to_string()));
    wtr.write_record(&header)?;
    for c in Mid10::ALL {
        let mut rec = vec![c.label().to_string()];
        rec.extend((0..N_HOURS).map(|h| crate::io::fmt_f64(value(h, c.index()))));
        wtr.write_record(&rec)?;
    }
    wtr.flush()?;
    Ok(())
}

/// Reads the layout written by [`write_category_by_hour`] (signed values allowed).
pub fn read_category_by_hour<R: Read>(r: R) -> Result<[[f64; N_CATEGORIES]; N_HOURS]> {
    let mut rdr = csv::Reader::from_reader(r);
    let header = rdr.headers()?.clone();
    let expected: Vec<String> = std::iter::once("category".to_string())
        .chain((0..N_HOURS).map(|h| h.to_string()))
        .collect();
    if header.iter().ne(expected.iter().map(String::as_str)) {
        return Err(invalid("matrix CSV header must be `category,0,1,...,23`"));
    }
    let mut m = [[0.0; N_CATEGORIES]; N_HOURS];
    let mut seen = [false; N_CATEGORIES];
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let c: Mid10 = rec[0].parse()?;
        if seen[c.index()] {
            return Err(invalid(format!("matrix CSV row {}: duplicate category {c}", row + 1)));
        }
        seen[c.index()] = true;
        for h in 0..N_HOURS {
            m[h][c.index()] = rec[h + 1].trim().parse::<f64>().map_err(|e| {
                invalid(format!("matrix CSV row {}: hour {h}: {e}", row + 1))
            })?;
        }
    }
    if seen.iter().any(|s| !s) {
        return Err(invalid("matrix CSV must list all ten categories"));
    }
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sums_and_normalization() {
        let mut m = HourCategoryMatrix::zeros(MatrixKind::Counts);
        m.add(9, Mid10::Transit.index(), 3.0);
        m.add(10, Mid10::Retail.index(), 1.0);
        assert_eq!(m.total(), 4.0);
        assert_eq!(m.row_sums()[9], 3.0);
        assert_eq!(m.col_sums()[Mid10::Retail.index()], 1.0);
        let n = m.normalized().unwrap();
        assert_eq!(n.kind, MatrixKind::Probability);
        assert_eq!(n.get(9, Mid10::Transit), 0.75);
        assert!(HourCategoryMatrix::zeros(MatrixKind::Counts).normalized().is_none());
    }

    #[test]
    fn probability_kind_checks_total() {
        let mut m = [[0.0; 10]; 24];
        m[0][0] = 0.5;
        assert!(HourCategoryMatrix::from_rows(MatrixKind::Probability, m).is_err());
        m[1][1] = 0.5;
        assert!(HourCategoryMatrix::from_rows(MatrixKind::Probability, m).is_ok());
        m[2][2] = -0.1;
        assert!(HourCategoryMatrix::from_rows(MatrixKind::Counts, m).is_err());
    }

    #[test]
    fn csv_layout_round_trip() {
        let mut m = HourCategoryMatrix::zeros(MatrixKind::Minutes);
        m.add(23, Mid10::NaturePark.index(), 0.1 + 0.2);
        m.add(0, Mid10::Accommodation.index(), 1.0 / 3.0);
        let mut buf = Vec::new();
        m.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("category,0,1,2,"));
        assert_eq!(text.lines().count(), 11);
        let back = HourCategoryMatrix::read_csv(&buf[..], MatrixKind::Minutes).unwrap();
        assert_eq!(back, m);
    }
}
