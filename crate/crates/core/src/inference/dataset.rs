use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How a synthetic dataset was produced.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub true_model: String,
    pub theta: Vec<f64>,
    pub s_eps: f64,
    pub seed: u64,
}

/// `N` observations `(x_i, y_i)`, stored column-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    cols: Vec<Vec<f64>>,
    y: Vec<f64>,
    pub provenance: Option<Provenance>,
}

impl Dataset {
    pub fn from_columns(cols: Vec<Vec<f64>>, y: Vec<f64>) -> Result<Self> {
        if y.is_empty() {
            return Err(Error::Validation("dataset has no observations".into()));
        }
        if cols.is_empty() {
            return Err(Error::Validation("dataset has no input variables".into()));
        }
        for (j, c) in cols.iter().enumerate() {
            if c.len() != y.len() {
                return Err(Error::Validation(format!(
                    "column x{} has {} rows, y has {}",
                    j + 1,
                    c.len(),
                    y.len()
                )));
            }
        }
        if cols.iter().flatten().chain(y.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Validation("dataset contains non-finite values".into()));
        }
        Ok(Self {
            cols,
            y,
            provenance: None,
        })
    }

    /// Builds from row-major inputs.
    pub fn from_rows(xs: &[Vec<f64>], y: Vec<f64>) -> Result<Self> {
        let d = xs.first().map_or(0, |r| r.len());
        if xs.iter().any(|r| r.len() != d) {
            return Err(Error::Validation("ragged input rows".into()));
        }
        let cols = (0..d).map(|j| xs.iter().map(|r| r[j]).collect()).collect();
        Self::from_columns(cols, y)
    }

    pub fn with_provenance(mut self, p: Provenance) -> Self {
        self.provenance = Some(p);
        self
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.cols.len()
    }

    pub fn columns(&self) -> &[Vec<f64>] {
        &self.cols
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        self.cols.iter().map(|c| c[i]).collect()
    }

    /// Reads CSV with header `x1,…,xd,y`.
    pub fn read_csv(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Self::read_csv_from(std::io::BufReader::new(file))
    }

    pub fn read_csv_from(reader: impl BufRead) -> Result<Self> {
        let mut lines = reader.lines();
        let header = loop {
            match lines.next() {
                None => return Err(Error::Validation("data file is empty".into())),
                Some(line) => {
                    let line = line?;
                    if !line.trim().is_empty() {
                        break line;
                    }
                }
            }
        };
        let names: Vec<&str> = header.split(',').map(str::trim).collect();
        let d = names.len().saturating_sub(1);
        let expected: Vec<String> = (1..=d)
            .map(|j| format!("x{j}"))
            .chain(std::iter::once("y".to_string()))
            .collect();
        if d == 0 || names != expected {
            return Err(Error::Validation(format!(
                "data header must be `{}`, found `{header}`",
                expected.join(",")
            )));
        }
        let mut cols = vec![Vec::new(); d];
        let mut y = Vec::new();
        for (lineno, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if fields.len() != d + 1 {
                return Err(Error::Validation(format!(
                    "line {}: expected {} fields, found {}",
                    lineno + 2,
                    d + 1,
                    fields.len()
                )));
            }
            for (j, f) in fields.iter().enumerate() {
                let v: f64 = f.parse().map_err(|_| {
                    Error::Validation(format!("line {}: malformed number `{f}`", lineno + 2))
                })?;
                if j < d {
                    cols[j].push(v);
                } else {
                    y.push(v);
                }
            }
        }
        Self::from_columns(cols, y)
    }

    pub fn write_csv(&self, mut w: impl Write) -> Result<()> {
        let header: Vec<String> = (1..=self.dim())
            .map(|j| format!("x{j}"))
            .chain(std::iter::once("y".into()))
            .collect();
        writeln!(w, "{}", header.join(","))?;
        for i in 0..self.len() {
            let mut row: Vec<String> = self.cols.iter().map(|c| fmt_f64(c[i])).collect();
            row.push(fmt_f64(self.y[i]));
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }
}

/// Round-trip decimal formatting with 17 significant digits.
pub fn fmt_f64(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else if v.is_nan() {
        "nan".into()
    } else if v > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip() {
        let d = Dataset::from_rows(&[vec![1.0, 0.1], vec![2.0, -0.3]], vec![3.0, 1.0 / 3.0]).unwrap();
        let mut buf = Vec::new();
        d.write_csv(&mut buf).unwrap();
        let back = Dataset::read_csv_from(&buf[..]).unwrap();
        assert_eq!(back, d);
    }

    #[test]
    fn csv_errors() {
        assert!(Dataset::read_csv_from(&b""[..]).is_err());
        assert!(Dataset::read_csv_from(&b"x1,y\n"[..]).is_err());
        assert!(Dataset::read_csv_from(&b"a,y\n1,2\n"[..]).is_err());
        assert!(Dataset::read_csv_from(&b"x1,y\n1\n"[..]).is_err());
        assert!(Dataset::read_csv_from(&b"x1,y\n1,zz\n"[..]).is_err());
        assert!(Dataset::read_csv_from(&b"x1,y\n1,nan\n"[..]).is_err());
    }

    #[test]
    fn seventeen_digits() {
        assert_eq!(fmt_f64(0.1), "1.0000000000000001e-1");
        assert_eq!(fmt_f64(0.1).parse::<f64>().unwrap(), 0.1);
    }
}
