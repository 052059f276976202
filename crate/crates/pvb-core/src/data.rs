//! Dataset representation and CSV input/output.
//!
//! A record is one subject: a binary screening test result, a disease label
//! that is present only for verified subjects, and zero or more numeric
//! covariates. Files are comma-delimited with a header row; the `T` and `D`
//! columns are required and every other column is read as a covariate in
//! header order. Disease status is missing when the `D` field is empty or
//! any case variant of "NA".

use std::fs::File;
use std::io::{Read, Write as IoWrite};
use std::path::Path;

use crate::error::{Error, Result};
use crate::scalar::{s, to_f64, Scalar};

#[derive(Debug, Clone, PartialEq)]
pub struct Record<S> {
    pub test: bool,
    /// `None` when the subject was not verified by the gold standard.
    pub disease: Option<bool>,
    pub covariates: Vec<S>,
}

impl<S: Scalar> Record<S> {
    pub fn verified(&self) -> bool {
        self.disease.is_some()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset<S> {
    pub records: Vec<Record<S>>,
    pub covariate_names: Vec<String>,
}

/// Verified counts by test and disease status plus unverified counts by
/// test status. `s` counts are diseased, `r` counts are disease-free,
/// `u` counts are unverified; the suffix is the test result.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub struct VerificationTable {
    pub s1: u64,
    pub s0: u64,
    pub r1: u64,
    pub r0: u64,
    pub u1: u64,
    pub u0: u64,
}

impl VerificationTable {
    pub fn verified(&self) -> u64 {
        self.s1 + self.s0 + self.r1 + self.r0
    }

    pub fn unverified(&self) -> u64 {
        self.u1 + self.u0
    }

    pub fn total(&self) -> u64 {
        self.verified() + self.unverified()
    }

    /// All subjects with a positive test, verified or not.
    pub fn n1(&self) -> u64 {
        self.s1 + self.r1 + self.u1
    }

    /// All subjects with a negative test, verified or not.
    pub fn n0(&self) -> u64 {
        self.s0 + self.r0 + self.u0
    }
}

impl<S: Scalar> Dataset<S> {
    pub fn new(records: Vec<Record<S>>, covariate_names: Vec<String>) -> Result<Self> {
        if records.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let k = covariate_names.len();
        for r in &records {
            if r.covariates.len() != k {
                return Err(Error::DimensionMismatch {
                    expected: k,
                    got: r.covariates.len(),
                });
            }
        }
        Ok(Dataset {
            records,
            covariate_names,
        })
    }

    pub fn n(&self) -> usize {
        self.records.len()
    }

    pub fn verified_count(&self) -> usize {
        self.records.iter().filter(|r| r.verified()).count()
    }

    /// Percentage of subjects without a disease label, in [0, 100].
    pub fn missing_percentage(&self) -> f64 {
        let miss = self.n() - self.verified_count();
        100.0 * miss as f64 / self.n() as f64
    }

    pub fn cross_table(&self) -> VerificationTable {
        let mut t = VerificationTable {
            s1: 0,
            s0: 0,
            r1: 0,
            r0: 0,
            u1: 0,
            u0: 0,
        };
        for r in &self.records {
            match (r.test, r.disease) {
                (true, Some(true)) => t.s1 += 1,
                (false, Some(true)) => t.s0 += 1,
                (true, Some(false)) => t.r1 += 1,
                (false, Some(false)) => t.r0 += 1,
                (true, None) => t.u1 += 1,
                (false, None) => t.u0 += 1,
            }
        }
        t
    }

    pub fn covariate_index(&self, name: &str) -> Result<usize> {
        self.covariate_names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| Error::UnknownColumn(name.to_string()))
    }

    /// Resolve a list of covariate names to column indices, in order.
    pub fn covariate_indices(&self, names: &[String]) -> Result<Vec<usize>> {
        names.iter().map(|n| self.covariate_index(n)).collect()
    }

    pub fn load_csv(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_csv(File::open(path)?)
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_reader(reader);

        let headers: Vec<String> = rdr
            .headers()
            .map_err(csv_error)?
            .iter()
            .map(str::to_string)
            .collect();
        for (i, h) in headers.iter().enumerate() {
            if headers[..i].contains(h) {
                return Err(Error::MalformedInput {
                    line: 1,
                    reason: format!("duplicate column name `{h}`"),
                });
            }
        }
        let t_col = find_column(&headers, "T")?;
        let d_col = find_column(&headers, "D")?;
        let cov_cols: Vec<usize> = (0..headers.len())
            .filter(|&i| i != t_col && i != d_col)
            .collect();
        let covariate_names: Vec<String> =
            cov_cols.iter().map(|&i| headers[i].clone()).collect();

        let mut records = Vec::new();
        for row in rdr.records() {
            let row = row.map_err(csv_error)?;
            let line = row
                .position()
                .map(|p| p.line())
                .unwrap_or(records.len() as u64 + 2);
            if row.len() != headers.len() {
                return Err(Error::MalformedInput {
                    line,
                    reason: format!(
                        "expected {} fields, found {}",
                        headers.len(),
                        row.len()
                    ),
                });
            }
            let test = parse_binary(&row[t_col], "T", line)? == 1;
            let d_raw = &row[d_col];
            let disease = if missing_marker(d_raw) {
                None
            } else {
                Some(parse_binary(d_raw, "D", line)? == 1)
            };
            let covariates = cov_cols
                .iter()
                .map(|&i| {
                    row[i].parse::<f64>().map(s::<S>).map_err(|_| {
                        Error::MalformedInput {
                            line,
                            reason: format!(
                                "covariate `{}` is not numeric: `{}`",
                                headers[i], &row[i]
                            ),
                        }
                    })
                })
                .collect::<Result<Vec<S>>>()?;
            records.push(Record {
                test,
                disease,
                covariates,
            });
        }
        Dataset::new(records, covariate_names)
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut f = File::create(path)?;
        self.write_csv_to(&mut f)
    }

    pub fn write_csv_to<W: IoWrite>(&self, w: &mut W) -> Result<()> {
        let mut header: Vec<&str> =
            self.covariate_names.iter().map(String::as_str).collect();
        header.push("T");
        header.push("D");
        writeln!(w, "{}", header.join(","))?;
        for r in &self.records {
            for c in &r.covariates {
                // f64 Display is shortest-round-trip, so reloading
                // reproduces the value bit for bit.
                write!(w, "{},", to_f64(*c))?;
            }
            let d = match r.disease {
                Some(true) => "1",
                Some(false) => "0",
                None => "NA",
            };
            writeln!(w, "{},{}", u8::from(r.test), d)?;
        }
        Ok(())
    }
}

fn missing_marker(field: &str) -> bool {
    field.is_empty() || field.eq_ignore_ascii_case("na")
}

fn parse_binary(field: &str, column: &str, line: u64) -> Result<u8> {
    match field {
        "0" => Ok(0),
        "1" => Ok(1),
        other => Err(Error::MalformedInput {
            line,
            reason: format!("column `{column}` must be 0 or 1, found `{other}`"),
        }),
    }
}

fn find_column(headers: &[String], name: &str) -> Result<usize> {
    headers
        .iter()
        .position(|h| h == name)
        .ok_or_else(|| Error::UnknownColumn(name.to_string()))
}

fn csv_error(e: csv::Error) -> Error {
    let line = e
        .position()
        .map(|p| p.line())
        .unwrap_or_default();
    Error::MalformedInput {
        line,
        reason: e.to_string(),
    }
}
