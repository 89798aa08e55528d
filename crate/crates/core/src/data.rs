//! Observed data and its validation.

use std::io::{Read, Write};
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// A table of named real columns, as read from a CSV file.
#[derive(Debug, Clone, PartialEq)]
pub struct RawTable {
    pub names: Vec<String>,
    pub columns: Vec<Vec<f64>>,
}

impl RawTable {
    pub fn new(names: Vec<String>, columns: Vec<Vec<f64>>) -> Result<Self> {
        if names.len() != columns.len() {
            return Err(Error::MalformedTable(format!(
                "{} names for {} columns",
                names.len(),
                columns.len()
            )));
        }
        if let Some(first) = columns.first() {
            if columns.iter().any(|c| c.len() != first.len()) {
                return Err(Error::MalformedTable("ragged columns".into()));
            }
        }
        Ok(Self { names, columns })
    }

    pub fn n_rows(&self) -> usize {
        self.columns.first().map_or(0, Vec::len)
    }

    pub fn column(&self, name: &str) -> Option<&[f64]> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|j| self.columns[j].as_slice())
    }

    /// Header row required. Cells must parse as reals; "NaN"/"inf" parse here
    /// and are rejected later by [`validate_dataset`].
    pub fn from_csv_reader<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let names: Vec<String> = rdr.headers()?.iter().map(str::to_owned).collect();
        let mut columns = vec![Vec::new(); names.len()];
        for (row, record) in rdr.records().enumerate() {
            let record = record?;
            for (j, cell) in record.iter().enumerate() {
                let v: f64 = cell.parse().map_err(|_| Error::InvalidCell {
                    row,
                    column: names[j].clone(),
                    value: cell.to_owned(),
                })?;
                columns[j].push(v);
            }
        }
        Self::new(names, columns)
    }

    pub fn from_csv_path<P: AsRef<Path>>(path: P) -> Result<Self> {
        let f = std::fs::File::open(path)?;
        Self::from_csv_reader(std::io::BufReader::new(f))
    }
}

/// Observed triples (Z, X, Y). Immutable once validated.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    treatment: Vec<u8>,
    outcome: Vec<f64>,
    covariates: DMatrix<f64>,
    covariate_names: Vec<String>,
    treat_name: String,
    outcome_name: String,
}

/// Build a [`Dataset`] from a raw table; every column other than the
/// treatment and outcome becomes a covariate, in table order.
pub fn validate_dataset(raw: &RawTable, treat_col: &str, outcome_col: &str) -> Result<Dataset> {
    let z = raw
        .column(treat_col)
        .ok_or_else(|| Error::MissingColumn(treat_col.to_owned()))?;
    let y = raw
        .column(outcome_col)
        .ok_or_else(|| Error::MissingColumn(outcome_col.to_owned()))?;
    let mut names = Vec::new();
    let mut cols = Vec::new();
    for (name, col) in raw.names.iter().zip(&raw.columns) {
        if name != treat_col && name != outcome_col {
            names.push(name.clone());
            cols.push(col.as_slice());
        }
    }
    let n = raw.n_rows();
    let x = DMatrix::from_fn(n, cols.len(), |i, j| cols[j][i]);
    Dataset::with_names(z, y.to_vec(), x, names, treat_col, outcome_col)
}

impl Dataset {
    /// Validating constructor with default column names `Z` and `Y`.
    pub fn new(
        treatment: &[f64],
        outcome: Vec<f64>,
        covariates: DMatrix<f64>,
        covariate_names: Vec<String>,
    ) -> Result<Self> {
        Self::with_names(treatment, outcome, covariates, covariate_names, "Z", "Y")
    }

    pub fn with_names(
        treatment: &[f64],
        outcome: Vec<f64>,
        covariates: DMatrix<f64>,
        covariate_names: Vec<String>,
        treat_name: &str,
        outcome_name: &str,
    ) -> Result<Self> {
        let n = treatment.len();
        if outcome.len() != n || covariates.nrows() != n {
            return Err(Error::DimensionMismatch(format!(
                "treatment {n}, outcome {}, covariate rows {}",
                outcome.len(),
                covariates.nrows()
            )));
        }
        if covariate_names.len() != covariates.ncols() {
            return Err(Error::DimensionMismatch(format!(
                "{} covariate names for {} columns",
                covariate_names.len(),
                covariates.ncols()
            )));
        }
        let mut z = Vec::with_capacity(n);
        for (row, &v) in treatment.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::NonFiniteValue {
                    row,
                    column: treat_name.to_owned(),
                });
            }
            z.push(if v == 0.0 {
                0u8
            } else if v == 1.0 {
                1u8
            } else {
                return Err(Error::NonBinaryTreatment { row, value: v });
            });
        }
        if let Some(row) = outcome.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteValue {
                row,
                column: outcome_name.to_owned(),
            });
        }
        for (j, col) in covariates.column_iter().enumerate() {
            if let Some(row) = col.iter().position(|v| !v.is_finite()) {
                return Err(Error::NonFiniteValue {
                    row,
                    column: covariate_names[j].clone(),
                });
            }
        }
        let n1 = z.iter().filter(|&&t| t == 1).count();
        if n1 == 0 || n1 == n {
            return Err(Error::DegenerateTreatment);
        }
        Ok(Self {
            treatment: z,
            outcome,
            covariates,
            covariate_names,
            treat_name: treat_name.to_owned(),
            outcome_name: outcome_name.to_owned(),
        })
    }

    pub fn n_units(&self) -> usize {
        self.treatment.len()
    }

    pub fn treatment(&self) -> &[u8] {
        &self.treatment
    }

    /// Treatment of unit `i` as a real.
    #[inline]
    pub fn z(&self, i: usize) -> f64 {
        f64::from(self.treatment[i])
    }

    pub fn outcome(&self) -> &[f64] {
        &self.outcome
    }

    pub fn covariates(&self) -> &DMatrix<f64> {
        &self.covariates
    }

    pub fn covariate_names(&self) -> &[String] {
        &self.covariate_names
    }

    pub fn treat_name(&self) -> &str {
        &self.treat_name
    }

    pub fn outcome_name(&self) -> &str {
        &self.outcome_name
    }

    pub fn covariate(&self, name: &str) -> Option<Vec<f64>> {
        self.covariate_names
            .iter()
            .position(|n| n == name)
            .map(|j| self.covariates.column(j).iter().copied().collect())
    }

    pub fn n_treated(&self) -> usize {
        self.treatment.iter().filter(|&&t| t == 1).count()
    }

    pub fn n_control(&self) -> usize {
        self.n_units() - self.n_treated()
    }

    /// Rows picked by index, with repetition allowed. Used for resampling.
    pub fn select_rows(&self, rows: &[usize]) -> Result<Self> {
        let z: Vec<f64> = rows.iter().map(|&i| self.z(i)).collect();
        let y = rows.iter().map(|&i| self.outcome[i]).collect();
        let x = self.covariates.select_rows(rows.iter());
        Self::with_names(
            &z,
            y,
            x,
            self.covariate_names.clone(),
            &self.treat_name,
            &self.outcome_name,
        )
    }

    /// Same data with the outcome replaced.
    pub fn with_outcome(&self, outcome: Vec<f64>) -> Result<Self> {
        let z: Vec<f64> = (0..self.n_units()).map(|i| self.z(i)).collect();
        Self::with_names(
            &z,
            outcome,
            self.covariates.clone(),
            self.covariate_names.clone(),
            &self.treat_name,
            &self.outcome_name,
        )
    }

    /// Writes treatment, outcome, then covariates. Reals use 17 significant
    /// digits so a read-back is bit-exact.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec![self.treat_name.clone(), self.outcome_name.clone()];
        header.extend(self.covariate_names.iter().cloned());
        w.write_record(&header)?;
        let mut rec = Vec::with_capacity(header.len());
        for i in 0..self.n_units() {
            rec.clear();
            rec.push(self.treatment[i].to_string());
            rec.push(fmt_roundtrip(self.outcome[i]));
            for j in 0..self.covariates.ncols() {
                rec.push(fmt_roundtrip(self.covariates[(i, j)]));
            }
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_raw_table(&self) -> RawTable {
        let mut names = vec![self.treat_name.clone(), self.outcome_name.clone()];
        names.extend(self.covariate_names.iter().cloned());
        let mut columns = vec![
            self.treatment.iter().map(|&t| f64::from(t)).collect(),
            self.outcome.clone(),
        ];
        for j in 0..self.covariates.ncols() {
            columns.push(self.covariates.column(j).iter().copied().collect());
        }
        RawTable { names, columns }
    }
}

/// 17 significant digits; parses back to the same bits.
pub fn fmt_roundtrip(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        x.to_string()
    }
}
