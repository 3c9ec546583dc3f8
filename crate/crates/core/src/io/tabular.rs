use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sampler::Dataset;

/// Which columns of a CSV file make up a dataset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CsvSchema {
    pub response: String,
    /// Design columns, in the order they appear in `X`.
    #[serde(default)]
    pub design: Vec<String>,
    /// Splits rows into one dataset per distinct value.
    #[serde(default)]
    pub group: Option<String>,
    /// Prepend a column of ones.
    #[serde(default = "yes")]
    pub intercept: bool,
}

fn yes() -> bool {
    true
}

impl CsvSchema {
    pub fn new(response: &str, design: &[&str], intercept: bool) -> Self {
        CsvSchema {
            response: response.to_string(),
            design: design.iter().map(|s| s.to_string()).collect(),
            group: None,
            intercept,
        }
    }

    pub fn grouped(mut self, column: &str) -> Self {
        self.group = Some(column.to_string());
        self
    }
}

/// Datasets read from one file, with their group labels in order of first
/// appearance. Ungrouped files give a single dataset labelled `all`.
#[derive(Clone, Debug, PartialEq)]
pub struct LoadedData {
    pub labels: Vec<String>,
    pub datasets: Vec<Dataset>,
}

impl LoadedData {
    /// The only dataset of an ungrouped file.
    pub fn single(self) -> Result<Dataset> {
        let n = self.datasets.len();
        let mut it = self.datasets.into_iter();
        match (it.next(), n) {
            (Some(d), 1) => Ok(d),
            _ => Err(Error::Config(format!("expected one dataset, found {n} groups"))),
        }
    }
}

pub fn load_csv(path: &Path, schema: &CsvSchema) -> Result<LoadedData> {
    read_csv(File::open(path)?, schema)
}

/// Parses CSV text. Lines starting with `#` are comments. Row numbers in
/// errors count data rows from 1, excluding the header.
pub fn read_csv<R: Read>(reader: R, schema: &CsvSchema) -> Result<LoadedData> {
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).trim(csv::Trim::All).from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| Error::Parse {
            row: 0,
            column: String::new(),
            message: e.to_string(),
        })?
        .clone();
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::MissingColumn(name.to_string()))
    };
    let y_col = find(&schema.response)?;
    let x_cols: Vec<usize> = schema.design.iter().map(|c| find(c)).collect::<Result<_>>()?;
    let g_col = schema.group.as_deref().map(find).transpose()?;

    let mut labels: Vec<String> = Vec::new();
    let mut rows: Vec<Vec<(f64, Vec<f64>)>> = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 1;
        let rec = rec.map_err(|e| Error::Parse {
            row,
            column: String::new(),
            message: e.to_string(),
        })?;
        let number = |col: usize| -> Result<f64> {
            let name = headers.get(col).unwrap_or_default().to_string();
            let raw = rec.get(col).unwrap_or_default();
            let v: f64 = raw.parse().map_err(|_| Error::Parse {
                row,
                column: name.clone(),
                message: format!("cannot read {raw:?} as a number"),
            })?;
            if !v.is_finite() {
                return Err(Error::NonFiniteValue { row, column: name });
            }
            Ok(v)
        };
        let y = number(y_col)?;
        let x: Vec<f64> = x_cols.iter().map(|&c| number(c)).collect::<Result<_>>()?;
        let label = match g_col {
            Some(c) => rec.get(c).unwrap_or_default().to_string(),
            None => "all".to_string(),
        };
        let slot = match labels.iter().position(|l| *l == label) {
            Some(s) => s,
            None => {
                labels.push(label);
                rows.push(Vec::new());
                rows.len() - 1
            }
        };
        rows[slot].push((y, x));
    }
    if rows.is_empty() {
        return Err(Error::InvalidInput("file has no data rows".into()));
    }

    let offset = usize::from(schema.intercept);
    let p = x_cols.len() + offset;
    if p == 0 {
        return Err(Error::Config("no design columns and no intercept".into()));
    }
    let datasets = rows
        .into_iter()
        .map(|group| {
            let y = DVector::from_iterator(group.len(), group.iter().map(|r| r.0));
            let x = DMatrix::from_fn(group.len(), p, |i, j| if j < offset { 1.0 } else { group[i].1[j - offset] });
            Dataset::new(y, x)
        })
        .collect::<Result<_>>()?;
    Ok(LoadedData { labels, datasets })
}

/// Writes `y` and the columns of `X` under the given names. Values use the
/// shortest representation that reads back to the same `f64`.
pub fn write_dataset<W: Write>(writer: W, data: &Dataset, response: &str, design: &[&str]) -> Result<()> {
    if design.len() != data.p() {
        return Err(Error::InvalidInput(format!(
            "{} column names for {} design columns",
            design.len(),
            data.p()
        )));
    }
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec![response];
    header.extend_from_slice(design);
    w.write_record(&header).map_err(csv_io)?;
    for i in 0..data.n() {
        let mut rec = vec![data.y[i].to_string()];
        rec.extend((0..data.p()).map(|j| data.x[(i, j)].to_string()));
        w.write_record(&rec).map_err(csv_io)?;
    }
    w.flush()?;
    Ok(())
}

pub(crate) fn csv_io(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(e) => Error::Io(e),
        other => Error::InvalidInput(format!("{other:?}")),
    }
}
