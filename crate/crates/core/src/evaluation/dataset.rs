use std::io::{Read, Write};
use std::path::Path;

use crate::detrng::{permutation, RngStream};
use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// Feature rows with binary ground-truth labels (1 = true outlier).
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    pub name: String,
    pub features: Matrix,
    pub labels: Vec<u8>,
    /// Column names, features first and the label last, if the source had a header.
    pub header: Option<Vec<String>>,
}

impl LabeledDataset {
    pub fn new(name: impl Into<String>, features: Matrix, labels: Vec<u8>) -> Result<Self> {
        if labels.len() != features.rows() {
            return Err(Error::shape(format!(
                "{} labels for {} rows",
                labels.len(),
                features.rows()
            )));
        }
        if let Some(bad) = labels.iter().find(|&&l| l > 1) {
            return Err(Error::invalid(format!("label {bad} is not binary")));
        }
        Ok(Self {
            name: name.into(),
            features,
            labels,
            header: None,
        })
    }

    pub fn len(&self) -> usize {
        self.features.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dims(&self) -> usize {
        self.features.cols()
    }

    pub fn positives(&self) -> usize {
        self.labels.iter().filter(|&&l| l == 1).count()
    }

    /// Rows at `indices`, in that order.
    pub fn select(&self, indices: &[usize], name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            features: self.features.select_rows(indices),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            header: self.header.clone(),
        }
    }

    fn column_names(&self) -> Vec<String> {
        match &self.header {
            Some(h) if h.len() == self.dims() + 1 => h.clone(),
            _ => (1..=self.dims())
                .map(|j| format!("x{j}"))
                .chain(std::iter::once("label".to_string()))
                .collect(),
        }
    }

    /// Writes a header row, then one row per sample with the label last.
    pub fn write_csv(&self, writer: impl Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(self.column_names()).map_err(csv_error)?;
        for (row, label) in self.features.row_iter().zip(&self.labels) {
            let fields = row.iter().map(f64::to_string).chain(std::iter::once(label.to_string()));
            w.write_record(fields).map_err(csv_error)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let file = std::fs::File::create(path)?;
        self.write_csv(std::io::BufWriter::new(file))
    }
}

fn csv_error(e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line() as usize);
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Parse {
            line,
            message: format!("{other:?}"),
        },
    }
}

fn parse_feature(field: &str) -> Option<f64> {
    field.parse::<f64>().ok().filter(|v| v.is_finite())
}

/// Parses CSV text: feature columns followed by an integer 0/1 label column.
/// A first row that is not entirely numeric is taken as a header.
pub fn read_csv(reader: impl Read, name: impl Into<String>) -> Result<LabeledDataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);

    let mut header = None;
    let mut width = None;
    let mut values = Vec::new();
    let mut labels = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let record = record.map_err(csv_error)?;
        let line = record.position().map_or(i + 1, |p| p.line() as usize);
        if record.len() == 1 && record[0].is_empty() {
            continue;
        }
        if i == 0 && !record.iter().all(|f| parse_feature(f).is_some()) {
            header = Some(record.iter().map(str::to_string).collect::<Vec<_>>());
            width = Some(record.len());
            continue;
        }
        let expected = *width.get_or_insert(record.len());
        if record.len() != expected {
            return Err(Error::Parse {
                line,
                message: format!("expected {expected} fields, found {}", record.len()),
            });
        }
        if expected < 2 {
            return Err(Error::Parse {
                line,
                message: "need at least one feature column and a label column".into(),
            });
        }
        for (j, field) in record.iter().take(expected - 1).enumerate() {
            let v = parse_feature(field).ok_or_else(|| Error::Parse {
                line,
                message: format!("column {} is not a finite number: {field:?}", j + 1),
            })?;
            values.push(v);
        }
        let label = match &record[expected - 1] {
            "0" => 0,
            "1" => 1,
            other => {
                return Err(Error::Parse {
                    line,
                    message: format!("label must be 0 or 1, found {other:?}"),
                })
            }
        };
        labels.push(label);
    }
    if labels.is_empty() {
        return Err(Error::Parse {
            line: 1,
            message: "no data rows".into(),
        });
    }
    let d = width.expect("set by the first data row") - 1;
    let features = Matrix::new(labels.len(), d, values)?;
    let mut ds = LabeledDataset::new(name, features, labels)?;
    ds.header = header;
    Ok(ds)
}

/// Loads a dataset named after the file stem.
pub fn load_csv(path: impl AsRef<Path>) -> Result<LabeledDataset> {
    let path = path.as_ref();
    let name = path
        .file_stem()
        .map_or_else(|| "dataset".to_string(), |s| s.to_string_lossy().into_owned());
    let file = std::fs::File::open(path)?;
    read_csv(std::io::BufReader::new(file), name)
}

/// `n_inliers` standard normal rows followed by `n_outliers` rows at a radius
/// drawn uniformly from `[6, 10]` in a uniformly random direction.
pub fn synth(n_inliers: usize, n_outliers: usize, d: usize, seed: u64) -> Result<LabeledDataset> {
    if n_inliers == 0 {
        return Err(Error::invalid("synthetic data needs at least one inlier"));
    }
    if d == 0 {
        return Err(Error::invalid("synthetic data needs at least one dimension"));
    }
    let mut s = RngStream::new(seed);
    let mut values = Vec::with_capacity((n_inliers + n_outliers) * d);
    for _ in 0..n_inliers * d {
        values.push(s.standard_normal());
    }
    for _ in 0..n_outliers {
        let direction = loop {
            let v: Vec<f64> = (0..d).map(|_| s.standard_normal()).collect();
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 1e-12 {
                break v.into_iter().map(|x| x / norm).collect::<Vec<_>>();
            }
        };
        let radius = 6.0 + 4.0 * s.uniform01();
        values.extend(direction.iter().map(|x| x * radius));
    }
    let n = n_inliers + n_outliers;
    let labels = (0..n).map(|i| u8::from(i >= n_inliers)).collect();
    LabeledDataset::new("synth", Matrix::new(n, d, values)?, labels)
}

/// Shuffles the rows with `seed` and deals them round-robin to `m` parts.
pub fn partition_uniform(ds: &LabeledDataset, m: usize, seed: u64) -> Result<Vec<LabeledDataset>> {
    if m == 0 {
        return Err(Error::invalid("cannot partition into zero parts"));
    }
    if ds.is_empty() {
        return Err(Error::invalid("cannot partition an empty dataset"));
    }
    let perm = permutation(ds.len(), seed)?;
    Ok((0..m)
        .map(|k| {
            let rows: Vec<usize> = perm.iter().skip(k).step_by(m).copied().collect();
            ds.select(&rows, format!("{}-{k}", ds.name))
        })
        .collect())
}
