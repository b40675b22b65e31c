//! CSV ingestion, column schemas and train/test splitting.

use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::rng::{rng_for, Stream};

/// A column picked by header name or by 0-based position.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ColumnRef {
    Index(usize),
    Name(String),
}

impl ColumnRef {
    fn resolve(&self, headers: &[String], path: &Path) -> Result<usize> {
        match self {
            ColumnRef::Index(i) if *i < headers.len() => Ok(*i),
            ColumnRef::Index(i) => Err(Error::InvalidInput(format!(
                "{}: column index {i} out of range ({} columns)",
                path.display(),
                headers.len()
            ))),
            ColumnRef::Name(name) => headers
                .iter()
                .position(|h| h.trim() == name.trim())
                .ok_or_else(|| Error::InvalidInput(format!("{}: no column named '{name}'", path.display()))),
        }
    }
}

impl From<&str> for ColumnRef {
    fn from(s: &str) -> Self {
        ColumnRef::Name(s.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Transform {
    #[default]
    None,
    /// Natural log of every predictor; values must be strictly positive.
    Log,
}

fn one() -> f64 {
    1.0
}

/// Which columns of a CSV form the response and the predictors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnSchema {
    pub response: ColumnRef,
    /// Predictor columns in order. Empty means every column other than the
    /// response and the excluded ones, in file order.
    #[serde(default)]
    pub predictors: Vec<ColumnRef>,
    #[serde(default)]
    pub exclude: Vec<ColumnRef>,
    #[serde(default)]
    pub transform: Transform,
    /// Multiplier applied to the response after reading.
    #[serde(default = "one")]
    pub response_scale: f64,
}

impl ColumnSchema {
    pub fn new(response: impl Into<ColumnRef>) -> Self {
        Self {
            response: response.into(),
            predictors: Vec::new(),
            exclude: Vec::new(),
            transform: Transform::None,
            response_scale: 1.0,
        }
    }

    /// Reads a schema from a TOML file.
    pub fn from_toml_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
        toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    /// Layout of the body-fat table: percent body fat as a fraction,
    /// thirteen log-transformed measurements, density dropped.
    pub fn bodyfat() -> Self {
        Self {
            response: "BodyFat".into(),
            predictors: BODYFAT_PREDICTORS.iter().map(|&s| s.into()).collect(),
            exclude: vec!["Density".into()],
            transform: Transform::Log,
            response_scale: 0.01,
        }
    }
}

pub const BODYFAT_PREDICTORS: [&str; 13] = [
    "Age", "Weight", "Height", "Neck", "Chest", "Abdomen", "Hip", "Thigh", "Knee", "Ankle", "Biceps", "Forearm",
    "Wrist",
];

struct RawTable {
    headers: Vec<String>,
    records: Vec<csv::StringRecord>,
}

fn read_table(path: &Path) -> Result<RawTable> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(format!("opening {}", path.display()), io),
            other => Error::InvalidInput(format!("{}: {other:?}", path.display())),
        })?;
    let headers = reader.headers()?.iter().map(str::to_string).collect();
    let records = reader.records().collect::<std::result::Result<Vec<_>, _>>()?;
    Ok(RawTable { headers, records })
}

fn parse_cell(path: &Path, table: &RawTable, row: usize, col: usize) -> Result<f64> {
    let cell_err = |message: String| Error::Cell {
        path: path.to_path_buf(),
        row: row + 1,
        column: table.headers[col].clone(),
        message,
    };
    let raw = table.records[row].get(col).unwrap_or("");
    if raw.is_empty() || raw.eq_ignore_ascii_case("na") {
        return Err(cell_err("missing value".into()));
    }
    let v: f64 = raw.parse().map_err(|_| cell_err(format!("'{raw}' is not a number")))?;
    if !v.is_finite() {
        return Err(cell_err(format!("'{raw}' is not finite")));
    }
    Ok(v)
}

/// Loads a dataset; errors name the offending row (1-based, header
/// excluded) and column.
pub fn load_csv(path: &Path, schema: &ColumnSchema) -> Result<Dataset> {
    if !(schema.response_scale.is_finite() && schema.response_scale != 0.0) {
        return Err(Error::Config("response scale must be finite and nonzero".into()));
    }
    let table = read_table(path)?;
    let resp = schema.response.resolve(&table.headers, path)?;
    let excluded = schema
        .exclude
        .iter()
        .map(|c| c.resolve(&table.headers, path))
        .collect::<Result<Vec<_>>>()?;
    let predictors: Vec<usize> = if schema.predictors.is_empty() {
        (0..table.headers.len()).filter(|j| *j != resp && !excluded.contains(j)).collect()
    } else {
        schema
            .predictors
            .iter()
            .map(|c| c.resolve(&table.headers, path))
            .collect::<Result<Vec<_>>>()?
    };
    if predictors.is_empty() {
        return Err(Error::InvalidInput(format!("{}: no predictor columns selected", path.display())));
    }
    if predictors.contains(&resp) {
        return Err(Error::Config("the response column is also listed as a predictor".into()));
    }
    let n = table.records.len();
    let response = (0..n)
        .map(|i| parse_cell(path, &table, i, resp).map(|v| v * schema.response_scale))
        .collect::<Result<Vec<_>>>()?;
    let columns = predictors
        .iter()
        .map(|&j| {
            (0..n)
                .map(|i| {
                    let v = parse_cell(path, &table, i, j)?;
                    match schema.transform {
                        Transform::None => Ok(v),
                        Transform::Log if v > 0.0 => Ok(v.ln()),
                        Transform::Log => Err(Error::Cell {
                            path: path.to_path_buf(),
                            row: i + 1,
                            column: table.headers[j].clone(),
                            message: format!("log transform needs a positive value, got {v}"),
                        }),
                    }
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    let names = predictors.iter().map(|&j| table.headers[j].clone()).collect();
    Dataset::with_names(columns, response, names)
}

/// Predictor rows for the named columns, plus the response if `response`
/// names a column that is present.
pub fn load_prediction_rows(
    path: &Path,
    names: &[String],
    response: Option<&str>,
    transform: Transform,
) -> Result<(Vec<Vec<f64>>, Option<Vec<f64>>)> {
    let table = read_table(path)?;
    let cols = names
        .iter()
        .map(|name| ColumnRef::Name(name.clone()).resolve(&table.headers, path))
        .collect::<Result<Vec<_>>>()?;
    let rows = (0..table.records.len())
        .map(|i| {
            cols.iter()
                .map(|&j| {
                    let v = parse_cell(path, &table, i, j)?;
                    match transform {
                        Transform::None => Ok(v),
                        Transform::Log if v > 0.0 => Ok(v.ln()),
                        Transform::Log => Err(Error::Cell {
                            path: path.to_path_buf(),
                            row: i + 1,
                            column: table.headers[j].clone(),
                            message: format!("log transform needs a positive value, got {v}"),
                        }),
                    }
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    let y = match response.and_then(|r| table.headers.iter().position(|h| h == r)) {
        Some(j) => Some((0..table.records.len()).map(|i| parse_cell(path, &table, i, j)).collect::<Result<Vec<_>>>()?),
        None => None,
    };
    Ok((rows, y))
}

/// Writes predictors then the response under `response_name`.
pub fn write_csv(data: &Dataset, path: &Path, response_name: &str) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(format!("creating {}", path.display()), io),
        other => Error::InvalidInput(format!("{}: {other:?}", path.display())),
    })?;
    let mut header: Vec<&str> = data.names().iter().map(String::as_str).collect();
    header.push(response_name);
    w.write_record(&header)?;
    for i in 0..data.n() {
        let mut rec: Vec<String> = data.row(i).iter().map(|v| v.to_string()).collect();
        rec.push(data.response()[i].to_string());
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Split {
    pub train: Dataset,
    pub test: Dataset,
    /// Sorted row indices of the original dataset.
    pub train_indices: Vec<usize>,
    pub test_indices: Vec<usize>,
}

/// Uniform partition into `n_tr` training rows and the rest.
pub fn random_split(data: &Dataset, n_tr: usize, seed: u64) -> Result<Split> {
    let n = data.n();
    if n_tr == 0 || n_tr >= n {
        return Err(Error::Config(format!("training size {n_tr} must lie in 1..{n}")));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut rng_for(seed, Stream::Split, 0));
    let mut train_indices = idx[..n_tr].to_vec();
    let mut test_indices = idx[n_tr..].to_vec();
    train_indices.sort_unstable();
    test_indices.sort_unstable();
    Ok(Split {
        train: data.subset(&train_indices),
        test: data.subset(&test_indices),
        train_indices,
        test_indices,
    })
}

/// Fails early when an input path does not exist or an output directory
/// cannot be created.
pub fn check_input(path: &Path) -> Result<PathBuf> {
    if path.is_file() {
        Ok(path.to_path_buf())
    } else {
        Err(Error::Config(format!("input file {} does not exist", path.display())))
    }
}

pub fn ensure_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|e| Error::io(format!("creating {}", path.display()), e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn write(dir: &tempfile::TempDir, name: &str, text: &str) -> PathBuf {
        let p = dir.path().join(name);
        std::fs::write(&p, text).unwrap();
        p
    }

    #[test]
    fn schema_selects_and_transforms() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "a.csv", "id,y,a,b\n1,10,1,2.718281828459045\n2,20,3,1\n");
        let mut s = ColumnSchema::new("y");
        s.exclude = vec!["id".into()];
        let d = load_csv(&p, &s).unwrap();
        assert_eq!((d.n(), d.p()), (2, 2));
        assert_eq!(d.names(), &["a".to_string(), "b".to_string()]);
        s.predictors = vec![ColumnRef::Index(3)];
        s.transform = Transform::Log;
        s.response_scale = 0.1;
        let d = load_csv(&p, &s).unwrap();
        assert_eq!(d.p(), 1);
        assert!((d.column(0)[0] - 1.0).abs() < 1e-15);
        assert_eq!(d.response(), &[1.0, 2.0]);
    }

    #[test]
    fn errors_name_the_cell() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "b.csv", "Height,Y\n70,1\n-3,2\n");
        let mut s = ColumnSchema::new("Y");
        s.transform = Transform::Log;
        match load_csv(&p, &s).unwrap_err() {
            Error::Cell { row, column, .. } => assert_eq!((row, column.as_str()), (2, "Height")),
            e => panic!("{e}"),
        }
        let p = write(&dir, "c.csv", "x,Y\n1,\n2,3\n");
        match load_csv(&p, &ColumnSchema::new("Y")).unwrap_err() {
            Error::Cell { row, column, message, .. } => {
                assert_eq!((row, column.as_str(), message.as_str()), (1, "Y", "missing value"))
            }
            e => panic!("{e}"),
        }
        assert!(load_csv(&p, &ColumnSchema::new("nope")).is_err());
        assert!(load_csv(&dir.path().join("missing.csv"), &ColumnSchema::new("Y")).is_err());
    }

    #[test]
    fn schema_from_toml() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            &dir,
            "s.toml",
            "response = \"BodyFat\"\nexclude = [\"Density\"]\ntransform = \"log\"\nresponse_scale = 0.01\n",
        );
        let s = ColumnSchema::from_toml_file(&p).unwrap();
        assert_eq!(s.transform, Transform::Log);
        assert_eq!(s.exclude, vec![ColumnRef::Name("Density".into())]);
        let p = write(&dir, "t.toml", "response = 2\npredictors = [0, \"b\"]\n");
        let s = ColumnSchema::from_toml_file(&p).unwrap();
        assert_eq!(s.predictors, vec![ColumnRef::Index(0), ColumnRef::Name("b".into())]);
    }

    #[test]
    fn split_examples() {
        let d = Dataset::new(vec![(0..252).map(|i| i as f64).collect()], vec![0.0; 252]).unwrap();
        let s = random_split(&d, 150, 3).unwrap();
        assert_eq!(s.test.n(), 102);
        assert_eq!(s, random_split(&d, 150, 3).unwrap());
        assert_ne!(s.train_indices, random_split(&d, 150, 4).unwrap().train_indices);
        assert!(random_split(&d, 252, 3).is_err());
        assert!(random_split(&d, 0, 3).is_err());
    }

    proptest! {
        #[test]
        fn split_is_a_partition(n in 2usize..200, frac in 0.01f64..0.99, seed in any::<u64>()) {
            let n_tr = ((n as f64 * frac) as usize).clamp(1, n - 1);
            let d = Dataset::new(vec![(0..n).map(|i| i as f64).collect()], vec![0.0; n]).unwrap();
            let s = random_split(&d, n_tr, seed).unwrap();
            let mut all: Vec<usize> = s.train_indices.iter().chain(&s.test_indices).cloned().collect();
            all.sort_unstable();
            prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
            let expect: Vec<f64> = s.train_indices.iter().map(|&i| i as f64).collect();
            prop_assert_eq!(s.train.column(0), expect.as_slice());
        }

        #[test]
        fn csv_round_trip(rows in proptest::collection::vec(proptest::collection::vec(-1e6f64..1e6, 3), 1..40)) {
            let y: Vec<f64> = rows.iter().map(|r| r[0] * 0.5 - r[2]).collect();
            let d = Dataset::from_rows(&rows, y).unwrap();
            let dir = tempfile::tempdir().unwrap();
            let p = dir.path().join("d.csv");
            write_csv(&d, &p, "Y").unwrap();
            let back = load_csv(&p, &ColumnSchema::new("Y")).unwrap();
            prop_assert_eq!(back.names(), d.names());
            for j in 0..3 {
                for (a, b) in back.column(j).iter().zip(d.column(j)) {
                    prop_assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0));
                }
            }
            prop_assert_eq!(back.response(), d.response());
        }
    }
}
