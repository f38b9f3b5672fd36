//! CSV ingestion and the on-disk formats: long-format grid CSVs with JSON
//! sidecars, and self-describing model artifacts.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use twoscale::{CompetingRecord, CovariateValue, FittedModel, IndividualRecord, Plane};

use crate::config::Columns;
use crate::error::{csv_error, CliError, Result};

/// A CSV file held in memory with its header.
pub struct Table {
    pub path: PathBuf,
    pub headers: Vec<String>,
    pub rows: Vec<csv::StringRecord>,
}

impl Table {
    pub fn read(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| CliError::io(path, e))?;
        let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
        let headers: Vec<String> =
            reader.headers().map_err(|e| csv_error(path, e))?.iter().map(str::to_string).collect();
        if headers.iter().all(String::is_empty) {
            return Err(CliError::Schema(format!("{}: file is empty or has no header", path.display())));
        }
        let rows = reader.records().collect::<std::result::Result<Vec<_>, _>>().map_err(|e| csv_error(path, e))?;
        Ok(Self { path: path.to_path_buf(), headers, rows })
    }

    pub fn column(&self, name: &str) -> Result<usize> {
        self.headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| CliError::Schema(format!("{}: missing column '{name}'", self.path.display())))
    }

    pub fn text(&self, row: usize, col: usize) -> &str {
        self.rows[row].get(col).unwrap_or("")
    }

    /// Numeric field; `row` is the 0-based data row, reported 1-based.
    pub fn number(&self, row: usize, col: usize) -> Result<f64> {
        let text = self.text(row, col);
        text.parse::<f64>().map_err(|_| {
            CliError::Schema(format!(
                "{}: row {}, column '{}': cannot parse '{text}' as a number",
                self.path.display(),
                row + 1,
                self.headers[col]
            ))
        })
    }

    fn flag(&self, row: usize, col: usize) -> Result<bool> {
        match self.text(row, col) {
            "true" | "TRUE" | "True" => Ok(true),
            "false" | "FALSE" | "False" => Ok(false),
            _ => Ok(self.number(row, col)? != 0.0),
        }
    }
}

/// Column positions resolved against a table header.
struct Bound {
    u: usize,
    s_in: Option<usize>,
    s_out: usize,
    event: usize,
    covariates: Vec<(String, usize, bool)>,
}

impl Bound {
    fn new(table: &Table, columns: &Columns) -> Result<Self> {
        Ok(Self {
            u: table.column(&columns.u)?,
            s_in: columns.s_in.as_deref().map(|c| table.column(c)).transpose()?,
            s_out: table.column(&columns.s_out)?,
            event: table.column(&columns.event)?,
            covariates: columns
                .covariates
                .iter()
                .map(|c| Ok((c.clone(), table.column(c)?, columns.categorical.contains(c))))
                .collect::<Result<_>>()?,
        })
    }

    fn times(&self, table: &Table, row: usize) -> Result<(f64, f64, f64)> {
        let s_in = self.s_in.map(|c| table.number(row, c)).transpose()?.unwrap_or(0.0);
        Ok((table.number(row, self.u)?, s_in, table.number(row, self.s_out)?))
    }

    fn covariates(&self, table: &Table, row: usize) -> Result<BTreeMap<String, CovariateValue>> {
        self.covariates
            .iter()
            .map(|(name, col, categorical)| {
                let value = if *categorical {
                    CovariateValue::Categorical(table.text(row, *col).to_string())
                } else {
                    CovariateValue::Numeric(table.number(row, *col)?)
                };
                Ok((name.clone(), value))
            })
            .collect()
    }
}

/// Individual records for a single event type.
pub fn read_records(table: &Table, columns: &Columns) -> Result<Vec<IndividualRecord>> {
    let bound = Bound::new(table, columns)?;
    (0..table.rows.len())
        .map(|row| {
            let (u, s_in, s_out) = bound.times(table, row)?;
            let event = match &columns.event_value {
                Some(label) => table.text(row, bound.event) == label,
                None => table.flag(row, bound.event)?,
            };
            Ok(IndividualRecord { u, s_in, s_out, event, covariates: bound.covariates(table, row)? })
        })
        .collect()
}

/// Records with the cause of the event taken from the event column; labels
/// outside `causes` count as censoring.
pub fn read_competing(table: &Table, columns: &Columns, causes: &BTreeSet<String>) -> Result<Vec<CompetingRecord>> {
    let bound = Bound::new(table, columns)?;
    (0..table.rows.len())
        .map(|row| {
            let (u, s_in, s_out) = bound.times(table, row)?;
            let label = table.text(row, bound.event);
            let cause = causes.contains(label).then(|| label.to_string());
            Ok(CompetingRecord { u, s_in, s_out, cause, covariates: bound.covariates(table, row)? })
        })
        .collect()
}

pub fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    std::fs::write(path, contents).map_err(|e| CliError::io(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Config(e.to_string()))?;
    text.push('\n');
    write_file(path, &text)
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::Schema(format!("{}: {e}", path.display())))
}

/// Metadata written next to a long-format grid CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridMeta {
    pub quantity: String,
    pub plane: Plane,
    pub u_values: Vec<f64>,
    pub s_values: Vec<f64>,
    /// Cell widths used when drawing.
    pub du: f64,
    pub ds: f64,
    pub n_masked: usize,
    pub data: String,
}

/// A grid of values on `(u, s)` with a presence mask.
#[derive(Debug, Clone, PartialEq)]
pub struct GridFile {
    pub meta: GridMeta,
    pub values: Array2<f64>,
    pub present: Array2<bool>,
}

/// Smallest gap between consecutive axis values.
fn spacing(values: &[f64]) -> f64 {
    values.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min)
}

impl GridFile {
    pub fn new(quantity: &str, plane: Plane, u: &[f64], s: &[f64], values: Array2<f64>, present: Array2<bool>) -> Self {
        let step = |v: &[f64]| if v.len() > 1 { spacing(v) } else { 1.0 };
        let meta = GridMeta {
            quantity: quantity.to_string(),
            plane,
            u_values: u.to_vec(),
            s_values: s.to_vec(),
            du: step(u),
            ds: step(s),
            n_masked: present.iter().filter(|p| !**p).count(),
            data: format!("{quantity}.csv"),
        };
        Self { meta, values, present }
    }

    /// Writes `<dir>/<name>.csv` and `<dir>/<name>.json`.
    pub fn write(&self, dir: &Path, name: &str) -> Result<PathBuf> {
        let mut meta = self.meta.clone();
        meta.data = format!("{name}.csv");
        let mut csv = String::from("u,s,value,present\n");
        for (i, u) in meta.u_values.iter().enumerate() {
            for (j, s) in meta.s_values.iter().enumerate() {
                let _ = writeln!(csv, "{u},{s},{},{}", self.values[[i, j]], u8::from(self.present[[i, j]]));
            }
        }
        let path = dir.join(&meta.data);
        write_file(&path, &csv)?;
        write_json(&dir.join(format!("{name}.json")), &meta)?;
        Ok(path)
    }

    /// Reads a grid CSV, using its sidecar when present and otherwise
    /// inferring the axes from the distinct coordinates.
    pub fn read(path: &Path) -> Result<Self> {
        let table = Table::read(path)?;
        let (cu, cs, cv, cp) = (table.column("u")?, table.column("s")?, table.column("value")?, table.column("present")?);
        let mut cells = Vec::with_capacity(table.rows.len());
        for row in 0..table.rows.len() {
            let present = table.flag(row, cp)?;
            cells.push((table.number(row, cu)?, table.number(row, cs)?, table.number(row, cv)?, present));
        }
        let sidecar = path.with_extension("json");
        let meta = if sidecar.exists() {
            read_json::<GridMeta>(&sidecar)?
        } else {
            let axis = |k: usize| {
                let mut v: Vec<f64> = cells.iter().map(|c| if k == 0 { c.0 } else { c.1 }).collect();
                v.sort_by(f64::total_cmp);
                v.dedup();
                v
            };
            let quantity = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
            GridFile::new(&quantity, Plane::Us, &axis(0), &axis(1), Array2::zeros((0, 0)), Array2::default((0, 0))).meta
        };
        let (n_u, n_s) = (meta.u_values.len(), meta.s_values.len());
        let mut values = Array2::from_elem((n_u, n_s), f64::NAN);
        let mut present = Array2::from_elem((n_u, n_s), false);
        let index = |axis: &[f64], x: f64, name: &str| {
            axis.iter().position(|&a| a == x).ok_or_else(|| {
                CliError::Schema(format!("{}: {name} = {x} is not on the grid axis", path.display()))
            })
        };
        for (u, s, v, p) in cells {
            let (i, j) = (index(&meta.u_values, u, "u")?, index(&meta.s_values, s, "s")?);
            values[[i, j]] = v;
            present[[i, j]] = p;
        }
        Ok(Self { meta, values, present })
    }
}

/// Model file contents: the fitted model plus how its data were read.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelArtifact {
    pub format: String,
    pub version: u32,
    /// Event label of a cause-specific model.
    pub cause: Option<String>,
    pub columns: Columns,
    pub model: FittedModel,
}

pub const MODEL_FORMAT: &str = "twoscale-model";

impl ModelArtifact {
    pub fn new(columns: &Columns, model: FittedModel) -> Self {
        Self {
            format: MODEL_FORMAT.into(),
            version: 1,
            cause: columns.event_value.clone(),
            columns: columns.clone(),
            model,
        }
    }

    pub fn read(path: &Path) -> Result<Self> {
        let artifact: Self = read_json(path)?;
        if artifact.format != MODEL_FORMAT {
            return Err(CliError::Schema(format!("{}: not a model file", path.display())));
        }
        Ok(artifact)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
        let path = dir.join(name);
        std::fs::write(&path, text).unwrap();
        path
    }

    #[test]
    fn empty_file_is_a_schema_error() {
        let dir = tempfile::tempdir().unwrap();
        let err = Table::read(&write(dir.path(), "e.csv", "")).err().unwrap();
        assert!(matches!(err, CliError::Schema(_)), "{err}");
    }

    #[test]
    fn missing_column_is_named() {
        let dir = tempfile::tempdir().unwrap();
        let table = Table::read(&write(dir.path(), "t.csv", "a,b\n1,2\n")).unwrap();
        let err = read_records(&table, &Columns::default()).err().unwrap();
        assert!(err.to_string().contains("missing column 'u'"), "{err}");
    }

    #[test]
    fn parse_errors_name_the_row() {
        let dir = tempfile::tempdir().unwrap();
        let table = Table::read(&write(dir.path(), "t.csv", "u,s,event\n1,2,1\n3,x,0\n")).unwrap();
        let err = read_records(&table, &Columns::default()).err().unwrap();
        assert!(err.to_string().contains("row 2, column 's'"), "{err}");
    }

    #[test]
    fn event_labels_and_factors() {
        let dir = tempfile::tempdir().unwrap();
        let table = Table::read(&write(dir.path(), "t.csv", "u,s,cause,g\n1,2,death,a\n3,4,censored,b\n")).unwrap();
        let columns = Columns {
            event: "cause".into(),
            event_value: Some("death".into()),
            covariates: vec!["g".into()],
            categorical: vec!["g".into()],
            ..Columns::default()
        };
        let records = read_records(&table, &columns).unwrap();
        assert!(records[0].event && !records[1].event);
        assert_eq!(records[1].covariates["g"], CovariateValue::Categorical("b".into()));
        let causes = BTreeSet::from(["death".to_string()]);
        let competing = read_competing(&table, &columns, &causes).unwrap();
        assert_eq!(competing[0].cause.as_deref(), Some("death"));
        assert_eq!(competing[1].cause, None);
    }

    #[test]
    fn grid_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let values = Array2::from_shape_fn((3, 2), |(i, j)| (i as f64 + 0.1).ln() / 3.0 + j as f64 * 1e-17);
        let present = Array2::from_shape_fn((3, 2), |(i, j)| i + j != 3);
        let grid = GridFile::new("hazard", Plane::Ts, &[0.1, 0.3, 0.5], &[0.0, 0.7], values, present);
        let path = grid.write(dir.path(), "hazard").unwrap();
        assert_eq!(GridFile::read(&path).unwrap(), grid);
    }
}
