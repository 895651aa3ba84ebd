//! Dataset/ground-truth loading, per-feature standardization, and the
//! corpus-property summary (rows, columns, anomalous-timeslot and
//! anomalous-KPI fractions with a five-number summary).
//!
//! File format: UTF-8 CSV with `\n` line endings. The header starts with a
//! `timestamp` cell followed by unique KPI names restricted to
//! `[A-Za-z0-9._/-]+`. Each data row is one timeslot: a timestamp (integer or
//! ISO-8601) followed by one decimal value per KPI. The ground-truth file has
//! an identical header and 0/1 cells.

use std::fs::File;
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::{derive_anomalous_timeslots, Dataset, GroundTruth};

/// One troubleshooting case: a dataset together with its expert labels.
#[derive(Debug, Clone, PartialEq)]
pub struct CaseBundle {
    dataset: Dataset,
    gt: GroundTruth,
    case_id: String,
}

impl CaseBundle {
    pub fn new(dataset: Dataset, gt: GroundTruth, case_id: impl Into<String>) -> Result<Self> {
        if dataset.feature_count() != gt.feature_count()
            || dataset.timeslot_count() != gt.timeslot_count()
        {
            return Err(Error::DimensionMismatch(format!(
                "dataset is {}x{} but ground truth is {}x{}",
                dataset.feature_count(),
                dataset.timeslot_count(),
                gt.feature_count(),
                gt.timeslot_count()
            )));
        }
        Ok(CaseBundle {
            dataset,
            gt,
            case_id: case_id.into(),
        })
    }

    pub fn dataset(&self) -> &Dataset {
        &self.dataset
    }

    pub fn gt(&self) -> &GroundTruth {
        &self.gt
    }

    pub fn case_id(&self) -> &str {
        &self.case_id
    }

    /// Same case with the dataset replaced (used when standardizing).
    pub fn with_dataset(&self, dataset: Dataset) -> Result<Self> {
        CaseBundle::new(dataset, self.gt.clone(), self.case_id.clone())
    }
}

fn valid_kpi_name(name: &str) -> bool {
    !name.is_empty()
        && name
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '.' | '_' | '/' | '-'))
}

fn read_rows(path: &Path) -> Result<Vec<Vec<String>>> {
    let file = File::open(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(file);
    let mut rows = Vec::new();
    for (idx, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: idx + 1,
            message: e.to_string(),
        })?;
        rows.push(record.iter().map(str::to_string).collect());
    }
    Ok(rows)
}

fn parse_header(path: &Path, rows: &[Vec<String>]) -> Result<Vec<String>> {
    let header = rows.first().ok_or_else(|| Error::Parse {
        path: path.to_path_buf(),
        line: 0,
        message: "empty file".into(),
    })?;
    if header.first().map(String::as_str) != Some("timestamp") {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            line: 1,
            message: "first header cell must be `timestamp`".into(),
        });
    }
    let names: Vec<String> = header[1..].to_vec();
    if names.is_empty() {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            line: 1,
            message: "header lists no KPI".into(),
        });
    }
    for name in &names {
        if !valid_kpi_name(name) {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: 1,
                message: format!("invalid KPI name `{name}`"),
            });
        }
    }
    Ok(names)
}

struct RawTable {
    names: Vec<String>,
    timestamps: Vec<String>,
    /// F rows × T columns.
    cells: Vec<Vec<String>>,
}

fn read_table(path: &Path) -> Result<RawTable> {
    let rows = read_rows(path)?;
    let names = parse_header(path, &rows)?;
    let f = names.len();
    let t = rows.len() - 1;
    let mut timestamps = Vec::with_capacity(t);
    let mut cells = vec![Vec::with_capacity(t); f];
    for (idx, row) in rows[1..].iter().enumerate() {
        if row.len() != f + 1 {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: idx + 2,
                message: format!("expected {} cells, got {}", f + 1, row.len()),
            });
        }
        timestamps.push(row[0].clone());
        for (j, cell) in row[1..].iter().enumerate() {
            cells[j].push(cell.clone());
        }
    }
    Ok(RawTable {
        names,
        timestamps,
        cells,
    })
}

/// Load a dataset/ground-truth file pair into a validated [`CaseBundle`] with
/// raw (unstandardized) values.
///
/// The case id is the parent directory name when the data file is called
/// `data.csv` (the suite layout), otherwise the file stem.
pub fn load_case(dataset_path: &Path, gt_path: &Path) -> Result<CaseBundle> {
    let data = read_table(dataset_path)?;
    let labels = read_table(gt_path)?;

    if data.names != labels.names {
        return Err(Error::Parse {
            path: gt_path.to_path_buf(),
            line: 1,
            message: "ground-truth header does not match dataset header".into(),
        });
    }
    if data.timestamps != labels.timestamps {
        return Err(Error::Parse {
            path: gt_path.to_path_buf(),
            line: 2,
            message: "ground-truth timeslots do not match dataset timeslots".into(),
        });
    }

    let mut values = Vec::with_capacity(data.cells.len());
    for (j, row) in data.cells.iter().enumerate() {
        let mut parsed = Vec::with_capacity(row.len());
        for (t, cell) in row.iter().enumerate() {
            let v: f64 = cell.parse().map_err(|_| Error::Parse {
                path: dataset_path.to_path_buf(),
                line: t + 2,
                message: format!("non-numeric cell `{cell}` for KPI {}", data.names[j]),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    path: dataset_path.to_path_buf(),
                    line: t + 2,
                    message: format!("non-finite cell `{cell}` for KPI {}", data.names[j]),
                });
            }
            parsed.push(v);
        }
        values.push(parsed);
    }

    let mut flags = Vec::with_capacity(labels.cells.len());
    for (j, row) in labels.cells.iter().enumerate() {
        let mut parsed = Vec::with_capacity(row.len());
        for (t, cell) in row.iter().enumerate() {
            match cell.as_str() {
                "0" => parsed.push(false),
                "1" => parsed.push(true),
                other => {
                    return Err(Error::Parse {
                        path: gt_path.to_path_buf(),
                        line: t + 2,
                        message: format!("non-binary label `{other}` for KPI {}", labels.names[j]),
                    })
                }
            }
        }
        flags.push(parsed);
    }

    let case_id = derive_case_id(dataset_path);
    let dataset = Dataset::new(data.names, data.timestamps, values).map_err(|e| match e {
        Error::InvalidData(msg) => Error::Parse {
            path: dataset_path.to_path_buf(),
            line: 0,
            message: msg,
        },
        other => other,
    })?;
    let gt = GroundTruth::new(flags, case_id.clone())?;
    CaseBundle::new(dataset, gt, case_id)
}

fn derive_case_id(dataset_path: &Path) -> String {
    let stem = dataset_path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "case".to_string());
    if stem == "data" {
        if let Some(parent) = dataset_path.parent().and_then(|p| p.file_name()) {
            return parent.to_string_lossy().into_owned();
        }
    }
    stem
}

/// Load every case of a suite directory (layout `<dir>/<case_id>/data.csv` +
/// `gt.csv`), sorted by case id.
pub fn load_suite(dir: &Path) -> Result<Vec<CaseBundle>> {
    let entries = std::fs::read_dir(dir).map_err(|source| Error::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let mut case_dirs: Vec<_> = entries
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| p.is_dir() && p.join("data.csv").is_file())
        .collect();
    case_dirs.sort();
    if case_dirs.is_empty() {
        return Err(Error::EmptyInput(format!(
            "no case directories under {}",
            dir.display()
        )));
    }
    case_dirs
        .iter()
        .map(|p| load_case(&p.join("data.csv"), &p.join("gt.csv")))
        .collect()
}

/// Standardize each feature to zero mean and unit population standard
/// deviation; zero-variance features map to all-zeros so F stays stable.
pub fn standardize(dataset: &Dataset) -> Result<Dataset> {
    if dataset.is_standardized() {
        return Err(Error::AlreadyStandardized);
    }
    let t = dataset.timeslot_count() as f64;
    let values = dataset
        .values()
        .iter()
        .map(|row| {
            let mean = row.iter().sum::<f64>() / t;
            let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / t;
            let sigma = var.sqrt();
            if sigma == 0.0 {
                vec![0.0; row.len()]
            } else {
                row.iter().map(|v| (v - mean) / sigma).collect()
            }
        })
        .collect();
    Dataset::with_flag(
        dataset.feature_names().to_vec(),
        dataset.timestamps().to_vec(),
        values,
        true,
    )
}

/// Standardize the dataset inside a case (no-op when already standardized).
pub fn standardize_case(case: &CaseBundle) -> Result<CaseBundle> {
    if case.dataset().is_standardized() {
        Ok(case.clone())
    } else {
        case.with_dataset(standardize(case.dataset())?)
    }
}

/// Per-case corpus properties.
#[derive(Debug, Clone, PartialEq)]
pub struct CaseStats {
    pub case_id: String,
    pub timeslots: usize,
    pub kpis: usize,
    pub anomalous_timeslot_fraction: f64,
    pub anomalous_kpi_fraction: f64,
}

/// Five-number summary (type-7 linearly interpolated quartiles).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FiveNumber {
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
}

impl FiveNumber {
    fn from_values(values: &[f64]) -> Self {
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        FiveNumber {
            min: sorted[0],
            q1: quantile_type7(&sorted, 0.25),
            median: quantile_type7(&sorted, 0.5),
            q3: quantile_type7(&sorted, 0.75),
            max: sorted[sorted.len() - 1],
        }
    }
}

/// Linear interpolation between closest ranks on a sorted slice.
fn quantile_type7(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Corpus-wide dataset properties: per-case rows plus five-number summaries
/// and totals.
#[derive(Debug, Clone, PartialEq)]
pub struct CorpusStats {
    pub per_case: Vec<CaseStats>,
    pub timeslots: FiveNumber,
    pub kpis: FiveNumber,
    pub anomalous_timeslot_fraction: FiveNumber,
    pub anomalous_kpi_fraction: FiveNumber,
    pub total_timeslots: usize,
    pub total_kpis: usize,
    /// Flagged timeslots across all cases over total timeslots.
    pub total_anomalous_timeslot_fraction: f64,
    /// Flagged KPIs across all cases over total KPIs.
    pub total_anomalous_kpi_fraction: f64,
}

pub fn corpus_stats(cases: &[CaseBundle]) -> Result<CorpusStats> {
    if cases.is_empty() {
        return Err(Error::EmptyInput("corpus has no cases".into()));
    }
    let mut per_case = Vec::with_capacity(cases.len());
    let mut total_slots = 0usize;
    let mut total_kpis = 0usize;
    let mut total_anom_slots = 0usize;
    let mut total_anom_kpis = 0usize;
    for case in cases {
        let t = case.dataset().timeslot_count();
        let f = case.dataset().feature_count();
        let anom_slots = derive_anomalous_timeslots(case.gt()).count();
        let anom_kpis = case.gt().anomalous_features().len();
        total_slots += t;
        total_kpis += f;
        total_anom_slots += anom_slots;
        total_anom_kpis += anom_kpis;
        per_case.push(CaseStats {
            case_id: case.case_id().to_string(),
            timeslots: t,
            kpis: f,
            anomalous_timeslot_fraction: anom_slots as f64 / t as f64,
            anomalous_kpi_fraction: anom_kpis as f64 / f as f64,
        });
    }
    let col = |get: fn(&CaseStats) -> f64| -> Vec<f64> { per_case.iter().map(get).collect() };
    Ok(CorpusStats {
        timeslots: FiveNumber::from_values(&col(|c| c.timeslots as f64)),
        kpis: FiveNumber::from_values(&col(|c| c.kpis as f64)),
        anomalous_timeslot_fraction: FiveNumber::from_values(&col(|c| c.anomalous_timeslot_fraction)),
        anomalous_kpi_fraction: FiveNumber::from_values(&col(|c| c.anomalous_kpi_fraction)),
        per_case,
        total_timeslots: total_slots,
        total_kpis,
        total_anomalous_timeslot_fraction: total_anom_slots as f64 / total_slots as f64,
        total_anomalous_kpi_fraction: total_anom_kpis as f64 / total_kpis as f64,
    })
}
