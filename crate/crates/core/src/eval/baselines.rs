//! Side-by-side comparison of a report with published per-class baselines.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::eval::report::{report_from_aucs, EvalReport, ScoreSource};
use crate::labels::{DiseaseLabel, NUM_CLASSES};

const BUNDLED_TABLE: &str = include_str!("../../assets/baseline_auc.csv");

/// Name of the reference-method column in the bundled table.
pub const REFERENCE_COLUMN: &str = "Reference";

#[derive(Debug, Clone, PartialEq)]
pub struct BaselineColumn {
    pub name: String,
    pub aucs: [f64; NUM_CLASSES],
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct BaselineTable {
    pub columns: Vec<BaselineColumn>,
}

fn lookup_disease(name: &str) -> Option<DiseaseLabel> {
    DiseaseLabel::from_name(&name.trim().replace(' ', "_"))
}

impl BaselineTable {
    /// Parses `disease,<col>,<col>...` CSV with `#` comment lines.
    pub fn parse_csv(text: &str) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .trim(csv::Trim::All)
            .from_reader(text.as_bytes());
        let headers = reader.headers()?.clone();
        let names: Vec<String> = headers.iter().skip(1).map(str::to_string).collect();
        if names.is_empty() {
            return Err(Error::InvalidInput("baseline table has no columns".into()));
        }
        let mut values: Vec<[Option<f64>; NUM_CLASSES]> = vec![[None; NUM_CLASSES]; names.len()];
        let mut n_rows = 0;
        for (row, rec) in reader.records().enumerate() {
            let rec = rec?;
            n_rows += 1;
            let disease = lookup_disease(&rec[0]).ok_or_else(|| Error::Manifest {
                row: row + 1,
                message: format!("unknown disease {:?}", &rec[0]),
            })?;
            for (col, cell) in rec.iter().skip(1).enumerate() {
                let v: f64 = cell.parse().map_err(|_| Error::Manifest {
                    row: row + 1,
                    message: format!("bad AUC {cell:?}"),
                })?;
                if !(0.0..=1.0).contains(&v) {
                    return Err(Error::Manifest {
                        row: row + 1,
                        message: format!("AUC {v} outside [0, 1]"),
                    });
                }
                values[col][disease.index()] = Some(v);
            }
        }
        if n_rows == 0 {
            return Err(Error::InvalidInput("baseline table has no rows".into()));
        }
        let mut columns = Vec::with_capacity(names.len());
        for (name, vals) in names.into_iter().zip(values) {
            let mut aucs = [0.0; NUM_CLASSES];
            for d in DiseaseLabel::all() {
                aucs[d.index()] = vals[d.index()].ok_or_else(|| {
                    Error::InvalidInput(format!("baseline column {name:?} is missing {}", d.display_name()))
                })?;
            }
            columns.push(BaselineColumn { name, aucs });
        }
        Ok(Self { columns })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::MissingFile(path.to_path_buf()),
            _ => Error::file(path, e),
        })?;
        Self::parse_csv(&text).map_err(|e| Error::file(path, e))
    }

    /// The four published baselines, without the reference column.
    pub fn bundled() -> Self {
        let mut t = Self::parse_csv(BUNDLED_TABLE).expect("bundled table parses");
        t.columns.retain(|c| c.name != REFERENCE_COLUMN);
        t
    }

    pub fn column(&self, name: &str) -> Option<&BaselineColumn> {
        self.columns.iter().find(|c| c.name == name)
    }
}

/// The bundled reference-method column as a report.
pub fn reference_report() -> EvalReport {
    let table = BaselineTable::parse_csv(BUNDLED_TABLE).expect("bundled table parses");
    let col = table.column(REFERENCE_COLUMN).expect("reference column present");
    let aucs: Vec<Option<f64>> = col.aucs.iter().map(|a| Some(*a)).collect();
    report_from_aucs(&aucs, ScoreSource::ZeroShotPrompts, 0)
        .expect("fourteen defined values")
        .with_meta("origin", "bundled reference values")
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonRow {
    pub disease: String,
    pub values: Vec<Option<f64>>,
    /// Column index of the unique maximum, if there is one.
    pub best: Option<usize>,
    /// Set when two or more columns share the maximum.
    pub tie: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonTable {
    pub columns: Vec<String>,
    pub rows: Vec<ComparisonRow>,
    pub average: Vec<Option<f64>>,
}

fn best_of(values: &[Option<f64>]) -> (Option<usize>, bool) {
    let max = values.iter().flatten().copied().fold(f64::NEG_INFINITY, f64::max);
    let at_max: Vec<usize> = (0..values.len()).filter(|&i| values[i] == Some(max)).collect();
    match at_max.len() {
        0 => (None, false),
        1 => (Some(at_max[0]), false),
        _ => (None, true),
    }
}

/// Baseline columns first, then the report under `report_name`.
pub fn compare_with_baselines(report: &EvalReport, report_name: &str, baselines: &BaselineTable) -> Result<ComparisonTable> {
    if report.per_class_auc.len() != NUM_CLASSES {
        return Err(Error::Evaluation("report does not cover the 14 classes".into()));
    }
    let mut columns: Vec<String> = baselines.columns.iter().map(|c| c.name.clone()).collect();
    columns.push(report_name.to_string());
    let rows = DiseaseLabel::all()
        .map(|d| {
            let mut values: Vec<Option<f64>> = baselines.columns.iter().map(|c| Some(c.aucs[d.index()])).collect();
            values.push(report.auc_of(d));
            let (best, tie) = if values.len() > 1 { best_of(&values) } else { (None, false) };
            ComparisonRow {
                disease: d.display_name(),
                values,
                best,
                tie,
            }
        })
        .collect::<Vec<_>>();
    let average = (0..columns.len())
        .map(|c| {
            let v: Vec<f64> = rows.iter().filter_map(|r| r.values[c]).collect();
            (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
        })
        .collect();
    Ok(ComparisonTable { columns, rows, average })
}

fn cell(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.3}")).unwrap_or_else(|| "n/a".into())
}

impl ComparisonTable {
    pub fn average_strings(&self) -> Vec<String> {
        self.average.iter().map(|v| cell(*v)).collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = format!("disease,{},best\n", self.columns.join(","));
        for r in &self.rows {
            let vals: Vec<String> = r.values.iter().map(|v| cell(*v)).collect();
            let best = match (r.best, r.tie) {
                (Some(i), _) => self.columns[i].clone(),
                (None, true) => "tie".into(),
                (None, false) => String::new(),
            };
            let _ = writeln!(out, "{},{},{best}", r.disease, vals.join(","));
        }
        let _ = writeln!(out, "Average AUC,{},", self.average_strings().join(","));
        out
    }

    /// Aligned plain text; the best value in each row carries a `*`.
    pub fn to_text(&self) -> String {
        let first = self.rows.iter().map(|r| r.disease.len()).max().unwrap_or(0).max("Average AUC".len());
        let widths: Vec<usize> = self.columns.iter().map(|c| c.len().max(6)).collect();
        let mut out = format!("{:first$}", "Pathology");
        for (c, w) in self.columns.iter().zip(&widths) {
            let _ = write!(out, "  {c:>w$}");
        }
        out.push('\n');
        for r in &self.rows {
            let _ = write!(out, "{:first$}", r.disease);
            for (i, (v, w)) in r.values.iter().zip(&widths).enumerate() {
                let mark = if r.best == Some(i) { "*" } else { " " };
                let _ = write!(out, "  {:>w$}", format!("{}{mark}", cell(*v)), w = *w);
            }
            if r.tie {
                out.push_str("  (tie)");
            }
            out.push('\n');
        }
        let _ = write!(out, "{:first$}", "Average AUC");
        for (v, w) in self.average_strings().iter().zip(&widths) {
            let _ = write!(out, "  {:>w$}", format!("{v} "), w = *w);
        }
        out.push('\n');
        out
    }
}
