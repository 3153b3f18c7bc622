//! Mean AUC as a function of the number of labelled examples per class.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::eval::report::EvalReport;

const SHOTS_REFERENCE: &str = include_str!("../../assets/shots_reference.csv");

#[derive(Debug, Clone, PartialEq)]
pub struct ShotsCurve {
    pub rows: Vec<(usize, f64)>,
}

pub fn shots_curve(reports: &[EvalReport]) -> Result<ShotsCurve> {
    ShotsCurve::from_pairs(reports.iter().map(|r| (r.n_shots, r.mean_auc)).collect())
}

impl ShotsCurve {
    /// Sorts by shot count; duplicate shot counts are rejected.
    pub fn from_pairs(mut rows: Vec<(usize, f64)>) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::InvalidInput("shots curve needs at least one report".into()));
        }
        rows.sort_by_key(|r| r.0);
        if let Some(w) = rows.windows(2).find(|w| w[0].0 == w[1].0) {
            return Err(Error::InvalidInput(format!("duplicate shot count {}", w[0].0)));
        }
        Ok(Self { rows })
    }

    /// The bundled reference curve.
    pub fn reference() -> Self {
        Self::parse_csv(SHOTS_REFERENCE).expect("bundled curve parses")
    }

    pub fn parse_csv(text: &str) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(text.as_bytes());
        let mut rows = Vec::new();
        for rec in reader.deserialize() {
            rows.push(rec?);
        }
        Self::from_pairs(rows)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("shots,mean_auc\n");
        for (s, a) in &self.rows {
            let _ = writeln!(out, "{s},{a}");
        }
        out
    }

    /// Line plot with shots on a categorical x axis.
    pub fn to_svg(&self) -> String {
        let (w, h, m) = (640.0, 400.0, 60.0);
        let lo = self.rows.iter().map(|r| r.1).fold(f64::INFINITY, f64::min);
        let hi = self.rows.iter().map(|r| r.1).fold(f64::NEG_INFINITY, f64::max);
        let pad = ((hi - lo) * 0.15).max(1e-3);
        let (lo, hi) = (lo - pad, hi + pad);
        let n = self.rows.len();
        let x = |i: usize| m + (w - 2.0 * m) * if n > 1 { i as f64 / (n - 1) as f64 } else { 0.5 };
        let y = |v: f64| h - m - (h - 2.0 * m) * (v - lo) / (hi - lo);
        let mut svg = format!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" font-family=\"sans-serif\" font-size=\"12\">\n\
             <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n\
             <line x1=\"{m}\" y1=\"{b}\" x2=\"{r}\" y2=\"{b}\" stroke=\"black\"/>\n\
             <line x1=\"{m}\" y1=\"{m}\" x2=\"{m}\" y2=\"{b}\" stroke=\"black\"/>\n\
             <text x=\"{cx}\" y=\"{xl}\" text-anchor=\"middle\">Number of shots</text>\n\
             <text x=\"16\" y=\"{cy}\" text-anchor=\"middle\" transform=\"rotate(-90 16 {cy})\">Mean AUC</text>\n",
            b = h - m,
            r = w - m,
            cx = w / 2.0,
            xl = h - 15.0,
            cy = h / 2.0,
        );
        for k in 0..=4 {
            let v = lo + (hi - lo) * k as f64 / 4.0;
            let _ = writeln!(
                svg,
                "<text x=\"{}\" y=\"{:.1}\" text-anchor=\"end\">{v:.4}</text>",
                m - 6.0,
                y(v) + 4.0
            );
        }
        let points: Vec<String> = self
            .rows
            .iter()
            .enumerate()
            .map(|(i, r)| format!("{:.1},{:.1}", x(i), y(r.1)))
            .collect();
        let _ = writeln!(
            svg,
            "<polyline points=\"{}\" fill=\"none\" stroke=\"steelblue\" stroke-width=\"2\"/>",
            points.join(" ")
        );
        for (i, (s, v)) in self.rows.iter().enumerate() {
            let _ = writeln!(
                svg,
                "<circle cx=\"{:.1}\" cy=\"{:.1}\" r=\"4\" fill=\"steelblue\"><title>{s}: {v:.4}</title></circle>\n\
                 <text x=\"{:.1}\" y=\"{}\" text-anchor=\"middle\">{s}</text>",
                x(i),
                y(*v),
                x(i),
                h - m + 18.0
            );
        }
        svg.push_str("</svg>\n");
        svg
    }

    /// Writes `<stem>.csv` and `<stem>.svg` into `dir`.
    pub fn write(&self, dir: &Path, stem: &str) -> Result<(PathBuf, PathBuf)> {
        std::fs::create_dir_all(dir)?;
        let csv = dir.join(format!("{stem}.csv"));
        let svg = dir.join(format!("{stem}.svg"));
        std::fs::write(&csv, self.to_csv()).map_err(|e| Error::file(&csv, e))?;
        std::fs::write(&svg, self.to_svg()).map_err(|e| Error::file(&svg, e))?;
        Ok((csv, svg))
    }
}
