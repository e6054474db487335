//! Methods × suites comparison across run directories.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::{metrics_file, RunMeta};
use crate::error::{Error, Result};
use crate::eval::from_jsonl;
use crate::train::Method;

/// Mean and sample standard deviation over seeds.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Stat {
    pub mean: f64,
    pub std: f64,
    pub n: usize,
}

impl Stat {
    pub fn of(xs: &[f64]) -> Stat {
        let n = xs.len();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let std = if n > 1 {
            (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        Stat { mean, std, n }
    }

    fn cell(&self) -> String {
        if self.n > 1 {
            format!("{:.2}±{:.2}", 100.0 * self.mean, 100.0 * self.std)
        } else {
            format!("{:.2}", 100.0 * self.mean)
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReportRow {
    pub method: String,
    /// One entry per report column; `None` where the method has no runs.
    pub cells: Vec<Option<Stat>>,
    /// Unweighted mean over shifted suites, aggregated over seeds.
    pub avg: Option<Stat>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Report {
    pub suites: Vec<String>,
    pub rows: Vec<ReportRow>,
}

/// Datasets left out of the Avg column.
fn in_distribution(name: &str) -> bool {
    matches!(name, "iid_val" | "train" | "target_train")
}

impl Report {
    /// Aligned table in percent.
    pub fn text(&self) -> String {
        let mut header = vec!["method".to_string()];
        header.extend(self.suites.iter().cloned());
        header.push("Avg".into());
        let dash = || "-".to_string();
        let rows: Vec<Vec<String>> = self
            .rows
            .iter()
            .map(|r| {
                let mut v = vec![r.method.clone()];
                v.extend(r.cells.iter().map(|c| c.map_or_else(dash, |s| s.cell())));
                v.push(r.avg.map_or_else(dash, |s| s.cell()));
                v
            })
            .collect();
        let mut width: Vec<usize> = header.iter().map(String::len).collect();
        for row in &rows {
            for (w, c) in width.iter_mut().zip(row) {
                *w = (*w).max(c.chars().count());
            }
        }
        let mut out = String::new();
        for row in std::iter::once(&header).chain(&rows) {
            for (i, c) in row.iter().enumerate() {
                let pad = width[i] - c.chars().count();
                if i == 0 {
                    let _ = write!(out, "{c}{}", " ".repeat(pad));
                } else {
                    let _ = write!(out, "  {}{c}", " ".repeat(pad));
                }
            }
            out.push('\n');
        }
        out
    }

    /// Long-format CSV: one line per (method, column).
    pub fn csv(&self) -> String {
        let mut out = String::from("method,suite,n_seeds,mean,std\n");
        for r in &self.rows {
            let cols = self.suites.iter().map(String::as_str).chain(["Avg"]);
            let cells = r.cells.iter().chain(std::iter::once(&r.avg));
            for (suite, cell) in cols.zip(cells) {
                if let Some(s) = cell {
                    let _ = writeln!(out, "{},{suite},{},{:?},{:?}", r.method, s.n, s.mean, s.std);
                }
            }
        }
        out
    }
}

struct Run {
    method: String,
    accs: Vec<(String, f64)>,
}

fn method_rank(name: &str) -> (usize, String) {
    let rank = name.parse::<Method>().map_or(usize::MAX, |m| {
        Method::ALL.iter().position(|&x| x == m).unwrap()
    });
    (rank, name.to_string())
}

/// Merges the metrics of several run directories. With `out`, writes
/// `report.txt` and `report.csv` there.
pub fn cmd_report<P: AsRef<Path>>(
    runs: &[P],
    window: Option<usize>,
    out: Option<&Path>,
) -> Result<Report> {
    if runs.is_empty() {
        return Err(Error::config("report needs at least one run directory"));
    }
    let mut classes: Option<(usize, &Path)> = None;
    let mut loaded = Vec::new();
    for dir in runs {
        let dir = dir.as_ref();
        let meta = RunMeta::load(dir)?;
        match classes {
            Some((n, first)) if n != meta.n_classes => {
                return Err(Error::contract(format!(
                    "{} has {} classes but {} has {}",
                    first.display(),
                    n,
                    dir.display(),
                    meta.n_classes
                )));
            }
            None => classes = Some((meta.n_classes, dir)),
            _ => {}
        }
        let path = dir.join(metrics_file(window));
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let accs = from_jsonl(&text)?
            .into_iter()
            .map(|r| (r.dataset, r.acc))
            .collect();
        loaded.push(Run {
            method: meta.method,
            accs,
        });
    }

    let mut suites: Vec<String> = Vec::new();
    for run in &loaded {
        for (s, _) in &run.accs {
            if !suites.contains(s) {
                suites.push(s.clone());
            }
        }
    }
    let mut by_method: BTreeMap<(usize, String), Vec<&Run>> = BTreeMap::new();
    for run in &loaded {
        by_method
            .entry(method_rank(&run.method))
            .or_default()
            .push(run);
    }
    let rows = by_method
        .into_iter()
        .map(|((_, method), runs)| {
            let cells = suites
                .iter()
                .map(|s| {
                    let xs: Vec<f64> = runs
                        .iter()
                        .filter_map(|r| r.accs.iter().find(|(n, _)| n == s).map(|x| x.1))
                        .collect();
                    (!xs.is_empty()).then(|| Stat::of(&xs))
                })
                .collect();
            let avgs: Vec<f64> = runs
                .iter()
                .filter_map(|r| {
                    let shifted: Vec<f64> = r
                        .accs
                        .iter()
                        .filter(|(n, _)| !in_distribution(n))
                        .map(|x| x.1)
                        .collect();
                    (!shifted.is_empty())
                        .then(|| shifted.iter().sum::<f64>() / shifted.len() as f64)
                })
                .collect();
            ReportRow {
                method,
                cells,
                avg: (!avgs.is_empty()).then(|| Stat::of(&avgs)),
            }
        })
        .collect();
    let report = Report { suites, rows };
    if let Some(dir) = out {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let txt = dir.join("report.txt");
        fs::write(&txt, report.text()).map_err(|e| Error::io(&txt, e))?;
        let csv = dir.join("report.csv");
        fs::write(&csv, report.csv()).map_err(|e| Error::io(&csv, e))?;
    }
    Ok(report)
}
