use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::eval::mean_std;

use super::pipeline::{PipelineReport, REPORT_FILE};

/// One grid cell: test MRR over the seeds of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    pub mean: f64,
    pub std: f64,
    pub seeds: Vec<u64>,
    /// Fewer seeds than the widest run in the table.
    pub missing_seeds: bool,
}

/// Test MRR grid: rows are `(attack, p)`, columns are defenses.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportTable {
    pub rows: Vec<(String, Option<f64>)>,
    pub columns: Vec<String>,
    pub cells: BTreeMap<(usize, usize), Cell>,
    /// Runs left out because their settings differ from the first run in
    /// the same cell.
    pub flags: Vec<String>,
}

fn row_label((attack, p): &(String, Option<f64>)) -> String {
    match p {
        Some(p) => format!("{attack} p={p}"),
        None => attack.clone(),
    }
}

impl ReportTable {
    /// Mean percentage gain of every column after the first over the first.
    pub fn gain(&self, row: usize) -> Option<f64> {
        let base = self.cells.get(&(row, 0))?.mean;
        if base == 0.0 || self.columns.len() < 2 {
            return None;
        }
        let gains: Vec<f64> = (1..self.columns.len())
            .filter_map(|c| self.cells.get(&(row, c)))
            .map(|c| 100.0 * (c.mean - base) / base)
            .collect();
        (!gains.is_empty()).then(|| gains.iter().sum::<f64>() / gains.len() as f64)
    }

    fn cell_text(&self, r: usize, c: usize) -> String {
        match self.cells.get(&(r, c)) {
            Some(cell) => {
                let mark = if cell.missing_seeds { "*" } else { "" };
                format!("{:.2} ± {:.2}{mark}", cell.mean, cell.std)
            }
            None => "-".to_string(),
        }
    }

    pub fn to_text(&self) -> String {
        let mut header = vec!["attack".to_string()];
        header.extend(self.columns.iter().cloned());
        header.push("gain %".to_string());
        let mut lines = vec![header];
        for (r, row) in self.rows.iter().enumerate() {
            let mut line = vec![row_label(row)];
            line.extend((0..self.columns.len()).map(|c| self.cell_text(r, c)));
            line.push(self.gain(r).map_or("-".to_string(), |g| format!("{g:+.2}")));
            lines.push(line);
        }
        let widths: Vec<usize> = (0..lines[0].len())
            .map(|i| lines.iter().map(|l| l[i].chars().count()).max().unwrap_or(0))
            .collect();
        let mut s = String::new();
        for l in &lines {
            let padded: Vec<String> = l
                .iter()
                .zip(&widths)
                .map(|(x, &w)| format!("{x}{}", " ".repeat(w - x.chars().count())))
                .collect();
            let _ = writeln!(s, "{}", padded.join("  ").trim_end());
        }
        if self.cells.values().any(|c| c.missing_seeds) {
            s.push_str("* fewer seeds than the widest run\n");
        }
        for f in &self.flags {
            let _ = writeln!(s, "! {f}");
        }
        s
    }

    /// `attack,p,defense,mean,std,seeds,missing_seeds` rows plus a gain row
    /// per attack.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["attack", "p", "defense", "mean", "std", "seeds", "missing_seeds"])?;
        for (r, (attack, p)) in self.rows.iter().enumerate() {
            let p = p.map_or(String::new(), |p| p.to_string());
            for (c, d) in self.columns.iter().enumerate() {
                if let Some(cell) = self.cells.get(&(r, c)) {
                    w.write_record([
                        attack.clone(),
                        p.clone(),
                        d.clone(),
                        cell.mean.to_string(),
                        cell.std.to_string(),
                        cell.seeds.len().to_string(),
                        cell.missing_seeds.to_string(),
                    ])?;
                }
            }
            if let Some(g) = self.gain(r) {
                w.write_record([attack.clone(), p, "gain_percent".into(), g.to_string(), String::new(), String::new(), String::new()])?;
            }
        }
        let bytes = w.into_inner().map_err(|e| Error::invalid(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| Error::invalid(e.to_string()))
    }
}

/// Aggregates completed runs into a test MRR grid.
pub fn report_table(reports: &[PipelineReport]) -> Result<ReportTable> {
    if reports.is_empty() {
        return Err(Error::invalid("no completed runs"));
    }
    let mut rows: Vec<(String, Option<f64>)> = Vec::new();
    let mut columns: Vec<String> = Vec::new();
    let mut chosen: BTreeMap<(usize, usize), &PipelineReport> = BTreeMap::new();
    let mut flags = Vec::new();
    for rep in reports {
        let key = (rep.attack.clone(), rep.p);
        let r = rows.iter().position(|x| *x == key).unwrap_or_else(|| {
            rows.push(key.clone());
            rows.len() - 1
        });
        let c = columns.iter().position(|x| *x == rep.defense).unwrap_or_else(|| {
            columns.push(rep.defense.clone());
            columns.len() - 1
        });
        match chosen.get(&(r, c)) {
            None => {
                chosen.insert((r, c), rep);
            }
            Some(first) if first.signature != rep.signature => flags.push(format!(
                "{} / {}: run with config {} differs from {}, not merged",
                row_label(&key),
                rep.defense,
                &rep.config_sha256[..12],
                &first.config_sha256[..12]
            )),
            Some(_) => flags.push(format!(
                "{} / {}: duplicate run {} ignored",
                row_label(&key),
                rep.defense,
                &rep.config_sha256[..12]
            )),
        }
    }
    let widest = chosen
        .values()
        .map(|rep| rep.runs.iter().map(|s| s.seed).collect::<BTreeSet<_>>().len())
        .max()
        .unwrap_or(0);
    let cells = chosen
        .into_iter()
        .map(|(pos, rep)| {
            let mrr: Vec<f64> = rep.runs.iter().map(|s| s.test.mrr).collect();
            let (mean, std) = mean_std(&mrr);
            let seeds: Vec<u64> = rep.runs.iter().map(|s| s.seed).collect();
            let missing_seeds = seeds.len() < widest;
            (
                pos,
                Cell {
                    mean,
                    std,
                    seeds,
                    missing_seeds,
                },
            )
        })
        .collect();
    Ok(ReportTable {
        rows,
        columns,
        cells,
        flags,
    })
}

/// Loads `report.json` from each run directory.
pub fn load_reports<P: AsRef<Path>>(dirs: &[P]) -> Result<Vec<PipelineReport>> {
    dirs.iter()
        .map(|d| PipelineReport::load(&d.as_ref().join(REPORT_FILE)))
        .collect()
}
