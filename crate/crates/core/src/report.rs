//! Paper-style result tables, written as aligned text with a CSV twin.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::pipeline::Method;
use crate::simulation::{MeanSd, MonteCarloSummary};

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Text(String),
    Int(u64),
    Num(f64),
    /// Rendered as `mean (sd)`; the CSV twin gets two fields.
    MeanSd(MeanSd),
    /// Rendered as `--`, an empty CSV field.
    Missing,
}

impl Cell {
    fn text(&self, scale: f64) -> String {
        match self {
            Cell::Text(s) => s.clone(),
            Cell::Int(v) => v.to_string(),
            Cell::Num(v) => format!("{:.3}", v * scale),
            Cell::MeanSd(m) => format!("{:.3} ({:.3})", m.mean * scale, m.sd * scale),
            Cell::Missing => "--".into(),
        }
    }
}

/// A titled grid. `scale` multiplies every real-valued cell in the text
/// rendering only (e.g. 100 for a "×10⁻²" table); the CSV keeps raw values.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub title: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
    pub scale: f64,
}

impl Table {
    pub fn new(title: impl Into<String>, columns: &[&str]) -> Self {
        Self {
            title: title.into(),
            columns: columns.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
            scale: 1.0,
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn to_text(&self) -> String {
        let body: Vec<Vec<String>> = self.rows.iter().map(|r| r.iter().map(|c| c.text(self.scale)).collect()).collect();
        let widths: Vec<usize> = (0..self.columns.len())
            .map(|j| body.iter().map(|r| r[j].chars().count()).chain([self.columns[j].chars().count()]).max().unwrap_or(0))
            .collect();
        let line = |cells: &[String]| {
            let mut s = String::new();
            for (j, c) in cells.iter().enumerate() {
                if j > 0 {
                    s.push_str("  ");
                }
                let pad = widths[j] - c.chars().count();
                if j == 0 {
                    s.push_str(c);
                    s.extend(std::iter::repeat(' ').take(pad));
                } else {
                    s.extend(std::iter::repeat(' ').take(pad));
                    s.push_str(c);
                }
            }
            s.trim_end().to_string()
        };
        let mut out = String::new();
        let _ = writeln!(out, "{}", self.title);
        let header = line(&self.columns);
        let _ = writeln!(out, "{header}");
        let _ = writeln!(out, "{}", "-".repeat(header.chars().count()));
        for r in &body {
            let _ = writeln!(out, "{}", line(r));
        }
        out
    }

    pub fn to_csv(&self) -> Result<String> {
        let paired: Vec<bool> = (0..self.columns.len())
            .map(|j| self.rows.iter().any(|r| matches!(r[j], Cell::MeanSd(_))))
            .collect();
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = Vec::new();
        for (name, &pair) in self.columns.iter().zip(&paired) {
            let name = csv_name(name);
            if pair {
                header.push(format!("{name}_sd"));
                header.insert(header.len() - 1, name);
            } else {
                header.push(name);
            }
        }
        w.write_record(&header)?;
        for r in &self.rows {
            let mut rec = Vec::new();
            for (c, &pair) in r.iter().zip(&paired) {
                match c {
                    Cell::Text(s) => rec.push(s.clone()),
                    Cell::Int(v) => rec.push(v.to_string()),
                    Cell::Num(v) => rec.push(v.to_string()),
                    Cell::MeanSd(m) => {
                        rec.push(m.mean.to_string());
                        rec.push(m.sd.to_string());
                        continue;
                    }
                    Cell::Missing => rec.push(String::new()),
                }
                if pair {
                    rec.push(String::new());
                }
            }
            w.write_record(&rec)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::InvalidInput(format!("csv buffer: {e}")))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }
}

fn csv_name(s: &str) -> String {
    s.chars()
        .map(|c| if c.is_ascii_alphanumeric() { c.to_ascii_lowercase() } else { '_' })
        .collect::<String>()
        .trim_matches('_')
        .to_string()
}

/// Writes `<stem>.txt` and `<stem>.csv` under `dir`, returning both paths.
pub fn emit_report(table: &Table, dir: &Path, stem: &str) -> Result<(PathBuf, PathBuf)> {
    if table.rows.is_empty() {
        return Err(Error::InvalidInput(format!("report '{}' has no rows", table.title)));
    }
    std::fs::create_dir_all(dir).map_err(|e| Error::io(format!("creating {}", dir.display()), e))?;
    let txt = dir.join(format!("{stem}.txt"));
    let csv = dir.join(format!("{stem}.csv"));
    std::fs::write(&txt, table.to_text()).map_err(|e| Error::io(format!("writing {}", txt.display()), e))?;
    std::fs::write(&csv, table.to_csv()?).map_err(|e| Error::io(format!("writing {}", csv.display()), e))?;
    Ok((txt, csv))
}

/// One row per (method, τ), methods in table order then ascending τ.
pub fn simulation_table(summaries: &[MonteCarloSummary]) -> Table {
    let first = &summaries[0].spec;
    let with_mee = summaries.iter().any(|s| s.rows.iter().any(|r| r.mee_out.is_some()));
    let mut cols = vec!["method", "tau", "C", "IC", "CF", "MPE in-sample", "MPE out-of-sample"];
    if with_mee {
        cols.extend(["MEE in-sample", "MEE out-of-sample"]);
    }
    cols.extend(["used", "failed"]);
    let error = if first.example == crate::simulation::Example::Ex3 {
        String::new()
    } else {
        format!(", error {}", first.error)
    };
    let mut table = Table::new(
        format!(
            "{} n_tr = {}, n_te = {}, p = {}{}, {} replications, seed {}",
            first.example, first.n_tr, first.n_te, summaries[0].p, error, first.replications, first.seed
        ),
        &cols,
    );
    let mut rows: Vec<_> = summaries.iter().flat_map(|s| s.rows.iter()).collect();
    rows.sort_by(|a, b| a.method.cmp(&b.method).then(a.tau.total_cmp(&b.tau)));
    for r in rows {
        let sel = |m: MeanSd| if r.method.is_penalized() { Cell::Num(m.mean) } else { Cell::Missing };
        let mut row = vec![
            Cell::Text(r.method.to_string()),
            Cell::Text(format!("{}", r.tau)),
            sel(r.c),
            sel(r.ic),
            sel(r.cf),
            Cell::MeanSd(r.mpe_in),
            Cell::MeanSd(r.mpe_out),
        ];
        if with_mee {
            row.push(r.mee_in.map_or(Cell::Missing, Cell::MeanSd));
            row.push(r.mee_out.map_or(Cell::Missing, Cell::MeanSd));
        }
        row.push(Cell::Int(r.replications_used as u64));
        row.push(Cell::Int(r.failures as u64));
        table.push(row);
    }
    table
}

/// Canonical order used by every report.
pub fn sort_methods(methods: &mut Vec<Method>) {
    methods.sort();
    methods.dedup();
}
