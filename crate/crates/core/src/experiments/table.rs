use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::model::{Regime, TuningMode};

pub const CSV_HEADER: &str = "regime,target,size,n_p,mean_eer,std_eer,n_seeds,params,ratio";

#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub regime: Regime,
    pub target: String,
    pub size: usize,
    /// Prompt length; 0 for no-prompt regimes.
    pub n_p: usize,
    pub mean_eer: f64,
    pub std_eer: f64,
    /// Completed seeds; lower than configured when runs failed.
    pub n_seeds: usize,
    pub params: u64,
    pub ratio: f64,
}

impl ResultRow {
    fn key(&self) -> (TuningMode, bool, &str, usize, usize) {
        let (m, p) = self.regime.sort_key();
        (m, p, &self.target, self.size, self.n_p)
    }

    fn csv_line(&self) -> String {
        format!(
            "{},{},{},{},{:.6},{:.6},{},{},{:.8}",
            self.regime,
            self.target,
            self.size,
            self.n_p,
            self.mean_eer,
            self.std_eer,
            self.n_seeds,
            self.params,
            self.ratio
        )
    }
}

/// Rows kept in (regime, target, size, n_p) order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ResultTable {
    rows: Vec<ResultRow>,
}

impl ResultTable {
    pub fn new(mut rows: Vec<ResultRow>) -> Self {
        rows.sort_by(|a, b| a.key().cmp(&b.key()));
        Self { rows }
    }

    pub fn rows(&self) -> &[ResultRow] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn find(
        &self,
        regime: Regime,
        target: &str,
        size: usize,
        n_p: usize,
    ) -> Option<&ResultRow> {
        self.rows
            .iter()
            .find(|r| r.regime == regime && r.target == target && r.size == size && r.n_p == n_p)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            out.push_str(&r.csv_line());
            out.push('\n');
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        match lines.next() {
            Some(h) if h.trim() == CSV_HEADER => {}
            other => {
                return Err(Error::InvalidArgument(format!(
                    "result table must start with `{CSV_HEADER}`, got {other:?}"
                )))
            }
        }
        let mut rows = Vec::new();
        for (i, line) in lines.enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let f: Vec<&str> = line.trim().split(',').collect();
            if f.len() != 9 {
                return Err(Error::InvalidArgument(format!(
                    "row {}: expected 9 fields, got {}",
                    i + 1,
                    f.len()
                )));
            }
            let bad = |field: &str| Error::InvalidArgument(format!("row {}: bad {field}", i + 1));
            rows.push(ResultRow {
                regime: f[0].parse()?,
                target: f[1].to_owned(),
                size: f[2].parse().map_err(|_| bad("size"))?,
                n_p: f[3].parse().map_err(|_| bad("n_p"))?,
                mean_eer: f[4].parse().map_err(|_| bad("mean_eer"))?,
                std_eer: f[5].parse().map_err(|_| bad("std_eer"))?,
                n_seeds: f[6].parse().map_err(|_| bad("n_seeds"))?,
                params: f[7].parse().map_err(|_| bad("params"))?,
                ratio: f[8].parse().map_err(|_| bad("ratio"))?,
            });
        }
        Ok(Self::new(rows))
    }

    /// Indices of rows that win their with/without-prompt comparison.
    fn bold_rows(&self) -> Vec<bool> {
        // Compare at CSV precision so a parsed table renders identically.
        let q = |x: f64| format!("{x:.6}").parse::<f64>().unwrap_or(f64::NAN);
        // (with prompt, without prompt) row indices per (mode, target, size).
        type Group = (Vec<usize>, Vec<usize>);
        let mut groups: BTreeMap<(TuningMode, &str, usize), Group> = BTreeMap::new();
        for (i, r) in self.rows.iter().enumerate() {
            let g = groups
                .entry((r.regime.mode, r.target.as_str(), r.size))
                .or_default();
            if r.regime.with_prompt {
                g.0.push(i);
            } else {
                g.1.push(i);
            }
        }
        let mut bold = vec![false; self.rows.len()];
        for (with, without) in groups.values() {
            let [base] = without.as_slice() else { continue };
            let base_eer = q(self.rows[*base].mean_eer);
            if with.is_empty() {
                continue;
            }
            let mut base_wins = true;
            for &i in with {
                let e = q(self.rows[i].mean_eer);
                if e < base_eer {
                    bold[i] = true;
                }
                if !(base_eer < e) {
                    base_wins = false;
                }
            }
            bold[*base] = base_wins;
        }
        bold
    }

    /// Markdown table with EER and ratio in percent. Within each mode,
    /// target and size, the better of the prompted and unprompted entries is
    /// bold; exact ties bold neither.
    pub fn to_markdown(&self) -> String {
        let bold = self.bold_rows();
        let mut out = String::from(
            "| Regime | Target | Size | N_P | EER (%) | Seeds | Params | Ratio (%) |\n",
        );
        out.push_str("|---|---|---:|---:|---:|---:|---:|---:|\n");
        for (r, b) in self.rows.iter().zip(bold) {
            let eer = format!("{:.2} ± {:.2}", 100.0 * r.mean_eer, 100.0 * r.std_eer);
            let eer = if b { format!("**{eer}**") } else { eer };
            let _ = writeln!(
                out,
                "| {} | {} | {} | {} | {} | {} | {} | {:.4} |",
                r.regime,
                r.target,
                r.size,
                r.n_p,
                eer,
                r.n_seeds,
                r.params,
                100.0 * r.ratio
            );
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Markdown,
}

impl FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(Self::Csv),
            "markdown" | "md" => Ok(Self::Markdown),
            other => Err(Error::UnknownFormat(other.to_owned())),
        }
    }
}

pub fn report(table: &ResultTable, format: ReportFormat) -> Result<String> {
    if table.is_empty() {
        return Err(Error::InvalidArgument(
            "cannot report an empty table".into(),
        ));
    }
    Ok(match format {
        ReportFormat::Csv => table.to_csv(),
        ReportFormat::Markdown => table.to_markdown(),
    })
}
