//! Long-format result tables (CSV and JSON).

use std::fmt::Write as _;
use std::path::Path;

use fdkg_core::randomness::{KeyResult, Outcome, SuiteSummary};
use serde::{Deserialize, Serialize};

use crate::error::{FdkgError, Result};

pub const REPORT_COLUMNS: [&str; 8] = ["algorithm", "env", "snr_db", "nmse", "ker", "kgr", "wall_time_s", "seed"];

/// One `(algorithm, target environment, SNR)` cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub algorithm: String,
    pub env: u32,
    pub snr_db: f64,
    pub nmse: f64,
    pub ker: f64,
    pub kgr: f64,
    pub wall_time_s: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub rows: Vec<ReportRow>,
    pub randomness: Vec<SuiteSummary>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Json,
}

/// Rounds to 9 significant digits, the precision every report is stored at.
pub fn round_sig(x: f64) -> f64 {
    if !x.is_finite() || x == 0.0 {
        return x;
    }
    format!("{x:.8e}").parse().expect("formatted float parses")
}

/// Shortest text that reads back as `round_sig(x)`.
pub fn fmt_sig(x: f64) -> String {
    format!("{}", round_sig(x))
}

impl ReportRow {
    /// Applies the report precision to every float field.
    pub fn rounded(mut self) -> Self {
        for v in [&mut self.snr_db, &mut self.nmse, &mut self.ker, &mut self.kgr, &mut self.wall_time_s] {
            *v = round_sig(*v);
        }
        self
    }
}

impl ExperimentReport {
    pub fn to_csv(&self) -> String {
        let mut s = REPORT_COLUMNS.join(",");
        s.push('\n');
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{}",
                r.algorithm,
                r.env,
                fmt_sig(r.snr_db),
                fmt_sig(r.nmse),
                fmt_sig(r.ker),
                fmt_sig(r.kgr),
                fmt_sig(r.wall_time_s),
                r.seed
            );
        }
        s
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        if lines.next() != Some(REPORT_COLUMNS.join(",").as_str()) {
            return Err(FdkgError::format("unexpected report header"));
        }
        let mut rows = Vec::new();
        for (i, line) in lines.enumerate() {
            let f: Vec<&str> = line.split(',').collect();
            let bad = || FdkgError::format(format!("report line {}", i + 2));
            if f.len() != REPORT_COLUMNS.len() {
                return Err(bad());
            }
            let num = |k: usize| f[k].parse::<f64>().map_err(|_| bad());
            rows.push(ReportRow {
                algorithm: f[0].to_string(),
                env: f[1].parse().map_err(|_| bad())?,
                snr_db: num(2)?,
                nmse: num(3)?,
                ker: num(4)?,
                kgr: num(5)?,
                wall_time_s: num(6)?,
                seed: f[7].parse().map_err(|_| bad())?,
            });
        }
        Ok(Self { rows, randomness: Vec::new() })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| FdkgError::format(e.to_string()))
    }

    pub fn emit(&self, format: ReportFormat, path: &Path) -> Result<()> {
        let text = match format {
            ReportFormat::Csv => self.to_csv(),
            ReportFormat::Json => self.to_json(),
        };
        std::fs::write(path, text).map_err(|e| FdkgError::io(path, e))
    }

    /// Rows for one algorithm.
    pub fn rows_for<'a>(&'a self, algorithm: &'a str) -> impl Iterator<Item = &'a ReportRow> + 'a {
        self.rows.iter().filter(move |r| r.algorithm == algorithm)
    }
}

/// Per-stream randomness results: `test,params,p_value(s),pass`.
pub fn randomness_details_csv(details: &[KeyResult]) -> String {
    let mut s = String::from("test,params,p_values,pass\n");
    for d in details {
        let r = &d.result;
        let params = match d.key_index {
            Some(i) => format!("key={i};{}", r.params),
            None => format!("concatenated;{}", r.params),
        };
        let ps: Vec<String> = r.p_values.iter().map(|&p| fmt_sig(p)).collect();
        let pass = match r.outcome {
            Outcome::Pass => "pass",
            Outcome::Fail => "fail",
            Outcome::NotApplicable => "not_applicable",
        };
        let _ = writeln!(s, "{},{},{},{}", r.test.name(), params.trim_end_matches(';'), ps.join(";"), pass);
    }
    s
}

pub fn randomness_summary_csv(summary: &[SuiteSummary]) -> String {
    let mut s = String::from("test,mode,n_streams,n_pass,n_not_applicable,pass_ratio\n");
    for r in summary {
        let mode = match r.mode {
            fdkg_core::randomness::Mode::PerKey => "per_key",
            fdkg_core::randomness::Mode::Concatenated => "concatenated",
        };
        let _ = writeln!(
            s,
            "{},{mode},{},{},{},{}",
            r.test.name(),
            r.n_streams,
            r.n_pass,
            r.n_not_applicable,
            fmt_sig(r.pass_ratio)
        );
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(alg: &str, nmse: f64) -> ReportRow {
        ReportRow {
            algorithm: alg.into(),
            env: 2,
            snr_db: 20.0,
            nmse,
            ker: 0.3125,
            kgr: 1.171875,
            wall_time_s: 0.0,
            seed: 5,
        }
        .rounded()
    }

    #[test]
    fn empty_report_is_header_only() {
        assert_eq!(ExperimentReport::default().to_csv(), "algorithm,env,snr_db,nmse,ker,kgr,wall_time_s,seed\n");
    }

    #[test]
    fn significant_digits() {
        assert_eq!(fmt_sig(0.1234567891234), "0.123456789");
        assert_eq!(fmt_sig(123456789012.0), "123456789000");
        assert_eq!(fmt_sig(0.0), "0");
        assert_eq!(fmt_sig(2.5e-7), "0.00000025");
    }

    #[test]
    fn csv_and_json_roundtrip() {
        let rep = ExperimentReport { rows: vec![row("meta", 0.01234567891), row("dtl", 1.0 / 3.0)], randomness: vec![] };
        assert_eq!(ExperimentReport::from_csv(&rep.to_csv()).unwrap(), rep);
        assert_eq!(ExperimentReport::from_json(&rep.to_json()).unwrap(), rep);
        let header = rep.to_csv().lines().next().unwrap().to_string();
        let mut cols: Vec<&str> = header.split(',').collect();
        cols.sort_unstable();
        assert_eq!(cols, ["algorithm", "env", "ker", "kgr", "nmse", "seed", "snr_db", "wall_time_s"]);
    }
}
