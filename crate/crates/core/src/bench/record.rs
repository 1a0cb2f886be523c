//! Tab-separated result rows, one per method and run.

use std::fmt::Write as _;

use super::experiment::ComparisonRecord;
use crate::error::{CcpdError, Result};

pub const HEADER: &str = "spec_hash\tseed\tmethod\trms\titerations\tmillis";

#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub spec_hash: String,
    pub seed: u64,
    pub method: String,
    pub rms: f64,
    pub iterations: usize,
    pub millis: f64,
}

impl ResultRow {
    pub fn to_line(&self) -> String {
        format!(
            "{}\t{}\t{}\t{:e}\t{}\t{:.3}",
            self.spec_hash, self.seed, self.method, self.rms, self.iterations, self.millis
        )
    }
}

impl ComparisonRecord {
    /// The CCPD row followed by the CPD row.
    pub fn rows(&self) -> [ResultRow; 2] {
        let row = |method: &str, o: &super::experiment::MethodOutcome| ResultRow {
            spec_hash: self.spec_hash.clone(),
            seed: self.seed,
            method: method.to_string(),
            rms: o.rms,
            iterations: o.iterations,
            millis: o.millis,
        };
        [row("ccpd", &self.ccpd), row("cpd", &self.cpd)]
    }
}

/// Parses rows, skipping the header, blank lines and `#` comments.
pub fn parse_rows(text: &str) -> Result<Vec<ResultRow>> {
    let mut rows = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() || line.starts_with('#') || line == HEADER {
            continue;
        }
        let bad = |what: &str| CcpdError::InvalidArgument(format!("record line {}: {what}", lineno + 1));
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != 6 {
            return Err(bad(&format!("expected 6 fields, found {}", f.len())));
        }
        rows.push(ResultRow {
            spec_hash: f[0].to_string(),
            seed: f[1].parse().map_err(|_| bad("bad seed"))?,
            method: f[2].to_string(),
            rms: f[3].parse().map_err(|_| bad("bad rms"))?,
            iterations: f[4].parse().map_err(|_| bad("bad iteration count"))?,
            millis: f[5].parse().map_err(|_| bad("bad milliseconds"))?,
        });
    }
    Ok(rows)
}

/// Means over all runs of one method under one condition.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionSummary {
    pub spec_hash: String,
    pub method: String,
    pub runs: usize,
    pub mean_rms: f64,
    pub mean_iterations: f64,
    pub mean_millis: f64,
}

/// Groups by `(spec_hash, method)` in order of first appearance.
pub fn summarize(rows: &[ResultRow]) -> Vec<ConditionSummary> {
    let mut out: Vec<ConditionSummary> = Vec::new();
    for r in rows {
        let idx = match out
            .iter()
            .position(|s| s.spec_hash == r.spec_hash && s.method == r.method)
        {
            Some(i) => i,
            None => {
                out.push(ConditionSummary {
                    spec_hash: r.spec_hash.clone(),
                    method: r.method.clone(),
                    runs: 0,
                    mean_rms: 0.0,
                    mean_iterations: 0.0,
                    mean_millis: 0.0,
                });
                out.len() - 1
            }
        };
        let s = &mut out[idx];
        s.runs += 1;
        s.mean_rms += r.rms;
        s.mean_iterations += r.iterations as f64;
        s.mean_millis += r.millis;
    }
    for s in &mut out {
        let n = s.runs as f64;
        s.mean_rms /= n;
        s.mean_iterations /= n;
        s.mean_millis /= n;
    }
    out
}

pub fn format_summary(summary: &[ConditionSummary]) -> String {
    let mut s = String::from("spec_hash\tmethod\truns\tmean_rms\tmean_iterations\tmean_millis\n");
    for c in summary {
        let _ = writeln!(
            s,
            "{}\t{}\t{}\t{:.4e}\t{:.1}\t{:.1}",
            c.spec_hash, c.method, c.runs, c.mean_rms, c.mean_iterations, c.mean_millis
        );
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bench::experiment::MethodOutcome;

    fn record(seed: u64, rms: f64) -> ComparisonRecord {
        ComparisonRecord {
            spec_hash: "00ff00ff00ff00ff".into(),
            seed,
            ccpd: MethodOutcome {
                rms,
                iterations: 10,
                millis: 2.0,
            },
            cpd: MethodOutcome {
                rms: 2.0 * rms,
                iterations: 20,
                millis: 4.0,
            },
        }
    }

    #[test]
    fn rows_round_trip() {
        let rows: Vec<ResultRow> = [record(1, 0.125), record(2, 3.5e-7)]
            .iter()
            .flat_map(|r| r.rows())
            .collect();
        let mut text = format!("{HEADER}\n");
        for r in &rows {
            text.push_str(&r.to_line());
            text.push('\n');
        }
        assert_eq!(parse_rows(&text).unwrap(), rows);
        assert!(parse_rows("a\tb\n").is_err());
    }

    #[test]
    fn summary_averages_per_method() {
        let rows: Vec<ResultRow> = [record(1, 0.1), record(2, 0.3)]
            .iter()
            .flat_map(|r| r.rows())
            .collect();
        let s = summarize(&rows);
        assert_eq!(s.len(), 2);
        assert_eq!(s[0].method, "ccpd");
        assert_eq!(s[0].runs, 2);
        assert!((s[0].mean_rms - 0.2).abs() < 1e-15);
        assert!((s[1].mean_rms - 0.4).abs() < 1e-15);
        assert_eq!(s[1].mean_iterations, 20.0);
        assert!(format_summary(&s).lines().count() == 3);
    }
}
