//! Report rendering: study tables as JSON, CSV, or markdown with
//! deterministic byte output.

use std::fmt::Write as _;
use std::str::FromStr;

use crate::calibration::CalibrationReport;
use crate::error::{Error, Result};
use crate::verify::suite::SuiteReport;

use super::chromosome::ChromosomeStudy;
use super::maxsd::MaxsdStudy;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    Csv,
    Markdown,
}

impl FromStr for ReportFormat {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "json" => Ok(Self::Json),
            "csv" => Ok(Self::Csv),
            "markdown" | "md" => Ok(Self::Markdown),
            other => Err(Error::Validation(format!(
                "unknown report format '{other}' (expected json, csv, or markdown)"
            ))),
        }
    }
}

/// Anything renderable as a study report.
pub trait Render {
    fn to_json(&self) -> String;
    fn to_csv(&self) -> String;
    fn to_markdown(&self) -> String;

    fn render(&self, format: ReportFormat) -> String {
        match format {
            ReportFormat::Json => self.to_json(),
            ReportFormat::Csv => self.to_csv(),
            ReportFormat::Markdown => self.to_markdown(),
        }
    }
}

/// Writes a report to disk in the requested format.
pub fn write_report<R: Render>(
    report: &R,
    path: &std::path::Path,
    format: ReportFormat,
) -> Result<()> {
    std::fs::write(path, report.render(format))?;
    Ok(())
}

fn schedule_label(sizes: &[usize]) -> String {
    // contiguous ranges print compactly
    if sizes.len() > 2 && sizes.windows(2).all(|w| w[1] == w[0] + 1) {
        return format!("{{{}, ..., {}}}", sizes[0], sizes[sizes.len() - 1]);
    }
    let inner: Vec<String> = sizes.iter().map(|n| n.to_string()).collect();
    format!("{{{}}}", inner.join(", "))
}

impl Render for ChromosomeStudy {
    fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).unwrap();
        s.push('\n');
        s
    }

    fn to_csv(&self) -> String {
        let mut out = String::from("schedule,p_threshold,avg_sample_size\n");
        for row in &self.rows {
            let sched: Vec<String> = row.schedule.iter().map(|n| n.to_string()).collect();
            writeln!(
                out,
                "\"{}\",{:.6},{:.3}",
                sched.join(" "),
                row.p_threshold,
                row.avg_sample_size
            )
            .unwrap();
        }
        out
    }

    fn to_markdown(&self) -> String {
        let mut out = String::new();
        writeln!(
            out,
            "Sequential Wilcoxon signed-rank study ({} subjects, alpha {}, {} permutations)\n",
            self.subjects, self.alpha, self.permutations
        )
        .unwrap();
        writeln!(out, "| N | B | Average sample size |").unwrap();
        writeln!(out, "|---|---|---------------------|").unwrap();
        for row in &self.rows {
            writeln!(
                out,
                "| {} | {:.4} | {:.1} |",
                schedule_label(&row.schedule),
                row.p_threshold,
                row.avg_sample_size
            )
            .unwrap();
        }
        for w in &self.warnings {
            writeln!(out, "\nwarning: {w}").unwrap();
        }
        out
    }
}

impl Render for MaxsdStudy {
    fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).unwrap();
        s.push('\n');
        s
    }

    fn to_csv(&self) -> String {
        let mut out = String::from("level,mu,seq_avg_ss,seq_p_maxsd,fixed_avg_ss,fixed_p_maxsd\n");
        for row in &self.rows {
            writeln!(
                out,
                "{},{},{:.3},{:.6},{:.3},{:.6}",
                row.level,
                row.mu,
                row.seq_avg_ss,
                row.seq_p_maxsd,
                row.fixed_avg_ss,
                row.fixed_p_maxsd
            )
            .unwrap();
        }
        writeln!(
            out,
            "weighted_average,,{:.4},,{:.4},",
            self.seq_weighted_maxsd, self.fixed_weighted_maxsd
        )
        .unwrap();
        out
    }

    fn to_markdown(&self) -> String {
        let mut out = String::new();
        writeln!(
            out,
            "Maximum-safe-dose operating characteristics (k = {}, lambda = {}, alpha = {}, {} replicates)\n",
            self.k, self.lambda, self.alpha, self.reps
        )
        .unwrap();
        writeln!(
            out,
            "| Level | mu | Seq. Avg. SS | Seq. P(MAXSD = j) | Fixed Avg. SS | Fixed P(MAXSD = j) |"
        )
        .unwrap();
        writeln!(out, "|-------|----|--------------|-------------------|---------------|--------------------|").unwrap();
        for row in &self.rows {
            writeln!(
                out,
                "| {} | {} | {:.1} | {:.2}% | {:.0} | {:.2}% |",
                row.level,
                row.mu,
                row.seq_avg_ss,
                100.0 * row.seq_p_maxsd,
                row.fixed_avg_ss,
                100.0 * row.fixed_p_maxsd
            )
            .unwrap();
        }
        writeln!(
            out,
            "| Weighted average MAXSD | | {:.1} | | {:.1} | |",
            self.seq_weighted_maxsd, self.fixed_weighted_maxsd
        )
        .unwrap();
        out
    }
}

impl Render for CalibrationReport {
    fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).unwrap();
        s.push('\n');
        s
    }

    fn to_csv(&self) -> String {
        let mut out = String::from("hypothesis,rung,upper,lower\n");
        for (h, ladder) in self.upper.iter().enumerate() {
            for (s, b) in ladder.iter().enumerate() {
                let lower = self
                    .lower
                    .as_ref()
                    .map(|l| format!("{:.6}", l[h][s]))
                    .unwrap_or_default();
                writeln!(out, "{},{},{:.6},{}", h, s + 1, b, lower).unwrap();
            }
        }
        out
    }

    fn to_markdown(&self) -> String {
        let mut out = String::new();
        writeln!(
            out,
            "Calibration at alpha = {} over N = {:?} ({} replicates, seed {})\n",
            self.alpha, self.schedule, self.reps, self.seed
        )
        .unwrap();
        writeln!(out, "| Hypothesis | Upper rungs | Lower rungs |").unwrap();
        writeln!(out, "|------------|-------------|-------------|").unwrap();
        for (h, ladder) in self.upper.iter().enumerate() {
            let upper: Vec<String> = ladder.iter().map(|b| format!("{b:.4}")).collect();
            let lower = self
                .lower
                .as_ref()
                .map(|l| {
                    l[h].iter()
                        .map(|a| format!("{a:.4}"))
                        .collect::<Vec<_>>()
                        .join(", ")
                })
                .unwrap_or_else(|| "-".into());
            writeln!(out, "| {} | {} | {} |", h + 1, upper.join(", "), lower).unwrap();
        }
        writeln!(out, "\nValidation (fresh seed):").unwrap();
        for r in &self.validation {
            writeln!(
                out,
                "- level {:.4}: threshold {:.4}, crossing estimate {:.4} ({})",
                r.level,
                r.threshold,
                r.estimate,
                if r.pass { "ok" } else { "FAILED" }
            )
            .unwrap();
        }
        out
    }
}

impl Render for SuiteReport {
    fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).unwrap();
        s.push('\n');
        s
    }

    fn to_csv(&self) -> String {
        let mut out = String::from("check,estimate,se,bound,pass\n");
        for c in &self.checks {
            writeln!(
                out,
                "\"{}\",{:.6},{:.6},{:.4},{}",
                c.name, c.report.estimate, c.report.se, c.report.bound, c.report.pass
            )
            .unwrap();
        }
        writeln!(
            out,
            "\"monotonicity violations\",{},,,{}",
            self.monotonicity_violations,
            self.monotonicity_violations == 0
        )
        .unwrap();
        out
    }

    fn to_markdown(&self) -> String {
        let mut out = String::new();
        writeln!(
            out,
            "Verification suite: alpha = {}, beta = {}, {} replicates, seed {}\n",
            self.alpha, self.beta, self.reps, self.seed
        )
        .unwrap();
        writeln!(out, "| Check | Estimate | Bound + 3se | Pass |").unwrap();
        writeln!(out, "|-------|----------|-------------|------|").unwrap();
        for c in &self.checks {
            writeln!(
                out,
                "| {} | {:.4} | {:.4} | {} |",
                c.name,
                c.report.estimate,
                c.report.bound + 3.0 * c.report.se,
                if c.report.pass { "yes" } else { "NO" }
            )
            .unwrap();
        }
        writeln!(
            out,
            "\nMonotonicity violations: {}. Overall: {}.",
            self.monotonicity_violations,
            if self.pass { "PASS" } else { "FAIL" }
        )
        .unwrap();
        out
    }
}
