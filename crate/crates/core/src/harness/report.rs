use std::fmt::Write;

use crate::model::MetricsReport;

pub const CSV_HEADER: &str =
    "stratum,tp,fp,tn,fn,abstained,invalid,provider_failures,precision,recall,f1,accuracy,response_rate";

fn csv_row(name: &str, r: &MetricsReport) -> String {
    format!(
        "{name},{},{},{},{},{},{},{},{:.6},{:.6},{:.6},{:.6},{:.6}",
        r.tp, r.fp, r.tn, r.fn_, r.abstained, r.invalid, r.provider_failures, r.precision, r.recall,
        r.f1, r.accuracy, r.response_rate
    )
}

/// One row for the overall report, then one per stratum.
pub fn render_csv(report: &MetricsReport) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    out.push_str(&csv_row("overall", report));
    out.push('\n');
    for (name, r) in &report.strata {
        out.push_str(&csv_row(name, r));
        out.push('\n');
    }
    out
}

pub fn render_text(report: &MetricsReport) -> String {
    let width = report.strata.keys().map(|k| k.len()).max().unwrap_or(0).max(7);
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<width$}  {:>6} {:>6} {:>6} {:>6} {:>6}  {:>6} {:>6} {:>6} {:>6} {:>6}",
        "stratum", "tp", "fp", "tn", "fn", "abst", "P", "R", "F1", "Acc", "Resp"
    );
    let mut line = |name: &str, r: &MetricsReport| {
        let _ = writeln!(
            out,
            "{name:<width$}  {:>6} {:>6} {:>6} {:>6} {:>6}  {:>6.3} {:>6.3} {:>6.3} {:>6.3} {:>6.3}",
            r.tp, r.fp, r.tn, r.fn_, r.abstained, r.precision, r.recall, r.f1, r.accuracy, r.response_rate
        );
    };
    line("overall", report);
    for (name, r) in &report.strata {
        line(name, r);
    }
    if report.invalid > 0 {
        let _ = writeln!(
            out,
            "invalid replies: {} (provider failures: {})",
            report.invalid, report.provider_failures
        );
    }
    if !report.degenerate.is_empty() {
        let _ = writeln!(out, "degenerate (0/0 -> 0): {}", report.degenerate.join(", "));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_has_row_per_stratum() {
        let mut r = MetricsReport { tp: 1, ..Default::default() };
        r.strata.insert("tag:a".into(), MetricsReport::default());
        let csv = render_csv(&r);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 3);
        assert!(lines[1].starts_with("overall,1,0"));
        assert!(lines[2].starts_with("tag:a,"));
        assert!(render_text(&r).contains("tag:a"));
    }
}
