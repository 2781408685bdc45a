//! Difficulty by category histogram of a finished benchmark.

use std::collections::BTreeMap;
use std::fmt::Write;

use serde::Serialize;

use crate::model::{Difficulty, HallucinationCategory, HallucinationRecord};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CategoryRow {
    pub category: HallucinationCategory,
    pub easy: u64,
    pub medium: u64,
    pub hard: u64,
    pub total: u64,
    /// Share of the category's records at each level, in percent.
    pub easy_pct: f64,
    pub medium_pct: f64,
    pub hard_pct: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StatsTable {
    pub rows: Vec<CategoryRow>,
    pub totals: BTreeMap<Difficulty, u64>,
    pub total: u64,
}

fn pct(n: u64, d: u64) -> f64 {
    if d == 0 { 0.0 } else { 100.0 * n as f64 / d as f64 }
}

/// Counts records into the fixed four-category by three-level grid.
pub fn stats_table(records: &[HallucinationRecord]) -> StatsTable {
    let mut counts: BTreeMap<(HallucinationCategory, Difficulty), u64> = BTreeMap::new();
    for r in records {
        *counts.entry((r.category, r.difficulty)).or_default() += 1;
    }
    let get = |c, d| counts.get(&(c, d)).copied().unwrap_or(0);
    let rows: Vec<CategoryRow> = HallucinationCategory::ALL
        .into_iter()
        .map(|c| {
            let (easy, medium, hard) = (get(c, Difficulty::Easy), get(c, Difficulty::Medium), get(c, Difficulty::Hard));
            let total = easy + medium + hard;
            CategoryRow {
                category: c,
                easy,
                medium,
                hard,
                total,
                easy_pct: pct(easy, total),
                medium_pct: pct(medium, total),
                hard_pct: pct(hard, total),
            }
        })
        .collect();
    let totals: BTreeMap<Difficulty, u64> = Difficulty::EMITTED
        .into_iter()
        .map(|d| (d, HallucinationCategory::ALL.into_iter().map(|c| get(c, d)).sum()))
        .collect();
    let total = totals.values().sum();
    StatsTable { rows, totals, total }
}

impl StatsTable {
    pub fn render_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<40} {:>14} {:>14} {:>14} {:>7}",
            "category", "easy", "medium", "hard", "total"
        );
        let cell = |n: u64, p: f64| format!("{n} ({p:.1}%)");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{:<40} {:>14} {:>14} {:>14} {:>7}",
                r.category.title(),
                cell(r.easy, r.easy_pct),
                cell(r.medium, r.medium_pct),
                cell(r.hard, r.hard_pct),
                r.total
            );
        }
        let t = |d| self.totals.get(&d).copied().unwrap_or(0);
        let _ = writeln!(
            out,
            "{:<40} {:>14} {:>14} {:>14} {:>7}",
            "all",
            cell(t(Difficulty::Easy), pct(t(Difficulty::Easy), self.total)),
            cell(t(Difficulty::Medium), pct(t(Difficulty::Medium), self.total)),
            cell(t(Difficulty::Hard), pct(t(Difficulty::Hard), self.total)),
            self.total
        );
        out
    }

    pub fn render_csv(&self) -> String {
        let mut out = String::from("category,easy,medium,hard,total,easy_pct,medium_pct,hard_pct\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{:.4},{:.4},{:.4}",
                r.category.as_str(),
                r.easy,
                r.medium,
                r.hard,
                r.total,
                r.easy_pct,
                r.medium_pct,
                r.hard_pct
            );
        }
        let t = |d| self.totals.get(&d).copied().unwrap_or(0);
        let (e, m, h) = (t(Difficulty::Easy), t(Difficulty::Medium), t(Difficulty::Hard));
        let _ = writeln!(
            out,
            "all,{e},{m},{h},{},{:.4},{:.4},{:.4}",
            self.total,
            pct(e, self.total),
            pct(m, self.total),
            pct(h, self.total)
        );
        out
    }
}
