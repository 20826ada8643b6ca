use std::fmt::Write as _;
use std::io::Write;

use serde::{Deserialize, Serialize};

use super::config::ExperimentMode;
use super::runner::{Cell, RunRecord};
use crate::augment::{PromptMode, Strategy};
use crate::error::{invalid, Result};
use crate::metrics::MetricSet;

/// Mean and sample standard deviation; `std` is NaN for one seed.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    pub std: f64,
}

impl Stat {
    pub fn of(xs: &[f64]) -> Self {
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let std = if xs.len() < 2 {
            f64::NAN
        } else {
            (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        };
        Self { mean, std }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricStats {
    pub auroc: Stat,
    pub auprc: Stat,
    pub rp80: Stat,
}

impl MetricStats {
    fn of(sets: &[MetricSet]) -> Self {
        let col = |f: fn(&MetricSet) -> f64| Stat::of(&sets.iter().map(f).collect::<Vec<_>>());
        Self {
            auroc: col(|m| m.auroc),
            auprc: col(|m| m.auprc),
            rp80: col(|m| m.rp80),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub cell: Cell,
    pub seeds: Vec<u64>,
    pub valid: MetricStats,
    pub test: Option<MetricStats>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ResultTable {
    pub rows: Vec<ResultRow>,
}

impl ResultTable {
    /// One row per distinct cell, in order of first appearance.
    pub fn aggregate(records: &[RunRecord]) -> Result<Self> {
        let mut groups: Vec<(Cell, Vec<&RunRecord>)> = Vec::new();
        for r in records {
            match groups.iter_mut().find(|(c, _)| *c == r.cell) {
                Some((_, g)) => g.push(r),
                None => groups.push((r.cell.clone(), vec![r])),
            }
        }
        let mut rows = Vec::with_capacity(groups.len());
        for (cell, group) in groups {
            let valid: Vec<MetricSet> = group.iter().map(|r| r.valid).collect();
            let tests: Option<Vec<MetricSet>> = group.iter().map(|r| r.test).collect();
            if tests.is_none() && group.iter().any(|r| r.test.is_some()) {
                return Err(invalid("test metrics present for only some seeds of a cell"));
            }
            rows.push(ResultRow {
                cell,
                seeds: group.iter().map(|r| r.seed).collect(),
                valid: MetricStats::of(&valid),
                test: tests.map(|t| MetricStats::of(&t)),
            });
        }
        Ok(Self { rows })
    }

    pub fn row(&self, cell: &Cell) -> Option<&ResultRow> {
        self.rows.iter().find(|r| r.cell == *cell)
    }

    /// Header plus one line per row; inapplicable fields and undefined
    /// statistics are empty.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header: Vec<String> = ["strategy", "count", "prompt", "balanced", "keep_fraction", "tau", "kl_scope", "seeds"]
            .map(String::from)
            .to_vec();
        for split in ["valid", "test"] {
            for m in ["auroc", "auprc", "rp80"] {
                header.push(format!("{split}_{m}_mean"));
                header.push(format!("{split}_{m}_std"));
            }
        }
        w.write_record(&header)?;
        for row in &self.rows {
            let mut rec = cell_fields(&row.cell);
            rec.push(row.seeds.len().to_string());
            for stats in [Some(row.valid), row.test] {
                for s in stats.map_or([None; 3], |m| [Some(m.auroc), Some(m.auprc), Some(m.rp80)]) {
                    rec.push(s.map_or(String::new(), |s| num(s.mean)));
                    rec.push(s.map_or(String::new(), |s| num(s.std)));
                }
            }
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("csv is UTF-8")
    }
}

fn num(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.6}")
    } else {
        String::new()
    }
}

fn prompt_name(p: PromptMode) -> &'static str {
    match p {
        PromptMode::WithContext => "with_context",
        PromptMode::WithoutContext => "without_context",
    }
}

fn cell_fields(c: &Cell) -> Vec<String> {
    let (keep, tau, scope) = match c.strategy {
        Strategy::ConfidenceFilter { keep_fraction } => (keep_fraction.to_string(), String::new(), String::new()),
        Strategy::Medaug { tau, kl_scope } => (
            String::new(),
            tau.to_string(),
            serde_json::to_value(kl_scope).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default(),
        ),
        _ => Default::default(),
    };
    vec![
        c.strategy.name().to_string(),
        c.count.map_or(String::new(), |n| n.to_string()),
        c.prompt.map_or(String::new(), |p| prompt_name(p).to_string()),
        c.balanced.map_or(String::new(), |b| if b { "Y" } else { "N" }.to_string()),
        keep,
        tau,
        scope,
    ]
}

fn pm(s: Stat) -> String {
    if s.std.is_finite() {
        format!("{:.4} ± {:.4}", s.mean, s.std)
    } else {
        format!("{:.4}", s.mean)
    }
}

/// Markdown rendering of a table with a short provenance header.
pub fn render_markdown(name: &str, mode: ExperimentMode, config_hash: &str, table: &ResultTable) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "# {name}\n");
    let _ = writeln!(s, "config `{config_hash}`\n");
    let split = match mode {
        ExperimentMode::Compare => "validation and test",
        ExperimentMode::Sweep | ExperimentMode::FinetuneGrid => "validation",
    };
    let _ = writeln!(s, "Mean ± sample stddev over seeds, {split} split.\n");
    let mut header = "| strategy | count | prompt | balanced | params | seeds | valid AUROC | valid AUPRC | valid RP80 |".to_string();
    let mut rule = "|---|---|---|---|---|---|---|---|---|".to_string();
    if mode == ExperimentMode::Compare {
        header.push_str(" test AUROC | test AUPRC | test RP80 |");
        rule.push_str("---|---|---|");
    }
    let _ = writeln!(s, "{header}\n{rule}");
    for row in &table.rows {
        let f = cell_fields(&row.cell);
        let params = [("keep", &f[4]), ("tau", &f[5]), ("scope", &f[6])]
            .iter()
            .filter(|(_, v)| !v.is_empty())
            .map(|(k, v)| format!("{k}={v}"))
            .collect::<Vec<_>>()
            .join(" ");
        let _ = write!(
            s,
            "| {} | {} | {} | {} | {} | {} | {} | {} | {} |",
            f[0],
            f[1],
            f[2],
            f[3],
            params,
            row.seeds.len(),
            pm(row.valid.auroc),
            pm(row.valid.auprc),
            pm(row.valid.rp80)
        );
        if let (ExperimentMode::Compare, Some(t)) = (mode, row.test) {
            let _ = write!(s, " {} | {} | {} |", pm(t.auroc), pm(t.auprc), pm(t.rp80));
        }
        s.push('\n');
    }
    s
}
