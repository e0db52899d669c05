//! Comparison tables: method rows x dataset metric columns, in Markdown and
//! CSV, with the best value per column marked in the Markdown rendering.

use std::collections::BTreeSet;

use super::record::{RunMetrics, RunReport};
use crate::types::Mode;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum MetricKind {
    Em,
    F1,
    Acc,
}

impl MetricKind {
    fn header(&self) -> &'static str {
        match self {
            MetricKind::Em => "EM",
            MetricKind::F1 => "F1",
            MetricKind::Acc => "Accuracy",
        }
    }

    fn csv_suffix(&self) -> &'static str {
        match self {
            MetricKind::Em => "em",
            MetricKind::F1 => "f1",
            MetricKind::Acc => "acc",
        }
    }

    fn pick(&self, metrics: &RunMetrics) -> Option<f64> {
        match self {
            MetricKind::Em => metrics.em,
            MetricKind::F1 => metrics.f1,
            MetricKind::Acc => metrics.acc,
        }
    }
}

#[derive(Debug, Clone)]
struct Column {
    dataset: String,
    kind: MetricKind,
}

struct Table {
    columns: Vec<Column>,
    rows: Vec<(Mode, Vec<Option<f64>>)>,
}

fn build_table(reports: &[RunReport]) -> Table {
    let datasets: BTreeSet<&str> = reports.iter().map(|r| r.dataset_tag.as_str()).collect();

    let mut columns = Vec::new();
    for dataset in &datasets {
        let of_dataset: Vec<&RunReport> = reports
            .iter()
            .filter(|r| r.dataset_tag == *dataset)
            .collect();
        for kind in [MetricKind::Em, MetricKind::F1, MetricKind::Acc] {
            if of_dataset
                .iter()
                .any(|r| kind.pick(&r.mean_metrics).is_some())
            {
                columns.push(Column {
                    dataset: dataset.to_string(),
                    kind,
                });
            }
        }
    }

    let mut rows = Vec::new();
    for mode in Mode::ALL {
        if !reports.iter().any(|r| r.mode == mode) {
            continue;
        }
        let cells = columns
            .iter()
            .map(|col| {
                reports
                    .iter()
                    .find(|r| r.mode == mode && r.dataset_tag == col.dataset)
                    .and_then(|r| col.kind.pick(&r.mean_metrics))
            })
            .collect();
        rows.push((mode, cells));
    }

    Table { columns, rows }
}

fn column_max(rows: &[(Mode, Vec<Option<f64>>)], col: usize) -> Option<f64> {
    rows.iter()
        .filter_map(|(_, cells)| cells[col])
        .fold(None, |acc, v| match acc {
            Some(m) if m >= v => Some(m),
            _ => Some(v),
        })
}

/// Method x dataset Markdown table; the best value per column is bolded.
pub fn render_markdown(reports: &[RunReport]) -> String {
    let table = build_table(reports);
    let mut out = String::new();

    out.push_str("| Method |");
    for col in &table.columns {
        out.push_str(&format!(" {} {} |", col.dataset, col.kind.header()));
    }
    out.push('\n');
    out.push_str("|---|");
    for _ in &table.columns {
        out.push_str("---|");
    }
    out.push('\n');

    for (mode, cells) in &table.rows {
        out.push_str(&format!("| {} |", mode.display_name()));
        for (i, cell) in cells.iter().enumerate() {
            match cell {
                Some(v) => {
                    let best = column_max(&table.rows, i).is_some_and(|m| *v == m);
                    if best {
                        out.push_str(&format!(" **{v:.4}** |"));
                    } else {
                        out.push_str(&format!(" {v:.4} |"));
                    }
                }
                None => out.push_str(" - |"),
            }
        }
        out.push('\n');
    }
    out
}

/// Same table as CSV with raw (unrounded) values.
pub fn render_csv(reports: &[RunReport]) -> String {
    let table = build_table(reports);
    let mut writer = csv::Writer::from_writer(Vec::new());

    let mut header = vec!["method".to_string()];
    for col in &table.columns {
        header.push(format!("{}_{}", col.dataset, col.kind.csv_suffix()));
    }
    writer.write_record(&header).expect("csv header");

    for (mode, cells) in &table.rows {
        let mut record = vec![mode.display_name().to_string()];
        for cell in cells {
            record.push(cell.map(|v| v.to_string()).unwrap_or_default());
        }
        writer.write_record(&record).expect("csv row");
    }

    String::from_utf8(writer.into_inner().expect("csv flush")).expect("csv is utf-8")
}
