//! Markdown rendering of sweep results.
//!
//! [`render_report`] is a pure function of the parsed CSV rows: same rows,
//! same bytes. One table per `(dataset, task)` pair, one row per label
//! fraction, metrics formatted to two decimals — the layout downstream
//! readers expect from label-efficiency studies.

use std::collections::BTreeMap;

use crate::artifacts::{fraction_percent, SweepRow};

/// Render the full markdown report. Empty input renders an explicit
/// no-results document rather than an empty file.
pub fn render_report(rows: &[SweepRow]) -> String {
    let mut out = String::from("# Label-efficiency results\n");
    if rows.is_empty() {
        out.push_str("\nNo results.\n");
        return out;
    }

    // Group by (dataset, task); BTreeMap fixes group order, fractions sort
    // within each group.
    let mut groups: BTreeMap<(String, String), Vec<&SweepRow>> = BTreeMap::new();
    for row in rows {
        groups
            .entry((row.dataset.clone(), row.task.clone()))
            .or_default()
            .push(row);
    }

    for ((dataset, task), mut group) in groups {
        group.sort_by(|a, b| a.fraction.partial_cmp(&b.fraction).expect("finite fractions"));
        out.push_str(&format!("\n## {dataset} — {task}\n\n"));
        out.push_str("| Labels | Accuracy | Precision | Recall | F1-Score |\n");
        out.push_str("| --- | --- | --- | --- | --- |\n");
        for row in group {
            out.push_str(&format!(
                "| {} | {:.2} | {:.2} | {:.2} | {:.2} |\n",
                fraction_percent(row.fraction),
                row.accuracy,
                row.precision,
                row.recall,
                row.f1
            ));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(dataset: &str, task: &str, fraction: f64, m: [f64; 4]) -> SweepRow {
        SweepRow {
            dataset: dataset.to_string(),
            task: task.to_string(),
            fraction,
            accuracy: m[0],
            precision: m[1],
            recall: m[2],
            f1: m[3],
        }
    }

    #[test]
    fn renders_one_table_per_dataset_task_with_sorted_fractions() {
        let rows = vec![
            row("aptos", "binary", 1.0, [99.59, 100.0, 99.54, 99.26]),
            row("aptos", "binary", 0.1, [96.88, 100.0, 94.23, 96.44]),
            row("messidor", "binary", 0.5, [98.49, 98.65, 100.0, 99.99]),
        ];
        let md = render_report(&rows);
        let aptos = md.find("## aptos — binary").unwrap();
        let messidor = md.find("## messidor — binary").unwrap();
        assert!(aptos < messidor, "groups not in deterministic order");
        // Fractions ascending inside the group.
        let p10 = md.find("| 10% |").unwrap();
        let p100 = md.find("| 100% |").unwrap();
        assert!(p10 < p100);
        assert_eq!(md.matches("| Labels |").count(), 2);
    }

    #[test]
    fn hundred_percent_row_renders_reference_values_exactly() {
        let rows = vec![row("aptos", "binary", 1.0, [99.59, 100.0, 99.54, 99.26])];
        let md = render_report(&rows);
        assert!(
            md.contains("| 100% | 99.59 | 100.00 | 99.54 | 99.26 |"),
            "reference row mis-rendered:\n{md}"
        );
    }

    #[test]
    fn values_are_fixed_to_two_decimals() {
        let rows = vec![row("d", "binary", 0.2, [99.479, 100.0, 98.5449, 99.0])];
        let md = render_report(&rows);
        assert!(md.contains("| 20% | 99.48 | 100.00 | 98.54 | 99.00 |"), "{md}");
    }

    #[test]
    fn empty_input_renders_no_results_marker() {
        let md = render_report(&[]);
        assert!(md.contains("No results."));
    }

    #[test]
    fn rendering_is_deterministic() {
        let rows = vec![
            row("b", "multiclass", 0.5, [83.43, 79.6, 79.2, 79.4]),
            row("a", "binary", 0.5, [90.0, 91.0, 92.0, 91.5]),
        ];
        assert_eq!(render_report(&rows), render_report(&rows));
    }
}
