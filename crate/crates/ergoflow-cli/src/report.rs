//! Markdown summary tables from metric CSV rows: one table per map, columns
//! F/LB crossed with uniform/gaussian and single/multi-agent.

use std::collections::BTreeMap;

use crate::artifacts::MetricRow;

const COLUMNS: [(&str, bool); 4] = [
    ("uniform", false),
    ("gaussians", false),
    ("uniform", true),
    ("gaussians", true),
];

fn median(values: &mut Vec<f64>) -> f64 {
    values.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

fn cell(values: &mut Vec<f64>) -> String {
    match values.len() {
        0 => "—".to_string(),
        1 => format!("{:.4}", values[0]),
        n => format!("{:.4} (n={n})", median(values)),
    }
}

/// Render the rows as markdown. Duplicate (map, case, agents) cells are
/// aggregated as the median with a count annotation; missing cells show an
/// em dash.
pub fn report_tables(rows: &[MetricRow]) -> String {
    let mut by_map: BTreeMap<String, Vec<&MetricRow>> = BTreeMap::new();
    for r in rows {
        by_map.entry(r.map.clone()).or_default().push(r);
    }
    let mut out = String::new();
    for (map, rows) in &by_map {
        out.push_str(&format!("## {map}\n\n"));
        out.push_str("| Metric | Single uniform | Single gaussians | Multi uniform | Multi gaussians |\n");
        out.push_str("|---|---|---|---|---|\n");
        for (label, pick_f) in [("F", true), ("LB", false)] {
            out.push_str(&format!("| {label} |"));
            for (case, multi) in COLUMNS {
                let mut values: Vec<f64> = rows
                    .iter()
                    .filter(|r| r.case == case && (r.agents > 1) == multi)
                    .map(|r| if pick_f { r.metric_f } else { r.metric_lb })
                    .collect();
                out.push_str(&format!(" {} |", cell(&mut values)));
            }
            out.push('\n');
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(map: &str, case: &str, agents: usize, f: f64, lb: f64, seed: u64) -> MetricRow {
        MetricRow {
            map: map.into(),
            case: case.into(),
            agents,
            metric_f: f,
            metric_lb: lb,
            k_trunc: 100,
            horizon: 5.0,
            seed,
            min_pair_dist: f64::INFINITY,
        }
    }

    #[test]
    fn complete_map_has_no_dashes() {
        let rows = vec![
            row("square", "uniform", 1, 0.002, 0.002, 0),
            row("square", "gaussians", 1, 0.003, 0.003, 0),
            row("square", "uniform", 7, 0.004, 0.004, 0),
            row("square", "gaussians", 7, 0.013, 0.012, 0),
        ];
        let md = report_tables(&rows);
        assert!(md.contains("## square"));
        assert!(!md.contains("—"), "{md}");
    }

    #[test]
    fn empty_input_is_empty_document() {
        assert_eq!(report_tables(&[]), "");
    }

    #[test]
    fn duplicates_aggregate_as_median_with_count() {
        let rows = vec![
            row("maze", "uniform", 1, 0.010, 0.030, 0),
            row("maze", "uniform", 1, 0.020, 0.010, 1),
            row("maze", "uniform", 1, 0.030, 0.020, 2),
        ];
        let md = report_tables(&rows);
        assert!(md.contains("0.0200 (n=3)"), "{md}");
        assert!(md.contains("—"), "missing cells should dash: {md}");
    }

    #[test]
    fn maps_sort_into_separate_tables() {
        let rows = vec![
            row("rooms", "uniform", 1, 0.1, 0.2, 0),
            row("maze", "uniform", 1, 0.3, 0.4, 0),
        ];
        let md = report_tables(&rows);
        let maze_pos = md.find("## maze").unwrap();
        let rooms_pos = md.find("## rooms").unwrap();
        assert!(maze_pos < rooms_pos);
    }
}
