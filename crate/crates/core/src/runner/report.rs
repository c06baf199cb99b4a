//! Plain-text summary of a results directory.

use std::fmt::Write as _;

use super::results::{CellStatus, SweepResult};

const SYNTHETIC: [&str; 2] = ["r_m", "r_e"];
const ROBOT: [&str; 9] = [
    "right_pos",
    "right_vel",
    "right_ee",
    "left_pos",
    "left_vel",
    "left_ee",
    "vision_left",
    "vision_right",
    "chance_left",
];

/// One markdown table per experiment: `d_z` rows, `mean ± std` cells.
pub fn render_report(result: &SweepResult) -> String {
    let mut s = String::new();
    for exp in result.experiments() {
        let sel = result.select(&exp);
        let has = |m: &str| sel.aggregates.iter().any(|a| a.metric == m);
        let metrics: Vec<&str> = if has("r_m") || has("r_e") {
            SYNTHETIC.iter().copied().filter(|m| has(m)).collect()
        } else {
            ROBOT.iter().copied().filter(|m| has(m)).collect()
        };
        let reps = sel.cells.iter().map(|c| c.rep).max().map_or(0, |r| r + 1);
        let _ = writeln!(s, "## {exp}\n\n{} cells, {} repetitions, {} failed\n", sel.cells.len(), reps, sel.failed());
        let _ = writeln!(s, "| d_z | {} |", metrics.join(" | "));
        let _ = writeln!(s, "|---|{}", "---|".repeat(metrics.len()));
        let mut dzs: Vec<usize> = sel.aggregates.iter().map(|a| a.d_z).collect();
        dzs.dedup();
        for d in dzs {
            let row: Vec<String> = metrics
                .iter()
                .map(|m| {
                    sel.aggregates
                        .iter()
                        .find(|a| a.d_z == d && a.metric == *m)
                        .map_or("-".into(), |a| format!("{:.3} ± {:.3}", a.mean, a.std))
                })
                .collect();
            let _ = writeln!(s, "| {d} | {} |", row.join(" | "));
        }
        for c in sel.cells.iter() {
            if let CellStatus::Failed(m) = &c.status {
                let _ = writeln!(s, "\nfailed: d_z={} rep={}: {m}", c.d_z, c.rep);
            }
        }
        s.push('\n');
    }
    s
}
