//! Summary tables and bar charts. Everything here is a pure function of
//! run records, so tables can be regenerated from `results.jsonl` alone.

use std::fmt::Write;

use serde::{Deserialize, Serialize};

use rumi_core::rumination::Mode;

use crate::records::RunRecord;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeSummary {
    pub mode: Mode,
    pub seeds: usize,
    pub dev_accuracy: Option<f64>,
    pub test_accuracy: f64,
    pub test_std: f64,
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Per-mode means over seeds, in `Mode::ALL` order.
pub fn summarize(runs: &[RunRecord]) -> Vec<ModeSummary> {
    Mode::ALL
        .iter()
        .filter_map(|&mode| {
            let rows: Vec<&RunRecord> = runs.iter().filter(|r| r.mode == mode).collect();
            if rows.is_empty() {
                return None;
            }
            let test: Vec<f64> = rows.iter().map(|r| r.test_accuracy).collect();
            let dev: Vec<f64> = rows.iter().filter_map(|r| r.dev_accuracy).collect();
            let m = mean(&test);
            let var = test.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / test.len() as f64;
            Some(ModeSummary {
                mode,
                seeds: rows.len(),
                dev_accuracy: (dev.len() == rows.len()).then(|| mean(&dev)),
                test_accuracy: m,
                test_std: var.sqrt(),
            })
        })
        .collect()
}

fn pct(x: f64) -> String {
    format!("{:.1}", 100.0 * x)
}

/// Markdown table, one row per mode, accuracies in percent.
pub fn summary_table(title: &str, runs: &[RunRecord]) -> String {
    let mut out = format!("### {title}\n\n| Method | Dev acc | Test acc | Std | Seeds |\n|---|---:|---:|---:|---:|\n");
    let rows = summarize(runs);
    let base = rows.iter().find(|s| s.mode == Mode::Baseline).map(|s| s.test_accuracy);
    for s in &rows {
        let dev = s.dev_accuracy.map_or("-".to_string(), pct);
        let mut test = pct(s.test_accuracy);
        if let (Some(b), true) = (base, s.mode != Mode::Baseline) {
            let _ = write!(test, " ({:+.1})", 100.0 * (s.test_accuracy - b));
        }
        let _ = writeln!(out, "| {} | {} | {} | {} | {} |", s.mode, dev, test, pct(s.test_std), s.seeds);
    }
    out
}

/// Transfer table with a `source ⇒ target` column header.
pub fn ood_table(source: &str, target: &str, source_hash: &str, target_hash: &str, runs: &[RunRecord]) -> String {
    let mut out = format!(
        "### Transfer\n\nsource config {source_hash}, target config {target_hash}\n\n| Method | {source} ⇒ {target} | Seeds |\n|---|---:|---:|\n"
    );
    for s in summarize(runs) {
        let _ = writeln!(out, "| {} | {} | {} |", s.mode, pct(s.test_accuracy), s.seeds);
    }
    out
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Bar chart of mean test accuracy per mode.
pub fn bar_chart_svg(title: &str, runs: &[RunRecord]) -> String {
    let rows = summarize(runs);
    let (w, h, left, bottom, top) = (120.0 * rows.len().max(1) as f64 + 80.0, 300.0, 60.0, 40.0, 40.0);
    let plot_h = h - bottom - top;
    let mut svg = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" font-family=\"sans-serif\" font-size=\"12\">\n"
    );
    let _ = writeln!(svg, "<text x=\"{}\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">{}</text>", w / 2.0, escape(title));
    for tick in 0..=4 {
        let v = tick as f64 * 0.25;
        let y = top + plot_h * (1.0 - v);
        let _ = writeln!(svg, "<line x1=\"{left}\" y1=\"{y}\" x2=\"{}\" y2=\"{y}\" stroke=\"#ddd\"/>", w - 20.0);
        let _ = writeln!(svg, "<text x=\"{}\" y=\"{}\" text-anchor=\"end\">{}</text>", left - 6.0, y + 4.0, pct(v));
    }
    let colors = ["#888888", "#4c72b0", "#dd8452"];
    for (i, s) in rows.iter().enumerate() {
        let x = left + 20.0 + 120.0 * i as f64;
        let bh = plot_h * s.test_accuracy.clamp(0.0, 1.0);
        let y = top + plot_h - bh;
        let _ = writeln!(
            svg,
            "<rect x=\"{x}\" y=\"{y:.2}\" width=\"80\" height=\"{bh:.2}\" fill=\"{}\"/>",
            colors[i % colors.len()]
        );
        let _ = writeln!(svg, "<text x=\"{}\" y=\"{:.2}\" text-anchor=\"middle\">{}</text>", x + 40.0, y - 4.0, pct(s.test_accuracy));
        let _ = writeln!(svg, "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{}</text>", x + 40.0, h - bottom + 16.0, s.mode);
    }
    svg.push_str("</svg>\n");
    svg
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run(mode: Mode, seed: u64, test: f64) -> RunRecord {
        RunRecord { mode, seed, dev_accuracy: Some(0.5), test_accuracy: test, test_loss: 1.0, curve: Vec::new() }
    }

    #[test]
    fn table_fixture() {
        let runs = vec![
            run(Mode::RumiFfn, 0, 0.5),
            run(Mode::Baseline, 0, 0.4),
            run(Mode::RumiFfn, 1, 0.7),
            run(Mode::Baseline, 1, 0.4),
        ];
        let expected = "### t\n\n| Method | Dev acc | Test acc | Std | Seeds |\n|---|---:|---:|---:|---:|\n\
| baseline | 50.0 | 40.0 | 0.0 | 2 |\n\
| rumi_ffn | 50.0 | 60.0 (+20.0) | 10.0 | 2 |\n";
        assert_eq!(summary_table("t", &runs), expected);
    }

    #[test]
    fn chart_has_one_bar_per_mode() {
        let runs = vec![run(Mode::Baseline, 0, 0.4), run(Mode::RumiConcat, 0, 0.45), run(Mode::RumiFfn, 0, 0.5)];
        let svg = bar_chart_svg("a < b", &runs);
        assert_eq!(svg.matches("<rect").count(), 3);
        assert!(svg.contains("a &lt; b"));
    }
}
