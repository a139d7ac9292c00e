//! Markdown tables and SVG line charts from run artifacts.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use selfplay_tree::engine::{ExperimentReport, SweepReport, METRICS_FILE};
use selfplay_tree::IterationReport;

use crate::{EXPERIMENT_FILE, SWEEP_FILE};

const REPORT_FILE: &str = "report.md";
const PALETTE: [&str; 4] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];

pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
}

/// Plain SVG line chart, x and y ranges taken from the data.
pub fn line_chart(title: &str, x_label: &str, y_label: &str, series: &[Series]) -> String {
    let (w, h, m) = (640.0, 360.0, 50.0);
    let pts = series.iter().flat_map(|s| s.points.iter());
    let (mut x0, mut x1, mut y0, mut y1) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
    for &(x, y) in pts {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if x0 > x1 {
        (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
    }
    y0 = y0.min(0.0);
    if x1 <= x0 {
        x1 = x0 + 1.0;
    }
    if y1 <= y0 {
        y1 = y0 + 1.0;
    }
    let sx = |x: f64| m + (x - x0) / (x1 - x0) * (w - 2.0 * m);
    let sy = |y: f64| h - m - (y - y0) / (y1 - y0) * (h - 2.0 * m);
    let mut svg = String::new();
    let _ = writeln!(svg, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" font-family="sans-serif" font-size="12">"#);
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(svg, r#"<text x="{}" y="20" text-anchor="middle" font-size="14">{}</text>"#, w / 2.0, escape(title));
    let _ = writeln!(svg, r#"<line x1="{m}" y1="{}" x2="{}" y2="{}" stroke="black"/>"#, h - m, w - m, h - m);
    let _ = writeln!(svg, r#"<line x1="{m}" y1="{m}" x2="{m}" y2="{}" stroke="black"/>"#, h - m);
    let _ = writeln!(svg, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, w / 2.0, h - 12.0, escape(x_label));
    let _ = writeln!(svg, r#"<text x="14" y="{}" transform="rotate(-90 14 {})" text-anchor="middle">{}</text>"#, h / 2.0, h / 2.0, escape(y_label));
    for (v, anchor, x, y) in [
        (x0, "middle", sx(x0), h - m + 16.0),
        (x1, "middle", sx(x1), h - m + 16.0),
        (y0, "end", m - 4.0, sy(y0) + 4.0),
        (y1, "end", m - 4.0, sy(y1) + 4.0),
    ] {
        let _ = writeln!(svg, r#"<text x="{x:.1}" y="{y:.1}" text-anchor="{anchor}">{}</text>"#, short(v));
    }
    for (i, s) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let coords: Vec<String> = s.points.iter().map(|&(x, y)| format!("{:.1},{:.1}", sx(x), sy(y))).collect();
        let _ = writeln!(svg, r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#, coords.join(" "));
        let ly = m + 14.0 * i as f64;
        let _ = writeln!(svg, r#"<text x="{}" y="{ly:.1}" fill="{color}">{}</text>"#, w - m - 120.0, escape(&s.name));
    }
    svg.push_str("</svg>\n");
    svg
}

fn short(v: f64) -> String {
    if v.fract() == 0.0 && v.abs() < 1e6 {
        format!("{v:.0}")
    } else {
        format!("{v:.2}")
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

pub fn read_metrics(path: &Path) -> Result<Vec<IterationReport>, String> {
    let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| format!("{} line {}: {e}", path.display(), i + 1)))
        .collect()
}

fn metrics_section(out: &mut String, reports: &[IterationReport]) {
    let depth = reports.iter().flat_map(|r| r.node_counts.keys().copied()).max().unwrap_or(1);
    let _ = writeln!(out, "## Iterations\n");
    let mut header = "| iteration | paths | processed | skipped | batches | mean g | skill | expansions |".to_owned();
    let mut rule = "|---:|---:|---:|---:|---:|---:|---:|---:|".to_owned();
    for l in 2..=depth {
        let _ = write!(header, " nodes L{l} |");
        rule.push_str("---:|");
    }
    let _ = writeln!(out, "{header}\n{rule}");
    for r in reports {
        let skill = r.skill.map_or("-".to_owned(), |s| format!("{s:.3}"));
        let _ = write!(
            out,
            "| {} | {} | {} | {} | {} | {:.3} | {} | {} |",
            r.iteration + 1,
            r.paths_sampled,
            r.processed,
            r.skipped,
            r.batches,
            r.mean_g,
            skill,
            r.expansion.inserted
        );
        for l in 2..=depth {
            let _ = write!(out, " {} |", r.node_counts.get(&l).copied().unwrap_or(0));
        }
        out.push('\n');
    }
    out.push('\n');
}

fn experiment_section(out: &mut String, rep: &ExperimentReport) {
    let _ = writeln!(out, "## Reward-guided vs uniform exploration\n");
    let _ = writeln!(
        out,
        "{} iterations per run, learnable rate pooled over the last {} iterations.\n",
        rep.iterations, rep.late_window
    );
    let _ = writeln!(out, "| seed | reward | random | difference | reward wins | nodes (reward) | nodes (random) |");
    let _ = writeln!(out, "|---:|---:|---:|---:|:---:|---:|---:|");
    for s in &rep.seeds {
        let _ = writeln!(
            out,
            "| {} | {:.3} | {:.3} | {:+.3} | {} | {} | {} |",
            s.seed,
            s.late_reward,
            s.late_random,
            s.late_reward - s.late_random,
            if s.reward_wins { "yes" } else { "no" },
            s.reward_nodes,
            s.random_nodes
        );
    }
    let _ = writeln!(
        out,
        "\nReward-guided wins {} of {} seeds; mean difference {:+.3} (sd {:.3}).\n",
        rep.wins,
        rep.seeds.len(),
        rep.mean_difference,
        rep.sd_difference
    );
}

fn experiment_chart(rep: &ExperimentReport) -> String {
    let mean_curve = |pick: fn(&selfplay_tree::engine::SeedComparison) -> &Vec<f64>| {
        let n = rep.seeds.len().max(1) as f64;
        let len = rep.seeds.iter().map(|s| pick(s).len()).min().unwrap_or(0);
        (0..len)
            .map(|i| ((i + 1) as f64, rep.seeds.iter().map(|s| pick(s)[i]).sum::<f64>() / n))
            .collect::<Vec<_>>()
    };
    line_chart(
        "Learnable rate per iteration (mean over seeds)",
        "iteration",
        "learnable rate",
        &[
            Series { name: "reward-guided".into(), points: mean_curve(|s| &s.reward_rates) },
            Series { name: "uniform".into(), points: mean_curve(|s| &s.random_rates) },
        ],
    )
}

fn sweep_section(out: &mut String, rep: &SweepReport) {
    let _ = writeln!(out, "## Depth and window sweep\n");
    let _ = writeln!(out, "| depth | window | seed | final learnable rate | topic nodes | per level |");
    let _ = writeln!(out, "|---:|---:|---:|---:|---:|:---|");
    for r in &rep.rows {
        let levels: Vec<String> = r.node_counts.iter().map(|(l, c)| format!("L{l}={c}")).collect();
        let _ = writeln!(
            out,
            "| {} | {} | {} | {:.3} | {} | {} |",
            r.max_depth,
            r.window,
            r.seed,
            r.final_learnable_rate,
            r.total_nodes,
            levels.join(" ")
        );
    }
    if rep.ordering_holds {
        let _ = writeln!(out, "\nDeeper trees grew strictly more nodes in every cell.\n");
    } else {
        let _ = writeln!(out, "\nOrdering violations:\n");
        for v in &rep.violations {
            let _ = writeln!(out, "- {v}");
        }
        out.push('\n');
    }
}

/// Writes `report.md` plus charts into `dir`; returns the written paths.
pub fn render(dir: &Path) -> Result<Vec<PathBuf>, String> {
    let mut out = String::from("# Run report\n\n");
    let mut written = Vec::new();
    let mut found = false;
    let write = |name: &str, body: &str, written: &mut Vec<PathBuf>| -> Result<(), String> {
        let p = dir.join(name);
        fs::write(&p, body).map_err(|e| format!("{}: {e}", p.display()))?;
        written.push(p);
        Ok(())
    };

    let metrics = dir.join(METRICS_FILE);
    if metrics.exists() {
        found = true;
        let reports = read_metrics(&metrics)?;
        metrics_section(&mut out, &reports);
        let g = Series { name: "mean g".into(), points: reports.iter().map(|r| ((r.iteration + 1) as f64, r.mean_g)).collect() };
        write("learnable_rate.svg", &line_chart("Learnable rate", "iteration", "mean g", &[g]), &mut written)?;
        let depth = reports.iter().flat_map(|r| r.node_counts.keys().copied()).max().unwrap_or(1);
        let levels: Vec<Series> = (2..=depth)
            .map(|l| Series {
                name: format!("level {l}"),
                points: reports
                    .iter()
                    .map(|r| ((r.iteration + 1) as f64, r.node_counts.get(&l).copied().unwrap_or(0) as f64))
                    .collect(),
            })
            .collect();
        write("tree_growth.svg", &line_chart("Topic nodes per level", "iteration", "nodes", &levels), &mut written)?;
        out.push_str("![learnable rate](learnable_rate.svg)\n\n![tree growth](tree_growth.svg)\n\n");
    }
    let exp = dir.join(EXPERIMENT_FILE);
    if exp.exists() {
        found = true;
        let text = fs::read_to_string(&exp).map_err(|e| e.to_string())?;
        let rep: ExperimentReport = serde_json::from_str(&text).map_err(|e| format!("{}: {e}", exp.display()))?;
        experiment_section(&mut out, &rep);
        write("rand_vs_reward.svg", &experiment_chart(&rep), &mut written)?;
        out.push_str("![reward vs random](rand_vs_reward.svg)\n\n");
    }
    let sweep = dir.join(SWEEP_FILE);
    if sweep.exists() {
        found = true;
        let text = fs::read_to_string(&sweep).map_err(|e| e.to_string())?;
        let rep: SweepReport = serde_json::from_str(&text).map_err(|e| format!("{}: {e}", sweep.display()))?;
        sweep_section(&mut out, &rep);
    }
    if !found {
        return Err(format!("no metrics, experiment or sweep results in {}", dir.display()));
    }
    write(REPORT_FILE, &out, &mut written)?;
    Ok(written)
}
