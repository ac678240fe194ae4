use std::fmt::Write as _;
use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, OutputFormat};
use super::run::{EpisodeRecord, RunOutput, RunSummary};
use super::sweep::SweepTable;
use crate::error::Result;

/// Identifier stored in every run summary document.
pub const SUMMARY_FORMAT: &str = "hfo2ps-run-summary/1";

/// JSON schema of [`SummaryDocument`].
pub const SUMMARY_SCHEMA: &str = r#"{
  "$schema": "https://json-schema.org/draft/2020-12/schema",
  "title": "run summary",
  "type": "object",
  "required": ["format", "summary", "cumulative_regret"],
  "properties": {
    "format": { "type": "string", "const": "hfo2ps-run-summary/1" },
    "config": { "type": ["object", "null"] },
    "cumulative_regret": { "type": "array", "items": { "type": "number" } },
    "summary": {
      "type": "object",
      "required": [
        "algorithm", "episodes", "num_states", "num_actions", "horizon", "dim", "seed",
        "alpha", "xi", "gamma", "lambda", "levels", "delta", "tol", "max_sweeps",
        "final_regret", "occupancy_regret", "comparator_total", "learner_total",
        "realized_total", "contained_episodes", "value_order_violations", "home_steps",
        "home_dominated", "bonus_sum", "total_sweeps", "max_projection_residual",
        "unconverged_projections"
      ],
      "properties": {
        "algorithm": { "type": "string", "enum": ["hf-o2ps", "omd-known-transition", "uniform-policy", "greedy-no-bonus"] },
        "episodes": { "type": "integer", "minimum": 0 },
        "num_states": { "type": "integer", "minimum": 1 },
        "num_actions": { "type": "integer", "minimum": 1 },
        "horizon": { "type": "integer", "minimum": 1 },
        "dim": { "type": "integer", "minimum": 1 },
        "seed": { "type": "integer", "minimum": 0 },
        "alpha": { "type": "number" },
        "xi": { "type": "number" },
        "gamma": { "type": "number" },
        "lambda": { "type": "number" },
        "levels": { "type": "integer", "minimum": 1 },
        "delta": { "type": "number" },
        "tol": { "type": "number" },
        "max_sweeps": { "type": "integer", "minimum": 1 },
        "final_regret": { "type": "number" },
        "occupancy_regret": { "type": "number" },
        "comparator_total": { "type": "number" },
        "learner_total": { "type": "number" },
        "realized_total": { "type": "number" },
        "contained_episodes": { "type": "integer", "minimum": 0 },
        "value_order_violations": { "type": "integer", "minimum": 0 },
        "home_steps": { "type": "integer", "minimum": 0 },
        "home_dominated": { "type": "integer", "minimum": 0 },
        "bonus_sum": { "type": "number" },
        "total_sweeps": { "type": "integer", "minimum": 0 },
        "max_projection_residual": { "type": "number" },
        "unconverged_projections": { "type": "integer", "minimum": 0 }
      }
    }
  }
}
"#;

/// Config echo plus aggregates of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryDocument {
    pub format: String,
    pub config: Option<ExperimentConfig>,
    pub summary: RunSummary,
    pub cumulative_regret: Vec<f64>,
}

impl SummaryDocument {
    pub fn new(config: Option<&ExperimentConfig>, output: &RunOutput) -> Self {
        Self {
            format: SUMMARY_FORMAT.to_string(),
            config: config.cloned(),
            summary: output.summary.clone(),
            cumulative_regret: output.records.iter().map(|r| r.cumulative_regret).collect(),
        }
    }
}

/// One CSV row per record, header always present.
pub fn write_records_csv<W: Write>(w: W, records: &[EpisodeRecord]) -> Result<()> {
    let mut wtr = csv::WriterBuilder::new().has_headers(false).from_writer(w);
    wtr.write_record(EpisodeRecord::COLUMNS)?;
    for r in records {
        wtr.serialize(r)?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn read_records_csv<R: Read>(r: R) -> Result<Vec<EpisodeRecord>> {
    csv::Reader::from_reader(r)
        .deserialize()
        .map(|r| r.map_err(Into::into))
        .collect()
}

pub fn write_summary_json<W: Write>(mut w: W, doc: &SummaryDocument) -> Result<()> {
    serde_json::to_writer_pretty(&mut w, doc)?;
    writeln!(w)?;
    Ok(())
}

pub fn write_sweep_csv<W: Write>(w: W, table: &SweepTable) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record([table.axis.symbol(), "runs", "mean_regret", "stderr"])?;
    for r in &table.rows {
        wtr.write_record([
            r.value.to_string(),
            r.runs.to_string(),
            r.mean_regret.to_string(),
            r.stderr.to_string(),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const MARGIN: f64 = 56.0;

/// Self-contained SVG line plot; points are `(x, y)` in data coordinates.
pub fn line_plot_svg(title: &str, x_label: &str, y_label: &str, points: &[(f64, f64)]) -> String {
    let finite: Vec<(f64, f64)> = points
        .iter()
        .copied()
        .filter(|(x, y)| x.is_finite() && y.is_finite())
        .collect();
    let span = |v: &mut dyn Iterator<Item = f64>| {
        let (lo, hi) = v.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| (lo.min(x), hi.max(x)));
        if !lo.is_finite() {
            (0.0, 1.0)
        } else if hi - lo < 1e-12 {
            (lo - 0.5, hi + 0.5)
        } else {
            (lo, hi)
        }
    };
    let (x0, x1) = span(&mut finite.iter().map(|p| p.0));
    let (y0, y1) = span(&mut finite.iter().map(|p| p.1));
    let px = |x: f64| MARGIN + (x - x0) / (x1 - x0) * (WIDTH - 2.0 * MARGIN);
    let py = |y: f64| HEIGHT - MARGIN - (y - y0) / (y1 - y0) * (HEIGHT - 2.0 * MARGIN);
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="20" text-anchor="middle" font-size="14">{}</text>"#,
        WIDTH / 2.0,
        escape(title)
    );
    let (l, r, t, b) = (MARGIN, WIDTH - MARGIN, MARGIN, HEIGHT - MARGIN);
    let _ = writeln!(
        s,
        r#"<path d="M{l} {t} L{l} {b} L{r} {b}" fill="none" stroke="black"/>"#
    );
    for (v, anchor, x, y) in [
        (x0, "start", l, b + 16.0),
        (x1, "end", r, b + 16.0),
    ] {
        let _ = writeln!(s, r#"<text x="{x}" y="{y}" text-anchor="{anchor}">{}</text>"#, tick(v));
    }
    for (v, y) in [(y0, b), (y1, t)] {
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="end">{}</text>"#,
            l - 6.0,
            y + 4.0,
            tick(v)
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
        WIDTH / 2.0,
        HEIGHT - 12.0,
        escape(x_label)
    );
    let _ = writeln!(
        s,
        r#"<text x="16" y="{}" text-anchor="middle" transform="rotate(-90 16 {})">{}</text>"#,
        HEIGHT / 2.0,
        HEIGHT / 2.0,
        escape(y_label)
    );
    if !finite.is_empty() {
        let pts: Vec<String> = finite
            .iter()
            .map(|&(x, y)| format!("{:.2},{:.2}", px(x), py(y)))
            .collect();
        let _ = writeln!(
            s,
            r#"<polyline points="{}" fill="none" stroke="steelblue" stroke-width="1.5"/>"#,
            pts.join(" ")
        );
    }
    s.push_str("</svg>\n");
    s
}

fn tick(v: f64) -> String {
    if v != 0.0 && (v.abs() >= 1e5 || v.abs() < 1e-3) {
        format!("{v:.2e}")
    } else {
        format!("{}", (v * 1000.0).round() / 1000.0)
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Cumulative regret against the episode index.
pub fn regret_svg(records: &[EpisodeRecord]) -> String {
    let pts: Vec<(f64, f64)> = records
        .iter()
        .map(|r| (r.episode as f64, r.cumulative_regret))
        .collect();
    line_plot_svg("cumulative regret", "episode", "regret", &pts)
}

/// Mean final regret against the swept value, both on log scales.
pub fn sweep_svg(table: &SweepTable) -> String {
    let pts: Vec<(f64, f64)> = table
        .rows
        .iter()
        .filter(|r| r.mean_regret > 0.0)
        .map(|r| ((r.value as f64).ln(), r.mean_regret.ln()))
        .collect();
    let title = match table.slope {
        Some(s) => format!("mean final regret vs {} (log-log slope {s:.3})", table.axis),
        None => format!("mean final regret vs {}", table.axis),
    };
    line_plot_svg(&title, &format!("ln {}", table.axis), "ln regret", &pts)
}

/// Writes the requested formats of a run into `dir`.
pub fn emit_run(
    dir: &Path,
    config: Option<&ExperimentConfig>,
    output: &RunOutput,
    formats: &[OutputFormat],
) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    for f in formats {
        match f {
            OutputFormat::Csv => {
                let p = dir.join("episodes.csv");
                write_records_csv(fs::File::create(&p)?, &output.records)?;
                written.push(p);
            }
            OutputFormat::Json => {
                let p = dir.join("summary.json");
                write_summary_json(fs::File::create(&p)?, &SummaryDocument::new(config, output))?;
                written.push(p);
                let p = dir.join("summary.schema.json");
                fs::write(&p, SUMMARY_SCHEMA)?;
                written.push(p);
            }
            OutputFormat::Svg => {
                let p = dir.join("regret.svg");
                fs::write(&p, regret_svg(&output.records))?;
                written.push(p);
            }
        }
    }
    Ok(written)
}

/// Writes the requested formats of a sweep into `dir`.
pub fn emit_sweep(dir: &Path, table: &SweepTable, formats: &[OutputFormat]) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    for f in formats {
        let p = match f {
            OutputFormat::Csv => {
                let p = dir.join("sweep.csv");
                write_sweep_csv(fs::File::create(&p)?, table)?;
                p
            }
            OutputFormat::Json => {
                let p = dir.join("sweep.json");
                let mut file = fs::File::create(&p)?;
                serde_json::to_writer_pretty(&mut file, table)?;
                writeln!(file)?;
                p
            }
            OutputFormat::Svg => {
                let p = dir.join("sweep.svg");
                fs::write(&p, sweep_svg(table))?;
                p
            }
        };
        written.push(p);
    }
    Ok(written)
}
