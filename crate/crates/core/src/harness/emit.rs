//! CSV and SVG output.

use std::fmt::Write as _;
use std::io::{BufRead, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::rom::RunStatus;

use super::compare::ComparisonReport;
use super::run::{Trajectory, TrajectoryRow};
use super::SweepRow;

pub const TRAJECTORY_COLUMNS: [&str; 7] = [
    "t_s",
    "delta_rad",
    "delta_dot_radps",
    "vf_pos_mag_pu",
    "vf_pos_ang_rad",
    "vf_neg_mag_pu",
    "omega_g_radps",
];

fn status_text(s: RunStatus) -> String {
    match s {
        RunStatus::Completed => "completed".into(),
        RunStatus::Diverged { t } => format!("diverged {t}"),
    }
}

/// Writes the trajectory as CSV: `#` comment lines (scenario, hash, model,
/// status, events) then the header and one row per sample. Floats use the
/// shortest representation that reads back exactly.
pub fn write_trajectory_csv<W: Write>(traj: &Trajectory, out: W) -> Result<()> {
    let mut out = out;
    writeln!(out, "# scenario {}", traj.label)?;
    writeln!(out, "# scenario_sha256 {}", traj.scenario_hash)?;
    writeln!(out, "# model {}", traj.model)?;
    writeln!(out, "# status {}", status_text(traj.status))?;
    for (t, label) in &traj.events {
        writeln!(out, "# event {t} {label}")?;
    }
    let mut w = csv::Writer::from_writer(out);
    w.write_record(TRAJECTORY_COLUMNS)?;
    for r in &traj.rows {
        w.write_record(
            [r.t, r.delta, r.delta_dot, r.vf_pos_mag, r.vf_pos_ang, r.vf_neg_mag, r.omega_g].map(|v| v.to_string()),
        )?;
    }
    w.flush()?;
    Ok(())
}

pub fn trajectory_csv_string(traj: &Trajectory) -> Result<String> {
    let mut buf = Vec::new();
    write_trajectory_csv(traj, &mut buf)?;
    Ok(String::from_utf8(buf).expect("CSV output is UTF-8"))
}

/// Reads a file written by [`write_trajectory_csv`].
pub fn read_trajectory_csv<R: BufRead>(input: R) -> Result<Trajectory> {
    let mut text = String::new();
    let mut input = input;
    input.read_to_string(&mut text)?;
    let mut traj = Trajectory {
        label: String::new(),
        model: String::new(),
        scenario_hash: String::new(),
        rows: Vec::new(),
        events: Vec::new(),
        status: RunStatus::Completed,
    };
    let bad = |m: String| Error::Parse { path: "<csv>".into(), message: m };
    for line in text.lines().filter_map(|l| l.strip_prefix("# ")) {
        let (key, rest) = line.split_once(' ').unwrap_or((line, ""));
        match key {
            "scenario" => traj.label = rest.into(),
            "scenario_sha256" => traj.scenario_hash = rest.into(),
            "model" => traj.model = rest.into(),
            "status" => {
                if let Some(t) = rest.strip_prefix("diverged ") {
                    let t = t.parse().map_err(|_| bad(format!("bad status `{rest}`")))?;
                    traj.status = RunStatus::Diverged { t };
                }
            }
            "event" => {
                let (t, label) = rest.split_once(' ').unwrap_or((rest, ""));
                let t = t.parse().map_err(|_| bad(format!("bad event `{rest}`")))?;
                traj.events.push((t, label.into()));
            }
            _ => {}
        }
    }
    let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(text.as_bytes());
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    if header != TRAJECTORY_COLUMNS {
        return Err(bad(format!("unexpected header {header:?}")));
    }
    for rec in r.records() {
        let rec = rec?;
        let v: Vec<f64> = rec
            .iter()
            .map(|s| s.parse::<f64>().map_err(|_| bad(format!("bad number `{s}`"))))
            .collect::<Result<_>>()?;
        if v.len() != 7 {
            return Err(bad(format!("expected 7 columns, got {}", v.len())));
        }
        traj.rows.push(TrajectoryRow {
            t: v[0],
            delta: v[1],
            delta_dot: v[2],
            vf_pos_mag: v[3],
            vf_pos_ang: v[4],
            vf_neg_mag: v[5],
            omega_g: v[6],
        });
    }
    Ok(traj)
}

pub fn write_report_csv<W: Write>(report: &ComparisonReport, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["metric", "value"])?;
    let rows = [
        ("rmse_delta_rad", report.rmse_delta),
        ("rmse_delta_dot_radps", report.rmse_delta_dot),
        ("peak_delta_error_rad", report.peak_delta_error),
        ("normalized_rmse", report.normalized_rmse),
        ("final_delta_error_rad", report.final_delta_error),
        ("window_start_s", report.window.0),
        ("window_end_s", report.window.1),
        ("samples", report.samples as f64),
    ];
    for (k, v) in rows {
        w.write_record([k.to_string(), v.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_sweep_csv<W: Write>(rows: &[SweepRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["value", "stable", "status", "cct_s"])?;
    for r in rows {
        w.write_record([
            r.value.to_string(),
            r.stable.to_string(),
            status_text(r.status),
            r.cct.map_or(String::new(), |c| c.to_string()),
        ])?;
    }
    w.flush()?;
    Ok(())
}

const COLORS: [&str; 4] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];

/// Two stacked panels, `δ` and `δ̇` against time, one polyline per
/// trajectory and a dashed line per event of the first trajectory.
pub fn trajectory_svg(trajs: &[&Trajectory]) -> String {
    let (w, h, margin) = (800.0, 300.0, 50.0);
    let rows = || trajs.iter().flat_map(|t| t.rows.iter());
    let (t_min, t_max) = rows().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), r| (a.min(r.t), b.max(r.t)));
    let (t_min, t_max) = if t_min < t_max { (t_min, t_max) } else { (0.0, 1.0) };
    let mut svg = String::new();
    let total_h = 2.0 * h + margin;
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{total_h}" viewBox="0 0 {w} {total_h}">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let panels: [(&str, fn(&TrajectoryRow) -> f64); 2] =
        [("delta [rad]", |r| r.delta), ("delta_dot [rad/s]", |r| r.delta_dot)];
    for (p, (name, field)) in panels.iter().enumerate() {
        let y0 = p as f64 * (h + margin / 2.0);
        let (v_min, v_max) = rows()
            .map(field)
            .filter(|v| v.is_finite())
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
        let (v_min, v_max) = if v_min < v_max { (v_min, v_max) } else if v_min.is_finite() { (v_min - 1.0, v_min + 1.0) } else { (-1.0, 1.0) };
        let x = |t: f64| margin + (t - t_min) / (t_max - t_min) * (w - 2.0 * margin);
        let y = |v: f64| y0 + margin / 2.0 + (v_max - v) / (v_max - v_min) * (h - margin);
        let _ = writeln!(
            svg,
            r#"<g class="panel"><rect x="{margin}" y="{}" width="{}" height="{}" fill="none" stroke="black"/>"#,
            y0 + margin / 2.0,
            w - 2.0 * margin,
            h - margin
        );
        let _ = writeln!(svg, r#"<text x="{margin}" y="{}" font-size="12">{name}</text>"#, y0 + margin / 2.0 - 6.0);
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{}" font-size="10">{v_max:.4}</text><text x="{}" y="{}" font-size="10">{v_min:.4}</text>"#,
            2.0,
            y0 + margin / 2.0 + 10.0,
            2.0,
            y0 + h - margin / 2.0
        );
        if let Some(first) = trajs.first() {
            for (t, label) in &first.events {
                let _ = writeln!(
                    svg,
                    r#"<line class="event" x1="{0:.2}" x2="{0:.2}" y1="{1:.2}" y2="{2:.2}" stroke="gray" stroke-dasharray="4 3"><title>{3}</title></line>"#,
                    x(*t),
                    y0 + margin / 2.0,
                    y0 + h - margin / 2.0,
                    label
                );
            }
        }
        for (i, traj) in trajs.iter().enumerate() {
            let color = COLORS[i % COLORS.len()];
            let pts: Vec<String> = traj
                .rows
                .iter()
                .filter(|r| field(r).is_finite())
                .map(|r| format!("{:.2},{:.2}", x(r.t), y(field(r))))
                .collect();
            let _ = writeln!(
                svg,
                r#"<polyline class="series" data-label="{}" fill="none" stroke="{color}" stroke-width="1.2" points="{}"/>"#,
                traj.model,
                pts.join(" ")
            );
            let _ = writeln!(
                svg,
                r#"<text x="{}" y="{}" font-size="11" fill="{color}">{}</text>"#,
                w - margin - 80.0,
                y0 + margin / 2.0 + 14.0 * (i as f64 + 1.0),
                traj.model
            );
        }
        let _ = writeln!(svg, "</g>");
    }
    let _ = writeln!(svg, "</svg>");
    svg
}

pub fn write_file(path: &Path, contents: &[u8]) -> Result<()> {
    std::fs::write(path, contents)?;
    Ok(())
}
