//! ROM-versus-reference metrics and signal analysis helpers.

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};

use super::run::{Trajectory, TrajectoryRow};

/// Samples within this long after an event are left out of the metrics.
pub const EVENT_EXCLUSION: f64 = 2e-3;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ComparisonReport {
    pub rmse_delta: f64,
    pub rmse_delta_dot: f64,
    pub peak_delta_error: f64,
    /// `rmse_delta_dot` over the peak-to-peak reference `δ̇` in the window.
    pub normalized_rmse: f64,
    /// `|δ|` difference at the end of the common time range.
    pub final_delta_error: f64,
    pub window: (f64, f64),
    pub samples: usize,
}

/// Linear interpolation of a row at `t`; `None` outside the sampled range.
pub fn interpolate(rows: &[TrajectoryRow], t: f64) -> Option<TrajectoryRow> {
    let first = rows.first()?;
    let last = rows.last()?;
    if t < first.t || t > last.t {
        return None;
    }
    let i = rows.partition_point(|r| r.t <= t);
    if i == rows.len() {
        return Some(*last);
    }
    let (a, b) = (rows[i - 1], rows[i]);
    let w = (t - a.t) / (b.t - a.t);
    let lerp = |x: f64, y: f64| x + w * (y - x);
    Some(TrajectoryRow {
        t,
        delta: lerp(a.delta, b.delta),
        delta_dot: lerp(a.delta_dot, b.delta_dot),
        vf_pos_mag: lerp(a.vf_pos_mag, b.vf_pos_mag),
        vf_pos_ang: lerp(a.vf_pos_ang, b.vf_pos_ang),
        vf_neg_mag: lerp(a.vf_neg_mag, b.vf_neg_mag),
        omega_g: lerp(a.omega_g, b.omega_g),
    })
}

/// Compares `rom` with `reference` on the ROM's sample times from `t_from`
/// to the end of the common range, skipping [`EVENT_EXCLUSION`] after each
/// time in `events`.
pub fn compare(
    rom: &Trajectory,
    reference: &Trajectory,
    t_from: f64,
    events: &[f64],
) -> Result<ComparisonReport> {
    let (Some(r0), Some(f0)) = (rom.rows.first(), reference.rows.first()) else {
        return Err(Error::Validation("cannot compare an empty trajectory".into()));
    };
    let lo = t_from.max(r0.t).max(f0.t);
    let hi = rom.t_end().unwrap().min(reference.t_end().unwrap());
    let excluded = |t: f64| events.iter().any(|&e| t >= e && t < e + EVENT_EXCLUSION);
    let pairs: Vec<(TrajectoryRow, TrajectoryRow)> = rom
        .rows
        .iter()
        .filter(|r| r.t >= lo && r.t <= hi && !excluded(r.t))
        .filter_map(|r| interpolate(&reference.rows, r.t).map(|f| (*r, f)))
        .collect();
    if pairs.is_empty() {
        return Err(Error::Validation(format!("comparison window [{lo}, {hi}] s holds no samples")));
    }
    let n = pairs.len() as f64;
    let rms = |f: &dyn Fn(&(TrajectoryRow, TrajectoryRow)) -> f64| {
        (pairs.iter().map(|p| f(p).powi(2)).sum::<f64>() / n).sqrt()
    };
    let rmse_delta = rms(&|(a, b)| a.delta - b.delta);
    let rmse_delta_dot = rms(&|(a, b)| a.delta_dot - b.delta_dot);
    let peak_delta_error = pairs.iter().map(|(a, b)| (a.delta - b.delta).abs()).fold(0.0, f64::max);
    let (min, max) = pairs
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), (_, b)| (lo.min(b.delta_dot), hi.max(b.delta_dot)));
    let spread = max - min;
    let normalized_rmse = if spread > 0.0 {
        rmse_delta_dot / spread
    } else if rmse_delta_dot == 0.0 {
        0.0
    } else {
        f64::INFINITY
    };
    let end_rom = interpolate(&rom.rows, hi).unwrap();
    let end_ref = interpolate(&reference.rows, hi).unwrap();
    Ok(ComparisonReport {
        rmse_delta,
        rmse_delta_dot,
        peak_delta_error,
        normalized_rmse,
        final_delta_error: (end_rom.delta - end_ref.delta).abs(),
        window: (lo, hi),
        samples: pairs.len(),
    })
}

/// Amplitude of the `freq_hz` component of `x(t)` over `[t0, t1]`, taken on
/// the whole number of periods that fits, least-squares line removed.
pub fn tone_amplitude(samples: &[(f64, f64)], freq_hz: f64, t0: f64, t1: f64) -> f64 {
    let periods = ((t1 - t0) * freq_hz).floor();
    let t1 = t0 + periods / freq_hz;
    // Half-open window so the sample count spans whole periods.
    let win: Vec<(f64, f64)> = samples.iter().copied().filter(|(t, _)| *t >= t0 && *t < t1 - 1e-12).collect();
    if win.is_empty() || periods < 1.0 {
        return 0.0;
    }
    let n = win.len() as f64;
    let t_mean = win.iter().map(|s| s.0).sum::<f64>() / n;
    let x_mean = win.iter().map(|s| s.1).sum::<f64>() / n;
    let stt: f64 = win.iter().map(|s| (s.0 - t_mean).powi(2)).sum();
    let stx: f64 = win.iter().map(|s| (s.0 - t_mean) * (s.1 - x_mean)).sum();
    let slope = if stt > 0.0 { stx / stt } else { 0.0 };
    let w = 2.0 * std::f64::consts::PI * freq_hz;
    let acc: Complex64 = win
        .iter()
        .map(|(t, x)| (x - x_mean - slope * (t - t_mean)) * Complex64::from_polar(1.0, -w * t))
        .sum();
    2.0 * acc.norm() / n
}

/// Mean of `|a.δ − b.δ|` over `a`'s samples inside `[t0, t1]`.
pub fn mean_abs_delta_difference(a: &Trajectory, b: &Trajectory, t0: f64, t1: f64) -> f64 {
    let diffs: Vec<f64> = a
        .rows
        .iter()
        .filter(|r| r.t >= t0 && r.t <= t1)
        .filter_map(|r| interpolate(&b.rows, r.t).map(|f| (r.delta - f.delta).abs()))
        .collect();
    if diffs.is_empty() {
        0.0
    } else {
        diffs.iter().sum::<f64>() / diffs.len() as f64
    }
}
