//! Piecewise-linear time signals.
//!
//! Current references, the grid frequency and similar inputs are described by
//! breakpoints joined with straight lines and held constant outside the first
//! and last breakpoint. Between breakpoints the first derivative is constant
//! and the second derivative is zero; breakpoints are where the integrators
//! split their steps. Two breakpoints may share a time, making a step: the
//! signal takes the second value from that instant on.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PiecewiseLinearSignal {
    points: Vec<(f64, f64)>,
}

/// The straight line a signal follows on one interval.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LinearPiece {
    pub t0: f64,
    pub v0: f64,
    pub slope: f64,
}

impl LinearPiece {
    pub fn value(&self, t: f64) -> f64 {
        self.v0 + self.slope * (t - self.t0)
    }
}

impl PiecewiseLinearSignal {
    pub fn new(points: Vec<(f64, f64)>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::Signal("no breakpoints".into()));
        }
        if points.iter().any(|(t, v)| !t.is_finite() || !v.is_finite()) {
            return Err(Error::Signal("non-finite breakpoint".into()));
        }
        if points.windows(2).any(|w| w[1].0 < w[0].0) {
            return Err(Error::Signal("breakpoint times must not decrease".into()));
        }
        if points.windows(3).any(|w| w[2].0 == w[0].0) {
            return Err(Error::Signal("at most two breakpoints may share a time".into()));
        }
        Ok(Self { points })
    }

    pub fn constant(value: f64) -> Self {
        Self {
            points: vec![(0.0, value)],
        }
    }

    pub fn points(&self) -> &[(f64, f64)] {
        &self.points
    }

    /// Times at which the slope or the value may change, each once.
    pub fn breakpoints(&self) -> impl Iterator<Item = f64> + '_ {
        let pts = &self.points;
        pts.iter()
            .enumerate()
            .filter(move |(i, p)| *i == 0 || pts[i - 1].0 != p.0)
            .map(|(_, p)| p.0)
    }

    /// Line followed on the interval containing `t`, right-continuous at
    /// breakpoints.
    pub fn piece_at(&self, t: f64) -> LinearPiece {
        let pts = &self.points;
        let idx = pts.partition_point(|p| p.0 <= t);
        if idx == 0 {
            return LinearPiece { t0: pts[0].0, v0: pts[0].1, slope: 0.0 };
        }
        if idx == pts.len() {
            let last = pts[pts.len() - 1];
            return LinearPiece { t0: last.0, v0: last.1, slope: 0.0 };
        }
        let (t0, v0) = pts[idx - 1];
        let (t1, v1) = pts[idx];
        LinearPiece { t0, v0, slope: (v1 - v0) / (t1 - t0) }
    }

    pub fn value(&self, t: f64) -> f64 {
        self.piece_at(t).value(t)
    }

    pub fn derivative(&self, t: f64) -> f64 {
        self.piece_at(t).slope
    }

    pub fn second_derivative(&self, _t: f64) -> f64 {
        0.0
    }

    /// Exact integral over `[a, b]`.
    pub fn integral(&self, a: f64, b: f64) -> f64 {
        if b < a {
            return -self.integral(b, a);
        }
        let mut cuts: Vec<f64> = vec![a];
        cuts.extend(self.breakpoints().filter(|&t| t > a && t < b));
        cuts.push(b);
        cuts.windows(2)
            .map(|w| {
                let mid = 0.5 * (w[0] + w[1]);
                self.piece_at(mid).value(mid) * (w[1] - w[0])
            })
            .sum()
    }
}
