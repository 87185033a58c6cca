//! Symmetrical-component synthesis and the amplitude-invariant Park transform.

use std::f64::consts::PI;

use crate::seqnet::SequencePhasor;

const SHIFT: f64 = 2.0 * PI / 3.0;

/// Instantaneous phase voltages of a positive plus a negative sequence set
/// at grid angle `theta_g`; there is no zero-sequence path at the terminal.
///
/// Both phasors share the `e^{jθ_g}` reference: phase `a` of either set is
/// `|v|·cos(θ_g + ∠v)`, phases `b` and `c` lag (positive) or lead
/// (negative) by 2π/3.
pub fn synthesize_abc(v_pos: SequencePhasor, v_neg: SequencePhasor, theta_g: f64) -> [f64; 3] {
    let (mp, ap) = (v_pos.magnitude(), v_pos.angle());
    let (mn, an) = (v_neg.magnitude(), v_neg.angle());
    let phase = |k: f64| mp * (theta_g + ap - k * SHIFT).cos() + mn * (theta_g + an + k * SHIFT).cos();
    [phase(0.0), phase(1.0), phase(-1.0)]
}

/// `(d, q)` of a three-phase set in the frame at `theta`.
pub fn park(abc: [f64; 3], theta: f64) -> (f64, f64) {
    let mut d = 0.0;
    let mut q = 0.0;
    for (v, k) in abc.iter().zip([0.0, 1.0, -1.0]) {
        let (s, c) = (theta - k * SHIFT).sin_cos();
        d += v * c;
        q -= v * s;
    }
    (2.0 / 3.0 * d, 2.0 / 3.0 * q)
}

pub fn inverse_park(d: f64, q: f64, theta: f64) -> [f64; 3] {
    let phase = |k: f64| {
        let (s, c) = (theta - k * SHIFT).sin_cos();
        d * c - q * s
    };
    [phase(0.0), phase(1.0), phase(-1.0)]
}
