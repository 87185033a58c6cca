//! Second-order notch for the PLL error signal.
//!
//! Continuous prototype `H(s) = (s² + ω_n²) / (s² + 2ζω_n·s + ω_n²)`,
//! discretized with the bilinear transform prewarped at `ω_n` so that the
//! discrete null sits exactly on the center frequency.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NotchFilterDesign {
    /// Center frequency in rad/s.
    pub center: f64,
    /// Damping ratio `ζ`; the −3 dB width is about `2ζ·center`.
    pub damping: f64,
    pub sample_dt: f64,
}

/// Normalized coefficients, `a0 = 1`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BiquadCoefficients {
    pub b0: f64,
    pub b1: f64,
    pub b2: f64,
    pub a1: f64,
    pub a2: f64,
}

impl NotchFilterDesign {
    pub fn new(center: f64, damping: f64, sample_dt: f64) -> Result<Self> {
        let d = Self { center, damping, sample_dt };
        d.validate()?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.center > 0.0 && self.center.is_finite()) {
            return Err(Error::Validation(format!("notch center {} rad/s must be > 0", self.center)));
        }
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return Err(Error::Validation(format!("notch damping {} outside (0, 1]", self.damping)));
        }
        if !(self.sample_dt > 0.0 && self.sample_dt * self.center < PI) {
            return Err(Error::Validation(format!(
                "notch at {} rad/s aliases with sample time {} s",
                self.center, self.sample_dt
            )));
        }
        Ok(())
    }

    pub fn coefficients(&self) -> BiquadCoefficients {
        let wn = self.center;
        let k = wn / (0.5 * wn * self.sample_dt).tan();
        let (k2, w2) = (k * k, wn * wn);
        let a0 = k2 + 2.0 * self.damping * wn * k + w2;
        BiquadCoefficients {
            b0: (k2 + w2) / a0,
            b1: 2.0 * (w2 - k2) / a0,
            b2: (k2 + w2) / a0,
            a1: 2.0 * (w2 - k2) / a0,
            a2: (k2 - 2.0 * self.damping * wn * k + w2) / a0,
        }
    }

    /// Complex response of the discretized filter at `omega` rad/s.
    pub fn response(&self, omega: f64) -> Complex64 {
        let c = self.coefficients();
        let z1 = Complex64::from_polar(1.0, -omega * self.sample_dt);
        let z2 = z1 * z1;
        (c.b0 + c.b1 * z1 + c.b2 * z2) / (1.0 + c.a1 * z1 + c.a2 * z2)
    }
}

/// Magnitude in dB and phase in degrees of the discretized notch.
pub fn notch_frequency_response(d: &NotchFilterDesign, omega: f64) -> (f64, f64) {
    let h = d.response(omega);
    (20.0 * h.norm().log10(), h.arg().to_degrees())
}

/// Transposed direct-form II biquad.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Biquad {
    c: BiquadCoefficients,
    s1: f64,
    s2: f64,
}

impl Biquad {
    pub fn new(c: BiquadCoefficients) -> Self {
        Self { c, s1: 0.0, s2: 0.0 }
    }

    pub fn state(&self) -> [f64; 2] {
        [self.s1, self.s2]
    }

    /// Output for input `x` without touching the state.
    pub fn peek(&self, x: f64) -> f64 {
        self.c.b0 * x + self.s1
    }

    pub fn process(&mut self, x: f64) -> f64 {
        let y = self.peek(x);
        self.s1 = self.c.b1 * x - self.c.a1 * y + self.s2;
        self.s2 = self.c.b2 * x - self.c.a2 * y;
        y
    }
}
