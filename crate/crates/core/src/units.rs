//! Per-unit system.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

/// System base quantities. Voltages are line-to-line rms, the phase peak
/// value is derived where the PLL gains need it.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BaseQuantities {
    pub s_base: f64,
    pub v_base_ll: f64,
    pub f0: f64,
}

impl BaseQuantities {
    /// 12 MVA, 690 V, 50 Hz.
    pub const TURBINE_12MVA: BaseQuantities = BaseQuantities {
        s_base: 12.0e6,
        v_base_ll: 690.0,
        f0: 50.0,
    };

    pub fn is_valid(&self) -> bool {
        [self.s_base, self.v_base_ll, self.f0]
            .iter()
            .all(|v| v.is_finite() && *v > 0.0)
    }

    /// Base impedance in ohm.
    pub fn z_base(&self) -> f64 {
        self.v_base_ll * self.v_base_ll / self.s_base
    }

    /// Nominal angular frequency in rad/s.
    pub fn omega0(&self) -> f64 {
        2.0 * PI * self.f0
    }

    /// Peak line-to-neutral voltage, the base of a volt-denominated PLL gain.
    pub fn v_phase_peak(&self) -> f64 {
        self.v_base_ll * (2.0_f64 / 3.0).sqrt()
    }
}

/// Converts an impedance in ohm to per-unit.
pub fn to_pu_impedance(value_ohm: f64, base: &BaseQuantities) -> f64 {
    value_ohm / base.z_base()
}
