//! Sequence networks at the wind-turbine terminal.
//!
//! The converter is a current source: it injects `i_pos` into the positive
//! sequence network and a purely reactive `j·iq_neg` into the negative one;
//! the zero sequence is left open. Each sequence sees the grid through its
//! own impedance, and a fault at the terminal couples the three networks
//! through the fault impedance.
//!
//! Two routes give the post-fault positive-sequence voltage:
//!
//! * [`postfault_voltage_pos`], closed forms driven by the
//!   pre-fault voltages of [`prefault_voltage_pos`] and [`prefault_voltage_neg`];
//! * [`solve_coupled_network`], which assembles the circuit equations of each
//!   fault topology and solves them numerically.
//!
//! They coincide for SLG faults, and for DLG faults whenever the positive and
//! negative grid impedances are equal. The DL closed form keeps the zero
//! sequence impedance in its denominator, so it departs from the circuit
//! whenever that impedance is non-zero. [`check_closed_form`] reports both
//! values and flags such cases instead of picking one.
//!
//! Phasors live in the synchronous dq frame with d on the real axis.

use std::fmt;

use nalgebra::{SMatrix, SVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::units::{to_pu_impedance, BaseQuantities};

/// Denominators and pivots below this magnitude count as degenerate.
pub const DEGENERATE_TOL: f64 = 1e-12;

/// Relative disagreement above which closed form and circuit are flagged.
pub const DISAGREEMENT_FLAG: f64 = 1e-6;

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SequencePhasor {
    pub re: f64,
    pub im: f64,
}

impl SequencePhasor {
    pub const ZERO: SequencePhasor = SequencePhasor { re: 0.0, im: 0.0 };

    pub const fn new(re: f64, im: f64) -> Self {
        Self { re, im }
    }

    pub fn from_polar(magnitude: f64, angle: f64) -> Self {
        Complex64::from_polar(magnitude, angle).into()
    }

    pub fn magnitude(&self) -> f64 {
        self.re.hypot(self.im)
    }

    pub fn angle(&self) -> f64 {
        self.im.atan2(self.re)
    }

    pub fn to_complex(self) -> Complex64 {
        Complex64::new(self.re, self.im)
    }

    pub fn is_finite(&self) -> bool {
        self.re.is_finite() && self.im.is_finite()
    }
}

impl From<Complex64> for SequencePhasor {
    fn from(c: Complex64) -> Self {
        Self { re: c.re, im: c.im }
    }
}

impl From<SequencePhasor> for Complex64 {
    fn from(p: SequencePhasor) -> Self {
        p.to_complex()
    }
}

impl fmt::Display for SequencePhasor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{:.6} {} j{:.6} ({:.6} pu at {:.4} rad)",
            self.re,
            if self.im < 0.0 { '-' } else { '+' },
            self.im.abs(),
            self.magnitude(),
            self.angle()
        )
    }
}

/// Series R-L branch in per-unit; `l` is the reactance at nominal frequency.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SequenceImpedance {
    pub r: f64,
    pub l: f64,
}

impl SequenceImpedance {
    pub const ZERO: SequenceImpedance = SequenceImpedance { r: 0.0, l: 0.0 };

    pub const fn new(r: f64, l: f64) -> Self {
        Self { r, l }
    }

    /// `r + j·ω_pu·l`.
    pub fn at(&self, omega_pu: f64) -> Complex64 {
        Complex64::new(self.r, omega_pu * self.l)
    }

    /// Impedance at nominal frequency.
    pub fn z(&self) -> Complex64 {
        self.at(1.0)
    }

    pub fn is_valid(&self) -> bool {
        self.r.is_finite() && self.l.is_finite() && self.r >= 0.0 && self.l >= 0.0
    }

    pub fn is_valid_branch(&self) -> bool {
        self.is_valid() && (self.r > 0.0 || self.l > 0.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SequenceImpedanceSet {
    pub pos: SequenceImpedance,
    pub neg: SequenceImpedance,
    pub zero: SequenceImpedance,
}

impl SequenceImpedanceSet {
    /// Passive symmetric network: all three sequences share one impedance.
    pub fn symmetric(z: SequenceImpedance) -> Self {
        Self { pos: z, neg: z, zero: z }
    }

    pub fn is_valid(&self) -> bool {
        self.pos.is_valid() && self.neg.is_valid() && self.zero.is_valid()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FaultKind {
    /// Phase A to ground.
    #[serde(rename = "SLG_A")]
    SlgA,
    /// Phases B and C to ground.
    #[serde(rename = "DLG_BC")]
    DlgBc,
    /// Phase B to phase C.
    #[serde(rename = "DL_BC")]
    DlBc,
    #[serde(rename = "BALANCED_3PH")]
    Balanced3Ph,
}

impl FaultKind {
    pub const ALL: [FaultKind; 4] = [
        FaultKind::SlgA,
        FaultKind::DlgBc,
        FaultKind::DlBc,
        FaultKind::Balanced3Ph,
    ];

    pub fn label(&self) -> &'static str {
        match self {
            FaultKind::SlgA => "SLG_A",
            FaultKind::DlgBc => "DLG_BC",
            FaultKind::DlBc => "DL_BC",
            FaultKind::Balanced3Ph => "BALANCED_3PH",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ImpedanceUnit {
    Ohm,
    Pu,
}

/// Fault impedance tagged with its unit.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FaultImpedance {
    pub value: f64,
    pub unit: ImpedanceUnit,
}

impl FaultImpedance {
    pub fn ohm(value: f64) -> Self {
        Self { value, unit: ImpedanceUnit::Ohm }
    }

    pub fn pu(value: f64) -> Self {
        Self { value, unit: ImpedanceUnit::Pu }
    }

    /// Purely resistive per-unit fault impedance.
    pub fn to_pu(&self, base: &BaseQuantities) -> f64 {
        match self.unit {
            ImpedanceUnit::Ohm => to_pu_impedance(self.value, base),
            ImpedanceUnit::Pu => self.value,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FaultSpec {
    pub kind: FaultKind,
    pub zf: FaultImpedance,
    pub t_on: f64,
    pub t_clear: Option<f64>,
}

impl FaultSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.zf.value.is_finite() && self.zf.value >= 0.0) {
            return Err(Error::Validation(format!(
                "fault impedance must be finite and >= 0, got {}",
                self.zf.value
            )));
        }
        if !self.t_on.is_finite() {
            return Err(Error::Validation("fault t_on must be finite".into()));
        }
        if let Some(tc) = self.t_clear {
            if !(tc > self.t_on) {
                return Err(Error::Validation(format!(
                    "fault t_clear {tc} s must be after t_on {} s",
                    self.t_on
                )));
            }
        }
        Ok(())
    }
}

/// Pre-fault positive-sequence terminal voltage `vg + i_pos·z_pos`.
pub fn prefault_voltage_pos(
    vg: SequencePhasor,
    i_pos: SequencePhasor,
    z_pos: SequenceImpedance,
) -> SequencePhasor {
    (vg.to_complex() + i_pos.to_complex() * z_pos.z()).into()
}

/// Pre-fault negative-sequence terminal voltage `(j·iq_neg)·z_neg`; the
/// negative-sequence active current is held at zero.
pub fn prefault_voltage_neg(iq_neg: f64, z_neg: SequenceImpedance) -> SequencePhasor {
    (Complex64::new(0.0, iq_neg) * z_neg.z()).into()
}

/// Closed-form post-fault positive-sequence voltage for SLG, DLG and DL
/// faults, evaluated term by term without simplification.
pub fn postfault_voltage_pos(
    kind: FaultKind,
    v_pre_pos: SequencePhasor,
    v_pre_neg: SequencePhasor,
    zset: &SequenceImpedanceSet,
    zf: f64,
) -> Result<SequencePhasor> {
    let (vp, vn) = (v_pre_pos.to_complex(), v_pre_neg.to_complex());
    let (z1, z2, z0) = (zset.pos.z(), zset.neg.z(), zset.zero.z());
    let zf = Complex64::new(zf, 0.0);
    let checked = |den: Complex64| {
        if den.norm() < DEGENERATE_TOL {
            Err(Error::DivisionDegenerate { kind, magnitude: den.norm() })
        } else {
            Ok(den)
        }
    };
    let v = match kind {
        FaultKind::SlgA => {
            let den = checked(z1 + z2 + z0 + 3.0 * zf)?;
            vp - (vp + vn) / den * z1
        }
        FaultKind::DlgBc => {
            let den = checked(z2 + 2.0 * z0 + 6.0 * zf)?;
            (z0 + 3.0 * zf) / den * (vp + vn)
        }
        FaultKind::DlBc => {
            let den = checked(z1 + z2 + z0 + zf)?;
            vp - (vp - vn) / den * z1
        }
        FaultKind::Balanced3Ph => return Err(Error::UnsupportedKind(kind)),
    };
    Ok(v.into())
}

/// Positive-sequence injection plus reactive negative-sequence current.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CurrentRefs {
    pub id_pos: f64,
    pub iq_pos: f64,
    pub iq_neg: f64,
}

impl CurrentRefs {
    pub const fn new(id_pos: f64, iq_pos: f64, iq_neg: f64) -> Self {
        Self { id_pos, iq_pos, iq_neg }
    }

    pub fn i_pos(&self) -> Complex64 {
        Complex64::new(self.id_pos, self.iq_pos)
    }
}

/// Terminal voltages of the three sequences.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SequenceVoltages {
    pub pos: SequencePhasor,
    pub neg: SequencePhasor,
    pub zero: SequencePhasor,
}

/// Solves the coupled sequence circuit for the given fault topology.
///
/// `vg` is the grid source behind the positive-sequence impedance and the
/// currents are taken in the same frame as `vg`, the negative-sequence one
/// as `j·iq_neg`.
pub fn solve_coupled_network(
    kind: FaultKind,
    vg: SequencePhasor,
    currents: &CurrentRefs,
    zset: &SequenceImpedanceSet,
    zf: f64,
) -> Result<SequenceVoltages> {
    solve_with_injections(
        kind,
        vg.to_complex(),
        currents.i_pos(),
        Complex64::new(0.0, currents.iq_neg),
        zset,
        zf,
    )
}

/// Circuit solve with arbitrary complex injections into the positive and
/// negative networks.
///
/// Unknowns are the terminal voltages `V0, V1, V2` and the fault currents
/// `I0, I1, I2` leaving the terminal. Each sequence contributes
/// `V_k + Z_k·I_k = E_k + Z_k·J_k` (source `E_k`, injection `J_k`); the fault
/// topology contributes three boundary conditions.
pub fn solve_with_injections(
    kind: FaultKind,
    vg: Complex64,
    i_pos: Complex64,
    i_neg: Complex64,
    zset: &SequenceImpedanceSet,
    zf: f64,
) -> Result<SequenceVoltages> {
    let zero = Complex64::new(0.0, 0.0);
    let one = Complex64::new(1.0, 0.0);
    let zf = Complex64::new(zf, 0.0);
    let z = [zset.zero.z(), zset.pos.z(), zset.neg.z()];
    let rhs_net = [zero, vg + z[1] * i_pos, z[2] * i_neg];

    let mut a = SMatrix::<Complex64, 6, 6>::zeros();
    let mut b = SVector::<Complex64, 6>::zeros();
    for k in 0..3 {
        a[(k, k)] = one;
        a[(k, 3 + k)] = z[k];
        b[k] = rhs_net[k];
    }
    // Boundary rows 3..6 over [V0, V1, V2, I0, I1, I2].
    let rows: [[Complex64; 6]; 3] = match kind {
        FaultKind::SlgA => [
            [zero, zero, zero, -one, one, zero],
            [zero, zero, zero, -one, zero, one],
            [one, one, one, zero, -3.0 * zf, zero],
        ],
        FaultKind::DlgBc => [
            [zero, zero, zero, one, one, one],
            [zero, one, -one, zero, zero, zero],
            [one, -one, zero, -3.0 * zf, zero, zero],
        ],
        FaultKind::DlBc => [
            [zero, zero, zero, one, zero, zero],
            [zero, zero, zero, zero, one, one],
            [zero, one, -one, zero, -zf, zero],
        ],
        FaultKind::Balanced3Ph => [
            [one, zero, zero, -zf, zero, zero],
            [zero, one, zero, zero, -zf, zero],
            [zero, zero, one, zero, zero, -zf],
        ],
    };
    for (r, row) in rows.iter().enumerate() {
        for (c, v) in row.iter().enumerate() {
            a[(3 + r, c)] = *v;
        }
    }
    // Row equilibration keeps the pivot test meaningful when zf is huge.
    for r in 0..6 {
        let scale = (0..6).map(|c| a[(r, c)].norm()).fold(0.0, f64::max);
        if scale > 0.0 {
            for c in 0..6 {
                a[(r, c)] /= scale;
            }
            b[r] /= scale;
        }
    }
    let lu = a.lu();
    let pivot = (0..6).map(|i| lu.u()[(i, i)].norm()).fold(f64::INFINITY, f64::min);
    if !(pivot > DEGENERATE_TOL) {
        return Err(Error::SingularNetwork { pivot });
    }
    let x = lu.solve(&b).ok_or(Error::SingularNetwork { pivot })?;
    Ok(SequenceVoltages {
        zero: x[0].into(),
        pos: x[1].into(),
        neg: x[2].into(),
    })
}

/// Closed form and circuit solve side by side.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ClosedFormCheck {
    pub kind: FaultKind,
    pub closed_form: SequencePhasor,
    pub circuit: SequencePhasor,
    /// `|closed - circuit| / max(|circuit|, 1e-6)`.
    pub relative_discrepancy: f64,
    /// Set when the discrepancy exceeds [`DISAGREEMENT_FLAG`].
    pub flagged: bool,
}

/// Evaluates both routes for the positive-sequence post-fault voltage.
pub fn check_closed_form(
    kind: FaultKind,
    vg: SequencePhasor,
    currents: &CurrentRefs,
    zset: &SequenceImpedanceSet,
    zf: f64,
) -> Result<ClosedFormCheck> {
    let v_pre_pos = prefault_voltage_pos(
        vg,
        SequencePhasor::new(currents.id_pos, currents.iq_pos),
        zset.pos,
    );
    let v_pre_neg = prefault_voltage_neg(currents.iq_neg, zset.neg);
    let closed_form = postfault_voltage_pos(kind, v_pre_pos, v_pre_neg, zset, zf)?;
    let circuit = solve_coupled_network(kind, vg, currents, zset, zf)?.pos;
    let relative_discrepancy = (closed_form.to_complex() - circuit.to_complex()).norm()
        / circuit.magnitude().max(1e-6);
    Ok(ClosedFormCheck {
        kind,
        closed_form,
        circuit,
        relative_discrepancy,
        flagged: relative_discrepancy > DISAGREEMENT_FLAG,
    })
}

/// Names the network property under which the closed form is known to depart
/// from the circuit, or `None` when the two must agree.
pub fn known_disagreement(kind: FaultKind, zset: &SequenceImpedanceSet) -> Option<&'static str> {
    let (z1, z2, z0) = (zset.pos.z(), zset.neg.z(), zset.zero.z());
    match kind {
        FaultKind::DlgBc if (z1 - z2).norm() > DEGENERATE_TOL * z1.norm().max(z2.norm()) => {
            Some("DLG closed form assumes equal positive and negative grid impedances")
        }
        FaultKind::DlBc if z0.norm() > 0.0 => {
            Some("DL closed form carries the zero-sequence impedance in its denominator")
        }
        _ => None,
    }
}

/// Affine map from converter injections to terminal sequence voltages:
/// `v_pos = e_pos + z_pp·i_pos + z_pn·i_neg` and likewise for `v_neg`.
///
/// Built once per network topology by superposition of circuit solves; the
/// dynamic models evaluate it every step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TerminalModel {
    pub e_pos: Complex64,
    pub e_neg: Complex64,
    pub z_pp: Complex64,
    pub z_pn: Complex64,
    pub z_np: Complex64,
    pub z_nn: Complex64,
}

impl TerminalModel {
    /// Healthy network: the sequences are decoupled.
    pub fn healthy(vg: Complex64, zset: &SequenceImpedanceSet) -> Self {
        let zero = Complex64::new(0.0, 0.0);
        Self {
            e_pos: vg,
            e_neg: zero,
            z_pp: zset.pos.z(),
            z_pn: zero,
            z_np: zero,
            z_nn: zset.neg.z(),
        }
    }

    pub fn faulted(
        kind: FaultKind,
        vg: Complex64,
        zset: &SequenceImpedanceSet,
        zf: f64,
    ) -> Result<Self> {
        let zero = Complex64::new(0.0, 0.0);
        let one = Complex64::new(1.0, 0.0);
        let src = solve_with_injections(kind, vg, zero, zero, zset, zf)?;
        let pos = solve_with_injections(kind, zero, one, zero, zset, zf)?;
        let neg = solve_with_injections(kind, zero, zero, one, zset, zf)?;
        Ok(Self {
            e_pos: src.pos.into(),
            e_neg: src.neg.into(),
            z_pp: pos.pos.into(),
            z_np: pos.neg.into(),
            z_pn: neg.pos.into(),
            z_nn: neg.neg.into(),
        })
    }

    /// Adds a series impedance between the terminal and the measuring bus.
    pub fn behind(mut self, series: &SequenceImpedance) -> Self {
        self.z_pp += series.z();
        self.z_nn += series.z();
        self
    }

    pub fn voltages(&self, i_pos: Complex64, i_neg: Complex64) -> (Complex64, Complex64) {
        (
            self.e_pos + self.z_pp * i_pos + self.z_pn * i_neg,
            self.e_neg + self.z_np * i_pos + self.z_nn * i_neg,
        )
    }

    /// Angle the negative-sequence current controller aligns to: that of the
    /// negative-sequence voltage the fault alone produces, zero if none.
    pub fn negative_reference_angle(&self) -> f64 {
        if self.e_neg.norm() > 1e-9 {
            self.e_neg.arg()
        } else {
            0.0
        }
    }

    /// Negative-sequence current phasor for a reactive reference `iq_neg`.
    pub fn negative_injection(&self, iq_neg: f64) -> Complex64 {
        Complex64::new(0.0, iq_neg) * Complex64::from_polar(1.0, self.negative_reference_angle())
    }

    /// Thevenin source and impedance seen by the positive-sequence injection
    /// with the negative-sequence current held at `iq_neg`.
    pub fn positive_thevenin(&self, iq_neg: f64) -> (Complex64, Complex64) {
        (self.e_pos + self.z_pn * self.negative_injection(iq_neg), self.z_pp)
    }
}
