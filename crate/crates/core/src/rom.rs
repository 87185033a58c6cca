//! Reduced-order model of the PLL synchronization dynamics.
//!
//! With the inner current loop taken as ideal, the converter is a current
//! source and the PLL angle `δ` relative to the driving voltage obeys a
//! swing equation
//!
//! ```text
//! M_eq·δ̈ = T_m_eq − T_e_eq − D_eq·δ̇
//!
//! M_eq   = 1 − kp·L·id
//! T_m_eq = kp·(d(r·iq)/dt + d²(L·iq)/dt² + d(L·id)/dt·ω_g) + ki·(r·iq + d(L·iq)/dt + L·id·ω_g)
//! T_e_eq = ki·V·sin δ + kp·dV/dt·sin δ + M_eq·dω_g/dt
//! D_eq   = kp·(V·cos δ − d(L·id)/dt) − ki·L·id
//! ```
//!
//! whose coefficients move with the current references, the voltage and the
//! grid frequency. Gains act on a per-unit voltage error, so `kp` is in
//! rad/s per pu and `ki` in rad/s² per pu. The branch is given as per-unit
//! resistance `r_lg` and reactance `lg` at nominal frequency; the inductance
//! entering the equation is `L = lg / omega_base`, and `ω_g` (rad/s) enters the
//! cross-coupling as `L·ω_g`, the reactance at grid frequency. Setting
//! `omega_base = 1` evaluates the expressions above literally with `lg` as
//! the inductance.
//!
//! Inputs are piecewise linear, so integration is split at every breakpoint.
//! Two rules bridge a split:
//!
//! * a jump of the driving voltage phasor shifts `δ` by the change of its
//!   angle ([`apply_fault_event`]); the PLL angle itself is continuous;
//! * optionally ([`SolverConfig::rate_jump`]), the step in the PLL error
//!   voltage passes through the proportional path and steps `δ̇`
//!   ([`apply_input_step`]). This is the integral of the impulsive terms the
//!   equation acquires at a step input. Off by default, `δ̇` is continuous.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seqnet::{SequenceImpedance, SequencePhasor};
use crate::signal::{LinearPiece, PiecewiseLinearSignal};

/// Below this magnitude `M_eq` is treated as singular.
pub const SINGULAR_INERTIA: f64 = 1e-9;

/// Voltages below this magnitude carry no phase information.
pub const DEAD_BUS: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RomParams {
    pub kp: f64,
    pub ki: f64,
    pub lg: f64,
    pub r_lg: f64,
    pub omega_base: f64,
}

impl RomParams {
    pub fn validate(&self) -> Result<()> {
        let ok = self.ki > 0.0
            && self.kp >= 0.0
            && self.lg >= 0.0
            && self.r_lg >= 0.0
            && self.omega_base > 0.0
            && [self.kp, self.ki, self.lg, self.r_lg, self.omega_base]
                .iter()
                .all(|v| v.is_finite());
        if ok {
            Ok(())
        } else {
            Err(Error::Validation(format!("invalid ROM parameters {self:?}")))
        }
    }

    pub fn with_branch(mut self, z: &SequenceImpedance) -> Self {
        self.r_lg = z.r;
        self.lg = z.l;
        self
    }

    fn inductance(&self) -> f64 {
        self.lg / self.omega_base
    }
}

/// `delta` is the PLL angle minus the driving-voltage angle, integrated
/// unwrapped.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RomState {
    pub delta: f64,
    pub delta_dot: f64,
}

impl RomState {
    pub fn new(delta: f64, delta_dot: f64) -> Self {
        Self { delta, delta_dot }
    }

    /// `delta` wrapped to (−π, π].
    pub fn wrapped_delta(&self) -> f64 {
        wrap_angle(self.delta)
    }
}

pub fn wrap_angle(a: f64) -> f64 {
    use std::f64::consts::{PI, TAU};
    let w = a.rem_euclid(TAU);
    if w > PI {
        w - TAU
    } else {
        w
    }
}

/// Input values and rates at one instant.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct RomInputsAtT {
    pub id: f64,
    pub iq: f64,
    pub vg_mag: f64,
    pub omega_g: f64,
    pub d_id: f64,
    pub d_iq: f64,
    pub d_vg_mag: f64,
    pub d_omega_g: f64,
    pub d2_iq: f64,
}

impl RomInputsAtT {
    /// Constant inputs.
    pub fn steady(id: f64, iq: f64, vg_mag: f64, omega_g: f64) -> Self {
        Self { id, iq, vg_mag, omega_g, ..Default::default() }
    }

    pub fn is_finite(&self) -> bool {
        [
            self.id, self.iq, self.vg_mag, self.omega_g, self.d_id, self.d_iq, self.d_vg_mag,
            self.d_omega_g, self.d2_iq,
        ]
        .iter()
        .all(|v| v.is_finite())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Coefficients {
    pub m_eq: f64,
    pub t_m_eq: f64,
    pub t_e_eq: f64,
    pub d_eq: f64,
}

pub fn coefficients(state: &RomState, inp: &RomInputsAtT, p: &RomParams) -> Result<Coefficients> {
    let l = p.inductance();
    let (kp, ki, r) = (p.kp, p.ki, p.r_lg);
    let (sin_d, cos_d) = state.delta.sin_cos();
    let m_eq = 1.0 - kp * l * inp.id;
    if m_eq.abs() < SINGULAR_INERTIA {
        return Err(Error::SingularInertia { m_eq });
    }
    let t_m_eq = kp * (r * inp.d_iq + l * inp.d2_iq + l * inp.d_id * inp.omega_g)
        + ki * (r * inp.iq + l * inp.d_iq + l * inp.id * inp.omega_g);
    let t_e_eq = ki * inp.vg_mag * sin_d + kp * inp.d_vg_mag * sin_d + m_eq * inp.d_omega_g;
    let d_eq = kp * (inp.vg_mag * cos_d - l * inp.d_id) - ki * l * inp.id;
    Ok(Coefficients { m_eq, t_m_eq, t_e_eq, d_eq })
}

/// `(δ̇, δ̈)`.
pub fn rhs(state: &RomState, inp: &RomInputsAtT, p: &RomParams) -> Result<(f64, f64)> {
    let c = coefficients(state, inp, p)?;
    Ok((
        state.delta_dot,
        (c.t_m_eq - c.t_e_eq - c.d_eq * state.delta_dot) / c.m_eq,
    ))
}

/// PLL q-axis error voltage without its `δ̇`-proportional part.
pub fn error_voltage(delta: f64, inp: &RomInputsAtT, p: &RomParams) -> f64 {
    let l = p.inductance();
    -inp.vg_mag * delta.sin() + p.r_lg * inp.iq + l * inp.id * inp.omega_g + l * inp.d_iq
}

/// Equilibrium angle for constant inputs, on the branch with `cos δ > 0`.
pub fn equilibrium_delta(inp: &RomInputsAtT, p: &RomParams) -> Option<f64> {
    if inp.vg_mag < DEAD_BUS {
        return None;
    }
    let s = (p.r_lg * inp.iq + p.inductance() * inp.id * inp.omega_g) / inp.vg_mag;
    (s.abs() <= 1.0).then(|| s.asin())
}

/// Roots of `M_eq·s² + D_eq·s + ki·V·cos δ*` at an equilibrium.
pub fn linearized_roots(delta_eq: f64, inp: &RomInputsAtT, p: &RomParams) -> Result<[Complex64; 2]> {
    let c = coefficients(&RomState::new(delta_eq, 0.0), inp, p)?;
    let k = p.ki * inp.vg_mag * delta_eq.cos() + p.kp * inp.d_vg_mag * delta_eq.cos();
    let disc = Complex64::new(c.d_eq * c.d_eq - 4.0 * c.m_eq * k, 0.0).sqrt();
    let two_m = 2.0 * c.m_eq;
    Ok([(-c.d_eq - disc) / two_m, (-c.d_eq + disc) / two_m])
}

/// Re-references `δ` when the driving voltage phasor jumps; `δ̇` is kept.
pub fn apply_fault_event(
    state: &RomState,
    v_before: SequencePhasor,
    v_after: SequencePhasor,
) -> RomState {
    let before = v_before.angle();
    let after = if v_after.magnitude() < DEAD_BUS { before } else { v_after.angle() };
    RomState {
        delta: state.delta + (before - after),
        delta_dot: state.delta_dot,
    }
}

/// Steps `δ̇` by the proportional response to a step in the PLL error
/// voltage, `M⁺·δ̇⁺ = M⁻·δ̇⁻ + kp·(e⁺ − e⁻)`. `state_before` and
/// `state_after` differ only when the event also re-referenced `δ`.
pub fn apply_input_step(
    state_before: &RomState,
    state_after: &RomState,
    before: (&RomInputsAtT, &RomParams),
    after: (&RomInputsAtT, &RomParams),
) -> Result<RomState> {
    let m = |inp: &RomInputsAtT, p: &RomParams| {
        let m = 1.0 - p.kp * p.inductance() * inp.id;
        if m.abs() < SINGULAR_INERTIA {
            Err(Error::SingularInertia { m_eq: m })
        } else {
            Ok(m)
        }
    };
    let m_before = m(before.0, before.1)?;
    let m_after = m(after.0, after.1)?;
    let e_before = error_voltage(state_before.delta, before.0, before.1);
    let e_after = error_voltage(state_after.delta, after.0, after.1);
    Ok(RomState {
        delta: state_after.delta,
        delta_dot: (m_before * state_before.delta_dot + after.1.kp * (e_after - e_before)) / m_after,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub dt: f64,
    pub output_dt: f64,
    /// `|δ̇|` above this (rad/s) ends the run as diverged.
    pub divergence_bound: f64,
    pub rate_jump: bool,
}

impl SolverConfig {
    pub fn new(omega0: f64) -> Self {
        Self {
            dt: 50e-6,
            output_dt: 100e-6,
            divergence_bound: 10.0 * omega0,
            rate_jump: false,
        }
    }

    /// Output samples per step; `output_dt` must be a whole multiple of `dt`.
    pub fn decimation(&self) -> Result<usize> {
        if !(self.dt > 0.0 && self.output_dt >= self.dt) {
            return Err(Error::Validation(format!(
                "need 0 < dt <= output_dt, got dt = {} s, output_dt = {} s",
                self.dt, self.output_dt
            )));
        }
        let n = (self.output_dt / self.dt).round();
        if ((n * self.dt - self.output_dt) / self.output_dt).abs() > 1e-9 {
            return Err(Error::Validation(format!(
                "output_dt {} s is not a multiple of dt {} s",
                self.output_dt, self.dt
            )));
        }
        Ok(n as usize)
    }
}

/// Driving voltage and branch impedance valid from `t_start` on.
#[derive(Clone, Debug, PartialEq)]
pub struct RomSegment {
    pub t_start: f64,
    pub source: SequencePhasor,
    pub impedance: SequenceImpedance,
    pub label: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RomInputs {
    pub id: PiecewiseLinearSignal,
    pub iq: PiecewiseLinearSignal,
    /// Grid frequency in rad/s.
    pub omega_g: PiecewiseLinearSignal,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RomSchedule {
    /// Ordered by `t_start`; the first one applies from the start of the run.
    pub segments: Vec<RomSegment>,
    pub inputs: RomInputs,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RomSample {
    pub t: f64,
    /// Angle of the PLL relative to the grid frame (driving-voltage angle added back).
    pub delta: f64,
    pub delta_dot: f64,
    pub vg_mag: f64,
    pub omega_g: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum RunStatus {
    Completed,
    Diverged { t: f64 },
}

impl RunStatus {
    pub fn is_diverged(&self) -> bool {
        matches!(self, RunStatus::Diverged { .. })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RomRun {
    pub samples: Vec<RomSample>,
    pub status: RunStatus,
    /// `(t, label)` for every segment switch.
    pub events: Vec<(f64, String)>,
    pub final_state: RomState,
}

struct Pieces {
    id: LinearPiece,
    iq: LinearPiece,
    omega_g: LinearPiece,
}

impl RomInputs {
    fn pieces_at(&self, t: f64) -> Pieces {
        Pieces {
            id: self.id.piece_at(t),
            iq: self.iq.piece_at(t),
            omega_g: self.omega_g.piece_at(t),
        }
    }

    /// Values at `t` along the pieces valid on the left (`left = true`) or
    /// right of `t`.
    pub fn at(&self, t: f64, vg_mag: f64, left: bool) -> RomInputsAtT {
        let probe = if left { t - 1e-12 * t.abs().max(1.0) } else { t };
        Self::eval(&self.pieces_at(probe), t, vg_mag)
    }

    fn eval(p: &Pieces, t: f64, vg_mag: f64) -> RomInputsAtT {
        RomInputsAtT {
            id: p.id.value(t),
            iq: p.iq.value(t),
            vg_mag,
            omega_g: p.omega_g.value(t),
            d_id: p.id.slope,
            d_iq: p.iq.slope,
            d_vg_mag: 0.0,
            d_omega_g: p.omega_g.slope,
            d2_iq: 0.0,
        }
    }
}

fn rk4_step(
    state: &RomState,
    t0: f64,
    h: f64,
    inputs: &RomInputs,
    vg_mag: f64,
    p: &RomParams,
) -> Result<RomState> {
    let pieces = inputs.pieces_at(t0 + 0.5 * h);
    let f = |t: f64, s: &RomState| rhs(s, &RomInputs::eval(&pieces, t, vg_mag), p);
    let shift = |s: &RomState, k: (f64, f64), c: f64| RomState {
        delta: s.delta + c * k.0,
        delta_dot: s.delta_dot + c * k.1,
    };
    let k1 = f(t0, state)?;
    let k2 = f(t0 + 0.5 * h, &shift(state, k1, 0.5 * h))?;
    let k3 = f(t0 + 0.5 * h, &shift(state, k2, 0.5 * h))?;
    let k4 = f(t0 + h, &shift(state, k3, h))?;
    Ok(RomState {
        delta: state.delta + h / 6.0 * (k1.0 + 2.0 * k2.0 + 2.0 * k3.0 + k4.0),
        delta_dot: state.delta_dot + h / 6.0 * (k1.1 + 2.0 * k2.1 + 2.0 * k3.1 + k4.1),
    })
}

#[derive(Clone, Copy, PartialEq)]
enum Break {
    Segment(usize),
    Signal,
}

/// Integrates the swing equation from `t_start` to `t_end` with fixed-step
/// RK4 on the grid `t_start + k·dt`, splitting steps at events.
///
/// `initial` is referenced to the driving voltage of the segment active at
/// `t_start`; `params.lg` and `params.r_lg` are replaced per segment.
pub fn integrate(
    initial: RomState,
    schedule: &RomSchedule,
    params: &RomParams,
    solver: &SolverConfig,
    t_start: f64,
    t_end: f64,
) -> Result<RomRun> {
    let decimation = solver.decimation()?;
    if schedule.segments.is_empty() {
        return Err(Error::Validation("ROM schedule has no network segment".into()));
    }
    if schedule.segments.windows(2).any(|w| w[1].t_start <= w[0].t_start) {
        return Err(Error::Validation("ROM segments must be time-ordered".into()));
    }
    let dt = solver.dt;
    let eps = 1e-9 * dt;

    let mut seg = schedule
        .segments
        .iter()
        .rposition(|s| s.t_start <= t_start + eps)
        .unwrap_or(0);
    let mut breaks: Vec<(f64, Break)> = schedule
        .segments
        .iter()
        .enumerate()
        .filter(|(_, s)| s.t_start > t_start + eps && s.t_start < t_end - eps)
        .map(|(i, s)| (s.t_start, Break::Segment(i)))
        .collect();
    let inputs = &schedule.inputs;
    for sig in [&inputs.id, &inputs.iq, &inputs.omega_g] {
        breaks.extend(
            sig.breakpoints()
                .filter(|&t| t > t_start + eps && t < t_end - eps)
                .map(|t| (t, Break::Signal)),
        );
    }
    breaks.sort_by(|a, b| a.0.total_cmp(&b.0));
    // One entry per instant, carrying the latest segment that starts there.
    let mut merged: Vec<(f64, Break)> = Vec::with_capacity(breaks.len());
    for (tb, kind) in breaks {
        match merged.last_mut() {
            Some(last) if tb - last.0 <= eps => {
                if let Break::Segment(i) = kind {
                    last.1 = match last.1 {
                        Break::Segment(j) => Break::Segment(i.max(j)),
                        Break::Signal => Break::Segment(i),
                    };
                }
            }
            _ => merged.push((tb, kind)),
        }
    }
    let breaks = merged;

    let mut ref_angle = schedule.segments[seg].source.angle();
    let mut p = params.with_branch(&schedule.segments[seg].impedance);
    let mut vg = schedule.segments[seg].source.magnitude();
    let mut state = initial;
    let mut samples = Vec::new();
    let mut events = Vec::new();
    let sample = |t: f64, s: &RomState, vg: f64, ref_angle: f64| RomSample {
        t,
        delta: s.delta + ref_angle,
        delta_dot: s.delta_dot,
        vg_mag: vg,
        omega_g: inputs.omega_g.value(t),
    };
    samples.push(sample(t_start, &state, vg, ref_angle));

    let n_steps = ((t_end - t_start) / dt - 1e-9).ceil().max(0.0) as usize;
    let mut t = t_start;
    let mut next_break = 0;
    let mut status = RunStatus::Completed;
    for k in 0..n_steps {
        let t_next = (t_start + (k + 1) as f64 * dt).min(t_end);
        while next_break < breaks.len() && breaks[next_break].0 <= t_next + eps {
            let (tb, kind) = breaks[next_break];
            if tb > t + eps {
                state = rk4_step(&state, t, tb - t, inputs, vg, &p)?;
                t = tb;
            }
            let before_inputs = inputs.at(tb, vg, true);
            let before_params = p;
            let before_state = state;
            if let Break::Segment(i) = kind {
                if i > seg {
                    seg = i;
                    let s = &schedule.segments[i];
                    state = apply_fault_event(
                        &state,
                        SequencePhasor::from_polar(1.0, ref_angle),
                        s.source,
                    );
                    if s.source.magnitude() >= DEAD_BUS {
                        ref_angle = s.source.angle();
                    }
                    vg = s.source.magnitude();
                    p = params.with_branch(&s.impedance);
                    events.push((tb, s.label.clone()));
                }
            }
            if solver.rate_jump {
                let after_inputs = inputs.at(tb, vg, false);
                state = apply_input_step(
                    &before_state,
                    &state,
                    (&before_inputs, &before_params),
                    (&after_inputs, &p),
                )?;
            }
            next_break += 1;
        }
        if t_next > t + eps {
            state = rk4_step(&state, t, t_next - t, inputs, vg, &p)?;
        }
        t = t_next;
        let diverged = !(state.delta_dot.abs() <= solver.divergence_bound) || !state.delta.is_finite();
        if diverged || (k + 1) % decimation == 0 || k + 1 == n_steps {
            samples.push(sample(t, &state, vg, ref_angle));
        }
        if diverged {
            status = RunStatus::Diverged { t };
            break;
        }
    }
    Ok(RomRun { samples, status, events, final_state: state })
}

/// True when `|δ̇|` stays below `rate` for the final `hold` seconds (at
/// least) of a run that did not diverge, counted from `t_from`.
pub fn is_settled(samples: &[(f64, f64)], status: RunStatus, t_from: f64, rate: f64, hold: f64) -> bool {
    if status.is_diverged() {
        return false;
    }
    let Some(&(t_end, _)) = samples.last() else {
        return false;
    };
    let last_violation = samples
        .iter()
        .filter(|(t, d)| *t >= t_from && !(d.abs() < rate))
        .map(|(t, _)| *t)
        .fold(t_from, f64::max);
    t_end - last_violation >= hold - 1e-12
}

/// Default settling test: `|δ̇| < 0.5 rad/s` sustained for 0.2 s.
pub const SETTLE_RATE: f64 = 0.5;
pub const SETTLE_HOLD: f64 = 0.2;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ClearingTime {
    pub cct: f64,
    /// Last stable and first unstable clearing time bracketing `cct`.
    pub bracket: (f64, f64),
    /// Runs spent inside the window, endpoints excluded.
    pub bisection_runs: usize,
}

/// Bisects the fault clearing time between a stable `window.0` and an
/// unstable `window.1` until the bracket is no wider than `tol`.
///
/// `stable(t_clear)` runs the scenario cleared at `t_clear` and classifies it.
pub fn critical_clearing_time<F>(mut stable: F, window: (f64, f64), tol: f64) -> Result<ClearingTime>
where
    F: FnMut(f64) -> Result<bool>,
{
    let (mut lo, mut hi) = window;
    if !(tol > 0.0 && hi > lo) {
        return Err(Error::Validation(format!(
            "clearing-time search needs tol > 0 and an increasing window, got {window:?}, tol {tol}"
        )));
    }
    if !stable(lo)? || stable(hi)? {
        return Err(Error::BracketInvalid { lo, hi });
    }
    let mut runs = 0;
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        runs += 1;
        if stable(mid)? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(ClearingTime { cct: 0.5 * (lo + hi), bracket: (lo, hi), bisection_runs: runs })
}
