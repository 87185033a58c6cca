//! Full-order reference model.
//!
//! Stands in for a detailed converter simulation at the synchronization time
//! scale:
//!
//! * current references pass through a first-order lag standing for the
//!   closed current loop;
//! * the network is solved quasi-statically every step through a
//!   [`TerminalModel`], with the positive-sequence current rotated from the
//!   PLL frame into the grid frame;
//! * the resulting sequence voltages are synthesized into phase voltages and
//!   Park-transformed at the PLL angle;
//! * the q-axis voltage runs through an optional notch at twice the grid
//!   frequency, then a PI regulator sets the PLL frequency.
//!
//! Two discretizations are offered. [`RefIntegrator::SampledEuler`] is a
//! sampled controller: the prewarped biquad notch runs once per sample and
//! the PI integrator and PLL angle take forward-Euler steps. Its global error
//! is first order in the step. [`RefIntegrator::ContinuousRk4`] integrates
//! the analog notch prototype, the PI, the PLL angle and the current lags as
//! one ODE with classical RK4. In both, the grid angle integrates the
//! grid-frequency signal exactly and network changes take effect at the
//! first step at or after their time.

pub mod notch;
pub mod transforms;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rom::RunStatus;
use crate::seqnet::{CurrentRefs, SequenceImpedance, SequencePhasor, TerminalModel};
use crate::signal::PiecewiseLinearSignal;

pub use notch::{notch_frequency_response, Biquad, NotchFilterDesign};
pub use transforms::{inverse_park, park, synthesize_abc};

/// PI gains on the per-unit q-axis voltage: rad/s and rad/s² per pu.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PllGains {
    pub kp: f64,
    pub ki: f64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RefIntegrator {
    #[default]
    SampledEuler,
    ContinuousRk4,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RefModelConfig {
    pub pll: PllGains,
    pub omega0: f64,
    /// `None` runs the PLL without the notch.
    pub notch: Option<NotchFilterDesign>,
    /// Current-loop time constant in s; zero makes the currents ideal.
    pub cc_tau: f64,
    pub dt: f64,
    pub output_dt: f64,
    pub divergence_bound: f64,
    pub integrator: RefIntegrator,
}

impl RefModelConfig {
    pub fn validate(&self) -> Result<()> {
        if let Some(n) = &self.notch {
            n.validate()?;
            if (n.sample_dt - self.dt).abs() > 1e-12 * self.dt {
                return Err(Error::Validation(format!(
                    "notch sample time {} s differs from the step {} s",
                    n.sample_dt, self.dt
                )));
            }
        }
        if !(self.cc_tau >= 0.0 && self.dt > 0.0 && self.output_dt >= self.dt) {
            return Err(Error::Validation(format!(
                "need cc_tau >= 0 and 0 < dt <= output_dt (cc_tau {}, dt {}, output_dt {})",
                self.cc_tau, self.dt, self.output_dt
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct RefModelState {
    pub theta_pll: f64,
    /// Integral part of the PLL frequency deviation, rad/s.
    pub pll_integrator: f64,
    pub notch_states: [f64; 2],
    pub id_lag: f64,
    pub iq_lag: f64,
    pub iqneg_lag: f64,
    pub theta_g: f64,
}

impl RefModelState {
    pub fn delta(&self) -> f64 {
        self.theta_pll - self.theta_g
    }
}

/// Network valid from `t_start` on: sequence voltages at the fault bus and
/// the series branch from there to the PLL bus.
#[derive(Clone, Debug, PartialEq)]
pub struct RefSegment {
    pub t_start: f64,
    pub network: TerminalModel,
    pub series: SequenceImpedance,
    pub label: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RefSchedule {
    pub segments: Vec<RefSegment>,
    pub id: PiecewiseLinearSignal,
    pub iq: PiecewiseLinearSignal,
    pub iq_neg: PiecewiseLinearSignal,
    /// Grid frequency, rad/s.
    pub omega_g: PiecewiseLinearSignal,
}

impl RefSchedule {
    pub fn refs_at(&self, t: f64) -> CurrentRefs {
        CurrentRefs::new(self.id.value(t), self.iq.value(t), self.iq_neg.value(t))
    }
}

/// Algebraic quantities at one sample.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Observation {
    /// Fault-bus sequence voltages, grid frame.
    pub vf_pos: Complex64,
    pub vf_neg: Complex64,
    pub vq: f64,
    pub vq_filtered: f64,
    /// PLL frequency minus nominal, rad/s.
    pub d_omega: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RefSample {
    pub t: f64,
    pub delta: f64,
    pub delta_dot: f64,
    pub vf_pos: SequencePhasor,
    pub vf_neg: SequencePhasor,
    pub omega_g: f64,
    pub vq: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RefRun {
    pub samples: Vec<RefSample>,
    pub status: RunStatus,
    pub events: Vec<(f64, String)>,
    pub final_state: RefModelState,
}

/// One-sample model: notch filter, lag coefficients and configuration.
#[derive(Clone, Debug)]
pub struct RefModel {
    cfg: RefModelConfig,
    notch: Option<Biquad>,
    lag_alpha: f64,
}

impl RefModel {
    pub fn new(cfg: RefModelConfig) -> Result<Self> {
        cfg.validate()?;
        let notch = cfg.notch.map(|d| Biquad::new(d.coefficients()));
        let lag_alpha = if cfg.cc_tau > 0.0 { 1.0 - (-cfg.dt / cfg.cc_tau).exp() } else { 1.0 };
        Ok(Self { cfg, notch, lag_alpha })
    }

    pub fn config(&self) -> &RefModelConfig {
        &self.cfg
    }

    fn lagged(&self, s: &RefModelState, refs: &CurrentRefs) -> CurrentRefs {
        if self.cfg.cc_tau > 0.0 {
            CurrentRefs::new(s.id_lag, s.iq_lag, s.iqneg_lag)
        } else {
            *refs
        }
    }

    /// Network, synthesis, Park transform, notch output and PI output for
    /// the present state; nothing is advanced.
    pub fn observe(&self, s: &RefModelState, seg: &RefSegment, refs: &CurrentRefs) -> Observation {
        let cur = self.lagged(s, refs);
        let (vf_pos, vf_neg, vq) = measure(s.theta_pll, s.theta_g, &cur, seg);
        let vq_filtered = match self.cfg.integrator {
            RefIntegrator::SampledEuler => self.notch.as_ref().map_or(vq, |f| f.peek(vq)),
            RefIntegrator::ContinuousRk4 => self.cfg.notch.map_or(vq, |d| analog_notch_output(&d, vq, &s.notch_states)),
        };
        let d_omega = self.cfg.pll.kp * vq_filtered + s.pll_integrator;
        Observation { vf_pos, vf_neg, vq, vq_filtered, d_omega }
    }

    /// Advances one sample of length `dt`, `theta_g` by `grid_advance` (the
    /// integral of the grid frequency over the sample).
    pub fn step(
        &mut self,
        s: &RefModelState,
        obs: &Observation,
        refs: &CurrentRefs,
        grid_advance: f64,
    ) -> RefModelState {
        let dt = self.cfg.dt;
        let mut next = *s;
        if let Some(f) = self.notch.as_mut() {
            f.process(obs.vq);
            next.notch_states = f.state();
        }
        next.pll_integrator += self.cfg.pll.ki * obs.vq_filtered * dt;
        next.theta_pll += (self.cfg.omega0 + obs.d_omega) * dt;
        next.theta_g += grid_advance;
        let a = self.lag_alpha;
        next.id_lag += a * (refs.id_pos - s.id_lag);
        next.iq_lag += a * (refs.iq_pos - s.iq_lag);
        next.iqneg_lag += a * (refs.iq_neg - s.iqneg_lag);
        next
    }
}

/// Fault-bus sequence voltages and the q-axis voltage at the PLL bus.
fn measure(theta_pll: f64, theta_g: f64, cur: &CurrentRefs, seg: &RefSegment) -> (Complex64, Complex64, f64) {
    let rot = Complex64::from_polar(1.0, theta_pll - theta_g);
    let i_pos = cur.i_pos() * rot;
    let i_neg = seg.network.negative_injection(cur.iq_neg);
    let (vf_pos, vf_neg) = seg.network.voltages(i_pos, i_neg);
    let v_pos = vf_pos + seg.series.z() * i_pos;
    let v_neg = vf_neg + seg.series.z() * i_neg;
    let abc = synthesize_abc(v_pos.into(), v_neg.into(), theta_g);
    (vf_pos, vf_neg, park(abc, theta_pll).1)
}

/// Analog prototype `1 − 2ζω_n·s/(s² + 2ζω_n·s + ω_n²)` in controllable
/// form: `x₁' = x₂`, `x₂' = −ω_n²·x₁ − 2ζω_n·x₂ + u`, `y = u − 2ζω_n·x₂`.
fn analog_notch_output(d: &NotchFilterDesign, u: f64, x: &[f64; 2]) -> f64 {
    u - 2.0 * d.damping * d.center * x[1]
}

fn analog_notch_derivative(d: &NotchFilterDesign, u: f64, x: &[f64; 2]) -> [f64; 2] {
    [x[1], -d.center * d.center * x[0] - 2.0 * d.damping * d.center * x[1] + u]
}

impl RefModel {
    /// Derivative of the continuous state; `theta_g` is the grid angle at
    /// `t`, which is integrated outside.
    fn derivative(&self, s: &RefModelState, seg: &RefSegment, refs: &CurrentRefs) -> RefModelState {
        let cur = self.lagged(s, refs);
        let (_, _, vq) = measure(s.theta_pll, s.theta_g, &cur, seg);
        let (vq_f, notch) = match &self.cfg.notch {
            Some(d) => (analog_notch_output(d, vq, &s.notch_states), analog_notch_derivative(d, vq, &s.notch_states)),
            None => (vq, [0.0; 2]),
        };
        let lag = |r: f64, x: f64| if self.cfg.cc_tau > 0.0 { (r - x) / self.cfg.cc_tau } else { 0.0 };
        RefModelState {
            theta_pll: self.cfg.omega0 + self.cfg.pll.kp * vq_f + s.pll_integrator,
            pll_integrator: self.cfg.pll.ki * vq_f,
            notch_states: notch,
            id_lag: lag(refs.id_pos, s.id_lag),
            iq_lag: lag(refs.iq_pos, s.iq_lag),
            iqneg_lag: lag(refs.iq_neg, s.iqneg_lag),
            theta_g: 0.0,
        }
    }

    /// One classical RK4 step of the continuous controller from `t` to
    /// `t + h` on segment `seg`.
    fn rk4_step(&self, s: &RefModelState, t: f64, h: f64, schedule: &RefSchedule, seg: &RefSegment) -> RefModelState {
        let at = |tau: f64, base: &RefModelState, k: &RefModelState, c: f64| {
            let mut y = axpy(base, k, c);
            y.theta_g = s.theta_g + schedule.omega_g.integral(t, tau);
            y
        };
        // References along the step, the end point taken from the left so
        // a step at `t + h` belongs to the next step.
        let refs = |tau: f64| schedule.refs_at(if tau > t { tau - 1e-9 * h } else { tau });
        let f = |tau: f64, y: &RefModelState| self.derivative(y, seg, &refs(tau));
        let k1 = f(t, s);
        let k2 = f(t + 0.5 * h, &at(t + 0.5 * h, s, &k1, 0.5 * h));
        let k3 = f(t + 0.5 * h, &at(t + 0.5 * h, s, &k2, 0.5 * h));
        let k4 = f(t + h, &at(t + h, s, &k3, h));
        let mut next = *s;
        for (k, w) in [(&k1, 1.0), (&k2, 2.0), (&k3, 2.0), (&k4, 1.0)] {
            next = axpy(&next, k, w * h / 6.0);
        }
        next.theta_g = s.theta_g + schedule.omega_g.integral(t, t + h);
        next
    }
}

/// `y + c·k` over every state except the grid angle.
fn axpy(y: &RefModelState, k: &RefModelState, c: f64) -> RefModelState {
    RefModelState {
        theta_pll: y.theta_pll + c * k.theta_pll,
        pll_integrator: y.pll_integrator + c * k.pll_integrator,
        notch_states: [y.notch_states[0] + c * k.notch_states[0], y.notch_states[1] + c * k.notch_states[1]],
        id_lag: y.id_lag + c * k.id_lag,
        iq_lag: y.iq_lag + c * k.iq_lag,
        iqneg_lag: y.iqneg_lag + c * k.iqneg_lag,
        theta_g: y.theta_g,
    }
}

/// PLL angle relative to the grid at which the q-axis voltage vanishes, for
/// constant currents and no negative sequence in the PLL frame.
pub fn equilibrium_delta(seg: &RefSegment, refs: &CurrentRefs) -> Option<f64> {
    let e = seg.network.e_pos + seg.network.z_pn * seg.network.negative_injection(refs.iq_neg);
    let z = seg.network.z_pp + seg.series.z();
    if e.norm() < 1e-9 {
        return None;
    }
    let s = (z * refs.i_pos()).im / e.norm();
    (s.abs() <= 1.0).then(|| e.arg() + s.asin())
}

/// Steady state for the segment active at `t0`: locked PLL, settled lags,
/// grid angle zero.
pub fn initial_state(schedule: &RefSchedule, omega0: f64, t0: f64) -> Result<RefModelState> {
    let seg = active_segment(schedule, t0)?;
    let refs = schedule.refs_at(t0);
    let delta = equilibrium_delta(&schedule.segments[seg], &refs)
        .ok_or_else(|| Error::Validation("no synchronous equilibrium at the initial operating point".into()))?;
    Ok(RefModelState {
        theta_pll: delta,
        pll_integrator: schedule.omega_g.value(t0) - omega0,
        notch_states: [0.0; 2],
        id_lag: refs.id_pos,
        iq_lag: refs.iq_pos,
        iqneg_lag: refs.iq_neg,
        theta_g: 0.0,
    })
}

fn active_segment(schedule: &RefSchedule, t: f64) -> Result<usize> {
    if schedule.segments.is_empty() {
        return Err(Error::Validation("reference schedule has no network segment".into()));
    }
    Ok(schedule
        .segments
        .iter()
        .rposition(|s| s.t_start <= t + 1e-12)
        .unwrap_or(0))
}

/// Runs the reference model over `[t0, t_end]` from `initial` (whose notch
/// states are expected to be zero, the filter starting at rest).
pub fn simulate(
    initial: RefModelState,
    schedule: &RefSchedule,
    cfg: &RefModelConfig,
    t0: f64,
    t_end: f64,
) -> Result<RefRun> {
    let mut model = RefModel::new(*cfg)?;
    let dt = cfg.dt;
    let decimation = (cfg.output_dt / dt).round() as usize;
    if ((decimation as f64 * dt - cfg.output_dt) / cfg.output_dt).abs() > 1e-9 {
        return Err(Error::Validation(format!(
            "output_dt {} s is not a multiple of dt {} s",
            cfg.output_dt, dt
        )));
    }
    if schedule.segments.windows(2).any(|w| w[1].t_start <= w[0].t_start) {
        return Err(Error::Validation("reference segments must be time-ordered".into()));
    }
    let n_steps = ((t_end - t0) / dt - 1e-9).ceil().max(0.0) as usize;
    let mut seg = active_segment(schedule, t0)?;
    let mut state = initial;
    let mut samples = Vec::with_capacity(n_steps / decimation + 2);
    let mut events = Vec::new();
    let mut status = RunStatus::Completed;
    for n in 0..=n_steps {
        let t = (t0 + n as f64 * dt).min(t_end);
        while seg + 1 < schedule.segments.len() && schedule.segments[seg + 1].t_start <= t + 1e-9 * dt {
            seg += 1;
            events.push((t, schedule.segments[seg].label.clone()));
        }
        let refs = schedule.refs_at(t);
        let obs = model.observe(&state, &schedule.segments[seg], &refs);
        let omega_g = schedule.omega_g.value(t);
        let delta_dot = obs.d_omega - (omega_g - cfg.omega0);
        let diverged = !(delta_dot.abs() <= cfg.divergence_bound);
        if diverged || n % decimation == 0 || n == n_steps {
            samples.push(RefSample {
                t,
                delta: state.delta(),
                delta_dot,
                vf_pos: obs.vf_pos.into(),
                vf_neg: obs.vf_neg.into(),
                omega_g,
                vq: obs.vq,
            });
        }
        if diverged {
            status = RunStatus::Diverged { t };
            break;
        }
        if n == n_steps {
            break;
        }
        let t_next = (t0 + (n + 1) as f64 * dt).min(t_end);
        state = match cfg.integrator {
            RefIntegrator::SampledEuler => {
                let advance = schedule.omega_g.integral(t, t_next);
                model.step(&state, &obs, &refs, advance)
            }
            RefIntegrator::ContinuousRk4 => {
                model.rk4_step(&state, t, t_next - t, schedule, &schedule.segments[seg])
            }
        };
    }
    Ok(RefRun { samples, status, events, final_state: state })
}
