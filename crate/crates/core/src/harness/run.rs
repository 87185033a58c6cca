//! Event schedule shared by both models, and the runs themselves.

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::refmodel::{self, RefModelConfig, RefSchedule, RefSegment};
use crate::rom::{self, RomInputs, RomInputsAtT, RomParams, RomSchedule, RomSegment, RomState, RunStatus};
use crate::seqnet::{CurrentRefs, SequenceImpedance, TerminalModel};
use crate::signal::PiecewiseLinearSignal;

use super::scenario::Scenario;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ModelKind {
    Rom,
    Refmodel,
    Both,
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rom" => Ok(Self::Rom),
            "refmodel" => Ok(Self::Refmodel),
            "both" => Ok(Self::Both),
            other => Err(Error::Validation(format!("unknown model `{other}`"))),
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Rom => "rom",
            Self::Refmodel => "refmodel",
            Self::Both => "both",
        })
    }
}

/// One output sample, the CSV row.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrajectoryRow {
    pub t: f64,
    pub delta: f64,
    pub delta_dot: f64,
    pub vf_pos_mag: f64,
    pub vf_pos_ang: f64,
    pub vf_neg_mag: f64,
    pub omega_g: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub label: String,
    pub model: String,
    pub scenario_hash: String,
    /// Strictly increasing in `t`.
    pub rows: Vec<TrajectoryRow>,
    pub events: Vec<(f64, String)>,
    pub status: RunStatus,
}

impl Trajectory {
    pub fn rates(&self) -> Vec<(f64, f64)> {
        self.rows.iter().map(|r| (r.t, r.delta_dot)).collect()
    }

    pub fn t_end(&self) -> Option<f64> {
        self.rows.last().map(|r| r.t)
    }
}

/// Network segment with the references held over it.
#[derive(Clone, Debug, PartialEq)]
pub struct Stage {
    pub t_start: f64,
    pub network: TerminalModel,
    pub label: String,
}

/// Network segments and reference signals both models follow.
#[derive(Clone, Debug, PartialEq)]
pub struct Timeline {
    pub stages: Vec<Stage>,
    pub series: SequenceImpedance,
    pub id: PiecewiseLinearSignal,
    pub iq: PiecewiseLinearSignal,
    pub iq_neg: PiecewiseLinearSignal,
    pub omega_g: PiecewiseLinearSignal,
}

impl Timeline {
    pub fn refs_at(&self, t: f64) -> CurrentRefs {
        CurrentRefs::new(self.id.value(t), self.iq.value(t), self.iq_neg.value(t))
    }

    pub fn stage_at(&self, t: f64) -> &Stage {
        let i = self.stages.iter().rposition(|s| s.t_start <= t + 1e-12).unwrap_or(0);
        &self.stages[i]
    }

    /// Fault-bus sequence voltages for the PLL angle `delta` (grid frame).
    pub fn fault_bus_voltages(&self, t: f64, delta: f64) -> (Complex64, Complex64) {
        let stage = self.stage_at(t);
        let refs = self.refs_at(t);
        let i_pos = refs.i_pos() * Complex64::from_polar(1.0, delta);
        stage.network.voltages(i_pos, stage.network.negative_injection(refs.iq_neg))
    }
}

struct StepSignal(Vec<(f64, f64)>);

impl StepSignal {
    fn new(v0: f64) -> Self {
        Self(vec![(0.0, v0)])
    }

    fn go(&mut self, t: f64, v: f64) {
        let (t_last, v_last) = *self.0.last().expect("seeded");
        if v == v_last {
            return;
        }
        if t > t_last {
            self.0.push((t, v_last));
        }
        self.0.push((t, v));
    }

    fn ramp(&mut self, t0: f64, t1: f64, v: f64) {
        let (t_last, v_last) = *self.0.last().expect("seeded");
        if t0 > t_last {
            self.0.push((t0, v_last));
        }
        self.0.push((t1, v));
    }

    fn finish(self) -> Result<PiecewiseLinearSignal> {
        PiecewiseLinearSignal::new(self.0)
    }
}

/// Healthy network, faulted from `t_on`, healthy again from `t_clear`.
/// References step with the network; after clearance the active current
/// recovers at the grid-code ramp rate.
pub fn timeline(sc: &Scenario) -> Result<Timeline> {
    let vg = sc.vg_complex();
    let healthy = TerminalModel::healthy(vg, &sc.zset);
    let faulted = TerminalModel::faulted(sc.fault.kind, vg, &sc.zset, sc.zf_pu())?;
    let pre = sc.prefault_currents;
    let during = sc.resolve_fault_currents()?;

    let mut stages = vec![Stage { t_start: 0.0, network: healthy, label: "pre-fault".into() }];
    let t_on = sc.fault.t_on;
    stages.push(Stage {
        t_start: t_on,
        network: faulted,
        label: format!("fault on {}", sc.fault.kind.label()),
    });
    let mut id = StepSignal::new(pre.id_pos);
    let mut iq = StepSignal::new(pre.iq_pos);
    let mut iq_neg = StepSignal::new(pre.iq_neg);
    id.go(t_on, during.id_pos);
    iq.go(t_on, during.iq_pos);
    iq_neg.go(t_on, during.iq_neg);
    if let Some(tc) = sc.fault.t_clear {
        stages.push(Stage { t_start: tc, network: healthy, label: "fault cleared".into() });
        let ramp = sc.id_post_ramp();
        if ramp.is_finite() && during.id_pos != pre.id_pos {
            id.ramp(tc, tc + (pre.id_pos - during.id_pos).abs() / ramp, pre.id_pos);
        } else {
            id.go(tc, pre.id_pos);
        }
        iq.go(tc, pre.iq_pos);
        iq_neg.go(tc, pre.iq_neg);
    }
    Ok(Timeline {
        stages,
        series: sc.series,
        id: id.finish()?,
        iq: iq.finish()?,
        iq_neg: iq_neg.finish()?,
        omega_g: sc.grid_frequency.clone(),
    })
}

fn to_trajectory(
    sc: &Scenario,
    model: &str,
    rows: Vec<TrajectoryRow>,
    events: Vec<(f64, String)>,
    status: RunStatus,
) -> Trajectory {
    Trajectory {
        label: sc.label.clone(),
        model: model.into(),
        scenario_hash: sc.hash.clone(),
        rows,
        events,
        status,
    }
}

/// Driving source and branch the ROM sees over one stage: the Thevenin
/// equivalent at the PLL bus with the stage's negative-sequence current.
pub fn rom_segment(tl: &Timeline, stage: &Stage) -> RomSegment {
    let refs = tl.refs_at(stage.t_start);
    let (e, z) = stage.network.behind(&tl.series).positive_thevenin(refs.iq_neg);
    RomSegment {
        t_start: stage.t_start,
        source: e.into(),
        impedance: SequenceImpedance::new(z.re, z.im),
        label: stage.label.clone(),
    }
}

pub fn rom_schedule(tl: &Timeline) -> RomSchedule {
    RomSchedule {
        segments: tl.stages.iter().map(|s| rom_segment(tl, s)).collect(),
        inputs: RomInputs { id: tl.id.clone(), iq: tl.iq.clone(), omega_g: tl.omega_g.clone() },
    }
}

pub fn rom_params(sc: &Scenario) -> RomParams {
    RomParams { kp: sc.pll.kp, ki: sc.pll.ki, lg: 0.0, r_lg: 0.0, omega_base: sc.omega0() }
}

pub fn run_rom(sc: &Scenario) -> Result<Trajectory> {
    let tl = timeline(sc)?;
    let schedule = rom_schedule(&tl);
    let params = rom_params(sc);
    params.validate()?;
    let first = &schedule.segments[0];
    let p0 = params.with_branch(&first.impedance);
    let inp = RomInputsAtT::steady(tl.id.value(0.0), tl.iq.value(0.0), first.source.magnitude(), tl.omega_g.value(0.0));
    let delta0 = rom::equilibrium_delta(&inp, &p0)
        .ok_or_else(|| Error::Validation("no synchronous equilibrium at the initial operating point".into()))?;
    let run = rom::integrate(RomState::new(delta0, 0.0), &schedule, &params, &sc.solver, 0.0, sc.t_end)?;
    let rows = run
        .samples
        .iter()
        .map(|s| {
            let (vp, vn) = tl.fault_bus_voltages(s.t, s.delta);
            TrajectoryRow {
                t: s.t,
                delta: s.delta,
                delta_dot: s.delta_dot,
                vf_pos_mag: vp.norm(),
                vf_pos_ang: vp.arg(),
                vf_neg_mag: vn.norm(),
                omega_g: s.omega_g,
            }
        })
        .collect();
    Ok(to_trajectory(sc, "rom", rows, run.events, run.status))
}

pub fn refmodel_config(sc: &Scenario) -> Result<RefModelConfig> {
    Ok(RefModelConfig {
        pll: sc.pll,
        omega0: sc.omega0(),
        notch: sc.notch_design(sc.refmodel_dt)?,
        cc_tau: sc.cc_tau,
        dt: sc.refmodel_dt,
        output_dt: sc.solver.output_dt,
        divergence_bound: sc.solver.divergence_bound,
        integrator: sc.refmodel_integrator,
    })
}

pub fn refmodel_schedule(tl: &Timeline) -> RefSchedule {
    RefSchedule {
        segments: tl
            .stages
            .iter()
            .map(|s| RefSegment {
                t_start: s.t_start,
                network: s.network,
                series: tl.series,
                label: s.label.clone(),
            })
            .collect(),
        id: tl.id.clone(),
        iq: tl.iq.clone(),
        iq_neg: tl.iq_neg.clone(),
        omega_g: tl.omega_g.clone(),
    }
}

pub fn run_refmodel(sc: &Scenario) -> Result<Trajectory> {
    run_refmodel_with(sc, &refmodel_config(sc)?)
}

/// Reference run with an explicit model configuration.
pub fn run_refmodel_with(sc: &Scenario, cfg: &RefModelConfig) -> Result<Trajectory> {
    let tl = timeline(sc)?;
    let schedule = refmodel_schedule(&tl);
    let s0 = refmodel::initial_state(&schedule, cfg.omega0, 0.0)?;
    let run = refmodel::simulate(s0, &schedule, cfg, 0.0, sc.t_end)?;
    let rows = run
        .samples
        .iter()
        .map(|s| TrajectoryRow {
            t: s.t,
            delta: s.delta,
            delta_dot: s.delta_dot,
            vf_pos_mag: s.vf_pos.magnitude(),
            vf_pos_ang: s.vf_pos.angle(),
            vf_neg_mag: s.vf_neg.magnitude(),
            omega_g: s.omega_g,
        })
        .collect();
    Ok(to_trajectory(sc, "refmodel", rows, run.events, run.status))
}

pub fn run_model(sc: &Scenario, model: ModelKind) -> Result<Trajectory> {
    match model {
        ModelKind::Rom => run_rom(sc),
        ModelKind::Refmodel => run_refmodel(sc),
        ModelKind::Both => Err(Error::Validation("a single model is required here".into())),
    }
}

/// Time from which the post-event settling is judged.
pub fn settle_from(sc: &Scenario) -> f64 {
    sc.fault.t_clear.unwrap_or(sc.fault.t_on)
}

/// Not diverged and `|δ̇|` settled after the last event.
pub fn is_stable(sc: &Scenario, traj: &Trajectory) -> bool {
    rom::is_settled(&traj.rates(), traj.status, settle_from(sc), rom::SETTLE_RATE, rom::SETTLE_HOLD)
}
