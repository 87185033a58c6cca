//! Scenario runs, comparisons, sweeps and clearing-time searches.

pub mod compare;
pub mod emit;
pub mod run;
pub mod scenario;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::refmodel::{notch_frequency_response, NotchFilterDesign};
use crate::rom::{self, ClearingTime, RunStatus};
use crate::seqnet::{
    check_closed_form, known_disagreement, prefault_voltage_neg, prefault_voltage_pos,
    solve_coupled_network, FaultKind, SequencePhasor,
};

pub use compare::{compare, interpolate, mean_abs_delta_difference, tone_amplitude, ComparisonReport, EVENT_EXCLUSION};
pub use run::{is_stable, run_model, run_refmodel, run_rom, timeline, ModelKind, Trajectory, TrajectoryRow};
pub use scenario::{load_document, load_scenario, parse_scenario, scenario_from_document, set_parameter, Scenario};

#[derive(Clone, Debug, PartialEq)]
pub struct RunOutput {
    pub rom: Option<Trajectory>,
    pub refmodel: Option<Trajectory>,
    pub report: Option<ComparisonReport>,
}

/// Runs the selected model(s); `Both` also compares them from fault
/// inception on.
pub fn run(sc: &Scenario, model: ModelKind) -> Result<RunOutput> {
    let rom = matches!(model, ModelKind::Rom | ModelKind::Both).then(|| run_rom(sc)).transpose()?;
    let refmodel = matches!(model, ModelKind::Refmodel | ModelKind::Both).then(|| run_refmodel(sc)).transpose()?;
    let report = match (&rom, &refmodel) {
        (Some(a), Some(b)) => Some(compare(a, b, sc.fault.t_on, &event_times(sc))?),
        _ => None,
    };
    Ok(RunOutput { rom, refmodel, report })
}

pub fn event_times(sc: &Scenario) -> Vec<f64> {
    std::iter::once(sc.fault.t_on).chain(sc.fault.t_clear).collect()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SweepRow {
    pub value: f64,
    pub stable: bool,
    pub status: RunStatus,
    pub cct: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CctOptions {
    pub window: (f64, f64),
    pub tol: f64,
}

/// Runs the scenario once per value of the numeric field at `path`. Rows
/// come back sorted by value.
pub fn sweep(
    doc: &toml::Value,
    path: &str,
    values: &[f64],
    model: ModelKind,
    cct_options: Option<CctOptions>,
) -> Result<Vec<SweepRow>> {
    if model == ModelKind::Both {
        return Err(Error::Validation("sweeps run a single model".into()));
    }
    // Resolve the path once so an unknown parameter fails even for no values.
    set_parameter(&mut doc.clone(), path, 0.0)?;
    let mut rows: Vec<SweepRow> = values
        .par_iter()
        .map(|&value| {
            let mut d = doc.clone();
            set_parameter(&mut d, path, value)?;
            let sc = scenario_from_document(&d)?;
            let traj = run_model(&sc, model)?;
            let cct = cct_options
                .map(|o| critical_clearing_time(&sc, o.window, o.tol, model).map(|c| c.cct))
                .transpose()?;
            Ok(SweepRow { value, stable: is_stable(&sc, &traj), status: traj.status, cct })
        })
        .collect::<Result<_>>()?;
    rows.sort_by(|a, b| a.value.total_cmp(&b.value));
    Ok(rows)
}

/// Clearing-time search on `model`: the scenario is rerun with the fault
/// cleared at each trial time.
pub fn critical_clearing_time(
    sc: &Scenario,
    window: (f64, f64),
    tol: f64,
    model: ModelKind,
) -> Result<ClearingTime> {
    if !(window.0 > sc.fault.t_on && window.1 + rom::SETTLE_HOLD <= sc.t_end) {
        return Err(Error::Validation(format!(
            "clearing window {window:?} must lie after t_on {} s and leave {} s before t_end {} s",
            sc.fault.t_on,
            rom::SETTLE_HOLD,
            sc.t_end
        )));
    }
    rom::critical_clearing_time(
        |tc| {
            let mut trial = sc.clone();
            trial.fault.t_clear = Some(tc);
            let traj = run_model(&trial, model)?;
            Ok(is_stable(&trial, &traj))
        },
        window,
        tol,
    )
}

/// Sequence voltages around the fault, closed form beside the circuit
/// solve.
#[derive(Clone, Debug, PartialEq)]
pub struct FaultReport {
    pub kind: FaultKind,
    pub prefault_pos: SequencePhasor,
    pub prefault_neg: SequencePhasor,
    pub closed_form_pos: SequencePhasor,
    pub circuit_pos: SequencePhasor,
    pub circuit_neg: SequencePhasor,
    pub relative_discrepancy: f64,
    pub flagged: bool,
    pub note: Option<&'static str>,
}

/// Fault-bus voltages with the scenario's fault currents. A balanced fault
/// has no coupling closed form; its closed-form column is the retained
/// voltage `v_pre·zf/(z1 + zf)`.
pub fn fault_report(sc: &Scenario) -> Result<FaultReport> {
    let refs = sc.resolve_fault_currents()?;
    let zf = sc.zf_pu();
    let pre_pos = prefault_voltage_pos(sc.vg, SequencePhasor::new(refs.id_pos, refs.iq_pos), sc.zset.pos);
    let pre_neg = prefault_voltage_neg(refs.iq_neg, sc.zset.neg);
    let circuit = solve_coupled_network(sc.fault.kind, sc.vg, &refs, &sc.zset, zf)?;
    let (closed_form_pos, relative_discrepancy, flagged) = if sc.fault.kind == FaultKind::Balanced3Ph {
        let z1 = sc.zset.pos.z();
        let v = pre_pos.to_complex() * zf / (z1 + zf);
        let d = (v - circuit.pos.to_complex()).norm() / circuit.pos.magnitude().max(1e-6);
        (v.into(), d, d > crate::seqnet::DISAGREEMENT_FLAG)
    } else {
        let c = check_closed_form(sc.fault.kind, sc.vg, &refs, &sc.zset, zf)?;
        (c.closed_form, c.relative_discrepancy, c.flagged)
    };
    Ok(FaultReport {
        kind: sc.fault.kind,
        prefault_pos: pre_pos,
        prefault_neg: pre_neg,
        closed_form_pos,
        circuit_pos: circuit.pos,
        circuit_neg: circuit.neg,
        relative_discrepancy,
        flagged,
        note: known_disagreement(sc.fault.kind, &sc.zset),
    })
}

/// `(f_hz, magnitude_db, phase_deg)` on `points` log-spaced frequencies
/// from `center/100` to `100·center`.
pub fn notch_bode(design: &NotchFilterDesign, points: usize) -> Vec<(f64, f64, f64)> {
    let f_c = design.center / (2.0 * std::f64::consts::PI);
    let nyquist = 0.5 / design.sample_dt;
    let (lo, hi) = ((f_c / 100.0).log10(), (100.0 * f_c).min(0.999 * nyquist).log10());
    (0..points)
        .map(|i| {
            let f = 10f64.powf(lo + (hi - lo) * i as f64 / (points.max(2) - 1) as f64);
            let (m, p) = notch_frequency_response(design, 2.0 * std::f64::consts::PI * f);
            (f, m, p)
        })
        .collect()
}
