//! Scenario files.
//!
//! A scenario is a TOML document whose numeric keys carry their unit as a
//! suffix (`_pu`, `_s`, `_ohm`, `_radps`, `_hz`, ...). [`Scenario`] is the
//! validated form; [`RawScenario`] mirrors the file and is what sweeps edit.

use std::fs;
use std::path::{Path, PathBuf};

use log::info;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::gridcode::{fixed_point_references, GridCodeParams, NetworkInputs, ReferencePolicy};
use crate::refmodel::{NotchFilterDesign, PllGains, RefIntegrator};
use crate::rom::SolverConfig;
use crate::seqnet::{
    CurrentRefs, FaultImpedance, FaultKind, FaultSpec, SequenceImpedance, SequenceImpedanceSet,
    SequencePhasor,
};
use crate::signal::PiecewiseLinearSignal;
use crate::units::BaseQuantities;

pub const SCHEMA_VERSION: u32 = 1;

/// Fixed-point settings used when fault currents come from the grid code.
const GRID_CODE_TOL: f64 = 1e-10;
const GRID_CODE_MAX_ITER: usize = 200;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawScenario {
    pub schema_version: u32,
    pub label: String,
    pub t_end_s: f64,
    #[serde(default)]
    pub base: Option<RawBase>,
    pub network: RawNetwork,
    pub fault: RawFault,
    pub currents: RawCurrents,
    pub pll: RawPll,
    #[serde(default)]
    pub notch: Option<RawNotch>,
    #[serde(default)]
    pub current_control: Option<RawCurrentControl>,
    #[serde(default)]
    pub grid_frequency: Option<RawGridFrequency>,
    #[serde(default)]
    pub solver: Option<RawSolver>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawBase {
    pub s_base_va: f64,
    pub v_base_ll_v: f64,
    pub f0_hz: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawNetwork {
    pub vg_pu: f64,
    #[serde(default)]
    pub vg_ang_rad: f64,
    pub zg1_r_pu: f64,
    pub zg1_l_pu: f64,
    pub zg2_r_pu: Option<f64>,
    pub zg2_l_pu: Option<f64>,
    pub zg0_r_pu: Option<f64>,
    pub zg0_l_pu: Option<f64>,
    /// Series branch between the fault bus and the PLL bus.
    pub zs_r_pu: Option<f64>,
    pub zs_l_pu: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawFault {
    pub kind: FaultKind,
    pub zf_ohm: Option<f64>,
    pub zf_pu: Option<f64>,
    pub t_on_s: f64,
    pub t_clear_s: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawRefs {
    pub id_pu: f64,
    pub iq_pu: f64,
    #[serde(default)]
    pub iq_neg_pu: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawGridCode {
    pub k_pos: f64,
    pub k_neg: f64,
    #[serde(default)]
    pub deadband_pu: f64,
    pub iq_total_max_pu: f64,
    pub i_total_max_pu: f64,
    pub id_request_pu: f64,
    pub id_post_ramp_pu_per_s: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawCurrents {
    pub prefault: RawRefs,
    pub fault: Option<RawRefs>,
    pub grid_code: Option<RawGridCode>,
}

/// Either SI gains on the phase-peak voltage or per-unit gains.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawPll {
    pub kp_radps_per_v: Option<f64>,
    pub ki_radps2_per_v: Option<f64>,
    pub kp_radps_per_pu: Option<f64>,
    pub ki_radps2_per_pu: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawNotch {
    #[serde(default = "yes")]
    pub enabled: bool,
    pub damping: f64,
    pub center_hz: Option<f64>,
}

fn yes() -> bool {
    true
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawCurrentControl {
    pub tau_s: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawGridFrequency {
    pub points_s_radps: Vec<[f64; 2]>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawSolver {
    pub dt_s: Option<f64>,
    pub output_dt_s: Option<f64>,
    pub refmodel_dt_s: Option<f64>,
    pub divergence_bound_radps: Option<f64>,
    #[serde(default)]
    pub rate_jump: bool,
    #[serde(default)]
    pub refmodel_integrator: RefIntegrator,
}

/// Where the fault currents come from.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum FaultCurrents {
    Fixed(CurrentRefs),
    GridCode { params: GridCodeParams, id_request: f64 },
}

/// Validated scenario, every quantity per unit except times (s) and
/// frequencies (rad/s).
#[derive(Clone, Debug, PartialEq)]
pub struct Scenario {
    pub label: String,
    pub schema_version: u32,
    /// SHA-256 of the canonical serialization of the raw document.
    pub hash: String,
    pub base: BaseQuantities,
    pub vg: SequencePhasor,
    pub zset: SequenceImpedanceSet,
    pub series: SequenceImpedance,
    pub fault: FaultSpec,
    pub prefault_currents: CurrentRefs,
    pub fault_currents: FaultCurrents,
    pub pll: PllGains,
    /// `(center rad/s, damping)`, `None` when the notch is disabled.
    pub notch: Option<(f64, f64)>,
    pub cc_tau: f64,
    pub grid_frequency: PiecewiseLinearSignal,
    pub t_end: f64,
    pub solver: SolverConfig,
    pub refmodel_dt: f64,
    pub refmodel_integrator: RefIntegrator,
}

impl Scenario {
    pub fn zf_pu(&self) -> f64 {
        self.fault.zf.to_pu(&self.base)
    }

    pub fn omega0(&self) -> f64 {
        self.base.omega0()
    }

    /// Fault-period references; the grid code is closed over the faulted
    /// network by fixed-point iteration.
    pub fn resolve_fault_currents(&self) -> Result<CurrentRefs> {
        match self.fault_currents {
            FaultCurrents::Fixed(r) => Ok(r),
            FaultCurrents::GridCode { params, id_request } => {
                let net = NetworkInputs {
                    kind: self.fault.kind,
                    vg: self.vg,
                    zset: self.zset,
                    zf: self.zf_pu(),
                };
                let policy = ReferencePolicy::GridCode { params, id_request };
                Ok(fixed_point_references(&net, &policy, GRID_CODE_TOL, GRID_CODE_MAX_ITER)?.refs)
            }
        }
    }

    /// Active-current recovery rate after clearance, pu/s.
    pub fn id_post_ramp(&self) -> f64 {
        match self.fault_currents {
            FaultCurrents::GridCode { params, .. } => params.id_post_ramp,
            FaultCurrents::Fixed(_) => f64::INFINITY,
        }
    }

    pub fn notch_design(&self, dt: f64) -> Result<Option<NotchFilterDesign>> {
        self.notch
            .map(|(center, damping)| NotchFilterDesign::new(center, damping, dt))
            .transpose()
    }

    pub fn vg_complex(&self) -> Complex64 {
        self.vg.to_complex()
    }
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::Parse { path: path.to_path_buf(), message: e.to_string() })
}

pub fn load_scenario(path: impl AsRef<Path>) -> Result<Scenario> {
    let path = path.as_ref();
    let text = read(path)?;
    parse_scenario(&text, path)
}

pub fn parse_scenario(text: &str, path: &Path) -> Result<Scenario> {
    let raw: RawScenario = toml::from_str(text).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    raw.build()
}

/// Parses the file into a generic TOML tree, the form sweeps edit.
pub fn load_document(path: impl AsRef<Path>) -> Result<toml::Value> {
    let path = path.as_ref();
    let text = read(path)?;
    toml::from_str(&text).map_err(|e| Error::Parse { path: path.to_path_buf(), message: e.to_string() })
}

pub fn scenario_from_document(doc: &toml::Value) -> Result<Scenario> {
    let raw: RawScenario = doc.clone().try_into().map_err(|e: toml::de::Error| Error::Parse {
        path: PathBuf::from("<document>"),
        message: e.to_string(),
    })?;
    raw.build()
}

/// Overwrites the numeric field at a dotted path such as `fault.zf_ohm`.
pub fn set_parameter(doc: &mut toml::Value, path: &str, value: f64) -> Result<()> {
    let unknown = || Error::UnknownParameter(path.to_string());
    let mut node = doc;
    for key in path.split('.') {
        node = node.as_table_mut().and_then(|t| t.get_mut(key)).ok_or_else(unknown)?;
    }
    match node {
        toml::Value::Float(_) | toml::Value::Integer(_) => {
            *node = toml::Value::Float(value);
            Ok(())
        }
        _ => Err(unknown()),
    }
}

fn invalid(msg: impl Into<String>) -> Error {
    Error::Validation(msg.into())
}

fn finite(name: &str, v: f64) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(invalid(format!("{name} must be finite")))
    }
}

fn branch(name: &str, r: f64, l: f64) -> Result<SequenceImpedance> {
    let z = SequenceImpedance::new(finite(name, r)?, finite(name, l)?);
    if !(r >= 0.0 && l >= 0.0) {
        return Err(invalid(format!("{name} must have r >= 0 and l >= 0")));
    }
    Ok(z)
}

fn optional_branch(
    name: &str,
    r: Option<f64>,
    l: Option<f64>,
    fallback: SequenceImpedance,
) -> Result<SequenceImpedance> {
    match (r, l) {
        (None, None) => {
            info!("{name} not given, using zg1 = {} + j{} pu", fallback.r, fallback.l);
            Ok(fallback)
        }
        (Some(r), Some(l)) => branch(name, r, l),
        _ => Err(invalid(format!("{name} needs both _r_pu and _l_pu"))),
    }
}

fn refs(raw: &RawRefs) -> Result<CurrentRefs> {
    Ok(CurrentRefs::new(
        finite("id_pu", raw.id_pu)?,
        finite("iq_pu", raw.iq_pu)?,
        finite("iq_neg_pu", raw.iq_neg_pu)?,
    ))
}

impl RawScenario {
    pub fn hash(&self) -> String {
        let canonical = toml::to_string(self).expect("scenario serializes");
        hex::encode(Sha256::digest(canonical.as_bytes()))
    }

    pub fn build(&self) -> Result<Scenario> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(invalid(format!(
                "schema_version {} is not supported (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        let base = match &self.base {
            Some(b) => BaseQuantities { s_base: b.s_base_va, v_base_ll: b.v_base_ll_v, f0: b.f0_hz },
            None => BaseQuantities::TURBINE_12MVA,
        };
        if !base.is_valid() {
            return Err(invalid("base quantities must be positive and finite"));
        }
        let omega0 = base.omega0();

        let n = &self.network;
        if !(n.vg_pu > 0.0 && n.vg_pu.is_finite()) {
            return Err(invalid("vg_pu must be positive"));
        }
        let vg = SequencePhasor::from_polar(n.vg_pu, finite("vg_ang_rad", n.vg_ang_rad)?);
        let zg1 = branch("zg1", n.zg1_r_pu, n.zg1_l_pu)?;
        let zset = SequenceImpedanceSet {
            pos: zg1,
            neg: optional_branch("zg2", n.zg2_r_pu, n.zg2_l_pu, zg1)?,
            zero: optional_branch("zg0", n.zg0_r_pu, n.zg0_l_pu, zg1)?,
        };
        if !zset.is_valid() {
            return Err(invalid("grid sequence impedances must be finite and non-negative"));
        }
        let series = match (n.zs_r_pu, n.zs_l_pu) {
            (None, None) => SequenceImpedance::ZERO,
            (r, l) => branch("zs", r.unwrap_or(0.0), l.unwrap_or(0.0))?,
        };

        let f = &self.fault;
        let zf = match (f.zf_ohm, f.zf_pu) {
            (Some(v), None) => FaultImpedance::ohm(v),
            (None, Some(v)) => FaultImpedance::pu(v),
            _ => return Err(invalid("fault needs exactly one of zf_ohm and zf_pu")),
        };
        let fault = FaultSpec { kind: f.kind, zf, t_on: f.t_on_s, t_clear: f.t_clear_s };
        fault.validate()?;
        if !(self.t_end_s > fault.t_on && self.t_end_s.is_finite()) {
            return Err(invalid(format!(
                "t_end_s {} must exceed the fault inception {} s",
                self.t_end_s, fault.t_on
            )));
        }
        if let Some(tc) = fault.t_clear {
            if tc >= self.t_end_s {
                return Err(invalid("t_clear_s must precede t_end_s"));
            }
        }

        let prefault_currents = refs(&self.currents.prefault)?;
        let fault_currents = match (&self.currents.fault, &self.currents.grid_code) {
            (Some(r), None) => FaultCurrents::Fixed(refs(r)?),
            (None, Some(g)) => {
                let params = GridCodeParams {
                    k_pos: g.k_pos,
                    k_neg: g.k_neg,
                    deadband: g.deadband_pu,
                    iq_total_max: g.iq_total_max_pu,
                    i_total_max: g.i_total_max_pu,
                    id_post_ramp: g.id_post_ramp_pu_per_s.unwrap_or(f64::INFINITY),
                };
                params.validate()?;
                FaultCurrents::GridCode { params, id_request: finite("id_request_pu", g.id_request_pu)? }
            }
            _ => return Err(invalid("currents need exactly one of [currents.fault] and [currents.grid_code]")),
        };

        let p = &self.pll;
        let v_peak = base.v_phase_peak();
        let pll = match (p.kp_radps_per_v, p.ki_radps2_per_v, p.kp_radps_per_pu, p.ki_radps2_per_pu) {
            (Some(kp), Some(ki), None, None) => PllGains { kp: kp * v_peak, ki: ki * v_peak },
            (None, None, Some(kp), Some(ki)) => PllGains { kp, ki },
            _ => return Err(invalid("pll needs kp/ki either both per volt or both per pu")),
        };
        if !(pll.kp >= 0.0 && pll.ki > 0.0 && pll.kp.is_finite() && pll.ki.is_finite()) {
            return Err(invalid("pll gains must satisfy kp >= 0, ki > 0"));
        }

        let notch = match &self.notch {
            Some(nt) if nt.enabled => {
                let center = nt.center_hz.unwrap_or(2.0 * base.f0) * 2.0 * std::f64::consts::PI;
                Some((center, nt.damping))
            }
            _ => None,
        };
        let cc_tau = self.current_control.as_ref().map_or(2e-3, |c| c.tau_s);
        if !(cc_tau >= 0.0 && cc_tau.is_finite()) {
            return Err(invalid("current_control.tau_s must be >= 0"));
        }

        let grid_frequency = match &self.grid_frequency {
            Some(g) => PiecewiseLinearSignal::new(g.points_s_radps.iter().map(|p| (p[0], p[1])).collect())?,
            None => PiecewiseLinearSignal::constant(omega0),
        };
        if grid_frequency.points().iter().any(|p| p.1 <= 0.0) {
            return Err(invalid("grid frequency must stay positive"));
        }

        let mut solver = SolverConfig::new(omega0);
        let mut refmodel_dt = solver.dt;
        let mut refmodel_integrator = RefIntegrator::default();
        if let Some(s) = &self.solver {
            refmodel_integrator = s.refmodel_integrator;
            solver.dt = s.dt_s.unwrap_or(solver.dt);
            solver.output_dt = s.output_dt_s.unwrap_or(solver.output_dt);
            solver.divergence_bound = s.divergence_bound_radps.unwrap_or(solver.divergence_bound);
            solver.rate_jump = s.rate_jump;
            refmodel_dt = s.refmodel_dt_s.unwrap_or(solver.dt);
        }
        solver.decimation()?;
        if !(solver.divergence_bound > 0.0) {
            return Err(invalid("divergence_bound_radps must be positive"));
        }
        let ratio = solver.output_dt / refmodel_dt;
        if !(refmodel_dt > 0.0 && (ratio - ratio.round()).abs() < 1e-9 && ratio >= 1.0 - 1e-9) {
            return Err(invalid("output_dt_s must be a whole multiple of refmodel_dt_s"));
        }

        let scenario = Scenario {
            label: self.label.clone(),
            schema_version: self.schema_version,
            hash: self.hash(),
            base,
            vg,
            zset,
            series,
            fault,
            prefault_currents,
            fault_currents,
            pll,
            notch,
            cc_tau,
            grid_frequency,
            t_end: self.t_end_s,
            solver,
            refmodel_dt,
            refmodel_integrator,
        };
        scenario.notch_design(refmodel_dt)?;
        Ok(scenario)
    }
}
