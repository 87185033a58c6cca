//! LVRT current references.
//!
//! Reactive current is requested in proportion to the positive-sequence sag
//! and to the negative-sequence voltage, the total reactive current is capped
//! (positive sequence served first), and the active current takes whatever
//! capability is left.
//!
//! Capacitive, voltage-supporting reactive current is negative q.

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seqnet::{
    solve_coupled_network, CurrentRefs, FaultKind, SequenceImpedanceSet, SequencePhasor,
};

/// Slack allowed on the current limits for floating-point rounding.
pub const LIMIT_SLACK: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridCodeParams {
    pub k_pos: f64,
    pub k_neg: f64,
    pub deadband: f64,
    pub iq_total_max: f64,
    pub i_total_max: f64,
    /// Post-fault active-current recovery rate in pu/s.
    pub id_post_ramp: f64,
}

impl Default for GridCodeParams {
    fn default() -> Self {
        Self {
            k_pos: 2.0,
            k_neg: 2.0,
            deadband: 0.0,
            iq_total_max: 1.0,
            i_total_max: 1.0,
            id_post_ramp: f64::INFINITY,
        }
    }
}

impl GridCodeParams {
    /// Hard errors for inconsistent limits; gains outside the usual 2..6
    /// band are only logged.
    pub fn validate(&self) -> Result<()> {
        for (name, k) in [("k_pos", self.k_pos), ("k_neg", self.k_neg)] {
            if !(k.is_finite() && k >= 0.0) {
                return Err(Error::Validation(format!("{name} must be finite and >= 0")));
            }
            if !(2.0..=6.0).contains(&k) {
                warn!("grid-code gain {name} = {k} is outside the usual 2..6 range");
            }
        }
        if !(0.0..=0.2).contains(&self.deadband) {
            return Err(Error::Validation(format!(
                "deadband {} pu outside [0, 0.2]",
                self.deadband
            )));
        }
        if !(self.iq_total_max >= 0.0 && self.iq_total_max <= self.i_total_max) {
            return Err(Error::Validation(format!(
                "iq_total_max {} must lie in [0, i_total_max = {}]",
                self.iq_total_max, self.i_total_max
            )));
        }
        if !(self.id_post_ramp > 0.0) {
            return Err(Error::Validation("id_post_ramp must be > 0".into()));
        }
        Ok(())
    }
}

/// Current references for the measured sequence voltage magnitudes.
pub fn lvrt_references(
    v_pos_mag: f64,
    v_neg_mag: f64,
    id_request: f64,
    params: &GridCodeParams,
) -> CurrentRefs {
    let sag = (1.0 - v_pos_mag - params.deadband).max(0.0);
    let unbalance = (v_neg_mag - params.deadband).max(0.0);
    let iq_pos_mag = (params.k_pos * sag).min(params.iq_total_max);
    let iq_neg_mag = (params.k_neg * unbalance).min(params.iq_total_max - iq_pos_mag);
    // Room left for active current once the negative sequence has been served.
    let room = (params.i_total_max - iq_neg_mag).max(0.0);
    let id_cap = (room * room - iq_pos_mag * iq_pos_mag).max(0.0).sqrt();
    CurrentRefs {
        id_pos: id_request.clamp(-id_cap, id_cap),
        iq_pos: -iq_pos_mag,
        iq_neg: iq_neg_mag,
    }
}

/// Active current after clearance, rising at `ramp` pu/s toward the target.
pub fn ramp_limited_id(t: f64, t_clear: f64, id_target: f64, id_at_clear: f64, ramp: f64) -> f64 {
    if ramp.is_infinite() {
        return id_target;
    }
    id_target.min(id_at_clear + ramp * (t - t_clear))
}

/// Network the reference loop is closed over.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NetworkInputs {
    pub kind: FaultKind,
    pub vg: SequencePhasor,
    pub zset: SequenceImpedanceSet,
    pub zf: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ReferencePolicy {
    /// LVRT rules with the operator's active-current request.
    GridCode { params: GridCodeParams, id_request: f64 },
    /// References imposed from outside, gains disabled.
    Fixed(CurrentRefs),
}

impl ReferencePolicy {
    fn references(&self, v_pos: f64, v_neg: f64) -> CurrentRefs {
        match self {
            ReferencePolicy::GridCode { params, id_request } => {
                lvrt_references(v_pos, v_neg, *id_request, params)
            }
            ReferencePolicy::Fixed(refs) => *refs,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FixedPoint {
    pub refs: CurrentRefs,
    pub v_pos: SequencePhasor,
    pub v_neg: SequencePhasor,
    pub iterations: usize,
    /// Largest reference change per iteration.
    pub residuals: Vec<f64>,
}

/// Successive substitution between the LVRT rules and the sequence network.
pub fn fixed_point_references(
    net: &NetworkInputs,
    policy: &ReferencePolicy,
    tol: f64,
    max_iter: usize,
) -> Result<FixedPoint> {
    let solve = |refs: &CurrentRefs| solve_coupled_network(net.kind, net.vg, refs, &net.zset, net.zf);
    let open = solve(&CurrentRefs::default())?;
    let mut refs = policy.references(open.pos.magnitude(), open.neg.magnitude());
    let mut residuals = Vec::new();
    for iteration in 1..=max_iter.max(1) {
        let v = solve(&refs)?;
        let next = policy.references(v.pos.magnitude(), v.neg.magnitude());
        let residual = (next.id_pos - refs.id_pos)
            .abs()
            .max((next.iq_pos - refs.iq_pos).abs())
            .max((next.iq_neg - refs.iq_neg).abs());
        residuals.push(residual);
        refs = next;
        if residual < tol {
            let v = solve(&refs)?;
            return Ok(FixedPoint {
                refs,
                v_pos: v.pos,
                v_neg: v.neg,
                iterations: iteration,
                residuals,
            });
        }
    }
    Err(Error::NoConvergence { max_iter })
}
