//! τ(r) under Propositions I–IV by weighting and by iterated conditional
//! expectations, and the disparity τ(r) − τ(r′).
//!
//! Subsets used throughout, with s the standard-population selector:
//!
//! | symbol | records |
//! |---|---|
//! | D  | Q‡ = 1 |
//! | DI | Q‡ = Q† = 1 |
//! | DP | Q‡ = Q′ = 1 |
//! | S  | Q = 1 |
//!
//! Both estimators target the same functional. With saturated models on
//! discrete data they agree with each other and with
//! [`crate::oracle_sim::brute_force_identify`] to rounding error.

mod ice;
mod models;
mod weights;

use alloc::vec::Vec;

#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};

pub use models::ModelSummary;
pub use weights::{compute_weights, WeightDiagnostics, WeightFactor, WeightVector, POSITIVITY_FLOOR};

use crate::data_model::{EstimatorKind, ObservationTable, TrialSpec};
use crate::{Error, Result};

/// Per-record indicators every estimator reads.
pub(crate) struct Frame {
    pub q_dd: Vec<bool>,
    pub q_d: Vec<bool>,
    pub q_p: Vec<bool>,
    pub q: Vec<bool>,
    pub group: Vec<u8>,
    pub s: Vec<bool>,
    pub y: Vec<f64>,
}

impl Frame {
    pub fn new(table: &ObservationTable, spec: &TrialSpec) -> Result<Self> {
        let n = table.len();
        let mut f = Frame {
            q_dd: Vec::with_capacity(n),
            q_d: Vec::with_capacity(n),
            q_p: Vec::with_capacity(n),
            q: Vec::with_capacity(n),
            group: Vec::with_capacity(n),
            s: spec.selector(table)?,
            y: Vec::with_capacity(n),
        };
        for rec in &table.records {
            let fl = rec.flags.ok_or(Error::NotAnnotated)?;
            f.q_dd.push(fl.q_ddagger);
            f.q_d.push(fl.q_dagger);
            f.q_p.push(fl.q_prime);
            f.q.push(fl.q);
            f.group.push(rec.group);
            f.y.push(rec.outcome);
        }
        Ok(f)
    }

    pub fn rows(&self, pred: impl Fn(usize) -> bool) -> Vec<usize> {
        (0..self.q.len()).filter(|&i| pred(i)).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct TauEstimate {
    pub group: u8,
    pub value: f64,
    pub estimator: EstimatorKind,
    pub models: Vec<ModelSummary>,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct DisparityEstimate {
    pub estimator: EstimatorKind,
    pub tau_r: TauEstimate,
    pub tau_rprime: TauEstimate,
    pub difference: f64,
    pub ci: Option<(f64, f64)>,
    pub replicates: Option<Vec<Option<f64>>>,
    pub replicates_failed: usize,
    pub seed: Option<u64>,
    /// Weights of both groups pooled; weighting only.
    pub weight_diagnostics: Option<WeightDiagnostics>,
    pub warnings: Vec<alloc::string::String>,
}

fn check(table: &ObservationTable, spec: &TrialSpec) -> Result<()> {
    spec.validate()?;
    if !table.is_annotated() {
        return Err(Error::NotAnnotated);
    }
    Ok(())
}

/// Hájek weighted mean of Y over {Q = 1, R = r}.
pub fn estimate_tau_weighting(table: &ObservationTable, spec: &TrialSpec, group: u8) -> Result<TauEstimate> {
    Ok(tau_weighting_with(table, spec, group)?.0)
}

fn tau_weighting_with(table: &ObservationTable, spec: &TrialSpec, group: u8) -> Result<(TauEstimate, WeightVector)> {
    check(table, spec)?;
    let w = compute_weights(table, spec, group)?;
    let total: f64 = w.weights.iter().sum();
    if total.is_nan() || total <= 0.0 {
        return Err(Error::PositivityViolation(alloc::format!("all weights are zero in group {group}")));
    }
    let value = w.rows.iter().zip(&w.weights).map(|(&i, wi)| wi * table.records[i].outcome).sum::<f64>() / total;
    let tau = TauEstimate { group, value, estimator: EstimatorKind::Weighting, models: w.models.clone() };
    Ok((tau, w))
}

/// Iterated conditional expectation estimate of τ(r).
pub fn estimate_tau_ice(table: &ObservationTable, spec: &TrialSpec, group: u8) -> Result<TauEstimate> {
    check(table, spec)?;
    let frame = Frame::new(table, spec)?;
    let mut ctx = models::ModelContext::new(table, spec)?;
    let value = ice::tau_ice(&mut ctx, &frame, spec, group)?;
    Ok(TauEstimate { group, value, estimator: EstimatorKind::Ice, models: ctx.summaries })
}

/// τ(1) − τ(0) for each estimator the spec requests, without a bootstrap.
/// Group 1 is the marginalized group r, group 0 the referent r′.
pub fn estimate_disparity(table: &ObservationTable, spec: &TrialSpec) -> Result<Vec<DisparityEstimate>> {
    check(table, spec)?;
    let counts = table.records.iter().filter(|r| r.flags.is_some_and(|f| f.q)).fold([0usize; 2], |mut c, r| {
        c[usize::from(r.group)] += 1;
        c
    });
    if let Some(g) = (0..2).find(|&g| counts[g] == 0) {
        return Err(Error::EmptyGroup(alloc::format!("{{Q=1, R={g}}}")));
    }
    let mut out = Vec::new();
    for &kind in spec.estimator.expand() {
        let (tau_r, tau_rprime, diag) = match kind {
            EstimatorKind::Weighting => {
                let (t1, w1) = tau_weighting_with(table, spec, 1)?;
                let (t0, w0) = tau_weighting_with(table, spec, 0)?;
                let all: Vec<f64> = w1.weights.iter().chain(&w0.weights).copied().collect();
                (t1, t0, Some(WeightDiagnostics::of(&all)))
            }
            _ => (estimate_tau_ice(table, spec, 1)?, estimate_tau_ice(table, spec, 0)?, None),
        };
        let mut warnings = Vec::new();
        if kind == EstimatorKind::Weighting && spec.truncation.is_some() {
            warnings.push("weights truncated at symmetric percentiles; the estimand changes".into());
        }
        out.push(DisparityEstimate {
            estimator: kind,
            difference: tau_r.value - tau_rprime.value,
            tau_r,
            tau_rprime,
            ci: None,
            replicates: None,
            replicates_failed: 0,
            seed: None,
            weight_diagnostics: diag,
            warnings,
        });
    }
    Ok(out)
}

/// Point differences only, in the order of `spec.estimator.expand()`;
/// the unit the bootstrap resamples.
pub fn disparity_values(table: &ObservationTable, spec: &TrialSpec) -> Result<Vec<f64>> {
    Ok(estimate_disparity(table, spec)?.iter().map(|d| d.difference).collect())
}
