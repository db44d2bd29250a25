//! The analysis path from a raw person-time table to disparity estimates.

use alloc::vec::Vec;

use crate::data_model::{ObservationTable, TrialSpec};
use crate::emulation::{assign_standard_membership, evaluate_eligibility, select_trials_with, SelectionMode};
use crate::estimators::{disparity_values, estimate_disparity, DisparityEstimate};
use crate::inference::{cluster_bootstrap, InferenceConfig, ReplicateRunner};
use crate::Result;

/// Eligibility, seeded trial selection and standard-population membership.
pub fn prepare(
    raw: &ObservationTable,
    spec: &TrialSpec,
    selection: SelectionMode,
    seed: u64,
) -> Result<ObservationTable> {
    spec.validate()?;
    let flagged = evaluate_eligibility(raw, &spec.partition)?;
    let trials = select_trials_with(&flagged, seed, selection);
    assign_standard_membership(&trials, spec)
}

/// Point estimates, plus a cluster bootstrap when `inference` is given.
/// Every replicate reruns [`prepare`] with its own seed.
pub fn estimate<R: ReplicateRunner>(
    raw: &ObservationTable,
    spec: &TrialSpec,
    selection: SelectionMode,
    seed: u64,
    inference: Option<&InferenceConfig>,
    runner: &R,
) -> Result<Vec<DisparityEstimate>> {
    let table = prepare(raw, spec, selection, seed)?;
    let mut out = estimate_disparity(&table, spec)?;
    for d in &mut out {
        d.seed = Some(seed);
    }
    let Some(cfg) = inference else { return Ok(out) };
    let boot = cluster_bootstrap(raw, cfg, runner, |t, s| disparity_values(&prepare(t, spec, selection, s)?, spec))?;
    for (k, d) in out.iter_mut().enumerate() {
        d.ci = boot.intervals.get(k).copied();
        d.replicates = Some(boot.column(k));
        d.replicates_failed = boot.failed;
        d.warnings.extend(boot.warnings.iter().cloned());
    }
    Ok(out)
}
