use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec::Vec;

use super::{cell_key, resolve_all, SyntheticPopulation};
use crate::data_model::{Proposition, TrialSpec};
use crate::emulation::eligibility_flags;
use crate::{Error, Result};

/// Ground-truth τ(r) by direct grouped means, no models and no weights.
pub fn true_tau(pop: &SyntheticPopulation, spec: &TrialSpec, group: u8) -> Result<f64> {
    Ok(true_tau_with_se(pop, spec, group)?.0)
}

/// τ(r) = Σₐ E(Y | Q=1, R=r, a) P(a | Q=1, s), evaluated on the intervened
/// population (the observed one under Proposition I), together with its
/// Monte Carlo standard error.
pub fn true_tau_with_se(pop: &SyntheticPopulation, spec: &TrialSpec, group: u8) -> Result<(f64, f64)> {
    let table = if spec.proposition == Proposition::I {
        &pop.table
    } else {
        pop.counterfactual
            .as_ref()
            .ok_or_else(|| Error::SpecMismatch("apply the stochastic intervention before computing truth".into()))?
    };
    let flags = eligibility_flags(table, &spec.partition)?;
    let s = spec.selector(table)?;
    let a_vars = resolve_all(table, spec.allowables.iter().map(|c| c.name.as_str()))?;

    // per a: (count, sum, sum of squares) in {Q=1, R=r}, and count in {Q=1, s}
    let mut cells: BTreeMap<Vec<u64>, ([f64; 3], f64)> = BTreeMap::new();
    let mut n_t = 0.0;
    for (i, rec) in table.records.iter().enumerate() {
        if !flags[i].q {
            continue;
        }
        let in_r = rec.group == group;
        if !(in_r || s[i]) {
            continue;
        }
        let c = cells.entry(cell_key(table, i, &a_vars)).or_default();
        if in_r {
            c.0[0] += 1.0;
            c.0[1] += rec.outcome;
            c.0[2] += rec.outcome * rec.outcome;
        }
        if s[i] {
            c.1 += 1.0;
            n_t += 1.0;
        }
    }
    if n_t == 0.0 {
        return Err(Error::EmptyStandard);
    }
    let mut stats = Vec::new();
    for (a, (m, t)) in &cells {
        if *t == 0.0 {
            continue;
        }
        if m[0] == 0.0 {
            return Err(Error::EmptyCell(format!("{{Q=1, R={group}, a={a:?}}}")));
        }
        let mean = m[1] / m[0];
        let var = if m[0] > 1.0 { ((m[2] - m[0] * mean * mean) / (m[0] - 1.0)).max(0.0) } else { 0.0 };
        stats.push((t / n_t, mean, var, m[0]));
    }
    let tau: f64 = stats.iter().map(|(p, m, _, _)| p * m).sum();
    let var: f64 = stats.iter().map(|(p, m, v, n)| p * p * v / n + p * (m - tau) * (m - tau) / n_t).sum();
    Ok((tau, libm::sqrt(var)))
}
