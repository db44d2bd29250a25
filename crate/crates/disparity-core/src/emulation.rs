//! From raw person-time rows to the pooled trial table.

use alloc::vec::Vec;

use rand::Rng;

#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};

use crate::data_model::{Criterion, EligibilityPartition, ObservationTable, TrialSpec};
use crate::rng;
use crate::{Error, Result};

/// Q‡, Q†, Q′ and their product Q.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct EligibilityFlags {
    pub q_ddagger: bool,
    pub q_dagger: bool,
    pub q_prime: bool,
    pub q: bool,
}

impl EligibilityFlags {
    pub fn new(q_ddagger: bool, q_dagger: bool, q_prime: bool) -> Self {
        Self { q_ddagger, q_dagger, q_prime, q: q_ddagger && q_dagger && q_prime }
    }
}

fn all_satisfied(table: &ObservationTable, row: usize, criteria: &[Criterion]) -> Result<bool> {
    for c in criteria {
        let var = table.resolve(&c.variable)?;
        if !c.admissible.contains(table.value(row, var)) {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Flags per record; an empty criterion list counts as satisfied.
pub fn eligibility_flags(table: &ObservationTable, partition: &EligibilityPartition) -> Result<Vec<EligibilityFlags>> {
    for v in partition.variables() {
        table.resolve(v)?;
    }
    (0..table.len())
        .map(|i| {
            Ok(EligibilityFlags::new(
                all_satisfied(table, i, &partition.w_ddagger)?,
                all_satisfied(table, i, &partition.w_dagger)?,
                all_satisfied(table, i, &partition.w_prime)?,
            ))
        })
        .collect()
}

pub fn evaluate_eligibility(table: &ObservationTable, partition: &EligibilityPartition) -> Result<ObservationTable> {
    let flags = eligibility_flags(table, partition)?;
    let mut out = table.clone();
    for (rec, f) in out.records.iter_mut().zip(flags) {
        rec.flags = Some(f);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize), serde(rename_all = "snake_case"))]
pub enum SelectionMode {
    /// One record per (person, time unit), pooled.
    #[default]
    PerTimeUnit,
    /// One record per person, drawn among that person's eligible records
    /// (all records when none is eligible or flags are absent).
    PerPerson,
}

/// Row indices in canonical (person_id, time_unit, visit_id) order.
fn canonical_order(table: &ObservationTable) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..table.len()).collect();
    idx.sort_by(|&a, &b| {
        let (ra, rb) = (&table.records[a], &table.records[b]);
        (ra.person_id.as_str(), ra.time_unit, ra.visit_id.as_str()).cmp(&(
            rb.person_id.as_str(),
            rb.time_unit,
            rb.visit_id.as_str(),
        ))
    });
    idx
}

fn group_seed(seed: u64, person: &str, time_unit: Option<i64>) -> u64 {
    let mut bytes = person.as_bytes().to_vec();
    bytes.push(0);
    if let Some(t) = time_unit {
        bytes.extend_from_slice(&t.to_le_bytes());
    }
    rng::hash_bytes(seed, &bytes)
}

/// One trial per (person, time unit), chosen uniformly at random.
pub fn select_trials(table: &ObservationTable, seed: u64) -> ObservationTable {
    select_trials_with(table, seed, SelectionMode::PerTimeUnit)
}

/// Seeded trial selection. Each draw is keyed by the person (and time unit),
/// so the result does not depend on input row order. Output rows follow the
/// canonical order.
pub fn select_trials_with(table: &ObservationTable, seed: u64, mode: SelectionMode) -> ObservationTable {
    let order = canonical_order(table);
    let mut keep = Vec::new();
    let mut start = 0;
    while start < order.len() {
        let first = &table.records[order[start]];
        let same = |i: usize| {
            let r = &table.records[i];
            r.person_id == first.person_id && (mode == SelectionMode::PerPerson || r.time_unit == first.time_unit)
        };
        let mut end = start + 1;
        while end < order.len() && same(order[end]) {
            end += 1;
        }
        let block = &order[start..end];
        let candidates: Vec<usize> = match mode {
            SelectionMode::PerTimeUnit => block.to_vec(),
            SelectionMode::PerPerson => {
                let eligible: Vec<usize> =
                    block.iter().copied().filter(|&i| table.records[i].flags.is_some_and(|f| f.q)).collect();
                if eligible.is_empty() {
                    block.to_vec()
                } else {
                    eligible
                }
            }
        };
        let key_time = (mode == SelectionMode::PerTimeUnit).then_some(first.time_unit);
        let mut g = rng::stream(group_seed(seed, &first.person_id, key_time), 0);
        keep.push(candidates[g.gen_range(0..candidates.len())]);
        start = end;
    }
    table.subset(&keep)
}

/// Sets T = Q × s for every record.
pub fn assign_standard_membership(table: &ObservationTable, spec: &TrialSpec) -> Result<ObservationTable> {
    let s = spec.selector(table)?;
    let mut out = table.clone();
    let mut any = false;
    for (rec, si) in out.records.iter_mut().zip(s) {
        let q = rec.flags.ok_or(Error::NotAnnotated)?.q;
        let t = q && si;
        any |= t;
        rec.standard = Some(t);
    }
    if !any {
        return Err(Error::EmptyStandard);
    }
    Ok(out)
}

/// Counts of Q‡, Q†, Q′ and Q among annotated records.
pub fn eligibility_counts(table: &ObservationTable) -> Result<[usize; 4]> {
    let mut c = [0usize; 4];
    for (i, _) in table.records.iter().enumerate() {
        let f = table.flags(i)?;
        for (k, v) in [f.q_ddagger, f.q_dagger, f.q_prime, f.q].into_iter().enumerate() {
            c[k] += usize::from(v);
        }
    }
    Ok(c)
}
