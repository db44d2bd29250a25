use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec::Vec;

use rand::Rng;

use super::{cell_key, resolve_all, SyntheticPopulation};
use crate::data_model::TrialSpec;
use crate::rng;
use crate::{Error, Result};

/// Redraws W† for every record from the empirical distribution of W† among
/// donors sharing the record's exact (W‡ values, A, R) cell, then carries
/// W′ and Y over from the stored potential values of the drawn w†.
///
/// The result is stored in `pop.counterfactual`, without eligibility flags.
pub fn apply_stochastic_intervention(
    mut pop: SyntheticPopulation,
    spec: &TrialSpec,
    seed: u64,
) -> Result<SyntheticPopulation> {
    let (Some(w), Some(py)) = (pop.intervened, pop.potential_y.as_ref()) else {
        return Err(Error::BadDag("population has no intervened node".into()));
    };
    let table = &pop.table;
    let names = spec
        .partition
        .w_ddagger
        .iter()
        .map(|c| c.variable.as_str())
        .chain(spec.allowables.iter().map(|c| c.name.as_str()));
    let vars = resolve_all(table, names)?;

    let mut donors: BTreeMap<(Vec<u64>, u8), Vec<f64>> = BTreeMap::new();
    for (i, rec) in table.records.iter().enumerate() {
        donors.entry((cell_key(table, i, &vars), rec.group)).or_default().push(rec.values[w]);
    }

    let base = rng::hash_bytes(seed, b"intervention");
    let mut out = table.clone();
    for (i, rec) in out.records.iter_mut().enumerate() {
        let key = (cell_key(table, i, &vars), rec.group);
        let pool = donors
            .get(&key)
            .filter(|p| !p.is_empty())
            .ok_or_else(|| Error::EmptyConditioningCell(format!("{:?} for record {i}", key)))?;
        let u: f64 = rng::stream(base, i as u64).gen();
        let drawn = pool[((u * pool.len() as f64) as usize).min(pool.len() - 1)];
        let k = usize::from(drawn != 0.0);
        rec.values[w] = drawn;
        for (col, vals) in &pop.potential_post {
            rec.values[*col] = vals[k][i];
        }
        rec.outcome = py[k][i];
        rec.flags = None;
        rec.standard = None;
    }
    pop.counterfactual = Some(out);
    Ok(pop)
}
