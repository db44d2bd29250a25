use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::vec::Vec;

#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};

use super::{cell_key, resolve_all};
use crate::data_model::{ObservationTable, Proposition, TrialSpec};
use crate::emulation::{eligibility_flags, EligibilityFlags};
use crate::{Error, Result};

type Key = Vec<u64>;
type Density = BTreeMap<Key, f64>;
type NPart = BTreeMap<(Key, Key), Option<f64>>;

/// One (a, n) cell of a group with the counting densities the two-stage
/// design moves between: f0 is the eligible frame, f1 the stage-1 target and
/// f2 the stage-2 target whose outcome mean is τ(r). `None` marks a density
/// whose conditioning set is empty.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct Stratum {
    pub a: Vec<f64>,
    pub n: Vec<f64>,
    pub f0: f64,
    pub f1: Option<f64>,
    pub f2: Option<f64>,
    /// E(Y | Q=1, R=r, n, a).
    pub mu: Option<f64>,
}

#[derive(Default)]
struct Tally {
    an: BTreeMap<(Key, Key), f64>,
    a: BTreeMap<Key, f64>,
    total: f64,
    ysum: BTreeMap<(Key, Key), f64>,
}

impl Tally {
    fn of(keys: &[(Key, Key)], y: &[f64], mask: impl Fn(usize) -> bool) -> Self {
        let mut t = Tally::default();
        for (i, k) in keys.iter().enumerate().filter(|(i, _)| mask(*i)) {
            *t.an.entry(k.clone()).or_default() += 1.0;
            *t.ysum.entry(k.clone()).or_default() += y[i];
            *t.a.entry(k.0.clone()).or_default() += 1.0;
            t.total += 1.0;
        }
        t
    }

    fn an(&self, a: &Key, n: &Key) -> f64 {
        self.an.get(&(a.clone(), n.clone())).copied().unwrap_or(0.0)
    }

    fn a(&self, a: &Key) -> f64 {
        self.a.get(a).copied().unwrap_or(0.0)
    }

    /// P(n | ·, a)
    fn n_given_a(&self, a: &Key, n: &Key) -> Option<f64> {
        ratio(self.an(a, n), self.a(a))
    }

    /// P(a | ·)
    fn marg_a(&self, a: &Key) -> Option<f64> {
        ratio(self.a(a), self.total)
    }
}

fn ratio(num: f64, den: f64) -> Option<f64> {
    (den > 0.0).then(|| num / den)
}

fn inv(x: Option<f64>) -> Option<f64> {
    x.filter(|&v| v > 0.0).map(|v| 1.0 / v)
}

/// Product with an exact-zero gate: any zero factor wins over undefined ones.
fn prod(fs: &[Option<f64>]) -> Option<f64> {
    if fs.contains(&Some(0.0)) {
        return Some(0.0);
    }
    fs.iter().try_fold(1.0, |acc, f| f.map(|v| acc * v))
}

fn normalize(raw: BTreeMap<Key, Option<f64>>) -> Option<BTreeMap<Key, f64>> {
    let vals: Option<BTreeMap<Key, f64>> = raw.into_iter().map(|(k, v)| v.map(|v| (k, v))).collect();
    let vals = vals?;
    let z: f64 = vals.values().sum();
    (z > 0.0).then(|| vals.into_iter().map(|(k, v)| (k, v / z)).collect())
}

fn table_flags(table: &ObservationTable, spec: &TrialSpec) -> Result<Vec<EligibilityFlags>> {
    if table.is_annotated() {
        Ok(table.records.iter().map(|r| r.flags.unwrap_or_default()).collect())
    } else {
        eligibility_flags(table, &spec.partition)
    }
}

/// Counting densities for every (a, n) cell seen in the table.
pub fn densities(table: &ObservationTable, spec: &TrialSpec, group: u8) -> Result<Vec<Stratum>> {
    spec.validate()?;
    let fl = table_flags(table, spec)?;
    let s = spec.selector(table)?;
    let a_vars = resolve_all(table, spec.allowables.iter().map(|c| c.name.as_str()))?;
    let n_vars = resolve_all(table, spec.non_allowables.iter().map(|c| c.name.as_str()))?;
    let keys: Vec<(Key, Key)> =
        (0..table.len()).map(|i| (cell_key(table, i, &a_vars), cell_key(table, i, &n_vars))).collect();
    let y: Vec<f64> = table.records.iter().map(|r| r.outcome).collect();
    let g = |i: usize| table.records[i].group == group;

    let s_r = Tally::of(&keys, &y, |i| fl[i].q && g(i));
    let s_s = Tally::of(&keys, &y, |i| fl[i].q && s[i]);
    let d_r = Tally::of(&keys, &y, |i| fl[i].q_ddagger && g(i));
    let d_s = Tally::of(&keys, &y, |i| fl[i].q_ddagger && s[i]);
    let dp_r = Tally::of(&keys, &y, |i| fl[i].q_ddagger && fl[i].q_prime && g(i));
    let dp_s = Tally::of(&keys, &y, |i| fl[i].q_ddagger && fl[i].q_prime && s[i]);
    let di_r = Tally::of(&keys, &y, |i| fl[i].q_ddagger && fl[i].q_dagger && g(i));
    let di_s = Tally::of(&keys, &y, |i| fl[i].q_ddagger && fl[i].q_dagger && s[i]);
    if s_r.total == 0.0 {
        return Err(Error::EmptyGroup(format!("{{Q=1, R={group}}}")));
    }

    let cells: BTreeSet<(Key, Key)> = keys.iter().cloned().collect();
    let a_set: BTreeSet<Key> = cells.iter().map(|(a, _)| a.clone()).collect();
    let n_set: BTreeSet<Key> = cells.iter().map(|(_, n)| n.clone()).collect();

    // Σₙ P(Q′=1 | DI, x, n, a) P(n | D, x, a)
    let post_mass = |di: &Tally, sx: &Tally, d: &Tally, a: &Key| -> Option<f64> {
        n_set
            .iter()
            .try_fold(0.0, |acc, n| prod(&[d.n_given_a(a, n), ratio(sx.an(a, n), di.an(a, n))]).map(|v| acc + v))
    };

    // n-part and the two a-densities per proposition
    let (n_part, pg, pi): (NPart, Option<Density>, Option<Density>) = match spec.proposition {
        Proposition::I => (
            cells.iter().map(|(a, n)| ((a.clone(), n.clone()), s_r.n_given_a(a, n))).collect(),
            normalize(a_set.iter().map(|a| (a.clone(), s_r.marg_a(a))).collect()),
            normalize(a_set.iter().map(|a| (a.clone(), s_s.marg_a(a))).collect()),
        ),
        Proposition::II => (
            cells.iter().map(|(a, n)| ((a.clone(), n.clone()), d_r.n_given_a(a, n))).collect(),
            normalize(a_set.iter().map(|a| (a.clone(), s_r.marg_a(a))).collect()),
            normalize(a_set.iter().map(|a| (a.clone(), s_s.marg_a(a))).collect()),
        ),
        Proposition::III => {
            let sel_all = ratio(di_s.total, d_s.total);
            (
                cells.iter().map(|(a, n)| ((a.clone(), n.clone()), dp_r.n_given_a(a, n))).collect(),
                normalize(
                    a_set
                        .iter()
                        .map(|a| (a.clone(), prod(&[dp_r.marg_a(a), di_r.marg_a(a), inv(d_r.marg_a(a))])))
                        .collect(),
                ),
                normalize(
                    a_set
                        .iter()
                        .map(|a| (a.clone(), prod(&[dp_s.marg_a(a), ratio(di_s.a(a), d_s.a(a)), inv(sel_all)])))
                        .collect(),
                ),
            )
        }
        Proposition::IV => {
            let b_r: BTreeMap<Key, Option<f64>> =
                a_set.iter().map(|a| (a.clone(), post_mass(&di_r, &s_r, &d_r, a))).collect();
            let b_s: BTreeMap<Key, Option<f64>> =
                a_set.iter().map(|a| (a.clone(), post_mass(&di_s, &s_s, &d_s, a))).collect();
            (
                cells
                    .iter()
                    .map(|(a, n)| {
                        let v = prod(&[ratio(s_r.an(a, n), di_r.an(a, n)), d_r.n_given_a(a, n), inv(b_r[a])]);
                        ((a.clone(), n.clone()), v)
                    })
                    .collect(),
                normalize(a_set.iter().map(|a| (a.clone(), prod(&[di_r.marg_a(a), b_r[a]]))).collect()),
                normalize(a_set.iter().map(|a| (a.clone(), prod(&[di_s.marg_a(a), b_s[a]]))).collect()),
            )
        }
    };
    let pi = pi.ok_or_else(|| Error::EmptyCell("standard-population allowable distribution".into()))?;

    Ok(cells
        .iter()
        .map(|(a, n)| {
            let k = (a.clone(), n.clone());
            let np = n_part[&k];
            let f1 = match spec.proposition {
                Proposition::I => ratio(s_r.an(a, n), s_r.total),
                _ => pg.as_ref().and_then(|pg| prod(&[np, Some(pg[a])])),
            };
            Stratum {
                a: a.iter().map(|&b| f64::from_bits(b)).collect(),
                n: n.iter().map(|&b| f64::from_bits(b)).collect(),
                f0: s_r.an(a, n) / s_r.total,
                f1,
                f2: prod(&[np, Some(pi[a])]),
                mu: s_r.ysum.get(&k).and_then(|&ys| ratio(ys, s_r.an(a, n))),
            }
        })
        .collect())
}

/// Evaluates the identifying formula of `proposition` by enumeration over
/// the (a, n) cells: τ(r) = Σ μ(n, a) f2(n, a).
pub fn brute_force_identify(
    table: &ObservationTable,
    spec: &TrialSpec,
    proposition: Proposition,
    group: u8,
) -> Result<f64> {
    let mut spec = spec.clone();
    spec.proposition = proposition;
    let mut tau = 0.0;
    for st in densities(table, &spec, group)? {
        match (st.f2, st.mu) {
            (Some(0.0), _) => {}
            (Some(f), Some(mu)) => tau += f * mu,
            _ => return Err(Error::EmptyCell(format!("R={group}, a={:?}, n={:?}", st.a, st.n))),
        }
    }
    Ok(tau)
}
