//! Two-stage sampling fractions and their realization by Bernoulli thinning.
//!
//! Stage 0 is the eligible frame {Q = 1, R = r}. Stage 1 keeps a record of
//! cell (a, n) with probability α₁ and stage 2 keeps a stage-1 survivor with
//! probability α₂, so that the stage-2 sample of group r has outcome mean
//! τ(r). The product α₁α₂ is proportional to the estimator weight ω.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec::Vec;

use rand::Rng;

#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};

use crate::data_model::{ColumnKind, ObservationTable, Proposition, TrialSpec};
use crate::emulation::eligibility_flags;
use crate::estimators::compute_weights;
use crate::oracle_sim::densities;
use crate::rng;
use crate::{Error, Result};

/// Target sizes ℕ₀(r), ℕ₁(r), ℕ₂(r), indexed by group.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct DesignSizes {
    pub n0: [f64; 2],
    pub n1: [f64; 2],
    pub n2: [f64; 2],
}

impl DesignSizes {
    /// The same sizes for both groups.
    pub fn uniform(n0: f64, n1: f64, n2: f64) -> Self {
        Self { n0: [n0; 2], n1: [n1; 2], n2: [n2; 2] }
    }

    /// ℕ₀ ≥ ℕ₁ ≥ ℕ₂ > 0 for both groups. Equal sizes are allowed; they give
    /// the design whose product of fractions equals the estimator weight.
    pub fn validate(&self) -> Result<()> {
        for g in 0..2 {
            let (a, b, c) = (self.n0[g], self.n1[g], self.n2[g]);
            if !(a.is_finite() && c > 0.0 && a >= b && b >= c) {
                return Err(Error::InvalidSizes(format!("group {g}: need N0 >= N1 >= N2 > 0, got {a}, {b}, {c}")));
            }
        }
        Ok(())
    }
}

/// Fractions of one (a, n, r) cell of the frame.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct FractionStratum {
    pub group: u8,
    pub a: Vec<f64>,
    pub n: Vec<f64>,
    /// Frame records in the cell.
    pub count: usize,
    pub stage1: f64,
    pub stage2: f64,
    /// α*₁ and α*₂, set by [`normalize_fractions`].
    pub stage1_star: Option<f64>,
    pub stage2_star: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct SamplingFractions {
    pub proposition: Proposition,
    pub sizes: DesignSizes,
    pub strata: Vec<FractionStratum>,
    /// Stratum of each table row; `None` outside the frame.
    pub record_stratum: Vec<Option<usize>>,
    /// True when the fractions came from exact cell counts rather than
    /// fitted-model plug-ins.
    pub exact: bool,
}

fn cell_vars(
    table: &ObservationTable,
    spec: &TrialSpec,
) -> Result<(Vec<crate::data_model::VarRef>, Vec<crate::data_model::VarRef>)> {
    let a = spec.allowables.iter().map(|c| table.resolve(&c.name)).collect::<Result<Vec<_>>>()?;
    let n = spec.non_allowables.iter().map(|c| table.resolve(&c.name)).collect::<Result<Vec<_>>>()?;
    Ok((a, n))
}

fn key(v: f64) -> u64 {
    (v + 0.0).to_bits()
}

/// Raw fractions α₁, α₂ per cell. Discrete covariates use exact counting
/// densities; any continuous covariate switches to plug-ins from the
/// estimator's nuisance models, with α₁ the selection factor of ω and
/// α₂ = ω/α₁.
pub fn compute_sampling_fractions(
    table: &ObservationTable,
    spec: &TrialSpec,
    sizes: DesignSizes,
) -> Result<SamplingFractions> {
    spec.validate()?;
    sizes.validate()?;
    let (a_vars, n_vars) = cell_vars(table, spec)?;
    let exact = a_vars.iter().chain(&n_vars).all(|&v| table.kind_of(v) != ColumnKind::Continuous);
    let flags = match table.is_annotated() {
        true => table.records.iter().map(|r| r.flags.unwrap_or_default()).collect(),
        false => eligibility_flags(table, &spec.partition)?,
    };

    let mut strata: Vec<FractionStratum> = Vec::new();
    let mut index: BTreeMap<(u8, Vec<u64>, Vec<u64>), usize> = BTreeMap::new();
    let mut record_stratum = alloc::vec![None; table.len()];
    for (i, rec) in table.records.iter().enumerate() {
        if !flags[i].q {
            continue;
        }
        let a: Vec<f64> = a_vars.iter().map(|&v| table.value(i, v)).collect();
        let n: Vec<f64> = n_vars.iter().map(|&v| table.value(i, v)).collect();
        let k = (rec.group, a.iter().map(|&x| key(x)).collect(), n.iter().map(|&x| key(x)).collect());
        let next = strata.len();
        let s = *index.entry(k).or_insert(next);
        if s == next {
            strata.push(FractionStratum {
                group: rec.group,
                a,
                n,
                count: 0,
                stage1: f64::NAN,
                stage2: f64::NAN,
                stage1_star: None,
                stage2_star: None,
            });
        }
        strata[s].count += 1;
        record_stratum[i] = Some(s);
    }

    for g in 0..2u8 {
        let gi = usize::from(g);
        let (r1, r2) = (sizes.n1[gi] / sizes.n0[gi], sizes.n2[gi] / sizes.n1[gi]);
        if !strata.iter().any(|s| s.group == g) {
            continue;
        }
        if exact {
            let dens: BTreeMap<(Vec<u64>, Vec<u64>), _> = densities(table, spec, g)?
                .into_iter()
                .map(|d| ((d.a.iter().map(|&x| key(x)).collect(), d.n.iter().map(|&x| key(x)).collect()), d))
                .collect();
            for st in strata.iter_mut().filter(|s| s.group == g) {
                let k = (
                    st.a.iter().map(|&x| key(x)).collect::<Vec<_>>(),
                    st.n.iter().map(|&x| key(x)).collect::<Vec<_>>(),
                );
                let d = &dens[&k];
                let where_ = || format!("R={g}, a={:?}, n={:?}", st.a, st.n);
                let f1 = d
                    .f1
                    .ok_or_else(|| Error::PositivityViolation(format!("stage-1 density undefined at {}", where_())))?;
                let f2 = d
                    .f2
                    .ok_or_else(|| Error::PositivityViolation(format!("stage-2 density undefined at {}", where_())))?;
                st.stage1 = r1 * f1 / d.f0;
                st.stage2 = if f1 > 0.0 { r2 * f2 / f1 } else { 0.0 };
            }
        } else {
            let w = compute_weights(table, spec, g)?;
            let sel = w.factors.iter().find(|f| f.name == "selection");
            for (k, &row) in w.rows.iter().enumerate() {
                let Some(s) = record_stratum[row] else { continue };
                let a1 = sel.map_or(1.0, |f| f.values[k]);
                let st = &mut strata[s];
                st.stage1 = r1 * a1;
                st.stage2 = if a1 > 0.0 { r2 * w.weights[k] / a1 } else { 0.0 };
            }
        }
    }
    if let Some(st) = strata.iter().find(|s| !(s.stage1.is_finite() && s.stage2.is_finite())) {
        return Err(Error::PositivityViolation(format!(
            "non-finite fraction at R={}, a={:?}, n={:?}",
            st.group, st.a, st.n
        )));
    }
    Ok(SamplingFractions { proposition: spec.proposition, sizes, strata, record_stratum, exact })
}

/// α* = α · min(1, 1 / max α) per stage, over both groups at once, so every
/// fraction lies in [0, 1] and ratios between cells are kept.
pub fn normalize_fractions(mut f: SamplingFractions) -> Result<SamplingFractions> {
    let max1 = f.strata.iter().map(|s| s.stage1).fold(0.0, f64::max);
    let max2 = f.strata.iter().map(|s| s.stage2).fold(0.0, f64::max);
    if !(max1 > 0.0 && max2 > 0.0) {
        return Err(Error::DegenerateFractions);
    }
    let (c1, c2) = ((1.0 / max1).min(1.0), (1.0 / max2).min(1.0));
    for s in &mut f.strata {
        s.stage1_star = Some(s.stage1 * c1);
        s.stage2_star = Some(s.stage2 * c2);
    }
    Ok(f)
}

/// Stage-1 survivors; `stage[k]` is 2 when row k also survived stage 2.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoPhaseSample {
    pub table: ObservationTable,
    pub stage: Vec<u8>,
}

impl TwoPhaseSample {
    /// The stage-2 sample.
    pub fn final_sample(&self) -> ObservationTable {
        let rows: Vec<usize> = (0..self.stage.len()).filter(|&k| self.stage[k] == 2).collect();
        self.table.subset(&rows)
    }
}

/// Independent Bernoulli(α*₁) then Bernoulli(α*₂) draws per frame record,
/// keyed by row index.
pub fn two_phase_sample(table: &ObservationTable, fractions: &SamplingFractions, seed: u64) -> Result<TwoPhaseSample> {
    if fractions.record_stratum.len() != table.len() {
        return Err(Error::DimensionMismatch { expected: fractions.record_stratum.len(), found: table.len() });
    }
    let base = rng::hash_bytes(seed, b"two_phase");
    let mut rows = Vec::new();
    let mut stage = Vec::new();
    for (i, s) in fractions.record_stratum.iter().enumerate() {
        let Some(s) = *s else { continue };
        let st = &fractions.strata[s];
        let (Some(p1), Some(p2)) = (st.stage1_star, st.stage2_star) else {
            return Err(Error::InvalidSizes("fractions must be normalized before sampling".into()));
        };
        let mut g = rng::stream(base, i as u64);
        let (u1, u2): (f64, f64) = (g.gen(), g.gen());
        if u1 < p1 {
            rows.push(i);
            stage.push(if u2 < p2 { 2 } else { 1 });
        }
    }
    Ok(TwoPhaseSample { table: table.subset(&rows), stage })
}
