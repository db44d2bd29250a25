//! Tabular data model, trial specification and table validation.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};

use crate::emulation::{self, EligibilityFlags};
use crate::{Error, Result};

/// Reserved variable name that resolves to a record's time unit, so calendar
/// time can be listed among the allowables or used in criteria.
pub const TIME_UNIT: &str = "time_unit";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize), serde(rename_all = "snake_case"))]
pub enum ColumnKind {
    Binary,
    Categorical,
    Continuous,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize), serde(rename_all = "snake_case"))]
pub enum OutcomeKind {
    Binary,
    Continuous,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct ColumnMeta {
    pub name: String,
    pub kind: ColumnKind,
}

impl ColumnMeta {
    pub fn new(name: impl Into<String>, kind: ColumnKind) -> Self {
        Self { name: name.into(), kind }
    }
}

/// One person-visit row.
#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    pub person_id: String,
    pub visit_id: String,
    pub cluster_id: String,
    pub time_unit: i64,
    /// 1 = marginalized, 0 = privileged referent.
    pub group: u8,
    pub outcome: f64,
    /// Covariate values aligned with [`ObservationTable::columns`].
    pub values: Vec<f64>,
    pub flags: Option<EligibilityFlags>,
    /// Standard-population membership T, set by
    /// [`emulation::assign_standard_membership`].
    pub standard: Option<bool>,
}

/// Resolved reference to a variable of the table.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VarRef {
    Column(usize),
    TimeUnit,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObservationTable {
    pub columns: Vec<ColumnMeta>,
    pub outcome_kind: OutcomeKind,
    pub records: Vec<Record>,
}

impl ObservationTable {
    /// Build a table and check the record invariants.
    pub fn new(columns: Vec<ColumnMeta>, outcome_kind: OutcomeKind, records: Vec<Record>) -> Result<Self> {
        let table = Self { columns, outcome_kind, records };
        table.check()?;
        Ok(table)
    }

    pub fn check(&self) -> Result<()> {
        let mut names = BTreeSet::new();
        for c in &self.columns {
            if c.name == TIME_UNIT || !names.insert(c.name.as_str()) {
                return Err(Error::InvalidSpec(format!("column name `{}` is reserved or repeated", c.name)));
            }
        }
        let mut keys = BTreeSet::new();
        for (row, rec) in self.records.iter().enumerate() {
            if !keys.insert((rec.person_id.as_str(), rec.visit_id.as_str())) {
                return Err(Error::DuplicateKey(rec.person_id.clone(), rec.visit_id.clone()));
            }
            if rec.group > 1 {
                return Err(bad("R", row, "group must be 0 or 1"));
            }
            if !rec.outcome.is_finite() {
                return Err(bad("Y", row, "outcome must be finite"));
            }
            if self.outcome_kind == OutcomeKind::Binary && rec.outcome != 0.0 && rec.outcome != 1.0 {
                return Err(bad("Y", row, "binary outcome must be 0 or 1"));
            }
            if rec.values.len() != self.columns.len() {
                return Err(Error::DimensionMismatch { expected: self.columns.len(), found: rec.values.len() });
            }
            for (&v, meta) in rec.values.iter().zip(&self.columns) {
                if !v.is_finite() {
                    return Err(bad(&meta.name, row, "value must be finite"));
                }
                if meta.kind == ColumnKind::Binary && v != 0.0 && v != 1.0 {
                    return Err(bad(&meta.name, row, "binary column must be 0 or 1"));
                }
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name == name)
    }

    pub fn resolve(&self, name: &str) -> Result<VarRef> {
        if name == TIME_UNIT {
            return Ok(VarRef::TimeUnit);
        }
        self.column_index(name).map(VarRef::Column).ok_or_else(|| Error::UnknownVariable(name.to_string()))
    }

    pub fn kind_of(&self, var: VarRef) -> ColumnKind {
        match var {
            VarRef::Column(c) => self.columns[c].kind,
            VarRef::TimeUnit => ColumnKind::Continuous,
        }
    }

    pub fn value(&self, row: usize, var: VarRef) -> f64 {
        let rec = &self.records[row];
        match var {
            VarRef::Column(c) => rec.values[c],
            VarRef::TimeUnit => rec.time_unit as f64,
        }
    }

    pub fn is_annotated(&self) -> bool {
        !self.records.is_empty() && self.records.iter().all(|r| r.flags.is_some())
    }

    pub fn flags(&self, row: usize) -> Result<EligibilityFlags> {
        self.records[row].flags.ok_or(Error::NotAnnotated)
    }

    /// A copy holding only the given rows, in the given order.
    pub fn subset(&self, rows: &[usize]) -> Self {
        Self {
            columns: self.columns.clone(),
            outcome_kind: self.outcome_kind,
            records: rows.iter().map(|&i| self.records[i].clone()).collect(),
        }
    }

    pub fn count_by_group(&self) -> [usize; 2] {
        let mut n = [0usize; 2];
        for r in &self.records {
            n[usize::from(r.group)] += 1;
        }
        n
    }
}

fn bad(column: &str, row: usize, detail: &str) -> Error {
    Error::BadValue { column: column.to_string(), row, detail: detail.to_string() }
}

/// Admissible value set 𝕨ⱼ of one eligibility criterion.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize), serde(rename_all = "snake_case"))]
pub enum AdmissibleSet {
    Values(Vec<f64>),
    /// Closed interval; a missing bound is unbounded.
    Interval {
        lower: Option<f64>,
        upper: Option<f64>,
    },
}

impl AdmissibleSet {
    pub fn contains(&self, v: f64) -> bool {
        match self {
            AdmissibleSet::Values(vs) => vs.contains(&v),
            AdmissibleSet::Interval { lower, upper } => {
                lower.map_or(true, |l| v >= l) && upper.map_or(true, |u| v <= u)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct Criterion {
    pub variable: String,
    pub admissible: AdmissibleSet,
}

impl Criterion {
    pub fn values(variable: impl Into<String>, values: &[f64]) -> Self {
        Self { variable: variable.into(), admissible: AdmissibleSet::Values(values.to_vec()) }
    }
}

/// Eligibility criteria split by temporal order: before (W‡), at (W†) and
/// after (W′) the intervened variables.
#[derive(Debug, Clone, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct EligibilityPartition {
    pub w_ddagger: Vec<Criterion>,
    pub w_dagger: Vec<Criterion>,
    pub w_prime: Vec<Criterion>,
    pub prime_affected_by_dagger: bool,
}

impl EligibilityPartition {
    pub fn variables(&self) -> impl Iterator<Item = &str> {
        self.w_ddagger.iter().chain(&self.w_dagger).chain(&self.w_prime).map(|c| c.variable.as_str())
    }
}

/// A covariate with its modeling hint. Knots apply to continuous covariates
/// under main-effects models; `None` means the 0.10/0.50/0.90 quantiles.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct Covariate {
    pub name: String,
    #[cfg_attr(feature = "serde", serde(default, skip_serializing_if = "Option::is_none"))]
    pub knots: Option<Vec<f64>>,
}

impl Covariate {
    pub fn new(name: impl Into<String>) -> Self {
        Self { name: name.into(), knots: None }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize), serde(rename_all = "snake_case"))]
pub enum StandardPopulation {
    MarginalizedGroup,
    PrivilegedGroup,
    AllEligible,
    Predicate { variable: String, values: Vec<f64> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub enum Proposition {
    I,
    II,
    III,
    IV,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize), serde(rename_all = "snake_case"))]
pub enum EstimatorKind {
    Weighting,
    Ice,
    Both,
}

impl EstimatorKind {
    pub fn expand(self) -> &'static [EstimatorKind] {
        match self {
            EstimatorKind::Weighting => &[EstimatorKind::Weighting],
            EstimatorKind::Ice => &[EstimatorKind::Ice],
            EstimatorKind::Both => &[EstimatorKind::Weighting, EstimatorKind::Ice],
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            EstimatorKind::Weighting => "weighting",
            EstimatorKind::Ice => "ice",
            EstimatorKind::Both => "both",
        }
    }
}

/// Nuisance and outcome model family.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize), serde(rename_all = "snake_case"))]
pub enum ModelForm {
    /// Full interaction of all conditioning variables: weighted cell means.
    Saturated,
    /// Main effects, dummies for categorical and restricted cubic splines for
    /// continuous covariates.
    MainEffects,
}

/// Proposition III weight construction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize), serde(rename_all = "snake_case"))]
pub enum Prop3Weights {
    #[default]
    Standard,
    Alternate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize), serde(rename_all = "snake_case"))]
pub enum Scale {
    #[default]
    Difference,
}

/// Symmetric percentile truncation of weights, e.g. `0.01` for 1st/99th.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct Truncation {
    pub tail: f64,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct TrialSpec {
    pub partition: EligibilityPartition,
    pub allowables: Vec<Covariate>,
    pub non_allowables: Vec<Covariate>,
    pub standard: StandardPopulation,
    pub proposition: Proposition,
    pub estimator: EstimatorKind,
    pub model: ModelForm,
    #[cfg_attr(feature = "serde", serde(default))]
    pub prop3_weights: Prop3Weights,
    #[cfg_attr(feature = "serde", serde(default))]
    pub truncation: Option<Truncation>,
    #[cfg_attr(feature = "serde", serde(default))]
    pub scale: Scale,
}

impl TrialSpec {
    /// Structural checks that do not need data.
    pub fn validate(&self) -> Result<()> {
        let p = &self.partition;
        let mut seen = BTreeSet::new();
        for v in p.variables() {
            if !seen.insert(v) {
                return Err(Error::InvalidSpec(format!(
                    "variable `{v}` appears in more than one eligibility criterion"
                )));
            }
        }
        let a: BTreeSet<&str> = self.allowables.iter().map(|c| c.name.as_str()).collect();
        let n: BTreeSet<&str> = self.non_allowables.iter().map(|c| c.name.as_str()).collect();
        if a.len() != self.allowables.len() || n.len() != self.non_allowables.len() {
            return Err(Error::InvalidSpec("repeated covariate name".into()));
        }
        if let Some(x) = a.intersection(&n).next() {
            return Err(Error::InvalidSpec(format!("`{x}` is both allowable and non-allowable")));
        }
        if let Some(x) = seen.iter().find(|v| a.contains(*v) || n.contains(*v)) {
            return Err(Error::InvalidSpec(format!("`{x}` is both a covariate and an eligibility variable")));
        }
        match self.proposition {
            Proposition::I => {
                if !p.w_prime.is_empty() {
                    return Err(Error::SpecMismatch("Proposition I requires an empty W′".into()));
                }
            }
            Proposition::II => {
                if p.w_dagger.is_empty() {
                    return Err(Error::SpecMismatch("Proposition II requires a nonempty W†".into()));
                }
                if !p.w_prime.is_empty() {
                    return Err(Error::SpecMismatch("Proposition II requires an empty W′".into()));
                }
            }
            Proposition::III | Proposition::IV => {
                if p.w_dagger.is_empty() {
                    return Err(Error::SpecMismatch("Propositions III/IV require a nonempty W†".into()));
                }
                if p.w_prime.is_empty() {
                    return Err(Error::SpecMismatch("Propositions III/IV require a nonempty W′".into()));
                }
                let want = self.proposition == Proposition::IV;
                if p.prime_affected_by_dagger != want {
                    return Err(Error::SpecMismatch(format!(
                        "Proposition {:?} requires prime_affected_by_dagger = {want}",
                        self.proposition
                    )));
                }
            }
        }
        if let Some(t) = self.truncation {
            if !(t.tail > 0.0 && t.tail < 0.5) {
                return Err(Error::InvalidSpec("truncation tail must lie in (0, 0.5)".into()));
            }
        }
        Ok(())
    }

    /// Selector s of the standard population, independent of eligibility.
    pub fn selector(&self, table: &ObservationTable) -> Result<Vec<bool>> {
        Ok(match &self.standard {
            StandardPopulation::MarginalizedGroup => table.records.iter().map(|r| r.group == 1).collect(),
            StandardPopulation::PrivilegedGroup => table.records.iter().map(|r| r.group == 0).collect(),
            StandardPopulation::AllEligible => alloc::vec![true; table.len()],
            StandardPopulation::Predicate { variable, values } => {
                let var = table.resolve(variable)?;
                (0..table.len()).map(|i| values.contains(&table.value(i, var))).collect()
            }
        })
    }
}

/// Kind of assumption a flagged cell breaks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize), serde(rename_all = "snake_case"))]
pub enum ViolationKind {
    /// A4: an allowable stratum with standard-population mass but no
    /// eligible records of some group.
    Overlap,
    /// A3: a (a, n, r) cell with W‡ satisfied but nobody satisfying W†.
    Positivity,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct Violation {
    pub kind: ViolationKind,
    pub group: u8,
    pub a: Vec<f64>,
    pub n: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct StratumCount {
    pub a: Vec<f64>,
    pub n: Option<Vec<f64>>,
    /// Eligible counts by group (A strata) or W‡-eligible counts by group
    /// (A×N strata).
    pub by_group: [usize; 2],
    /// Standard-population count (A strata) or W†-satisfied counts by group
    /// (A×N strata, first entry group 0).
    pub secondary: [usize; 2],
}

#[derive(Debug, Clone, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct ValidationReport {
    pub a_strata: Vec<StratumCount>,
    pub an_strata: Vec<StratumCount>,
    pub violations: Vec<Violation>,
    pub warnings: Vec<String>,
}

/// a, n, W‡ counts by group, W† counts by group.
type AnCell = (Vec<f64>, Vec<f64>, [usize; 2], [usize; 2]);

/// Discretizer used by the validation report: exact values for discrete
/// variables, decile bins for continuous ones.
struct Binner {
    var: VarRef,
    cuts: Option<Vec<f64>>,
}

impl Binner {
    fn new(table: &ObservationTable, var: VarRef, rows: &[usize]) -> Self {
        if table.kind_of(var) != ColumnKind::Continuous {
            return Self { var, cuts: None };
        }
        let mut xs: Vec<f64> = rows.iter().map(|&i| table.value(i, var)).collect();
        xs.sort_by(f64::total_cmp);
        let cuts = (1..10).map(|k| crate::numerics::quantile_sorted(&xs, k as f64 / 10.0)).collect();
        Self { var, cuts: Some(cuts) }
    }

    fn bin(&self, table: &ObservationTable, row: usize) -> f64 {
        let v = table.value(row, self.var);
        match &self.cuts {
            None => v,
            Some(cuts) => cuts.iter().filter(|&&c| v > c).count() as f64,
        }
    }
}

fn key_bits(v: &[f64]) -> Vec<u64> {
    v.iter().map(|x| (x + 0.0).to_bits()).collect()
}

/// Cell counts and A3/A4 screening. Never mutates the table; computes
/// eligibility and standard membership on the fly when absent.
pub fn validate_table(table: &ObservationTable, spec: &TrialSpec) -> Result<ValidationReport> {
    let flags: Vec<EligibilityFlags> = if table.is_annotated() {
        table.records.iter().map(|r| r.flags.unwrap_or_default()).collect()
    } else {
        emulation::eligibility_flags(table, &spec.partition)?
    };
    let selector = spec.selector(table)?;
    let a_vars: Vec<VarRef> = spec.allowables.iter().map(|c| table.resolve(&c.name)).collect::<Result<_>>()?;
    let n_vars: Vec<VarRef> = spec.non_allowables.iter().map(|c| table.resolve(&c.name)).collect::<Result<_>>()?;

    let mut report = ValidationReport::default();
    let eligible: Vec<usize> = (0..table.len()).filter(|&i| flags[i].q).collect();
    let pre: Vec<usize> = (0..table.len()).filter(|&i| flags[i].q_ddagger).collect();

    for &v in a_vars.iter().chain(&n_vars) {
        if table.kind_of(v) == ColumnKind::Continuous {
            let name = match v {
                VarRef::Column(c) => table.columns[c].name.clone(),
                VarRef::TimeUnit => TIME_UNIT.to_string(),
            };
            report
                .warnings
                .push(format!("continuous covariate `{name}` screened by deciles; model extrapolation possible"));
        }
    }
    if !a_vars.contains(&VarRef::TimeUnit) {
        let units: BTreeSet<i64> = table.records.iter().map(|r| r.time_unit).collect();
        if units.len() > 1 {
            report.warnings.push("multiple time units present but time_unit is not an allowable".into());
        }
    }

    let a_bins: Vec<Binner> = a_vars.iter().map(|&v| Binner::new(table, v, &eligible)).collect();
    let mut a_cells: BTreeMap<Vec<u64>, (Vec<f64>, [usize; 2], usize)> = BTreeMap::new();
    for &i in &eligible {
        let a: Vec<f64> = a_bins.iter().map(|b| b.bin(table, i)).collect();
        let e = a_cells.entry(key_bits(&a)).or_insert_with(|| (a, [0, 0], 0));
        e.1[usize::from(table.records[i].group)] += 1;
        if selector[i] {
            e.2 += 1;
        }
    }
    for (a, by_group, t) in a_cells.into_values() {
        if t > 0 {
            for g in 0..2u8 {
                if by_group[usize::from(g)] == 0 {
                    report.violations.push(Violation { kind: ViolationKind::Overlap, group: g, a: a.clone(), n: None });
                }
            }
        }
        report.a_strata.push(StratumCount { a, n: None, by_group, secondary: [t, 0] });
    }

    if spec.proposition != Proposition::I {
        let a_bins: Vec<Binner> = a_vars.iter().map(|&v| Binner::new(table, v, &pre)).collect();
        let n_bins: Vec<Binner> = n_vars.iter().map(|&v| Binner::new(table, v, &pre)).collect();
        let mut cells: BTreeMap<(Vec<u64>, Vec<u64>), AnCell> = BTreeMap::new();
        for &i in &pre {
            let a: Vec<f64> = a_bins.iter().map(|b| b.bin(table, i)).collect();
            let n: Vec<f64> = n_bins.iter().map(|b| b.bin(table, i)).collect();
            let g = usize::from(table.records[i].group);
            let e = cells.entry((key_bits(&a), key_bits(&n))).or_insert_with(|| (a, n, [0, 0], [0, 0]));
            e.2[g] += 1;
            if flags[i].q_dagger {
                e.3[g] += 1;
            }
        }
        for (a, n, by_group, dagger) in cells.into_values() {
            for g in 0..2u8 {
                let gi = usize::from(g);
                if by_group[gi] > 0 && dagger[gi] == 0 {
                    report.violations.push(Violation {
                        kind: ViolationKind::Positivity,
                        group: g,
                        a: a.clone(),
                        n: Some(n.clone()),
                    });
                }
            }
            report.an_strata.push(StratumCount { a, n: Some(n), by_group, secondary: dagger });
        }
    }
    Ok(report)
}
