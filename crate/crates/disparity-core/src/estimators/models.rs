//! Nuisance and outcome models over table subsets.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use nalgebra::DMatrix;

#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};

use crate::data_model::{ColumnKind, Covariate, ModelForm, ObservationTable, OutcomeKind, TrialSpec, VarRef};
use crate::numerics::{self, default_knots, Family, GlmFit, IrlsOptions, SplineBasis};
use crate::{Error, Result};

/// Audit entry for one fitted model.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct ModelSummary {
    pub label: String,
    pub rows: usize,
    /// Number of populated cells for saturated fits.
    pub cells: Option<usize>,
    pub fit: Option<GlmFit>,
}

enum Encoder {
    Raw,
    Dummies(Vec<f64>),
    Spline(SplineBasis),
}

struct Var {
    var: VarRef,
    encoder: Encoder,
}

enum FitKind {
    Cells(BTreeMap<Vec<u64>, f64>),
    Glm(GlmFit),
}

pub(crate) struct Fitted {
    label: String,
    vars: Vec<usize>,
    kind: FitKind,
}

/// Which covariates a model conditions on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Cov {
    A,
    NA,
}

/// Table plus per-variable encoders, shared by every model of one analysis.
pub(crate) struct ModelContext<'a> {
    pub table: &'a ObservationTable,
    form: ModelForm,
    vars: Vec<Var>,
    a: Vec<usize>,
    na: Vec<usize>,
    pub summaries: Vec<ModelSummary>,
}

fn key_of(x: f64) -> u64 {
    (x + 0.0).to_bits()
}

impl<'a> ModelContext<'a> {
    pub fn new(table: &'a ObservationTable, spec: &TrialSpec) -> Result<Self> {
        let mut vars = Vec::new();
        let mut add = |c: &Covariate| -> Result<usize> {
            let var = table.resolve(&c.name)?;
            let xs: Vec<f64> = (0..table.len()).map(|i| table.value(i, var)).collect();
            let encoder = match table.kind_of(var) {
                ColumnKind::Binary => Encoder::Raw,
                ColumnKind::Categorical => {
                    let mut levels = xs.clone();
                    levels.sort_by(f64::total_cmp);
                    levels.dedup();
                    Encoder::Dummies(levels.into_iter().skip(1).collect())
                }
                ColumnKind::Continuous => {
                    let knots = match &c.knots {
                        Some(k) => k.clone(),
                        None => default_knots(&xs),
                    };
                    Encoder::Spline(SplineBasis::new(&knots)?)
                }
            };
            vars.push(Var { var, encoder });
            Ok(vars.len() - 1)
        };
        let a: Vec<usize> = spec.allowables.iter().map(&mut add).collect::<Result<_>>()?;
        let n: Vec<usize> = spec.non_allowables.iter().map(&mut add).collect::<Result<_>>()?;
        let na = n.iter().chain(&a).copied().collect();
        Ok(Self { table, form: spec.model, vars, a, na, summaries: Vec::new() })
    }

    fn cov(&self, c: Cov) -> Vec<usize> {
        match c {
            Cov::A => self.a.clone(),
            Cov::NA => self.na.clone(),
        }
    }

    /// Family for regressions of Y or of predicted Y.
    pub fn outcome_family(&self) -> Family {
        match self.table.outcome_kind {
            OutcomeKind::Binary => Family::Binomial,
            OutcomeKind::Continuous => Family::Gaussian,
        }
    }

    fn cell_key(&self, vars: &[usize], row: usize) -> Vec<u64> {
        vars.iter().map(|&v| key_of(self.table.value(row, self.vars[v].var))).collect()
    }

    fn design(&self, vars: &[usize], rows: &[usize]) -> DMatrix<f64> {
        let mut buf = Vec::new();
        let mut data = Vec::new();
        let mut ncols = 0;
        for &i in rows {
            buf.clear();
            buf.push(1.0);
            for &v in vars {
                let x = self.table.value(i, self.vars[v].var);
                match &self.vars[v].encoder {
                    Encoder::Raw => buf.push(x),
                    Encoder::Dummies(levels) => buf.extend(levels.iter().map(|&l| f64::from(u8::from(x == l)))),
                    Encoder::Spline(b) => b.row(x, &mut buf),
                }
            }
            ncols = buf.len();
            data.extend_from_slice(&buf);
        }
        if rows.is_empty() {
            ncols = 1 + vars
                .iter()
                .map(|&v| match &self.vars[v].encoder {
                    Encoder::Raw => 1,
                    Encoder::Dummies(l) => l.len(),
                    Encoder::Spline(b) => b.ncols(),
                })
                .sum::<usize>();
        }
        DMatrix::from_row_slice(rows.len(), ncols, &data)
    }

    /// Fit E(y | covariates) on `rows`; `y` and `w` align with `rows`.
    pub fn fit(
        &mut self,
        label: &str,
        cov: Cov,
        rows: &[usize],
        y: &[f64],
        w: Option<&[f64]>,
        family: Family,
    ) -> Result<Fitted> {
        if rows.is_empty() {
            return Err(Error::EmptyStage(label.to_string()));
        }
        let vars = self.cov(cov);
        let (kind, summary) = match self.form {
            ModelForm::Saturated => {
                let mut acc: BTreeMap<Vec<u64>, (f64, f64)> = BTreeMap::new();
                for (k, &i) in rows.iter().enumerate() {
                    let wi = w.map_or(1.0, |w| w[k]);
                    let e = acc.entry(self.cell_key(&vars, i)).or_insert((0.0, 0.0));
                    e.0 += wi * y[k];
                    e.1 += wi;
                }
                let cells: BTreeMap<Vec<u64>, f64> =
                    acc.into_iter().filter(|(_, (_, sw))| *sw > 0.0).map(|(k, (swy, sw))| (k, swy / sw)).collect();
                let s =
                    ModelSummary { label: label.to_string(), rows: rows.len(), cells: Some(cells.len()), fit: None };
                (FitKind::Cells(cells), s)
            }
            ModelForm::MainEffects => {
                let x = self.design(&vars, rows);
                let fit = numerics::fit_glm(&x, y, w, family, IrlsOptions::default())
                    .map_err(|e| Error::ModelFailure { model: label.to_string(), detail: e.to_string() })?;
                if !fit.converged {
                    return Err(Error::ModelFailure {
                        model: label.to_string(),
                        detail: format!("no convergence after {} iterations", fit.iterations),
                    });
                }
                let s =
                    ModelSummary { label: label.to_string(), rows: rows.len(), cells: None, fit: Some(fit.clone()) };
                (FitKind::Glm(fit), s)
            }
        };
        self.summaries.push(summary);
        Ok(Fitted { label: label.to_string(), vars, kind })
    }

    /// Binary-indicator fit, a shorthand for conditional probabilities.
    pub fn fit_indicator(
        &mut self,
        label: &str,
        cov: Cov,
        rows: &[usize],
        event: impl Fn(usize) -> bool,
    ) -> Result<Fitted> {
        let y: Vec<f64> = rows.iter().map(|&i| f64::from(u8::from(event(i)))).collect();
        self.fit(label, cov, rows, &y, None, Family::Binomial)
    }

    /// Predictions on `rows`; `None` marks a saturated cell without support.
    pub fn predict(&self, f: &Fitted, rows: &[usize]) -> Result<Vec<Option<f64>>> {
        match &f.kind {
            FitKind::Cells(cells) => Ok(rows.iter().map(|&i| cells.get(&self.cell_key(&f.vars, i)).copied()).collect()),
            FitKind::Glm(fit) => {
                let x = self.design(&f.vars, rows);
                Ok(numerics::predict(fit, &x)?.into_iter().map(Some).collect())
            }
        }
    }

    /// Predictions that must exist; a missing cell is a positivity failure.
    pub fn predict_all(&self, f: &Fitted, rows: &[usize]) -> Result<Vec<f64>> {
        self.predict(f, rows)?
            .into_iter()
            .zip(rows)
            .map(|(p, &i)| p.ok_or_else(|| self.no_support(&f.label, i)))
            .collect()
    }

    pub fn no_support(&self, label: &str, row: usize) -> Error {
        let r = &self.table.records[row];
        let cells: Vec<String> =
            self.na.iter().map(|&v| format!("{}", self.table.value(row, self.vars[v].var))).collect();
        Error::PositivityViolation(format!(
            "model `{label}` has no support for record ({}, {}) with covariates [{}]",
            r.person_id,
            r.visit_id,
            cells.join(", ")
        ))
    }
}

/// Empirical proportion of `event` among `rows`, computed the same way a
/// covariate-free saturated fit would be.
pub(crate) fn proportion(rows: &[usize], event: impl Fn(usize) -> bool) -> f64 {
    let hits: f64 = rows.iter().map(|&i| f64::from(u8::from(event(i)))).sum();
    hits / rows.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data_model::tests::rec;
    use crate::data_model::*;
    use alloc::vec;

    fn spec(form: ModelForm) -> TrialSpec {
        TrialSpec {
            partition: EligibilityPartition::default(),
            allowables: vec![Covariate::new("x")],
            non_allowables: vec![],
            standard: StandardPopulation::AllEligible,
            proposition: Proposition::I,
            estimator: EstimatorKind::Both,
            model: form,
            prop3_weights: Prop3Weights::Standard,
            truncation: None,
            scale: Scale::Difference,
        }
    }

    fn table() -> ObservationTable {
        let ys = [
            (0.0, 1.0),
            (0.0, 0.0),
            (1.0, 1.0),
            (1.0, 1.0),
            (1.0, 1.0),
            (1.0, 0.0),
            (2.0, 0.0),
            (2.0, 1.0),
            (2.0, 0.0),
        ];
        let recs = ys.iter().enumerate().map(|(k, &(x, y))| rec(&format!("{k}"), "1", 0, y, vec![x])).collect();
        ObservationTable::new(vec![ColumnMeta::new("x", ColumnKind::Categorical)], OutcomeKind::Binary, recs).unwrap()
    }

    #[test]
    fn glm_on_cell_dummies_matches_cell_means() {
        let t = table();
        let rows: Vec<usize> = (0..t.len()).collect();
        let y: Vec<f64> = t.records.iter().map(|r| r.outcome).collect();
        let s = spec(ModelForm::MainEffects);
        let mut glm = ModelContext::new(&t, &s).unwrap();
        let fg = glm.fit("y", Cov::A, &rows, &y, None, Family::Binomial).unwrap();
        let s2 = spec(ModelForm::Saturated);
        let mut sat = ModelContext::new(&t, &s2).unwrap();
        let fs = sat.fit("y", Cov::A, &rows, &y, None, Family::Binomial).unwrap();
        let pg = glm.predict_all(&fg, &rows).unwrap();
        let ps = sat.predict_all(&fs, &rows).unwrap();
        for (a, b) in pg.iter().zip(&ps) {
            assert!((a - b).abs() < 1e-8);
        }
        assert!((ps[0] - 0.5).abs() < 1e-15 && (ps[2] - 0.75).abs() < 1e-15);
    }

    #[test]
    fn unsupported_cell_is_none() {
        let t = table();
        let s = spec(ModelForm::Saturated);
        let mut m = ModelContext::new(&t, &s).unwrap();
        let fit = m.fit_indicator("p", Cov::A, &[0, 1, 2], |i| t.records[i].outcome == 1.0).unwrap();
        let p = m.predict(&fit, &[0, 8]).unwrap();
        assert_eq!(p, vec![Some(0.5), None]);
        assert!(matches!(m.predict_all(&fit, &[8]), Err(Error::PositivityViolation(_))));
    }
}
