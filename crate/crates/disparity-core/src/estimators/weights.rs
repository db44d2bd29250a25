use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};

use super::models::{proportion, Cov, ModelContext, ModelSummary};
use super::Frame;
use crate::data_model::{ObservationTable, Prop3Weights, Proposition, TrialSpec};
use crate::numerics::{quantile_sorted, Family};
use crate::{Error, Result};

/// Smallest admissible denominator probability.
pub const POSITIVITY_FLOOR: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct WeightDiagnostics {
    pub mean: f64,
    pub min: f64,
    pub max: f64,
    pub count: usize,
}

impl WeightDiagnostics {
    pub fn of(w: &[f64]) -> Self {
        if w.is_empty() {
            return Self::default();
        }
        let (min, max) = w.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)));
        Self { mean: w.iter().sum::<f64>() / w.len() as f64, min, max, count: w.len() }
    }
}

/// One multiplicative factor of the weight, kept for audit.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct WeightFactor {
    pub name: String,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct WeightVector {
    pub proposition: Proposition,
    pub group: u8,
    /// Table rows of {Q = 1, R = r}, aligned with `weights`.
    pub rows: Vec<usize>,
    pub weights: Vec<f64>,
    pub factors: Vec<WeightFactor>,
    pub diagnostics: WeightDiagnostics,
    /// Truncation bounds applied, if any.
    pub truncated: Option<(f64, f64)>,
    pub models: Vec<ModelSummary>,
}

/// A ratio of per-record probabilities.
struct Ratio {
    name: String,
    num: Vec<Option<f64>>,
    den: Vec<Option<f64>>,
}

impl Ratio {
    fn constant(name: &str, num: f64, den: f64, len: usize) -> Self {
        Self { name: name.into(), num: vec![Some(num); len], den: vec![Some(den); len] }
    }
}

fn combine(ctx: &ModelContext, rows: &[usize], ratios: &[Ratio]) -> Result<(Vec<f64>, Vec<WeightFactor>)> {
    let mut weights = Vec::with_capacity(rows.len());
    let mut factors: Vec<WeightFactor> =
        ratios.iter().map(|r| WeightFactor { name: r.name.clone(), values: Vec::with_capacity(rows.len()) }).collect();
    for (k, &row) in rows.iter().enumerate() {
        // A zero numerator means the standard population has no mass in this
        // stratum; the record gets weight 0 whatever the other factors are.
        if ratios.iter().any(|r| r.num[k] == Some(0.0)) {
            weights.push(0.0);
            for f in factors.iter_mut() {
                f.values.push(0.0);
            }
            continue;
        }
        let mut num = 1.0;
        let mut den = 1.0;
        for (r, f) in ratios.iter().zip(factors.iter_mut()) {
            let n = r.num[k].ok_or_else(|| ctx.no_support(&r.name, row))?;
            let d = match r.den[k] {
                Some(d) if d >= POSITIVITY_FLOOR => d,
                _ => return Err(ctx.no_support(&r.name, row)),
            };
            f.values.push(n / d);
            num *= n;
            den *= d;
        }
        weights.push(num / den);
    }
    if let Some(i) = weights.iter().position(|w| !w.is_finite()) {
        return Err(Error::PositivityViolation(format!("non-finite weight at row {}", rows[i])));
    }
    Ok((weights, factors))
}

fn some(v: Vec<f64>) -> Vec<Option<f64>> {
    v.into_iter().map(Some).collect()
}

/// Ratio P(event | cov) on `fit_rows` over P(event | cov') on `fit_rows'`,
/// both evaluated on `eval`.
struct RatioBuilder<'c, 'a> {
    ctx: &'c mut ModelContext<'a>,
    eval: &'c [usize],
}

impl RatioBuilder<'_, '_> {
    fn prob(
        &mut self,
        label: &str,
        cov: Cov,
        fit_rows: &[usize],
        event: impl Fn(usize) -> bool,
    ) -> Result<Vec<Option<f64>>> {
        let f = self.ctx.fit_indicator(label, cov, fit_rows, event)?;
        self.ctx.predict(&f, self.eval)
    }

    /// As [`Self::prob`], and fails if the probability vanishes anywhere on
    /// `support` (the standard-population rows the weights must reach).
    fn prob_on(
        &mut self,
        label: &str,
        cov: Cov,
        fit_rows: &[usize],
        event: impl Fn(usize) -> bool,
        support: &[usize],
    ) -> Result<Vec<Option<f64>>> {
        let f = self.ctx.fit_indicator(label, cov, fit_rows, event)?;
        for (p, &row) in self.ctx.predict(&f, support)?.iter().zip(support) {
            if !p.is_some_and(|p| p >= POSITIVITY_FLOOR) {
                return Err(self.ctx.no_support(label, row));
            }
        }
        self.ctx.predict(&f, self.eval)
    }
}

/// Weights ω for the records of {Q = 1, R = group}.
pub fn compute_weights(table: &ObservationTable, spec: &TrialSpec, group: u8) -> Result<WeightVector> {
    spec.validate()?;
    let frame = Frame::new(table, spec)?;
    let mut ctx = ModelContext::new(table, spec)?;
    let (rows, weights, factors) = weights_in(&mut ctx, &frame, spec, group)?;
    let mut weights = weights;
    let truncated = spec.truncation.map(|t| {
        let mut sorted = weights.clone();
        sorted.sort_by(f64::total_cmp);
        let (lo, hi) = (quantile_sorted(&sorted, t.tail), quantile_sorted(&sorted, 1.0 - t.tail));
        for w in weights.iter_mut() {
            *w = w.clamp(lo, hi);
        }
        (lo, hi)
    });
    Ok(WeightVector {
        proposition: spec.proposition,
        group,
        diagnostics: WeightDiagnostics::of(&weights),
        rows,
        weights,
        factors,
        truncated,
        models: core::mem::take(&mut ctx.summaries),
    })
}

type Weighted = (Vec<usize>, Vec<f64>, Vec<WeightFactor>);

fn weights_in(ctx: &mut ModelContext, f: &Frame, spec: &TrialSpec, r: u8) -> Result<Weighted> {
    let sr = f.rows(|i| f.q[i] && f.group[i] == r);
    if sr.is_empty() {
        return Err(Error::EmptyGroup(format!("{{Q=1, R={r}}}")));
    }
    let n = sr.len();
    let is_r = |i: usize| f.group[i] == r;
    let is_s = |i: usize| f.s[i];

    let ratios = match spec.proposition {
        Proposition::I | Proposition::II => {
            let s_all = f.rows(|i| f.q[i]);
            let mut b = RatioBuilder { ctx, eval: &sr };
            let mut ratios = Vec::new();
            if spec.proposition == Proposition::II {
                let dr = f.rows(|i| f.q_dd[i] && f.group[i] == r);
                let num = b.prob("P(Q†=1|Q‡=1,R=r,a)", Cov::A, &dr, |i| f.q_d[i])?;
                let den = b.prob("P(Q†=1|Q‡=1,R=r,n,a)", Cov::NA, &dr, |i| f.q_d[i])?;
                ratios.push(Ratio { name: "selection".into(), num, den });
            }
            let t = f.rows(|i| f.q[i] && f.s[i]);
            let num = b.prob("P(T=1|Q=1,a)", Cov::A, &s_all, is_s)?;
            let den = b.prob_on("P(R=r|Q=1,a)", Cov::A, &s_all, is_r, &t)?;
            ratios.push(Ratio { name: "membership".into(), num, den });
            ratios.push(Ratio::constant("marginal", proportion(&s_all, is_r), proportion(&s_all, is_s), n));
            ratios
        }
        Proposition::III => {
            let dp = f.rows(|i| f.q_dd[i] && f.q_p[i]);
            let dpr = f.rows(|i| f.q_dd[i] && f.q_p[i] && f.group[i] == r);
            let ds = f.rows(|i| f.q_dd[i] && f.s[i]);
            let mut b = RatioBuilder { ctx, eval: &sr };
            match spec.prop3_weights {
                Prop3Weights::Standard => {
                    let den = b.prob("P(Q†=1|Q‡=Q′=1,R=r,n,a)", Cov::NA, &dpr, |i| f.q_d[i])?;
                    let sel =
                        Ratio { name: "selection".into(), num: vec![Some(proportion(&dpr, |i| f.q_d[i])); n], den };
                    let num = b.prob("P(Q†=1|Q‡=1,T=1,a)", Cov::A, &ds, |i| f.q_d[i])?;
                    let int =
                        Ratio { name: "intervention".into(), num, den: vec![Some(proportion(&ds, |i| f.q_d[i])); n] };
                    let num = b.prob("P(T=1|Q‡=Q′=1,a)", Cov::A, &dp, is_s)?;
                    let dps = f.rows(|i| f.q_dd[i] && f.q_p[i] && f.s[i]);
                    let den = b.prob_on("P(R=r|Q‡=Q′=1,a)", Cov::A, &dp, is_r, &dps)?;
                    let mem = Ratio { name: "membership".into(), num, den };
                    let marg = Ratio::constant("marginal", proportion(&dp, is_r), proportion(&dp, is_s), n);
                    vec![mem, sel, int, marg]
                }
                Prop3Weights::Alternate => {
                    let di = f.rows(|i| f.q_dd[i] && f.q_d[i]);
                    let dir = f.rows(|i| f.q_dd[i] && f.q_d[i] && f.group[i] == r);
                    let num = b.prob("P(Q†=1|Q‡=Q′=1,R=r,a)", Cov::A, &dpr, |i| f.q_d[i])?;
                    let den = b.prob("P(Q†=1|Q‡=Q′=1,R=r,n,a)", Cov::NA, &dpr, |i| f.q_d[i])?;
                    let sel = Ratio { name: "selection".into(), num, den };
                    let num = b.prob("P(T=1|Q‡=Q†=1,a)", Cov::A, &di, is_s)?;
                    let dis = f.rows(|i| f.q_dd[i] && f.q_d[i] && f.s[i]);
                    let den = b.prob_on("P(R=r|Q‡=Q†=1,a)", Cov::A, &di, is_r, &dis)?;
                    let mem = Ratio { name: "membership".into(), num, den };
                    let marg = Ratio::constant("marginal", proportion(&di, is_r), proportion(&di, is_s), n);
                    let num = b.prob("P(Q′=1|Q‡=1,T=1,a)", Cov::A, &ds, |i| f.q_p[i])?;
                    let post_s =
                        Ratio { name: "post_standard".into(), num, den: vec![Some(proportion(&ds, |i| f.q_p[i])); n] };
                    let den = b.prob("P(Q′=1|Q‡=Q†=1,R=r,a)", Cov::A, &dir, |i| f.q_p[i])?;
                    let post_r =
                        Ratio { name: "post_group".into(), num: vec![Some(proportion(&dir, |i| f.q_p[i])); n], den };
                    vec![mem, sel, marg, post_s, post_r]
                }
            }
        }
        Proposition::IV => prop4_ratios(ctx, f, r, &sr)?,
    };
    let (w, factors) = combine(ctx, &sr, &ratios)?;
    Ok((sr, w, factors))
}

/// Selection-type weights P(Q†=1|Q‡=1,x,a) / P(Q†=1|Q‡=1,x,n,a) fitted on
/// {Q‡=1} ∩ `fit_rows` and evaluated on `eval`.
fn selection_weights(
    ctx: &mut ModelContext,
    f: &Frame,
    fit_rows: &[usize],
    eval: &[usize],
    tag: &str,
) -> Result<Vec<f64>> {
    let num_fit = ctx.fit_indicator(&format!("P(Q†=1|Q‡=1,{tag},a)"), Cov::A, fit_rows, |i| f.q_d[i])?;
    let den_fit = ctx.fit_indicator(&format!("P(Q†=1|Q‡=1,{tag},n,a)"), Cov::NA, fit_rows, |i| f.q_d[i])?;
    let num = ctx.predict_all(&num_fit, eval)?;
    let den = ctx.predict_all(&den_fit, eval)?;
    eval.iter()
        .zip(num.iter().zip(&den))
        .map(
            |(&row, (&a, &d))| {
                if d < POSITIVITY_FLOOR {
                    Err(ctx.no_support(&den_fit_label(tag), row))
                } else {
                    Ok(a / d)
                }
            },
        )
        .collect()
}

fn den_fit_label(tag: &str) -> String {
    format!("P(Q†=1|Q‡=1,{tag},n,a)")
}

fn prop4_ratios(ctx: &mut ModelContext, f: &Frame, r: u8, sr: &[usize]) -> Result<Vec<Ratio>> {
    let n = sr.len();
    let dr = f.rows(|i| f.q_dd[i] && f.group[i] == r);
    let ds = f.rows(|i| f.q_dd[i] && f.s[i]);
    let di = f.rows(|i| f.q_dd[i] && f.q_d[i]);
    let dir = f.rows(|i| f.q_dd[i] && f.q_d[i] && f.group[i] == r);
    let dis = f.rows(|i| f.q_dd[i] && f.q_d[i] && f.s[i]);
    let is_r = |i: usize| f.group[i] == r;
    let is_s = |i: usize| f.s[i];

    // ω_r on {Q = 1, R = r} and on {Q‡ = Q† = 1, R = r}.
    let sel_sr = selection_weights(ctx, f, &dr, sr, "R=r")?;
    let sel_dir = selection_weights(ctx, f, &dr, &dir, "R=r")?;
    let sel = Ratio { name: "selection".into(), num: some(sel_sr), den: vec![Some(1.0); n] };

    let mem = {
        let mut b = RatioBuilder { ctx: &mut *ctx, eval: sr };
        let num = b.prob("P(T=1|Q‡=Q†=1,a)", Cov::A, &di, is_s)?;
        let den = b.prob_on("P(R=r|Q‡=Q†=1,a)", Cov::A, &di, is_r, &dis)?;
        Ratio { name: "membership".into(), num, den }
    };
    let marg = Ratio::constant("marginal", proportion(&di, is_r), proportion(&di, is_s), n);

    // E(ω_r Q′ | Q‡ = Q† = 1, R = r, a) as an ω_r-weighted regression.
    let qp_dir: Vec<f64> = dir.iter().map(|&i| f64::from(u8::from(f.q_p[i]))).collect();
    let inner_r = ctx.fit("E(ω_r Q′|Q‡=Q†=1,R=r,a)", Cov::A, &dir, &qp_dir, Some(&sel_dir), Family::Binomial)?;
    let post_r = Ratio {
        name: "post_group".into(),
        num: vec![Some(proportion(&dir, |i| f.q_p[i])); n],
        den: ctx.predict(&inner_r, sr)?,
    };

    // E(ω_s Q′ | Q‡ = Q† = 1, T = 1, a) and its marginal over the same subset.
    if dis.is_empty() {
        return Err(Error::EmptyStage("{Q‡=Q†=1, T=1}".into()));
    }
    let sel_dis = selection_weights(ctx, f, &ds, &dis, "T=1")?;
    let qp_dis: Vec<f64> = dis.iter().map(|&i| f64::from(u8::from(f.q_p[i]))).collect();
    let inner_s = ctx.fit("E(ω_s Q′|Q‡=Q†=1,T=1,a)", Cov::A, &dis, &qp_dis, Some(&sel_dis), Family::Binomial)?;
    let total: f64 = sel_dis.iter().sum();
    let marginal_s = sel_dis.iter().zip(&qp_dis).map(|(w, q)| w * q).sum::<f64>() / total;
    let post_s =
        Ratio { name: "post_standard".into(), num: ctx.predict(&inner_s, sr)?, den: vec![Some(marginal_s); n] };

    Ok(vec![mem, sel, marg, post_r, post_s])
}
