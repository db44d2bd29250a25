use alloc::format;
use alloc::vec::Vec;

use super::models::{proportion, Cov, Fitted, ModelContext};
use super::weights::POSITIVITY_FLOOR;
use super::Frame;
use crate::data_model::{Proposition, TrialSpec};
use crate::numerics::Family;
use crate::{Error, Result};

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn weighted_mean(ctx: &ModelContext, fit: &Fitted, rows: &[usize], w: &[f64], label: &str) -> Result<f64> {
    let keep: Vec<usize> = (0..rows.len()).filter(|&k| w[k] > 0.0).collect();
    let eval: Vec<usize> = keep.iter().map(|&k| rows[k]).collect();
    let pred = ctx.predict_all(fit, &eval)?;
    let total: f64 = keep.iter().map(|&k| w[k]).sum();
    if total.is_nan() || total <= 0.0 {
        return Err(Error::EmptyStage(label.into()));
    }
    Ok(keep.iter().zip(&pred).map(|(&k, p)| w[k] * p).sum::<f64>() / total)
}

fn nonempty(rows: Vec<usize>, label: &str) -> Result<Vec<usize>> {
    if rows.is_empty() {
        Err(Error::EmptyStage(label.into()))
    } else {
        Ok(rows)
    }
}

/// Iterated conditional expectation estimate of τ(r).
pub(crate) fn tau_ice(ctx: &mut ModelContext, f: &Frame, spec: &TrialSpec, r: u8) -> Result<f64> {
    let sr = f.rows(|i| f.q[i] && f.group[i] == r);
    if sr.is_empty() {
        return Err(Error::EmptyGroup(format!("{{Q=1, R={r}}}")));
    }
    let y_sr: Vec<f64> = sr.iter().map(|&i| f.y[i]).collect();
    let fam = ctx.outcome_family();
    let t = nonempty(f.rows(|i| f.q[i] && f.s[i]), "{Q=1, T=1}")?;

    match spec.proposition {
        Proposition::I => {
            let mu = ctx.fit("E(Y|Q=1,R=r,a)", Cov::A, &sr, &y_sr, None, fam)?;
            Ok(mean(&ctx.predict_all(&mu, &t)?))
        }
        Proposition::II => {
            let dr = f.rows(|i| f.q_dd[i] && f.group[i] == r);
            let mu = ctx.fit("E(Y|Q=1,R=r,n,a)", Cov::NA, &sr, &y_sr, None, fam)?;
            let eta = ctx.predict_all(&mu, &dr)?;
            let inner = ctx.fit("E(η|Q‡=1,R=r,a)", Cov::A, &dr, &eta, None, fam)?;
            Ok(mean(&ctx.predict_all(&inner, &t)?))
        }
        Proposition::III => {
            // Part A: ω = P(Q†=1|Q‡=1,T=1,a) / P(Q†=1|Q‡=1,T=1) on {Q‡=Q′=1, T=1}.
            let ds = nonempty(f.rows(|i| f.q_dd[i] && f.s[i]), "{Q‡=1, T=1}")?;
            let dps = nonempty(f.rows(|i| f.q_dd[i] && f.q_p[i] && f.s[i]), "{Q‡=Q′=1, T=1}")?;
            let eta0 = ctx.fit_indicator("P(Q†=1|Q‡=1,T=1,a)", Cov::A, &ds, |i| f.q_d[i])?;
            let eta1 = proportion(&ds, |i| f.q_d[i]);
            if eta1 < POSITIVITY_FLOOR {
                return Err(Error::PositivityViolation("P(Q†=1|Q‡=1,T=1) is zero".into()));
            }
            let w: Vec<f64> = ctx
                .predict(&eta0, &dps)?
                .into_iter()
                .zip(&dps)
                .map(|(p, &i)| p.map(|p| p / eta1).ok_or_else(|| ctx.no_support("P(Q†=1|Q‡=1,T=1,a)", i)))
                .collect::<Result<_>>()?;
            // Part B.
            let dpr = f.rows(|i| f.q_dd[i] && f.q_p[i] && f.group[i] == r);
            let mu = ctx.fit("E(Y|Q=1,R=r,n,a)", Cov::NA, &sr, &y_sr, None, fam)?;
            let eta2 = ctx.predict_all(&mu, &dpr)?;
            let inner = ctx.fit("E(η|Q‡=Q′=1,R=r,a)", Cov::A, &dpr, &eta2, None, fam)?;
            weighted_mean(ctx, &inner, &dps, &w, "{Q‡=Q′=1, T=1} with positive weight")
        }
        Proposition::IV => {
            let dr = f.rows(|i| f.q_dd[i] && f.group[i] == r);
            let dir = nonempty(f.rows(|i| f.q_dd[i] && f.q_d[i] && f.group[i] == r), "{Q‡=Q†=1, R=r}")?;
            let ds = nonempty(f.rows(|i| f.q_dd[i] && f.s[i]), "{Q‡=1, T=1}")?;
            let dis = nonempty(f.rows(|i| f.q_dd[i] && f.q_d[i] && f.s[i]), "{Q‡=Q†=1, T=1}")?;

            // Part A: ω_r = η̂0 / η̂1 on {Q‡=1, R=r}.
            let eta0 = ctx.fit_indicator("P(Q′=1|Q‡=Q†=1,R=r,n,a)", Cov::NA, &dir, |i| f.q_p[i])?;
            let e0 = ctx.predict_all(&eta0, &dr)?;
            let eta1 = ctx.fit("E(η0|Q‡=1,R=r,a)", Cov::A, &dr, &e0, None, Family::Binomial)?;
            let e1 = ctx.predict_all(&eta1, &dr)?;
            let w_r: Vec<f64> =
                e0.iter().zip(&e1).map(|(&a, &b)| if b < POSITIVITY_FLOOR { 0.0 } else { a / b }).collect();

            // Part B: ω^(iv-ice) = η̂3 / η̂4 on {Q‡=Q†=1, T=1}.
            let eta2 = ctx.fit_indicator("P(Q′=1|Q‡=Q†=1,T=1,n,a)", Cov::NA, &dis, |i| f.q_p[i])?;
            let e2 = ctx.predict_all(&eta2, &ds)?;
            let eta3 = ctx.fit("E(η2|Q‡=1,T=1,a)", Cov::A, &ds, &e2, None, Family::Binomial)?;
            let e3 = ctx.predict_all(&eta3, &dis)?;
            let eta4 = mean(&e3);
            if eta4 < POSITIVITY_FLOOR {
                return Err(Error::PositivityViolation("mean of η3 over {Q‡=Q†=1, T=1} is zero".into()));
            }
            let w_s: Vec<f64> = e3.iter().map(|e| e / eta4).collect();

            // Part C.
            let mu = ctx.fit("E(Y|Q=1,R=r,n,a)", Cov::NA, &sr, &y_sr, None, fam)?;
            let pos: Vec<usize> = (0..dr.len()).filter(|&k| w_r[k] > 0.0).collect();
            let rows: Vec<usize> = pos.iter().map(|&k| dr[k]).collect();
            let weights: Vec<f64> = pos.iter().map(|&k| w_r[k]).collect();
            let rows = nonempty(rows, "{Q‡=1, R=r} with positive weight")?;
            let m = ctx.predict_all(&mu, &rows)?;
            let inner = ctx.fit("E(η|Q‡=1,R=r,a) weighted by ω_r", Cov::A, &rows, &m, Some(&weights), fam)?;
            weighted_mean(ctx, &inner, &dis, &w_s, "{Q‡=Q†=1, T=1} with positive weight")
        }
    }
}
