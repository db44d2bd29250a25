use alloc::format;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};

use super::{expit, softplus};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize), serde(rename_all = "snake_case"))]
pub enum Family {
    /// Logit link; y may be fractional in [0, 1] (quasi-likelihood).
    Binomial,
    /// Identity link, least squares.
    Gaussian,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IrlsOptions {
    pub tolerance: f64,
    pub max_iterations: usize,
    pub separation_threshold: f64,
}

impl Default for IrlsOptions {
    fn default() -> Self {
        Self { tolerance: 1e-8, max_iterations: 100, separation_threshold: 15.0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct GlmFit {
    pub coefficients: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub deviance: f64,
    pub family: Family,
}

fn check_inputs(design: &DMatrix<f64>, y: &[f64], weights: Option<&[f64]>, family: Family) -> Result<()> {
    if design.nrows() != y.len() {
        return Err(Error::DimensionMismatch { expected: design.nrows(), found: y.len() });
    }
    if let Some(w) = weights {
        if w.len() != y.len() {
            return Err(Error::DimensionMismatch { expected: y.len(), found: w.len() });
        }
        if w.iter().any(|&v| !(v.is_finite() && v >= 0.0)) {
            return Err(Error::InvalidInput("weights must be finite and nonnegative".into()));
        }
    }
    if y.iter().any(|v| !v.is_finite()) || design.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("non-finite design or response".into()));
    }
    if family == Family::Binomial && y.iter().any(|&v| !(0.0..=1.0).contains(&v)) {
        return Err(Error::InvalidInput("binomial response outside [0, 1]".into()));
    }
    Ok(())
}

fn weight(weights: Option<&[f64]>, i: usize) -> f64 {
    weights.map_or(1.0, |w| w[i])
}

fn mean_fn(family: Family, eta: f64) -> f64 {
    match family {
        Family::Binomial => expit(eta),
        Family::Gaussian => eta,
    }
}

/// Weighted Bernoulli (quasi-)log-likelihood Σ w [y η − ln(1 + e^η)].
pub fn log_likelihood(design: &DMatrix<f64>, y: &[f64], weights: Option<&[f64]>, beta: &[f64]) -> f64 {
    let eta = design * DVector::from_column_slice(beta);
    (0..y.len()).map(|i| weight(weights, i) * (y[i] * eta[i] - softplus(eta[i]))).sum()
}

/// Score X'W(y − μ) of the given family at `beta`.
pub fn score(design: &DMatrix<f64>, y: &[f64], weights: Option<&[f64]>, beta: &[f64], family: Family) -> Vec<f64> {
    let eta = design * DVector::from_column_slice(beta);
    let r =
        DVector::from_iterator(y.len(), (0..y.len()).map(|i| weight(weights, i) * (y[i] - mean_fn(family, eta[i]))));
    (design.transpose() * r).iter().copied().collect()
}

fn deviance(family: Family, y: &[f64], mu: &[f64], weights: Option<&[f64]>) -> f64 {
    let xlogy = |a: f64, b: f64| if a == 0.0 { 0.0 } else { a * libm::log(a / b) };
    (0..y.len())
        .map(|i| {
            let w = weight(weights, i);
            match family {
                Family::Binomial => 2.0 * w * (xlogy(y[i], mu[i]) + xlogy(1.0 - y[i], 1.0 - mu[i])),
                Family::Gaussian => w * (y[i] - mu[i]) * (y[i] - mu[i]),
            }
        })
        .sum()
}

/// One Newton direction: solves (X'WX) δ = X'W(y − μ).
fn newton_step(
    design: &DMatrix<f64>,
    y: &[f64],
    weights: Option<&[f64]>,
    eta: &DVector<f64>,
    family: Family,
) -> Result<(DVector<f64>, f64)> {
    let n = y.len();
    let p = design.ncols();
    let mut xtwx = DMatrix::<f64>::zeros(p, p);
    let mut grad = DVector::<f64>::zeros(p);
    for i in 0..n {
        let w = weight(weights, i);
        if w == 0.0 {
            continue;
        }
        let mu = mean_fn(family, eta[i]);
        let v = match family {
            Family::Binomial => mu * (1.0 - mu),
            Family::Gaussian => 1.0,
        };
        let row = design.row(i);
        let r = w * (y[i] - mu);
        for a in 0..p {
            let xa = row[a];
            grad[a] += xa * r;
            let wa = w * v * xa;
            for b in a..p {
                xtwx[(a, b)] += wa * row[b];
            }
        }
    }
    for a in 0..p {
        for b in 0..a {
            xtwx[(a, b)] = xtwx[(b, a)];
        }
    }
    let max_grad = grad.iter().fold(0.0f64, |m, g| m.max(g.abs()));
    let chol = nalgebra::Cholesky::new(xtwx)
        .ok_or_else(|| Error::RankDeficient("normal equations not positive definite".into()))?;
    let diag: Vec<f64> = (0..p).map(|k| chol.l_dirty()[(k, k)] * chol.l_dirty()[(k, k)]).collect();
    let (lo, hi) = diag.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), &d| (lo.min(d), hi.max(d)));
    if p > 0 && (lo.is_nan() || hi.is_nan() || lo <= hi * 1e-13) {
        return Err(Error::RankDeficient(format!("pivot ratio {:.3e}", lo / hi)));
    }
    Ok((chol.solve(&grad), max_grad))
}

/// Fit a GLM by IRLS with step-halving on deviance increase.
///
/// Converges when the max-abs score falls below `tolerance`. Returns `converged = false` if
/// the iteration budget runs out.
pub fn fit_glm(
    design: &DMatrix<f64>,
    y: &[f64],
    weights: Option<&[f64]>,
    family: Family,
    opts: IrlsOptions,
) -> Result<GlmFit> {
    check_inputs(design, y, weights, family)?;
    let p = design.ncols();
    let mut beta = DVector::<f64>::zeros(p);
    let mut eta = design * &beta;
    let mu_of = |eta: &DVector<f64>| -> Vec<f64> { eta.iter().map(|&e| mean_fn(family, e)).collect() };
    let mut dev = deviance(family, y, &mu_of(&eta), weights);
    let mut converged = false;
    let mut iterations = 0;
    while iterations < opts.max_iterations {
        let (delta, max_grad) = newton_step(design, y, weights, &eta, family)?;
        if max_grad < opts.tolerance {
            // Polishing step from the converged point.
            beta += delta;
            eta = design * &beta;
            dev = deviance(family, y, &mu_of(&eta), weights);
            converged = true;
            break;
        }
        iterations += 1;
        let mut step = 1.0;
        loop {
            let cand = &beta + &delta * step;
            let cand_eta = design * &cand;
            let cand_dev = deviance(family, y, &mu_of(&cand_eta), weights);
            if cand_dev <= dev * (1.0 + 1e-12) + 1e-300 || step < 1e-10 {
                beta = cand;
                eta = cand_eta;
                dev = cand_dev;
                break;
            }
            step *= 0.5;
        }
        if let Some(b) = beta.iter().find(|b| b.abs() > opts.separation_threshold) {
            return Err(Error::SeparationDetected(format!(
                "|coefficient| = {:.3} exceeds {}",
                b.abs(),
                opts.separation_threshold
            )));
        }
    }
    Ok(GlmFit { coefficients: beta.iter().copied().collect(), converged, iterations, deviance: dev, family })
}

pub fn fit_logistic(design: &DMatrix<f64>, y: &[f64], weights: Option<&[f64]>) -> Result<GlmFit> {
    fit_glm(design, y, weights, Family::Binomial, IrlsOptions::default())
}

/// Mean-scale predictions for either family.
pub fn predict(fit: &GlmFit, design: &DMatrix<f64>) -> Result<Vec<f64>> {
    if design.ncols() != fit.coefficients.len() {
        return Err(Error::DimensionMismatch { expected: fit.coefficients.len(), found: design.ncols() });
    }
    let eta = design * DVector::from_column_slice(&fit.coefficients);
    Ok(eta.iter().map(|&e| mean_fn(fit.family, e)).collect())
}

/// Logistic predictions; the fit's family is ignored.
pub fn predict_prob(fit: &GlmFit, design: &DMatrix<f64>) -> Result<Vec<f64>> {
    let f = GlmFit { family: Family::Binomial, ..fit.clone() };
    predict(&f, design)
}
