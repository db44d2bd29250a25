//! Regression kernel: restricted cubic splines and IRLS for logistic and
//! linear models.

mod glm;
mod spline;

pub use glm::{fit_glm, fit_logistic, log_likelihood, predict, predict_prob, score, Family, GlmFit, IrlsOptions};
pub use spline::{default_knots, spline_basis, SplineBasis};

/// Numerically stable logistic function.
pub fn expit(eta: f64) -> f64 {
    if eta >= 0.0 {
        1.0 / (1.0 + libm::exp(-eta))
    } else {
        let e = libm::exp(eta);
        e / (1.0 + e)
    }
}

pub fn logit(p: f64) -> f64 {
    libm::log(p / (1.0 - p))
}

/// ln(1 + e^eta) without overflow.
pub(crate) fn softplus(eta: f64) -> f64 {
    if eta > 0.0 {
        eta + libm::log1p(libm::exp(-eta))
    } else {
        libm::log1p(libm::exp(eta))
    }
}

/// Type-7 (linear interpolation) quantile of sorted data.
pub fn quantile_sorted(xs: &[f64], q: f64) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    let h = (xs.len() - 1) as f64 * q.clamp(0.0, 1.0);
    let lo = libm::floor(h) as usize;
    let hi = (lo + 1).min(xs.len() - 1);
    xs[lo] + (h - lo as f64) * (xs[hi] - xs[lo])
}
