use alloc::vec::Vec;

use crate::{Error, Result};

/// Restricted (natural) cubic spline basis. With k ≥ 3 knots the basis has
/// k − 1 columns: x itself and k − 2 truncated-cubic terms constrained to be
/// linear beyond the boundary knots. Fewer than 3 knots gives x alone.
#[derive(Debug, Clone, PartialEq)]
pub struct SplineBasis {
    knots: Vec<f64>,
}

impl SplineBasis {
    pub fn new(knots: &[f64]) -> Result<Self> {
        if knots.iter().any(|k| !k.is_finite()) || knots.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::BadKnots);
        }
        Ok(Self { knots: knots.to_vec() })
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn ncols(&self) -> usize {
        if self.knots.len() < 3 {
            1
        } else {
            self.knots.len() - 1
        }
    }

    /// Basis row for one value.
    pub fn row(&self, x: f64, out: &mut Vec<f64>) {
        out.push(x);
        let k = self.knots.len();
        if k < 3 {
            return;
        }
        let t = &self.knots;
        let (tk, tk1) = (t[k - 1], t[k - 2]);
        // Harrell's scaling keeps the columns on the scale of x.
        let scale = (tk - t[0]) * (tk - t[0]);
        let cube = |u: f64| if u > 0.0 { u * u * u } else { 0.0 };
        for &tj in &t[..k - 2] {
            let v = cube(x - tj) - cube(x - tk1) * (tk - tj) / (tk - tk1) + cube(x - tk) * (tk1 - tj) / (tk - tk1);
            out.push(v / scale);
        }
    }
}

/// Row-major basis block: one row per element of `x`.
pub fn spline_basis(x: &[f64], knots: &[f64]) -> Result<Vec<Vec<f64>>> {
    let b = SplineBasis::new(knots)?;
    Ok(x.iter()
        .map(|&v| {
            let mut r = Vec::with_capacity(b.ncols());
            b.row(v, &mut r);
            r
        })
        .collect())
}

/// Knots at the 0.10/0.50/0.90 empirical quantiles, deduplicated.
pub fn default_knots(x: &[f64]) -> Vec<f64> {
    let mut xs = x.to_vec();
    xs.sort_by(f64::total_cmp);
    let mut k: Vec<f64> = [0.1, 0.5, 0.9].iter().map(|&q| super::quantile_sorted(&xs, q)).collect();
    k.dedup();
    if k.len() < 3 {
        Vec::new()
    } else {
        k
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn degenerate_knots_give_identity() {
        assert_eq!(spline_basis(&[2.0, -1.0], &[]).unwrap(), vec![vec![2.0], vec![-1.0]]);
        assert_eq!(spline_basis(&[2.0], &[0.0, 1.0]).unwrap(), vec![vec![2.0]]);
    }

    #[test]
    fn zero_at_or_below_first_knot() {
        let b = spline_basis(&[0.0, -3.0], &[0.0, 1.0, 2.0]).unwrap();
        assert_eq!(b[0][1], 0.0);
        assert_eq!(b[1][1], 0.0);
    }

    #[test]
    fn closed_form_beyond_last_knot() {
        // x = 3, knots 0,1,2: 27 - 8*2 + 1*1 = 12, scaled by 1/4.
        let b = spline_basis(&[3.0], &[0.0, 1.0, 2.0]).unwrap();
        assert!((b[0][1] - 3.0).abs() < 1e-14);
    }

    #[test]
    fn bad_knots() {
        assert_eq!(SplineBasis::new(&[0.0, 0.0, 1.0]), Err(Error::BadKnots));
        assert_eq!(SplineBasis::new(&[1.0, 0.0]), Err(Error::BadKnots));
    }

    fn second_difference(f: impl Fn(f64) -> f64, x: f64, h: f64) -> f64 {
        (f(x + h) - 2.0 * f(x) + f(x - h)) / (h * h)
    }

    #[test]
    fn linear_outside_boundary_knots() {
        let knots = [0.0, 0.7, 1.5, 2.0];
        let b = SplineBasis::new(&knots).unwrap();
        let coef = [0.3, -1.2, 2.5, 0.8];
        let f = |x: f64| {
            let mut r = Vec::new();
            b.row(x, &mut r);
            r.iter().zip(&coef).map(|(a, c)| a * c).sum::<f64>()
        };
        for &x in &[2.5, 3.0, 10.0, -0.5, -4.0] {
            assert!(second_difference(f, x, 1e-3).abs() < 1e-6, "x = {x}");
        }
        assert!(second_difference(f, 1.0, 1e-3).abs() > 1e-3);
    }
}
