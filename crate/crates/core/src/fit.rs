//! Least-squares curve fits for cost measurements.

use nalgebra::{DMatrix, DVector};

#[derive(Clone, Debug, PartialEq)]
pub struct PolyFit {
    /// Coefficients in increasing degree, for `x` as given.
    pub coefficients: Vec<f64>,
    pub r_squared: f64,
}

impl PolyFit {
    pub fn eval(&self, x: f64) -> f64 {
        self.coefficients.iter().rev().fold(0.0, |acc, c| acc * x + c)
    }
}

/// Fits a polynomial of the given degree. Returns `None` for fewer points
/// than coefficients or mismatched inputs.
pub fn polyfit(xs: &[f64], ys: &[f64], degree: usize) -> Option<PolyFit> {
    if xs.len() != ys.len() || xs.len() <= degree {
        return None;
    }
    // Fit on x scaled to [0, 1] for conditioning, then rescale.
    let scale = xs.iter().fold(0.0f64, |m, x| m.max(x.abs())).max(f64::MIN_POSITIVE);
    let a = DMatrix::from_fn(xs.len(), degree + 1, |i, j| (xs[i] / scale).powi(j as i32));
    let b = DVector::from_column_slice(ys);
    let solution = a.clone().svd(true, true).solve(&b, 1e-12).ok()?;
    let fitted = &a * &solution;
    let mean = ys.iter().sum::<f64>() / ys.len() as f64;
    let ss_tot: f64 = ys.iter().map(|y| (y - mean).powi(2)).sum();
    let ss_res: f64 = ys.iter().zip(fitted.iter()).map(|(y, f)| (y - f).powi(2)).sum();
    let r_squared = if ss_tot == 0.0 { 1.0 } else { 1.0 - ss_res / ss_tot };
    let coefficients = solution
        .iter()
        .enumerate()
        .map(|(j, c)| c / scale.powi(j as i32))
        .collect();
    Some(PolyFit {
        coefficients,
        r_squared,
    })
}

/// Slope of the least-squares line through `(ln x, ln y)`: the apparent
/// polynomial degree. Points with non-positive coordinates are skipped.
pub fn loglog_slope(xs: &[f64], ys: &[f64]) -> Option<f64> {
    let (lx, ly): (Vec<f64>, Vec<f64>) = xs
        .iter()
        .zip(ys)
        .filter(|(x, y)| **x > 0.0 && **y > 0.0)
        .map(|(x, y)| (x.ln(), y.ln()))
        .unzip();
    polyfit(&lx, &ly, 1).map(|f| f.coefficients[1])
}
