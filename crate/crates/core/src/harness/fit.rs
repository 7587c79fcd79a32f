//! Log-log slopes and small nonnegative least-squares fits.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Least-squares slope of `ln y` against `ln x`. `None` when fewer than two
/// usable points remain (nonpositive or non-finite entries are dropped).
pub fn log_slope(x: &[f64], y: &[f64]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = x
        .iter()
        .zip(y)
        .filter(|(a, b)| **a > 0.0 && **b > 0.0 && a.is_finite() && b.is_finite())
        .map(|(a, b)| (a.ln(), b.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    Some(sxy / sxx)
}

/// `log_slope` over the last `n` points.
pub fn tail_slope(x: &[f64], y: &[f64], n: usize) -> Option<f64> {
    let k = x.len().min(y.len());
    let s = k.saturating_sub(n);
    log_slope(&x[s..k], &y[s..k])
}

/// Local orders between consecutive rungs; the first entry is `None`.
pub fn local_orders(x: &[f64], y: &[f64]) -> Vec<Option<f64>> {
    let mut out = vec![None];
    for i in 1..x.len().min(y.len()) {
        out.push(log_slope(&x[i - 1..=i], &y[i - 1..=i]));
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct NnlsFit {
    pub coefficients: Vec<f64>,
    /// `|y - X c|_2 / |y|_2`.
    pub relative_residual: f64,
}

const MAX_COLUMNS: usize = 8;

/// Nonnegative least squares `min |X c - y|, c >= 0` by enumerating active
/// sets, which is exact and cheap for the handful of columns used here.
pub fn nnls(columns: &[Vec<f64>], y: &[f64]) -> Result<NnlsFit> {
    let p = columns.len();
    let m = y.len();
    if p == 0 || p > MAX_COLUMNS {
        return Err(Error::InvalidArgument(format!("nnls supports 1..={MAX_COLUMNS} columns, got {p}")));
    }
    if columns.iter().any(|c| c.len() != m) || m == 0 {
        return Err(Error::DimensionMismatch(format!("nnls needs {p} columns of length {m}")));
    }
    if columns.iter().flatten().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("nnls input is not finite".into()));
    }
    let ynorm = y.iter().map(|v| v * v).sum::<f64>().sqrt();
    let scale: Vec<f64> = columns
        .iter()
        .map(|c| c.iter().map(|v| v * v).sum::<f64>().sqrt())
        .collect();
    let yv = DVector::from_column_slice(y);
    let mut best: Option<(f64, Vec<f64>)> = None;
    for mask in 0u32..(1 << p) {
        let active: Vec<usize> = (0..p).filter(|&j| mask & (1 << j) != 0 && scale[j] > 0.0).collect();
        if active.len() != mask.count_ones() as usize {
            continue;
        }
        let mut coef = vec![0.0; p];
        if !active.is_empty() {
            let x = DMatrix::from_fn(m, active.len(), |i, k| columns[active[k]][i] / scale[active[k]]);
            let Ok(sol) = x.clone().svd(true, true).solve(&yv, 1e-12) else {
                continue;
            };
            if sol.iter().any(|&c| c < 0.0) {
                continue;
            }
            for (k, &j) in active.iter().enumerate() {
                coef[j] = sol[k] / scale[j];
            }
        }
        let r = residual(columns, y, &coef);
        if best.as_ref().is_none_or(|b| r < b.0) {
            best = Some((r, coef));
        }
    }
    let (r, coefficients) = best.expect("the empty active set is always feasible");
    Ok(NnlsFit {
        coefficients,
        relative_residual: if ynorm > 0.0 { r / ynorm } else { 0.0 },
    })
}

fn residual(columns: &[Vec<f64>], y: &[f64], c: &[f64]) -> f64 {
    y.iter()
        .enumerate()
        .map(|(i, yi)| {
            let f: f64 = columns.iter().zip(c).map(|(col, cj)| col[i] * cj).sum();
            (yi - f).powi(2)
        })
        .sum::<f64>()
        .sqrt()
}
