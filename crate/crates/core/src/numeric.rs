//! Small numeric helpers shared across solvers.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

const PAIRWISE_BLOCK: usize = 64;

/// Pairwise (cascade) summation. The split points depend only on the slice
/// length, so the result is independent of how the input was produced.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    if values.len() <= PAIRWISE_BLOCK {
        return values.iter().sum();
    }
    let mid = values.len() / 2;
    pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
}

pub fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    pairwise_sum(values) / values.len() as f64
}

/// Mean and unbiased sample standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    let m = mean(values);
    if n < 2 {
        return (m, 0.0);
    }
    let sq: Vec<f64> = values.iter().map(|v| (v - m) * (v - m)).collect();
    (m, (pairwise_sum(&sq) / (n - 1) as f64).sqrt())
}

/// Root mean square.
pub fn rms(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let sq: Vec<f64> = values.iter().map(|v| v * v).collect();
    (pairwise_sum(&sq) / values.len() as f64).sqrt()
}

/// Inverse of a row-major `d×d` matrix written into `out`.
///
/// Returns `None` when the matrix is singular or its condition number
/// exceeds `cond_cap`.
pub fn invert(m: &[f64], d: usize, cond_cap: f64, out: &mut [f64]) -> Option<()> {
    if d == 1 {
        let v = m[0];
        if v == 0.0 || !v.is_finite() {
            return None;
        }
        out[0] = 1.0 / v;
        return Some(());
    }
    let mat = DMatrix::from_row_slice(d, d, m);
    if condition_number(&mat) > cond_cap {
        return None;
    }
    let inv = mat.try_inverse()?;
    for i in 0..d {
        for j in 0..d {
            out[i * d + j] = inv[(i, j)];
        }
    }
    Some(())
}

/// Spectral condition number (ratio of extreme singular values).
pub fn condition_number(m: &DMatrix<f64>) -> f64 {
    let sv = m.singular_values();
    let max = sv.iter().cloned().fold(0.0_f64, f64::max);
    let min = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    if min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Spectral norm of a row-major `d×d` matrix.
pub fn operator_norm(m: &[f64], d: usize) -> f64 {
    if d == 1 {
        return m[0].abs();
    }
    DMatrix::from_row_slice(d, d, m)
        .singular_values()
        .iter()
        .cloned()
        .fold(0.0, f64::max)
}

pub fn euclidean_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// `Tr[a · b]` for row-major `d×d` matrices.
pub fn trace_product(a: &[f64], b: &[f64], d: usize) -> f64 {
    let mut acc = 0.0;
    for i in 0..d {
        for k in 0..d {
            acc += a[i * d + k] * b[k * d + i];
        }
    }
    acc
}

/// `σσ'` for a row-major `d×d` matrix.
pub fn outer_self(sigma: &[f64], d: usize, out: &mut [f64]) {
    for i in 0..d {
        for j in 0..d {
            let mut acc = 0.0;
            for k in 0..d {
                acc += sigma[i * d + k] * sigma[j * d + k];
            }
            out[i * d + j] = acc;
        }
    }
}

pub fn ensure_finite(values: &[f64], context: impl FnOnce() -> String) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(context()))
    }
}
