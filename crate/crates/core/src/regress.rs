//! Cross-sectional least-squares estimators of conditional expectations.
//!
//! A fit regresses `J` targets (optionally `k` columns at once) on a basis of
//! functions of the `J×d` states. Inputs are standardized per dimension
//! before the basis is built; dimensions with no spread are dropped, so a
//! cross-section where every path sits at the same point reduces to sample
//! means. The least-squares problem is solved by Householder QR; a ridge
//! penalty is applied by augmenting the design with `√λ·I`.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric;

/// Ridge used when an unpenalized design turns out rank deficient.
pub const FALLBACK_RIDGE: f64 = 1e-8;

const RANK_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BasisKind {
    /// All monomials of total degree `<= degree`.
    Polynomial { degree: usize },
    /// Indicators of `bins^d` cells over the empirical bounding box.
    PiecewiseConstant { bins: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BasisSpec {
    #[serde(flatten)]
    pub kind: BasisKind,
    #[serde(default)]
    pub ridge: f64,
}

impl Default for BasisSpec {
    fn default() -> Self {
        BasisSpec::polynomial(2)
    }
}

impl BasisSpec {
    pub fn polynomial(degree: usize) -> Self {
        BasisSpec {
            kind: BasisKind::Polynomial { degree },
            ridge: 0.0,
        }
    }

    pub fn piecewise_constant(bins: usize) -> Self {
        BasisSpec {
            kind: BasisKind::PiecewiseConstant { bins },
            ridge: 0.0,
        }
    }

    pub fn with_ridge(mut self, ridge: f64) -> Self {
        self.ridge = ridge;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.ridge >= 0.0) || !self.ridge.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "ridge {} must be >= 0",
                self.ridge
            )));
        }
        if let BasisKind::PiecewiseConstant { bins: 0 } = self.kind {
            return Err(Error::InvalidConfig(
                "piecewise-constant basis needs bins >= 1".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitDiagnostics {
    /// Training RMS residual per target column.
    pub residual_rms: Vec<f64>,
    /// Ratio of extreme `|R_ii|` of the QR factor.
    pub condition_estimate: f64,
    pub ridge_used: f64,
    /// The unpenalized design was rank deficient and the fit was redone with
    /// [`FALLBACK_RIDGE`].
    pub rank_fallback: bool,
}

#[derive(Debug, Clone, PartialEq)]
enum Features {
    Polynomial {
        exponents: Vec<Vec<u32>>,
    },
    Cells {
        bins: usize,
        lower: Vec<f64>,
        upper: Vec<f64>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegressionFit {
    pub basis: BasisSpec,
    dim: usize,
    targets: usize,
    center: Vec<f64>,
    scale: Vec<f64>,
    /// Input dimensions with non-zero spread, in order.
    active: Vec<usize>,
    features: Features,
    /// Row-major `[basis function][target]`, in standardized coordinates.
    coefficients: Vec<f64>,
    pub diagnostics: FitDiagnostics,
}

fn multi_indices(vars: usize, degree: usize) -> Vec<Vec<u32>> {
    let mut out = Vec::new();
    for total in 0..=degree {
        let mut cur = vec![0u32; vars];
        push_with_total(&mut out, &mut cur, 0, total as u32);
    }
    out
}

fn push_with_total(out: &mut Vec<Vec<u32>>, cur: &mut Vec<u32>, pos: usize, left: u32) {
    if pos + 1 >= cur.len() {
        if cur.is_empty() {
            if left == 0 {
                out.push(Vec::new());
            }
            return;
        }
        cur[pos] = left;
        out.push(cur.clone());
        return;
    }
    for e in (0..=left).rev() {
        cur[pos] = e;
        push_with_total(out, cur, pos + 1, left - e);
    }
    cur[pos] = 0;
}

impl RegressionFit {
    pub fn basis_size(&self) -> usize {
        self.coefficients.len() / self.targets
    }

    pub fn targets(&self) -> usize {
        self.targets
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Coefficients in standardized coordinates, `[basis][target]`.
    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    fn features_into(&self, x: &[f64], powers: &mut [f64], out: &mut [f64]) {
        match &self.features {
            Features::Polynomial { exponents } => {
                let a = self.active.len();
                let max_deg = match self.basis.kind {
                    BasisKind::Polynomial { degree } => degree,
                    _ => 0,
                };
                let stride = max_deg + 1;
                for (slot, &dim) in self.active.iter().enumerate() {
                    let z = (x[dim] - self.center[dim]) / self.scale[dim];
                    let row = &mut powers[slot * stride..(slot + 1) * stride];
                    row[0] = 1.0;
                    for p in 1..stride {
                        row[p] = row[p - 1] * z;
                    }
                }
                for (b, e) in exponents.iter().enumerate() {
                    let mut v = 1.0;
                    for slot in 0..a {
                        v *= powers[slot * stride + e[slot] as usize];
                    }
                    out[b] = v;
                }
            }
            Features::Cells { bins, lower, upper } => {
                out.fill(0.0);
                let mut cell = 0usize;
                for (slot, &dim) in self.active.iter().enumerate() {
                    let width = upper[slot] - lower[slot];
                    let pos = ((x[dim] - lower[slot]) / width * *bins as f64).floor();
                    let b = pos.clamp(0.0, (*bins - 1) as f64) as usize;
                    cell = cell * bins + b;
                }
                out[cell] = 1.0;
            }
        }
    }

    fn powers_len(&self) -> usize {
        match self.basis.kind {
            BasisKind::Polynomial { degree } => self.active.len() * (degree + 1),
            _ => 0,
        }
    }

    /// Predictions at `M×d` states, returned `M×k` row-major.
    pub fn predict(&self, states: &[f64]) -> Result<Vec<f64>> {
        let d = self.dim;
        if !states.len().is_multiple_of(d) {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: states.len() % d,
            });
        }
        numeric::ensure_finite(states, || "prediction states".into())?;
        let m = states.len() / d;
        let p = self.basis_size();
        let k = self.targets;
        let mut out = vec![0.0; m * k];
        let mut phi = vec![0.0; p];
        let mut powers = vec![0.0; self.powers_len()];
        for r in 0..m {
            self.features_into(&states[r * d..(r + 1) * d], &mut powers, &mut phi);
            let row = &mut out[r * k..(r + 1) * k];
            for (b, &v) in phi.iter().enumerate() {
                if v != 0.0 {
                    for (c, o) in row.iter_mut().enumerate() {
                        *o += v * self.coefficients[b * k + c];
                    }
                }
            }
        }
        Ok(out)
    }

    /// Polynomial coefficients in raw (unstandardized) coordinates as
    /// `(exponents over all d inputs, coefficient per target)`, ordered by
    /// exponent vector. `None` for non-polynomial bases.
    pub fn monomial_coefficients(&self) -> Option<Vec<(Vec<u32>, Vec<f64>)>> {
        let exponents = match &self.features {
            Features::Polynomial { exponents } => exponents,
            _ => return None,
        };
        let d = self.dim;
        let k = self.targets;
        let mut acc: BTreeMap<Vec<u32>, Vec<f64>> = BTreeMap::new();
        for (b, e) in exponents.iter().enumerate() {
            // expand ∏ ((x_a - m_a)/s_a)^{e_a} term by term
            let mut terms: Vec<(Vec<u32>, f64)> = vec![(vec![0; d], 1.0)];
            for (slot, &dim) in self.active.iter().enumerate() {
                let ea = e[slot];
                let m = self.center[dim];
                let s = self.scale[dim].powi(ea as i32);
                let mut next = Vec::new();
                for (exps, w) in &terms {
                    for kk in 0..=ea {
                        let binom = binomial(ea, kk);
                        let mut ex = exps.clone();
                        ex[dim] = kk;
                        next.push((ex, w * binom * (-m).powi((ea - kk) as i32) / s));
                    }
                }
                terms = next;
            }
            for (exps, w) in terms {
                let entry = acc.entry(exps).or_insert_with(|| vec![0.0; k]);
                for (e, c) in entry.iter_mut().zip(&self.coefficients[b * k..(b + 1) * k]) {
                    *e += w * c;
                }
            }
        }
        Some(acc.into_iter().collect())
    }
}

fn binomial(n: u32, k: u32) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Least-squares fit of `targets` (`J×k` row-major) on `states` (`J×d`).
pub fn fit(
    states: &[f64],
    dim: usize,
    targets: &[f64],
    k: usize,
    basis: &BasisSpec,
) -> Result<RegressionFit> {
    basis.validate()?;
    if dim == 0 || k == 0 || !states.len().is_multiple_of(dim) {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: states.len(),
        });
    }
    let j = states.len() / dim;
    if targets.len() != j * k {
        return Err(Error::DimensionMismatch {
            expected: j * k,
            got: targets.len(),
        });
    }
    if j == 0 {
        return Err(Error::RegressionFailure("no training samples".into()));
    }
    numeric::ensure_finite(states, || "regression states".into())?;
    numeric::ensure_finite(targets, || "regression targets".into())?;

    let mut center = vec![0.0; dim];
    let mut scale = vec![1.0; dim];
    let mut active = Vec::new();
    let mut column = vec![0.0; j];
    for i in 0..dim {
        for (r, c) in column.iter_mut().enumerate() {
            *c = states[r * dim + i];
        }
        let m = numeric::mean(&column);
        let dev: Vec<f64> = column.iter().map(|v| (v - m) * (v - m)).collect();
        let s = (numeric::pairwise_sum(&dev) / j as f64).sqrt();
        center[i] = m;
        if s > 1e-12 * (1.0 + m.abs()) {
            scale[i] = s;
            active.push(i);
        }
    }

    let features = match basis.kind {
        BasisKind::Polynomial { degree } => Features::Polynomial {
            exponents: multi_indices(active.len(), degree),
        },
        BasisKind::PiecewiseConstant { bins } => {
            let mut lower = Vec::new();
            let mut upper = Vec::new();
            for &i in &active {
                let (lo, hi) = (0..j).fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), r| {
                    let v = states[r * dim + i];
                    (lo.min(v), hi.max(v))
                });
                lower.push(lo);
                upper.push(hi);
            }
            Features::Cells { bins, lower, upper }
        }
    };
    let p = match &features {
        Features::Polynomial { exponents } => exponents.len(),
        Features::Cells { bins, .. } => bins.pow(active.len() as u32),
    };

    let mut model = RegressionFit {
        basis: *basis,
        dim,
        targets: k,
        center,
        scale,
        active,
        features,
        coefficients: vec![0.0; p * k],
        diagnostics: FitDiagnostics {
            residual_rms: vec![0.0; k],
            condition_estimate: 1.0,
            ridge_used: basis.ridge,
            rank_fallback: false,
        },
    };

    // design matrix
    let mut design = DMatrix::<f64>::zeros(j, p);
    {
        let mut phi = vec![0.0; p];
        let mut powers = vec![0.0; model.powers_len()];
        for r in 0..j {
            model.features_into(&states[r * dim..(r + 1) * dim], &mut powers, &mut phi);
            for (c, v) in phi.iter().enumerate() {
                design[(r, c)] = *v;
            }
        }
    }

    let solved = match solve_least_squares(&design, targets, k, basis.ridge) {
        Ok(s) => s,
        Err(Error::RankDeficient { .. }) if basis.ridge == 0.0 => {
            model.diagnostics.rank_fallback = true;
            model.diagnostics.ridge_used = FALLBACK_RIDGE;
            solve_least_squares(&design, targets, k, FALLBACK_RIDGE)?
        }
        Err(e) => return Err(e),
    };
    let (coefficients, cond) = solved;
    numeric::ensure_finite(&coefficients, || "regression coefficients".into())?;
    model.coefficients = coefficients;
    model.diagnostics.condition_estimate = cond;

    let fitted = model.predict(states)?;
    for c in 0..k {
        let res: Vec<f64> = (0..j)
            .map(|r| fitted[r * k + c] - targets[r * k + c])
            .collect();
        model.diagnostics.residual_rms[c] = numeric::rms(&res);
    }
    Ok(model)
}

/// Returns `[basis][target]` coefficients and the `|R_ii|` ratio.
fn solve_least_squares(
    design: &DMatrix<f64>,
    targets: &[f64],
    k: usize,
    ridge: f64,
) -> Result<(Vec<f64>, f64)> {
    let (j, p) = design.shape();
    let rows = if ridge > 0.0 { j + p } else { j };
    if rows < p {
        return Err(Error::RankDeficient {
            rank: rows,
            columns: p,
        });
    }
    let mut a = DMatrix::<f64>::zeros(rows, p);
    a.view_mut((0, 0), (j, p)).copy_from(design);
    let mut b = DMatrix::<f64>::zeros(rows, k);
    for r in 0..j {
        for c in 0..k {
            b[(r, c)] = targets[r * k + c];
        }
    }
    if ridge > 0.0 {
        let s = ridge.sqrt();
        for i in 0..p {
            a[(j + i, i)] = s;
        }
    }
    let qr = a.qr();
    let r = qr.r();
    let diag: Vec<f64> = (0..p).map(|i| r[(i, i)].abs()).collect();
    let max = diag.iter().cloned().fold(0.0, f64::max);
    let min = diag.iter().cloned().fold(f64::INFINITY, f64::min);
    let rank = diag.iter().filter(|v| **v > RANK_TOL * max).count();
    if max == 0.0 || rank < p {
        return Err(Error::RankDeficient { rank, columns: p });
    }
    qr.q_tr_mul(&mut b);
    let rhs = b.rows(0, p).into_owned();
    let sol = r
        .solve_upper_triangular(&rhs)
        .ok_or_else(|| Error::RegressionFailure("triangular solve failed".into()))?;
    let mut coefficients = vec![0.0; p * k];
    for bi in 0..p {
        for c in 0..k {
            coefficients[bi * k + c] = sol[(bi, c)];
        }
    }
    Ok((coefficients, max / min))
}
