//! Least-squares Monte Carlo: polynomial bases, pivoted-QR fits reused
//! across responses, and the truncation operator.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::PivotedQr;

/// Largest basis accepted by [`build_basis`].
pub const DEFAULT_BASIS_CAP: usize = 512;

/// All monomials of total degree `≤ degree` in `d` variables, graded
/// lexicographic: `1, x₁, x₂, x₁², x₁x₂, x₂², …`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PolynomialBasis {
    d: usize,
    degree: usize,
    exponents: Vec<Vec<u32>>,
}

pub fn build_basis(d: usize, degree: usize) -> Result<PolynomialBasis> {
    build_basis_with_cap(d, degree, DEFAULT_BASIS_CAP)
}

pub fn build_basis_with_cap(d: usize, degree: usize, cap: usize) -> Result<PolynomialBasis> {
    if d == 0 {
        return Err(Error::Invalid("basis dimension must be positive".into()));
    }
    let size = binomial(d + degree, degree);
    if size > cap as u128 {
        return Err(Error::BasisTooLarge {
            size: usize::try_from(size).unwrap_or(usize::MAX),
            cap,
        });
    }
    let mut exponents = Vec::with_capacity(size as usize);
    for total in 0..=degree {
        let mut current = vec![0u32; d];
        push_compositions(total as u32, 0, &mut current, &mut exponents);
    }
    Ok(PolynomialBasis { d, degree, exponents })
}

fn binomial(n: usize, k: usize) -> u128 {
    (0..k).fold(1u128, |acc, i| acc * (n - i) as u128 / (i + 1) as u128)
}

/// Exponent vectors summing to `left` over positions `at..`, in
/// lexicographically decreasing order.
fn push_compositions(left: u32, at: usize, current: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
    if at + 1 == current.len() {
        current[at] = left;
        out.push(current.clone());
        return;
    }
    for e in (0..=left).rev() {
        current[at] = e;
        push_compositions(left - e, at + 1, current, out);
    }
    current[at] = 0;
}

impl PolynomialBasis {
    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn size(&self) -> usize {
        self.exponents.len()
    }

    pub fn exponents(&self) -> &[Vec<u32>] {
        &self.exponents
    }

    /// Writes every basis function at `x` into `out`.
    pub fn eval_into(&self, x: &[f64], out: &mut [f64]) {
        for (o, e) in out.iter_mut().zip(&self.exponents) {
            *o = e.iter().zip(x).map(|(&p, &v)| v.powi(p as i32)).product();
        }
    }

    pub fn eval(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.size()];
        self.eval_into(x, &mut out);
        out
    }

    /// `M×K` design matrix from `M` points stored consecutively.
    pub fn design_matrix(&self, points: &[f64]) -> Result<DMatrix<f64>> {
        if !points.len().is_multiple_of(self.d) {
            return Err(Error::DimensionMismatch {
                expected: self.d,
                got: points.len() % self.d,
            });
        }
        let m = points.len() / self.d;
        let k = self.size();
        let mut rows = vec![0.0; m * k];
        rows.par_chunks_mut(k)
            .zip(points.par_chunks(self.d))
            .for_each(|(row, x)| self.eval_into(x, row));
        Ok(DMatrix::from_row_slice(m, k, &rows))
    }
}

/// Coordinatewise clamp to `[−bound, bound]`.
pub fn truncate(x: &mut [f64], bound: f64) {
    if bound.is_finite() {
        for v in x {
            *v = v.clamp(-bound, bound);
        }
    }
}

pub fn truncated(x: &[f64], bound: f64) -> Vec<f64> {
    let mut out = x.to_vec();
    truncate(&mut out, bound);
    out
}

/// One factorization of a design matrix, solved against any number of
/// response vectors. Columns are centred and scaled to unit RMS before
/// factorizing when a nonzero constant column is present (scaled only
/// otherwise); the transform is folded back into the coefficients.
#[derive(Clone, Debug)]
pub struct LeastSquares {
    samples: usize,
    k: usize,
    /// Original column index of each standardized column.
    varying: Vec<usize>,
    shift: Vec<f64>,
    scale: Vec<f64>,
    /// Constant columns and their values; they share the intercept.
    constants: Vec<(usize, f64)>,
    qr: PivotedQr,
}

impl LeastSquares {
    pub fn new(features: &DMatrix<f64>) -> Result<Self> {
        let (m, k) = features.shape();
        if m == 0 {
            return Err(Error::EmptySample);
        }
        let mut varying = Vec::new();
        let mut constants = Vec::new();
        let mut stats = Vec::new();
        for c in 0..k {
            let col = features.column(c);
            let mean = col.mean();
            let spread = (col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / m as f64).sqrt();
            if spread <= 1e-12 * mean.abs().max(f64::MIN_POSITIVE) || spread == 0.0 {
                if mean != 0.0 {
                    constants.push((c, mean));
                }
            } else {
                varying.push(c);
                stats.push((mean, spread));
            }
        }
        let intercept = !constants.is_empty();
        let (shift, scale): (Vec<f64>, Vec<f64>) = stats
            .iter()
            .zip(&varying)
            .map(|(&(mean, spread), &c)| {
                if intercept {
                    (mean, spread)
                } else {
                    let rms = (features.column(c).norm_squared() / m as f64).sqrt();
                    (0.0, rms)
                }
            })
            .unzip();
        let offset = usize::from(intercept);
        let mut g = DMatrix::zeros(m, varying.len() + offset);
        if intercept {
            g.column_mut(0).fill(1.0);
        }
        for (j, &c) in varying.iter().enumerate() {
            for r in 0..m {
                g[(r, j + offset)] = (features[(r, c)] - shift[j]) / scale[j];
            }
        }
        Ok(Self {
            samples: m,
            k,
            varying,
            shift,
            scale,
            constants,
            qr: PivotedQr::new(g),
        })
    }

    /// Rank of the standardized design.
    pub fn rank(&self) -> usize {
        self.qr.rank()
    }

    pub fn samples(&self) -> usize {
        self.samples
    }

    /// Coefficients in the original feature coordinates.
    pub fn solve(&self, responses: &[f64]) -> Result<Vec<f64>> {
        if responses.len() != self.samples {
            return Err(Error::DimensionMismatch {
                expected: self.samples,
                got: responses.len(),
            });
        }
        let beta = self.qr.solve(responses);
        let offset = usize::from(!self.constants.is_empty());
        let mut coeffs = vec![0.0; self.k];
        let mut intercept = if offset == 1 { beta[0] } else { 0.0 };
        for (j, &c) in self.varying.iter().enumerate() {
            let b = beta[j + offset] / self.scale[j];
            coeffs[c] = b;
            intercept -= b * self.shift[j];
        }
        let norm: f64 = self.constants.iter().map(|(_, v)| v * v).sum();
        for &(c, v) in &self.constants {
            coeffs[c] = intercept * v / norm;
        }
        Ok(coeffs)
    }

    /// Solves each column of an `M×q` response matrix; result is `K×q`.
    pub fn solve_columns(&self, responses: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let cols: Vec<Vec<f64>> = (0..responses.ncols())
            .into_par_iter()
            .map(|c| self.solve(responses.column(c).as_slice()))
            .collect::<Result<_>>()?;
        Ok(DMatrix::from_fn(self.k, cols.len(), |r, c| cols[c][r]))
    }
}

/// Least-squares coefficients (`K×q`) of `responses` (`M×q`) on `features`
/// (`M×K`); minimum-norm in standardized coordinates when rank-deficient.
pub fn ols_fit(features: &DMatrix<f64>, responses: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if features.nrows() != responses.nrows() {
        return Err(Error::DimensionMismatch {
            expected: features.nrows(),
            got: responses.nrows(),
        });
    }
    LeastSquares::new(features)?.solve_columns(responses)
}

/// A fitted, truncated basis expansion with `outputs` components.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RegressionModel {
    basis: PolynomialBasis,
    /// `coefficients[o * K + k]`: output `o`, basis function `k`.
    coefficients: Vec<f64>,
    outputs: usize,
    bound: f64,
}

impl RegressionModel {
    pub fn new(basis: PolynomialBasis, coefficients: Vec<f64>, outputs: usize, bound: f64) -> Result<Self> {
        if coefficients.len() != basis.size() * outputs {
            return Err(Error::DimensionMismatch {
                expected: basis.size() * outputs,
                got: coefficients.len(),
            });
        }
        Ok(Self {
            basis,
            coefficients,
            outputs,
            bound,
        })
    }

    /// Model predicting the same value everywhere.
    pub fn constant(basis: PolynomialBasis, values: &[f64], bound: f64) -> Self {
        let k = basis.size();
        let mut coefficients = vec![0.0; k * values.len()];
        for (o, v) in values.iter().enumerate() {
            coefficients[o * k] = *v;
        }
        Self {
            basis,
            coefficients,
            outputs: values.len(),
            bound,
        }
    }

    pub fn basis(&self) -> &PolynomialBasis {
        &self.basis
    }

    pub fn coefficients(&self, output: usize) -> &[f64] {
        let k = self.basis.size();
        &self.coefficients[output * k..(output + 1) * k]
    }

    pub fn outputs(&self) -> usize {
        self.outputs
    }

    pub fn bound(&self) -> f64 {
        self.bound
    }

    /// Prediction from precomputed basis values.
    pub fn predict_features(&self, features: &[f64], out: &mut [f64]) {
        let k = self.basis.size();
        for (o, slot) in out.iter_mut().enumerate().take(self.outputs) {
            let c = &self.coefficients[o * k..(o + 1) * k];
            *slot = c.iter().zip(features).map(|(a, b)| a * b).sum();
        }
        truncate(&mut out[..self.outputs], self.bound);
    }

    pub fn predict(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.basis.d {
            return Err(Error::DimensionMismatch {
                expected: self.basis.d,
                got: x.len(),
            });
        }
        let mut out = vec![0.0; self.outputs];
        self.predict_features(&self.basis.eval(x), &mut out);
        Ok(out)
    }
}

/// A basis bound to sample points, ready to fit many responses.
#[derive(Clone, Debug)]
pub struct Regressor {
    basis: PolynomialBasis,
    design: DMatrix<f64>,
    ls: LeastSquares,
}

impl Regressor {
    pub fn new(basis: PolynomialBasis, points: &[f64]) -> Result<Self> {
        let design = basis.design_matrix(points)?;
        let ls = LeastSquares::new(&design)?;
        Ok(Self { basis, design, ls })
    }

    pub fn design(&self) -> &DMatrix<f64> {
        &self.design
    }

    pub fn rank(&self) -> usize {
        self.ls.rank()
    }

    /// Fits `q` responses given trajectory-major as `responses[r * q + o]`.
    pub fn fit(&self, responses: &[f64], outputs: usize, bound: f64) -> Result<RegressionModel> {
        let m = self.design.nrows();
        if responses.len() != m * outputs {
            return Err(Error::DimensionMismatch {
                expected: m * outputs,
                got: responses.len(),
            });
        }
        let mut coefficients = Vec::with_capacity(self.basis.size() * outputs);
        let columns: Vec<Vec<f64>> = (0..outputs)
            .into_par_iter()
            .map(|o| {
                let col: Vec<f64> = (0..m).map(|r| responses[r * outputs + o]).collect();
                self.ls.solve(&col)
            })
            .collect::<Result<_>>()?;
        for c in columns {
            coefficients.extend(c);
        }
        RegressionModel::new(self.basis.clone(), coefficients, outputs, bound)
    }

    /// Model predictions at the fitting points, trajectory-major.
    pub fn predict_at_samples(&self, model: &RegressionModel) -> Vec<f64> {
        let q = model.outputs();
        let m = self.design.nrows();
        let mut out = vec![0.0; m * q];
        out.par_chunks_mut(q).enumerate().for_each(|(r, slot)| {
            let row: Vec<f64> = self.design.row(r).iter().copied().collect();
            model.predict_features(&row, slot);
        });
        out
    }
}
