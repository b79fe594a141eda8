//! Order conditions and the derivative stencil.
//!
//! The truncation-error expansion of a scheme reads
//!
//! ```text
//! C₀ = 1 − Σ α_ℓ
//! C₁ = −Σ ℓ α_ℓ + Σ_{ℓ=0..m} γ_ℓ
//! C_j = −(1/j!) Σ ℓ^j α_ℓ + (1/(j−1)!) Σ ℓ^{j−1} γ_ℓ      (j ≥ 2)
//! ```
//!
//! and the scheme has order `m` when `C₀ = … = C_m = 0`. The same formula
//! at `j = m + 1` gives the error constant.

use num_traits::{One, Signed, Zero};

use super::rational::{self, Rational};
use super::{CorrectorCoefficients, DerivativeWeights, PredictorCoefficients, MAX_STEPS};
use crate::error::{Error, Result};

/// Largest stencil for which [`derivative_weights`] is offered.
pub const MAX_DERIVATIVE_STEPS: usize = 12;

/// Anything whose truncation-error expansion can be evaluated.
pub trait TruncationExpansion {
    fn alpha(&self) -> &[Rational];
    /// Weight on the level-`i` driver value (zero for explicit formulas).
    fn gamma0(&self) -> Rational;
    fn gamma(&self) -> &[Rational];
}

impl TruncationExpansion for CorrectorCoefficients {
    fn alpha(&self) -> &[Rational] {
        CorrectorCoefficients::alpha(self)
    }
    fn gamma0(&self) -> Rational {
        CorrectorCoefficients::gamma0(self).clone()
    }
    fn gamma(&self) -> &[Rational] {
        CorrectorCoefficients::gamma(self)
    }
}

impl TruncationExpansion for PredictorCoefficients {
    fn alpha(&self) -> &[Rational] {
        PredictorCoefficients::alpha(self)
    }
    fn gamma0(&self) -> Rational {
        Rational::zero()
    }
    fn gamma(&self) -> &[Rational] {
        PredictorCoefficients::gamma(self)
    }
}

/// Coefficients of condition `C_j` as an affine form over the unknown
/// layout `[α₁..α_m, γ₀, γ₁..γ_m]`.
struct ConditionRow {
    constant: Rational,
    coeffs: Vec<Rational>,
}

fn condition_row(j: usize, m: usize) -> ConditionRow {
    let mut coeffs = Vec::with_capacity(2 * m + 1);
    let jf = rational::factorial(j);
    for l in 1..=m {
        coeffs.push(-rational::pow(l, j) / &jf);
    }
    for l in 0..=m {
        if j == 0 {
            coeffs.push(Rational::zero());
        } else {
            coeffs.push(rational::pow(l, j - 1) / rational::factorial(j - 1));
        }
    }
    let constant = if j == 0 { Rational::one() } else { Rational::zero() };
    ConditionRow { constant, coeffs }
}

/// Evaluates `C₀..C_{up_to}` exactly.
pub fn truncation_residuals<C: TruncationExpansion + ?Sized>(coeffs: &C, up_to: usize) -> Vec<Rational> {
    let m = coeffs.alpha().len();
    let values: Vec<Rational> = coeffs
        .alpha()
        .iter()
        .cloned()
        .chain(std::iter::once(coeffs.gamma0()))
        .chain(coeffs.gamma().iter().cloned())
        .collect();
    (0..=up_to)
        .map(|j| {
            let row = condition_row(j, m);
            row.coeffs
                .iter()
                .zip(&values)
                .fold(row.constant, |acc, (c, v)| acc + c * v)
        })
        .collect()
}

/// Partial assignment of corrector weights. Lags are 1-based, matching
/// the weight subscripts (`α_1` is the weight on `Y_{i+1}`).
#[derive(Clone, Debug)]
pub struct CorrectorPins {
    alpha: Vec<Option<Rational>>,
    gamma0: Option<Rational>,
    gamma: Vec<Option<Rational>>,
}

impl CorrectorPins {
    pub fn new(m: usize) -> Self {
        Self {
            alpha: vec![None; m],
            gamma0: None,
            gamma: vec![None; m],
        }
    }

    pub fn m(&self) -> usize {
        self.alpha.len()
    }

    pub fn alpha(mut self, lag: usize, value: Rational) -> Self {
        self.alpha[lag - 1] = Some(value);
        self
    }

    pub fn alphas(mut self, values: &[Rational]) -> Self {
        for (slot, v) in self.alpha.iter_mut().zip(values) {
            *slot = Some(v.clone());
        }
        self
    }

    pub fn gamma0(mut self, value: Rational) -> Self {
        self.gamma0 = Some(value);
        self
    }

    pub fn gamma(mut self, lag: usize, value: Rational) -> Self {
        self.gamma[lag - 1] = Some(value);
        self
    }

    fn layout(&self) -> Vec<Option<Rational>> {
        self.alpha
            .iter()
            .cloned()
            .chain(std::iter::once(self.gamma0.clone()))
            .chain(self.gamma.iter().cloned())
            .collect()
    }
}

/// Partial assignment of predictor weights (1-based lags).
#[derive(Clone, Debug)]
pub struct PredictorPins {
    alpha: Vec<Option<Rational>>,
    gamma: Vec<Option<Rational>>,
}

impl PredictorPins {
    pub fn new(m: usize) -> Self {
        Self {
            alpha: vec![None; m],
            gamma: vec![None; m],
        }
    }

    pub fn m(&self) -> usize {
        self.alpha.len()
    }

    pub fn alpha(mut self, lag: usize, value: Rational) -> Self {
        self.alpha[lag - 1] = Some(value);
        self
    }

    pub fn alphas(mut self, values: &[Rational]) -> Self {
        for (slot, v) in self.alpha.iter_mut().zip(values) {
            *slot = Some(v.clone());
        }
        self
    }

    pub fn gamma(mut self, lag: usize, value: Rational) -> Self {
        self.gamma[lag - 1] = Some(value);
        self
    }
}

/// Solves `C₀ = … = C_m = 0` for the unpinned corrector weights.
pub fn solve_order_conditions(pins: &CorrectorPins) -> Result<CorrectorCoefficients> {
    let m = pins.m();
    check_steps(m)?;
    let values = solve_pinned(m, pins.layout())?;
    let alpha = values[..m].to_vec();
    let gamma0 = values[m].clone();
    let gamma = values[m + 1..].to_vec();
    CorrectorCoefficients::new(alpha, gamma0, gamma)
}

/// Solves the explicit order conditions (`γ₀` fixed at zero).
pub fn solve_predictor_conditions(pins: &PredictorPins) -> Result<PredictorCoefficients> {
    let m = pins.m();
    check_steps(m)?;
    let layout = pins
        .alpha
        .iter()
        .cloned()
        .chain(std::iter::once(Some(Rational::zero())))
        .chain(pins.gamma.iter().cloned())
        .collect();
    let values = solve_pinned(m, layout)?;
    PredictorCoefficients::new(values[..m].to_vec(), values[m + 1..].to_vec())
}

fn check_steps(m: usize) -> Result<()> {
    if m == 0 || m > MAX_STEPS {
        return Err(Error::UnsupportedStepCount(m, MAX_STEPS));
    }
    Ok(())
}

fn solve_pinned(m: usize, layout: Vec<Option<Rational>>) -> Result<Vec<Rational>> {
    let unknowns: Vec<usize> = (0..layout.len()).filter(|&k| layout[k].is_none()).collect();
    let mut rows = Vec::new();
    let mut rhs = Vec::new();
    for j in 0..=m {
        let row = condition_row(j, m);
        let mut b = -row.constant;
        for (k, pin) in layout.iter().enumerate() {
            if let Some(v) = pin {
                b -= &row.coeffs[k] * v;
            }
        }
        let reduced: Vec<Rational> = unknowns.iter().map(|&k| row.coeffs[k].clone()).collect();
        if reduced.iter().all(Zero::is_zero) {
            if !b.is_zero() {
                return Err(Error::InconsistentPins(j));
            }
            continue;
        }
        rows.push(reduced);
        rhs.push(b);
    }
    if rows.len() > unknowns.len() {
        return Err(Error::Overdetermined {
            conditions: rows.len(),
            unknowns: unknowns.len(),
        });
    }
    if rows.len() < unknowns.len() {
        return Err(Error::Underdetermined {
            conditions: rows.len(),
            unknowns: unknowns.len(),
        });
    }
    let solution = gauss_exact(rows, rhs)?;
    let mut values: Vec<Rational> = layout.into_iter().map(|p| p.unwrap_or_default()).collect();
    for (&k, v) in unknowns.iter().zip(solution) {
        values[k] = v;
    }
    Ok(values)
}

/// Gaussian elimination over the rationals with partial pivoting by
/// magnitude. Exact arithmetic makes the singularity test an exact zero test.
fn gauss_exact(mut a: Vec<Vec<Rational>>, mut b: Vec<Rational>) -> Result<Vec<Rational>> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n)
            .filter(|&r| !a[r][col].is_zero())
            .max_by(|&r, &s| a[r][col].abs().cmp(&a[s][col].abs()))
            .ok_or(Error::SingularSystem)?;
        a.swap(col, pivot);
        b.swap(col, pivot);
        for r in col + 1..n {
            if a[r][col].is_zero() {
                continue;
            }
            let factor = &a[r][col] / &a[col][col];
            for c in col..n {
                let delta = &factor * &a[col][c];
                a[r][c] -= delta;
            }
            let delta = &factor * &b[col];
            b[r] -= delta;
        }
    }
    let mut x = vec![Rational::zero(); n];
    for r in (0..n).rev() {
        let mut acc = b[r].clone();
        for c in r + 1..n {
            acc -= &a[r][c] * &x[c];
        }
        x[r] = acc / &a[r][r];
    }
    Ok(x)
}

/// Solves the Vandermonde moment system
/// `(1/j!) Σ_{n=0}^m n^j (hλ_{m,n}) = δ_{j,1}` for `j = 0..m`.
pub fn derivative_weights(m: usize) -> Result<DerivativeWeights> {
    if m == 0 || m > MAX_DERIVATIVE_STEPS {
        return Err(Error::UnsupportedStepCount(m, MAX_DERIVATIVE_STEPS));
    }
    let mut a = Vec::with_capacity(m + 1);
    let mut b = Vec::with_capacity(m + 1);
    for j in 0..=m {
        let jf = rational::factorial(j);
        a.push((0..=m).map(|n| rational::pow(n, j) / &jf).collect());
        b.push(if j == 1 { Rational::one() } else { Rational::zero() });
    }
    Ok(DerivativeWeights::from_raw(gauss_exact(a, b)?))
}
