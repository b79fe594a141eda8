//! Coefficients of predictor-corrector linear multistep schemes.
//!
//! A scheme advances the backward recursion from the `m` future levels
//! `i+1..=i+m` to level `i`:
//!
//! ```text
//! predictor  Ỹ_i = E_i[ Σ α̃_j Y_{i+j} + h Σ γ̃_j f_{i+j} ]
//! corrector  Y_i = E_i[ Σ α_j Y_{i+j} + h γ₀ f(t_i, X_i, Ỹ_i, Z_i) + h Σ γ_j f_{i+j} ]
//! Z-update   Z_i = E_i[ Σ λ_j Y_{i+j} (W_{i+j} − W_i)ᵀ ]
//! ```
//!
//! All weights are kept as exact rationals; [`MultistepScheme::weights`]
//! produces the floating-point view used by the solvers.

mod document;
mod order;
mod presets;
pub mod rational;

pub use document::SchemeDocument;
pub use order::{
    derivative_weights, solve_order_conditions, solve_predictor_conditions, truncation_residuals,
    CorrectorPins, PredictorPins, TruncationExpansion, MAX_DERIVATIVE_STEPS,
};
pub use presets::{adams_pair, unstable_three_step, unstable_two_step, uniform_family, Preset};
pub use rational::Rational;

use num_traits::Zero;
use serde::Serialize;

use crate::error::{Error, Result};

/// Largest step count accepted by the scheme constructors.
pub const MAX_STEPS: usize = 8;

/// Implicit (corrector) weights: `α₁..α_m`, `γ₀`, `γ₁..γ_m`.
#[derive(Clone, Debug, PartialEq)]
pub struct CorrectorCoefficients {
    alpha: Vec<Rational>,
    gamma0: Rational,
    gamma: Vec<Rational>,
}

impl CorrectorCoefficients {
    pub fn new(alpha: Vec<Rational>, gamma0: Rational, gamma: Vec<Rational>) -> Result<Self> {
        check_lengths(alpha.len(), gamma.len())?;
        Ok(Self {
            alpha,
            gamma0,
            gamma,
        })
    }

    pub fn m(&self) -> usize {
        self.alpha.len()
    }

    pub fn alpha(&self) -> &[Rational] {
        &self.alpha
    }

    pub fn gamma0(&self) -> &Rational {
        &self.gamma0
    }

    pub fn gamma(&self) -> &[Rational] {
        &self.gamma
    }
}

/// Explicit (predictor) weights `α̃₁..α̃_m`, `γ̃₁..γ̃_m`. There is no weight
/// on the level-`i` driver value.
#[derive(Clone, Debug, PartialEq)]
pub struct PredictorCoefficients {
    alpha: Vec<Rational>,
    gamma: Vec<Rational>,
}

impl PredictorCoefficients {
    pub fn new(alpha: Vec<Rational>, gamma: Vec<Rational>) -> Result<Self> {
        check_lengths(alpha.len(), gamma.len())?;
        Ok(Self { alpha, gamma })
    }

    pub fn m(&self) -> usize {
        self.alpha.len()
    }

    pub fn alpha(&self) -> &[Rational] {
        &self.alpha
    }

    pub fn gamma(&self) -> &[Rational] {
        &self.gamma
    }
}

/// Weights `hλ_{m,0}..hλ_{m,m}` of the one-sided derivative stencil,
/// stored premultiplied by the step so they do not depend on the grid.
#[derive(Clone, Debug, PartialEq)]
pub struct DerivativeWeights {
    lambda_h: Vec<Rational>,
}

impl DerivativeWeights {
    pub(crate) fn from_raw(lambda_h: Vec<Rational>) -> Self {
        Self { lambda_h }
    }

    pub fn m(&self) -> usize {
        self.lambda_h.len() - 1
    }

    pub fn lambda_h(&self) -> &[Rational] {
        &self.lambda_h
    }

    /// Derivative estimate at the first node from equally spaced samples.
    pub fn apply(&self, samples: &[f64], h: f64) -> f64 {
        self.lambda_h
            .iter()
            .zip(samples)
            .map(|(w, s)| rational::to_f64(w) * s)
            .sum::<f64>()
            / h
    }
}

/// A complete predictor-corrector scheme with its error constants.
#[derive(Clone, Debug, PartialEq)]
pub struct MultistepScheme {
    predictor: PredictorCoefficients,
    corrector: CorrectorCoefficients,
    zweights: DerivativeWeights,
    error_constant_pred: Rational,
    error_constant_corr: Rational,
}

impl MultistepScheme {
    /// Assembles a scheme; Z-weights and the `C_{m+1}` error constants are
    /// derived from the step count and the weights.
    pub fn new(predictor: PredictorCoefficients, corrector: CorrectorCoefficients) -> Result<Self> {
        if predictor.m() != corrector.m() {
            return Err(Error::StepCountMismatch {
                predictor: predictor.m(),
                corrector: corrector.m(),
            });
        }
        let m = corrector.m();
        let zweights = derivative_weights(m)?;
        let error_constant_pred = truncation_residuals(&predictor, m + 1).pop().unwrap();
        let error_constant_corr = truncation_residuals(&corrector, m + 1).pop().unwrap();
        Ok(Self {
            predictor,
            corrector,
            zweights,
            error_constant_pred,
            error_constant_corr,
        })
    }

    pub fn m(&self) -> usize {
        self.corrector.m()
    }

    pub fn predictor(&self) -> &PredictorCoefficients {
        &self.predictor
    }

    pub fn corrector(&self) -> &CorrectorCoefficients {
        &self.corrector
    }

    pub fn zweights(&self) -> &DerivativeWeights {
        &self.zweights
    }

    pub fn error_constant_pred(&self) -> &Rational {
        &self.error_constant_pred
    }

    pub fn error_constant_corr(&self) -> &Rational {
        &self.error_constant_corr
    }

    /// Exact Milne factor `|C/(C − C̃)|`.
    pub fn milne_factor_exact(&self) -> Result<Rational> {
        let gap = &self.error_constant_corr - &self.error_constant_pred;
        if gap.is_zero() {
            return Err(Error::DegenerateIndicator);
        }
        Ok(rational::abs(&(&self.error_constant_corr / gap)))
    }

    /// Floating-point view of every weight.
    pub fn weights(&self) -> SchemeWeights {
        let f = |v: &[Rational]| v.iter().map(rational::to_f64).collect::<Vec<_>>();
        SchemeWeights {
            m: self.m(),
            alpha_tilde: f(self.predictor.alpha()),
            gamma_tilde: f(self.predictor.gamma()),
            alpha: f(self.corrector.alpha()),
            gamma0: rational::to_f64(self.corrector.gamma0()),
            gamma: f(self.corrector.gamma()),
            lambda_h: f(self.zweights.lambda_h()),
            milne_factor: self.milne_factor_exact().ok().map(|r| rational::to_f64(&r)),
        }
    }
}

/// Milne error-indicator multiplier `|C_{m+1}/(C_{m+1} − C̃_{m+1})|`.
pub fn milne_factor(scheme: &MultistepScheme) -> Result<f64> {
    scheme.milne_factor_exact().map(|r| rational::to_f64(&r))
}

/// Floating-point weights consumed by the solvers.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SchemeWeights {
    pub m: usize,
    pub alpha_tilde: Vec<f64>,
    pub gamma_tilde: Vec<f64>,
    pub alpha: Vec<f64>,
    pub gamma0: f64,
    pub gamma: Vec<f64>,
    pub lambda_h: Vec<f64>,
    pub milne_factor: Option<f64>,
}

fn check_lengths(alpha: usize, gamma: usize) -> Result<()> {
    if alpha != gamma {
        return Err(Error::Invalid(format!(
            "weight vectors differ in length ({alpha} vs {gamma})"
        )));
    }
    if alpha == 0 || alpha > MAX_STEPS {
        return Err(Error::UnsupportedStepCount(alpha, MAX_STEPS));
    }
    Ok(())
}
