//! Built-in schemes. Every preset is derived from its pinned weights by
//! the order-condition solver rather than typed in.

use std::fmt;
use std::str::FromStr;

use super::order::{solve_order_conditions, solve_predictor_conditions, CorrectorPins, PredictorPins};
use super::rational::{int, ratio, Rational};
use super::{MultistepScheme, MAX_STEPS};
use crate::error::{Error, Result};

/// Adams pair of order `k`: a `k`-step Adams–Bashforth predictor with an
/// Adams–Moulton corrector on `k − 1` past values (its `γ_k` is zero).
pub fn adams_pair(order: usize) -> Result<MultistepScheme> {
    if !(1..=6).contains(&order) {
        return Err(Error::UnsupportedOrder(order));
    }
    let shift: Vec<Rational> = (0..order).map(|j| int(i64::from(j == 0))).collect();
    let predictor = solve_predictor_conditions(&PredictorPins::new(order).alphas(&shift))?;
    let corrector =
        solve_order_conditions(&CorrectorPins::new(order).alphas(&shift).gamma(order, int(0)))?;
    MultistepScheme::new(predictor, corrector)
}

/// Averaging family: `α_j = α̃_j = 1/m` and `γ₀ = (2m − 1)/(2m)`, the
/// remaining weights fixed by the order conditions. `m = 1` is the
/// trapezoidal corrector with an explicit Euler predictor.
pub fn uniform_family(m: usize) -> Result<MultistepScheme> {
    if m == 0 || m > MAX_STEPS {
        return Err(Error::UnsupportedStepCount(m, MAX_STEPS));
    }
    let weights = vec![ratio(1, m as i64); m];
    let predictor = solve_predictor_conditions(&PredictorPins::new(m).alphas(&weights))?;
    let corrector = solve_order_conditions(
        &CorrectorPins::new(m)
            .alphas(&weights)
            .gamma0(ratio(2 * m as i64 - 1, 2 * m as i64)),
    )?;
    MultistepScheme::new(predictor, corrector)
}

/// Consistent two-step scheme with characteristic polynomial `ζ² − 3ζ + 2`.
pub fn unstable_two_step() -> Result<MultistepScheme> {
    let alpha = [int(3), int(-2)];
    let predictor = solve_predictor_conditions(&PredictorPins::new(2).alphas(&alpha))?;
    let corrector = solve_order_conditions(&CorrectorPins::new(2).alphas(&alpha).gamma0(int(1)))?;
    MultistepScheme::new(predictor, corrector)
}

/// Consistent three-step scheme with characteristic polynomial
/// `ζ³ − 2ζ² − 5ζ + 6`.
pub fn unstable_three_step() -> Result<MultistepScheme> {
    let alpha = [int(2), int(5), int(-6)];
    let predictor = solve_predictor_conditions(&PredictorPins::new(3).alphas(&alpha))?;
    let corrector = solve_order_conditions(&CorrectorPins::new(3).alphas(&alpha).gamma0(int(-3)))?;
    MultistepScheme::new(predictor, corrector)
}

/// Named scheme, as accepted on the command line and in config files.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Preset {
    Adams(usize),
    Uniform(usize),
    UnstableTwoStep,
    UnstableThreeStep,
}

impl Preset {
    pub fn build(self) -> Result<MultistepScheme> {
        match self {
            Preset::Adams(k) => adams_pair(k),
            Preset::Uniform(m) => uniform_family(m),
            Preset::UnstableTwoStep => unstable_two_step(),
            Preset::UnstableThreeStep => unstable_three_step(),
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Preset::Adams(k) => write!(f, "adams{k}"),
            Preset::Uniform(m) => write!(f, "uniform{m}"),
            Preset::UnstableTwoStep => write!(f, "unstable2"),
            Preset::UnstableThreeStep => write!(f, "unstable3"),
        }
    }
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        let bad = || Error::Invalid(format!("unknown scheme preset {s:?}"));
        let number = |rest: &str| rest.trim_start_matches([':', '-']).parse::<usize>().map_err(|_| bad());
        match s.as_str() {
            "unstable2" => Ok(Preset::UnstableTwoStep),
            "unstable3" => Ok(Preset::UnstableThreeStep),
            _ if s.starts_with("adams") => Ok(Preset::Adams(number(&s[5..])?)),
            _ if s.starts_with("uniform") => Ok(Preset::Uniform(number(&s[7..])?)),
            _ => Err(bad()),
        }
    }
}
