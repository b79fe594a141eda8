//! JSON import/export of a scheme. Numbers travel as strings (`"-3/2"`,
//! `"0.5"`) so rational weights survive the round trip.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::rational::{self, Rational};
use super::{CorrectorCoefficients, MultistepScheme, PredictorCoefficients};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SchemeDocument {
    pub m: usize,
    pub alpha: Vec<String>,
    pub gamma0: String,
    pub gamma: Vec<String>,
    pub alpha_tilde: Vec<String>,
    pub gamma_tilde: Vec<String>,
    pub lambda_h: Vec<String>,
    #[serde(rename = "C_pred")]
    pub c_pred: String,
    #[serde(rename = "C_corr")]
    pub c_corr: String,
}

fn render(v: &[Rational]) -> Vec<String> {
    v.iter().map(rational::format).collect()
}

fn read(v: &[String]) -> Result<Vec<Rational>> {
    v.iter().map(|s| rational::parse(s)).collect()
}

impl From<&MultistepScheme> for SchemeDocument {
    fn from(s: &MultistepScheme) -> Self {
        SchemeDocument {
            m: s.m(),
            alpha: render(s.corrector().alpha()),
            gamma0: rational::format(s.corrector().gamma0()),
            gamma: render(s.corrector().gamma()),
            alpha_tilde: render(s.predictor().alpha()),
            gamma_tilde: render(s.predictor().gamma()),
            lambda_h: render(s.zweights().lambda_h()),
            c_pred: rational::format(s.error_constant_pred()),
            c_corr: rational::format(s.error_constant_corr()),
        }
    }
}

impl SchemeDocument {
    /// Rebuilds the scheme. Derived fields (`lambda_h`, error constants)
    /// are recomputed and must agree with the document.
    pub fn to_scheme(&self) -> Result<MultistepScheme> {
        let predictor = PredictorCoefficients::new(read(&self.alpha_tilde)?, read(&self.gamma_tilde)?)?;
        let corrector = CorrectorCoefficients::new(
            read(&self.alpha)?,
            rational::parse(&self.gamma0)?,
            read(&self.gamma)?,
        )?;
        let scheme = MultistepScheme::new(predictor, corrector)?;
        if scheme.m() != self.m {
            return Err(Error::Parse(format!(
                "declared m = {} but weights have length {}",
                self.m,
                scheme.m()
            )));
        }
        if !self.lambda_h.is_empty() && read(&self.lambda_h)? != scheme.zweights().lambda_h() {
            return Err(Error::Parse("lambda_h disagrees with the derivative stencil".into()));
        }
        if !self.c_pred.is_empty() && &rational::parse(&self.c_pred)? != scheme.error_constant_pred() {
            return Err(Error::Parse("C_pred disagrees with the predictor weights".into()));
        }
        if !self.c_corr.is_empty() && &rational::parse(&self.c_corr)? != scheme.error_constant_corr() {
            return Err(Error::Parse("C_corr disagrees with the corrector weights".into()));
        }
        Ok(scheme)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scheme document serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<MultistepScheme> {
        Self::from_json(&std::fs::read_to_string(path)?)?.to_scheme()
    }

    pub fn save(scheme: &MultistepScheme, path: &Path) -> Result<()> {
        std::fs::write(path, SchemeDocument::from(scheme).to_json())?;
        Ok(())
    }
}
