//! Characteristic polynomials of correctors and Dahlquist's root condition.

use nalgebra::{Complex, DMatrix};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::scheme::{rational, CorrectorCoefficients};

pub type Complex64 = Complex<f64>;

/// Default clustering tolerance for [`check_root_condition`].
pub const DEFAULT_TOL: f64 = 1e-8;

/// Monic polynomial `ζ^m + c₁ζ^{m−1} + … + c_m`, highest degree first.
#[derive(Clone, Debug, PartialEq)]
pub struct CharacteristicPolynomial {
    coeffs: Vec<f64>,
}

/// `P(ζ) = ζ^m − α₁ζ^{m−1} − … − α_m`.
pub fn characteristic_polynomial(corrector: &CorrectorCoefficients) -> CharacteristicPolynomial {
    let coeffs = std::iter::once(1.0)
        .chain(corrector.alpha().iter().map(|a| -rational::to_f64(a)))
        .collect();
    CharacteristicPolynomial { coeffs }
}

impl CharacteristicPolynomial {
    pub fn from_coeffs(coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.len() < 2 || coeffs[0] != 1.0 || coeffs.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidPolynomial);
        }
        Ok(Self { coeffs })
    }

    /// Expands `∏(ζ − r)`. Imaginary parts of the expansion are dropped, so
    /// non-real roots must come in conjugate pairs.
    pub fn from_roots(roots: &[Complex64]) -> Result<Self> {
        let mut acc = vec![Complex64::new(1.0, 0.0)];
        for r in roots {
            let mut next = acc.clone();
            next.push(Complex64::new(0.0, 0.0));
            for (k, a) in acc.iter().enumerate() {
                next[k + 1] -= a * r;
            }
            acc = next;
        }
        Self::from_coeffs(acc.into_iter().map(|c| c.re).collect())
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    /// `P(z)` and `P'(z)` by Horner's rule.
    pub fn eval_with_derivative(&self, z: Complex64) -> (Complex64, Complex64) {
        let mut p = Complex64::new(0.0, 0.0);
        let mut dp = Complex64::new(0.0, 0.0);
        for &c in &self.coeffs {
            dp = dp * z + p;
            p = p * z + c;
        }
        (p, dp)
    }

    pub fn eval(&self, z: Complex64) -> Complex64 {
        self.eval_with_derivative(z).0
    }
}

impl std::fmt::Display for CharacteristicPolynomial {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let m = self.degree();
        write!(f, "z^{m}")?;
        for (k, &c) in self.coeffs.iter().enumerate().skip(1) {
            if c == 0.0 {
                continue;
            }
            let sign = if c < 0.0 { '-' } else { '+' };
            match m - k {
                0 => write!(f, " {sign} {}", c.abs())?,
                1 => write!(f, " {sign} {}z", c.abs())?,
                p => write!(f, " {sign} {}z^{p}", c.abs())?,
            }
        }
        Ok(())
    }
}

/// All roots, with repetition, as eigenvalues of the companion matrix,
/// each followed by one Newton step when that step reduces `|P|`.
pub fn polynomial_roots(poly: &CharacteristicPolynomial) -> Result<Vec<Complex64>> {
    let m = poly.degree();
    let mut companion = DMatrix::<f64>::zeros(m, m);
    for k in 0..m {
        companion[(0, k)] = -poly.coeffs[k + 1];
    }
    for k in 1..m {
        companion[(k, k - 1)] = 1.0;
    }
    let schur = nalgebra::linalg::Schur::try_new(companion, f64::EPSILON, 10_000)
        .ok_or(Error::NonConvergence(m))?;
    let roots = schur
        .complex_eigenvalues()
        .iter()
        .map(|&r| {
            let (p, dp) = poly.eval_with_derivative(r);
            if dp.norm() == 0.0 {
                return r;
            }
            let polished = r - p / dp;
            if polished.is_finite() && poly.eval(polished).norm() < p.norm() {
                polished
            } else {
                r
            }
        })
        .collect();
    Ok(roots)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum StabilityStatus {
    Stable,
    Unstable,
    Marginal,
}

/// A group of numerically coincident roots.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RootCluster {
    pub re: f64,
    pub im: f64,
    pub modulus: f64,
    pub multiplicity: usize,
}

impl RootCluster {
    pub fn value(&self) -> Complex64 {
        Complex64::new(self.re, self.im)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StabilityVerdict {
    pub status: StabilityStatus,
    pub roots: Vec<RootCluster>,
    pub offending: Vec<RootCluster>,
}

/// Groups roots whose mutual distance is below `tol` (single linkage);
/// each cluster is represented by its mean.
fn cluster(roots: &[Complex64], tol: f64) -> Vec<RootCluster> {
    let n = roots.len();
    let mut label: Vec<usize> = (0..n).collect();
    for a in 0..n {
        for b in a + 1..n {
            if (roots[a] - roots[b]).norm() < tol {
                let (from, to) = (label[b], label[a]);
                for l in label.iter_mut().filter(|l| **l == from) {
                    *l = to;
                }
            }
        }
    }
    let mut out = Vec::new();
    for l in 0..n {
        let members: Vec<Complex64> = (0..n).filter(|&k| label[k] == l).map(|k| roots[k]).collect();
        if members.is_empty() {
            continue;
        }
        let mean = members.iter().sum::<Complex64>() / members.len() as f64;
        out.push(RootCluster {
            re: mean.re,
            im: mean.im,
            modulus: mean.norm(),
            multiplicity: members.len(),
        });
    }
    out.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
    out
}

/// Root condition: every root in the closed unit disk, and those on the
/// unit circle simple. A simple near-unit root that would merge with a
/// neighbour under the looser tolerance `√tol` yields `Marginal`.
pub fn check_root_condition(roots: &[Complex64], tol: f64) -> StabilityVerdict {
    let clusters = cluster(roots, tol);
    let on_circle = |c: &RootCluster| (c.modulus - 1.0).abs() <= tol;
    let offending: Vec<RootCluster> = clusters
        .iter()
        .filter(|c| c.modulus > 1.0 + tol || (on_circle(c) && c.multiplicity >= 2))
        .cloned()
        .collect();
    let status = if !offending.is_empty() {
        StabilityStatus::Unstable
    } else {
        let loose = cluster(roots, tol.sqrt());
        let sensitive = clusters
            .iter()
            .filter(|c| on_circle(c))
            .any(|c| {
                loose
                    .iter()
                    .any(|l| l.multiplicity > c.multiplicity && (l.value() - c.value()).norm() < tol.sqrt())
            });
        if sensitive {
            StabilityStatus::Marginal
        } else {
            StabilityStatus::Stable
        }
    };
    StabilityVerdict {
        status,
        roots: clusters,
        offending,
    }
}

/// Root-condition verdict for a corrector.
pub fn analyze(corrector: &CorrectorCoefficients, tol: f64) -> Result<StabilityVerdict> {
    let roots = polynomial_roots(&characteristic_polynomial(corrector))?;
    Ok(check_root_condition(&roots, tol))
}
