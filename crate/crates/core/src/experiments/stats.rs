//! Student-t quantiles, batch confidence intervals and rate fits.

use serde::{Deserialize, Serialize};
use statrs::function::beta::beta_reg;

use crate::error::{Error, Result};

/// CDF of Student's t with `df` degrees of freedom.
pub fn t_cdf(t: f64, df: f64) -> f64 {
    if t == 0.0 {
        return 0.5;
    }
    let tail = 0.5 * beta_reg(df / 2.0, 0.5, df / (df + t * t));
    if t > 0.0 {
        1.0 - tail
    } else {
        tail
    }
}

/// Inverse CDF of Student's t, by bisection on the CDF above.
pub fn t_quantile(p: f64, df: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) || !(df > 0.0) {
        return Err(Error::Invalid(format!("t quantile needs 0 < p < 1 and df > 0 (got {p}, {df})")));
    }
    if p == 0.5 {
        return Ok(0.0);
    }
    if p < 0.5 {
        return t_quantile(1.0 - p, df).map(|t| -t);
    }
    let mut hi = 1.0;
    while t_cdf(hi, df) < p {
        hi *= 2.0;
        if hi > 1e300 {
            return Err(Error::NonConvergence(0));
        }
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if t_cdf(mid, df) < p {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-14 * (1.0 + hi) {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Mean of batch averages with a two-sided t interval.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BatchCi {
    pub mean: f64,
    pub lower: f64,
    pub upper: f64,
}

impl BatchCi {
    pub fn half_width(&self) -> f64 {
        0.5 * (self.upper - self.lower)
    }

    pub fn contains(&self, v: f64) -> bool {
        self.lower <= v && v <= self.upper
    }
}

/// `ε̂ ± t_{(1+level)/2, M̃−1} √(σ̂²/M̃)` with the unbiased sample variance.
pub fn batch_ci(batch_errors: &[f64], level: f64) -> Result<BatchCi> {
    let n = batch_errors.len();
    if n < 2 {
        return Err(Error::TooFewBatches { needed: 2, got: n });
    }
    let mean = batch_errors.iter().sum::<f64>() / n as f64;
    let var = batch_errors.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let half = t_quantile(0.5 + level / 2.0, (n - 1) as f64)? * (var / n as f64).sqrt();
    Ok(BatchCi {
        mean,
        lower: mean - half,
        upper: mean + half,
    })
}

/// Negated least-squares slope of `log₂ error` against `log₂ N`.
pub fn convergence_rate(ns: &[usize], errors: &[f64]) -> Result<f64> {
    if ns.len() != errors.len() || ns.len() < 2 {
        return Err(Error::Invalid("rate fit needs at least two (N, error) pairs".into()));
    }
    if let Some(&bad) = errors.iter().find(|e| !(**e > 0.0)) {
        return Err(Error::NonPositiveError(bad));
    }
    let xs: Vec<f64> = ns.iter().map(|&n| (n as f64).log2()).collect();
    let ys: Vec<f64> = errors.iter().map(|e| e.log2()).collect();
    let k = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / k, ys.iter().sum::<f64>() / k);
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::Invalid("rate fit needs at least two distinct N".into()));
    }
    Ok(-sxy / sxx)
}

/// Two-point rates between adjacent ladder entries.
pub fn pairwise_rates(ns: &[usize], errors: &[f64]) -> Result<Vec<f64>> {
    ns.windows(2)
        .zip(errors.windows(2))
        .map(|(n, e)| convergence_rate(n, e))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Student-t density integrated by composite Simpson on `[0, t]`.
    fn t_cdf_by_quadrature(t: f64, df: f64) -> f64 {
        let ln_norm = statrs::function::gamma::ln_gamma((df + 1.0) / 2.0)
            - statrs::function::gamma::ln_gamma(df / 2.0)
            - 0.5 * (df * std::f64::consts::PI).ln();
        let density = |x: f64| (ln_norm - (df + 1.0) / 2.0 * (1.0 + x * x / df).ln()).exp();
        let n = 20_000;
        let h = t / n as f64;
        let mut acc = density(0.0) + density(t);
        for k in 1..n {
            acc += density(k as f64 * h) * if k % 2 == 1 { 4.0 } else { 2.0 };
        }
        0.5 + acc * h / 3.0
    }

    #[test]
    fn quantiles_match_quadrature() {
        let q = t_quantile(0.975, 20.0).unwrap();
        assert!((q - 2.0860).abs() < 1e-4);
        assert!((t_cdf_by_quadrature(q, 20.0) - 0.975).abs() < 1e-9);
        for (p, df) in [(0.9, 3.0), (0.995, 7.0), (0.6, 1.0)] {
            let q = t_quantile(p, df).unwrap();
            assert!((t_cdf_by_quadrature(q, df) - p).abs() < 1e-8, "{p} {df}");
        }
    }

    #[test]
    fn quantile_limits() {
        assert_eq!(t_quantile(0.5, 4.0).unwrap(), 0.0);
        assert!((t_quantile(0.975, 1e6).unwrap() - 1.96).abs() < 1e-3);
        assert!((t_quantile(0.975, 1.0).unwrap() - 12.7062).abs() < 1e-4);
        assert!((t_quantile(0.025, 20.0).unwrap() + 2.0860).abs() < 1e-4);
        assert!(t_quantile(1.0, 3.0).is_err());
    }

    #[test]
    fn batch_intervals() {
        let ci = batch_ci(&[0.375; 21], 0.95).unwrap();
        assert_eq!((ci.mean, ci.lower, ci.upper), (0.375, 0.375, 0.375));
        let ci = batch_ci(&[0.0, 2.0], 0.95).unwrap();
        assert_eq!(ci.mean, 1.0);
        assert!((ci.half_width() - 12.7062).abs() < 1e-4);
        assert!(matches!(batch_ci(&[1.0], 0.95), Err(Error::TooFewBatches { .. })));
    }

    #[test]
    fn rates_on_power_laws() {
        let ns = [5, 10, 15, 20];
        let e1: Vec<f64> = ns.iter().map(|&n| 3.0 / n as f64).collect();
        let e3: Vec<f64> = ns.iter().map(|&n| 0.5 * (n as f64).powi(-3)).collect();
        assert!((convergence_rate(&ns, &e1).unwrap() - 1.0).abs() < 1e-12);
        assert!((convergence_rate(&ns, &e3).unwrap() - 3.0).abs() < 1e-12);
        let pw = pairwise_rates(&ns, &e3).unwrap();
        assert!(pw.iter().all(|r| (r - 3.0).abs() < 1e-12));
        assert!(matches!(convergence_rate(&[5, 10], &[1.0, 0.0]), Err(Error::NonPositiveError(_))));
    }
}
