//! Trials, (N, M) ladders and stability demonstrations.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::report::{ConvergenceReport, ReportRow};
use super::stats::{batch_ci, convergence_rate, pairwise_rates};
use crate::error::{Error, Result};
use crate::problems::{closed_form_reference, DriverTime, Example1, Example2, ExponentialOde, FbsdeProblem, ZeroDriver};
use crate::scheme::MultistepScheme;
use crate::simulation::{simulate, GridSpec};
use crate::solver::{deterministic_solve, solve, SolverConfig};

/// Fewest batches for which batch means are treated as Gaussian.
pub const MIN_BATCHES: usize = 15;

/// Reference `(N, M)` pairs for the first benchmark's error table.
pub const REFERENCE_PAIRS: [(usize, usize); 4] = [(5, 2778), (10, 5996), (15, 8809), (20, 12018)];

/// A problem selected by name and parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "lowercase")]
pub enum ProblemSpec {
    Example1 {
        eta: f64,
        /// `None` selects `1/√d`.
        tau: Option<f64>,
        dim: usize,
        literal: bool,
    },
    Example2 {
        literal: bool,
    },
    Exponential {
        rate: f64,
    },
    Constant {
        value: f64,
        dim: usize,
        sigma: f64,
    },
}

impl ProblemSpec {
    /// The first benchmark at `η = 0.6`, `τ = 1/√2`, `d = 2`.
    pub fn reference_benchmark() -> Self {
        ProblemSpec::Example1 {
            eta: 0.6,
            tau: None,
            dim: 2,
            literal: false,
        }
    }

    pub fn build(&self) -> Result<Box<dyn FbsdeProblem>> {
        Ok(match *self {
            ProblemSpec::Example1 { eta, tau, dim, literal } => {
                let mut p = match tau {
                    Some(tau) => Example1::new(eta, tau, dim)?,
                    None => Example1::with_auto_tau(eta, dim)?,
                };
                if literal {
                    p.driver_time = DriverTime::Initial;
                }
                Box::new(p)
            }
            ProblemSpec::Example2 { literal } => Box::new(Example2 {
                literal_driver: literal,
                ..Example2::default()
            }),
            ProblemSpec::Exponential { rate } => Box::new(ExponentialOde {
                rate,
                ..ExponentialOde::default()
            }),
            ProblemSpec::Constant { value, dim, sigma } => Box::new(ZeroDriver::new(value, dim, sigma)),
        })
    }
}

impl fmt::Display for ProblemSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ProblemSpec::Example1 { eta, tau, dim, literal } => {
                let tau = tau.map_or("auto".to_string(), |t| t.to_string());
                write!(f, "example1(eta={eta},tau={tau},d={dim}")?;
                if *literal {
                    write!(f, ",literal")?;
                }
                write!(f, ")")
            }
            ProblemSpec::Example2 { literal: false } => write!(f, "example2"),
            ProblemSpec::Example2 { literal: true } => write!(f, "example2(literal)"),
            ProblemSpec::Exponential { rate } => write!(f, "exponential(rate={rate})"),
            ProblemSpec::Constant { value, dim, sigma } => write!(f, "constant(c={value},d={dim},sigma={sigma})"),
        }
    }
}

/// How `Z₀ − Ẑ₀` is reduced to a scalar.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ZNorm {
    #[default]
    Euclidean,
    First,
    Max,
}

impl ZNorm {
    pub fn apply(self, diff: &[f64]) -> f64 {
        match self {
            ZNorm::Euclidean => diff.iter().map(|v| v * v).sum::<f64>().sqrt(),
            ZNorm::First => diff.first().map_or(0.0, |v| v.abs()),
            ZNorm::Max => diff.iter().fold(0.0, |a, v| a.max(v.abs())),
        }
    }
}

impl fmt::Display for ZNorm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ZNorm::Euclidean => "euclidean",
            ZNorm::First => "first",
            ZNorm::Max => "max",
        })
    }
}

impl FromStr for ZNorm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "euclidean" | "l2" => Ok(ZNorm::Euclidean),
            "first" => Ok(ZNorm::First),
            "max" | "inf" => Ok(ZNorm::Max),
            _ => Err(Error::Invalid(format!("unknown z norm `{s}` (euclidean, first, max)"))),
        }
    }
}

/// Solver knobs shared by every trial of a study.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialOptions {
    pub basis_degree: usize,
    pub allow_unstable: bool,
    pub z_control_variate: bool,
    pub deterministic: bool,
    pub z_norm: ZNorm,
    pub level: f64,
    /// Record wall-clock runtimes; off gives byte-identical reports.
    pub timing: bool,
}

impl Default for TrialOptions {
    fn default() -> Self {
        Self {
            basis_degree: 2,
            allow_unstable: false,
            z_control_variate: true,
            deterministic: false,
            z_norm: ZNorm::Euclidean,
            level: 0.95,
            timing: true,
        }
    }
}

impl TrialOptions {
    pub fn solver_config(&self, scheme: &MultistepScheme, grid: GridSpec) -> SolverConfig {
        SolverConfig {
            basis_degree: self.basis_degree,
            allow_unstable: self.allow_unstable,
            z_control_variate: self.z_control_variate,
            ..SolverConfig::new(scheme.clone(), grid)
        }
    }
}

/// Errors of one simulate-and-solve against the closed form at `(0, x₀)`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrialOutcome {
    pub err_y: f64,
    pub err_z: f64,
    pub runtime: f64,
    pub y0: f64,
    pub z0: Vec<f64>,
}

pub fn run_trial(
    problem: &dyn FbsdeProblem,
    scheme: &MultistepScheme,
    n: usize,
    m: usize,
    seed: u64,
    options: &TrialOptions,
) -> Result<TrialOutcome> {
    let (y_ref, z_ref) = closed_form_reference(problem, 0.0, &problem.x0())?;
    let start = Instant::now();
    let config = options.solver_config(scheme, GridSpec::new(problem.horizon(), n)?);
    let sol = if options.deterministic {
        deterministic_solve(problem, &config)?
    } else {
        let ensemble = simulate(problem, config.grid, m, seed)?;
        solve(problem, &config, &ensemble)?
    };
    let runtime = if options.timing { start.elapsed().as_secs_f64() } else { 0.0 };
    let diff: Vec<f64> = sol.z0.iter().zip(&z_ref).map(|(a, b)| a - b).collect();
    Ok(TrialOutcome {
        err_y: (sol.y0 - y_ref).abs(),
        err_z: options.z_norm.apply(&diff),
        runtime,
        y0: sol.y0,
        z0: sol.z0,
    })
}

/// Seed of batch `batch` under base seed `base` (SplitMix64 finaliser).
pub fn batch_seed(base: u64, batch: usize) -> u64 {
    let mut z = base ^ (batch as u64 + 1).wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// A convergence study over `(N, M)` pairs on one problem and scheme.
#[derive(Clone, Debug)]
pub struct TrialLadder {
    pub problem: ProblemSpec,
    pub scheme: MultistepScheme,
    pub scheme_label: String,
    pub pairs: Vec<(usize, usize)>,
    pub batches: usize,
    pub seed: u64,
    pub options: TrialOptions,
}

impl TrialLadder {
    pub fn validate(&self) -> Result<()> {
        if self.batches < MIN_BATCHES {
            return Err(Error::TooFewBatches {
                needed: MIN_BATCHES,
                got: self.batches,
            });
        }
        if let Some(&(n, m)) = self.pairs.iter().find(|(n, m)| *n == 0 || *m == 0) {
            return Err(Error::Invalid(format!("ladder entry (N={n}, M={m}) must be positive")));
        }
        Ok(())
    }
}

/// Runs every batch of every rung concurrently and assembles the report in
/// declared order.
pub fn run_ladder(ladder: &TrialLadder) -> Result<ConvergenceReport> {
    ladder.validate()?;
    let problem = ladder.problem.build()?;
    let jobs: Vec<(usize, usize)> = (0..ladder.pairs.len())
        .flat_map(|p| (0..ladder.batches).map(move |b| (p, b)))
        .collect();
    let outcomes: Vec<TrialOutcome> = jobs
        .par_iter()
        .map(|&(p, b)| {
            let (n, m) = ladder.pairs[p];
            run_trial(
                problem.as_ref(),
                &ladder.scheme,
                n,
                m,
                batch_seed(ladder.seed, b),
                &ladder.options,
            )
        })
        .collect::<Result<_>>()?;

    let mut rows = Vec::with_capacity(ladder.pairs.len());
    for (p, chunk) in outcomes.chunks(ladder.batches.max(1)).enumerate() {
        let ey: Vec<f64> = chunk.iter().map(|o| o.err_y).collect();
        let ez: Vec<f64> = chunk.iter().map(|o| o.err_z).collect();
        let ci_y = batch_ci(&ey, ladder.options.level)?;
        let ci_z = batch_ci(&ez, ladder.options.level)?;
        let (n, m) = ladder.pairs[p];
        rows.push(ReportRow {
            n,
            m,
            err_y: ci_y.mean,
            ci_y_lo: ci_y.lower,
            ci_y_hi: ci_y.upper,
            err_z: ci_z.mean,
            ci_z_lo: ci_z.lower,
            ci_z_hi: ci_z.upper,
            runtime: chunk.iter().map(|o| o.runtime).sum(),
        });
    }
    Ok(ConvergenceReport::new(
        ladder.problem.to_string(),
        ladder.scheme_label.clone(),
        ladder.seed,
        ladder.batches,
        ladder.options.z_norm,
        rows,
    ))
}

/// Fitted rates over report rows, if every error is positive.
pub(crate) fn fitted_rates(rows: &[ReportRow]) -> (Option<f64>, Option<f64>, Vec<f64>, Vec<f64>) {
    let ns: Vec<usize> = rows.iter().map(|r| r.n).collect();
    let ey: Vec<f64> = rows.iter().map(|r| r.err_y).collect();
    let ez: Vec<f64> = rows.iter().map(|r| r.err_z).collect();
    (
        convergence_rate(&ns, &ey).ok(),
        convergence_rate(&ns, &ez).ok(),
        pairwise_rates(&ns, &ey).unwrap_or_default(),
        pairwise_rates(&ns, &ez).unwrap_or_default(),
    )
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum DemoClass {
    Decreasing,
    Irregular,
}

impl fmt::Display for DemoClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DemoClass::Decreasing => "decreasing",
            DemoClass::Irregular => "irregular/divergent",
        })
    }
}

/// `Decreasing` when every error is finite and at most `1.5·(N_{k−1}/N_k)^p`
/// times its predecessor.
pub fn classify(ns: &[usize], errors: &[f64], expected_order: f64) -> DemoClass {
    if errors.iter().any(|e| !e.is_finite()) {
        return DemoClass::Irregular;
    }
    let ok = ns.windows(2).zip(errors.windows(2)).all(|(n, e)| {
        let expected = (n[0] as f64 / n[1] as f64).powf(expected_order);
        e[1] <= 1.5 * e[0] * expected
    });
    if ok {
        DemoClass::Decreasing
    } else {
        DemoClass::Irregular
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct StabilityDemo {
    pub scheme: String,
    pub problem: String,
    pub ns: Vec<usize>,
    /// `|Y₀ − Ŷ₀|`; `inf` where the solve blew up numerically.
    pub errors: Vec<f64>,
    pub classification: DemoClass,
}

/// Mean Y-error over `batches` seeds at each `N`. A numerical failure
/// (overflow in the recursion) counts as an infinite error. In Monte Carlo
/// mode the expected ratio between rungs is 1, since the sampling floor
/// dominates.
#[allow(clippy::too_many_arguments)]
pub fn stability_demo(
    problem: &ProblemSpec,
    scheme: &MultistepScheme,
    scheme_label: &str,
    ns: &[usize],
    m: usize,
    seed: u64,
    batches: usize,
    options: &TrialOptions,
) -> Result<StabilityDemo> {
    let batches = if options.deterministic { 1 } else { batches.max(1) };
    let built = problem.build()?;
    let options = TrialOptions {
        allow_unstable: true,
        ..options.clone()
    };
    let jobs: Vec<(usize, usize)> = ns.iter().flat_map(|&n| (0..batches).map(move |b| (n, b))).collect();
    let each = jobs
        .par_iter()
        .map(|&(n, b)| match run_trial(built.as_ref(), scheme, n, m, batch_seed(seed, b), &options) {
            Ok(o) if o.err_y.is_finite() => Ok(o.err_y),
            Ok(_) => Ok(f64::INFINITY),
            Err(e) if e.is_numerical() => Ok(f64::INFINITY),
            Err(e) => Err(e),
        })
        .collect::<Result<Vec<f64>>>()?;
    let errors: Vec<f64> = each.chunks(batches).map(|c| c.iter().sum::<f64>() / batches as f64).collect();
    let order = if options.deterministic { scheme.m() as f64 } else { 0.0 };
    Ok(StabilityDemo {
        scheme: scheme_label.to_string(),
        problem: problem.to_string(),
        ns: ns.to_vec(),
        classification: classify(ns, &errors, order),
        errors,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scheme::{uniform_family, unstable_two_step};

    #[test]
    fn constant_problem_has_zero_error() {
        let p = ZeroDriver::new(1.7, 2, 1.0);
        let o = run_trial(&p, &uniform_family(2).unwrap(), 6, 300, 4, &TrialOptions::default()).unwrap();
        assert!(o.err_y < 1e-10 && o.err_z < 1e-10, "{o:?}");
    }

    #[test]
    fn trials_are_reproducible() {
        let p = Example2::default();
        let opts = TrialOptions {
            timing: false,
            ..TrialOptions::default()
        };
        let s = uniform_family(2).unwrap();
        let a = run_trial(&p, &s, 6, 400, 9, &opts).unwrap();
        let b = run_trial(&p, &s, 6, 400, 9, &opts).unwrap();
        assert_eq!(a, b);
        let c = run_trial(&p, &s, 6, 400, 10, &opts).unwrap();
        assert_ne!(a.y0, c.y0);
    }

    #[test]
    fn z_norms() {
        let d = [3.0, -4.0];
        assert_eq!(ZNorm::Euclidean.apply(&d), 5.0);
        assert_eq!(ZNorm::First.apply(&d), 3.0);
        assert_eq!(ZNorm::Max.apply(&d), 4.0);
        assert_eq!("max".parse::<ZNorm>().unwrap(), ZNorm::Max);
        assert!("l1".parse::<ZNorm>().is_err());
    }

    #[test]
    fn batch_seeds_are_distinct() {
        let seeds: std::collections::BTreeSet<u64> = (0..1000).map(|b| batch_seed(7, b)).collect();
        assert_eq!(seeds.len(), 1000);
        assert_ne!(batch_seed(7, 0), batch_seed(8, 0));
    }

    #[test]
    fn ladder_needs_enough_batches() {
        let ladder = TrialLadder {
            problem: ProblemSpec::Example2 { literal: false },
            scheme: uniform_family(1).unwrap(),
            scheme_label: "uniform1".into(),
            pairs: vec![(4, 100)],
            batches: 14,
            seed: 1,
            options: TrialOptions::default(),
        };
        assert!(matches!(run_ladder(&ladder), Err(Error::TooFewBatches { needed: 15, .. })));
    }

    #[test]
    fn classification_rule() {
        let ns = [10, 20, 40];
        assert_eq!(classify(&ns, &[1e-2, 2.6e-3, 6e-4], 2.0), DemoClass::Decreasing);
        assert_eq!(classify(&ns, &[1e-2, 9e-3, 6e-4], 2.0), DemoClass::Irregular);
        assert_eq!(classify(&ns, &[1e-2, 1.2e-2, 1.1e-2], 0.0), DemoClass::Decreasing);
        assert_eq!(classify(&ns, &[1e-2, f64::INFINITY, 1.0], 0.0), DemoClass::Irregular);
    }

    #[test]
    fn deterministic_demo_separates_schemes() {
        let opts = TrialOptions {
            deterministic: true,
            ..TrialOptions::default()
        };
        let p = ProblemSpec::Exponential { rate: 1.0 };
        let ns = [10, 20, 40, 80];
        let good = stability_demo(&p, &uniform_family(2).unwrap(), "uniform2", &ns, 1, 0, 1, &opts).unwrap();
        assert_eq!(good.classification, DemoClass::Decreasing, "{good:?}");
        let bad = stability_demo(&p, &unstable_two_step().unwrap(), "unstable2", &ns, 1, 0, 1, &opts).unwrap();
        assert_eq!(bad.classification, DemoClass::Irregular, "{bad:?}");
    }

    #[test]
    fn monte_carlo_demo_flags_unstable_scheme() {
        let p = ProblemSpec::Example2 { literal: false };
        let ns = [5, 10, 20];
        let opts = TrialOptions::default();
        let good = stability_demo(&p, &uniform_family(2).unwrap(), "uniform2", &ns, 4000, 1, 3, &opts).unwrap();
        assert_eq!(good.classification, DemoClass::Decreasing, "{good:?}");
        let bad = stability_demo(&p, &unstable_two_step().unwrap(), "unstable2", &ns, 4000, 1, 3, &opts).unwrap();
        assert_eq!(bad.classification, DemoClass::Irregular, "{bad:?}");
    }
}
