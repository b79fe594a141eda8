//! The backward predictor-corrector pass.
//!
//! Levels `N−1..N−m+1` come from a one-step bootstrap on a refined grid;
//! every other level `i` runs, in order, the Z regression, the predictor
//! regression and the corrector regression on the basis at `X_i`.

use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::problems::{Bounds, FbsdeProblem};
use crate::regression::{build_basis, truncate, PolynomialBasis, RegressionModel, Regressor};
use crate::scheme::{uniform_family, MultistepScheme, SchemeWeights};
use crate::simulation::{simulate, GridSpec, PathEnsemble};
use crate::stability::{analyze, StabilityStatus, StabilityVerdict, DEFAULT_TOL};

/// Bootstrap refinement per coarse step.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Substeps {
    /// `ceil(h^{−(m−1)/2})`, capped in Monte Carlo mode.
    Auto,
    Fixed(usize),
}

/// Constant offsets added to every corrector (`y`) and Z (`z`) response.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct Perturbation {
    pub y: f64,
    pub z: f64,
}

#[derive(Clone, Debug)]
pub struct SolverConfig {
    pub scheme: MultistepScheme,
    pub grid: GridSpec,
    pub basis_degree: usize,
    /// Overrides the problem's truncation bounds.
    pub bounds: Option<Bounds>,
    pub substeps: Substeps,
    /// Cap on automatic substeps in Monte Carlo mode.
    pub bootstrap_cap: usize,
    pub allow_unstable: bool,
    /// Subtract `y_{i+j}(X_i)` inside the Z response. The subtracted term
    /// is `F_i`-measurable, so the conditional expectation is unchanged.
    pub z_control_variate: bool,
    pub stability_tol: f64,
    pub perturbation: Perturbation,
}

impl SolverConfig {
    pub fn new(scheme: MultistepScheme, grid: GridSpec) -> Self {
        Self {
            scheme,
            grid,
            basis_degree: 2,
            bounds: None,
            substeps: Substeps::Auto,
            bootstrap_cap: 64,
            allow_unstable: false,
            z_control_variate: true,
            stability_tol: DEFAULT_TOL,
            perturbation: Perturbation::default(),
        }
    }

    /// Root-condition verdict; anything but `Stable` is an error unless
    /// `allow_unstable` is set.
    pub fn validate(&self) -> Result<StabilityVerdict> {
        let verdict = analyze(self.scheme.corrector(), self.stability_tol)?;
        if verdict.status != StabilityStatus::Stable && !self.allow_unstable {
            let roots: Vec<String> = verdict
                .offending
                .iter()
                .chain(verdict.roots.iter().filter(|_| verdict.offending.is_empty()))
                .map(|c| format!("{:.6}{:+.6}i", c.re, c.im))
                .collect();
            return Err(Error::UnstableScheme(format!(
                "{:?}; roots {}",
                verdict.status,
                roots.join(", ")
            )));
        }
        if self.grid.steps() < self.scheme.m() {
            return Err(Error::Invalid(format!(
                "{} steps cannot carry a {}-step scheme",
                self.grid.steps(),
                self.scheme.m()
            )));
        }
        Ok(verdict)
    }

    pub fn resolved_substeps(&self, deterministic: bool) -> usize {
        match self.substeps {
            Substeps::Fixed(r) => r.max(1),
            Substeps::Auto => {
                let r = auto_substeps(self.grid.h(), self.scheme.m());
                if deterministic {
                    r
                } else {
                    r.min(self.bootstrap_cap.max(1))
                }
            }
        }
    }
}

/// Smallest `r` with `(h/r)² ≤ h^{m+1}`.
pub fn auto_substeps(h: f64, m: usize) -> usize {
    if m <= 1 {
        return 1;
    }
    let r = h.powf(-((m - 1) as f64) / 2.0);
    ((r - 1e-9).ceil() as usize).max(1)
}

/// How a level's values are defined as functions of the state.
#[derive(Clone, Debug)]
enum Rule {
    Terminal,
    Fitted { y: RegressionModel, z: RegressionModel },
}

/// Values of one level at that level's own states.
#[derive(Clone, Debug)]
struct Level {
    rule: Rule,
    y: Vec<f64>,
    z: Vec<f64>,
    f: Vec<f64>,
}

/// Output of one backward step.
#[derive(Clone, Debug)]
pub struct StepOutput {
    pub z_model: RegressionModel,
    pub y_tilde_model: RegressionModel,
    pub y_model: RegressionModel,
    /// Sample mean of `|ỹ_i(X_i) − y_i(X_i)|`.
    pub gap: f64,
    pub y_tilde_mean: f64,
}

/// One backward pass over an ensemble with a fixed scheme.
struct Pass<'a> {
    problem: &'a dyn FbsdeProblem,
    ensemble: &'a PathEnsemble,
    w: SchemeWeights,
    basis: PolynomialBasis,
    bounds: Bounds,
    /// Identity projection on a single trajectory, `z ≡ 0`.
    deterministic: bool,
    control_variate: bool,
    perturbation: Perturbation,
}

impl<'a> Pass<'a> {
    fn m(&self) -> usize {
        self.w.m
    }

    fn trajectories(&self) -> usize {
        self.ensemble.trajectories()
    }

    fn states(&self, i: usize) -> Vec<f64> {
        let d = self.ensemble.dim();
        let mut out = Vec::with_capacity(self.trajectories() * d);
        for k in 0..self.trajectories() {
            out.extend_from_slice(self.ensemble.state(k, i));
        }
        out
    }

    fn terminal_level(&self) -> Level {
        let n = self.ensemble.grid().steps();
        let d = self.ensemble.dim();
        let t = self.ensemble.grid().time(n);
        let rows: Vec<(f64, Vec<f64>, f64)> = (0..self.trajectories())
            .into_par_iter()
            .map(|k| {
                let x = self.ensemble.state(k, n);
                let (y, z) = crate::problems::terminal_values(self.problem, x);
                let z = if self.deterministic { vec![0.0; d] } else { z };
                let f = self.problem.driver(t, x, y, &z);
                (y, z, f)
            })
            .collect();
        let mut level = Level {
            rule: Rule::Terminal,
            y: Vec::with_capacity(rows.len()),
            z: Vec::with_capacity(rows.len() * d),
            f: Vec::with_capacity(rows.len()),
        };
        for (y, z, f) in rows {
            level.y.push(y);
            level.z.extend(z);
            level.f.push(f);
        }
        level
    }

    /// Evaluates fitted models at the states of level `i`.
    fn level_from_models(&self, i: usize, y: RegressionModel, z: RegressionModel) -> Result<Level> {
        let d = self.ensemble.dim();
        let t = self.ensemble.grid().time(i);
        let rows: Vec<(f64, Vec<f64>, f64)> = (0..self.trajectories())
            .into_par_iter()
            .map(|k| {
                let x = self.ensemble.state(k, i);
                let yv = y.predict(x)?[0];
                let zv = z.predict(x)?;
                let f = self.problem.driver(t, x, yv, &zv);
                Ok((yv, zv, f))
            })
            .collect::<Result<_>>()?;
        let mut level = Level {
            rule: Rule::Fitted { y, z },
            y: Vec::with_capacity(rows.len()),
            z: Vec::with_capacity(rows.len() * d),
            f: Vec::with_capacity(rows.len()),
        };
        for (yv, zv, f) in rows {
            level.y.push(yv);
            level.z.extend(zv);
            level.f.push(f);
        }
        Ok(level)
    }

    fn rule_y(&self, rule: &Rule, x: &[f64]) -> f64 {
        match rule {
            Rule::Terminal => self.problem.terminal(x),
            Rule::Fitted { y, .. } => y.predict(x).map(|v| v[0]).unwrap_or(f64::NAN),
        }
    }

    /// Conditional expectation of `responses` (`outputs` per trajectory)
    /// given `X_i`, and its values at the samples.
    fn project(
        &self,
        i: usize,
        regressor: Option<&Regressor>,
        mut responses: Vec<f64>,
        outputs: usize,
        bound: f64,
    ) -> Result<(RegressionModel, Vec<f64>)> {
        if responses.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteResponse { step: i });
        }
        match regressor {
            Some(reg) => {
                let model = reg.fit(&responses, outputs, bound)?;
                let values = reg.predict_at_samples(&model);
                Ok((model, values))
            }
            None if self.deterministic => {
                truncate(&mut responses, bound);
                let model = RegressionModel::constant(self.basis.clone(), &responses[..outputs], bound);
                Ok((model, responses))
            }
            None => {
                // All states coincide: the projection is the sample mean.
                let m = self.trajectories() as f64;
                let mut mean = vec![0.0; outputs];
                for row in responses.chunks(outputs) {
                    for (a, v) in mean.iter_mut().zip(row) {
                        *a += v / m;
                    }
                }
                truncate(&mut mean, bound);
                let values = mean.iter().copied().cycle().take(responses.len()).collect();
                Ok((RegressionModel::constant(self.basis.clone(), &mean, bound), values))
            }
        }
    }

    fn step(&self, i: usize, levels: &[Option<Level>]) -> Result<(Level, StepOutput)> {
        let m = self.m();
        let d = self.ensemble.dim();
        let grid = self.ensemble.grid();
        let h = grid.h();
        let t = grid.time(i);
        let n_traj = self.trajectories();
        let future: Vec<&Level> = (1..=m)
            .map(|j| levels[i + j].as_ref().expect("future levels are filled before use"))
            .collect();

        let x_i = self.states(i);
        let point_mass = x_i.chunks(d).all(|x| x == &x_i[..d]);
        let regressor = if self.deterministic || point_mass {
            None
        } else {
            Some(Regressor::new(self.basis.clone(), &x_i)?)
        };

        let (z_model, z_vals) = if self.deterministic {
            let zero = vec![0.0; d];
            (
                RegressionModel::constant(self.basis.clone(), &zero, self.bounds.z),
                vec![0.0; n_traj * d],
            )
        } else {
            let mut resp = vec![0.0; n_traj * d];
            resp.par_chunks_mut(d).enumerate().for_each(|(k, out)| {
                let x = &x_i[k * d..(k + 1) * d];
                let mut dw = vec![0.0; d];
                for (j, lv) in future.iter().enumerate() {
                    let weight = self.w.lambda_h[j + 1] / h;
                    let mut y = lv.y[k];
                    if self.control_variate {
                        y -= self.rule_y(&lv.rule, x);
                    }
                    self.ensemble.brownian_change(k, i, i + j + 1, &mut dw);
                    for (o, w) in out.iter_mut().zip(&dw) {
                        *o += weight * y * w;
                    }
                }
                for o in out.iter_mut() {
                    *o += self.perturbation.z;
                }
            });
            self.project(i, regressor.as_ref(), resp, d, self.bounds.z)?
        };

        let explicit_part = |alpha: &[f64], gamma: &[f64], k: usize| -> f64 {
            future
                .iter()
                .enumerate()
                .map(|(j, lv)| alpha[j] * lv.y[k] + h * gamma[j] * lv.f[k])
                .sum::<f64>()
        };

        let resp: Vec<f64> = (0..n_traj)
            .into_par_iter()
            .map(|k| explicit_part(&self.w.alpha_tilde, &self.w.gamma_tilde, k))
            .collect();
        let (y_tilde_model, y_tilde) = self.project(i, regressor.as_ref(), resp, 1, self.bounds.y)?;

        let resp: Vec<f64> = (0..n_traj)
            .into_par_iter()
            .map(|k| {
                let x = &x_i[k * d..(k + 1) * d];
                let z = &z_vals[k * d..(k + 1) * d];
                explicit_part(&self.w.alpha, &self.w.gamma, k)
                    + h * self.w.gamma0 * self.problem.driver(t, x, y_tilde[k], z)
                    + self.perturbation.y
            })
            .collect();
        let (y_model, y_vals) = self.project(i, regressor.as_ref(), resp, 1, self.bounds.y)?;

        let f: Vec<f64> = (0..n_traj)
            .into_par_iter()
            .map(|k| {
                let x = &x_i[k * d..(k + 1) * d];
                self.problem.driver(t, x, y_vals[k], &z_vals[k * d..(k + 1) * d])
            })
            .collect();
        let gap = y_tilde.iter().zip(&y_vals).map(|(a, b)| (a - b).abs()).sum::<f64>() / n_traj as f64;
        let y_tilde_mean = y_tilde.iter().sum::<f64>() / n_traj as f64;
        let level = Level {
            rule: Rule::Fitted {
                y: y_model.clone(),
                z: z_model.clone(),
            },
            y: y_vals,
            z: z_vals,
            f,
        };
        Ok((
            level,
            StepOutput {
                z_model,
                y_tilde_model,
                y_model,
                gap,
                y_tilde_mean,
            },
        ))
    }
}

/// Result of a backward solve.
#[derive(Clone, Debug, Serialize)]
pub struct BackwardSolution {
    pub y0: f64,
    pub z0: Vec<f64>,
    /// Milne-scaled mean predictor-corrector gaps at levels `0..=N−m`.
    pub milne: Vec<f64>,
    /// Mean of `y_i(X_i)` over trajectories, levels `0..=N`.
    pub y_mean: Vec<f64>,
    /// Mean of `ỹ_i(X_i)` where a predictor ran.
    pub y_tilde_mean: Vec<Option<f64>>,
    #[serde(skip)]
    pub y_models: Vec<Option<RegressionModel>>,
    #[serde(skip)]
    pub z_models: Vec<Option<RegressionModel>>,
    pub substeps: usize,
}

impl BackwardSolution {
    /// `(y_i(x), z_i(x))` from the stored models; level `N` uses the
    /// problem's terminal rule.
    pub fn evaluate(&self, problem: &dyn FbsdeProblem, i: usize, x: &[f64]) -> Result<(f64, Vec<f64>)> {
        match (&self.y_models[i], &self.z_models[i]) {
            (Some(y), Some(z)) => Ok((y.predict(x)?[0], z.predict(x)?)),
            _ => Ok(crate::problems::terminal_values(problem, x)),
        }
    }
}

fn check_ensemble(problem: &dyn FbsdeProblem, config: &SolverConfig, ensemble: &PathEnsemble) -> Result<()> {
    let (g, e) = (&config.grid, ensemble.grid());
    if g.steps() != e.steps() || (g.horizon() - e.horizon()).abs() > 1e-12 || e.start() != 0.0 {
        return Err(Error::Invalid("ensemble grid does not match the solver grid".into()));
    }
    if ensemble.dim() != problem.dim() {
        return Err(Error::DimensionMismatch {
            expected: problem.dim(),
            got: ensemble.dim(),
        });
    }
    if (problem.horizon() - g.horizon()).abs() > 1e-12 {
        return Err(Error::Invalid("grid horizon differs from the problem horizon".into()));
    }
    Ok(())
}

fn make_pass<'a>(
    problem: &'a dyn FbsdeProblem,
    config: &SolverConfig,
    ensemble: &'a PathEnsemble,
    scheme: &MultistepScheme,
    deterministic: bool,
) -> Result<Pass<'a>> {
    Ok(Pass {
        problem,
        ensemble,
        w: scheme.weights(),
        basis: build_basis(problem.dim(), config.basis_degree)?,
        bounds: config.bounds.unwrap_or_else(|| problem.bounds()),
        deterministic,
        control_variate: config.z_control_variate,
        perturbation: config.perturbation,
    })
}

/// Fitted `(y, z)` models at coarse levels `N−1 .. N−m+1` (in that order)
/// from the one-step scheme on `r` substeps per coarse step.
pub fn bootstrap(
    problem: &dyn FbsdeProblem,
    config: &SolverConfig,
    ensemble: &PathEnsemble,
    substeps: usize,
) -> Result<Vec<(usize, RegressionModel, RegressionModel)>> {
    bootstrap_impl(problem, config, ensemble, substeps, false)
}

fn bootstrap_impl(
    problem: &dyn FbsdeProblem,
    config: &SolverConfig,
    ensemble: &PathEnsemble,
    substeps: usize,
    deterministic: bool,
) -> Result<Vec<(usize, RegressionModel, RegressionModel)>> {
    let m = config.scheme.m();
    if m <= 1 {
        return Ok(Vec::new());
    }
    let n = ensemble.grid().steps();
    let from = n + 1 - m;
    let fine = ensemble.refine_tail(problem, from, substeps)?;
    let one_step = uniform_family(1)?;
    let mut pass = make_pass(problem, config, &fine, &one_step, deterministic)?;
    pass.perturbation = Perturbation::default();
    let nf = fine.grid().steps();
    let mut levels: Vec<Option<Level>> = vec![None; nf + 1];
    levels[nf] = Some(pass.terminal_level());
    for node in (0..nf).rev() {
        let (level, _) = pass.step(node, &levels)?;
        levels[node] = Some(level);
        // Only the previous fine level is needed again.
        if node + 2 <= nf && (node + 2) % substeps != 0 {
            levels[node + 2] = None;
        }
    }
    let mut out = Vec::with_capacity(m - 1);
    for c in (0..m - 1).rev() {
        match levels[c * substeps].take().map(|l| l.rule) {
            Some(Rule::Fitted { y, z }) => out.push((from + c, y, z)),
            _ => unreachable!("bootstrap nodes below the horizon are fitted"),
        }
    }
    Ok(out)
}

fn run(
    problem: &dyn FbsdeProblem,
    config: &SolverConfig,
    ensemble: &PathEnsemble,
    deterministic: bool,
) -> Result<BackwardSolution> {
    let pass = make_pass(problem, config, ensemble, &config.scheme, deterministic)?;
    let m = pass.m();
    let n = config.grid.steps();
    let substeps = config.resolved_substeps(deterministic);
    let factor = pass.w.milne_factor.unwrap_or(f64::NAN);

    let mut levels: Vec<Option<Level>> = vec![None; n + 1];
    levels[n] = Some(pass.terminal_level());
    let mut y_models: Vec<Option<RegressionModel>> = vec![None; n + 1];
    let mut z_models: Vec<Option<RegressionModel>> = vec![None; n + 1];
    for (level, y, z) in bootstrap_impl(problem, config, ensemble, substeps, deterministic)? {
        y_models[level] = Some(y.clone());
        z_models[level] = Some(z.clone());
        levels[level] = Some(pass.level_from_models(level, y, z)?);
    }

    let mut milne = vec![f64::NAN; n + 1 - m];
    let mut y_tilde_mean = vec![None; n + 1];
    for i in (0..=n - m).rev() {
        let (level, out) = pass.step(i, &levels)?;
        milne[i] = factor * out.gap;
        y_tilde_mean[i] = Some(out.y_tilde_mean);
        y_models[i] = Some(out.y_model);
        z_models[i] = Some(out.z_model);
        levels[i] = Some(level);
    }

    let y_mean = levels
        .iter()
        .map(|l| {
            let l = l.as_ref().expect("every level is filled");
            l.y.iter().sum::<f64>() / l.y.len() as f64
        })
        .collect();
    let x0 = ensemble.state(0, 0).to_vec();
    let y0 = y_models[0].as_ref().expect("level 0 is fitted").predict(&x0)?[0];
    let z0 = z_models[0].as_ref().expect("level 0 is fitted").predict(&x0)?;
    Ok(BackwardSolution {
        y0,
        z0,
        milne,
        y_mean,
        y_tilde_mean,
        y_models,
        z_models,
        substeps,
    })
}

/// Monte Carlo solve on a simulated ensemble.
pub fn solve(problem: &dyn FbsdeProblem, config: &SolverConfig, ensemble: &PathEnsemble) -> Result<BackwardSolution> {
    config.validate()?;
    check_ensemble(problem, config, ensemble)?;
    run(problem, config, ensemble, false)
}

/// Regression-free solve of a problem without diffusion: the scheme
/// recursion on the single deterministic path.
pub fn deterministic_solve(problem: &dyn FbsdeProblem, config: &SolverConfig) -> Result<BackwardSolution> {
    if !problem.is_deterministic() {
        return Err(Error::NotDeterministic);
    }
    config.validate()?;
    let ensemble = simulate(problem, config.grid, 1, 0)?;
    check_ensemble(problem, config, &ensemble)?;
    run(problem, config, &ensemble, true)
}

/// Local error and Milne indicator of one step started from exact values.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct LocalProbe {
    pub step: usize,
    pub local_error: f64,
    pub indicator: f64,
}

impl LocalProbe {
    pub fn ratio(&self) -> f64 {
        self.local_error / self.indicator
    }
}

/// For each level `i ≤ N−m`, applies predictor and corrector to the exact
/// solution at `i+1..i+m` and compares `|u_i − Y_i|` with the Milne
/// estimate `|C/(C−C̃)|·|Ỹ_i − Y_i|`.
pub fn local_error_probe(problem: &dyn FbsdeProblem, scheme: &MultistepScheme, grid: GridSpec) -> Result<Vec<LocalProbe>> {
    if !problem.is_deterministic() {
        return Err(Error::NotDeterministic);
    }
    let w = scheme.weights();
    let factor = crate::scheme::milne_factor(scheme)?;
    let ensemble = simulate(problem, grid, 1, 0)?;
    let d = problem.dim();
    let zero = vec![0.0; d];
    let h = grid.h();
    let n = grid.steps();
    let exact = |i: usize| -> Result<f64> {
        Ok(crate::problems::closed_form_reference(problem, grid.time(i), ensemble.state(0, i))?.0)
    };
    let mut out = Vec::new();
    for i in 0..=n.saturating_sub(w.m) {
        let mut pred = 0.0;
        let mut corr = 0.0;
        for j in 1..=w.m {
            let (t, x) = (grid.time(i + j), ensemble.state(0, i + j));
            let u = exact(i + j)?;
            let f = problem.driver(t, x, u, &zero);
            pred += w.alpha_tilde[j - 1] * u + h * w.gamma_tilde[j - 1] * f;
            corr += w.alpha[j - 1] * u + h * w.gamma[j - 1] * f;
        }
        corr += h * w.gamma0 * problem.driver(grid.time(i), ensemble.state(0, i), pred, &zero);
        out.push(LocalProbe {
            step: i,
            local_error: (exact(i)? - corr).abs(),
            indicator: factor * (pred - corr).abs(),
        });
    }
    Ok(out)
}

/// `|Y₀(perturbed) − Y₀|` in deterministic mode.
pub fn perturbation_response(
    problem: &dyn FbsdeProblem,
    config: &SolverConfig,
    perturbation: Perturbation,
) -> Result<f64> {
    let base = deterministic_solve(problem, &SolverConfig {
        perturbation: Perturbation::default(),
        ..config.clone()
    })?;
    let moved = deterministic_solve(problem, &SolverConfig {
        perturbation,
        ..config.clone()
    })?;
    Ok((moved.y0 - base.y0).abs())
}

/// A solve together with its wall-clock time.
pub fn timed_solve(
    problem: &dyn FbsdeProblem,
    config: &SolverConfig,
    ensemble: &PathEnsemble,
) -> Result<(BackwardSolution, f64)> {
    let start = Instant::now();
    let sol = solve(problem, config, ensemble)?;
    Ok((sol, start.elapsed().as_secs_f64()))
}
