use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use fbsde::experiments::{
    emit_report, render_report, run_ladder, stability_demo, ConfigFile, ProblemSpec, ReportFormat, TrialLadder,
    TrialOptions, ZNorm, REFERENCE_PAIRS,
};
use fbsde::scheme::{uniform_family, MultistepScheme, Preset, SchemeDocument};
use fbsde::simulation::{simulate, GridSpec};
use fbsde::solver::{deterministic_solve, solve, SolverConfig};
use fbsde::stability::{analyze, characteristic_polynomial, StabilityStatus, DEFAULT_TOL};
use fbsde::Error;

#[derive(Parser, Debug)]
#[command(name = "fbsde", version, about = "Multistep predictor-corrector solver for decoupled FBSDEs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    opts: Opts,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Derive a scheme and print its coefficient document.
    Coeffs,
    /// Root-condition verdict of a scheme's corrector.
    Stability,
    /// One simulate-and-solve; prints the result JSON.
    Solve,
    /// Batched convergence study over (N, M) pairs.
    Convergence,
    /// Errors against N for one scheme, classified as decreasing or irregular.
    StabilityDemo,
}

#[derive(Args, Debug, Default)]
struct Opts {
    /// key=value file mirroring these flags; flags win.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// example1, example2, exponential or constant.
    #[arg(long, global = true)]
    problem: Option<String>,
    #[arg(long, global = true)]
    eta: Option<f64>,
    /// A number or `auto` for 1/sqrt(d).
    #[arg(long, global = true)]
    tau: Option<String>,
    #[arg(long, global = true)]
    dim: Option<usize>,
    /// Use the literal driver form (example1: initial time; example2: 1+e denominator).
    #[arg(long, global = true, num_args = 0..=1, default_missing_value = "true")]
    literal_driver: Option<bool>,
    /// Scheme coefficient document (JSON).
    #[arg(long = "scheme-file", visible_alias = "scheme", global = true)]
    scheme_file: Option<PathBuf>,
    /// adamsK, uniformM, unstable2 or unstable3.
    #[arg(long, global = true)]
    preset: Option<String>,
    /// Step count of the uniform family.
    #[arg(long, global = true)]
    steps: Option<usize>,
    /// Time steps; comma-separated for ladders.
    #[arg(long = "N", global = true)]
    n: Option<String>,
    /// Trajectories; one value or one per N.
    #[arg(long = "M", global = true)]
    m: Option<String>,
    /// Use the (N, M) pairs of the first benchmark's error table.
    #[arg(long, global = true, num_args = 0..=1, default_missing_value = "true")]
    reference_ladder: Option<bool>,
    #[arg(long, global = true)]
    batches: Option<usize>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Plot-data output for convergence studies.
    #[arg(long, global = true)]
    plot: Option<PathBuf>,
    /// csv or json.
    #[arg(long, global = true)]
    format: Option<String>,
    #[arg(long, global = true, num_args = 0..=1, default_missing_value = "true")]
    deterministic: Option<bool>,
    #[arg(long, global = true, num_args = 0..=1, default_missing_value = "true")]
    allow_unstable: Option<bool>,
    #[arg(long, global = true)]
    basis_degree: Option<usize>,
    /// Root-condition tolerance.
    #[arg(long, global = true)]
    tol: Option<f64>,
    /// euclidean, first or max.
    #[arg(long, global = true)]
    z_norm: Option<String>,
    #[arg(long, global = true)]
    level: Option<f64>,
    /// Record runtimes (false makes reports byte-identical across runs).
    #[arg(long, global = true, num_args = 0..=1, default_missing_value = "true")]
    timing: Option<bool>,
    #[arg(long, global = true, num_args = 0..=1, default_missing_value = "true")]
    control_variate: Option<bool>,
    /// Include fitted regression models in the solve result.
    #[arg(long, global = true, num_args = 0..=1, default_missing_value = "true")]
    models: Option<bool>,
}

type Res<T> = Result<T, Error>;

/// Flag values with the config file as fallback.
struct Settings {
    opts: Opts,
    file: ConfigFile,
}

impl Settings {
    fn new(opts: Opts) -> Res<Self> {
        let file = match &opts.config {
            Some(p) => ConfigFile::load(p)?,
            None => ConfigFile::default(),
        };
        const KNOWN: &[&str] = &[
            "problem", "eta", "tau", "dim", "literal-driver", "scheme-file", "scheme", "preset", "steps", "N", "M",
            "reference-ladder", "batches", "seed", "out", "plot", "format", "deterministic", "allow-unstable", "basis-degree",
            "tol", "z-norm", "level", "timing", "control-variate", "models",
        ];
        if let Some(k) = file.keys().find(|k| !KNOWN.contains(k)) {
            return Err(Error::Parse(format!("unknown config key `{k}`")));
        }
        Ok(Self { opts, file })
    }

    fn value<T: FromStr>(&self, flag: Option<T>, key: &str) -> Res<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        match flag {
            Some(v) => Ok(Some(v)),
            None => self.file.parsed(key),
        }
    }

    fn text(&self, flag: &Option<String>, key: &str) -> Option<String> {
        flag.clone().or_else(|| self.file.get(key).map(str::to_string))
    }

    fn path(&self, flag: &Option<PathBuf>, key: &str) -> Option<PathBuf> {
        flag.clone().or_else(|| self.file.get(key).map(PathBuf::from))
    }

    fn flag(&self, flag: Option<bool>, key: &str, default: bool) -> Res<bool> {
        Ok(match flag {
            Some(v) => v,
            None => self.file.flag(key)?.unwrap_or(default),
        })
    }

    fn problem(&self) -> Res<ProblemSpec> {
        let name = self.text(&self.opts.problem, "problem").unwrap_or_else(|| "example1".into());
        let literal = self.flag(self.opts.literal_driver, "literal-driver", false)?;
        Ok(match name.as_str() {
            "example1" => {
                let tau = match self.text(&self.opts.tau, "tau").as_deref() {
                    None | Some("auto") => None,
                    Some(t) => Some(t.parse::<f64>().map_err(|e| Error::Parse(format!("tau `{t}`: {e}")))?),
                };
                ProblemSpec::Example1 {
                    eta: self.value(self.opts.eta, "eta")?.unwrap_or(0.6),
                    tau,
                    dim: self.value(self.opts.dim, "dim")?.unwrap_or(2),
                    literal,
                }
            }
            "example2" => ProblemSpec::Example2 { literal },
            "exponential" => ProblemSpec::Exponential { rate: 1.0 },
            "constant" => ProblemSpec::Constant {
                value: 1.0,
                dim: self.value(self.opts.dim, "dim")?.unwrap_or(1),
                sigma: 1.0,
            },
            other => return Err(Error::Invalid(format!("unknown problem `{other}`"))),
        })
    }

    fn scheme(&self) -> Res<(MultistepScheme, String)> {
        let file = self.path(&self.opts.scheme_file, "scheme-file").or_else(|| self.file.get("scheme").map(PathBuf::from));
        if let Some(path) = file {
            let label = path.file_stem().map_or("scheme".into(), |s| s.to_string_lossy().into_owned());
            return Ok((SchemeDocument::load(&path)?, label));
        }
        if let Some(name) = self.text(&self.opts.preset, "preset") {
            let preset: Preset = name.parse()?;
            return Ok((preset.build()?, preset.to_string()));
        }
        let m = self.value(self.opts.steps, "steps")?.unwrap_or(2);
        Ok((uniform_family(m)?, format!("uniform{m}")))
    }

    fn list(&self, flag: &Option<String>, key: &str) -> Res<Option<Vec<usize>>> {
        self.text(flag, key)
            .map(|s| {
                s.split(',')
                    .map(|v| v.trim().parse::<usize>().map_err(|e| Error::Parse(format!("{key} entry `{v}`: {e}"))))
                    .collect()
            })
            .transpose()
    }

    fn pairs(&self, default_n: &[usize], default_m: usize) -> Res<Vec<(usize, usize)>> {
        if self.flag(self.opts.reference_ladder, "reference-ladder", false)? {
            return Ok(REFERENCE_PAIRS.to_vec());
        }
        let ns = self.list(&self.opts.n, "N")?.unwrap_or_else(|| default_n.to_vec());
        let ms = self.list(&self.opts.m, "M")?.unwrap_or_else(|| vec![default_m]);
        match ms.len() {
            1 => Ok(ns.iter().map(|&n| (n, ms[0])).collect()),
            k if k == ns.len() => Ok(ns.into_iter().zip(ms).collect()),
            k => Err(Error::Invalid(format!("{k} M values for {} N values", ns.len()))),
        }
    }

    fn options(&self) -> Res<TrialOptions> {
        let d = TrialOptions::default();
        Ok(TrialOptions {
            basis_degree: self.value(self.opts.basis_degree, "basis-degree")?.unwrap_or(d.basis_degree),
            allow_unstable: self.flag(self.opts.allow_unstable, "allow-unstable", false)?,
            z_control_variate: self.flag(self.opts.control_variate, "control-variate", true)?,
            deterministic: self.flag(self.opts.deterministic, "deterministic", false)?,
            z_norm: self
                .text(&self.opts.z_norm, "z-norm")
                .map(|s| s.parse::<ZNorm>())
                .transpose()?
                .unwrap_or_default(),
            level: self.value(self.opts.level, "level")?.unwrap_or(d.level),
            timing: self.flag(self.opts.timing, "timing", true)?,
        })
    }

    fn tol(&self) -> Res<f64> {
        Ok(self.value(self.opts.tol, "tol")?.unwrap_or(DEFAULT_TOL))
    }

    fn seed(&self) -> Res<u64> {
        Ok(self.value(self.opts.seed, "seed")?.unwrap_or(1))
    }

    fn out(&self) -> Option<PathBuf> {
        self.path(&self.opts.out, "out")
    }
}

fn write_or_print(text: &str, out: Option<&Path>) -> Res<()> {
    match out {
        Some(p) => std::fs::write(p, text)?,
        None => print!("{text}"),
    }
    Ok(())
}

fn pretty(v: &Value) -> String {
    serde_json::to_string_pretty(v).expect("json values serialize") + "\n"
}

fn coeffs(s: &Settings) -> Res<()> {
    let (scheme, _) = s.scheme()?;
    let doc = SchemeDocument::from(&scheme);
    write_or_print(&(doc.to_json() + "\n"), s.out().as_deref())
}

fn stability(s: &Settings) -> Res<()> {
    let (scheme, label) = s.scheme()?;
    let tol = s.tol()?;
    let verdict = analyze(scheme.corrector(), tol)?;
    if verdict.status == StabilityStatus::Marginal {
        eprintln!("warning: verdict for {label} depends on the tolerance {tol:e}");
    }
    let v = json!({
        "scheme": label,
        "polynomial": characteristic_polynomial(scheme.corrector()).to_string(),
        "tol": tol,
        "status": verdict.status,
        "roots": verdict.roots,
        "offending": verdict.offending,
    });
    write_or_print(&pretty(&v), s.out().as_deref())
}

fn solve_cmd(s: &Settings) -> Res<()> {
    let spec = s.problem()?;
    let problem = spec.build()?;
    let (scheme, label) = s.scheme()?;
    let (n, m) = s.pairs(&[20], 10_000)?[0];
    let opts = s.options()?;
    let seed = s.seed()?;
    let mut config = opts.solver_config(&scheme, GridSpec::new(problem.horizon(), n)?);
    config.stability_tol = s.tol()?;
    let start = Instant::now();
    let sol = if opts.deterministic {
        deterministic_solve(problem.as_ref(), &config)?
    } else {
        let ensemble = simulate(problem.as_ref(), config.grid, m, seed)?;
        solve(problem.as_ref(), &config, &ensemble)?
    };
    let runtime = start.elapsed().as_secs_f64();
    let mut v = json!({
        "y0": sol.y0,
        "z0": sol.z0,
        "milne": sol.milne,
        "config": config_json(&spec, &label, n, m, seed, &config, &opts, sol.substeps),
        "runtime_sec": runtime,
    });
    if let Ok(reference) = fbsde::problems::closed_form_reference(problem.as_ref(), 0.0, &problem.x0()) {
        v["reference"] = json!({ "y0": reference.0, "z0": reference.1 });
    }
    if s.flag(s.opts.models, "models", false)? {
        v["models"] = json!({ "y": sol.y_models, "z": sol.z_models });
    }
    write_or_print(&pretty(&v), s.out().as_deref())
}

#[allow(clippy::too_many_arguments)]
fn config_json(
    spec: &ProblemSpec,
    label: &str,
    n: usize,
    m: usize,
    seed: u64,
    config: &SolverConfig,
    opts: &TrialOptions,
    substeps: usize,
) -> Value {
    json!({
        "problem": spec,
        "scheme": label,
        "N": n,
        "M": if opts.deterministic { 1 } else { m },
        "seed": seed,
        "basis_degree": config.basis_degree,
        "deterministic": opts.deterministic,
        "allow_unstable": config.allow_unstable,
        "control_variate": config.z_control_variate,
        "substeps": substeps,
        "stability_tol": config.stability_tol,
    })
}

fn convergence(s: &Settings) -> Res<()> {
    let (scheme, label) = s.scheme()?;
    let ladder = TrialLadder {
        problem: s.problem()?,
        scheme,
        scheme_label: label,
        pairs: s.pairs(&[5, 10, 20], 12018)?,
        batches: s.value(s.opts.batches, "batches")?.unwrap_or(21),
        seed: s.seed()?,
        options: s.options()?,
    };
    let format: ReportFormat = s.text(&s.opts.format, "format").unwrap_or_else(|| "csv".into()).parse()?;
    let report = run_ladder(&ladder)?;
    match s.out() {
        Some(p) => emit_report(&report, format, &p)?,
        None => print!("{}", render_report(&report, format)?),
    }
    if let Some(p) = s.path(&s.opts.plot, "plot") {
        emit_report(&report, ReportFormat::Plot, &p)?;
    }
    Ok(())
}

fn demo(s: &Settings) -> Res<()> {
    let (scheme, label) = s.scheme()?;
    let ns = s.list(&s.opts.n, "N")?.unwrap_or_else(|| vec![5, 10, 20, 40]);
    let m = s.list(&s.opts.m, "M")?.map_or(10_000, |v| v[0]);
    let batches = s.value(s.opts.batches, "batches")?.unwrap_or(5);
    let d = stability_demo(&s.problem()?, &scheme, &label, &ns, m, s.seed()?, batches, &s.options()?)?;
    let v = serde_json::to_value(&d)?;
    write_or_print(&pretty(&v), s.out().as_deref())
}

fn run(cli: Cli) -> Res<()> {
    let s = Settings::new(cli.opts)?;
    match cli.command {
        Command::Coeffs => coeffs(&s),
        Command::Stability => stability(&s),
        Command::Solve => solve_cmd(&s),
        Command::Convergence => convergence(&s),
        Command::StabilityDemo => demo(&s),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_numerical() { 3 } else { 2 })
        }
    }
}
