//! One PASS/FAIL line per acceptance criterion. Exits non-zero if any
//! criterion fails.

use std::time::Instant;

use fbsde::experiments::{
    batch_ci, batch_seed, convergence_rate, run_trial, t_quantile, TrialOptions,
};
use fbsde::problems::{Example1, Example2, ExponentialOde, FbsdeProblem};
use fbsde::scheme::rational::{int, ratio, to_f64, Rational};
use fbsde::scheme::{
    adams_pair, derivative_weights, solve_order_conditions, solve_predictor_conditions, truncation_residuals,
    uniform_family, unstable_three_step, unstable_two_step, CorrectorPins, MultistepScheme, PredictorPins,
};
use fbsde::simulation::GridSpec;
use fbsde::solver::{deterministic_solve, local_error_probe, perturbation_response, Perturbation, SolverConfig};
use fbsde::stability::{check_root_condition, polynomial_roots, CharacteristicPolynomial, StabilityStatus, DEFAULT_TOL};
use rand::SeedableRng;
use rand_distr::{Distribution, Normal};

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        pass,
        detail: detail.into(),
    }
}

fn r(text: &str) -> Rational {
    fbsde::scheme::rational::parse(text).unwrap()
}

fn rs(items: &[&str]) -> Vec<Rational> {
    items.iter().map(|s| r(s)).collect()
}

/// Reference Adams pairs: predictor weights β₁..β_k and constant, then
/// corrector weights β₀..β_{k−1} and constant.
#[allow(clippy::type_complexity)]
const ADAMS_TABLE: [(&[&str], &str, &[&str], &str); 6] = [
    (&["1"], "1/2", &["1"], "-1/2"),
    (&["3/2", "-1/2"], "-5/12", &["1/2", "1/2"], "1/12"),
    (&["23/12", "-4/3", "5/12"], "3/8", &["5/12", "2/3", "-1/12"], "-1/24"),
    (&["55/24", "-59/24", "37/24", "-3/8"], "-251/720", &["3/8", "19/24", "-5/24", "1/24"], "19/720"),
    (
        &["1901/720", "-1387/360", "109/30", "-637/360", "251/720"],
        "95/288",
        &["251/720", "323/360", "-11/30", "53/360", "-19/720"],
        "-3/160",
    ),
    (
        &["4277/1440", "-2641/480", "4991/720", "-3649/720", "959/480", "-95/288"],
        "-19087/60480",
        &["95/288", "1427/1440", "-133/240", "241/720", "-173/1440", "3/160"],
        "863/60480",
    ),
];

fn coefficient_fixtures() -> Verdict {
    let mut bad = Vec::new();
    for (k, (pred, c_pred, corr, c_corr)) in ADAMS_TABLE.iter().enumerate() {
        let order = k + 1;
        let s = adams_pair(order).unwrap();
        let shift: Vec<Rational> = (0..order).map(|j| int(i64::from(j == 0))).collect();
        let mut corr_gamma = rs(&corr[1..]);
        corr_gamma.push(int(0));
        let ok = s.predictor().alpha() == shift.as_slice()
            && s.predictor().gamma() == rs(pred).as_slice()
            && s.error_constant_pred() == &r(c_pred)
            && s.corrector().alpha() == shift.as_slice()
            && s.corrector().gamma0() == &r(corr[0])
            && s.corrector().gamma() == corr_gamma.as_slice()
            && s.error_constant_corr() == &r(c_corr);
        if !ok {
            bad.push(order);
        }
    }
    verdict(bad.is_empty(), format!("orders 1-6 compared exactly; mismatches {bad:?}"))
}

fn max_residual<C: fbsde::scheme::TruncationExpansion>(c: &C, up_to: usize) -> f64 {
    truncation_residuals(c, up_to)
        .iter()
        .map(|v| to_f64(v).abs())
        .fold(0.0, f64::max)
}

fn order_condition_fixtures() -> Verdict {
    let one = solve_order_conditions(&CorrectorPins::new(1).alphas(&[int(1)]).gamma0(ratio(1, 2))).unwrap();
    let ok1 = one.gamma0() == &ratio(1, 2) && one.gamma() == [ratio(1, 2)].as_slice();
    let third = vec![ratio(1, 3); 3];
    let three = solve_order_conditions(&CorrectorPins::new(3).alphas(&third).gamma0(ratio(5, 6))).unwrap();
    let ok3 = three.gamma() == rs(&["-1/3", "11/6", "-1/3"]).as_slice();
    let pred = solve_predictor_conditions(&PredictorPins::new(3).alphas(&third)).unwrap();
    let okp = pred.gamma() == rs(&["39/18", "-2/3", "1/2"]).as_slice();
    let res = max_residual(&one, 1).max(max_residual(&three, 3)).max(max_residual(&pred, 3));
    verdict(
        ok1 && ok3 && okp && res <= 1e-12,
        format!("one-step {ok1}, three-step corrector {ok3}, predictor {okp}; max residual {res:e}"),
    )
}

fn lambda_fixtures() -> Verdict {
    let want = [
        rs(&["-1", "1"]),
        rs(&["-3/2", "2", "-1/2"]),
        rs(&["-11/6", "3", "-3/2", "1/3"]),
    ];
    let got: Vec<bool> = (1..=3)
        .map(|m| derivative_weights(m).unwrap().lambda_h() == want[m - 1].as_slice())
        .collect();
    verdict(got.iter().all(|&g| g), format!("m=1,2,3 exact: {got:?}"))
}

fn stability_fixtures() -> Verdict {
    let status = |coeffs: Vec<f64>| {
        let roots = polynomial_roots(&CharacteristicPolynomial::from_coeffs(coeffs).unwrap()).unwrap();
        check_root_condition(&roots, DEFAULT_TOL)
    };
    let a = status(vec![1.0, -1.0]);
    let b = status(vec![1.0, -1.0 / 3.0, -1.0 / 3.0, -1.0 / 3.0]);
    let c = status(vec![1.0, -3.0, 2.0]);
    let d = status(vec![1.0, -2.0, -5.0, 6.0]);
    let offending = |v: &fbsde::stability::StabilityVerdict| {
        let mut o: Vec<f64> = v.offending.iter().map(|c| c.re).collect();
        o.sort_by(f64::total_cmp);
        o
    };
    let close = |got: Vec<f64>, want: &[f64]| {
        got.len() == want.len() && got.iter().zip(want).all(|(g, w)| (g - w).abs() < 1e-9)
    };
    let ok = a.status == StabilityStatus::Stable
        && b.status == StabilityStatus::Stable
        && c.status == StabilityStatus::Unstable
        && d.status == StabilityStatus::Unstable
        && close(offending(&c), &[2.0])
        && close(offending(&d), &[-2.0, 3.0]);
    verdict(
        ok,
        format!(
            "{:?} {:?} {:?}{:?} {:?}{:?}",
            a.status,
            b.status,
            c.status,
            offending(&c),
            d.status,
            offending(&d)
        ),
    )
}

fn det_error(scheme: &MultistepScheme, n: usize) -> f64 {
    let p = ExponentialOde::default();
    let config = SolverConfig {
        allow_unstable: true,
        ..SolverConfig::new(scheme.clone(), GridSpec::new(1.0, n).unwrap())
    };
    match deterministic_solve(&p, &config) {
        Ok(sol) => (sol.y0 - 1f64.exp()).abs(),
        Err(_) => f64::INFINITY,
    }
}

fn deterministic_order() -> Verdict {
    let mut pass = true;
    let mut parts = Vec::new();
    for m in 1..=4 {
        let s = adams_pair(m).unwrap();
        let e: Vec<f64> = [40, 80, 160].iter().map(|&n| det_error(&s, n)).collect();
        let orders = [(e[0] / e[1]).log2(), (e[1] / e[2]).log2()];
        pass &= orders.iter().all(|o| (o - m as f64).abs() <= 0.25);
        parts.push(format!("m={m}: {:.2}/{:.2}", orders[0], orders[1]));
    }
    verdict(pass, format!("adams pairs, N 40->80->160: {}", parts.join(", ")))
}

fn milne_indicator() -> Verdict {
    let probes = local_error_probe(&ExponentialOde::default(), &adams_pair(2).unwrap(), GridSpec::new(1.0, 160).unwrap())
        .unwrap();
    let ratios: Vec<f64> = probes.iter().map(|p| p.ratio()).collect();
    let (lo, hi) = ratios.iter().fold((f64::INFINITY, 0.0f64), |(a, b), &r| (a.min(r), b.max(r)));
    verdict(
        lo >= 0.8 && hi <= 1.25,
        format!("order-2 Adams, N=160, ratio over {} steps in [{lo:.4}, {hi:.4}]", ratios.len()),
    )
}

fn instability() -> Verdict {
    let ns = [10, 20, 40, 60, 80, 100];
    let worst = |s: &MultistepScheme| ns.iter().map(|&n| det_error(s, n)).fold(0.0, f64::max);
    let u2 = worst(&unstable_two_step().unwrap());
    let u3 = worst(&unstable_three_step().unwrap());
    let s2 = worst(&uniform_family(2).unwrap());
    let s3 = worst(&uniform_family(3).unwrap());
    verdict(
        u2 > 1e6 && u3 > 1e6 && s2 < 1e-2 && s3 < 1e-2,
        format!("max error over N<=100: unstable2 {u2:.2e}, unstable3 {u3:.2e}, stable m=2 {s2:.2e}, m=3 {s3:.2e}"),
    )
}

fn batch_mean_error(problem: &dyn FbsdeProblem, scheme: &MultistepScheme, n: usize, m: usize, batches: usize) -> (f64, f64) {
    let opts = TrialOptions {
        timing: false,
        ..TrialOptions::default()
    };
    let outs: Vec<_> = (0..batches)
        .map(|b| run_trial(problem, scheme, n, m, batch_seed(2024, b), &opts).unwrap())
        .collect();
    let ey: Vec<f64> = outs.iter().map(|o| o.err_y).collect();
    let ez: Vec<f64> = outs.iter().map(|o| o.err_z).collect();
    (batch_ci(&ey, 0.95).unwrap().mean, batch_ci(&ez, 0.95).unwrap().mean)
}

fn monte_carlo_error_table() -> Verdict {
    let p = Example1::with_auto_tau(0.6, 2).unwrap();
    let pairs = [(5, 2778), (10, 5996), (20, 12018)];
    let reference = [[1.257e-2, 7.969e-3, 5.276e-3], [7.960e-3, 7.012e-4, 4.276e-4]];
    let min_rate = [0.7, 1.6];
    let ns: Vec<usize> = pairs.iter().map(|p| p.0).collect();
    let mut pass = true;
    let mut parts = Vec::new();
    for (row, m) in [1usize, 2].into_iter().enumerate() {
        let s = uniform_family(m).unwrap();
        let errs: Vec<f64> = pairs.iter().map(|&(n, mm)| batch_mean_error(&p, &s, n, mm, 21).0).collect();
        let factors: Vec<f64> = errs.iter().zip(reference[row]).map(|(e, t)| (e / t).max(t / e)).collect();
        let rate = convergence_rate(&ns, &errs).unwrap();
        let reference_rate = convergence_rate(&ns, &reference[row]).unwrap();
        let ok = factors.iter().all(|&f| f <= 3.0) && rate >= min_rate[row];
        pass &= ok;
        parts.push(format!(
            "m={m} errY {} factors {} CR {rate:.2} (need {}, reference digits give {reference_rate:.2})",
            errs.iter().map(|e| format!("{e:.3e}")).collect::<Vec<_>>().join("/"),
            factors.iter().map(|f| format!("{f:.1}")).collect::<Vec<_>>().join("/"),
            min_rate[row]
        ));
    }
    for m in [3usize, 4] {
        let s = uniform_family(m).unwrap();
        let errs: Vec<f64> = ns.iter().map(|&n| batch_mean_error(&p, &s, n, 3000, 15).0).collect();
        let rate = convergence_rate(&ns, &errs).unwrap();
        if m == 3 {
            pass &= rate >= 2.3;
        }
        parts.push(format!(
            "m={m} (M=3000, 15 batches) errY {} CR {rate:.2}{}",
            errs.iter().map(|e| format!("{e:.3e}")).collect::<Vec<_>>().join("/"),
            if m == 3 { " (need 2.3)" } else { "" }
        ));
    }
    verdict(pass, parts.join("; "))
}

fn example2() -> Verdict {
    let p = Example2::default();
    let s = uniform_family(2).unwrap();
    let opts = TrialOptions::default();
    let outs: Vec<_> = (0..5)
        .map(|b| run_trial(&p, &s, 20, 10_000, batch_seed(77, b), &opts).unwrap())
        .collect();
    let ey = outs.iter().map(|o| o.err_y).fold(0.0, f64::max);
    let ez = outs.iter().map(|o| o.err_z).fold(0.0, f64::max);
    verdict(
        ey <= 5e-3 && ez <= 2e-2,
        format!("worst of 5 seeds: |dY0| {ey:.2e} (<=5e-3), |dZ0| {ez:.2e} (<=2e-2)"),
    )
}

fn perturbation() -> Verdict {
    let delta = 1e-6;
    let p = ExponentialOde::default();
    let ns = [10, 20, 40];
    let response = |s: &MultistepScheme, n: usize| {
        let config = SolverConfig {
            allow_unstable: true,
            ..SolverConfig::new(s.clone(), GridSpec::new(1.0, n).unwrap())
        };
        perturbation_response(&p, &config, Perturbation { y: delta, z: 0.0 }).unwrap_or(f64::INFINITY)
    };
    let mut pass = true;
    let mut worst_k: f64 = 0.0;
    for s in [uniform_family(1), uniform_family(2), uniform_family(3), adams_pair(3)] {
        let s = s.unwrap();
        for &n in &ns {
            let k = response(&s, n) / (delta * n as f64);
            worst_k = worst_k.max(k);
            pass &= k <= 1e3;
        }
    }
    let bad: Vec<f64> = ns.iter().map(|&n| response(&unstable_two_step().unwrap(), n)).collect();
    let growth = [bad[1] / bad[0], bad[2] / bad[1]];
    let geometric = growth.iter().all(|&g| g > 10.0) && bad[2] > 1e3 * delta * 40.0;
    pass &= geometric;
    verdict(
        pass,
        format!(
            "stable max |dY0|/(delta/h) = {worst_k:.2}; unstable2 |dY0| {:.2e}/{:.2e}/{:.2e}, growth x{:.0}, x{:.0}",
            bad[0], bad[1], bad[2], growth[0], growth[1]
        ),
    )
}

/// Student-t CDF by Simpson integration of the density.
fn t_cdf_oracle(t: f64, df: f64) -> f64 {
    let ln_norm = statrs::function::gamma::ln_gamma((df + 1.0) / 2.0)
        - statrs::function::gamma::ln_gamma(df / 2.0)
        - 0.5 * (df * std::f64::consts::PI).ln();
    let density = |x: f64| (ln_norm - (df + 1.0) / 2.0 * (1.0 + x * x / df).ln()).exp();
    let n = 40_000;
    let h = t / n as f64;
    let inner: f64 = (1..n).map(|k| density(k as f64 * h) * if k % 2 == 1 { 4.0 } else { 2.0 }).sum();
    0.5 + (density(0.0) + density(t) + inner) * h / 3.0
}

fn statistics() -> Verdict {
    let q = t_quantile(0.975, 20.0).unwrap();
    let oracle_p = t_cdf_oracle(q, 20.0);
    let q_ok = (q - 2.0860).abs() <= 1e-4 && (oracle_p - 0.975).abs() <= 1e-8;

    let mut rng = rand::rngs::StdRng::seed_from_u64(12345);
    let normal = Normal::new(0.3, 0.05).unwrap();
    let reps = 2000;
    let covered = (0..reps)
        .filter(|_| {
            let batch: Vec<f64> = (0..21).map(|_| normal.sample(&mut rng)).collect();
            batch_ci(&batch, 0.95).unwrap().contains(0.3)
        })
        .count();
    let coverage = covered as f64 / reps as f64;
    verdict(
        q_ok && (coverage - 0.95).abs() <= 0.03,
        format!("t(0.975,20) = {q:.6}, oracle CDF {oracle_p:.10}; coverage {coverage:.4} over {reps}"),
    )
}

type Criterion = (&'static str, f64, fn() -> Verdict);

fn main() {
    let criteria: [Criterion; 11] = [
        ("coefficient fixtures", 1.0, coefficient_fixtures),
        ("order-condition fixtures", 1.0, order_condition_fixtures),
        ("lambda fixtures", 1.0, lambda_fixtures),
        ("stability fixtures", 1.0, stability_fixtures),
        ("deterministic order check", 10.0, deterministic_order),
        ("Milne indicator", 5.0, milne_indicator),
        ("instability demonstration", 10.0, instability),
        ("Monte Carlo error table", 600.0, monte_carlo_error_table),
        ("second benchmark sanity", 120.0, example2),
        ("L2-stability perturbation", 60.0, perturbation),
        ("statistical infrastructure", 30.0, statistics),
    ];
    let mut failed = 0;
    for (name, budget, run) in criteria {
        let start = Instant::now();
        let v = run();
        let secs = start.elapsed().as_secs_f64();
        let pass = v.pass && secs < budget;
        if !pass {
            failed += 1;
        }
        println!(
            "{} {name}: {} [{secs:.2}s / {budget}s]",
            if pass { "PASS" } else { "FAIL" },
            v.detail
        );
    }
    println!("{} of {} criteria passed", 11 - failed, 11);
    if failed > 0 {
        std::process::exit(1);
    }
}
