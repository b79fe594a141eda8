use fbsde::experiments::{
    batch_ci, convergence_rate, emit_report, parse_csv, run_ladder, t_quantile, ProblemSpec, ReportFormat, TrialLadder,
    TrialOptions,
};
use fbsde::scheme::uniform_family;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_distr::{Distribution, Normal};

#[test]
fn batch_intervals_cover_at_nominal_rate() {
    let mut rng = rand::rngs::StdRng::seed_from_u64(99);
    let normal = Normal::new(-1.2, 0.4).unwrap();
    let reps = 2000;
    let covered = (0..reps)
        .filter(|_| {
            let batch: Vec<f64> = (0..21).map(|_| normal.sample(&mut rng)).collect();
            batch_ci(&batch, 0.95).unwrap().contains(-1.2)
        })
        .count();
    let coverage = covered as f64 / reps as f64;
    assert!((coverage - 0.95).abs() <= 0.03, "{coverage}");
}

#[test]
fn quantile_normal_limit() {
    assert!((t_quantile(0.975, 1e6).unwrap() - 1.96).abs() < 1e-3);
}

proptest! {
    #[test]
    fn rate_fit_exact_on_power_laws(
        p in 0.1f64..6.0,
        c in 1e-4f64..10.0,
        mut ns in prop::collection::btree_set(2usize..400, 2..8),
    ) {
        let ns: Vec<usize> = std::mem::take(&mut ns).into_iter().collect();
        let errs: Vec<f64> = ns.iter().map(|&n| c * (n as f64).powf(-p)).collect();
        let rate = convergence_rate(&ns, &errs).unwrap();
        prop_assert!((rate - p).abs() <= 1e-10 * p.max(1.0));
    }
}

fn ladder(seed: u64) -> TrialLadder {
    TrialLadder {
        problem: ProblemSpec::Example2 { literal: false },
        scheme: uniform_family(2).unwrap(),
        scheme_label: "uniform2".into(),
        pairs: vec![(4, 400), (8, 800)],
        batches: 15,
        seed,
        options: TrialOptions {
            timing: false,
            ..TrialOptions::default()
        },
    }
}

#[test]
fn ladder_reports_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a.csv"), dir.path().join("b.csv"));
    emit_report(&run_ladder(&ladder(5)).unwrap(), ReportFormat::Csv, &a).unwrap();
    emit_report(&run_ladder(&ladder(5)).unwrap(), ReportFormat::Csv, &b).unwrap();
    let text = std::fs::read(&a).unwrap();
    assert_eq!(text, std::fs::read(&b).unwrap());
    let other = run_ladder(&ladder(6)).unwrap().to_csv();
    assert_ne!(String::from_utf8(text).unwrap(), other);
}

#[test]
fn ladder_rows_respect_interval_invariants() {
    let report = run_ladder(&ladder(1)).unwrap();
    assert_eq!(report.rows.len(), 2);
    for r in &report.rows {
        assert!(r.ci_y_lo <= r.err_y && r.err_y <= r.ci_y_hi);
        assert!(r.ci_z_lo <= r.err_z && r.err_z <= r.ci_z_hi);
        assert!(r.runtime >= 0.0);
    }
    let parsed = parse_csv(&report.to_csv()).unwrap();
    assert_eq!(parsed.rows, report.rows);
    let ns: Vec<usize> = report.rows.iter().map(|r| r.n).collect();
    let ey: Vec<f64> = report.rows.iter().map(|r| r.err_y).collect();
    assert_eq!(parsed.cr_y, Some(convergence_rate(&ns, &ey).unwrap()));
}
