use fbsde::regression::{build_basis, Regressor};
use nalgebra::DVector;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_distr::StandardNormal;

fn points_and_responses(seed: u64, m: usize, d: usize) -> (Vec<f64>, Vec<f64>) {
    let mut rng = rand::rngs::StdRng::seed_from_u64(seed);
    let points: Vec<f64> = (0..m * d).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    let responses: Vec<f64> = points
        .chunks(d)
        .map(|x| x.iter().map(|v| v.sin()).sum::<f64>() + 0.3 * rng.sample::<f64, _>(StandardNormal))
        .collect();
    (points, responses)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn residuals_are_orthogonal_to_features(seed in any::<u64>(), d in 1usize..=3, degree in 1usize..=3) {
        let (points, responses) = points_and_responses(seed, 400, d);
        let reg = Regressor::new(build_basis(d, degree).unwrap(), &points).unwrap();
        prop_assume!(reg.rank() == reg.design().ncols());
        let model = reg.fit(&responses, 1, f64::INFINITY).unwrap();
        let fitted = reg.predict_at_samples(&model);
        let resid = DVector::from_iterator(responses.len(), responses.iter().zip(&fitted).map(|(y, f)| y - f));
        for col in reg.design().column_iter() {
            let tol = 1e-8 * col.norm() * resid.norm().max(1.0);
            prop_assert!(col.dot(&resid).abs() <= tol);
        }
    }

    #[test]
    fn coefficients_scale_with_responses(seed in any::<u64>(), c in -50.0f64..50.0) {
        let (points, responses) = points_and_responses(seed, 300, 2);
        let reg = Regressor::new(build_basis(2, 2).unwrap(), &points).unwrap();
        let base = reg.fit(&responses, 1, f64::INFINITY).unwrap();
        let scaled: Vec<f64> = responses.iter().map(|y| c * y).collect();
        let moved = reg.fit(&scaled, 1, f64::INFINITY).unwrap();
        for (a, b) in base.coefficients(0).iter().zip(moved.coefficients(0)) {
            prop_assert!((c * a - b).abs() <= 1e-9 * (1.0 + (c * a).abs()));
        }
    }
}

#[test]
fn coefficient_error_shrinks_with_sample_size() {
    let truth = [1.0, 2.0, -0.5];
    let median_error = |m: usize| {
        let mut errs: Vec<f64> = (0..20u64)
            .map(|seed| {
                let mut rng = rand::rngs::StdRng::seed_from_u64(seed * 7919 + m as u64);
                let x: Vec<f64> = (0..m).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
                let y: Vec<f64> = x
                    .iter()
                    .map(|v| truth[0] + truth[1] * v + truth[2] * v * v + 0.5 * rng.sample::<f64, _>(StandardNormal))
                    .collect();
                let model = Regressor::new(build_basis(1, 2).unwrap(), &x)
                    .unwrap()
                    .fit(&y, 1, f64::INFINITY)
                    .unwrap();
                // Basis order is graded: 1, x, x².
                model
                    .coefficients(0)
                    .iter()
                    .zip(truth)
                    .map(|(a, b)| (a - b).powi(2))
                    .sum::<f64>()
                    .sqrt()
            })
            .collect();
        errs.sort_by(f64::total_cmp);
        0.5 * (errs[9] + errs[10])
    };
    let e: Vec<f64> = [100, 1000, 10_000].iter().map(|&m| median_error(m)).collect();
    assert!(e[0] > e[1] && e[1] > e[2], "{e:?}");
}
