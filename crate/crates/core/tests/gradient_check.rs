//! Analytic gradients of the training loss checked against central finite
//! differences of the frozen-factor objective at 100 random parameter
//! points.

use chrono::NaiveDateTime;
use occuload_core::disaggregator::{DisaggregatorParams, Scenario};
use occuload_core::levels::{CategoricalProfile, DayType, LevelSet};
use occuload_core::series::BuildingSeries;
use occuload_core::spline::SplineConfig;
use occuload_core::trainer::{
    beta_nll_grad, beta_nll_loss_at, params_from_vector, params_to_vector, PosteriorSeries,
};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn three_day_series(rng: &mut ChaCha8Rng) -> BuildingSeries<f64> {
    let t0 = NaiveDateTime::parse_from_str("2024-05-06T00:00:00", "%Y-%m-%dT%H:%M:%S").unwrap();
    let n = 72;
    let ts = (0..n).map(|i| t0 + chrono::Duration::hours(i as i64)).collect();
    let load = (0..n)
        .map(|i| {
            let h = i % 24;
            let occupied = (8..19).contains(&h);
            (if occupied { 14.0 } else { 2.0 }) + rng.gen_range(-1.0..1.0)
        })
        .collect();
    let temps = (0..n)
        .map(|i| 15.0 + 8.0 * ((i as f64) * 0.26).sin())
        .collect();
    BuildingSeries::new(ts, load, Some(temps), None, None, &[]).unwrap()
}

fn random_posterior(days: usize, levels: usize, rng: &mut ChaCha8Rng) -> PosteriorSeries<f64> {
    let profiles = (0..days)
        .map(|_| {
            let rows = (0..24)
                .map(|_| {
                    let raw: Vec<f64> = (0..levels).map(|_| rng.gen_range(0.05..1.0)).collect();
                    let total: f64 = raw.iter().sum();
                    raw.into_iter().map(|x| x / total).collect()
                })
                .collect();
            CategoricalProfile::new(rows, DayType::Working).unwrap()
        })
        .collect();
    PosteriorSeries::new(profiles)
}

fn random_params(rng: &mut ChaCha8Rng) -> DisaggregatorParams<f64> {
    let spline = SplineConfig::default();
    let n = spline.basis_count();
    DisaggregatorParams {
        plug_dynamic: rng.gen_range(2.0..9.0),
        plug_base: rng.gen_range(0.3..2.0),
        light_dynamic: rng.gen_range(2.0..9.0),
        light_base: rng.gen_range(0.3..2.0),
        spline_occupied: (0..n).map(|_| rng.gen_range(-3.0..3.0)).collect(),
        spline_unoccupied: (0..n).map(|_| rng.gen_range(-3.0..3.0)).collect(),
        obs_std: rng.gen_range(0.5..1.5),
        temp_mean: 15.0,
        temp_std: 8.0,
        spline,
        trained: false,
    }
}

#[test]
fn gradients_match_central_finite_differences_at_100_points() {
    let ls = LevelSet::<f64>::four_level();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let series = three_day_series(&mut rng);
    let posterior = random_posterior(3, ls.count(), &mut rng);
    let h = 1e-5;
    let mut worst: f64 = 0.0;

    for point in 0..100 {
        let params = random_params(&mut rng);
        let beta = match point % 3 {
            0 => 0.0,
            1 => 0.5,
            _ => 1.0,
        };
        let scenario = if point % 4 == 0 {
            Scenario::Separate
        } else {
            Scenario::Lumped
        };
        let (_, grad) =
            beta_nll_grad(&posterior, &series, &params, beta, scenario, &ls).unwrap();
        let v0 = params_to_vector(&params);
        for i in 0..v0.len() {
            let mut vp = v0.clone();
            vp[i] += h;
            let lp = beta_nll_loss_at(
                &posterior,
                &series,
                &params_from_vector(&params, &vp).unwrap(),
                &params,
                beta,
                scenario,
                &ls,
            )
            .unwrap();
            vp[i] -= 2.0 * h;
            let lm = beta_nll_loss_at(
                &posterior,
                &series,
                &params_from_vector(&params, &vp).unwrap(),
                &params,
                beta,
                scenario,
                &ls,
            )
            .unwrap();
            let fd = (lp - lm) / (2.0 * h);
            let rel = (grad[i] - fd).abs() / fd.abs().max(1e-2);
            worst = worst.max(rel);
            assert!(
                rel < 1e-4,
                "point {point} param {i} (beta {beta}, {scenario:?}): analytic {} vs fd {fd} (rel {rel:.2e})",
                grad[i]
            );
        }
    }
    println!("max relative gradient error over 100 points: {worst:.3e}");
}
