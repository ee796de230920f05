//! Unit-level contracts of the setback what-if assessment.

use chrono::NaiveDateTime;
use occuload_cli::pipeline::whatif_setback;
use occuload_core::disaggregator::DisaggregatorParams;
use occuload_core::levels::{CategoricalProfile, DayType, LevelSet};
use occuload_core::series::BuildingSeries;
use occuload_core::spline::SplineConfig;
use occuload_core::trainer::PosteriorSeries;

fn series_and_posterior(days: usize) -> (BuildingSeries<f64>, PosteriorSeries<f64>) {
    let t0 = NaiveDateTime::parse_from_str("2024-01-01T00:00:00", "%Y-%m-%dT%H:%M:%S").unwrap();
    let n = days * 24;
    let ts = (0..n).map(|i| t0 + chrono::Duration::hours(i as i64)).collect();
    let load: Vec<f64> = (0..n)
        .map(|i| if (8..19).contains(&(i % 24)) { 12.0 } else { 5.5 })
        .collect();
    let temps: Vec<f64> = (0..n).map(|i| 18.0 + 6.0 * ((i % 24) as f64 / 23.0)).collect();
    let series = BuildingSeries::new(ts, load, Some(temps), None, None, &[]).unwrap();
    let profile = |row: Vec<f64>| CategoricalProfile::new(vec![row; 24], DayType::Working).unwrap();
    let posterior = PosteriorSeries::new(
        (0..days)
            .map(|_| profile(vec![1.0, 0.0, 0.0, 0.0]))
            .collect(),
    );
    (series, posterior)
}

fn params(occ: Vec<f64>, unocc: Vec<f64>, trained: bool) -> DisaggregatorParams<f64> {
    DisaggregatorParams {
        plug_dynamic: 4.0,
        plug_base: 0.5,
        light_dynamic: 5.0,
        light_base: 0.5,
        spline_occupied: occ,
        spline_unoccupied: unocc,
        obs_std: 0.3,
        temp_mean: 20.0,
        temp_std: 5.0,
        spline: SplineConfig::default(),
        trained,
    }
}

#[test]
fn identical_gates_yield_zero_delta() {
    let (series, posterior) = series_and_posterior(3);
    let levels = LevelSet::<f64>::four_level();
    let coeffs = vec![1.0, 2.0, 3.0, 2.0, 1.0, 0.5, 0.2];
    let p = params(coeffs.clone(), coeffs, true);
    let report = whatif_setback(&p, &series, (20, 23), &posterior, &levels).unwrap();
    assert_eq!(report.saving_kwh(), 0.0);
    assert!(report.per_day.iter().all(|d| d.adjusted_steps == 0));
}

#[test]
fn untrained_params_are_rejected() {
    let (series, posterior) = series_and_posterior(2);
    let levels = LevelSet::<f64>::four_level();
    let p = params(vec![2.0; 7], vec![1.0; 7], false);
    assert!(whatif_setback(&p, &series, (20, 23), &posterior, &levels).is_err());
}

#[test]
fn wasteful_steps_are_swapped_to_the_unoccupied_gate() {
    let (series, posterior) = series_and_posterior(2);
    let levels = LevelSet::<f64>::four_level();
    // occupied gate sits ~4 kW above the unoccupied gate everywhere
    let p = params(vec![6.0; 7], vec![2.0; 7], true);
    // night load of 5.5 vs occupant-base ~1.2: closer to base+6 than base+2,
    // so nights classify as occupied operation while inferred unoccupied
    let report = whatif_setback(&p, &series, (20, 23), &posterior, &levels).unwrap();
    let steps: usize = report.per_day.iter().map(|d| d.adjusted_steps).sum();
    assert_eq!(steps, 2 * 4);
    assert!((report.saving_kwh() - (steps as f64) * 4.0).abs() < 1e-9);

    // interval validation
    assert!(whatif_setback(&p, &series, (23, 4), &posterior, &levels).is_err());
}
