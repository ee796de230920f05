//! Occupancy inference and system-level load disaggregation from hourly
//! whole-building electricity metering.
//!
//! The pipeline scores a pre-generated pool of stochastic candidate
//! occupancy profiles against observed loads under an interpretable
//! Gaussian-mixture load model, alternating between posterior construction
//! and gradient updates of the disaggregator parameters. Baseline methods,
//! evaluation metrics and a seedable synthetic building generator round out
//! the toolkit.
//!
//! All numeric code is generic over the scalar type via [`num::Real`]
//! (`f32` or `f64`); the type aliases at the crate root fix `f64` for
//! ordinary use.
//!
//! ```
//! use occuload_core::disaggregator::{init_params, InitMetadata, Scenario};
//! use occuload_core::generator::generate_pool;
//! use occuload_core::levels::LevelSet;
//! use occuload_core::schedule::ScheduleSet;
//! use occuload_core::spline::SplineConfig;
//! use occuload_core::synth::{simulate_building, SimBuilding};
//! use occuload_core::trainer::{infer, train, TrainConfig};
//!
//! // a small synthetic office with occupant-only metering
//! let (building, climate) = SimBuilding::<f64>::preset(0);
//! let start = chrono::NaiveDate::from_ymd_opt(2024, 1, 1).unwrap();
//! let (series, _truth) = simulate_building(&building, climate, start, 14, 7)?;
//! let series = series.with_occupant_load()?;
//!
//! let levels = LevelSet::four_level();
//! let schedules = ScheduleSet::bundled();
//! let pool = generate_pool(&schedules, &levels, 200, 60, 7)?;
//!
//! let meta = InitMetadata {
//!     floor_area_m2: building.floor_area_m2,
//!     light_intensity_w_m2: 8.0,
//!     plug_intensity_w_m2: 8.0,
//!     peak_load_kw: series.peak_load(),
//!     temp_stats: series.temperature_stats(),
//! };
//! let init = init_params(&meta, SplineConfig::default())?;
//! let config = TrainConfig { epochs: 2, inner_iters: 30, ..TrainConfig::default() };
//! let fit = train(&series, &pool, init, &config, Scenario::Separate, &levels)?;
//!
//! let (_posterior, ratios) = infer(
//!     &series, &pool, &fit.params, config.top_k, Scenario::Separate, &levels,
//! )?;
//! assert_eq!(ratios.len(), series.len());
//! assert!(ratios.iter().all(|r| (0.0..=1.0).contains(r)));
//! # Ok::<(), occuload_core::Error>(())
//! ```

pub mod baselines;
pub mod disaggregator;
pub mod error;
pub mod evaluation;
pub mod generator;
pub mod gm;
pub mod levels;
pub mod num;
pub mod schedule;
pub mod series;
pub mod trainer;
pub mod spline;
pub mod synth;

pub use error::{Error, Result};

/// `f64` aliases for the common concrete instantiation.
pub type GaussianMixture = gm::GaussianMixture1D<f64>;
pub type Levels = levels::LevelSet<f64>;
pub type Profile = levels::CategoricalProfile<f64>;
pub type Pool = generator::CandidatePool<f64>;
pub type Schedules = schedule::ScheduleSet<f64>;
pub type Params = disaggregator::DisaggregatorParams<f64>;
pub type Spline = spline::SplineConfig<f64>;
