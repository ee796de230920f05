//! Reference methods for benchmarking: the linear scaler, piecewise-linear
//! energy-signature weather-trend removal, K-means and GMM clustering on
//! the (detrended) load, and an input-conditioned HMM.

mod cluster;
mod es;
mod hmm;
mod scaler;

pub use cluster::{gmm_levels, kmeans_1d, kmeans_levels, GmmResult, KmeansResult};
pub use es::{fit_piecewise_es, remove_weather_trend, PiecewiseES};
pub use hmm::{hmm_decode, hmm_fit, slot_index, HmmFitInfo, HmmModel, HmmPrior, TRANSITION_SLOTS};
pub use scaler::{default_zmax_grid, linear_scaler, scaler_sweep, ScalerSweep};
