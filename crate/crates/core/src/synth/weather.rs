//! Synthetic outdoor temperature: annual and diurnal sinusoids plus AR(1)
//! noise, with climate presets standing in for measured weather files.

use chrono::{Datelike, NaiveDate};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::levels::HOURS_PER_DAY;
use crate::num::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Climate {
    Mild,
    Hot,
    Cold,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeatherConfig<T> {
    pub annual_mean_c: T,
    pub annual_amplitude_c: T,
    pub diurnal_amplitude_c: T,
    pub ar1_rho: T,
    pub ar1_std_c: T,
}

impl<T: Real> WeatherConfig<T> {
    pub fn preset(climate: Climate) -> Self {
        let p = |mean: f64, annual: f64, diurnal: f64, std: f64| Self {
            annual_mean_c: T::of(mean),
            annual_amplitude_c: T::of(annual),
            diurnal_amplitude_c: T::of(diurnal),
            ar1_rho: T::of(0.8),
            ar1_std_c: T::of(std),
        };
        match climate {
            Climate::Mild => p(14.0, 5.0, 4.0, 1.5),
            Climate::Hot => p(24.0, 9.0, 7.0, 2.0),
            Climate::Cold => p(9.0, 13.0, 5.0, 2.5),
        }
    }
}

/// Stationary AR(1) noise: x_t = rho x_{t-1} + e_t with marginal std `std`.
pub fn ar1_noise<T: Real, R: Rng>(n: usize, rho: T, std: T, rng: &mut R) -> Vec<T> {
    let innov_std = std * (T::one() - rho * rho).sqrt();
    let mut out = Vec::with_capacity(n);
    let mut x = std * T::of(rng.sample::<f64, _>(StandardNormal));
    for _ in 0..n {
        out.push(x);
        x = rho * x + innov_std * T::of(rng.sample::<f64, _>(StandardNormal));
    }
    out
}

/// Hourly temperatures for `days` days from `start_date`. The diurnal term
/// peaks at 15h; the annual term peaks around mid-July.
pub fn simulate_weather<T: Real>(
    start_date: NaiveDate,
    days: usize,
    config: &WeatherConfig<T>,
    seed: u64,
) -> Vec<T> {
    let n = days * HOURS_PER_DAY;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = ar1_noise(n, config.ar1_rho, config.ar1_std_c, &mut rng);
    let two_pi = T::of(std::f64::consts::TAU);
    (0..n)
        .map(|i| {
            let date = start_date + chrono::Duration::days((i / HOURS_PER_DAY) as i64);
            let doy = T::of(date.ordinal0() as f64);
            let hour = T::of((i % HOURS_PER_DAY) as f64);
            let annual = config.annual_amplitude_c
                * (two_pi * (doy - T::of(105.0)) / T::of(365.0)).sin();
            let diurnal =
                config.diurnal_amplitude_c * (two_pi * (hour - T::of(9.0)) / T::of(24.0)).sin();
            config.annual_mean_c + annual + diurnal + noise[i]
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_noise_daily_max_at_fifteen() {
        let mut cfg = WeatherConfig::<f64>::preset(Climate::Mild);
        cfg.ar1_std_c = 0.0;
        let start = NaiveDate::from_ymd_opt(2024, 1, 1).unwrap();
        let temps = simulate_weather(start, 5, &cfg, 0);
        for day in 0..5 {
            let day_slice = &temps[day * 24..(day + 1) * 24];
            let argmax = day_slice
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                .unwrap()
                .0;
            assert_eq!(argmax, 15);
        }
    }

    #[test]
    fn hot_preset_warmer_than_cold() {
        let start = NaiveDate::from_ymd_opt(2024, 1, 1).unwrap();
        let hot = simulate_weather(start, 365, &WeatherConfig::<f64>::preset(Climate::Hot), 1);
        let cold = simulate_weather(start, 365, &WeatherConfig::<f64>::preset(Climate::Cold), 1);
        let mean = |xs: &[f64]| xs.iter().sum::<f64>() / xs.len() as f64;
        assert!(mean(&hot) > mean(&cold));
    }

    #[test]
    fn ar1_autocorrelation_matches_rho() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let rho = 0.8;
        let xs = ar1_noise::<f64, _>(8760, rho, 2.0, &mut rng);
        let n = xs.len();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var: f64 = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>();
        let cov: f64 = xs
            .windows(2)
            .map(|w| (w[0] - mean) * (w[1] - mean))
            .sum::<f64>();
        let r1 = cov / var;
        assert!((r1 - rho).abs() < 0.05, "lag-1 autocorrelation {r1}");
    }
}
