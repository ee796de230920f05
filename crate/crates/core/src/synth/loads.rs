//! System load synthesis from quarter-resolution occupancy and hourly
//! weather: zone lighting with one-quarter delay-off, plug loads
//! proportional to the presence ratio, and setback HVAC.

use chrono::NaiveDate;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::levels::{DayType, HOURS_PER_DAY};
use crate::num::Real;
use crate::series::{BuildingSeries, SystemSeries};
use crate::synth::occupancy::{OccupancyQuarters, QUARTERS_PER_HOUR};
use crate::synth::SimBuilding;

/// HVAC leaves its unoccupied setback only when at least this fraction of
/// occupants is present (stray weekend visitors do not trigger occupied
/// operation).
pub const OCCUPIED_MODE_MIN_RATIO: f64 = 0.1;

pub fn simulate_loads<T: Real>(
    building: &SimBuilding<T>,
    occupancy: &OccupancyQuarters<T>,
    weather: &[T],
    start_date: NaiveDate,
    seed: u64,
) -> Result<BuildingSeries<T>> {
    building.validate()?;
    let n_hours = occupancy.hourly_ratio.len();
    if weather.len() != n_hours {
        return Err(Error::Data(format!(
            "{} weather hours for {n_hours} occupancy hours",
            weather.len()
        )));
    }
    let zones = building.zone_count;
    let light_dyn = building.light_dynamic_kw();
    let plug_dyn = building.plug_dynamic_kw();
    let occupied_min =
        (OCCUPIED_MODE_MIN_RATIO * occupancy.occupant_count as f64).ceil() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut gauss = |std: T| std * T::of(rng.sample::<f64, _>(StandardNormal));

    let mut lighting = Vec::with_capacity(n_hours);
    let mut plug = Vec::with_capacity(n_hours);
    let mut hvac = Vec::with_capacity(n_hours);
    for t in 0..n_hours {
        let q0 = t * QUARTERS_PER_HOUR;
        let day_type = occupancy.day_types[t / HOURS_PER_DAY];
        let mut lit_sum = T::zero();
        let mut slope_sum = T::zero();
        for q in q0..q0 + QUARTERS_PER_HOUR {
            let lit_frac = match day_type {
                // a zone stays lit one quarter after it empties (delay-off)
                DayType::Working => {
                    let lit = (0..zones)
                        .filter(|&z| {
                            occupancy.zone_occupied[q][z]
                                || (q > 0 && occupancy.zone_occupied[q - 1][z])
                        })
                        .count();
                    lit as f64 / zones as f64
                }
                // skeleton crews light their desks, not whole zones
                DayType::NonWorking => {
                    occupancy.present_count[q] as f64 / occupancy.occupant_count as f64
                }
            };
            lit_sum = lit_sum + T::of(lit_frac);
            let occupied = occupancy.present_count[q] >= occupied_min;
            slope_sum = slope_sum + if occupied { T::one() } else { building.hvac.setback };
        }
        let quarters = T::of(QUARTERS_PER_HOUR as f64);
        let lit_frac = lit_sum / quarters;
        let slope_scale = slope_sum / quarters;

        let temp = weather[t];
        let cool = (temp - building.hvac.breakpoint_c).max(T::zero())
            * building.hvac.cooling_slope_kw_per_c;
        let heat = (building.hvac.breakpoint_c - temp).max(T::zero())
            * building.hvac.heating_slope_kw_per_c;

        let l = light_dyn * lit_frac + building.light_base_kw + gauss(building.noise_std_kw.lighting);
        let p = plug_dyn * occupancy.hourly_ratio[t]
            + building.plug_base_kw
            + gauss(building.noise_std_kw.plug);
        let h = building.hvac.base_kw + slope_scale * (cool + heat) + gauss(building.noise_std_kw.hvac);
        lighting.push(l.max(T::zero()));
        plug.push(p.max(T::zero()));
        hvac.push(h.max(T::zero()));
    }

    let load: Vec<T> = (0..n_hours)
        .map(|t| lighting[t] + plug[t] + hvac[t])
        .collect();
    let t0 = start_date.and_hms_opt(0, 0, 0).unwrap();
    let timestamps = (0..n_hours)
        .map(|i| t0 + chrono::Duration::hours(i as i64))
        .collect();
    BuildingSeries::new(
        timestamps,
        load,
        Some(weather.to_vec()),
        Some(occupancy.hourly_ratio.clone()),
        Some(SystemSeries {
            lighting,
            plug,
            hvac,
        }),
        &[],
    )
}

/// Force occupied-mode HVAC during an inclusive hour interval on every day,
/// regardless of occupancy: the unoccupied setback is undone at truly empty
/// steps. Returns the modified series and the injected waste in kWh.
pub fn inject_always_on<T: Real>(
    series: &BuildingSeries<T>,
    building: &SimBuilding<T>,
    interval: (u32, u32),
) -> Result<(BuildingSeries<T>, T)> {
    let (from, to) = interval;
    if from > 23 || to > 23 || from > to {
        return Err(Error::Domain(format!("bad hour interval {from}-{to}")));
    }
    let truth = series
        .occupancy_truth()
        .ok_or_else(|| Error::Data("series lacks occupancy truth".into()))?;
    let temps = series
        .temperature()
        .ok_or_else(|| Error::Data("series lacks temperatures".into()))?;
    let systems = series
        .systems()
        .ok_or_else(|| Error::Data("series lacks a per-system breakdown".into()))?;

    let mut hvac = systems.hvac.clone();
    let mut injected = T::zero();
    let threshold = T::of(OCCUPIED_MODE_MIN_RATIO);
    for (i, ts) in series.timestamps().iter().enumerate() {
        let hour = chrono::Timelike::hour(ts);
        if hour >= from && hour <= to && truth[i] < threshold {
            let delta = building.hvac.load_at(temps[i], true)
                - building.hvac.load_at(temps[i], false);
            hvac[i] = hvac[i] + delta;
            injected = injected + delta;
        }
    }
    let load: Vec<T> = (0..series.len())
        .map(|i| systems.lighting[i] + systems.plug[i] + hvac[i])
        .collect();
    let modified = BuildingSeries::new(
        series.timestamps().to_vec(),
        load,
        Some(temps.to_vec()),
        Some(truth.to_vec()),
        Some(SystemSeries {
            lighting: systems.lighting.clone(),
            plug: systems.plug.clone(),
            hvac,
        }),
        &[],
    )?;
    Ok((modified, injected))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{simulate_building, simulate_occupancy, simulate_weather, WeatherConfig};

    fn monday() -> NaiveDate {
        NaiveDate::from_ymd_opt(2024, 1, 1).unwrap()
    }

    #[test]
    fn zero_occupancy_lighting_sits_at_base() {
        let (mut b, climate) = SimBuilding::<f64>::preset(0);
        b.noise_std_kw.lighting = 0.0;
        b.noise_std_kw.plug = 0.0;
        let occ = simulate_occupancy(&b, monday(), 7, 3).unwrap();
        let weather = simulate_weather(monday(), 7, &WeatherConfig::preset(climate), 4);
        let s = simulate_loads(&b, &occ, &weather, monday(), 5).unwrap();
        let sys = s.systems().unwrap();
        for t in 0..s.len() {
            if occ.hourly_ratio[t] == 0.0 {
                // delay-off can keep a zone lit in the first quarter after
                // departure, so compare against the truly empty night hours
                if t % 24 <= 3 {
                    assert!((sys.lighting[t] - b.light_base_kw).abs() < 1e-9);
                    assert!((sys.plug[t] - b.plug_base_kw).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn hvac_at_breakpoint_is_base_level() {
        let (mut b, _) = SimBuilding::<f64>::preset(0);
        b.noise_std_kw.hvac = 0.0;
        let occ = simulate_occupancy(&b, monday(), 2, 3).unwrap();
        let weather = vec![b.hvac.breakpoint_c; 48];
        let s = simulate_loads(&b, &occ, &weather, monday(), 5).unwrap();
        let sys = s.systems().unwrap();
        for t in 0..48 {
            assert!((sys.hvac[t] - b.hvac.base_kw).abs() < 1e-9);
        }
    }

    #[test]
    fn lighting_fraction_dominates_plug_ratio() {
        let (mut b, climate) = SimBuilding::<f64>::preset(0);
        b.noise_std_kw.lighting = 0.0;
        b.noise_std_kw.plug = 0.0;
        let occ = simulate_occupancy(&b, monday(), 20, 8).unwrap();
        let weather = simulate_weather(monday(), 20, &WeatherConfig::preset(climate), 9);
        let s = simulate_loads(&b, &occ, &weather, monday(), 10).unwrap();
        let sys = s.systems().unwrap();
        let light_dyn = b.light_dynamic_kw();
        let plug_dyn = b.plug_dynamic_kw();
        for t in 0..s.len() {
            let lit_frac = (sys.lighting[t] - b.light_base_kw) / light_dyn;
            let ratio = (sys.plug[t] - b.plug_base_kw) / plug_dyn;
            assert!(lit_frac >= ratio - 1e-9, "t={t}: {lit_frac} < {ratio}");
        }
    }

    #[test]
    fn injection_adds_known_waste() {
        let (b, climate) = SimBuilding::<f64>::preset(1);
        let (s, _) = simulate_building(&b, climate, monday(), 14, 21).unwrap();
        let (modified, injected) = inject_always_on(&s, &b, (20, 23)).unwrap();
        assert!(injected > 0.0);
        let delta: f64 = modified
            .load()
            .iter()
            .zip(s.load())
            .map(|(m, o)| m - o)
            .sum();
        assert!((delta - injected).abs() < 1e-9);
        // only interval hours changed
        for (i, ts) in s.timestamps().iter().enumerate() {
            let hour = chrono::Timelike::hour(ts);
            if !(20..=23).contains(&hour) {
                assert_eq!(modified.load()[i], s.load()[i]);
            }
        }
    }
}
