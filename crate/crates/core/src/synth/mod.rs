//! Seedable synthetic building generator: stochastic occupant schedules,
//! zone lighting with delay-off, proportional plug loads, setback HVAC and
//! synthetic weather, emitting labeled series with a ground-truth sidecar.

mod loads;
mod occupancy;
mod weather;

pub use loads::{inject_always_on, simulate_loads, OCCUPIED_MODE_MIN_RATIO};
pub use occupancy::{simulate_occupancy, OccupancyQuarters, QUARTERS_PER_HOUR};
pub use weather::{ar1_noise, simulate_weather, Climate, WeatherConfig};

use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::num::{derive_seed, Real};
use crate::series::BuildingSeries;

/// Piecewise-linear HVAC model: a V-shaped signature around one breakpoint
/// with slopes scaled by the setback factor when the building is
/// unoccupied.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HvacParams<T> {
    pub breakpoint_c: T,
    pub cooling_slope_kw_per_c: T,
    pub heating_slope_kw_per_c: T,
    pub base_kw: T,
    /// Fraction of the slopes retained during unoccupied operation.
    pub setback: T,
}

impl<T: Real> HvacParams<T> {
    /// Noiseless HVAC load at a temperature for either operation mode.
    pub fn load_at(&self, temp: T, occupied: bool) -> T {
        let scale = if occupied { T::one() } else { self.setback };
        let cool = (temp - self.breakpoint_c).max(T::zero()) * self.cooling_slope_kw_per_c;
        let heat = (self.breakpoint_c - temp).max(T::zero()) * self.heating_slope_kw_per_c;
        self.base_kw + scale * (cool + heat)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseStd<T> {
    pub lighting: T,
    pub plug: T,
    pub hvac: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimBuilding<T> {
    pub name: String,
    pub floor_area_m2: T,
    pub zone_count: usize,
    pub occupant_count: usize,
    pub light_intensity_w_m2: T,
    pub plug_intensity_w_m2: T,
    pub light_base_kw: T,
    pub plug_base_kw: T,
    pub hvac: HvacParams<T>,
    pub noise_std_kw: NoiseStd<T>,
}

impl<T: Real> SimBuilding<T> {
    pub fn validate(&self) -> Result<()> {
        if self.floor_area_m2 <= T::zero() {
            return Err(Error::Domain("floor area must be positive".into()));
        }
        if self.zone_count == 0 || self.occupant_count == 0 {
            return Err(Error::Domain("zones and occupants must be positive".into()));
        }
        let caps = [
            self.light_intensity_w_m2,
            self.plug_intensity_w_m2,
            self.light_base_kw,
            self.plug_base_kw,
            self.hvac.cooling_slope_kw_per_c,
            self.hvac.heating_slope_kw_per_c,
            self.hvac.base_kw,
        ];
        if caps.iter().any(|&c| c < T::zero()) {
            return Err(Error::Domain("capacities must be non-negative".into()));
        }
        if self.hvac.setback < T::zero() || self.hvac.setback > T::one() {
            return Err(Error::Domain("setback must lie in [0,1]".into()));
        }
        Ok(())
    }

    pub fn light_dynamic_kw(&self) -> T {
        self.floor_area_m2 * self.light_intensity_w_m2 * T::of(1e-3)
    }

    pub fn plug_dynamic_kw(&self) -> T {
        self.floor_area_m2 * self.plug_intensity_w_m2 * T::of(1e-3)
    }

    /// Desk-scale office presets indexed 0..3, paired with a climate.
    pub fn preset(index: usize) -> (Self, Climate) {
        match index % 3 {
            0 => (
                Self {
                    name: "office-a".into(),
                    floor_area_m2: T::of(1200.0),
                    zone_count: 8,
                    occupant_count: 48,
                    light_intensity_w_m2: T::of(8.0),
                    plug_intensity_w_m2: T::of(8.0),
                    light_base_kw: T::of(0.96),
                    plug_base_kw: T::of(0.96),
                    hvac: HvacParams {
                        breakpoint_c: T::of(17.0),
                        cooling_slope_kw_per_c: T::of(0.8),
                        heating_slope_kw_per_c: T::of(0.5),
                        base_kw: T::of(1.5),
                        setback: T::of(0.35),
                    },
                    noise_std_kw: NoiseStd {
                        lighting: T::of(0.15),
                        plug: T::of(0.15),
                        hvac: T::of(0.3),
                    },
                },
                Climate::Mild,
            ),
            1 => (
                Self {
                    name: "office-b".into(),
                    floor_area_m2: T::of(2000.0),
                    zone_count: 10,
                    occupant_count: 80,
                    light_intensity_w_m2: T::of(9.0),
                    plug_intensity_w_m2: T::of(7.0),
                    light_base_kw: T::of(1.8),
                    plug_base_kw: T::of(1.4),
                    hvac: HvacParams {
                        breakpoint_c: T::of(18.0),
                        cooling_slope_kw_per_c: T::of(1.2),
                        heating_slope_kw_per_c: T::of(0.3),
                        base_kw: T::of(2.0),
                        setback: T::of(0.3),
                    },
                    noise_std_kw: NoiseStd {
                        lighting: T::of(0.2),
                        plug: T::of(0.2),
                        hvac: T::of(0.4),
                    },
                },
                Climate::Hot,
            ),
            _ => (
                Self {
                    name: "office-c".into(),
                    floor_area_m2: T::of(900.0),
                    zone_count: 6,
                    occupant_count: 36,
                    light_intensity_w_m2: T::of(7.0),
                    plug_intensity_w_m2: T::of(9.0),
                    light_base_kw: T::of(0.63),
                    plug_base_kw: T::of(0.81),
                    hvac: HvacParams {
                        breakpoint_c: T::of(16.0),
                        cooling_slope_kw_per_c: T::of(0.6),
                        heating_slope_kw_per_c: T::of(0.9),
                        base_kw: T::of(1.0),
                        setback: T::of(0.4),
                    },
                    noise_std_kw: NoiseStd {
                        lighting: T::of(0.12),
                        plug: T::of(0.12),
                        hvac: T::of(0.3),
                    },
                },
                Climate::Cold,
            ),
        }
    }
}

/// Everything the evaluation needs alongside a simulated series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth<T> {
    pub building: SimBuilding<T>,
    pub climate: Climate,
    pub light_dynamic_kw: T,
    pub plug_dynamic_kw: T,
    /// Presence ratio at which HVAC leaves its setback.
    pub occupied_mode_min_ratio: f64,
    pub seed: u64,
    pub days: usize,
    pub start_date: NaiveDate,
}

impl<T: Real> GroundTruth<T> {
    pub fn save_json(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path)?;
        serde_json::to_writer_pretty(std::io::BufWriter::new(file), self)?;
        Ok(())
    }

    pub fn load_json(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Ok(serde_json::from_reader(std::io::BufReader::new(file))?)
    }
}

/// Simulate one building end to end: occupancy, weather, loads.
pub fn simulate_building<T: Real>(
    building: &SimBuilding<T>,
    climate: Climate,
    start_date: NaiveDate,
    days: usize,
    seed: u64,
) -> Result<(BuildingSeries<T>, GroundTruth<T>)> {
    building.validate()?;
    if days == 0 {
        return Err(Error::Domain("days must be positive".into()));
    }
    let occupancy = simulate_occupancy(building, start_date, days, derive_seed(seed, 1))?;
    let weather = simulate_weather(
        start_date,
        days,
        &WeatherConfig::preset(climate),
        derive_seed(seed, 2),
    );
    let series = simulate_loads(
        building,
        &occupancy,
        &weather,
        start_date,
        derive_seed(seed, 3),
    )?;
    let truth = GroundTruth {
        building: building.clone(),
        climate,
        light_dynamic_kw: building.light_dynamic_kw(),
        plug_dynamic_kw: building.plug_dynamic_kw(),
        occupied_mode_min_ratio: loads::OCCUPIED_MODE_MIN_RATIO,
        seed,
        days,
        start_date,
    };
    Ok((series, truth))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_validate() {
        for i in 0..3 {
            let (b, _) = SimBuilding::<f64>::preset(i);
            b.validate().unwrap();
        }
    }

    #[test]
    fn identical_seeds_reproduce_series() {
        let (b, climate) = SimBuilding::<f64>::preset(0);
        let start = NaiveDate::from_ymd_opt(2024, 1, 1).unwrap();
        let (s1, _) = simulate_building(&b, climate, start, 10, 42).unwrap();
        let (s2, _) = simulate_building(&b, climate, start, 10, 42).unwrap();
        assert_eq!(s1, s2);
        let (s3, _) = simulate_building(&b, climate, start, 10, 43).unwrap();
        assert_ne!(s1, s3);
    }

    #[test]
    fn lumped_total_is_exact_sum_of_systems() {
        let (b, climate) = SimBuilding::<f64>::preset(1);
        let start = NaiveDate::from_ymd_opt(2024, 3, 4).unwrap();
        let (s, _) = simulate_building(&b, climate, start, 7, 9).unwrap();
        let sys = s.systems().unwrap();
        for i in 0..s.len() {
            let sum = sys.lighting[i] + sys.plug[i] + sys.hvac[i];
            assert_eq!(s.load()[i], sum);
        }
    }

    #[test]
    fn hvac_curve_examples() {
        let hvac = HvacParams {
            breakpoint_c: 18.0,
            cooling_slope_kw_per_c: 1.5,
            heating_slope_kw_per_c: 0.5,
            base_kw: 2.0,
            setback: 0.4,
        };
        assert_eq!(hvac.load_at(18.0, true), 2.0);
        assert_eq!(hvac.load_at(20.0, true), 5.0);
        assert_eq!(hvac.load_at(20.0, false), 3.2);
        assert_eq!(hvac.load_at(16.0, true), 3.0);
    }
}
