//! Reference occupancy schedules: the deterministic daily patterns the
//! candidate generator perturbs.

use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::levels::{DayType, HOURS_PER_DAY};
use crate::num::Real;

/// Temperature upper bound assigned to inactive hours (reference ratio at
/// or below [`INACTIVE_RATIO`]) and to active hours respectively.
pub const INACTIVE_RATIO: f64 = 0.05;
pub const INACTIVE_TAU: f64 = 0.05;
pub const ACTIVE_TAU: f64 = 0.5;

/// A deterministic daily occupancy schedule: per-hour reference fractional
/// occupancy ratios plus the per-hour upper bound for the dispersion
/// temperature drawn by the sampler.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceSchedule<T> {
    pub day_type: DayType,
    ratios: Vec<T>,
    tau_upper: Vec<T>,
}

impl<T: Real> ReferenceSchedule<T> {
    pub fn new(day_type: DayType, ratios: Vec<T>, tau_upper: Vec<T>) -> Result<Self> {
        if ratios.len() != HOURS_PER_DAY || tau_upper.len() != HOURS_PER_DAY {
            return Err(Error::Dimension(format!(
                "schedule needs {HOURS_PER_DAY} hours, got {} ratios and {} tau bounds",
                ratios.len(),
                tau_upper.len()
            )));
        }
        if ratios.iter().any(|&r| r < T::zero() || r > T::one()) {
            return Err(Error::Domain("schedule ratios must lie in [0,1]".into()));
        }
        if tau_upper.iter().any(|&t| t <= T::zero()) {
            return Err(Error::Domain("tau upper bounds must be positive".into()));
        }
        Ok(Self {
            day_type,
            ratios,
            tau_upper,
        })
    }

    /// Build from ratios alone, assigning tau bounds by the inactive/active
    /// rule: low dispersion where the reference is (near) empty, high
    /// dispersion otherwise.
    pub fn from_ratios(day_type: DayType, ratios: Vec<T>) -> Result<Self> {
        let tau = ratios
            .iter()
            .map(|&r| {
                if r <= T::of(INACTIVE_RATIO) {
                    T::of(INACTIVE_TAU)
                } else {
                    T::of(ACTIVE_TAU)
                }
            })
            .collect();
        Self::new(day_type, ratios, tau)
    }

    pub fn ratios(&self) -> &[T] {
        &self.ratios
    }

    pub fn tau_upper(&self) -> &[T] {
        &self.tau_upper
    }
}

/// One reference schedule per day type.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduleSet<T> {
    pub working: ReferenceSchedule<T>,
    pub non_working: ReferenceSchedule<T>,
}

impl<T: Real> ScheduleSet<T> {
    pub fn get(&self, day_type: DayType) -> &ReferenceSchedule<T> {
        match day_type {
            DayType::Working => &self.working,
            DayType::NonWorking => &self.non_working,
        }
    }

    /// Bundled defaults: an office working day with morning ramp, lunch dip
    /// and evening ramp-down, and a flat 5%-ratio non-working day.
    pub fn bundled() -> Self {
        Self::from_csv_reader(BUNDLED_SCHEDULES_CSV.as_bytes())
            .expect("bundled schedule data is valid")
    }

    /// Load schedules from a CSV with columns `hour,ratio,tau_upper,day_type`
    /// covering hours 0-23 for both day types.
    pub fn load_csv(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Self::from_csv_reader(file)
    }

    pub fn from_csv_reader<R: Read>(reader: R) -> Result<Self> {
        #[derive(Deserialize)]
        struct Row {
            hour: usize,
            ratio: f64,
            tau_upper: f64,
            day_type: DayType,
        }

        let mut per_type: [[Option<(f64, f64)>; HOURS_PER_DAY]; 2] =
            [[None; HOURS_PER_DAY], [None; HOURS_PER_DAY]];
        let mut csv_reader = csv::Reader::from_reader(reader);
        for (i, row) in csv_reader.deserialize::<Row>().enumerate() {
            let row = row.map_err(|e| Error::Data(format!("schedule row {}: {e}", i + 2)))?;
            if row.hour >= HOURS_PER_DAY {
                return Err(Error::Data(format!("schedule hour {} out of range", row.hour)));
            }
            let slot = match row.day_type {
                DayType::Working => &mut per_type[0][row.hour],
                DayType::NonWorking => &mut per_type[1][row.hour],
            };
            if slot.is_some() {
                return Err(Error::Data(format!(
                    "duplicate schedule entry for hour {} ({:?})",
                    row.hour, row.day_type
                )));
            }
            *slot = Some((row.ratio, row.tau_upper));
        }

        let build = |slots: &[Option<(f64, f64)>; HOURS_PER_DAY], day_type: DayType| {
            let mut ratios = Vec::with_capacity(HOURS_PER_DAY);
            let mut tau = Vec::with_capacity(HOURS_PER_DAY);
            for (h, slot) in slots.iter().enumerate() {
                let (r, t) = slot.ok_or_else(|| {
                    Error::Data(format!("missing schedule hour {h} for {day_type:?}"))
                })?;
                ratios.push(T::of(r));
                tau.push(T::of(t));
            }
            ReferenceSchedule::new(day_type, ratios, tau)
        };

        Ok(Self {
            working: build(&per_type[0], DayType::Working)?,
            non_working: build(&per_type[1], DayType::NonWorking)?,
        })
    }
}

/// Default schedules shipped with the crate; identical content is also
/// written next to the demo config so users can copy and edit it.
pub const BUNDLED_SCHEDULES_CSV: &str = include_str!("../data/default_schedules.csv");

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_schedules_parse_and_validate() {
        let set = ScheduleSet::<f64>::bundled();
        assert_eq!(set.working.ratios().len(), 24);
        // inactive night hours carry the low tau bound
        assert_eq!(set.working.tau_upper()[3], INACTIVE_TAU);
        assert_eq!(set.working.tau_upper()[10], ACTIVE_TAU);
        // the non-working day is flat and fully inactive
        assert!(set.non_working.ratios().iter().all(|&r| r <= 0.05));
        assert!(set.non_working.tau_upper().iter().all(|&t| t == INACTIVE_TAU));
    }

    #[test]
    fn from_ratios_applies_tau_rule() {
        let mut ratios = vec![0.0f64; 24];
        ratios[12] = 0.9;
        let s = ReferenceSchedule::from_ratios(DayType::Working, ratios).unwrap();
        assert_eq!(s.tau_upper()[0], INACTIVE_TAU);
        assert_eq!(s.tau_upper()[12], ACTIVE_TAU);
    }

    #[test]
    fn csv_missing_hour_is_rejected() {
        let mut rows = String::from("hour,ratio,tau_upper,day_type\n");
        for h in 0..23 {
            rows.push_str(&format!("{h},0.1,0.5,working\n"));
        }
        for h in 0..24 {
            rows.push_str(&format!("{h},0.05,0.05,non-working\n"));
        }
        assert!(ScheduleSet::<f64>::from_csv_reader(rows.as_bytes()).is_err());
    }

    #[test]
    fn ratio_out_of_range_is_rejected() {
        let bad = ReferenceSchedule::new(
            DayType::Working,
            vec![1.5; 24],
            vec![0.5; 24],
        );
        assert!(bad.is_err());
    }
}
