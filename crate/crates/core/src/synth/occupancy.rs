//! Stochastic occupant presence on a 15-minute grid.
//!
//! Two occupant groups with per-occupant Gaussian-jittered arrival and
//! departure times, a partial lunch departure, and a small residual crew on
//! non-working days. Occupants keep fixed round-robin zone assignments so
//! zone lighting can be derived.

use chrono::{Datelike, NaiveDate, Weekday};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::Result;
use crate::levels::{DayType, HOURS_PER_DAY};
use crate::num::{clamp, Real};
use crate::synth::SimBuilding;

pub const QUARTERS_PER_HOUR: usize = 4;
pub const QUARTERS_PER_DAY: usize = HOURS_PER_DAY * QUARTERS_PER_HOUR;

// schedule parameters: (arrival mean, departure mean, jitter std), hours
const REGULAR: (f64, f64, f64) = (8.5, 18.25, 0.5);
const FLEXIBLE: (f64, f64, f64) = (9.5, 17.0, 1.0);
const REGULAR_SHARE: f64 = 0.6;
const LUNCH_START: f64 = 12.0;
const LUNCH_END: f64 = 12.0 + 40.0 / 60.0;
const LUNCH_LEAVE_PROB: f64 = 0.5;
const NON_WORKING_SHARE: f64 = 0.05;
const NON_WORKING_WINDOW: (f64, f64, f64) = (9.5, 16.5, 1.0);

/// Quarter-resolution presence summary plus the hourly occupancy ratio.
#[derive(Debug, Clone, PartialEq)]
pub struct OccupancyQuarters<T> {
    /// Occupants present per quarter step (days * 96 entries).
    pub present_count: Vec<usize>,
    /// Zone-occupied flags per quarter step.
    pub zone_occupied: Vec<Vec<bool>>,
    pub occupant_count: usize,
    /// Mean presence ratio per hour (days * 24 entries).
    pub hourly_ratio: Vec<T>,
    pub day_types: Vec<DayType>,
}

fn presence_interval<R: Rng>(
    rng: &mut R,
    (arrive, depart, sigma): (f64, f64, f64),
) -> (f64, f64) {
    let a: f64 = arrive + sigma * rng.sample::<f64, _>(StandardNormal);
    let d: f64 = depart + sigma * rng.sample::<f64, _>(StandardNormal);
    let a = clamp(a, 5.0, 22.0);
    let d = clamp(d, a + 0.25, 23.75);
    (a, d)
}

pub fn simulate_occupancy<T: Real>(
    building: &SimBuilding<T>,
    start_date: NaiveDate,
    days: usize,
    seed: u64,
) -> Result<OccupancyQuarters<T>> {
    building.validate()?;
    let count = building.occupant_count;
    let zones = building.zone_count;
    let regular_count = (REGULAR_SHARE * count as f64).round() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let n_quarters = days * QUARTERS_PER_DAY;
    let mut present_count = vec![0usize; n_quarters];
    let mut zone_occupied = vec![vec![false; zones]; n_quarters];
    let mut hourly_ratio = vec![T::zero(); days * HOURS_PER_DAY];
    let mut day_types = Vec::with_capacity(days);

    for day in 0..days {
        let date = start_date + chrono::Duration::days(day as i64);
        let weekend = matches!(date.weekday(), Weekday::Sat | Weekday::Sun);
        let day_type = if weekend {
            DayType::NonWorking
        } else {
            DayType::Working
        };
        day_types.push(day_type);

        // (occupant index, presence interval, optional lunch leave)
        let mut intervals: Vec<(usize, f64, f64, bool)> = Vec::new();
        match day_type {
            DayType::Working => {
                for occ in 0..count {
                    let group = if occ < regular_count { REGULAR } else { FLEXIBLE };
                    let (a, d) = presence_interval(&mut rng, group);
                    let lunch = rng.gen_bool(LUNCH_LEAVE_PROB);
                    intervals.push((occ, a, d, lunch));
                }
            }
            DayType::NonWorking => {
                let n_present = (NON_WORKING_SHARE * count as f64).round() as usize;
                // a skeleton crew co-locates in one randomly chosen zone
                let zone = rng.gen_range(0..zones);
                for i in 0..n_present {
                    let occ = zone + i * zones; // same zone under round-robin
                    let (a, d) = presence_interval(&mut rng, NON_WORKING_WINDOW);
                    intervals.push((occ % count, a, d, false));
                }
            }
        }

        for q in 0..QUARTERS_PER_DAY {
            let hour = q as f64 / QUARTERS_PER_HOUR as f64;
            let global_q = day * QUARTERS_PER_DAY + q;
            for &(occ, a, d, lunch) in &intervals {
                let at_lunch = lunch && (LUNCH_START..LUNCH_END).contains(&hour);
                if hour >= a && hour < d && !at_lunch {
                    present_count[global_q] += 1;
                    zone_occupied[global_q][occ % zones] = true;
                }
            }
        }
        for h in 0..HOURS_PER_DAY {
            let base = day * QUARTERS_PER_DAY + h * QUARTERS_PER_HOUR;
            let present: usize = (0..QUARTERS_PER_HOUR).map(|i| present_count[base + i]).sum();
            hourly_ratio[day * HOURS_PER_DAY + h] =
                T::of(present as f64 / (QUARTERS_PER_HOUR * count) as f64);
        }
    }

    Ok(OccupancyQuarters {
        present_count,
        zone_occupied,
        occupant_count: count,
        hourly_ratio,
        day_types,
    })
}
