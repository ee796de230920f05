//! Aligned hourly building time series and its CSV contract.

use std::path::Path;

use chrono::{Datelike, NaiveDate, NaiveDateTime, Timelike, Weekday};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::levels::{DayType, HOURS_PER_DAY};
use crate::num::Real;

/// Per-system load series emitted by the synthetic generator (real metering
/// normally lacks this breakdown).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemSeries<T> {
    pub lighting: Vec<T>,
    pub plug: Vec<T>,
    pub hvac: Vec<T>,
}

/// Aligned hourly series: observed load, optional outdoor temperature,
/// optional ground-truth occupancy ratio, optional per-system breakdown,
/// and derived day types.
#[derive(Debug, Clone, PartialEq)]
pub struct BuildingSeries<T> {
    timestamps: Vec<NaiveDateTime>,
    load: Vec<T>,
    temperature: Option<Vec<T>>,
    occupancy_truth: Option<Vec<T>>,
    systems: Option<SystemSeries<T>>,
    day_types: Vec<DayType>,
}

/// One calendar day inside a series.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DayWindow {
    pub date: NaiveDate,
    pub day_type: DayType,
    pub start: usize,
}

fn day_type_for(date: NaiveDate, holidays: &[NaiveDate]) -> DayType {
    let weekend = matches!(date.weekday(), Weekday::Sat | Weekday::Sun);
    if weekend || holidays.contains(&date) {
        DayType::NonWorking
    } else {
        DayType::Working
    }
}

impl<T: Real> BuildingSeries<T> {
    pub fn new(
        timestamps: Vec<NaiveDateTime>,
        load: Vec<T>,
        temperature: Option<Vec<T>>,
        occupancy_truth: Option<Vec<T>>,
        systems: Option<SystemSeries<T>>,
        holidays: &[NaiveDate],
    ) -> Result<Self> {
        let n = timestamps.len();
        if n == 0 {
            return Err(Error::Data("empty series".into()));
        }
        if load.len() != n {
            return Err(Error::Data(format!(
                "{} loads for {n} timestamps",
                load.len()
            )));
        }
        for (name, opt_len) in [
            ("temperature", temperature.as_ref().map(Vec::len)),
            ("occupancy", occupancy_truth.as_ref().map(Vec::len)),
        ] {
            if let Some(len) = opt_len {
                if len != n {
                    return Err(Error::Data(format!("{name} column has {len} rows, expected {n}")));
                }
            }
        }
        if let Some(sys) = &systems {
            if sys.lighting.len() != n || sys.plug.len() != n || sys.hvac.len() != n {
                return Err(Error::Data("system series misaligned with timestamps".into()));
            }
        }
        for (i, w) in timestamps.windows(2).enumerate() {
            let delta = w[1] - w[0];
            if delta != chrono::Duration::hours(1) {
                return Err(Error::Data(format!(
                    "timestamps not hourly at row {}: {} -> {}",
                    i + 1,
                    w[0],
                    w[1]
                )));
            }
        }
        if let Some((i, &l)) = load
            .iter()
            .enumerate()
            .find(|(_, &l)| !l.is_finite() || l < T::zero())
        {
            return Err(Error::Data(format!("load at row {i} is invalid: {l}")));
        }
        let day_types = timestamps
            .iter()
            .map(|ts| day_type_for(ts.date(), holidays))
            .collect();
        Ok(Self {
            timestamps,
            load,
            temperature,
            occupancy_truth,
            systems,
            day_types,
        })
    }

    pub fn len(&self) -> usize {
        self.timestamps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timestamps.is_empty()
    }

    pub fn timestamps(&self) -> &[NaiveDateTime] {
        &self.timestamps
    }

    pub fn load(&self) -> &[T] {
        &self.load
    }

    pub fn temperature(&self) -> Option<&[T]> {
        self.temperature.as_deref()
    }

    pub fn occupancy_truth(&self) -> Option<&[T]> {
        self.occupancy_truth.as_deref()
    }

    pub fn systems(&self) -> Option<&SystemSeries<T>> {
        self.systems.as_ref()
    }

    pub fn day_types(&self) -> &[DayType] {
        &self.day_types
    }

    /// Replace the observed load with the occupant-driven sum
    /// (lighting + plug); used when training the separate scenario on
    /// synthetic data that carries the full breakdown.
    pub fn with_occupant_load(mut self) -> Result<Self> {
        let sys = self
            .systems
            .as_ref()
            .ok_or_else(|| Error::Data("series has no per-system breakdown".into()))?;
        self.load = sys
            .lighting
            .iter()
            .zip(&sys.plug)
            .map(|(&l, &p)| l + p)
            .collect();
        Ok(self)
    }

    /// Replace the occupancy-truth column (values must lie in [0,1]).
    pub fn with_occupancy_truth(mut self, ratios: Vec<T>) -> Result<Self> {
        if ratios.len() != self.len() {
            return Err(Error::Data(format!(
                "{} occupancy values for {} rows",
                ratios.len(),
                self.len()
            )));
        }
        if ratios.iter().any(|&r| r < T::zero() || r > T::one()) {
            return Err(Error::Data("occupancy ratios must lie in [0,1]".into()));
        }
        self.occupancy_truth = Some(ratios);
        Ok(self)
    }

    /// Calendar-day windows. The series must start at midnight and cover
    /// whole days.
    pub fn days(&self) -> Result<Vec<DayWindow>> {
        if self.timestamps[0].hour() != 0 {
            return Err(Error::Data(format!(
                "series must start at midnight, got {}",
                self.timestamps[0]
            )));
        }
        if !self.len().is_multiple_of(HOURS_PER_DAY) {
            return Err(Error::Data(format!(
                "series length {} is not a whole number of days",
                self.len()
            )));
        }
        Ok((0..self.len() / HOURS_PER_DAY)
            .map(|d| {
                let start = d * HOURS_PER_DAY;
                DayWindow {
                    date: self.timestamps[start].date(),
                    day_type: self.day_types[start],
                    start,
                }
            })
            .collect())
    }

    /// Split into (first `n_days`, rest).
    pub fn split_days(&self, n_days: usize) -> Result<(Self, Self)> {
        let days = self.days()?;
        if n_days == 0 || n_days >= days.len() {
            return Err(Error::Data(format!(
                "cannot split {} days at {n_days}",
                days.len()
            )));
        }
        let cut = n_days * HOURS_PER_DAY;
        let slice = |r: std::ops::Range<usize>| Self {
            timestamps: self.timestamps[r.clone()].to_vec(),
            load: self.load[r.clone()].to_vec(),
            temperature: self.temperature.as_ref().map(|v| v[r.clone()].to_vec()),
            occupancy_truth: self.occupancy_truth.as_ref().map(|v| v[r.clone()].to_vec()),
            systems: self.systems.as_ref().map(|s| SystemSeries {
                lighting: s.lighting[r.clone()].to_vec(),
                plug: s.plug[r.clone()].to_vec(),
                hvac: s.hvac[r.clone()].to_vec(),
            }),
            day_types: self.day_types[r].to_vec(),
        };
        Ok((slice(0..cut), slice(cut..self.len())))
    }

    /// Mean and standard deviation of the temperature column.
    pub fn temperature_stats(&self) -> Option<(T, T)> {
        let temps = self.temperature.as_ref()?;
        let n = T::from_usize(temps.len()).unwrap();
        let mean = temps.iter().copied().sum::<T>() / n;
        let var = temps.iter().map(|&t| (t - mean) * (t - mean)).sum::<T>() / n;
        Some((mean, var.sqrt()))
    }

    pub fn peak_load(&self) -> T {
        self.load
            .iter()
            .copied()
            .fold(T::zero(), |a, b| if b > a { b } else { a })
    }

    /// Write the series to CSV. Optional columns appear only when present.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header = vec!["timestamp", "load"];
        if self.temperature.is_some() {
            header.push("temperature");
        }
        if self.occupancy_truth.is_some() {
            header.push("occupancy");
        }
        if self.systems.is_some() {
            header.extend(["load_lighting", "load_plug", "load_hvac"]);
        }
        w.write_record(&header)?;
        for i in 0..self.len() {
            let mut row = vec![
                self.timestamps[i].format(TIMESTAMP_FORMAT).to_string(),
                format!("{}", self.load[i]),
            ];
            if let Some(t) = &self.temperature {
                row.push(format!("{}", t[i]));
            }
            if let Some(o) = &self.occupancy_truth {
                row.push(format!("{}", o[i]));
            }
            if let Some(s) = &self.systems {
                row.push(format!("{}", s.lighting[i]));
                row.push(format!("{}", s.plug[i]));
                row.push(format!("{}", s.hvac[i]));
            }
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Load a series from CSV.
    ///
    /// Required columns: `timestamp` (ISO-8601, hourly) and `load`.
    /// Recognized optional columns: `temperature`, `occupancy`,
    /// `load_lighting`, `load_plug`, `load_hvac`. Gaps of up to
    /// [`MAX_INTERPOLATED_GAP_HOURS`] missing hours are linearly
    /// interpolated with a warning; larger gaps are rejected.
    pub fn load_csv(path: &Path, holidays: &[NaiveDate]) -> Result<Self> {
        let mut reader = csv::Reader::from_path(path)
            .map_err(|e| Error::Data(format!("cannot read {}: {e}", path.display())))?;
        let headers = reader.headers()?.clone();
        let col = |name: &str| headers.iter().position(|h| h == name);
        let ts_col = col("timestamp")
            .ok_or_else(|| Error::Data("missing required column 'timestamp'".into()))?;
        let load_col =
            col("load").ok_or_else(|| Error::Data("missing required column 'load'".into()))?;
        let temp_col = col("temperature");
        let occ_col = col("occupancy");
        let sys_cols = match (col("load_lighting"), col("load_plug"), col("load_hvac")) {
            (Some(a), Some(b), Some(c)) => Some((a, b, c)),
            (None, None, None) => None,
            _ => {
                return Err(Error::Data(
                    "per-system columns must appear together (load_lighting, load_plug, load_hvac)"
                        .into(),
                ))
            }
        };
        for h in headers.iter() {
            if !matches!(
                h,
                "timestamp" | "load" | "temperature" | "occupancy" | "load_lighting"
                    | "load_plug" | "load_hvac"
            ) {
                log::warn!("ignoring unknown column '{h}' in {}", path.display());
            }
        }

        let mut rows: Vec<(NaiveDateTime, Vec<T>)> = Vec::new();
        let value_cols: Vec<usize> = [Some(load_col), temp_col, occ_col]
            .into_iter()
            .flatten()
            .chain(sys_cols.into_iter().flat_map(|(a, b, c)| [a, b, c]))
            .collect();

        for (idx, record) in reader.records().enumerate() {
            let record = record?;
            let line = idx + 2; // header is line 1
            let ts = NaiveDateTime::parse_from_str(&record[ts_col], TIMESTAMP_FORMAT)
                .map_err(|e| Error::Data(format!("row {line}: bad timestamp: {e}")))?;
            let mut values = Vec::with_capacity(value_cols.len());
            for &c in &value_cols {
                let v: f64 = record[c]
                    .parse()
                    .map_err(|e| Error::Data(format!("row {line}: bad number '{}': {e}", &record[c])))?;
                values.push(T::of(v));
            }
            if let Some(last) = rows.last() {
                if ts == last.0 {
                    return Err(Error::Data(format!("row {line}: duplicated timestamp {ts}")));
                }
                if ts < last.0 {
                    return Err(Error::Data(format!(
                        "row {line}: timestamps not increasing at {ts}"
                    )));
                }
            }
            rows.push((ts, values));
        }
        if rows.is_empty() {
            return Err(Error::Data("CSV contains no data rows".into()));
        }

        // fill small gaps by linear interpolation
        let mut filled: Vec<(NaiveDateTime, Vec<T>)> = Vec::with_capacity(rows.len());
        for row in rows {
            if let Some(prev) = filled.last().cloned() {
                let gap = (row.0 - prev.0).num_hours() - 1;
                if gap > MAX_INTERPOLATED_GAP_HOURS {
                    return Err(Error::Data(format!(
                        "gap of {gap} missing hours before {} exceeds {MAX_INTERPOLATED_GAP_HOURS}",
                        row.0
                    )));
                }
                if gap > 0 {
                    log::warn!("interpolating {gap} missing hours before {}", row.0);
                    for g in 1..=gap {
                        let f = T::of(g as f64 / (gap + 1) as f64);
                        let ts = prev.0 + chrono::Duration::hours(g);
                        let vals = prev
                            .1
                            .iter()
                            .zip(&row.1)
                            .map(|(&a, &b)| a + f * (b - a))
                            .collect();
                        filled.push((ts, vals));
                    }
                }
            }
            filled.push(row);
        }

        let timestamps: Vec<_> = filled.iter().map(|r| r.0).collect();
        let mut cursor = 0usize;
        let mut take = |present: bool| {
            let out = present.then(|| filled.iter().map(|r| r.1[cursor]).collect::<Vec<T>>());
            if present {
                cursor += 1;
            }
            out
        };
        let load = take(true).unwrap();
        let temperature = take(temp_col.is_some());
        let occupancy = take(occ_col.is_some());
        let systems = sys_cols.is_some().then(|| {
            let lighting = filled.iter().map(|r| r.1[cursor]).collect();
            let plug = filled.iter().map(|r| r.1[cursor + 1]).collect();
            let hvac = filled.iter().map(|r| r.1[cursor + 2]).collect();
            SystemSeries {
                lighting,
                plug,
                hvac,
            }
        });
        Self::new(timestamps, load, temperature, occupancy, systems, holidays)
    }
}

pub const TIMESTAMP_FORMAT: &str = "%Y-%m-%dT%H:%M:%S";

/// Largest run of missing hours repaired by interpolation.
pub const MAX_INTERPOLATED_GAP_HOURS: i64 = 3;
