//! Occupancy levels: ordered centroids on [0,1] with bin geometry, and
//! per-step categorical distributions over those levels.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::num::Real;

/// Tolerance used everywhere a probability vector must sum to one
/// (widened to a few machine epsilons for narrower scalars).
pub const PROB_SUM_TOL: f64 = 1e-9;

/// The probability-sum tolerance for a scalar type.
pub fn prob_sum_tol<T: Real>() -> T {
    T::of(PROB_SUM_TOL).max(T::epsilon() * T::of(16.0))
}

/// Floor applied to every Gaussian component variance so log-densities
/// stay finite.
pub const VARIANCE_FLOOR: f64 = 1e-8;

/// Hours in one profile day.
pub const HOURS_PER_DAY: usize = 24;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DayType {
    Working,
    NonWorking,
}

impl DayType {
    pub const ALL: [DayType; 2] = [DayType::Working, DayType::NonWorking];
}

/// Ordered occupancy-level centroids on [0,1].
///
/// The first and last centroids are the mandatory boundary levels 0 and 1.
/// Interior levels own the bin between the midpoints to their neighbours;
/// their Gaussian components get the centroid as mean and the uniform
/// variance `width^2 / 12`. Boundary components are offset inward by
/// `boundary_offset` with variance `boundary_std^2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelSet<T> {
    centroids: Vec<T>,
    boundary_offset: T,
    boundary_std: T,
    bin_edges: Vec<T>,
}

impl<T: Real> LevelSet<T> {
    pub const DEFAULT_BOUNDARY_OFFSET: f64 = 0.02;
    pub const DEFAULT_BOUNDARY_STD: f64 = 0.02;

    pub fn new(centroids: Vec<T>, boundary_offset: T, boundary_std: T) -> Result<Self> {
        if centroids.len() < 2 {
            return Err(Error::Domain(
                "level set needs at least the two boundary levels".into(),
            ));
        }
        let eps = T::of(1e-12);
        if centroids[0].abs() > eps {
            return Err(Error::Domain("first centroid must be 0".into()));
        }
        let last = *centroids.last().unwrap();
        if (last - T::one()).abs() > eps {
            return Err(Error::Domain("last centroid must be 1".into()));
        }
        if centroids.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Domain("centroids must be strictly increasing".into()));
        }
        if boundary_offset <= T::zero() || boundary_std <= T::zero() {
            return Err(Error::Domain(
                "boundary offset and std must be positive".into(),
            ));
        }
        let mut bin_edges = Vec::with_capacity(centroids.len() + 1);
        bin_edges.push(T::zero());
        for w in centroids.windows(2) {
            bin_edges.push((w[0] + w[1]) / T::of(2.0));
        }
        bin_edges.push(T::one());
        Ok(Self {
            centroids,
            boundary_offset,
            boundary_std,
            bin_edges,
        })
    }

    pub fn with_defaults(centroids: Vec<T>) -> Result<Self> {
        Self::new(
            centroids,
            T::of(Self::DEFAULT_BOUNDARY_OFFSET),
            T::of(Self::DEFAULT_BOUNDARY_STD),
        )
    }

    /// The four-level default: centroids `[0, 1/3, 2/3, 1]`.
    pub fn four_level() -> Self {
        Self::with_defaults(vec![
            T::zero(),
            T::of(1.0 / 3.0),
            T::of(2.0 / 3.0),
            T::one(),
        ])
        .expect("default level set is valid")
    }

    pub fn count(&self) -> usize {
        self.centroids.len()
    }

    pub fn centroids(&self) -> &[T] {
        &self.centroids
    }

    /// Bin edges partitioning [0,1]; `count() + 1` entries. The first
    /// interior edge is also the threshold below which a ratio belongs to
    /// the zero level.
    pub fn bin_edges(&self) -> &[T] {
        &self.bin_edges
    }

    pub fn boundary_offset(&self) -> T {
        self.boundary_offset
    }

    pub fn boundary_std(&self) -> T {
        self.boundary_std
    }

    pub fn is_boundary(&self, level: usize) -> bool {
        level == 0 || level == self.centroids.len() - 1
    }

    /// Mean of the Gaussian component for a level.
    pub fn component_mean(&self, level: usize) -> T {
        if level == 0 {
            self.boundary_offset
        } else if level == self.centroids.len() - 1 {
            T::one() - self.boundary_offset
        } else {
            self.centroids[level]
        }
    }

    /// Variance of the Gaussian component for a level (before the global
    /// variance floor).
    pub fn component_variance(&self, level: usize) -> T {
        if self.is_boundary(level) {
            self.boundary_std * self.boundary_std
        } else {
            let width = self.bin_edges[level + 1] - self.bin_edges[level];
            width * width / T::of(12.0)
        }
    }

    /// Index of the centroid nearest to a ratio (ties to the lower level).
    pub fn nearest_level(&self, ratio: T) -> usize {
        let mut best = 0;
        let mut best_d = (ratio - self.centroids[0]).abs();
        for (j, &c) in self.centroids.iter().enumerate().skip(1) {
            let d = (ratio - c).abs();
            if d < best_d {
                best = j;
                best_d = d;
            }
        }
        best
    }
}

fn check_categorical<T: Real>(probs: &[T]) -> Result<()> {
    if probs.iter().any(|&p| p < T::zero()) {
        return Err(Error::Domain("negative probability".into()));
    }
    let sum: T = probs.iter().copied().sum();
    if (sum - T::one()).abs() > prob_sum_tol::<T>() {
        return Err(Error::Domain(format!(
            "probabilities sum to {sum}, expected 1"
        )));
    }
    Ok(())
}

/// A daily sequence of categorical distributions over occupancy levels:
/// 24 hourly steps, each a probability vector over the same `L` levels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoricalProfile<T> {
    probs: Vec<Vec<T>>,
    day_type: DayType,
}

impl<T: Real> CategoricalProfile<T> {
    pub fn new(probs: Vec<Vec<T>>, day_type: DayType) -> Result<Self> {
        if probs.len() != HOURS_PER_DAY {
            return Err(Error::Dimension(format!(
                "profile has {} steps, expected {HOURS_PER_DAY}",
                probs.len()
            )));
        }
        let levels = probs[0].len();
        for (t, row) in probs.iter().enumerate() {
            if row.len() != levels {
                return Err(Error::Dimension(format!(
                    "step {t} has {} levels, expected {levels}",
                    row.len()
                )));
            }
            check_categorical(row).map_err(|e| Error::Domain(format!("step {t}: {e}")))?;
        }
        Ok(Self { probs, day_type })
    }

    pub fn day_type(&self) -> DayType {
        self.day_type
    }

    pub fn levels(&self) -> usize {
        self.probs[0].len()
    }

    pub fn step(&self, hour: usize) -> &[T] {
        &self.probs[hour]
    }

    pub fn steps(&self) -> &[Vec<T>] {
        &self.probs
    }

    /// Expected occupancy ratio per hour under the level centroids.
    pub fn expected_ratios(&self, levels: &LevelSet<T>) -> Vec<T> {
        self.probs
            .iter()
            .map(|row| {
                row.iter()
                    .zip(levels.centroids())
                    .map(|(&p, &c)| p * c)
                    .sum()
            })
            .collect()
    }
}
