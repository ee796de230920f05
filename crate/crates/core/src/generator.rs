//! Stochastic candidate occupancy profile generation.
//!
//! Each candidate is a daily sequence of categorical level distributions
//! built by perturbing a reference schedule: per hour, a dispersion
//! temperature is drawn uniformly, level-distance scores are turned into
//! logits and normalized by a softmax. The resulting pool is the solution
//! space the trainer searches when constructing posteriors.

use rand::distributions::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::levels::{CategoricalProfile, DayType, LevelSet, HOURS_PER_DAY};
use crate::num::{softmax, Real};
use crate::schedule::{ReferenceSchedule, ScheduleSet};

/// Lower bound of the uniform dispersion-temperature draw; keeps the logit
/// division away from zero.
pub const TAU_MIN: f64 = 0.01;

/// Default pool sizes per day type.
pub const DEFAULT_WORKING_CANDIDATES: usize = 1500;
pub const DEFAULT_NON_WORKING_CANDIDATES: usize = 500;

/// Absolute distance of a reference ratio to every level centroid.
pub fn level_distance_scores<T: Real>(r_ref: T, levels: &LevelSet<T>) -> Result<Vec<T>> {
    if r_ref < T::zero() || r_ref > T::one() {
        return Err(Error::Domain(format!(
            "reference ratio {r_ref} outside [0,1]"
        )));
    }
    Ok(levels
        .centroids()
        .iter()
        .map(|&c| (r_ref - c).abs())
        .collect())
}

/// Logits from level-distance scores at dispersion temperature `tau`:
/// smaller distance means higher logit, lower tau means sharper.
pub fn logits_from_scores<T: Real>(scores: &[T], tau: T) -> Result<Vec<T>> {
    if tau <= T::zero() {
        return Err(Error::Domain(format!("tau must be positive, got {tau}")));
    }
    Ok(scores.iter().map(|&a| -a / tau).collect())
}

/// Softmax normalization of logits into a categorical distribution.
pub fn softmax_probs<T: Real>(logits: &[T]) -> Vec<T> {
    softmax(logits)
}

/// Sample one daily candidate profile from a reference schedule. Per hour,
/// tau ~ Uniform(TAU_MIN, tau_upper[h]).
pub fn sample_daily_profile<T: Real, R: rand::Rng>(
    schedule: &ReferenceSchedule<T>,
    levels: &LevelSet<T>,
    rng: &mut R,
) -> Result<CategoricalProfile<T>> {
    let tau_min = TAU_MIN;
    let mut probs = Vec::with_capacity(HOURS_PER_DAY);
    for hour in 0..HOURS_PER_DAY {
        let upper = schedule.tau_upper()[hour].to_f64_lossy().max(tau_min);
        let tau = T::of(Uniform::new_inclusive(tau_min, upper).sample(rng));
        let scores = level_distance_scores(schedule.ratios()[hour], levels)?;
        let logits = logits_from_scores(&scores, tau)?;
        probs.push(softmax_probs(&logits));
    }
    CategoricalProfile::new(probs, schedule.day_type)
}

/// The pre-generated candidate pool, fixed before training.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidatePool<T> {
    pub working: Vec<CategoricalProfile<T>>,
    pub non_working: Vec<CategoricalProfile<T>>,
    pub rng_seed: u64,
}

impl<T: Real> CandidatePool<T> {
    pub fn candidates(&self, day_type: DayType) -> &[CategoricalProfile<T>] {
        match day_type {
            DayType::Working => &self.working,
            DayType::NonWorking => &self.non_working,
        }
    }

    pub fn len(&self) -> usize {
        self.working.len() + self.non_working.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Generate the candidate pool. Each profile draws from its own
/// deterministically derived RNG stream, so the result depends only on
/// (schedules, levels, sizes, seed) and profiles could be sampled in any
/// order or in parallel.
pub fn generate_pool<T: Real>(
    schedules: &ScheduleSet<T>,
    levels: &LevelSet<T>,
    working_count: usize,
    non_working_count: usize,
    seed: u64,
) -> Result<CandidatePool<T>> {
    if working_count == 0 || non_working_count == 0 {
        return Err(Error::Domain("pool sizes must be positive".into()));
    }
    let sample_block = |schedule: &ReferenceSchedule<T>, count: usize, stream_base: u64| {
        (0..count)
            .map(|i| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(stream_base + i as u64);
                sample_daily_profile(schedule, levels, &mut rng)
            })
            .collect::<Result<Vec<_>>>()
    };
    // day types get disjoint stream ranges
    let working = sample_block(&schedules.working, working_count, 0)?;
    let non_working = sample_block(&schedules.non_working, non_working_count, 1 << 32)?;
    Ok(CandidatePool {
        working,
        non_working,
        rng_seed: seed,
    })
}
