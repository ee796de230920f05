//! Ground-truth processing and metrics: level discretization, F1 reports,
//! per-level RMSE, baseline cluster-to-level mapping, capacity percentage
//! error, energy-signature R-squared, and count normalization.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::baselines::kmeans_1d;
use crate::disaggregator::DisaggregatorParams;
use crate::error::{Error, Result};
use crate::num::Real;

/// The three discrete occupancy levels used for benchmarking.
pub const EVAL_LEVELS: usize = 3;

/// Restarts used when clustering ground truth into levels.
const TRUTH_KMEANS_RESTARTS: u64 = 50;

/// Two cut points separating low, medium and high occupancy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LevelThresholds<T> {
    pub cut_low: T,
    pub cut_high: T,
}

impl<T: Real> LevelThresholds<T> {
    pub fn classify(&self, ratio: T) -> usize {
        if ratio < self.cut_low {
            0
        } else if ratio < self.cut_high {
            1
        } else {
            2
        }
    }

    pub fn labels(&self, ratios: &[T]) -> Vec<usize> {
        ratios.iter().map(|&r| self.classify(r)).collect()
    }
}

/// Discretize ground-truth ratios into three levels: K-means with 50
/// seeded restarts, thresholds at the midpoints between sorted centers.
pub fn discretize_truth<T: Real>(truth: &[T]) -> Result<(LevelThresholds<T>, Vec<usize>)> {
    if truth.iter().any(|&r| r < T::zero() || r > T::one()) {
        return Err(Error::Domain("truth ratios must lie in [0,1]".into()));
    }
    let mut best: Option<crate::baselines::KmeansResult<T>> = None;
    for restart in 0..TRUTH_KMEANS_RESTARTS {
        let mut rng = ChaCha8Rng::seed_from_u64(restart);
        let run = kmeans_1d(truth, EVAL_LEVELS, &mut rng)?;
        let better = best.as_ref().is_none_or(|b| run.inertia < b.inertia);
        if better {
            best = Some(run);
        }
    }
    let km = best.expect("at least one restart ran");
    let thresholds = LevelThresholds {
        cut_low: (km.centers[0] + km.centers[1]) / T::of(2.0),
        cut_high: (km.centers[1] + km.centers[2]) / T::of(2.0),
    };
    let labels = thresholds.labels(truth);
    Ok((thresholds, labels))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct F1Report<T> {
    pub per_level: Vec<T>,
    pub support: Vec<usize>,
    pub macro_f1: T,
    pub weighted_f1: T,
}

/// Precision/recall F1 per level plus macro and support-weighted averages.
/// A level absent from both predictions and truth scores 0 with a warning.
pub fn f1_report<T: Real>(pred: &[usize], truth: &[usize]) -> Result<F1Report<T>> {
    if pred.len() != truth.len() {
        return Err(Error::Dimension(format!(
            "{} predictions vs {} truth labels",
            pred.len(),
            truth.len()
        )));
    }
    let mut confusion = [[0usize; EVAL_LEVELS]; EVAL_LEVELS];
    for (&p, &t) in pred.iter().zip(truth) {
        if p >= EVAL_LEVELS || t >= EVAL_LEVELS {
            return Err(Error::Domain(format!("label out of range: pred {p}, truth {t}")));
        }
        confusion[t][p] += 1;
    }
    let mut per_level = Vec::with_capacity(EVAL_LEVELS);
    let mut support = Vec::with_capacity(EVAL_LEVELS);
    for level in 0..EVAL_LEVELS {
        let tp = confusion[level][level];
        let fn_: usize = (0..EVAL_LEVELS).filter(|&j| j != level).map(|j| confusion[level][j]).sum();
        let fp: usize = (0..EVAL_LEVELS).filter(|&i| i != level).map(|i| confusion[i][level]).sum();
        support.push(tp + fn_);
        if tp + fn_ + fp == 0 {
            log::warn!("level {level} absent from predictions and truth; F1 set to 0");
            per_level.push(T::zero());
            continue;
        }
        let denom = 2 * tp + fp + fn_;
        let f1 = if denom == 0 {
            T::zero()
        } else {
            T::of(2.0 * tp as f64 / denom as f64)
        };
        per_level.push(f1);
    }
    let macro_f1 = per_level.iter().copied().sum::<T>() / T::of(EVAL_LEVELS as f64);
    let total: usize = support.iter().sum();
    let weighted_f1 = if total == 0 {
        T::zero()
    } else {
        per_level
            .iter()
            .zip(&support)
            .map(|(&f, &s)| f * T::of(s as f64 / total as f64))
            .sum()
    };
    Ok(F1Report {
        per_level,
        support,
        macro_f1,
        weighted_f1,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RmseReport<T> {
    /// RMSE over the subset at each true level; None when the level is
    /// absent.
    pub per_level: Vec<Option<T>>,
    pub overall: T,
}

/// RMSE of predicted versus true ratios, split by the true level.
pub fn rmse_by_level<T: Real>(
    pred: &[T],
    truth: &[T],
    thresholds: &LevelThresholds<T>,
) -> Result<RmseReport<T>> {
    if pred.len() != truth.len() || pred.is_empty() {
        return Err(Error::Dimension(format!(
            "{} predictions vs {} truth ratios",
            pred.len(),
            truth.len()
        )));
    }
    let mut sse = [T::zero(); EVAL_LEVELS];
    let mut counts = [0usize; EVAL_LEVELS];
    let mut total_sse = T::zero();
    for (&p, &t) in pred.iter().zip(truth) {
        let level = thresholds.classify(t);
        let e = (p - t) * (p - t);
        sse[level] = sse[level] + e;
        counts[level] += 1;
        total_sse = total_sse + e;
    }
    let per_level = sse
        .iter()
        .zip(&counts)
        .map(|(&s, &c)| (c > 0).then(|| (s / T::of(c as f64)).sqrt()))
        .collect();
    let overall = (total_sse / T::of(pred.len() as f64)).sqrt();
    Ok(RmseReport { per_level, overall })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterMapping<T> {
    /// Level assigned to each center-ordered cluster.
    pub level_of_cluster: Vec<usize>,
    pub report: F1Report<T>,
}

/// Map center-ordered cluster labels onto the three ordered levels by
/// exhaustive search over order-preserving surjections, maximizing macro F1
/// (weighted F1 breaks ties). Cluster label ids must already be ordered by
/// center, which the clustering baselines guarantee.
pub fn map_clusters<T: Real>(
    cluster_labels: &[usize],
    truth_labels: &[usize],
    k: usize,
) -> Result<ClusterMapping<T>> {
    if k > 8 {
        return Err(Error::Domain(format!("at most 8 clusters supported, got {k}")));
    }
    if cluster_labels.iter().any(|&c| c >= k) {
        return Err(Error::Domain("cluster label out of range".into()));
    }
    if k < EVAL_LEVELS {
        // identity padding: clusters map to the first k levels
        let mapping: Vec<usize> = (0..k).collect();
        let pred: Vec<usize> = cluster_labels.iter().map(|&c| mapping[c]).collect();
        let report = f1_report(&pred, truth_labels)?;
        return Ok(ClusterMapping {
            level_of_cluster: mapping,
            report,
        });
    }

    // order-preserving surjections = choices of 2 cut positions among k-1 gaps
    let mut best: Option<ClusterMapping<T>> = None;
    for cut1 in 1..k {
        for cut2 in cut1 + 1..k {
            let mapping: Vec<usize> = (0..k)
                .map(|c| {
                    if c < cut1 {
                        0
                    } else if c < cut2 {
                        1
                    } else {
                        2
                    }
                })
                .collect();
            let pred: Vec<usize> = cluster_labels.iter().map(|&c| mapping[c]).collect();
            let report = f1_report::<T>(&pred, truth_labels)?;
            let better = match &best {
                None => true,
                Some(b) => {
                    report.macro_f1 > b.report.macro_f1
                        || (report.macro_f1 == b.report.macro_f1
                            && report.weighted_f1 > b.report.weighted_f1)
                }
            };
            if better {
                best = Some(ClusterMapping {
                    level_of_cluster: mapping,
                    report,
                });
            }
        }
    }
    Ok(best.expect("k >= 3 yields at least one mapping"))
}

/// Percentage error of estimated dynamic capacities against ground truth.
/// A zero true capacity yields None (undefined).
pub fn capacity_error<T: Real>(
    params: &DisaggregatorParams<T>,
    true_plug_dynamic: T,
    true_light_dynamic: T,
) -> (Option<T>, Option<T>) {
    let eff = params.effective();
    let pct = |est: T, truth: T| {
        (truth != T::zero()).then(|| T::of(100.0) * (est - truth) / truth)
    };
    (
        pct(eff.plug_dynamic, true_plug_dynamic),
        pct(eff.light_dynamic, true_light_dynamic),
    )
}

/// R-squared of the occupancy-gated spline predictions against observed
/// (or generator-truth) weather-driven loads.
///
/// `align_offset` removes the single shared offset both gates can absorb
/// from the occupant base loads (the gate DIFFERENCE is identifiable, the
/// common level is not); it subtracts the mean residual before scoring.
pub fn es_r2<T: Real>(
    params: &DisaggregatorParams<T>,
    temps: &[T],
    hvac_loads: &[T],
    occupied: &[bool],
    align_offset: bool,
) -> Result<T> {
    if temps.len() != hvac_loads.len() || temps.len() != occupied.len() || temps.is_empty() {
        return Err(Error::Dimension("misaligned R-squared inputs".into()));
    }
    let n = T::from_usize(temps.len()).unwrap();
    let mut pred: Vec<T> = temps
        .iter()
        .zip(occupied)
        .map(|(&t, &occ)| {
            let (b0, b1) = params.gate_values(t);
            if occ {
                b1
            } else {
                b0
            }
        })
        .collect();
    if align_offset {
        let shift = pred
            .iter()
            .zip(hvac_loads)
            .map(|(&p, &y)| p - y)
            .sum::<T>()
            / n;
        for p in pred.iter_mut() {
            *p = *p - shift;
        }
    }
    let mean_y = hvac_loads.iter().copied().sum::<T>() / n;
    let mut sse = T::zero();
    let mut sst = T::zero();
    for (&p, &y) in pred.iter().zip(hvac_loads) {
        sse = sse + (y - p) * (y - p);
        sst = sst + (y - mean_y) * (y - mean_y);
    }
    if sst <= T::zero() {
        return Err(Error::Degenerate("constant target has no variance to explain".into()));
    }
    Ok(T::one() - sse / sst)
}

/// Normalize occupant counts into ratios by the 99.9% quantile (linear
/// interpolation between order statistics), clipping at 1.
pub fn normalize_counts<T: Real>(counts: &[T]) -> Result<Vec<T>> {
    if counts.iter().any(|&c| c < T::zero()) {
        return Err(Error::Domain("counts must be non-negative".into()));
    }
    let q = quantile(counts, 0.999)?;
    if q <= T::zero() {
        return Err(Error::Degenerate("all-zero counts cannot be normalized".into()));
    }
    Ok(counts
        .iter()
        .map(|&c| {
            let r = c / q;
            if r > T::one() {
                T::one()
            } else {
                r
            }
        })
        .collect())
}

/// Quantile by linear interpolation between order statistics.
pub fn quantile<T: Real>(values: &[T], q: f64) -> Result<T> {
    if values.is_empty() {
        return Err(Error::Data("quantile of empty input".into()));
    }
    let mut sorted: Vec<T> = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = T::of(pos - lo as f64);
    Ok(sorted[lo] + frac * (sorted[hi] - sorted[lo]))
}
