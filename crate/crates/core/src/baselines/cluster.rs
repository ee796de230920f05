//! Scalar K-means and Gaussian-mixture clustering with deterministic
//! seeding. Outputs are canonicalized by ascending center so labels are
//! stable across runs.

use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::num::Real;

#[derive(Debug, Clone, PartialEq)]
pub struct KmeansResult<T> {
    pub centers: Vec<T>,
    pub labels: Vec<usize>,
    pub inertia: T,
}

const KMEANS_TOL: f64 = 1e-6;
const KMEANS_MAX_ITERS: usize = 300;

fn distinct_count<T: Real>(values: &[T]) -> usize {
    let mut sorted: Vec<T> = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    sorted.dedup_by(|a, b| a == b);
    sorted.len()
}

/// One K-means run: k-means++ seeding then Lloyd iterations until the
/// largest center shift drops below 1e-6 or 300 iterations pass.
pub fn kmeans_1d<T: Real, R: Rng>(values: &[T], k: usize, rng: &mut R) -> Result<KmeansResult<T>> {
    if k == 0 {
        return Err(Error::Domain("k must be positive".into()));
    }
    if distinct_count(values) < k {
        return Err(Error::Degenerate(format!(
            "{k} clusters requested but fewer distinct values present"
        )));
    }

    // k-means++ seeding
    let mut centers: Vec<T> = Vec::with_capacity(k);
    centers.push(values[rng.gen_range(0..values.len())]);
    let mut d2: Vec<T> = values
        .iter()
        .map(|&x| (x - centers[0]) * (x - centers[0]))
        .collect();
    while centers.len() < k {
        let total: T = d2.iter().copied().sum();
        let next = if total > T::zero() {
            let weights: Vec<f64> = d2.iter().map(|d| d.to_f64_lossy()).collect();
            let idx = WeightedIndex::new(&weights)
                .map_err(|e| Error::Degenerate(format!("k-means++ seeding failed: {e}")))?
                .sample(rng);
            values[idx]
        } else {
            // all points sit on chosen centers; pick any value not yet used
            *values
                .iter()
                .find(|&&x| !centers.contains(&x))
                .expect("distinct count checked above")
        };
        centers.push(next);
        for (d, &x) in d2.iter_mut().zip(values) {
            let cand = (x - next) * (x - next);
            if cand < *d {
                *d = cand;
            }
        }
    }

    let mut labels = vec![0usize; values.len()];
    for _ in 0..KMEANS_MAX_ITERS {
        for (l, &x) in labels.iter_mut().zip(values) {
            let mut best = 0;
            let mut best_d = (x - centers[0]).abs();
            for (j, &c) in centers.iter().enumerate().skip(1) {
                let d = (x - c).abs();
                if d < best_d {
                    best = j;
                    best_d = d;
                }
            }
            *l = best;
        }
        let mut sums = vec![T::zero(); k];
        let mut counts = vec![0usize; k];
        for (&l, &x) in labels.iter().zip(values) {
            sums[l] = sums[l] + x;
            counts[l] += 1;
        }
        let mut shift = T::zero();
        for j in 0..k {
            let new_c = if counts[j] > 0 {
                sums[j] / T::from_usize(counts[j]).unwrap()
            } else {
                // reassign an empty cluster to the point farthest from its center
                let far = values
                    .iter()
                    .zip(&labels)
                    .max_by(|(a, la), (b, lb)| {
                        let da = (**a - centers[**la]).abs();
                        let db = (**b - centers[**lb]).abs();
                        da.partial_cmp(&db).unwrap()
                    })
                    .map(|(&x, _)| x)
                    .unwrap();
                far
            };
            let d = (new_c - centers[j]).abs();
            if d > shift {
                shift = d;
            }
            centers[j] = new_c;
        }
        if shift < T::of(KMEANS_TOL) {
            break;
        }
    }

    // canonicalize by ascending center
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| centers[a].partial_cmp(&centers[b]).unwrap());
    let mut remap = vec![0usize; k];
    for (new, &old) in order.iter().enumerate() {
        remap[old] = new;
    }
    let centers: Vec<T> = order.iter().map(|&j| centers[j]).collect();
    let labels: Vec<usize> = labels.iter().map(|&l| remap[l]).collect();
    let inertia = values
        .iter()
        .zip(&labels)
        .map(|(&x, &l)| (x - centers[l]) * (x - centers[l]))
        .sum();
    Ok(KmeansResult {
        centers,
        labels,
        inertia,
    })
}

/// Deterministically seeded K-means baseline over a (detrended) load
/// series. Requires at least 10 observations per cluster.
pub fn kmeans_levels<T: Real>(values: &[T], k: usize, seed: u64) -> Result<KmeansResult<T>> {
    if k < 2 {
        return Err(Error::Domain("baseline clustering needs k >= 2".into()));
    }
    if values.len() < 10 * k {
        return Err(Error::Data(format!(
            "{} observations are too few for {k} clusters (need {})",
            values.len(),
            10 * k
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    kmeans_1d(values, k, &mut rng)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GmmResult<T> {
    pub weights: Vec<T>,
    pub means: Vec<T>,
    pub variances: Vec<T>,
    /// Per-point soft assignments, row-normalized.
    pub responsibilities: Vec<Vec<T>>,
    /// Hard labels (argmax responsibility).
    pub labels: Vec<usize>,
    /// Total log-likelihood after each EM iteration.
    pub loglik_trace: Vec<T>,
}

const GMM_TOL: f64 = 1e-7;
const GMM_MAX_ITERS: usize = 500;
const LN_2PI: f64 = 1.837877066409345483560659472811;

/// Scalar Gaussian-mixture clustering via EM, initialized from K-means.
pub fn gmm_levels<T: Real>(values: &[T], k: usize, seed: u64) -> Result<GmmResult<T>> {
    let km = kmeans_levels(values, k, seed)?;
    let n = values.len();
    let n_f = T::from_usize(n).unwrap();
    let data_var = {
        let mean = values.iter().copied().sum::<T>() / n_f;
        values.iter().map(|&x| (x - mean) * (x - mean)).sum::<T>() / n_f
    };
    let var_floor = data_var * T::of(1e-6) + T::of(1e-12);

    let mut means = km.centers.clone();
    let mut weights = vec![T::zero(); k];
    let mut variances = vec![T::zero(); k];
    let mut counts = vec![T::zero(); k];
    for (&x, &l) in values.iter().zip(&km.labels) {
        counts[l] = counts[l] + T::one();
        variances[l] = variances[l] + (x - means[l]) * (x - means[l]);
    }
    for j in 0..k {
        weights[j] = counts[j] / n_f;
        variances[j] = (variances[j] / counts[j].max(T::one())).max(var_floor);
    }

    let mut resp = vec![vec![T::zero(); k]; n];
    let mut loglik_trace = Vec::new();
    let half = T::of(0.5);
    let ln_2pi = T::of(LN_2PI);
    for _ in 0..GMM_MAX_ITERS {
        // E step
        let mut ll = T::zero();
        for (i, &x) in values.iter().enumerate() {
            let mut log_terms = vec![T::neg_infinity(); k];
            for j in 0..k {
                if weights[j] > T::zero() {
                    let z = x - means[j];
                    log_terms[j] = weights[j].ln()
                        - half * (ln_2pi + variances[j].ln())
                        - z * z / (T::of(2.0) * variances[j]);
                }
            }
            let lse = crate::num::logsumexp(&log_terms);
            ll = ll + lse;
            for j in 0..k {
                resp[i][j] = (log_terms[j] - lse).exp();
            }
        }
        let converged = loglik_trace
            .last()
            .is_some_and(|&prev: &T| (ll - prev).abs() < T::of(GMM_TOL));
        loglik_trace.push(ll);
        if converged {
            break;
        }
        // M step
        for j in 0..k {
            let nj: T = resp.iter().map(|r| r[j]).sum();
            if nj <= T::zero() {
                continue;
            }
            weights[j] = nj / n_f;
            means[j] = resp
                .iter()
                .zip(values)
                .map(|(r, &x)| r[j] * x)
                .sum::<T>()
                / nj;
            variances[j] = (resp
                .iter()
                .zip(values)
                .map(|(r, &x)| r[j] * (x - means[j]) * (x - means[j]))
                .sum::<T>()
                / nj)
                .max(var_floor);
        }
    }

    // canonicalize by ascending mean
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| means[a].partial_cmp(&means[b]).unwrap());
    let weights: Vec<T> = order.iter().map(|&j| weights[j]).collect();
    let variances_s: Vec<T> = order.iter().map(|&j| variances[j]).collect();
    let means_s: Vec<T> = order.iter().map(|&j| means[j]).collect();
    let resp: Vec<Vec<T>> = resp
        .iter()
        .map(|r| order.iter().map(|&j| r[j]).collect())
        .collect();
    let labels = resp
        .iter()
        .map(|r: &Vec<T>| {
            r.iter()
                .enumerate()
                .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                .unwrap()
                .0
        })
        .collect();
    Ok(GmmResult {
        weights,
        means: means_s,
        variances: variances_s,
        responsibilities: resp,
        labels,
        loglik_trace,
    })
}
