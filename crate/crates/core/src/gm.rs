//! Scalar Gaussian-mixture algebra.
//!
//! Occupancy proxies and every load quantity in this crate are
//! one-dimensional Gaussian mixtures whose components stay aligned with the
//! occupancy levels. All transformations here are closed over that family:
//! affine maps, per-component mean shifts, component-aligned sums, the
//! binary-occupancy collapse, and a log-sum-exp log-density.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::levels::{prob_sum_tol, LevelSet, VARIANCE_FLOOR};
use crate::num::{logsumexp, Real};

const LN_2PI: f64 = 1.837877066409345483560659472811;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianMixture1D<T> {
    weights: Vec<T>,
    means: Vec<T>,
    variances: Vec<T>,
}

impl<T: Real> GaussianMixture1D<T> {
    /// Build a mixture, validating the invariants. Variances are clamped
    /// to the global floor.
    pub fn new(weights: Vec<T>, means: Vec<T>, variances: Vec<T>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::Dimension("mixture needs at least one component".into()));
        }
        if weights.len() != means.len() || weights.len() != variances.len() {
            return Err(Error::Dimension(format!(
                "component arrays disagree: {} weights, {} means, {} variances",
                weights.len(),
                means.len(),
                variances.len()
            )));
        }
        if weights.iter().any(|&w| w < T::zero()) {
            return Err(Error::Domain("negative mixture weight".into()));
        }
        let sum: T = weights.iter().copied().sum();
        if (sum - T::one()).abs() > prob_sum_tol::<T>() {
            return Err(Error::Domain(format!("weights sum to {sum}, expected 1")));
        }
        let floor = T::of(VARIANCE_FLOOR);
        let variances = variances
            .into_iter()
            .map(|v| if v > floor { v } else { floor })
            .collect();
        Ok(Self {
            weights,
            means,
            variances,
        })
    }

    /// GM proxy of a categorical level distribution: component k carries
    /// the level's probability mass, with mean/variance from the level
    /// geometry.
    pub fn from_categorical(probs: &[T], levels: &LevelSet<T>) -> Result<Self> {
        if probs.len() != levels.count() {
            return Err(Error::Dimension(format!(
                "{} probabilities for {} levels",
                probs.len(),
                levels.count()
            )));
        }
        let means = (0..levels.count()).map(|k| levels.component_mean(k)).collect();
        let variances = (0..levels.count())
            .map(|k| levels.component_variance(k))
            .collect();
        Self::new(probs.to_vec(), means, variances)
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    pub fn means(&self) -> &[T] {
        &self.means
    }

    pub fn variances(&self) -> &[T] {
        &self.variances
    }

    /// scale * X + offset on every component; weights unchanged.
    pub fn affine(&self, scale: T, offset: T) -> Result<Self> {
        if scale < T::zero() {
            return Err(Error::Domain(format!("negative affine scale {scale}")));
        }
        let means = self.means.iter().map(|&m| scale * m + offset).collect();
        let variances = self.variances.iter().map(|&v| scale * scale * v).collect();
        Self::new(self.weights.clone(), means, variances)
    }

    /// Add a per-component shift to the means; weights and variances
    /// unchanged.
    pub fn shift_components(&self, shifts: &[T]) -> Result<Self> {
        if shifts.len() != self.len() {
            return Err(Error::Dimension(format!(
                "{} shifts for {} components",
                shifts.len(),
                self.len()
            )));
        }
        let means = self
            .means
            .iter()
            .zip(shifts)
            .map(|(&m, &s)| m + s)
            .collect();
        Self::new(self.weights.clone(), means, self.variances.clone())
    }

    /// Add a constant to every component variance.
    pub fn add_variance(&self, extra: T) -> Result<Self> {
        if extra < T::zero() {
            return Err(Error::Domain("added variance must be non-negative".into()));
        }
        let variances = self.variances.iter().map(|&v| v + extra).collect();
        Self::new(self.weights.clone(), self.means.clone(), variances)
    }

    /// Sum of independent mixtures that share the same component weights:
    /// component-wise mean and variance sums under the common weights.
    pub fn sum_aligned(mixtures: &[&Self]) -> Result<Self> {
        let first = mixtures
            .first()
            .ok_or_else(|| Error::Dimension("empty mixture sum".into()))?;
        let k = first.len();
        let tol = prob_sum_tol::<T>();
        for gm in &mixtures[1..] {
            if gm.len() != k {
                return Err(Error::Alignment(format!(
                    "component counts differ: {} vs {k}",
                    gm.len()
                )));
            }
            for (a, b) in gm.weights.iter().zip(&first.weights) {
                if (*a - *b).abs() > tol {
                    return Err(Error::Alignment(
                        "mixtures do not share component weights".into(),
                    ));
                }
            }
        }
        let mut means = vec![T::zero(); k];
        let mut variances = vec![T::zero(); k];
        for gm in mixtures {
            for i in 0..k {
                means[i] = means[i] + gm.means[i];
                variances[i] = variances[i] + gm.variances[i];
            }
        }
        Self::new(first.weights.clone(), means, variances)
    }

    /// Binary-occupancy approximation: keep the zero-level component,
    /// overwrite every other component with the mean and variance of the
    /// full-occupancy (last) component. Weights unchanged.
    pub fn binary_collapse(&self, levels: &LevelSet<T>) -> Result<Self> {
        if self.len() < 2 {
            return Err(Error::Domain(
                "binary collapse needs at least two components".into(),
            ));
        }
        if self.len() != levels.count() {
            return Err(Error::Dimension(format!(
                "mixture has {} components for {} levels",
                self.len(),
                levels.count()
            )));
        }
        let full = self.len() - 1;
        let mut means = self.means.clone();
        let mut variances = self.variances.clone();
        for k in 1..full {
            means[k] = self.means[full];
            variances[k] = self.variances[full];
        }
        Self::new(self.weights.clone(), means, variances)
    }

    /// log p(x) via log-sum-exp over the component log-densities.
    pub fn logpdf(&self, x: T) -> T {
        let ln_2pi = T::of(LN_2PI);
        let half = T::of(0.5);
        let terms: Vec<T> = self
            .weights
            .iter()
            .zip(&self.means)
            .zip(&self.variances)
            .filter(|((&w, _), _)| w > T::zero())
            .map(|((&w, &m), &v)| {
                let z = x - m;
                w.ln() - half * (ln_2pi + v.ln()) - z * z / (T::of(2.0) * v)
            })
            .collect();
        logsumexp(&terms)
    }

    /// Mixture mean.
    pub fn mean(&self) -> T {
        self.weights
            .iter()
            .zip(&self.means)
            .map(|(&w, &m)| w * m)
            .sum()
    }

    /// Mixture variance (law of total variance).
    pub fn variance(&self) -> T {
        let mean = self.mean();
        self.weights
            .iter()
            .zip(&self.means)
            .zip(&self.variances)
            .map(|((&w, &m), &v)| w * (v + m * m))
            .sum::<T>()
            - mean * mean
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn four_level() -> LevelSet<f64> {
        LevelSet::four_level()
    }

    #[test]
    fn proxy_from_one_hot_zero_level() {
        let gm =
            GaussianMixture1D::from_categorical(&[1.0, 0.0, 0.0, 0.0], &four_level()).unwrap();
        assert!((gm.mean() - 0.02).abs() < 1e-12);
        assert_eq!(gm.len(), 4);
    }

    #[test]
    fn proxy_interior_bin_variance() {
        let gm =
            GaussianMixture1D::from_categorical(&[0.0, 1.0, 0.0, 0.0], &four_level()).unwrap();
        assert!((gm.means()[1] - 1.0 / 3.0).abs() < 1e-12);
        assert!((gm.variances()[1] - 0.009259259259259259).abs() < 1e-9);
    }

    #[test]
    fn proxy_uniform_mean_is_mean_of_component_means() {
        let ls = four_level();
        let gm = GaussianMixture1D::from_categorical(&[0.25f64; 4], &ls).unwrap();
        let want = (0..4).map(|k| ls.component_mean(k)).sum::<f64>() / 4.0;
        assert!((gm.mean() - want).abs() < 1e-12);
    }

    #[test]
    fn proxy_rejects_length_mismatch() {
        assert!(GaussianMixture1D::from_categorical(&[0.5, 0.5], &four_level()).is_err());
    }

    #[test]
    fn affine_scales_means_and_variances() {
        let gm = GaussianMixture1D::new(vec![1.0f64], vec![0.5], vec![0.01]).unwrap();
        let out = gm.affine(10.0, 2.0).unwrap();
        assert!((out.means()[0] - 7.0).abs() < 1e-12);
        assert!((out.variances()[0] - 1.0).abs() < 1e-12);

        let id = gm.affine(1.0, 0.0).unwrap();
        assert_eq!(id, gm);

        assert!(gm.affine(-1.0, 0.0).is_err());
    }

    #[test]
    fn affine_zero_scale_hits_variance_floor() {
        let gm = GaussianMixture1D::new(vec![1.0], vec![0.5], vec![0.01]).unwrap();
        let out = gm.affine(0.0, 3.0).unwrap();
        assert_eq!(out.means()[0], 3.0);
        assert_eq!(out.variances()[0], VARIANCE_FLOOR);
    }

    #[test]
    fn affine_composes() {
        let gm =
            GaussianMixture1D::from_categorical(&[0.1, 0.2, 0.3, 0.4], &four_level()).unwrap();
        let ab = gm.affine(2.0, 1.0).unwrap().affine(3.0, -0.5).unwrap();
        // 3(2x + 1) - 0.5 = 6x + 2.5
        let direct = gm.affine(6.0, 2.5).unwrap();
        for (a, b) in ab.means().iter().zip(direct.means()) {
            assert!((a - b).abs() < 1e-12);
        }
        for (a, b) in ab.variances().iter().zip(direct.variances()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn shift_components_moves_means_only() {
        let gm = GaussianMixture1D::new(vec![0.5, 0.5], vec![1.0, 2.0], vec![0.1, 0.2]).unwrap();
        let out = gm.shift_components(&[3.0, -1.0]).unwrap();
        assert_eq!(out.means(), &[4.0, 1.0]);
        assert_eq!(out.variances(), gm.variances());

        let id = gm.shift_components(&[0.0, 0.0]).unwrap();
        assert_eq!(id, gm);

        assert!(gm.shift_components(&[1.0]).is_err());
    }

    #[test]
    fn sum_aligned_adds_component_moments() {
        let a = GaussianMixture1D::new(vec![0.5, 0.5], vec![1.0, 5.0], vec![0.5, 0.5]).unwrap();
        let b = GaussianMixture1D::new(vec![0.5, 0.5], vec![2.0, 1.0], vec![0.5, 0.25]).unwrap();
        let s = GaussianMixture1D::sum_aligned(&[&a, &b]).unwrap();
        assert_eq!(s.means(), &[3.0, 6.0]);
        assert_eq!(s.variances(), &[1.0, 0.75]);

        let one = GaussianMixture1D::sum_aligned(&[&a]).unwrap();
        assert_eq!(one, a);
    }

    #[test]
    fn sum_aligned_rejects_weight_mismatch() {
        let a = GaussianMixture1D::new(vec![0.5, 0.5], vec![1.0, 5.0], vec![0.5, 0.5]).unwrap();
        let b = GaussianMixture1D::new(vec![0.4, 0.6], vec![2.0, 1.0], vec![0.5, 0.25]).unwrap();
        assert!(GaussianMixture1D::sum_aligned(&[&a, &b]).is_err());
    }

    #[test]
    fn binary_collapse_examples() {
        let ls = four_level();
        let gm = GaussianMixture1D::from_categorical(&[0.3, 0.2, 0.2, 0.3], &ls).unwrap();
        let c = gm.binary_collapse(&ls).unwrap();
        let want = 0.3 * ls.component_mean(0) + 0.7 * ls.component_mean(3);
        assert!((c.mean() - want).abs() < 1e-12);

        // all mass on the zero level: the distribution is unchanged even
        // though the zero-weight components are rewritten
        let zero = GaussianMixture1D::from_categorical(&[1.0, 0.0, 0.0, 0.0], &ls).unwrap();
        let cz = zero.binary_collapse(&ls).unwrap();
        assert_eq!(cz.weights(), zero.weights());
        assert!((cz.mean() - zero.mean()).abs() < 1e-12);
        for &x in &[0.0f64, 0.02, 0.5] {
            assert!((cz.logpdf(x) - zero.logpdf(x)).abs() < 1e-12);
        }

        let full = GaussianMixture1D::from_categorical(&[0.0, 0.0, 0.0, 1.0], &ls).unwrap();
        let cf = full.binary_collapse(&ls).unwrap();
        assert!((cf.mean() - ls.component_mean(3)).abs() < 1e-12);
    }

    #[test]
    fn logpdf_single_component_mode() {
        let var = 0.04;
        let gm = GaussianMixture1D::new(vec![1.0], vec![1.5], vec![var]).unwrap();
        let want = -0.5 * (2.0 * std::f64::consts::PI * var).ln();
        assert!((gm.logpdf(1.5) - want).abs() < 1e-12);
    }

    #[test]
    fn logpdf_duplicate_components_match_single() {
        let single = GaussianMixture1D::new(vec![1.0], vec![0.3], vec![0.09]).unwrap();
        let dup =
            GaussianMixture1D::new(vec![0.5, 0.5], vec![0.3, 0.3], vec![0.09, 0.09]).unwrap();
        for &x in &[-1.0f64, 0.0, 0.3, 2.5] {
            assert!((single.logpdf(x) - dup.logpdf(x)).abs() < 1e-12);
        }
    }

    #[test]
    fn logpdf_invariant_under_component_permutation() {
        let gm = GaussianMixture1D::new(
            vec![0.2, 0.3, 0.5],
            vec![0.0, 1.0, 2.0],
            vec![0.1, 0.2, 0.3],
        )
        .unwrap();
        let perm = GaussianMixture1D::new(
            vec![0.5, 0.2, 0.3],
            vec![2.0, 0.0, 1.0],
            vec![0.3, 0.1, 0.2],
        )
        .unwrap();
        for &x in &[-0.7f64, 0.4, 1.9] {
            assert!((gm.logpdf(x) - perm.logpdf(x)).abs() < 1e-12);
        }
    }
}
