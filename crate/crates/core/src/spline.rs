//! Clamped uniform B-spline bases used as the learnable energy-signature
//! activations of the weather module.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::num::{clamp, Real};

/// Configuration of one spline layer: polynomial order (degree), normalized
/// input domain and number of uniform grid intervals. The basis has
/// `grid_count + order` functions and forms a partition of unity on the
/// domain thanks to the clamped knots.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplineConfig<T> {
    pub order: usize,
    pub domain: (T, T),
    pub grid_count: usize,
}

impl<T: Real> Default for SplineConfig<T> {
    /// Parabolic splines on the normalized range [-2, 2] with 5 grids.
    fn default() -> Self {
        Self {
            order: 2,
            domain: (T::of(-2.0), T::of(2.0)),
            grid_count: 5,
        }
    }
}

impl<T: Real> SplineConfig<T> {
    pub fn validate(&self) -> Result<()> {
        if self.order == 0 {
            return Err(Error::Domain("spline order must be at least 1".into()));
        }
        if self.grid_count == 0 {
            return Err(Error::Domain("spline needs at least one grid interval".into()));
        }
        if self.domain.0 >= self.domain.1 {
            return Err(Error::Domain("spline domain must be non-empty".into()));
        }
        Ok(())
    }

    pub fn basis_count(&self) -> usize {
        self.grid_count + self.order
    }

    /// Clamped knot vector: domain ends repeated `order + 1` times around
    /// the uniform interior breakpoints.
    pub fn knots(&self) -> Vec<T> {
        let (lo, hi) = self.domain;
        let g = T::from_usize(self.grid_count).unwrap();
        let mut knots = Vec::with_capacity(self.basis_count() + self.order + 1);
        for _ in 0..=self.order {
            knots.push(lo);
        }
        for i in 1..self.grid_count {
            let f = T::from_usize(i).unwrap() / g;
            knots.push(lo + f * (hi - lo));
        }
        for _ in 0..=self.order {
            knots.push(hi);
        }
        knots
    }
}

/// Evaluate all basis functions at `x` (clipped to the domain). Returns
/// `basis_count()` non-negative values summing to 1.
pub fn bspline_basis<T: Real>(x: T, cfg: &SplineConfig<T>) -> Vec<T> {
    let n_basis = cfg.basis_count();
    let p = cfg.order;
    let knots = cfg.knots();
    let x = clamp(x, cfg.domain.0, cfg.domain.1);

    let span = find_span(x, p, &knots, n_basis);

    // triangular recurrence over the p+1 non-vanishing functions
    let mut vals = vec![T::zero(); p + 1];
    vals[0] = T::one();
    let mut left = vec![T::zero(); p + 1];
    let mut right = vec![T::zero(); p + 1];
    for j in 1..=p {
        left[j] = x - knots[span + 1 - j];
        right[j] = knots[span + j] - x;
        let mut saved = T::zero();
        for r in 0..j {
            let temp = vals[r] / (right[r + 1] + left[j - r]);
            vals[r] = saved + right[r + 1] * temp;
            saved = left[j - r] * temp;
        }
        vals[j] = saved;
    }

    let mut basis = vec![T::zero(); n_basis];
    for (i, &v) in vals.iter().enumerate() {
        basis[span - p + i] = v;
    }
    basis
}

/// Spline value: coefficient vector dotted with the basis at `x`.
pub fn spline_value<T: Real>(coeffs: &[T], x: T, cfg: &SplineConfig<T>) -> Result<T> {
    if coeffs.len() != cfg.basis_count() {
        return Err(Error::Dimension(format!(
            "{} coefficients for {} basis functions",
            coeffs.len(),
            cfg.basis_count()
        )));
    }
    let basis = bspline_basis(x, cfg);
    Ok(coeffs.iter().zip(&basis).map(|(&c, &b)| c * b).sum())
}

fn find_span<T: Real>(x: T, p: usize, knots: &[T], n_basis: usize) -> usize {
    if x >= knots[n_basis] {
        return n_basis - 1;
    }
    if x <= knots[p] {
        return p;
    }
    let (mut lo, mut hi) = (p, n_basis);
    while hi - lo > 1 {
        let mid = (lo + hi) / 2;
        if x < knots[mid] {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    lo
}
