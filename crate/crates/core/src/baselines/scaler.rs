//! Linear min-max scaling of load into an occupancy ratio.

use crate::error::{Error, Result};
use crate::num::{clamp, Real};

/// Scale a load series into [0, z_max] by its own min/max range.
pub fn linear_scaler<T: Real>(loads: &[T], z_max: T) -> Result<Vec<T>> {
    let (min, max) = loads.iter().fold((T::infinity(), T::neg_infinity()), |(lo, hi), &x| {
        (if x < lo { x } else { lo }, if x > hi { x } else { hi })
    });
    if max <= min || !max.is_finite() || !min.is_finite() {
        return Err(Error::Degenerate(
            "constant load series cannot be scaled".into(),
        ));
    }
    Ok(loads
        .iter()
        .map(|&p| clamp(z_max * (p - min) / (max - min), T::zero(), T::one()))
        .collect())
}

#[derive(Debug, Clone)]
pub struct ScalerSweep<T> {
    pub best_z_max: T,
    /// (z_max, overall RMSE) for every grid point.
    pub table: Vec<(T, T)>,
}

/// Evaluate the scaler on a grid of z_max values against ground truth and
/// return the RMSE-minimizing choice.
pub fn scaler_sweep<T: Real>(loads: &[T], truth: &[T], grid: &[T]) -> Result<ScalerSweep<T>> {
    if loads.len() != truth.len() {
        return Err(Error::Dimension(format!(
            "{} loads vs {} truth values",
            loads.len(),
            truth.len()
        )));
    }
    if grid.is_empty() {
        return Err(Error::Domain("empty z_max grid".into()));
    }
    let n = T::from_usize(loads.len()).unwrap();
    let mut table = Vec::with_capacity(grid.len());
    let mut best = (grid[0], T::infinity());
    for &z in grid {
        let pred = linear_scaler(loads, z)?;
        let sse: T = pred
            .iter()
            .zip(truth)
            .map(|(&p, &t)| (p - t) * (p - t))
            .sum();
        let rmse = (sse / n).sqrt();
        table.push((z, rmse));
        if rmse < best.1 {
            best = (z, rmse);
        }
    }
    Ok(ScalerSweep {
        best_z_max: best.0,
        table,
    })
}

/// The default z_max sweep grid: 0.7 to 1.0 in steps of 0.05.
pub fn default_zmax_grid<T: Real>() -> Vec<T> {
    (0..7).map(|i| T::of(0.7 + 0.05 * i as f64)).collect()
}
