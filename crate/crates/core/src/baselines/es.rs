//! Piecewise-linear energy signature with breakpoint search, used to strip
//! the weather-driven trend from lumped loads before clustering baselines.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::num::Real;

/// Continuous piecewise-linear load-versus-temperature model in hinge form:
/// `f(T) = intercept + base_slope * T + sum_i hinge_slopes[i] * max(0, T - b_i)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PiecewiseES<T> {
    pub breakpoints: Vec<T>,
    pub intercept: T,
    pub base_slope: T,
    pub hinge_slopes: Vec<T>,
}

/// Breakpoint search resolution in degrees Celsius.
pub const BREAKPOINT_GRID_STEP: f64 = 0.5;
/// Minimum observations required on each side of a candidate breakpoint.
const MIN_SEGMENT_POINTS: usize = 5;
const MIN_OBSERVATIONS: usize = 50;
const MIN_TEMP_SPAN: f64 = 5.0;

impl<T: Real> PiecewiseES<T> {
    pub fn predict(&self, temp: T) -> T {
        let mut y = self.intercept + self.base_slope * temp;
        for (&b, &s) in self.breakpoints.iter().zip(&self.hinge_slopes) {
            if temp > b {
                y = y + s * (temp - b);
            }
        }
        y
    }

    /// Slope of each segment, left to right (cumulative hinge sums).
    pub fn segment_slopes(&self) -> Vec<T> {
        let mut slopes = vec![self.base_slope];
        let mut acc = self.base_slope;
        for &s in &self.hinge_slopes {
            acc = acc + s;
            slopes.push(acc);
        }
        slopes
    }

    /// Minimum of the fitted curve over an observed temperature range; for
    /// a piecewise-linear curve it occurs at an endpoint or a breakpoint.
    pub fn min_over(&self, t_min: T, t_max: T) -> T {
        let mut candidates = vec![t_min, t_max];
        candidates.extend(self.breakpoints.iter().copied().filter(|&b| b > t_min && b < t_max));
        candidates
            .into_iter()
            .map(|t| self.predict(t))
            .fold(T::infinity(), |a, b| if b < a { b } else { a })
    }

    /// Residuals with the curve's minimum retained, so the occupant-driven
    /// base level survives detrending.
    pub fn detrend(&self, loads: &[T], temps: &[T]) -> Vec<T> {
        let (t_min, t_max) = min_max(temps);
        let floor = self.min_over(t_min, t_max);
        loads
            .iter()
            .zip(temps)
            .map(|(&p, &t)| p - (self.predict(t) - floor))
            .collect()
    }
}

fn min_max<T: Real>(xs: &[T]) -> (T, T) {
    xs.iter().fold((T::infinity(), T::neg_infinity()), |(lo, hi), &x| {
        (if x < lo { x } else { lo }, if x > hi { x } else { hi })
    })
}

/// Least squares for the hinge design at fixed breakpoints. Returns
/// (intercept, base_slope, hinge_slopes, sse).
fn hinge_least_squares<T: Real>(
    loads: &[T],
    temps: &[T],
    breakpoints: &[T],
) -> Option<(T, T, Vec<T>, T)> {
    let p = 2 + breakpoints.len();
    let n = loads.len();
    let feature = |t: T, j: usize| -> T {
        match j {
            0 => T::one(),
            1 => t,
            _ => {
                let b = breakpoints[j - 2];
                if t > b {
                    t - b
                } else {
                    T::zero()
                }
            }
        }
    };
    // normal equations
    let mut ata = vec![T::zero(); p * p];
    let mut atb = vec![T::zero(); p];
    for i in 0..n {
        let t = temps[i];
        for r in 0..p {
            let fr = feature(t, r);
            atb[r] = atb[r] + fr * loads[i];
            for c in r..p {
                ata[r * p + c] = ata[r * p + c] + fr * feature(t, c);
            }
        }
    }
    for r in 0..p {
        for c in 0..r {
            ata[r * p + c] = ata[c * p + r];
        }
    }
    let coeffs = solve_dense(&mut ata, &mut atb, p)?;
    let mut sse = T::zero();
    for i in 0..n {
        let mut pred = T::zero();
        for (j, &cj) in coeffs.iter().enumerate() {
            pred = pred + cj * feature(temps[i], j);
        }
        let r = loads[i] - pred;
        sse = sse + r * r;
    }
    Some((coeffs[0], coeffs[1], coeffs[2..].to_vec(), sse))
}

/// Gaussian elimination with partial pivoting on a small dense system.
fn solve_dense<T: Real>(a: &mut [T], b: &mut [T], p: usize) -> Option<Vec<T>> {
    for col in 0..p {
        let mut pivot = col;
        for r in col + 1..p {
            if a[r * p + col].abs() > a[pivot * p + col].abs() {
                pivot = r;
            }
        }
        if a[pivot * p + col].abs() < T::of(1e-12) {
            return None;
        }
        if pivot != col {
            for c in 0..p {
                a.swap(col * p + c, pivot * p + c);
            }
            b.swap(col, pivot);
        }
        let d = a[col * p + col];
        for r in col + 1..p {
            let f = a[r * p + col] / d;
            if f == T::zero() {
                continue;
            }
            for c in col..p {
                a[r * p + c] = a[r * p + c] - f * a[col * p + c];
            }
            b[r] = b[r] - f * b[col];
        }
    }
    let mut x = vec![T::zero(); p];
    for col in (0..p).rev() {
        let mut acc = b[col];
        for c in col + 1..p {
            acc = acc - a[col * p + c] * x[c];
        }
        x[col] = acc / a[col * p + col];
    }
    Some(x)
}

/// Fit the energy signature: grid search over 0..=max_breakpoints hinge
/// positions at 0.5 degree resolution, least squares per candidate, model
/// order selected by BIC.
pub fn fit_piecewise_es<T: Real>(
    loads: &[T],
    temps: &[T],
    max_breakpoints: usize,
) -> Result<PiecewiseES<T>> {
    if loads.len() != temps.len() {
        return Err(Error::Dimension(format!(
            "{} loads vs {} temperatures",
            loads.len(),
            temps.len()
        )));
    }
    if loads.len() < MIN_OBSERVATIONS {
        return Err(Error::Data(format!(
            "energy signature needs at least {MIN_OBSERVATIONS} observations, got {}",
            loads.len()
        )));
    }
    let (t_min, t_max) = min_max(temps);
    if (t_max - t_min).to_f64_lossy() < MIN_TEMP_SPAN {
        return Err(Error::Data(format!(
            "temperature span {:.2} below the required {MIN_TEMP_SPAN} degrees",
            (t_max - t_min).to_f64_lossy()
        )));
    }
    let max_breakpoints = max_breakpoints.min(2);

    // candidate breakpoints with enough data on both sides
    let step = T::of(BREAKPOINT_GRID_STEP);
    let mut grid = Vec::new();
    let mut b = t_min + step;
    while b < t_max {
        let below = temps.iter().filter(|&&t| t < b).count();
        let above = temps.len() - below;
        if below >= MIN_SEGMENT_POINTS && above >= MIN_SEGMENT_POINTS {
            grid.push(b);
        }
        b = b + step;
    }

    let n = loads.len();
    let n_f = T::from_usize(n).unwrap();
    let sse_floor = T::of(1e-18) * n_f;
    let bic = |sse: T, nb: usize| -> T {
        let p_eff = T::from_usize(2 + 2 * nb).unwrap();
        n_f * (sse.max(sse_floor) / n_f).ln() + p_eff * n_f.ln()
    };

    let mut best: Option<(T, PiecewiseES<T>)> = None;
    let mut consider = |bps: &[T]| {
        if let Some((intercept, base_slope, hinge_slopes, sse)) =
            hinge_least_squares(loads, temps, bps)
        {
            let score = bic(sse, bps.len());
            let better = match &best {
                Some((s, _)) => score < *s,
                None => true,
            };
            if better {
                best = Some((
                    score,
                    PiecewiseES {
                        breakpoints: bps.to_vec(),
                        intercept,
                        base_slope,
                        hinge_slopes,
                    },
                ));
            }
        }
    };

    consider(&[]);
    if max_breakpoints >= 1 {
        for &b1 in &grid {
            consider(&[b1]);
        }
    }
    if max_breakpoints >= 2 {
        for i in 0..grid.len() {
            for j in i + 1..grid.len() {
                consider(&[grid[i], grid[j]]);
            }
        }
    }
    Ok(best.expect("zero-breakpoint fit always exists").1)
}

/// Fit an ES and subtract the weather trend, keeping the curve minimum so
/// residuals retain the occupant-driven base level.
pub fn remove_weather_trend<T: Real>(loads: &[T], temps: &[T]) -> Result<(Vec<T>, PiecewiseES<T>)> {
    let es = fit_piecewise_es(loads, temps, 2)?;
    let residual = es.detrend(loads, temps);
    Ok((residual, es))
}
