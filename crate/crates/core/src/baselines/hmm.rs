//! Input-conditioned hidden Markov baseline: Gaussian emissions with one
//! transition matrix per (hour of day, day type) slot, tied across days and
//! fitted with Baum-Welch. Decoding returns forward-backward posteriors.

use serde::{Deserialize, Serialize};

use crate::baselines::cluster::kmeans_levels;
use crate::error::{Error, Result};
use crate::levels::{DayType, HOURS_PER_DAY};
use crate::num::Real;

/// Number of transition-matrix slots: 24 hours times 2 day types.
pub const TRANSITION_SLOTS: usize = 2 * HOURS_PER_DAY;

/// Slot of the transition that ARRIVES at a step with the given calendar.
pub fn slot_index(hour: usize, day_type: DayType) -> usize {
    let d = match day_type {
        DayType::Working => 0,
        DayType::NonWorking => 1,
    };
    d * HOURS_PER_DAY + hour
}

/// Prior transition template. States are ordered low to high occupancy;
/// each row distributes mass between staying, moving one state up and one
/// state down, with period-dependent values reflecting typical office
/// rhythms (night pull toward the lowest state, morning ramp up, evening
/// ramp down). Missing directions at the edges fold into staying.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HmmPrior {
    pub night_stay: f64,
    pub night_down: f64,
    pub morning_stay: f64,
    pub morning_up: f64,
    pub day_stay: f64,
    pub evening_stay: f64,
    pub evening_down: f64,
    /// Hours (inclusive) of the working-day morning ramp.
    pub morning_hours: (usize, usize),
    /// Hours (inclusive) of the working-day evening ramp.
    pub evening_hours: (usize, usize),
}

impl Default for HmmPrior {
    fn default() -> Self {
        Self {
            night_stay: 0.55,
            night_down: 0.40,
            morning_stay: 0.40,
            morning_up: 0.50,
            day_stay: 0.80,
            evening_stay: 0.40,
            evening_down: 0.50,
            morning_hours: (7, 9),
            evening_hours: (17, 19),
        }
    }
}

impl HmmPrior {
    /// (stay, up, down) template for a slot.
    fn template(&self, hour: usize, day_type: DayType) -> (f64, f64, f64) {
        let in_range = |r: (usize, usize)| hour >= r.0 && hour <= r.1;
        match day_type {
            DayType::Working if in_range(self.morning_hours) => {
                let stay = self.morning_stay;
                let up = self.morning_up;
                (stay, up, 1.0 - stay - up)
            }
            DayType::Working if in_range(self.evening_hours) => {
                let stay = self.evening_stay;
                let down = self.evening_down;
                (stay, 1.0 - stay - down, down)
            }
            DayType::Working if hour > self.morning_hours.1 && hour < self.evening_hours.0 => {
                let stay = self.day_stay;
                let rest = (1.0 - stay) / 2.0;
                (stay, rest, rest)
            }
            _ => {
                let stay = self.night_stay;
                let down = self.night_down;
                (stay, 1.0 - stay - down, down)
            }
        }
    }

    /// Build the full slot-indexed transition set for `n_states`.
    pub fn transitions<T: Real>(&self, n_states: usize) -> Vec<Vec<T>> {
        let eps = 1e-3;
        let mut slots = Vec::with_capacity(TRANSITION_SLOTS);
        for day_type in [DayType::Working, DayType::NonWorking] {
            for hour in 0..HOURS_PER_DAY {
                let (stay, up, down) = self.template(hour, day_type);
                let mut a = vec![0.0f64; n_states * n_states];
                for i in 0..n_states {
                    let mut stay_i = stay;
                    let up_i = if i + 1 < n_states { up } else { 0.0 };
                    let down_i = if i > 0 { down } else { 0.0 };
                    stay_i += (up - up_i) + (down - down_i);
                    a[i * n_states + i] = stay_i;
                    if i + 1 < n_states {
                        a[i * n_states + i + 1] = up_i;
                    }
                    if i > 0 {
                        a[i * n_states + i - 1] = down_i;
                    }
                    // smooth so every transition stays reachable
                    let row = &mut a[i * n_states..(i + 1) * n_states];
                    let total: f64 = row.iter().sum();
                    for v in row.iter_mut() {
                        *v = (*v / total) * (1.0 - eps * n_states as f64) + eps;
                    }
                }
                slots.push(a.into_iter().map(T::of).collect());
            }
        }
        slots
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HmmModel<T> {
    pub n_states: usize,
    pub initial: Vec<T>,
    /// Row-stochastic transition matrices, one per slot, flattened row-major.
    pub transitions: Vec<Vec<T>>,
    pub emission_means: Vec<T>,
    pub emission_vars: Vec<T>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HmmFitInfo<T> {
    pub iterations: usize,
    pub converged: bool,
    pub log_likelihood: T,
}

const HMM_MAX_ITERS: usize = 100;
const HMM_TOL: f64 = 1e-6;
const LN_2PI: f64 = 1.837877066409345483560659472811;

impl<T: Real> HmmModel<T> {
    /// Initial model: emissions from K-means on the observations, prior
    /// transition templates, initial distribution biased to the low state.
    pub fn initial_guess(
        obs: &[T],
        n_states: usize,
        prior: &HmmPrior,
        seed: u64,
    ) -> Result<Self> {
        if !(2..=8).contains(&n_states) {
            return Err(Error::Domain(format!(
                "n_states must be between 2 and 8, got {n_states}"
            )));
        }
        let km = kmeans_levels(obs, n_states, seed)?;
        let n_f = T::from_usize(obs.len()).unwrap();
        let data_var = {
            let mean = obs.iter().copied().sum::<T>() / n_f;
            obs.iter().map(|&x| (x - mean) * (x - mean)).sum::<T>() / n_f
        };
        let floor = data_var * T::of(1e-6) + T::of(1e-12);
        let mut vars = vec![T::zero(); n_states];
        let mut counts = vec![0usize; n_states];
        for (&x, &l) in obs.iter().zip(&km.labels) {
            vars[l] = vars[l] + (x - km.centers[l]) * (x - km.centers[l]);
            counts[l] += 1;
        }
        for j in 0..n_states {
            vars[j] = (vars[j] / T::from_usize(counts[j].max(1)).unwrap()).max(floor);
        }
        let mut initial = vec![T::of(0.3 / (n_states as f64 - 1.0)); n_states];
        initial[0] = T::of(0.7);
        Ok(Self {
            n_states,
            initial,
            transitions: prior.transitions(n_states),
            emission_means: km.centers,
            emission_vars: vars,
        })
    }

    fn emission_density(&self, x: T, j: usize) -> T {
        let z = x - self.emission_means[j];
        let var = self.emission_vars[j];
        let logp = -T::of(0.5) * (T::of(LN_2PI) + var.ln()) - z * z / (T::of(2.0) * var);
        // keep densities strictly positive so scaling never divides by zero
        logp.max(T::of(-700.0)).exp()
    }

    /// relabel states by ascending emission mean, permuting every matrix
    fn canonicalize(&mut self) {
        let n = self.n_states;
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| {
            self.emission_means[a]
                .partial_cmp(&self.emission_means[b])
                .unwrap()
        });
        if order.iter().enumerate().all(|(i, &j)| i == j) {
            return;
        }
        self.emission_means = order.iter().map(|&j| self.emission_means[j]).collect();
        self.emission_vars = order.iter().map(|&j| self.emission_vars[j]).collect();
        self.initial = order.iter().map(|&j| self.initial[j]).collect();
        for a in &mut self.transitions {
            let old = a.clone();
            for (new_i, &old_i) in order.iter().enumerate() {
                for (new_j, &old_j) in order.iter().enumerate() {
                    a[new_i * n + new_j] = old[old_i * n + old_j];
                }
            }
        }
    }
}

/// Scaled forward-backward. Returns (gamma, xi_sums per slot, log-likelihood).
/// `xi` accumulation can be skipped for plain decoding.
#[allow(clippy::type_complexity)]
fn forward_backward<T: Real>(
    model: &HmmModel<T>,
    obs: &[T],
    slots: &[usize],
    want_xi: bool,
) -> Result<(Vec<Vec<T>>, Option<Vec<Vec<T>>>, T)> {
    let n = model.n_states;
    let t_len = obs.len();
    if slots.len() != t_len {
        return Err(Error::Dimension(format!(
            "{} slots for {} observations",
            slots.len(),
            t_len
        )));
    }
    if t_len == 0 {
        return Err(Error::Data("empty observation sequence".into()));
    }

    let emit: Vec<Vec<T>> = obs
        .iter()
        .map(|&x| (0..n).map(|j| model.emission_density(x, j)).collect())
        .collect();

    let mut alpha = vec![vec![T::zero(); n]; t_len];
    let mut scale = vec![T::zero(); t_len];
    for j in 0..n {
        alpha[0][j] = model.initial[j] * emit[0][j];
    }
    scale[0] = alpha[0].iter().copied().sum();
    if scale[0] <= T::zero() {
        return Err(Error::Training("forward pass underflow at step 0".into()));
    }
    for j in 0..n {
        alpha[0][j] = alpha[0][j] / scale[0];
    }
    for t in 1..t_len {
        let a = &model.transitions[slots[t]];
        for j in 0..n {
            let mut acc = T::zero();
            for i in 0..n {
                acc = acc + alpha[t - 1][i] * a[i * n + j];
            }
            alpha[t][j] = acc * emit[t][j];
        }
        scale[t] = alpha[t].iter().copied().sum();
        if scale[t] <= T::zero() {
            return Err(Error::Training(format!("forward pass underflow at step {t}")));
        }
        for j in 0..n {
            alpha[t][j] = alpha[t][j] / scale[t];
        }
    }

    let mut beta = vec![vec![T::one(); n]; t_len];
    for t in (0..t_len - 1).rev() {
        let a = &model.transitions[slots[t + 1]];
        for i in 0..n {
            let mut acc = T::zero();
            for j in 0..n {
                acc = acc + a[i * n + j] * emit[t + 1][j] * beta[t + 1][j];
            }
            beta[t][i] = acc / scale[t + 1];
        }
    }

    let mut gamma = vec![vec![T::zero(); n]; t_len];
    for t in 0..t_len {
        let mut total = T::zero();
        for j in 0..n {
            gamma[t][j] = alpha[t][j] * beta[t][j];
            total = total + gamma[t][j];
        }
        for j in 0..n {
            gamma[t][j] = gamma[t][j] / total;
        }
    }

    let xi = want_xi.then(|| {
        let mut xi_slots = vec![vec![T::zero(); n * n]; TRANSITION_SLOTS];
        for t in 1..t_len {
            let a = &model.transitions[slots[t]];
            let bucket = &mut xi_slots[slots[t]];
            for i in 0..n {
                for j in 0..n {
                    bucket[i * n + j] = bucket[i * n + j]
                        + alpha[t - 1][i] * a[i * n + j] * emit[t][j] * beta[t][j] / scale[t];
                }
            }
        }
        xi_slots
    });

    let loglik = scale.iter().map(|&c| c.ln()).sum();
    Ok((gamma, xi, loglik))
}

/// Baum-Welch with time-inhomogeneous transitions. Returns best-so-far
/// parameters with a warning if 100 iterations pass without convergence.
pub fn hmm_fit<T: Real>(
    obs: &[T],
    slots: &[usize],
    init: HmmModel<T>,
) -> Result<(HmmModel<T>, HmmFitInfo<T>)> {
    let n = init.n_states;
    let n_obs = T::from_usize(obs.len()).unwrap();
    let data_var = {
        let mean = obs.iter().copied().sum::<T>() / n_obs;
        obs.iter().map(|&x| (x - mean) * (x - mean)).sum::<T>() / n_obs
    };
    let var_floor = data_var * T::of(1e-6) + T::of(1e-12);
    let pseudo = T::of(1e-3);

    let mut model = init;
    let mut best = model.clone();
    let mut best_ll = T::neg_infinity();
    let mut last_ll = T::neg_infinity();
    let mut converged = false;
    let mut iterations = 0;

    for iter in 0..HMM_MAX_ITERS {
        iterations = iter + 1;
        let (gamma, xi, ll) = forward_backward(&model, obs, slots, true)?;
        let xi = xi.expect("xi requested");
        if ll > best_ll {
            best_ll = ll;
            best = model.clone();
        }
        if (ll - last_ll).abs() < T::of(HMM_TOL) * (T::one() + ll.abs()) {
            converged = true;
            break;
        }
        last_ll = ll;

        // initial distribution
        model.initial = gamma[0].clone();

        // transitions per slot, smoothed toward the previous row when a
        // slot is rarely visited
        for (slot, bucket) in xi.iter().enumerate() {
            for i in 0..n {
                let row_total: T = (0..n).map(|j| bucket[i * n + j]).sum();
                if row_total <= T::of(1e-12) {
                    continue;
                }
                for j in 0..n {
                    let old = model.transitions[slot][i * n + j];
                    model.transitions[slot][i * n + j] =
                        (bucket[i * n + j] + pseudo * old) / (row_total + pseudo);
                }
            }
        }

        // emissions
        for j in 0..n {
            let nj: T = gamma.iter().map(|g| g[j]).sum();
            if nj <= T::zero() {
                continue;
            }
            let mean = gamma
                .iter()
                .zip(obs)
                .map(|(g, &x)| g[j] * x)
                .sum::<T>()
                / nj;
            let var = gamma
                .iter()
                .zip(obs)
                .map(|(g, &x)| g[j] * (x - mean) * (x - mean))
                .sum::<T>()
                / nj;
            model.emission_means[j] = mean;
            model.emission_vars[j] = var.max(var_floor);
        }
    }

    if !converged {
        log::warn!("Baum-Welch did not converge in {HMM_MAX_ITERS} iterations; returning best-so-far");
        model = best;
        model.canonicalize();
        return Ok((
            model,
            HmmFitInfo {
                iterations,
                converged: false,
                log_likelihood: best_ll,
            },
        ));
    }
    model.canonicalize();
    let info = HmmFitInfo {
        iterations,
        converged,
        log_likelihood: best_ll,
    };
    Ok((model, info))
}

/// Per-step posterior state probabilities via forward-backward.
pub fn hmm_decode<T: Real>(model: &HmmModel<T>, obs: &[T], slots: &[usize]) -> Result<Vec<Vec<T>>> {
    let (gamma, _, _) = forward_backward(model, obs, slots, false)?;
    Ok(gamma)
}
