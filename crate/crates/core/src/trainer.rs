//! Alternating two-step training.
//!
//! Step I scores every candidate profile of a day's type against the
//! observed loads of that day, keeps the top-K, and combines them with
//! softmax matching scores into the day's posterior. Step II holds the
//! posterior fixed and minimizes the variance-weighted negative
//! log-likelihood of the observed loads with Adam updates on the
//! disaggregator parameters.
//!
//! The scoring and loss paths share one moment computation
//! ([`total_component_moments`]) which is tested against the mixture-op
//! route, so there is a single forward semantics throughout.

use serde::{Deserialize, Serialize};

use crate::disaggregator::{
    total_component_moments, DisaggregatorParams, EffectiveParams, Scenario,
};
use crate::error::{Error, Result};
use crate::generator::CandidatePool;
use crate::levels::{CategoricalProfile, DayType, LevelSet, HOURS_PER_DAY, VARIANCE_FLOOR};
use crate::num::{logsumexp, Real};
use crate::series::BuildingSeries;
use crate::spline::bspline_basis;

const LN_2PI: f64 = 1.837877066409345483560659472811;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig<T> {
    pub top_k: usize,
    pub beta: T,
    pub epochs: usize,
    pub learning_rate: T,
    pub inner_iters: usize,
    /// Strength of the Gaussian anchor holding the four capacity
    /// parameters near their metadata initialization. The likelihood means
    /// are exactly flat along "lighting capacity vs occupied-gate offset",
    /// so the metadata prior is what pins that direction; 0 disables.
    pub capacity_anchor: T,
    /// Penalty keeping the occupied gate at or above the unoccupied gate
    /// everywhere on the spline domain (a setback reduces load); 0
    /// disables.
    pub gate_floor_weight: T,
    /// Penalty pulling the smallest occupied/unoccupied gap toward zero:
    /// a multiplicative setback makes the two signatures touch at the
    /// balance point; 0 disables.
    pub gate_contact_weight: T,
    pub seed: u64,
}

impl<T: Real> Default for TrainConfig<T> {
    fn default() -> Self {
        Self {
            top_k: 32,
            beta: T::of(0.5),
            epochs: 8,
            learning_rate: T::of(0.01),
            inner_iters: 200,
            capacity_anchor: T::of(0.1),
            gate_floor_weight: T::of(1.0),
            gate_contact_weight: T::of(0.1),
            seed: 0,
        }
    }
}

impl<T: Real> TrainConfig<T> {
    pub fn validate(&self) -> Result<()> {
        if self.top_k == 0 {
            return Err(Error::Domain("top_k must be at least 1".into()));
        }
        if self.epochs == 0 {
            return Err(Error::Domain("epochs must be at least 1".into()));
        }
        if self.learning_rate <= T::zero() {
            return Err(Error::Domain("learning_rate must be positive".into()));
        }
        if self.beta < T::zero() || self.beta > T::one() {
            return Err(Error::Domain("beta must lie in [0,1]".into()));
        }
        if self.capacity_anchor < T::zero()
            || self.gate_floor_weight < T::zero()
            || self.gate_contact_weight < T::zero()
        {
            return Err(Error::Domain("penalty weights must be non-negative".into()));
        }
        Ok(())
    }
}

/// Per-day, per-hour categorical posteriors over occupancy levels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorSeries<T> {
    profiles: Vec<CategoricalProfile<T>>,
}

impl<T: Real> PosteriorSeries<T> {
    pub fn new(profiles: Vec<CategoricalProfile<T>>) -> Self {
        Self { profiles }
    }

    pub fn profiles(&self) -> &[CategoricalProfile<T>] {
        &self.profiles
    }

    pub fn day_count(&self) -> usize {
        self.profiles.len()
    }

    /// Expected occupancy ratio for every hour, flattened across days.
    pub fn expected_ratios(&self, levels: &LevelSet<T>) -> Vec<T> {
        self.profiles
            .iter()
            .flat_map(|p| p.expected_ratios(levels))
            .collect()
    }

    /// Probability of the zero-occupancy level for every hour.
    pub fn zero_level_probs(&self) -> Vec<T> {
        self.profiles
            .iter()
            .flat_map(|p| p.steps().iter().map(|row| row[0]))
            .collect()
    }
}

pub struct TrainResult<T> {
    pub params: DisaggregatorParams<T>,
    pub posterior: PosteriorSeries<T>,
    /// Mean per-step expected negative log-likelihood recorded at the end
    /// of each epoch. The beta-weighted variant drives the updates, but its
    /// value is not comparable across epochs once the noise level moves, so
    /// the trace records the unweighted loss.
    pub loss_trace: Vec<T>,
    /// Wall-clock seconds spent in each epoch.
    pub epoch_seconds: Vec<f64>,
}

/// One day of aligned observations.
#[derive(Debug, Clone, Copy)]
pub struct DayData<'a, T> {
    pub loads: &'a [T],
    pub temps: Option<&'a [T]>,
}

impl<'a, T: Real> DayData<'a, T> {
    pub fn validate(&self, scenario: Scenario) -> Result<()> {
        if self.loads.len() != HOURS_PER_DAY {
            return Err(Error::Data(format!(
                "day slice has {} loads, expected {HOURS_PER_DAY}",
                self.loads.len()
            )));
        }
        if self.loads.iter().any(|l| !l.is_finite()) {
            return Err(Error::Data("day slice contains non-finite loads".into()));
        }
        match (scenario, self.temps) {
            (Scenario::Lumped, None) => {
                Err(Error::Data("lumped scenario requires temperatures".into()))
            }
            (Scenario::Lumped, Some(t)) if t.len() != HOURS_PER_DAY => Err(Error::Data(
                format!("day slice has {} temperatures, expected {HOURS_PER_DAY}", t.len()),
            )),
            _ => Ok(()),
        }
    }
}

/// Fixed per-level component moments shared by every proxy (only weights
/// vary between candidates).
struct LevelMoments<T> {
    means: Vec<T>,
    vars: Vec<T>,
    collapsed_means: Vec<T>,
    collapsed_vars: Vec<T>,
}

impl<T: Real> LevelMoments<T> {
    fn new(levels: &LevelSet<T>) -> Self {
        let floor = T::of(VARIANCE_FLOOR);
        let k = levels.count();
        let means: Vec<T> = (0..k).map(|j| levels.component_mean(j)).collect();
        let vars: Vec<T> = (0..k)
            .map(|j| levels.component_variance(j).max(floor))
            .collect();
        let mut collapsed_means = means.clone();
        let mut collapsed_vars = vars.clone();
        for j in 1..k.saturating_sub(1) {
            collapsed_means[j] = means[k - 1];
            collapsed_vars[j] = vars[k - 1];
        }
        Self {
            means,
            vars,
            collapsed_means,
            collapsed_vars,
        }
    }
}

/// Precomputed series-side data for scoring and loss evaluation.
struct Engine<'a, T> {
    levels: &'a LevelSet<T>,
    moments: LevelMoments<T>,
    loads: &'a [T],
    /// Per-step spline basis vectors (lumped scenario only).
    basis: Option<Vec<Vec<T>>>,
    day_starts: Vec<usize>,
    day_types: Vec<DayType>,
}

impl<'a, T: Real> Engine<'a, T> {
    fn from_series(
        series: &'a BuildingSeries<T>,
        params: &DisaggregatorParams<T>,
        scenario: Scenario,
        levels: &'a LevelSet<T>,
    ) -> Result<Self> {
        let days = series.days()?;
        let basis = match scenario {
            Scenario::Separate => None,
            Scenario::Lumped => {
                let temps = series.temperature().ok_or_else(|| {
                    Error::Data("lumped scenario requires a temperature column".into())
                })?;
                Some(
                    temps
                        .iter()
                        .map(|&t| bspline_basis(params.normalize_temp(t), &params.spline))
                        .collect(),
                )
            }
        };
        Ok(Self {
            levels,
            moments: LevelMoments::new(levels),
            loads: series.load(),
            basis,
            day_starts: days.iter().map(|d| d.start).collect(),
            day_types: days.iter().map(|d| d.day_type).collect(),
        })
    }

    fn k(&self) -> usize {
        self.levels.count()
    }

    fn step_count(&self) -> usize {
        self.loads.len()
    }

    /// Gate spline values (unoccupied, occupied) at a step.
    fn gates(&self, v: &ParamVec<T>, t: usize) -> Option<(T, T)> {
        self.basis.as_ref().map(|basis| {
            let b = &basis[t];
            let dot = |coeffs: &[T]| coeffs.iter().zip(b).map(|(&c, &x)| c * x).sum::<T>();
            (dot(v.spline_unoccupied()), dot(v.spline_occupied()))
        })
    }

    /// Total-mixture component moments at a step.
    fn step_moments(&self, eff: &EffectiveParams<T>, v: &ParamVec<T>, t: usize, means: &mut [T], vars: &mut [T]) {
        total_component_moments(
            eff,
            &self.moments.means,
            &self.moments.vars,
            &self.moments.collapsed_means,
            &self.moments.collapsed_vars,
            self.gates(v, t),
            means,
            vars,
        );
    }
}

/// Flat parameter vector the optimizer walks:
/// `[plug_dyn, plug_base, light_dyn, light_base, obs_std, unocc.., occ..]`.
struct ParamVec<T> {
    v: Vec<T>,
    n_basis: usize,
}

impl<T: Real> ParamVec<T> {
    fn from_params(p: &DisaggregatorParams<T>) -> Self {
        let mut v = vec![
            p.plug_dynamic,
            p.plug_base,
            p.light_dynamic,
            p.light_base,
            p.obs_std,
        ];
        v.extend_from_slice(&p.spline_unoccupied);
        v.extend_from_slice(&p.spline_occupied);
        Self {
            v,
            n_basis: p.spline_unoccupied.len(),
        }
    }

    fn write_back(&self, p: &mut DisaggregatorParams<T>) {
        p.plug_dynamic = self.v[0];
        p.plug_base = self.v[1];
        p.light_dynamic = self.v[2];
        p.light_base = self.v[3];
        p.obs_std = self.v[4];
        p.spline_unoccupied = self.spline_unoccupied().to_vec();
        p.spline_occupied = self.spline_occupied().to_vec();
    }

    fn spline_unoccupied(&self) -> &[T] {
        &self.v[5..5 + self.n_basis]
    }

    fn spline_occupied(&self) -> &[T] {
        &self.v[5 + self.n_basis..]
    }

    fn effective(&self) -> EffectiveParams<T> {
        let relu = |x: T| if x > T::zero() { x } else { T::zero() };
        let obs = relu(self.v[4]);
        EffectiveParams {
            plug_dynamic: relu(self.v[0]),
            plug_base: relu(self.v[1]),
            light_dynamic: relu(self.v[2]),
            light_base: relu(self.v[3]),
            obs_variance: obs * obs,
        }
    }

    fn len(&self) -> usize {
        self.v.len()
    }
}

/// Keep the top-K log-likelihoods and softmax them into sparse weights;
/// every other candidate gets weight zero. Ties break toward the lower
/// index for determinism.
pub fn matching_scores<T: Real>(logliks: &[T], top_k: usize) -> Result<Vec<(usize, T)>> {
    if logliks.is_empty() {
        return Err(Error::Data("no candidates to score".into()));
    }
    if logliks.iter().any(|l| !l.is_finite()) {
        return Err(Error::Training("non-finite candidate log-likelihood".into()));
    }
    let mut order: Vec<usize> = (0..logliks.len()).collect();
    order.sort_by(|&a, &b| {
        logliks[b]
            .partial_cmp(&logliks[a])
            .unwrap()
            .then(a.cmp(&b))
    });
    order.truncate(top_k.min(logliks.len()));
    let kept: Vec<T> = order.iter().map(|&i| logliks[i]).collect();
    let lse = logsumexp(&kept);
    Ok(order
        .iter()
        .zip(&kept)
        .map(|(&i, &l)| (i, (l - lse).exp()))
        .collect())
}

/// Weighted average of candidate profiles into one posterior profile.
pub fn combine_candidates<T: Real>(
    candidates: &[&CategoricalProfile<T>],
    weights: &[T],
) -> Result<CategoricalProfile<T>> {
    if candidates.is_empty() || candidates.len() != weights.len() {
        return Err(Error::Dimension(format!(
            "{} candidates for {} weights",
            candidates.len(),
            weights.len()
        )));
    }
    let levels = candidates[0].levels();
    let day_type = candidates[0].day_type();
    let mut probs = vec![vec![T::zero(); levels]; HOURS_PER_DAY];
    for (cand, &w) in candidates.iter().zip(weights) {
        for (t, row) in cand.steps().iter().enumerate() {
            for (j, &p) in row.iter().enumerate() {
                probs[t][j] = probs[t][j] + w * p;
            }
        }
    }
    CategoricalProfile::new(probs, day_type)
}

/// Log-likelihood of one day's observations under a candidate profile:
/// the total-load mixture density summed over the 24 steps.
pub fn candidate_loglik<T: Real>(
    candidate: &CategoricalProfile<T>,
    day: DayData<'_, T>,
    params: &DisaggregatorParams<T>,
    scenario: Scenario,
    levels: &LevelSet<T>,
) -> Result<T> {
    day.validate(scenario)?;
    if candidate.levels() != levels.count() {
        return Err(Error::Dimension(format!(
            "candidate has {} levels, level set has {}",
            candidate.levels(),
            levels.count()
        )));
    }
    let moments = LevelMoments::new(levels);
    let v = ParamVec::from_params(params);
    let eff = v.effective();
    let k = levels.count();
    let mut means = vec![T::zero(); k];
    let mut vars = vec![T::zero(); k];
    let mut total = T::zero();
    for t in 0..HOURS_PER_DAY {
        let gates = day.temps.map(|temps| {
            let basis = bspline_basis(params.normalize_temp(temps[t]), &params.spline);
            let dot = |coeffs: &[T]| coeffs.iter().zip(&basis).map(|(&c, &b)| c * b).sum::<T>();
            (dot(v.spline_unoccupied()), dot(v.spline_occupied()))
        });
        let gates = match scenario {
            Scenario::Lumped => gates,
            Scenario::Separate => None,
        };
        total_component_moments(
            &eff,
            &moments.means,
            &moments.vars,
            &moments.collapsed_means,
            &moments.collapsed_vars,
            gates,
            &mut means,
            &mut vars,
        );
        total = total + mixture_loglik(candidate.step(t), &means, &vars, day.loads[t]);
    }
    Ok(total)
}

fn mixture_loglik<T: Real>(weights: &[T], means: &[T], vars: &[T], x: T) -> T {
    let half = T::of(0.5);
    let ln_2pi = T::of(LN_2PI);
    let terms: Vec<T> = weights
        .iter()
        .zip(means)
        .zip(vars)
        .filter(|((&w, _), _)| w > T::zero())
        .map(|((&w, &m), &v)| {
            let z = x - m;
            w.ln() - half * (ln_2pi + v.ln()) - z * z / (T::of(2.0) * v)
        })
        .collect();
    logsumexp(&terms)
}

/// The variance-weighted expected negative log-likelihood over a whole
/// series under a fixed posterior (sum over steps). With `beta = 0` this is
/// exactly the plain expected NLL.
pub fn beta_nll_loss<T: Real>(
    posterior: &PosteriorSeries<T>,
    series: &BuildingSeries<T>,
    params: &DisaggregatorParams<T>,
    beta: T,
    scenario: Scenario,
    levels: &LevelSet<T>,
) -> Result<T> {
    let engine = Engine::from_series(series, params, scenario, levels)?;
    let post = flatten_posterior(posterior, &engine)?;
    let v = ParamVec::from_params(params);
    Ok(beta_nll_inner(&v, None, &engine, &post, beta, None))
}

fn flatten_posterior<'p, T: Real>(
    posterior: &'p PosteriorSeries<T>,
    engine: &Engine<'_, T>,
) -> Result<Vec<&'p [T]>> {
    if posterior.day_count() * HOURS_PER_DAY != engine.step_count() {
        return Err(Error::Dimension(format!(
            "posterior covers {} days, series has {} steps",
            posterior.day_count(),
            engine.step_count()
        )));
    }
    let mut rows = Vec::with_capacity(engine.step_count());
    for profile in posterior.profiles() {
        if profile.levels() != engine.k() {
            return Err(Error::Dimension("posterior level count mismatch".into()));
        }
        for t in 0..HOURS_PER_DAY {
            rows.push(profile.step(t));
        }
    }
    Ok(rows)
}

/// Loss (and optionally gradient) of the beta-weighted expected NLL.
///
/// `frozen` supplies the parameter vector at which the variance-power
/// factor `(sigma^2)^beta` is evaluated; the factor is constant with
/// respect to the differentiated parameters (stop-gradient). `None` means
/// "freeze at `v`", which is the value used during training.
fn beta_nll_inner<T: Real>(
    v: &ParamVec<T>,
    frozen: Option<&ParamVec<T>>,
    engine: &Engine<'_, T>,
    post: &[&[T]],
    beta: T,
    mut grad: Option<&mut [T]>,
) -> T {
    let k = engine.k();
    let eff = v.effective();
    let frozen_eff = frozen.map(|f| (f, f.effective()));
    let floor = T::of(VARIANCE_FLOOR);
    let half = T::of(0.5);
    let two = T::of(2.0);
    let ln_2pi = T::of(LN_2PI);
    let mut means = vec![T::zero(); k];
    let mut vars = vec![T::zero(); k];
    let mut frozen_means = vec![T::zero(); k];
    let mut frozen_vars = vec![T::zero(); k];
    let mut loss = T::zero();

    if let Some(g) = grad.as_deref_mut() {
        for gi in g.iter_mut() {
            *gi = T::zero();
        }
    }

    for t in 0..engine.step_count() {
        engine.step_moments(&eff, v, t, &mut means, &mut vars);
        let factor_vars: &[T] = match &frozen_eff {
            Some((fv, fe)) => {
                engine.step_moments(fe, fv, t, &mut frozen_means, &mut frozen_vars);
                &frozen_vars
            }
            None => &vars,
        };
        let x = engine.loads[t];
        let weights = post[t];
        for j in 0..k {
            let pi = weights[j];
            if pi <= T::zero() {
                continue;
            }
            let mu = means[j];
            let var = vars[j];
            let z = x - mu;
            let log_n = -half * (ln_2pi + var.ln()) - z * z / (two * var);
            let factor = if beta == T::zero() {
                T::one()
            } else {
                factor_vars[j].powf(beta)
            };
            let c = pi * factor;
            loss = loss - c * log_n;

            if let Some(g) = grad.as_deref_mut() {
                // dL/dmu and dL/dvar of the -c*logN term
                let dmu = -c * (z / var);
                let dvar = -c * (-T::one() / (two * var) + z * z / (two * var * var));

                // capacity parameters pass through max(0, .)
                let moms = &engine.moments;
                if v.v[0] > T::zero() {
                    g[0] = g[0] + dmu * moms.means[j];
                    let term = eff.plug_dynamic * eff.plug_dynamic * moms.vars[j];
                    if term > floor {
                        g[0] = g[0] + dvar * two * eff.plug_dynamic * moms.vars[j];
                    }
                }
                if v.v[1] > T::zero() {
                    g[1] = g[1] + dmu;
                }
                if v.v[2] > T::zero() {
                    g[2] = g[2] + dmu * moms.collapsed_means[j];
                    let term = eff.light_dynamic * eff.light_dynamic * moms.collapsed_vars[j];
                    if term > floor {
                        g[2] = g[2] + dvar * two * eff.light_dynamic * moms.collapsed_vars[j];
                    }
                }
                if v.v[3] > T::zero() {
                    g[3] = g[3] + dmu;
                }
                if v.v[4] > T::zero() {
                    g[4] = g[4] + dvar * two * v.v[4];
                }
                if let Some(basis) = &engine.basis {
                    let b = &basis[t];
                    let block = if j == 0 { 5 } else { 5 + v.n_basis };
                    for (i, &bi) in b.iter().enumerate() {
                        g[block + i] = g[block + i] + dmu * bi;
                    }
                }
            }
        }
    }
    loss
}

/// Flatten parameters into the optimizer layout:
/// `[plug_dynamic, plug_base, light_dynamic, light_base, obs_std,
///   spline_unoccupied.., spline_occupied..]`.
pub fn params_to_vector<T: Real>(params: &DisaggregatorParams<T>) -> Vec<T> {
    ParamVec::from_params(params).v
}

/// Rebuild parameters from the optimizer layout (inverse of
/// [`params_to_vector`]); non-vector fields are copied from `template`.
pub fn params_from_vector<T: Real>(
    template: &DisaggregatorParams<T>,
    vector: &[T],
) -> Result<DisaggregatorParams<T>> {
    let n_basis = template.spline_unoccupied.len();
    if vector.len() != 5 + 2 * n_basis {
        return Err(Error::Dimension(format!(
            "parameter vector has {} entries, expected {}",
            vector.len(),
            5 + 2 * n_basis
        )));
    }
    let pv = ParamVec {
        v: vector.to_vec(),
        n_basis,
    };
    let mut out = template.clone();
    pv.write_back(&mut out);
    Ok(out)
}

/// Loss and analytic gradient of [`beta_nll_loss`] in the
/// [`params_to_vector`] layout. The variance-power factor is treated as a
/// constant of the current parameters (stop-gradient).
pub fn beta_nll_grad<T: Real>(
    posterior: &PosteriorSeries<T>,
    series: &BuildingSeries<T>,
    params: &DisaggregatorParams<T>,
    beta: T,
    scenario: Scenario,
    levels: &LevelSet<T>,
) -> Result<(T, Vec<T>)> {
    let engine = Engine::from_series(series, params, scenario, levels)?;
    let post = flatten_posterior(posterior, &engine)?;
    let v = ParamVec::from_params(params);
    let mut grad = vec![T::zero(); v.len()];
    let loss = beta_nll_inner(&v, None, &engine, &post, beta, Some(&mut grad));
    Ok((loss, grad))
}

/// [`beta_nll_loss`] with the variance-power factor evaluated at
/// `factor_params` instead of `params`. Central differences of this
/// function in `params`, frozen at the evaluation point, recover the
/// stop-gradient derivative that [`beta_nll_grad`] returns.
pub fn beta_nll_loss_at<T: Real>(
    posterior: &PosteriorSeries<T>,
    series: &BuildingSeries<T>,
    params: &DisaggregatorParams<T>,
    factor_params: &DisaggregatorParams<T>,
    beta: T,
    scenario: Scenario,
    levels: &LevelSet<T>,
) -> Result<T> {
    let engine = Engine::from_series(series, params, scenario, levels)?;
    let post = flatten_posterior(posterior, &engine)?;
    let v = ParamVec::from_params(params);
    let frozen = ParamVec::from_params(factor_params);
    Ok(beta_nll_inner(&v, Some(&frozen), &engine, &post, beta, None))
}

/// Gradient of the setback-physics penalties on the gate splines:
/// quadratic hinge wherever the occupied gate dips below the unoccupied
/// gate, plus a quadratic pull of the smallest gap toward zero.
fn add_gate_penalty_grad<T: Real>(
    v: &ParamVec<T>,
    grid: &[Vec<T>],
    config: &TrainConfig<T>,
    steps: T,
    grad: &mut [T],
) {
    let unocc = v.spline_unoccupied();
    let occ = v.spline_occupied();
    let mut min_gap = T::infinity();
    let mut min_idx = 0;
    let floor_lambda = config.gate_floor_weight * steps;
    let contact_lambda = config.gate_contact_weight * steps;
    for (i, basis) in grid.iter().enumerate() {
        let gap = basis
            .iter()
            .enumerate()
            .map(|(j, &b)| (occ[j] - unocc[j]) * b)
            .sum::<T>();
        if gap < min_gap {
            min_gap = gap;
            min_idx = i;
        }
        if gap < T::zero() && floor_lambda > T::zero() {
            let c = T::of(2.0) * floor_lambda * gap;
            for (j, &b) in basis.iter().enumerate() {
                grad[5 + v.n_basis + j] = grad[5 + v.n_basis + j] + c * b;
                grad[5 + j] = grad[5 + j] - c * b;
            }
        }
    }
    if contact_lambda > T::zero() && min_gap.is_finite() {
        let c = T::of(2.0) * contact_lambda * min_gap;
        for (j, &b) in grid[min_idx].iter().enumerate() {
            grad[5 + v.n_basis + j] = grad[5 + v.n_basis + j] + c * b;
            grad[5 + j] = grad[5 + j] - c * b;
        }
    }
}

struct Adam<T> {
    m: Vec<T>,
    v: Vec<T>,
    t: usize,
    lr: T,
}

impl<T: Real> Adam<T> {
    fn new(dim: usize, lr: T) -> Self {
        Self {
            m: vec![T::zero(); dim],
            v: vec![T::zero(); dim],
            t: 0,
            lr,
        }
    }

    fn step(&mut self, params: &mut [T], grad: &[T]) {
        let b1 = T::of(0.9);
        let b2 = T::of(0.999);
        let eps = T::of(1e-8);
        self.t += 1;
        let t = T::from_usize(self.t).unwrap();
        let bc1 = T::one() - b1.powf(t);
        let bc2 = T::one() - b2.powf(t);
        for i in 0..params.len() {
            self.m[i] = b1 * self.m[i] + (T::one() - b1) * grad[i];
            self.v[i] = b2 * self.v[i] + (T::one() - b2) * grad[i] * grad[i];
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            params[i] = params[i] - self.lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
}

/// Pool-side cache: per candidate, the per-step log-weights.
struct PoolCache<T> {
    working: Vec<Vec<T>>,
    non_working: Vec<Vec<T>>,
}

impl<T: Real> PoolCache<T> {
    fn new(pool: &CandidatePool<T>, k: usize) -> Result<Self> {
        let build = |cands: &[CategoricalProfile<T>]| -> Result<Vec<Vec<T>>> {
            cands
                .iter()
                .map(|c| {
                    if c.levels() != k {
                        return Err(Error::Dimension(
                            "candidate level count does not match level set".into(),
                        ));
                    }
                    Ok(c.steps()
                        .iter()
                        .flat_map(|row| {
                            row.iter().map(|&p| {
                                if p > T::zero() {
                                    p.ln()
                                } else {
                                    T::neg_infinity()
                                }
                            })
                        })
                        .collect())
                })
                .collect()
        };
        Ok(Self {
            working: build(&pool.working)?,
            non_working: build(&pool.non_working)?,
        })
    }

    fn get(&self, day_type: DayType) -> &[Vec<T>] {
        match day_type {
            DayType::Working => &self.working,
            DayType::NonWorking => &self.non_working,
        }
    }
}

/// Step I over the whole series: build each day's posterior from the
/// top-K candidates of that day's type. Parameters are read-only here.
fn build_posterior<T: Real>(
    engine: &Engine<'_, T>,
    pool: &CandidatePool<T>,
    cache: &PoolCache<T>,
    v: &ParamVec<T>,
    top_k: usize,
) -> Result<PosteriorSeries<T>> {
    let k = engine.k();
    let eff = v.effective();
    let mut means = vec![T::zero(); k];
    let mut vars = vec![T::zero(); k];
    let mut profiles = Vec::with_capacity(engine.day_starts.len());
    // per-step component log-densities for the current day
    let mut logn = vec![T::zero(); HOURS_PER_DAY * k];
    let half = T::of(0.5);
    let two = T::of(2.0);
    let ln_2pi = T::of(LN_2PI);

    for (d, &start) in engine.day_starts.iter().enumerate() {
        for h in 0..HOURS_PER_DAY {
            let t = start + h;
            engine.step_moments(&eff, v, t, &mut means, &mut vars);
            let x = engine.loads[t];
            for j in 0..k {
                let z = x - means[j];
                logn[h * k + j] =
                    -half * (ln_2pi + vars[j].ln()) - z * z / (two * vars[j]);
            }
        }
        let day_type = engine.day_types[d];
        let lnw_cache = cache.get(day_type);
        let mut logliks = Vec::with_capacity(lnw_cache.len());
        let mut buf = vec![T::zero(); k];
        for lnw in lnw_cache {
            let mut ll = T::zero();
            for h in 0..HOURS_PER_DAY {
                for j in 0..k {
                    buf[j] = lnw[h * k + j] + logn[h * k + j];
                }
                ll = ll + logsumexp(&buf);
            }
            logliks.push(ll);
        }
        let scores = matching_scores(&logliks, top_k)?;
        let cands = pool.candidates(day_type);
        let selected: Vec<&CategoricalProfile<T>> = scores.iter().map(|&(i, _)| &cands[i]).collect();
        let weights: Vec<T> = scores.iter().map(|&(_, w)| w).collect();
        profiles.push(combine_candidates(&selected, &weights)?);
    }
    Ok(PosteriorSeries::new(profiles))
}

/// Minimum training-series length in days.
pub const MIN_TRAIN_DAYS: usize = 14;

/// Alternating training over a day-aligned series.
pub fn train<T: Real>(
    series: &BuildingSeries<T>,
    pool: &CandidatePool<T>,
    params: DisaggregatorParams<T>,
    config: &TrainConfig<T>,
    scenario: Scenario,
    levels: &LevelSet<T>,
) -> Result<TrainResult<T>> {
    config.validate()?;
    let engine = Engine::from_series(series, &params, scenario, levels)?;
    if engine.day_starts.len() < MIN_TRAIN_DAYS {
        return Err(Error::Data(format!(
            "training needs at least {MIN_TRAIN_DAYS} days, got {}",
            engine.day_starts.len()
        )));
    }
    let cache = PoolCache::new(pool, engine.k())?;
    let mut v = ParamVec::from_params(&params);
    let anchor_point: Vec<T> = v.v[..4].to_vec();
    let anchor_scales: Vec<T> = anchor_point
        .iter()
        .map(|&p| if p.abs() > T::one() { p.abs() } else { T::one() })
        .collect();
    // basis rows over the spline domain for the gate penalties
    let gate_grid: Option<Vec<Vec<T>>> = match scenario {
        Scenario::Lumped
            if config.gate_floor_weight > T::zero() || config.gate_contact_weight > T::zero() =>
        {
            let (lo, hi) = params.spline.domain;
            let n = 17;
            Some(
                (0..n)
                    .map(|i| {
                        let x = lo + (hi - lo) * T::from_usize(i).unwrap()
                            / T::from_usize(n - 1).unwrap();
                        bspline_basis(x, &params.spline)
                    })
                    .collect(),
            )
        }
        _ => None,
    };
    let steps = T::from_usize(engine.step_count()).unwrap();
    let mut loss_trace = Vec::with_capacity(config.epochs);
    let mut epoch_seconds = Vec::with_capacity(config.epochs);
    let mut grad = vec![T::zero(); v.len()];

    for epoch in 0..config.epochs {
        let epoch_start = std::time::Instant::now();
        // Step I: posterior construction with parameters held fixed
        let posterior = build_posterior(&engine, pool, &cache, &v, config.top_k)?;
        let post = flatten_posterior(&posterior, &engine)?;

        // Step II: gradient updates with the posterior held fixed
        let mut adam = Adam::new(v.len(), config.learning_rate);
        for iter in 0..config.inner_iters {
            let loss = beta_nll_inner(&v, None, &engine, &post, config.beta, Some(&mut grad));
            if !loss.is_finite() {
                return Err(Error::Training(format!(
                    "non-finite loss at epoch {epoch}, inner iteration {iter}"
                )));
            }
            // metadata prior on the capacity parameters
            if config.capacity_anchor > T::zero() {
                let lambda = config.capacity_anchor * steps;
                for i in 0..4 {
                    let scale = anchor_scales[i];
                    grad[i] = grad[i]
                        + T::of(2.0) * lambda * (v.v[i] - anchor_point[i]) / (scale * scale);
                }
            }
            // setback physics on the gate splines
            if let Some(grid) = &gate_grid {
                add_gate_penalty_grad(&v, grid, config, steps, &mut grad);
            }
            adam.step(&mut v.v, &grad);
        }
        let plain = beta_nll_inner(&v, None, &engine, &post, T::zero(), None);
        if !plain.is_finite() {
            return Err(Error::Training(format!(
                "non-finite loss at end of epoch {epoch}"
            )));
        }
        loss_trace.push(plain / steps);
        epoch_seconds.push(epoch_start.elapsed().as_secs_f64());
    }

    // final posterior under the trained parameters
    let posterior = build_posterior(&engine, pool, &cache, &v, config.top_k)?;
    let mut out = params;
    v.write_back(&mut out);
    out.trained = true;
    Ok(TrainResult {
        params: out,
        posterior,
        loss_trace,
        epoch_seconds,
    })
}

/// Step I only: posterior and expected hourly occupancy ratios under fixed
/// parameters.
pub fn infer<T: Real>(
    series: &BuildingSeries<T>,
    pool: &CandidatePool<T>,
    params: &DisaggregatorParams<T>,
    top_k: usize,
    scenario: Scenario,
    levels: &LevelSet<T>,
) -> Result<(PosteriorSeries<T>, Vec<T>)> {
    let engine = Engine::from_series(series, params, scenario, levels)?;
    let cache = PoolCache::new(pool, engine.k())?;
    let v = ParamVec::from_params(params);
    let posterior = build_posterior(&engine, pool, &cache, &v, top_k)?;
    let ratios = posterior.expected_ratios(levels);
    Ok((posterior, ratios))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::disaggregator::init_params;
    use crate::disaggregator::InitMetadata;
    use crate::generator::generate_pool;
    use crate::schedule::ScheduleSet;
    use crate::series::SystemSeries;
    use crate::spline::SplineConfig;
    use chrono::NaiveDateTime;

    fn four_level() -> LevelSet<f64> {
        LevelSet::four_level()
    }

    fn test_params() -> DisaggregatorParams<f64> {
        let meta = InitMetadata::<f64> {
            floor_area_m2: 1000.0,
            light_intensity_w_m2: 8.0,
            plug_intensity_w_m2: 8.0,
            peak_load_kw: 20.0,
            temp_stats: Some((15.0, 8.0)),
        };
        init_params(&meta, SplineConfig::default()).unwrap()
    }

    fn flat_series(days: usize, load: f64) -> BuildingSeries<f64> {
        let t0 = NaiveDateTime::parse_from_str("2024-01-01T00:00:00", "%Y-%m-%dT%H:%M:%S").unwrap();
        let n = days * 24;
        let ts = (0..n).map(|i| t0 + chrono::Duration::hours(i as i64)).collect();
        let temps = (0..n).map(|i| 15.0 + 5.0 * ((i % 24) as f64 / 24.0)).collect();
        BuildingSeries::new(ts, vec![load; n], Some(temps), None, None, &[]).unwrap()
    }

    #[test]
    fn matching_scores_examples() {
        let scores = matching_scores(&[0.0, 3.0f64.ln()], 2).unwrap();
        assert_eq!(scores[0].0, 1);
        assert!((scores[0].1 - 0.75).abs() < 1e-12);
        assert!((scores[1].1 - 0.25).abs() < 1e-12);

        let one = matching_scores(&[1.0, 5.0, 3.0], 1).unwrap();
        assert_eq!(one, vec![(1, 1.0)]);

        let uniform = matching_scores(&[2.0f64; 5], 5).unwrap();
        for &(_, w) in &uniform {
            assert!((w - 0.2).abs() < 1e-12);
        }
        let total: f64 = uniform.iter().map(|&(_, w)| w).sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn combine_candidates_examples() {
        let ls = four_level();
        let one_hot = |level: usize| {
            let mut row = vec![0.0f64; ls.count()];
            row[level] = 1.0;
            CategoricalProfile::new(vec![row; 24], DayType::Working).unwrap()
        };
        let a = one_hot(0);
        let b = one_hot(3);

        let single = combine_candidates(&[&a], &[1.0]).unwrap();
        assert_eq!(single, a);

        let blend = combine_candidates(&[&a, &b], &[0.5, 0.5]).unwrap();
        for row in blend.steps() {
            assert!((row[0] - 0.5).abs() < 1e-12);
            assert!((row[3] - 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn candidate_loglik_is_additive_and_peaks_at_truth() {
        let ls = four_level();
        let params = test_params();
        let series = flat_series(1, 15.0);
        let day = DayData {
            loads: &series.load()[0..24],
            temps: None,
        };
        let zero = CategoricalProfile::new(vec![vec![1.0, 0.0, 0.0, 0.0]; 24], DayType::Working)
            .unwrap();
        let full = CategoricalProfile::new(vec![vec![0.0, 0.0, 0.0, 1.0]; 24], DayType::Working)
            .unwrap();
        let ll_zero =
            candidate_loglik(&zero, day, &params, Scenario::Separate, &ls).unwrap();
        let ll_full =
            candidate_loglik(&full, day, &params, Scenario::Separate, &ls).unwrap();
        // the observed 15 kW is close to full occupancy (8*0.98+0.8 + 8*0.98+0.8)
        assert!(ll_full > ll_zero);

        // additivity: two identical days double the log-likelihood
        let twice = ll_full * 2.0;
        let ll_two_days = ll_full + candidate_loglik(&full, day, &params, Scenario::Separate, &ls).unwrap();
        assert!((twice - ll_two_days).abs() < 1e-9);
    }

    #[test]
    fn beta_zero_equals_plain_expected_nll() {
        let ls = four_level();
        let params = test_params();
        let series = flat_series(2, 5.0);
        let uniform = CategoricalProfile::new(vec![vec![0.25; 4]; 24], DayType::Working).unwrap();
        let posterior = PosteriorSeries::new(vec![uniform.clone(), uniform]);

        let loss =
            beta_nll_loss(&posterior, &series, &params, 0.0, Scenario::Lumped, &ls).unwrap();

        // direct plain expected NLL
        let engine = Engine::from_series(&series, &params, Scenario::Lumped, &ls).unwrap();
        let v = ParamVec::from_params(&params);
        let eff = v.effective();
        let mut means = vec![0.0; 4];
        let mut vars = vec![0.0; 4];
        let mut want = 0.0;
        for t in 0..engine.step_count() {
            engine.step_moments(&eff, &v, t, &mut means, &mut vars);
            for j in 0..4 {
                let z = engine.loads[t] - means[j];
                let log_n = -0.5 * (LN_2PI + vars[j].ln()) - z * z / (2.0 * vars[j]);
                want -= 0.25 * log_n;
            }
        }
        assert!((loss - want).abs() < 1e-9);
    }

    #[test]
    fn single_component_loss_closed_form() {
        // one-level-degenerate posterior: all mass on the zero level, and a
        // parameter set that makes the total mean equal the observation
        let ls = four_level();
        let mut params = test_params();
        params.plug_dynamic = 0.0;
        params.plug_base = 2.0;
        params.light_dynamic = 0.0;
        params.light_base = 3.0;
        params.obs_std = 1.0;
        // component variance: floors only, plus obs 1.0
        let series = flat_series(1, 5.0);
        let one_hot =
            CategoricalProfile::new(vec![vec![1.0, 0.0, 0.0, 0.0]; 24], DayType::Working).unwrap();
        let posterior = PosteriorSeries::new(vec![one_hot]);
        let loss =
            beta_nll_loss(&posterior, &series, &params, 0.0, Scenario::Separate, &ls).unwrap();
        // sigma^2 = 1 + 2 floors, P == mu: per-step loss = 0.5 ln(2 pi sigma^2)
        let sigma2 = 1.0 + 2.0 * VARIANCE_FLOOR;
        let want = 24.0 * 0.5 * ((2.0 * std::f64::consts::PI * sigma2).ln());
        assert!((loss - want).abs() < 1e-9, "loss={loss} want={want}");
    }

    #[test]
    fn gradient_matches_finite_differences_spot_check() {
        let ls = four_level();
        let params = test_params();
        let series = flat_series(3, 12.0);
        let profile = CategoricalProfile::new(
            vec![vec![0.4, 0.3, 0.2, 0.1]; 24],
            DayType::Working,
        )
        .unwrap();
        let posterior = PosteriorSeries::new(vec![profile.clone(), profile.clone(), profile]);
        let engine = Engine::from_series(&series, &params, Scenario::Lumped, &ls).unwrap();
        let post = flatten_posterior(&posterior, &engine).unwrap();

        let mut v = ParamVec::from_params(&params);
        // move spline coefficients off zero so their gradients are generic
        for i in 5..v.len() {
            v.v[i] = 0.3 + 0.1 * (i as f64 - 5.0);
        }
        let beta = 0.5;
        let mut grad = vec![0.0; v.len()];
        beta_nll_inner(&v, None, &engine, &post, beta, Some(&mut grad));

        let frozen = ParamVec {
            v: v.v.clone(),
            n_basis: v.n_basis,
        };
        let h = 1e-5;
        for i in 0..v.len() {
            let mut vp = ParamVec {
                v: v.v.clone(),
                n_basis: v.n_basis,
            };
            vp.v[i] += h;
            let lp = beta_nll_inner(&vp, Some(&frozen), &engine, &post, beta, None);
            vp.v[i] -= 2.0 * h;
            let lm = beta_nll_inner(&vp, Some(&frozen), &engine, &post, beta, None);
            let fd = (lp - lm) / (2.0 * h);
            let rel = (grad[i] - fd).abs() / fd.abs().max(1.0);
            assert!(rel < 1e-4, "param {i}: analytic {} vs fd {fd}", grad[i]);
        }
    }

    #[test]
    fn beta_gradient_is_variance_scaled_plain_gradient_single_component() {
        let ls = LevelSet::<f64>::with_defaults(vec![0.0, 1.0]).unwrap();
        let mut params = test_params();
        params.obs_std = 0.7;
        let series = flat_series(1, 6.0);
        // all mass on the zero level: a single active component
        let one_hot =
            CategoricalProfile::new(vec![vec![1.0, 0.0]; 24], DayType::Working).unwrap();
        let posterior = PosteriorSeries::new(vec![one_hot]);
        let engine = Engine::from_series(&series, &params, Scenario::Separate, &ls).unwrap();
        let post = flatten_posterior(&posterior, &engine).unwrap();
        let v = ParamVec::from_params(&params);

        let beta = 0.5;
        let mut g_beta = vec![0.0; v.len()];
        beta_nll_inner(&v, None, &engine, &post, beta, Some(&mut g_beta));
        let mut g_plain = vec![0.0; v.len()];
        beta_nll_inner(&v, None, &engine, &post, 0.0, Some(&mut g_plain));

        // with identical variance at every step, the scale factor is shared
        let eff = v.effective();
        let mut means = vec![0.0; 2];
        let mut vars = vec![0.0; 2];
        engine.step_moments(&eff, &v, 0, &mut means, &mut vars);
        let factor = vars[0].powf(beta);
        for i in 0..5 {
            assert!(
                (g_beta[i] - factor * g_plain[i]).abs() < 1e-9 * g_plain[i].abs().max(1.0),
                "param {i}"
            );
        }
    }

    fn synthetic_training_setup(
        days: usize,
    ) -> (
        BuildingSeries<f64>,
        CandidatePool<f64>,
        DisaggregatorParams<f64>,
        LevelSet<f64>,
    ) {
        let ls = four_level();
        let schedules = ScheduleSet::<f64>::bundled();
        let pool = generate_pool(&schedules, &ls, 60, 20, 5).unwrap();

        // deterministic series following the working-day reference shape
        let t0 = NaiveDateTime::parse_from_str("2024-01-01T00:00:00", "%Y-%m-%dT%H:%M:%S").unwrap();
        let n = days * 24;
        let mut ts = Vec::with_capacity(n);
        let mut load = Vec::with_capacity(n);
        let mut lighting = Vec::with_capacity(n);
        let mut plug = Vec::with_capacity(n);
        let working_ref = schedules.working.ratios().to_vec();
        for i in 0..n {
            let stamp = t0 + chrono::Duration::hours(i as i64);
            let weekend = matches!(
                stamp.format("%u").to_string().as_str(),
                "6" | "7"
            );
            let ratio = if weekend { 0.02 } else { working_ref[i % 24] };
            let p = 6.0 * ratio + 0.6;
            let l = 7.0 * if ratio > 0.05 { 1.0 } else { 0.0 } + 0.7;
            ts.push(stamp);
            plug.push(p);
            lighting.push(l);
            load.push(p + l);
        }
        let systems = SystemSeries {
            lighting,
            plug,
            hvac: vec![0.0; n],
        };
        let series = BuildingSeries::new(ts, load, None, None, Some(systems), &[]).unwrap();

        let meta = InitMetadata::<f64> {
            floor_area_m2: 800.0,
            light_intensity_w_m2: 8.0,
            plug_intensity_w_m2: 8.0,
            peak_load_kw: series.peak_load(),
            temp_stats: None,
        };
        let params = init_params(&meta, SplineConfig::default()).unwrap();
        (series, pool, params, ls)
    }

    #[test]
    fn train_decreases_loss_and_is_deterministic() {
        let (series, pool, params, ls) = synthetic_training_setup(14);
        let config = TrainConfig {
            epochs: 4,
            inner_iters: 200,
            ..TrainConfig::default()
        };
        let a = train(&series, &pool, params.clone(), &config, Scenario::Separate, &ls).unwrap();
        assert_eq!(a.loss_trace.len(), 4);
        assert!(a.loss_trace.iter().all(|l| l.is_finite()));
        assert!(
            a.loss_trace.last().unwrap() < a.loss_trace.first().unwrap(),
            "trace: {:?}",
            a.loss_trace
        );
        assert!(a.params.trained);

        let b = train(&series, &pool, params, &config, Scenario::Separate, &ls).unwrap();
        assert_eq!(a.loss_trace, b.loss_trace);
        assert_eq!(a.params, b.params);
    }

    #[test]
    fn train_rejects_short_series() {
        let (series, pool, params, ls) = synthetic_training_setup(14);
        let (short, _) = series.split_days(5).unwrap();
        let config = TrainConfig::default();
        let err = match train(&short, &pool, params, &config, Scenario::Separate, &ls) {
            Err(e) => e,
            Ok(_) => panic!("short series should be rejected"),
        };
        assert!(matches!(err, Error::Data(_)));
    }

    #[test]
    fn step_one_does_not_mutate_params_step_two_does_not_mutate_pool() {
        let (series, pool, params, ls) = synthetic_training_setup(14);
        let pool_before = pool.clone();
        let params_before = params.clone();
        let config = TrainConfig {
            epochs: 1,
            inner_iters: 10,
            ..TrainConfig::default()
        };
        // infer is Step I alone: parameters are untouched by construction
        let _ = infer(&series, &pool, &params, config.top_k, Scenario::Separate, &ls).unwrap();
        assert_eq!(params, params_before);
        // a full train run leaves the pool identical
        let _ = train(&series, &pool, params, &config, Scenario::Separate, &ls).unwrap();
        assert_eq!(pool, pool_before);
    }

    #[test]
    fn infer_expected_ratios_stay_in_unit_interval() {
        let (series, pool, params, ls) = synthetic_training_setup(14);
        let (_, ratios) = infer(&series, &pool, &params, 32, Scenario::Separate, &ls).unwrap();
        assert_eq!(ratios.len(), series.len());
        assert!(ratios.iter().all(|&r| (0.0..=1.0).contains(&r)));
    }


    #[test]
    fn day_slice_validation_errors() {
        let ls = four_level();
        let params = test_params();
        let candidate =
            CategoricalProfile::new(vec![vec![0.25; 4]; 24], DayType::Working).unwrap();
        // short day
        let short = vec![1.0; 12];
        let day = DayData {
            loads: &short,
            temps: None,
        };
        assert!(matches!(
            candidate_loglik(&candidate, day, &params, Scenario::Separate, &ls),
            Err(Error::Data(_))
        ));
        // lumped without temperatures
        let full = vec![1.0; 24];
        let day = DayData {
            loads: &full,
            temps: None,
        };
        assert!(matches!(
            candidate_loglik(&candidate, day, &params, Scenario::Lumped, &ls),
            Err(Error::Data(_))
        ));
        // empty candidate set
        assert!(matches!(matching_scores::<f64>(&[], 4), Err(Error::Data(_))));
    }

    #[test]
    fn posterior_expected_ratio_examples() {
        let ls = four_level();
        let zero =
            CategoricalProfile::new(vec![vec![1.0, 0.0, 0.0, 0.0]; 24], DayType::Working).unwrap();
        let posterior = PosteriorSeries::new(vec![zero]);
        assert!(posterior.expected_ratios(&ls).iter().all(|&r| r == 0.0));

        let uniform = CategoricalProfile::new(vec![vec![0.25; 4]; 24], DayType::Working).unwrap();
        let posterior = PosteriorSeries::new(vec![uniform]);
        for r in posterior.expected_ratios(&ls) {
            assert!((r - 0.5).abs() < 1e-12);
        }
    }
}
