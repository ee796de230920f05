//! The load disaggregator: occupant-driven affine modules (plug and
//! lighting) and a two-gate B-spline weather module, summed into a total
//! load mixture aligned with the occupancy proxy components.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gm::GaussianMixture1D;
use crate::levels::{LevelSet, VARIANCE_FLOOR};
use crate::num::{clamp, Real};
use crate::spline::{bspline_basis, SplineConfig};

/// Metering scenario: occupant-driven loads alone, or everything lumped
/// into one whole-building meter (weather module active).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scenario {
    Separate,
    Lumped,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OccupantSystem {
    Plug,
    Lighting,
}

/// Trainable parameters of the disaggregator.
///
/// Capacity parameters are stored raw and clamped through `max(0, .)` at
/// use time, keeping the effective capacities physically non-negative.
/// `obs_std` is the raw observation-noise level; its square is added to
/// every total component variance. Temperature normalization constants are
/// fixed at initialization, not trained.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DisaggregatorParams<T> {
    pub plug_dynamic: T,
    pub plug_base: T,
    pub light_dynamic: T,
    pub light_base: T,
    pub spline_occupied: Vec<T>,
    pub spline_unoccupied: Vec<T>,
    pub obs_std: T,
    pub temp_mean: T,
    pub temp_std: T,
    pub spline: SplineConfig<T>,
    #[serde(default)]
    pub trained: bool,
}

/// Capacity values after the non-negativity clamp.
#[derive(Debug, Clone, Copy)]
pub struct EffectiveParams<T> {
    pub plug_dynamic: T,
    pub plug_base: T,
    pub light_dynamic: T,
    pub light_base: T,
    pub obs_variance: T,
}

/// Building metadata used to seed the parameters.
#[derive(Debug, Clone, Copy)]
pub struct InitMetadata<T> {
    pub floor_area_m2: T,
    pub light_intensity_w_m2: T,
    pub plug_intensity_w_m2: T,
    pub peak_load_kw: T,
    /// (mean, std) of the training-period outdoor temperature; None when
    /// the series has no temperature column.
    pub temp_stats: Option<(T, T)>,
}

pub const DEFAULT_INTENSITY_W_M2: f64 = 8.0;
const BASE_FRACTION_OF_DYNAMIC: f64 = 0.1;
const OBS_STD_FRACTION_OF_PEAK: f64 = 0.01;

/// Seed parameters from metadata: dynamic capacities from floor area times
/// power intensity, bases at 10% of dynamic, zero spline coefficients and
/// observation noise at 1% of the peak load.
pub fn init_params<T: Real>(
    meta: &InitMetadata<T>,
    spline: SplineConfig<T>,
) -> Result<DisaggregatorParams<T>> {
    if meta.floor_area_m2 <= T::zero() {
        return Err(Error::Domain(format!(
            "floor area must be positive, got {}",
            meta.floor_area_m2
        )));
    }
    spline.validate()?;
    let w_to_kw = T::of(1e-3);
    let light_dynamic = meta.floor_area_m2 * meta.light_intensity_w_m2 * w_to_kw;
    let plug_dynamic = meta.floor_area_m2 * meta.plug_intensity_w_m2 * w_to_kw;
    let (temp_mean, temp_std) = match meta.temp_stats {
        Some((m, s)) if s > T::of(0.1) => (m, s),
        Some((m, _)) => (m, T::one()),
        None => (T::zero(), T::one()),
    };
    let n_basis = spline.basis_count();
    Ok(DisaggregatorParams {
        plug_dynamic,
        plug_base: plug_dynamic * T::of(BASE_FRACTION_OF_DYNAMIC),
        light_dynamic,
        light_base: light_dynamic * T::of(BASE_FRACTION_OF_DYNAMIC),
        spline_occupied: vec![T::zero(); n_basis],
        spline_unoccupied: vec![T::zero(); n_basis],
        obs_std: meta.peak_load_kw * T::of(OBS_STD_FRACTION_OF_PEAK),
        temp_mean,
        temp_std,
        spline,
        trained: false,
    })
}

impl<T: Real> DisaggregatorParams<T> {
    pub fn effective(&self) -> EffectiveParams<T> {
        let relu = |x: T| if x > T::zero() { x } else { T::zero() };
        let obs = relu(self.obs_std);
        EffectiveParams {
            plug_dynamic: relu(self.plug_dynamic),
            plug_base: relu(self.plug_base),
            light_dynamic: relu(self.light_dynamic),
            light_base: relu(self.light_base),
            obs_variance: obs * obs,
        }
    }

    /// Z-score the outdoor temperature and clip to the spline domain.
    pub fn normalize_temp(&self, temp: T) -> T {
        let x = (temp - self.temp_mean) / self.temp_std;
        clamp(x, self.spline.domain.0, self.spline.domain.1)
    }

    /// Both gate spline values at a raw temperature: (unoccupied, occupied).
    pub fn gate_values(&self, temp: T) -> (T, T) {
        let basis = bspline_basis(self.normalize_temp(temp), &self.spline);
        let dot = |coeffs: &[T]| coeffs.iter().zip(&basis).map(|(&c, &b)| c * b).sum::<T>();
        (dot(&self.spline_unoccupied), dot(&self.spline_occupied))
    }

    pub fn save_json(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path)?;
        serde_json::to_writer_pretty(std::io::BufWriter::new(file), self)?;
        Ok(())
    }

    pub fn load_json(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        let params = serde_json::from_reader(std::io::BufReader::new(file))?;
        Ok(params)
    }
}

/// Everything the disaggregator produces for one time step.
#[derive(Debug, Clone)]
pub struct SystemForward<T> {
    pub plug: GaussianMixture1D<T>,
    pub lighting: GaussianMixture1D<T>,
    pub weather: Option<GaussianMixture1D<T>>,
    pub total: GaussianMixture1D<T>,
}

/// Occupant-driven module: an affine map of the occupancy proxy. Plug loads
/// follow the continuous ratio; lighting first collapses the proxy to the
/// binary occupied/unoccupied approximation.
pub fn occupant_forward<T: Real>(
    proxy: &GaussianMixture1D<T>,
    params: &DisaggregatorParams<T>,
    system: OccupantSystem,
    levels: &LevelSet<T>,
) -> Result<GaussianMixture1D<T>> {
    let eff = params.effective();
    match system {
        OccupantSystem::Plug => proxy.affine(eff.plug_dynamic, eff.plug_base),
        OccupantSystem::Lighting => proxy
            .binary_collapse(levels)?
            .affine(eff.light_dynamic, eff.light_base),
    }
}

/// Weather-driven module: component means are the gate-selected spline
/// values (zero level gets the unoccupied gate, every other level the
/// occupied gate); weights come from the proxy, variances sit at the floor.
pub fn weather_forward<T: Real>(
    proxy: &GaussianMixture1D<T>,
    temp: T,
    params: &DisaggregatorParams<T>,
) -> Result<GaussianMixture1D<T>> {
    let (b0, b1) = params.gate_values(temp);
    let k = proxy.len();
    let zero = GaussianMixture1D::new(
        proxy.weights().to_vec(),
        vec![T::zero(); k],
        vec![T::zero(); k],
    )?;
    let shifts: Vec<T> = (0..k).map(|i| if i == 0 { b0 } else { b1 }).collect();
    zero.shift_components(&shifts)
}

/// Full forward pass: system-level mixtures plus the total-load mixture
/// (with the observation-noise variance added to every total component).
pub fn total_forward<T: Real>(
    proxy: &GaussianMixture1D<T>,
    temp: Option<T>,
    params: &DisaggregatorParams<T>,
    scenario: Scenario,
    levels: &LevelSet<T>,
) -> Result<SystemForward<T>> {
    let plug = occupant_forward(proxy, params, OccupantSystem::Plug, levels)?;
    let lighting = occupant_forward(proxy, params, OccupantSystem::Lighting, levels)?;
    let eff = params.effective();
    let (weather, total) = match scenario {
        Scenario::Separate => {
            let total = GaussianMixture1D::sum_aligned(&[&plug, &lighting])?;
            (None, total)
        }
        Scenario::Lumped => {
            let temp = temp.ok_or_else(|| {
                Error::Data("lumped scenario requires an outdoor temperature".into())
            })?;
            let weather = weather_forward(proxy, temp, params)?;
            let total = GaussianMixture1D::sum_aligned(&[&plug, &lighting, &weather])?;
            (Some(weather), total)
        }
    };
    let total = total.add_variance(eff.obs_variance)?;
    Ok(SystemForward {
        plug,
        lighting,
        weather,
        total,
    })
}

/// Component moments of the total mixture written into caller buffers; the
/// allocation-free path the trainer iterates. Must agree with
/// [`total_forward`] (checked by tests).
#[allow(clippy::too_many_arguments)]
pub fn total_component_moments<T: Real>(
    eff: &EffectiveParams<T>,
    proxy_means: &[T],
    proxy_vars: &[T],
    collapsed_means: &[T],
    collapsed_vars: &[T],
    gates: Option<(T, T)>,
    means_out: &mut [T],
    vars_out: &mut [T],
) {
    let floor = T::of(VARIANCE_FLOOR);
    let base = eff.plug_base + eff.light_base;
    for k in 0..proxy_means.len() {
        let mut mean =
            eff.plug_dynamic * proxy_means[k] + eff.light_dynamic * collapsed_means[k] + base;
        // each module's variance passes through the floor before the sum
        let mut var = (eff.plug_dynamic * eff.plug_dynamic * proxy_vars[k]).max(floor)
            + (eff.light_dynamic * eff.light_dynamic * collapsed_vars[k]).max(floor);
        if let Some((b0, b1)) = gates {
            mean = mean + if k == 0 { b0 } else { b1 };
            var = var + floor; // the weather module sits at the variance floor
        }
        means_out[k] = mean;
        vars_out[k] = var + eff.obs_variance;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn four_level() -> LevelSet<f64> {
        LevelSet::four_level()
    }

    fn test_params(lumped_coeffs: bool) -> DisaggregatorParams<f64> {
        let spline = SplineConfig::default();
        let n = spline.basis_count();
        DisaggregatorParams {
            plug_dynamic: 10.0,
            plug_base: 1.0,
            light_dynamic: 12.0,
            light_base: 1.2,
            spline_occupied: if lumped_coeffs {
                (0..n).map(|i| 2.0 + 0.5 * i as f64).collect()
            } else {
                vec![0.0; n]
            },
            spline_unoccupied: if lumped_coeffs {
                (0..n).map(|i| 1.0 + 0.1 * i as f64).collect()
            } else {
                vec![0.0; n]
            },
            obs_std: 0.3,
            temp_mean: 15.0,
            temp_std: 8.0,
            spline,
            trained: false,
        }
    }

    #[test]
    fn init_params_from_metadata() {
        let meta = InitMetadata::<f64> {
            floor_area_m2: 1000.0,
            light_intensity_w_m2: 8.0,
            plug_intensity_w_m2: 8.0,
            peak_load_kw: 25.0,
            temp_stats: Some((14.0, 7.5)),
        };
        let p = init_params(&meta, SplineConfig::default()).unwrap();
        assert!((p.light_dynamic - 8.0).abs() < 1e-12);
        assert!((p.plug_dynamic - 8.0).abs() < 1e-12);
        assert!((p.plug_base - 0.8).abs() < 1e-12);
        assert!((p.obs_std - 0.25).abs() < 1e-12);
        assert!(p.spline_occupied.iter().all(|&c| c == 0.0));
        assert!(!p.trained);

        let bad = InitMetadata {
            floor_area_m2: 0.0,
            ..meta
        };
        assert!(init_params(&bad, SplineConfig::default()).is_err());
    }

    #[test]
    fn zero_spline_coefficients_mean_zero_weather_shift() {
        let ls = four_level();
        let params = test_params(false);
        let proxy = GaussianMixture1D::from_categorical(&[0.25; 4], &ls).unwrap();
        let w = weather_forward(&proxy, 25.0, &params).unwrap();
        assert!(w.means().iter().all(|&m| m == 0.0));
    }

    #[test]
    fn occupant_forward_zero_and_full() {
        let ls = four_level();
        let params = test_params(false);
        let zero = GaussianMixture1D::from_categorical(&[1.0, 0.0, 0.0, 0.0], &ls).unwrap();
        let plug = occupant_forward(&zero, &params, OccupantSystem::Plug, &ls).unwrap();
        assert!((plug.mean() - (10.0 * 0.02 + 1.0)).abs() < 1e-12);

        let full = GaussianMixture1D::from_categorical(&[0.0, 0.0, 0.0, 1.0], &ls).unwrap();
        let light = occupant_forward(&full, &params, OccupantSystem::Lighting, &ls).unwrap();
        assert!((light.mean() - (12.0 * 0.98 + 1.2)).abs() < 1e-12);
    }

    #[test]
    fn lighting_collapse_exceeds_plug_at_partial_occupancy() {
        let ls = four_level();
        let mut params = test_params(false);
        params.plug_dynamic = 10.0;
        params.light_dynamic = 10.0;
        params.plug_base = 1.0;
        params.light_base = 1.0;
        let proxy = GaussianMixture1D::from_categorical(&[0.5, 0.5, 0.0, 0.0], &ls).unwrap();
        let plug = occupant_forward(&proxy, &params, OccupantSystem::Plug, &ls).unwrap();
        let light = occupant_forward(&proxy, &params, OccupantSystem::Lighting, &ls).unwrap();
        // the 1/3 level is rewritten to the full-occupancy component
        assert!(light.mean() > plug.mean());
        let want_light = 1.0 + 10.0 * (0.5 * 0.02 + 0.5 * 0.98);
        assert!((light.mean() - want_light).abs() < 1e-12);
    }

    #[test]
    fn identical_gates_make_weather_mean_independent_of_weights() {
        let ls = four_level();
        let mut params = test_params(true);
        params.spline_unoccupied = params.spline_occupied.clone();
        let a = GaussianMixture1D::from_categorical(&[1.0, 0.0, 0.0, 0.0], &ls).unwrap();
        let b = GaussianMixture1D::from_categorical(&[0.1, 0.4, 0.3, 0.2], &ls).unwrap();
        let wa = weather_forward(&a, 20.0, &params).unwrap();
        let wb = weather_forward(&b, 20.0, &params).unwrap();
        assert!((wa.mean() - wb.mean()).abs() < 1e-12);
    }

    #[test]
    fn zero_occupancy_weather_mean_is_unoccupied_gate() {
        let ls = four_level();
        let params = test_params(true);
        let zero = GaussianMixture1D::from_categorical(&[1.0, 0.0, 0.0, 0.0], &ls).unwrap();
        let w = weather_forward(&zero, 22.0, &params).unwrap();
        let (b0, _) = params.gate_values(22.0);
        assert!((w.mean() - b0).abs() < 1e-12);
    }

    #[test]
    fn total_mean_is_sum_of_system_means() {
        let ls = four_level();
        let params = test_params(true);
        let proxy = GaussianMixture1D::from_categorical(&[0.1, 0.2, 0.3, 0.4], &ls).unwrap();
        let fwd = total_forward(&proxy, Some(28.0), &params, Scenario::Lumped, &ls).unwrap();
        let sum = fwd.plug.mean() + fwd.lighting.mean() + fwd.weather.as_ref().unwrap().mean();
        assert!((fwd.total.mean() - sum).abs() < 1e-10);

        // per-component variances add (plus floor and observation noise)
        let eff = params.effective();
        for k in 0..4 {
            let want = fwd.plug.variances()[k]
                + fwd.lighting.variances()[k]
                + fwd.weather.as_ref().unwrap().variances()[k]
                + eff.obs_variance;
            assert!((fwd.total.variances()[k] - want).abs() < 1e-12);
        }
    }

    #[test]
    fn separate_scenario_ignores_temperature() {
        let ls = four_level();
        let params = test_params(true);
        let proxy = GaussianMixture1D::from_categorical(&[0.1, 0.2, 0.3, 0.4], &ls).unwrap();
        let a = total_forward(&proxy, Some(-5.0), &params, Scenario::Separate, &ls).unwrap();
        let b = total_forward(&proxy, Some(35.0), &params, Scenario::Separate, &ls).unwrap();
        assert_eq!(a.total, b.total);
        assert!(a.weather.is_none());

        assert!(total_forward(&proxy, None, &params, Scenario::Lumped, &ls).is_err());
    }

    #[test]
    fn doubling_parameters_doubles_component_means() {
        let ls = four_level();
        let params = test_params(true);
        let mut doubled = params.clone();
        doubled.plug_dynamic *= 2.0;
        doubled.plug_base *= 2.0;
        doubled.light_dynamic *= 2.0;
        doubled.light_base *= 2.0;
        for c in doubled.spline_occupied.iter_mut() {
            *c *= 2.0;
        }
        for c in doubled.spline_unoccupied.iter_mut() {
            *c *= 2.0;
        }
        let proxy = GaussianMixture1D::from_categorical(&[0.2, 0.3, 0.4, 0.1], &ls).unwrap();
        let a = total_forward(&proxy, Some(20.0), &params, Scenario::Lumped, &ls).unwrap();
        let b = total_forward(&proxy, Some(20.0), &doubled, Scenario::Lumped, &ls).unwrap();
        for (ma, mb) in a.total.means().iter().zip(b.total.means()) {
            assert!((2.0 * ma - mb).abs() < 1e-10);
        }
    }

    #[test]
    fn negative_raw_capacities_clamp_to_zero() {
        let ls = four_level();
        let mut params = test_params(false);
        params.plug_dynamic = -4.0;
        params.plug_base = -1.0;
        params.light_dynamic = -2.0;
        params.light_base = -0.5;
        let proxy = GaussianMixture1D::from_categorical(&[0.25; 4], &ls).unwrap();
        let fwd = total_forward(&proxy, None, &params, Scenario::Separate, &ls).unwrap();
        assert!(fwd.total.mean() >= 0.0);
        assert!(fwd.total.mean() < 1e-12);
    }

    #[test]
    fn fast_path_matches_gm_route() {
        let ls = four_level();
        let params = test_params(true);
        let eff = params.effective();
        for probs in [[0.1, 0.2, 0.3, 0.4], [1.0, 0.0, 0.0, 0.0], [0.25; 4]] {
            let proxy = GaussianMixture1D::from_categorical(&probs, &ls).unwrap();
            let collapsed = proxy.binary_collapse(&ls).unwrap();
            for (temp, scenario) in [(Some(27.0), Scenario::Lumped), (None, Scenario::Separate)] {
                let gates = temp.map(|t| params.gate_values(t));
                let mut means = [0.0; 4];
                let mut vars = [0.0; 4];
                total_component_moments(
                    &eff,
                    proxy.means(),
                    proxy.variances(),
                    collapsed.means(),
                    collapsed.variances(),
                    gates,
                    &mut means,
                    &mut vars,
                );
                let fwd = total_forward(&proxy, temp, &params, scenario, &ls).unwrap();
                for k in 0..4 {
                    assert!((means[k] - fwd.total.means()[k]).abs() < 1e-12);
                    assert!((vars[k] - fwd.total.variances()[k]).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn params_json_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("params.json");
        let params = test_params(true);
        params.save_json(&path).unwrap();
        let back = DisaggregatorParams::<f64>::load_json(&path).unwrap();
        assert_eq!(params, back);
    }
}
