//! Run configuration: a TOML file with optional sections; every field has
//! a documented default (see the README schema).

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use occuload_core::baselines::HmmPrior;
use occuload_core::disaggregator::Scenario;
use occuload_core::levels::LevelSet;
use occuload_core::spline::SplineConfig;
use occuload_core::trainer::TrainConfig;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub scenario: Scenario,
    #[serde(default = "default_seed")]
    pub seed: u64,
    pub out_dir: PathBuf,
    #[serde(default)]
    pub simulate: Option<SimulateConfig>,
    #[serde(default)]
    pub input: Option<InputConfig>,
    #[serde(default)]
    pub levels: LevelsConfig,
    #[serde(default)]
    pub generator: GeneratorConfig,
    #[serde(default)]
    pub train: TrainSection,
    #[serde(default)]
    pub disaggregator: DisaggregatorConfig,
    #[serde(default)]
    pub baselines: BaselinesConfig,
    #[serde(default)]
    pub whatif: Option<WhatIfConfig>,
}

fn default_seed() -> u64 {
    42
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    #[serde(default = "default_buildings")]
    pub buildings: usize,
    #[serde(default = "default_train_days")]
    pub train_days: usize,
    #[serde(default = "default_test_days")]
    pub test_days: usize,
    #[serde(default = "default_start_date")]
    pub start_date: NaiveDate,
}

fn default_buildings() -> usize {
    3
}
fn default_train_days() -> usize {
    180
}
fn default_test_days() -> usize {
    60
}
fn default_start_date() -> NaiveDate {
    NaiveDate::from_ymd_opt(2024, 1, 1).unwrap()
}

impl Default for SimulateConfig {
    fn default() -> Self {
        Self {
            buildings: default_buildings(),
            train_days: default_train_days(),
            test_days: default_test_days(),
            start_date: default_start_date(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputConfig {
    pub series_csv: PathBuf,
    /// Ground-truth sidecar written by the simulator; enables capacity and
    /// signature metrics on pre-simulated data.
    #[serde(default)]
    pub truth_json: Option<PathBuf>,
    #[serde(default)]
    pub schedules_csv: Option<PathBuf>,
    #[serde(default)]
    pub holidays: Vec<NaiveDate>,
    /// Needed to initialize capacities when no sidecar is given.
    #[serde(default)]
    pub floor_area_m2: Option<f64>,
    /// Days held out at the end for evaluation (0 = no split).
    #[serde(default)]
    pub test_days: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LevelsConfig {
    pub centroids: Vec<f64>,
    pub boundary_offset: f64,
    pub boundary_std: f64,
}

impl Default for LevelsConfig {
    fn default() -> Self {
        Self {
            centroids: vec![0.0, 1.0 / 3.0, 2.0 / 3.0, 1.0],
            boundary_offset: 0.02,
            boundary_std: 0.02,
        }
    }
}

impl LevelsConfig {
    pub fn build(&self) -> Result<LevelSet<f64>> {
        LevelSet::new(
            self.centroids.clone(),
            self.boundary_offset,
            self.boundary_std,
        )
        .context("invalid [levels] section")
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GeneratorConfig {
    pub working_candidates: usize,
    pub non_working_candidates: usize,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            working_candidates: occuload_core::generator::DEFAULT_WORKING_CANDIDATES,
            non_working_candidates: occuload_core::generator::DEFAULT_NON_WORKING_CANDIDATES,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    pub top_k: usize,
    pub beta: f64,
    pub epochs: usize,
    pub learning_rate: f64,
    pub inner_iters: usize,
    pub capacity_anchor: f64,
    pub gate_floor_weight: f64,
    pub gate_contact_weight: f64,
}

impl Default for TrainSection {
    fn default() -> Self {
        let d = TrainConfig::<f64>::default();
        Self {
            top_k: d.top_k,
            beta: d.beta,
            epochs: d.epochs,
            learning_rate: d.learning_rate,
            inner_iters: d.inner_iters,
            capacity_anchor: d.capacity_anchor,
            gate_floor_weight: d.gate_floor_weight,
            gate_contact_weight: d.gate_contact_weight,
        }
    }
}

impl TrainSection {
    pub fn build(&self, seed: u64) -> TrainConfig<f64> {
        TrainConfig {
            top_k: self.top_k,
            beta: self.beta,
            epochs: self.epochs,
            learning_rate: self.learning_rate,
            inner_iters: self.inner_iters,
            capacity_anchor: self.capacity_anchor,
            gate_floor_weight: self.gate_floor_weight,
            gate_contact_weight: self.gate_contact_weight,
            seed,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DisaggregatorConfig {
    pub light_intensity_w_m2: f64,
    pub plug_intensity_w_m2: f64,
    pub spline_order: usize,
    pub spline_domain: [f64; 2],
    pub spline_grid_count: usize,
}

impl Default for DisaggregatorConfig {
    fn default() -> Self {
        let spline = SplineConfig::<f64>::default();
        Self {
            light_intensity_w_m2: occuload_core::disaggregator::DEFAULT_INTENSITY_W_M2,
            plug_intensity_w_m2: occuload_core::disaggregator::DEFAULT_INTENSITY_W_M2,
            spline_order: spline.order,
            spline_domain: [spline.domain.0, spline.domain.1],
            spline_grid_count: spline.grid_count,
        }
    }
}

impl DisaggregatorConfig {
    pub fn spline(&self) -> SplineConfig<f64> {
        SplineConfig {
            order: self.spline_order,
            domain: (self.spline_domain[0], self.spline_domain[1]),
            grid_count: self.spline_grid_count,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BaselinesConfig {
    pub clusters: usize,
    pub hmm_states: usize,
    pub hmm_prior: HmmPrior,
    pub zmax_grid_start: f64,
    pub zmax_grid_stop: f64,
    pub zmax_grid_step: f64,
}

impl Default for BaselinesConfig {
    fn default() -> Self {
        Self {
            clusters: 5,
            hmm_states: 5,
            hmm_prior: HmmPrior::default(),
            zmax_grid_start: 0.7,
            zmax_grid_stop: 1.0,
            zmax_grid_step: 0.05,
        }
    }
}

impl BaselinesConfig {
    pub fn zmax_grid(&self) -> Vec<f64> {
        let mut grid = Vec::new();
        let mut z = self.zmax_grid_start;
        while z <= self.zmax_grid_stop + 1e-9 {
            grid.push(z);
            z += self.zmax_grid_step;
        }
        grid
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WhatIfConfig {
    /// Inclusive hour interval (0-23) to assess.
    pub interval: [u32; 2],
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config {}", path.display()))?;
        let config: Self = toml::from_str(&text)
            .with_context(|| format!("cannot parse config {}", path.display()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.simulate.is_none() && self.input.is_none() {
            bail!("config needs a [simulate] or an [input] section");
        }
        if let Some(input) = &self.input {
            if !input.series_csv.exists() {
                bail!("input series {} does not exist", input.series_csv.display());
            }
            if let Some(p) = &input.truth_json {
                if !p.exists() {
                    bail!("truth sidecar {} does not exist", p.display());
                }
            }
            if let Some(p) = &input.schedules_csv {
                if !p.exists() {
                    bail!("schedules file {} does not exist", p.display());
                }
            }
        }
        if let Some(sim) = &self.simulate {
            if sim.buildings == 0 || sim.train_days == 0 || sim.test_days == 0 {
                bail!("[simulate] counts must be positive");
            }
        }
        if let Some(w) = &self.whatif {
            if w.interval[0] > 23 || w.interval[1] > 23 || w.interval[0] > w.interval[1] {
                bail!("[whatif] interval must satisfy 0 <= from <= to <= 23");
            }
        }
        self.levels.build()?;
        Ok(())
    }
}
