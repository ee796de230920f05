//! Pipeline stages: simulate or ingest a series, generate the candidate
//! pool, train, infer, evaluate against baselines, and assess setback
//! what-if scenarios. One building per job; portfolio runs fan jobs out
//! across worker threads and merge the metrics afterwards.

use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use chrono::NaiveDate;

use occuload_core::baselines::{
    gmm_levels, hmm_decode, hmm_fit, kmeans_levels, remove_weather_trend, scaler_sweep,
    slot_index, HmmModel,
};
use occuload_core::disaggregator::{
    init_params, occupant_forward, DisaggregatorParams, InitMetadata, OccupantSystem, Scenario,
};
use occuload_core::error::Error as CoreError;
use occuload_core::evaluation::{
    capacity_error, discretize_truth, es_r2, f1_report, map_clusters, normalize_counts,
    rmse_by_level, quantile, F1Report, RmseReport,
};
use occuload_core::generator::generate_pool;
use occuload_core::gm::GaussianMixture1D;
use occuload_core::levels::{LevelSet, HOURS_PER_DAY};
use occuload_core::num::derive_seed;
use occuload_core::schedule::ScheduleSet;
use occuload_core::series::BuildingSeries;
use occuload_core::synth::{simulate_building, GroundTruth, SimBuilding};
use occuload_core::trainer::{infer, train, PosteriorSeries, TrainResult};

use crate::config::RunConfig;
use crate::report;

/// One building's inputs, resolved from either the simulator or a CSV.
pub struct BuildingJob {
    pub name: String,
    pub series: BuildingSeries<f64>,
    pub truth: Option<GroundTruth<f64>>,
    pub train_days: usize,
    pub seed: u64,
}

/// Metric rows in long format: (method, metric, value).
#[derive(Debug, Clone, PartialEq)]
pub struct MetricRow {
    pub building: String,
    pub method: String,
    pub metric: String,
    pub value: f64,
}

pub struct BuildingOutcome {
    pub name: String,
    pub dir: PathBuf,
    pub params: DisaggregatorParams<f64>,
    pub metrics: Vec<MetricRow>,
    pub train_seconds: f64,
    pub loss_trace: Vec<f64>,
}

/// Resolve the configured jobs: run the simulator (writing series and
/// sidecar) or load the configured CSV.
pub fn prepare_jobs(config: &RunConfig) -> Result<Vec<BuildingJob>> {
    if let Some(sim) = &config.simulate {
        let mut jobs = Vec::with_capacity(sim.buildings);
        for b in 0..sim.buildings {
            let (building, climate) = SimBuilding::<f64>::preset(b);
            let days = sim.train_days + sim.test_days;
            let seed = derive_seed(config.seed, 1000 + b as u64);
            let (series, truth) =
                simulate_building(&building, climate, sim.start_date, days, seed)?;
            let name = format!("{}-{b}", building.name);
            let dir = config.out_dir.join(&name);
            std::fs::create_dir_all(&dir)?;
            series.write_csv(&dir.join("series.csv"))?;
            truth.save_json(&dir.join("truth.json"))?;
            jobs.push(BuildingJob {
                name,
                series,
                truth: Some(truth),
                train_days: sim.train_days,
                seed,
            });
        }
        Ok(jobs)
    } else {
        let input = config
            .input
            .as_ref()
            .ok_or_else(|| anyhow!("config has neither [simulate] nor [input]"))?;
        let mut series = BuildingSeries::load_csv(&input.series_csv, &input.holidays)
            .context("loading input series")?;
        // occupant counts (rather than ratios) normalize by the 99.9%
        // quantile, robust to occasional visitors beyond the regular crew
        if let Some(truth) = series.occupancy_truth() {
            let max = truth.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            if max > 1.5 {
                log::warn!(
                    "occupancy column looks like counts (max {max:.1}); normalizing by the 99.9% quantile"
                );
                let ratios = normalize_counts(truth)?;
                series = series.with_occupancy_truth(ratios)?;
            }
        }
        let truth = input
            .truth_json
            .as_ref()
            .map(|p| GroundTruth::load_json(p))
            .transpose()?;
        let total_days = series.days().map(|d| d.len()).unwrap_or(0);
        let train_days = if input.test_days > 0 && input.test_days < total_days {
            total_days - input.test_days
        } else {
            total_days
        };
        let name = input
            .series_csv
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "building".into());
        Ok(vec![BuildingJob {
            name,
            series,
            truth,
            train_days,
            seed: config.seed,
        }])
    }
}

pub fn load_schedules(config: &RunConfig) -> Result<ScheduleSet<f64>> {
    match config.input.as_ref().and_then(|i| i.schedules_csv.as_ref()) {
        Some(path) => Ok(ScheduleSet::load_csv(path)?),
        None => Ok(ScheduleSet::bundled()),
    }
}

/// The observed-meter view of a series under a scenario: the occupant-only
/// sum when training "separate" on data that has the breakdown.
fn observed_series(job: &BuildingJob, scenario: Scenario) -> Result<BuildingSeries<f64>> {
    match scenario {
        Scenario::Lumped => Ok(job.series.clone()),
        Scenario::Separate => {
            if job.series.systems().is_some() {
                Ok(job.series.clone().with_occupant_load()?)
            } else {
                Ok(job.series.clone())
            }
        }
    }
}

/// Run the full pipeline for one building and write its artifacts.
pub fn process_building(job: &BuildingJob, config: &RunConfig) -> Result<BuildingOutcome> {
    let dir = config.out_dir.join(&job.name);
    std::fs::create_dir_all(&dir)?;
    let scenario = config.scenario;
    let levels = config.levels.build()?;
    let schedules = load_schedules(config)?;

    let series = observed_series(job, scenario)?;
    let total_days = series.days()?.len();
    if job.train_days == 0 || job.train_days > total_days {
        bail!(
            "train window of {} days does not fit the {total_days}-day series",
            job.train_days
        );
    }
    let (train_series, test_series) = if job.train_days < total_days {
        let (a, b) = series.split_days(job.train_days)?;
        (a, Some(b))
    } else {
        (series.clone(), None)
    };

    // candidate pool, fixed for the whole run
    let pool = generate_pool(
        &schedules,
        &levels,
        config.generator.working_candidates,
        config.generator.non_working_candidates,
        derive_seed(job.seed, 11),
    )?;

    // parameter initialization from metadata
    let floor_area = job
        .truth
        .as_ref()
        .map(|t| t.building.floor_area_m2)
        .or(config.input.as_ref().and_then(|i| i.floor_area_m2))
        .ok_or_else(|| anyhow!("floor area unknown: provide input.floor_area_m2 or a sidecar"))?;
    let meta = InitMetadata {
        floor_area_m2: floor_area,
        light_intensity_w_m2: config.disaggregator.light_intensity_w_m2,
        plug_intensity_w_m2: config.disaggregator.plug_intensity_w_m2,
        peak_load_kw: train_series.peak_load(),
        temp_stats: train_series.temperature_stats(),
    };
    let init = init_params(&meta, config.disaggregator.spline())?;

    // Step I/II alternation on the training window
    let train_config = config.train.build(job.seed);
    let started = std::time::Instant::now();
    let TrainResult {
        params,
        posterior: _,
        loss_trace,
        epoch_seconds,
    } = train(&train_series, &pool, init, &train_config, scenario, &levels)?;
    let train_seconds = started.elapsed().as_secs_f64();
    params.save_json(&dir.join("params.json"))?;
    report::write_training_log(&dir.join("training_log.csv"), &loss_trace, &epoch_seconds)?;

    // inference over the full series for the emitted profiles
    let (posterior, ratios) = infer(&series, &pool, &params, train_config.top_k, scenario, &levels)?;
    report::write_occupancy_csv(&dir.join("occupancy.csv"), &series, &posterior, &ratios, &levels)?;
    report::write_systems_csv(
        &dir.join("systems.csv"),
        &series,
        &posterior,
        &params,
        scenario,
        &levels,
    )?;
    report::write_es_curves(
        &dir.join("es_curves.csv"),
        &params,
        job.truth.as_ref(),
        &train_series,
    )?;

    // evaluation on the held-out window
    let mut metrics = Vec::new();
    if let Some(test) = &test_series {
        if test.occupancy_truth().is_some() {
            let test_ratios = &ratios[train_series.len()..];
            let (rows, baseline_series) = evaluate_building(
                job,
                config,
                scenario,
                &levels,
                &series,
                test,
                job.train_days,
                test_ratios,
                &params,
            )?;
            metrics = rows;
            report::write_metrics_csv(&dir.join("metrics.csv"), &metrics)?;
            report::write_baselines_csv(&dir.join("baselines.csv"), &series, &baseline_series)?;
        } else {
            log::warn!("{}: no occupancy truth; skipping metrics", job.name);
        }
    }

    // what-if setback assessment
    if let Some(whatif) = &config.whatif {
        if scenario == Scenario::Lumped {
            let outcome = whatif_setback(
                &params,
                &series,
                (whatif.interval[0], whatif.interval[1]),
                &posterior,
                &levels,
            )?;
            report::write_whatif_csv(&dir.join("whatif.csv"), &outcome)?;
        } else {
            log::warn!("what-if assessment needs the lumped scenario; skipping");
        }
    }

    Ok(BuildingOutcome {
        name: job.name.clone(),
        dir,
        params,
        metrics,
        train_seconds,
        loss_trace,
    })
}

/// Per-step baseline outputs for the emitted CSV.
pub struct BaselineSeries {
    /// Start index of the evaluated window within the full series.
    pub test_start: usize,
    pub kmeans_labels: Vec<usize>,
    pub gmm_labels: Vec<usize>,
    pub gmm_posteriors: Vec<Vec<f64>>,
    pub hmm_labels: Vec<usize>,
    pub hmm_posteriors: Vec<Vec<f64>>,
    /// Scaler ratios over the evaluated window at the best z_max.
    pub scaler_ratios: Option<Vec<f64>>,
}

/// Evaluate the model and every baseline on the held-out window.
#[allow(clippy::too_many_arguments)]
fn evaluate_building(
    job: &BuildingJob,
    config: &RunConfig,
    scenario: Scenario,
    levels: &LevelSet<f64>,
    full: &BuildingSeries<f64>,
    test: &BuildingSeries<f64>,
    train_days: usize,
    test_ratios: &[f64],
    params: &DisaggregatorParams<f64>,
) -> Result<(Vec<MetricRow>, BaselineSeries)> {
    let _ = levels;
    let mut rows = Vec::new();
    let building = job.name.clone();
    let truth_ratios = test
        .occupancy_truth()
        .ok_or_else(|| anyhow!("evaluation needs occupancy truth"))?;
    let (thresholds, truth_labels) = discretize_truth(truth_ratios)?;

    fn push_f1(rows: &mut Vec<MetricRow>, building: &str, method: &str, r: &F1Report<f64>) {
        rows_push(rows, building, method, "f1_low", r.per_level[0]);
        rows_push(rows, building, method, "f1_medium", r.per_level[1]);
        rows_push(rows, building, method, "f1_high", r.per_level[2]);
        rows_push(rows, building, method, "f1_macro", r.macro_f1);
        rows_push(rows, building, method, "f1_weighted", r.weighted_f1);
    }
    fn push_rmse(rows: &mut Vec<MetricRow>, building: &str, method: &str, r: &RmseReport<f64>) {
        for (level, name) in ["rmse_low", "rmse_medium", "rmse_high"].iter().enumerate() {
            if let Some(v) = r.per_level[level] {
                rows_push(rows, building, method, name, v);
            }
        }
        rows_push(rows, building, method, "rmse_overall", r.overall);
    }

    // the model: continuous ratios categorized by the truth thresholds
    let model_labels = thresholds.labels(test_ratios);
    let model_f1 = f1_report::<f64>(&model_labels, &truth_labels)?;
    push_f1(&mut rows, &building, "model", &model_f1);
    let model_rmse = rmse_by_level(test_ratios, truth_ratios, &thresholds)?;
    push_rmse(&mut rows, &building, "model", &model_rmse);

    // weather-trend removal for the baselines on lumped data
    let test_start = train_days * HOURS_PER_DAY;
    let residual_full: Vec<f64> = match scenario {
        Scenario::Lumped => {
            let temps = full
                .temperature()
                .ok_or_else(|| anyhow!("lumped evaluation needs temperatures"))?;
            let (residual, _) = remove_weather_trend(full.load(), temps)?;
            residual
        }
        Scenario::Separate => full.load().to_vec(),
    };
    let residual_test = &residual_full[test_start..];

    // clustering baselines: fit on everything (unsupervised), score the
    // held-out window after the order-preserving level mapping
    let k = config.baselines.clusters;
    let km = kmeans_levels(&residual_full, k, derive_seed(job.seed, 21))?;
    let km_mapping = map_clusters::<f64>(&km.labels[test_start..], &truth_labels, k)?;
    push_f1(&mut rows, &building, "kmeans", &km_mapping.report);

    let gmm = gmm_levels(&residual_full, k, derive_seed(job.seed, 22))?;
    let gmm_mapping = map_clusters::<f64>(&gmm.labels[test_start..], &truth_labels, k)?;
    push_f1(&mut rows, &building, "gmm", &gmm_mapping.report);

    let slots: Vec<usize> = full
        .timestamps()
        .iter()
        .zip(full.day_types())
        .map(|(ts, &dt)| slot_index(chrono::Timelike::hour(ts) as usize, dt))
        .collect();
    let hmm_init = HmmModel::initial_guess(
        &residual_full,
        config.baselines.hmm_states,
        &config.baselines.hmm_prior,
        derive_seed(job.seed, 23),
    )?;
    let (hmm_model, info) = hmm_fit(&residual_full, &slots, hmm_init)?;
    if !info.converged {
        log::warn!("{building}: HMM did not converge ({} iterations)", info.iterations);
    }
    let gamma = hmm_decode(&hmm_model, &residual_full, &slots)?;
    let hmm_labels: Vec<usize> = gamma[test_start..]
        .iter()
        .map(|g| {
            g.iter()
                .enumerate()
                .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                .unwrap()
                .0
        })
        .collect();
    let hmm_mapping = map_clusters::<f64>(&hmm_labels, &truth_labels, config.baselines.hmm_states)?;
    push_f1(&mut rows, &building, "hmm", &hmm_mapping.report);

    // the linear scaler: best z_max on the evaluation window (the most
    // competitive baseline setting)
    let mut scaler_ratios = None;
    match scaler_sweep(residual_test, truth_ratios, &config.baselines.zmax_grid()) {
        Ok(sweep) => {
            let pred = occuload_core::baselines::linear_scaler(residual_test, sweep.best_z_max)?;
            let scaler_rmse = rmse_by_level(&pred, truth_ratios, &thresholds)?;
            rows_push(&mut rows, &building, "scaler", "best_z_max", sweep.best_z_max);
            push_rmse(&mut rows, &building, "scaler", &scaler_rmse);
            scaler_ratios = Some(pred);
        }
        Err(CoreError::Degenerate(msg)) => {
            log::warn!("{building}: scaler skipped: {msg}");
        }
        Err(e) => return Err(e.into()),
    }

    // generator-truth metrics
    if let Some(truth) = &job.truth {
        let (plug_pct, light_pct) =
            capacity_error(params, truth.plug_dynamic_kw, truth.light_dynamic_kw);
        if let Some(p) = plug_pct {
            rows_push(&mut rows, &building, "model", "plug_capacity_error_pct", p);
        }
        if let Some(l) = light_pct {
            rows_push(&mut rows, &building, "model", "light_capacity_error_pct", l);
        }
        if scenario == Scenario::Lumped {
            let r2 = es_recovery_r2(params, truth, full)?;
            rows_push(&mut rows, &building, "model", "es_r2", r2);
        }
    }

    let baseline_series = BaselineSeries {
        test_start,
        kmeans_labels: km.labels,
        gmm_labels: gmm.labels,
        gmm_posteriors: gmm.responsibilities,
        hmm_labels: gamma
            .iter()
            .map(|g| {
                g.iter()
                    .enumerate()
                    .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                    .unwrap()
                    .0
            })
            .collect(),
        hmm_posteriors: gamma,
        scaler_ratios,
    };
    Ok((rows, baseline_series))
}

fn rows_push(rows: &mut Vec<MetricRow>, building: &str, method: &str, metric: &str, value: f64) {
    rows.push(MetricRow {
        building: building.into(),
        method: method.into(),
        metric: metric.into(),
        value,
    });
}

/// R-squared of both gate splines against the generator's noiseless HVAC
/// curves, each gate evaluated on a grid spanning the temperatures actually
/// observed under that operation mode (the splines are not asked to
/// extrapolate into regimes a gate never visits). A single shared offset is
/// removed first: the common level is absorbed by the occupant base loads
/// and is not identifiable, while the gate difference is.
pub fn es_recovery_r2(
    params: &DisaggregatorParams<f64>,
    truth: &GroundTruth<f64>,
    series: &BuildingSeries<f64>,
) -> Result<f64> {
    let temps = series
        .temperature()
        .ok_or_else(|| anyhow!("signature recovery needs temperatures"))?;
    let ratios = series
        .occupancy_truth()
        .ok_or_else(|| anyhow!("signature recovery needs occupancy truth"))?;
    let split = |want_occupied: bool| -> Vec<f64> {
        temps
            .iter()
            .zip(ratios)
            .filter(|(_, &r)| (r >= occuload_core::synth::OCCUPIED_MODE_MIN_RATIO) == want_occupied)
            .map(|(&t, _)| t)
            .collect()
    };
    let n = 41;
    let mut grid_temps = Vec::with_capacity(2 * n);
    let mut truth_loads = Vec::with_capacity(2 * n);
    let mut occupied = Vec::with_capacity(2 * n);
    for occ in [true, false] {
        let observed = split(occ);
        if observed.len() < 10 {
            continue;
        }
        let lo = quantile(&observed, 0.05)?;
        let hi = quantile(&observed, 0.95)?;
        for i in 0..n {
            let t = lo + (hi - lo) * i as f64 / (n - 1) as f64;
            grid_temps.push(t);
            truth_loads.push(truth.building.hvac.load_at(t, occ));
            occupied.push(occ);
        }
    }
    Ok(es_r2(params, &grid_temps, &truth_loads, &occupied, true)?)
}

/// Per-day outcome of the setback what-if assessment.
#[derive(Debug, Clone)]
pub struct WhatIfDay {
    pub date: NaiveDate,
    pub before_kwh: f64,
    pub after_kwh: f64,
    pub adjusted_steps: usize,
}

#[derive(Debug, Clone)]
pub struct WhatIfOutcome {
    pub interval: (u32, u32),
    pub total_before_kwh: f64,
    pub total_after_kwh: f64,
    pub per_day: Vec<WhatIfDay>,
}

impl WhatIfOutcome {
    pub fn saving_kwh(&self) -> f64 {
        self.total_before_kwh - self.total_after_kwh
    }
}

/// Assess a more occupancy-responsive setback: for every step inside the
/// hour interval that operates in occupied mode while the inferred
/// occupancy says unoccupied, replace the occupied-gate trend with the
/// unoccupied-gate trend.
pub fn whatif_setback(
    params: &DisaggregatorParams<f64>,
    series: &BuildingSeries<f64>,
    interval: (u32, u32),
    posterior: &PosteriorSeries<f64>,
    levels: &LevelSet<f64>,
) -> Result<WhatIfOutcome> {
    if !params.trained {
        bail!("what-if assessment needs trained parameters");
    }
    let (from, to) = interval;
    if from > 23 || to > 23 || from > to {
        bail!("bad hour interval {from}-{to}");
    }
    let temps = series
        .temperature()
        .ok_or_else(|| anyhow!("what-if assessment needs temperatures"))?;
    if posterior.day_count() * HOURS_PER_DAY != series.len() {
        bail!("posterior does not cover the series");
    }
    let zero_probs = posterior.zero_level_probs();

    let mut per_day: Vec<WhatIfDay> = Vec::new();
    let mut total_before = 0.0;
    let mut total_after = 0.0;
    for (i, ts) in series.timestamps().iter().enumerate() {
        let hour = chrono::Timelike::hour(ts);
        if hour < from || hour > to {
            continue;
        }
        let load = series.load()[i];
        let day = i / HOURS_PER_DAY;
        if per_day.last().map(|d| d.date) != Some(ts.date()) {
            per_day.push(WhatIfDay {
                date: ts.date(),
                before_kwh: 0.0,
                after_kwh: 0.0,
                adjusted_steps: 0,
            });
        }
        let entry = per_day.last_mut().unwrap();

        let probs = posterior.profiles()[day].step(i % HOURS_PER_DAY);
        let proxy = GaussianMixture1D::from_categorical(probs, levels)?;
        let plug = occupant_forward(&proxy, params, OccupantSystem::Plug, levels)?;
        let lighting = occupant_forward(&proxy, params, OccupantSystem::Lighting, levels)?;
        let occupant_mean = plug.mean() + lighting.mean();
        let (b0, b1) = params.gate_values(temps[i]);

        let inferred_unoccupied = zero_probs[i] > 0.5;
        let occupied_operation =
            (load - (occupant_mean + b1)).abs() < (load - (occupant_mean + b0)).abs();
        let adjusted = if inferred_unoccupied && occupied_operation {
            entry.adjusted_steps += 1;
            (load - b1 + b0).max(0.0)
        } else {
            load
        };
        entry.before_kwh += load;
        entry.after_kwh += adjusted;
        total_before += load;
        total_after += adjusted;
    }
    Ok(WhatIfOutcome {
        interval,
        total_before_kwh: total_before,
        total_after_kwh: total_after,
        per_day,
    })
}

/// Run the configured pipeline end to end. Multiple simulated buildings
/// fan out across worker threads; outcomes merge in building order.
pub fn run_pipeline(config: &RunConfig) -> Result<Vec<BuildingOutcome>> {
    std::fs::create_dir_all(&config.out_dir)?;
    let jobs = prepare_jobs(config)?;
    let outcomes: Vec<Result<BuildingOutcome>> = if jobs.len() > 1 {
        std::thread::scope(|scope| {
            let handles: Vec<_> = jobs
                .iter()
                .map(|job| scope.spawn(move || process_building(job, config)))
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().unwrap_or_else(|_| Err(anyhow!("worker panicked"))))
                .collect()
        })
    } else {
        jobs.iter().map(|job| process_building(job, config)).collect()
    };
    let outcomes: Vec<BuildingOutcome> = outcomes
        .into_iter()
        .collect::<Result<Vec<_>>>()
        .context("pipeline stage failed")?;

    let merged: Vec<MetricRow> = outcomes.iter().flat_map(|o| o.metrics.clone()).collect();
    if !merged.is_empty() {
        report::write_metrics_csv(&config.out_dir.join("metrics.csv"), &merged)?;
        report::write_summary(&config.out_dir.join("summary.txt"), &merged)?;
    }
    Ok(outcomes)
}

/// Convenience accessor used by the evaluate/baseline subcommands: load a
/// previously trained parameter file from the building's output directory.
pub fn load_params(dir: &Path) -> Result<DisaggregatorParams<f64>> {
    let path = dir.join("params.json");
    DisaggregatorParams::load_json(&path)
        .with_context(|| format!("cannot load {}", path.display()))
}
