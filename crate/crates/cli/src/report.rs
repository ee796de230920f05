//! Artifact emitters: occupancy and system-level CSVs, energy-signature
//! plot data, the training log, metrics and the human-readable summary.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use anyhow::Result;

use occuload_core::disaggregator::{
    occupant_forward, weather_forward, DisaggregatorParams, OccupantSystem, Scenario,
};
use occuload_core::evaluation::quantile;
use occuload_core::gm::GaussianMixture1D;
use occuload_core::levels::{LevelSet, HOURS_PER_DAY};
use occuload_core::series::{BuildingSeries, TIMESTAMP_FORMAT};
use occuload_core::synth::GroundTruth;
use occuload_core::trainer::PosteriorSeries;

use crate::pipeline::{MetricRow, WhatIfOutcome};

pub fn write_training_log(path: &Path, loss_trace: &[f64], epoch_seconds: &[f64]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["epoch", "loss", "wall_time_s"])?;
    for (epoch, (loss, secs)) in loss_trace.iter().zip(epoch_seconds).enumerate() {
        w.write_record([epoch.to_string(), format!("{loss}"), format!("{secs:.3}")])?;
    }
    w.flush()?;
    Ok(())
}

/// Per-hour posterior and expected occupancy ratio.
pub fn write_occupancy_csv(
    path: &Path,
    series: &BuildingSeries<f64>,
    posterior: &PosteriorSeries<f64>,
    ratios: &[f64],
    levels: &LevelSet<f64>,
) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["timestamp".to_string(), "expected_ratio".to_string()];
    for k in 0..levels.count() {
        header.push(format!("p_level_{k}"));
    }
    w.write_record(&header)?;
    for (i, ts) in series.timestamps().iter().enumerate() {
        let day = i / HOURS_PER_DAY;
        let probs = posterior.profiles()[day].step(i % HOURS_PER_DAY);
        let mut row = vec![ts.format(TIMESTAMP_FORMAT).to_string(), format!("{}", ratios[i])];
        for &p in probs {
            row.push(format!("{p}"));
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Expected system-level load means under the inferred posterior.
pub fn write_systems_csv(
    path: &Path,
    series: &BuildingSeries<f64>,
    posterior: &PosteriorSeries<f64>,
    params: &DisaggregatorParams<f64>,
    scenario: Scenario,
    levels: &LevelSet<f64>,
) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "timestamp",
        "observed_kw",
        "plug_kw",
        "lighting_kw",
        "weather_kw",
        "total_kw",
    ])?;
    let temps = series.temperature();
    for (i, ts) in series.timestamps().iter().enumerate() {
        let day = i / HOURS_PER_DAY;
        let probs = posterior.profiles()[day].step(i % HOURS_PER_DAY);
        let proxy = GaussianMixture1D::from_categorical(probs, levels)?;
        let plug = occupant_forward(&proxy, params, OccupantSystem::Plug, levels)?.mean();
        let lighting = occupant_forward(&proxy, params, OccupantSystem::Lighting, levels)?.mean();
        let weather = match (scenario, temps) {
            (Scenario::Lumped, Some(t)) => {
                Some(weather_forward(&proxy, t[i], params)?.mean())
            }
            _ => None,
        };
        let total = plug + lighting + weather.unwrap_or(0.0);
        w.write_record([
            ts.format(TIMESTAMP_FORMAT).to_string(),
            format!("{}", series.load()[i]),
            format!("{plug}"),
            format!("{lighting}"),
            weather.map(|v| format!("{v}")).unwrap_or_default(),
            format!("{total}"),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Both gate splines on a temperature grid, with the generator's noiseless
/// curves alongside when a sidecar is available.
pub fn write_es_curves(
    path: &Path,
    params: &DisaggregatorParams<f64>,
    truth: Option<&GroundTruth<f64>>,
    train_series: &BuildingSeries<f64>,
) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["temperature_c", "unoccupied_kw", "occupied_kw"];
    if truth.is_some() {
        header.extend(["truth_unoccupied_kw", "truth_occupied_kw"]);
    }
    w.write_record(&header)?;
    let (lo, hi) = match train_series.temperature() {
        Some(temps) => (quantile(temps, 0.01)?, quantile(temps, 0.99)?),
        None => {
            // separate scenario: emit the normalized domain mapped back
            let (d0, d1) = params.spline.domain;
            (
                params.temp_mean + d0 * params.temp_std,
                params.temp_mean + d1 * params.temp_std,
            )
        }
    };
    let n = 81;
    for i in 0..n {
        let t = lo + (hi - lo) * i as f64 / (n - 1) as f64;
        let (b0, b1) = params.gate_values(t);
        let mut row = vec![format!("{t}"), format!("{b0}"), format!("{b1}")];
        if let Some(gt) = truth {
            row.push(format!("{}", gt.building.hvac.load_at(t, false)));
            row.push(format!("{}", gt.building.hvac.load_at(t, true)));
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Long-format baseline outputs: one row per (timestamp, method) with the
/// hard level or ratio plus posterior columns where the method has them.
pub fn write_baselines_csv(
    path: &Path,
    series: &BuildingSeries<f64>,
    baselines: &crate::pipeline::BaselineSeries,
) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let max_states = baselines
        .gmm_posteriors
        .first()
        .map(Vec::len)
        .unwrap_or(0)
        .max(baselines.hmm_posteriors.first().map(Vec::len).unwrap_or(0));
    let mut header = vec!["timestamp".to_string(), "method".to_string(), "level".to_string(), "ratio".to_string()];
    for k in 0..max_states {
        header.push(format!("p_state_{k}"));
    }
    w.write_record(&header)?;
    let blank = String::new();
    let mut write_row = |ts: &str, method: &str, level: Option<usize>, ratio: Option<f64>, post: Option<&[f64]>| -> Result<()> {
        let mut row = vec![
            ts.to_string(),
            method.to_string(),
            level.map(|l| l.to_string()).unwrap_or_else(|| blank.clone()),
            ratio.map(|r| format!("{r}")).unwrap_or_else(|| blank.clone()),
        ];
        for k in 0..max_states {
            row.push(
                post.and_then(|p| p.get(k))
                    .map(|v| format!("{v}"))
                    .unwrap_or_else(|| blank.clone()),
            );
        }
        w.write_record(&row)?;
        Ok(())
    };
    for (i, ts) in series.timestamps().iter().enumerate() {
        let stamp = ts.format(TIMESTAMP_FORMAT).to_string();
        write_row(&stamp, "kmeans", Some(baselines.kmeans_labels[i]), None, None)?;
        write_row(
            &stamp,
            "gmm",
            Some(baselines.gmm_labels[i]),
            None,
            Some(&baselines.gmm_posteriors[i]),
        )?;
        write_row(
            &stamp,
            "hmm",
            Some(baselines.hmm_labels[i]),
            None,
            Some(&baselines.hmm_posteriors[i]),
        )?;
        if let Some(scaler) = &baselines.scaler_ratios {
            if i >= baselines.test_start {
                write_row(&stamp, "scaler", None, Some(scaler[i - baselines.test_start]), None)?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_metrics_csv(path: &Path, rows: &[MetricRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["building", "method", "metric", "value"])?;
    for r in rows {
        w.write_record([
            r.building.clone(),
            r.method.clone(),
            r.metric.clone(),
            format!("{}", r.value),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Human-readable method-by-metric table per building.
pub fn write_summary(path: &Path, rows: &[MetricRow]) -> Result<()> {
    let mut buildings: BTreeMap<&str, BTreeMap<&str, BTreeMap<&str, f64>>> = BTreeMap::new();
    for r in rows {
        buildings
            .entry(&r.building)
            .or_default()
            .entry(&r.method)
            .or_default()
            .insert(&r.metric, r.value);
    }
    let metric_order = [
        "f1_low",
        "f1_medium",
        "f1_high",
        "f1_macro",
        "f1_weighted",
        "rmse_low",
        "rmse_medium",
        "rmse_high",
        "rmse_overall",
        "best_z_max",
        "plug_capacity_error_pct",
        "light_capacity_error_pct",
        "es_r2",
    ];
    let mut out = String::new();
    for (building, methods) in &buildings {
        out.push_str(&format!("== {building} ==\n"));
        let mut metrics: Vec<&str> = Vec::new();
        for name in metric_order {
            if methods.values().any(|m| m.contains_key(name)) {
                metrics.push(name);
            }
        }
        out.push_str(&format!("{:<10}", "method"));
        for m in &metrics {
            out.push_str(&format!("{m:>26}"));
        }
        out.push('\n');
        for (method, values) in methods {
            out.push_str(&format!("{method:<10}"));
            for m in &metrics {
                match values.get(m) {
                    Some(v) => out.push_str(&format!("{v:>26.4}")),
                    None => out.push_str(&format!("{:>26}", "-")),
                }
            }
            out.push('\n');
        }
        out.push('\n');
    }
    let mut file = std::fs::File::create(path)?;
    file.write_all(out.as_bytes())?;
    Ok(())
}

pub fn write_whatif_csv(path: &Path, outcome: &WhatIfOutcome) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["date", "before_kwh", "after_kwh", "saving_kwh", "adjusted_steps"])?;
    for day in &outcome.per_day {
        w.write_record([
            day.date.format("%Y-%m-%d").to_string(),
            format!("{}", day.before_kwh),
            format!("{}", day.after_kwh),
            format!("{}", day.before_kwh - day.after_kwh),
            day.adjusted_steps.to_string(),
        ])?;
    }
    w.write_record([
        "total".to_string(),
        format!("{}", outcome.total_before_kwh),
        format!("{}", outcome.total_after_kwh),
        format!("{}", outcome.saving_kwh()),
        outcome
            .per_day
            .iter()
            .map(|d| d.adjusted_steps)
            .sum::<usize>()
            .to_string(),
    ])?;
    w.flush()?;
    Ok(())
}
