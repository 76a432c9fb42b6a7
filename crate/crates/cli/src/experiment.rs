//! Running configs, expanding presets, and fitting stored series.

use anyhow::{anyhow, bail, Context, Result};
use qwalk_core::analysis::{
    default_tail_start, ensemble_run, fit_brownian, fit_diffusion, fit_quadratic_coefficient, EnsembleResult,
    Execution, VarianceSeries,
};
use qwalk_core::classical::{brownian_variance, d_cl, gamma_from_p, BrownianParams, COHERENT_C};
use qwalk_core::links::{coherence_time, d_bl, DEFAULT_K};
use qwalk_core::measure::{d_rm_from_kernel, kernel_q, MeasurementSchedule};
use qwalk_core::{CoinOperator, Qubit};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::config::{ConfigLayer, ExperimentConfig, ModelKind};
use crate::output::{FitRow, Records, ResultFile};

pub const MEASUREMENT_PRESET_TRAJECTORIES: u64 = 10_000;
pub const LINK_PRESET_TRAJECTORIES: u64 = 2_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    /// Periodic measurements with T = 10 and T = 20.
    Fig2,
    /// Averaged distributions at t = 50 and t = 1000 for p = 0.01, with the coherent profiles.
    Fig4,
    /// Variance for p = 0.01 against the coherent walk.
    Fig5,
    /// Variance for several link-breaking probabilities, the coherent walk and a classical walk.
    Fig6,
    /// Broken-link variance with Brownian-motion overlays.
    Fig7,
}

impl Preset {
    pub fn name(self) -> &'static str {
        match self {
            Preset::Fig2 => "fig2",
            Preset::Fig4 => "fig4",
            Preset::Fig5 => "fig5",
            Preset::Fig6 => "fig6",
            Preset::Fig7 => "fig7",
        }
    }
}

/// Values overriding preset defaults.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PresetOverrides {
    pub steps: Option<u64>,
    pub trajectories: Option<u64>,
    pub seed: Option<u64>,
    pub theta: Option<f64>,
}

/// One output series of a preset before it is run.
#[derive(Debug, Clone, PartialEq)]
pub enum PlannedSeries {
    Ensemble {
        label: String,
        config: ExperimentConfig,
    },
    /// Analytic Brownian variance curve for broken links with probability `p`.
    BrownianOverlay {
        label: String,
        p: f64,
        steps: u64,
    },
}

fn p_label(p: f64) -> String {
    format!("p{p}")
}

/// Expands a preset into fully explicit series.
pub fn preset_plan(preset: Preset, overrides: PresetOverrides) -> Result<Vec<PlannedSeries>> {
    let make = |model: ModelKind, steps: u64, trajectories: u64, f: &dyn Fn(&mut ConfigLayer)| {
        let mut layer = ConfigLayer {
            model: Some(model),
            steps: Some(overrides.steps.unwrap_or(steps)),
            trajectories: Some(overrides.trajectories.unwrap_or(trajectories)),
            seed: overrides.seed,
            theta: overrides.theta,
            preset: Some(preset.name().to_owned()),
            ..Default::default()
        };
        f(&mut layer);
        layer.resolve().map_err(anyhow::Error::from)
    };
    let links = |p: f64, steps: u64, snapshots: Vec<u64>| {
        make(ModelKind::Links, steps, LINK_PRESET_TRAJECTORIES, &|l| {
            l.p = Some(p);
            l.snapshots = Some(snapshots.clone());
        })
        .map(|config| PlannedSeries::Ensemble {
            label: format!("links_{}", p_label(p)),
            config,
        })
    };
    let coherent = |steps: u64, snapshots: Vec<u64>| {
        make(ModelKind::Coherent, steps, 1, &|l| {
            l.snapshots = Some(snapshots.clone())
        })
        .map(|config| PlannedSeries::Ensemble {
            label: "coherent".to_owned(),
            config,
        })
    };

    let mut plan = Vec::new();
    match preset {
        Preset::Fig2 => {
            for period in [10, 20] {
                let config = make(ModelKind::Measure, 200, MEASUREMENT_PRESET_TRAJECTORIES, &|l| {
                    l.period = Some(period)
                })?;
                plan.push(PlannedSeries::Ensemble {
                    label: format!("measure_T{period}"),
                    config,
                });
            }
        }
        Preset::Fig4 => {
            let steps = overrides.steps.unwrap_or(1000);
            let snapshots = vec![50.min(steps), steps];
            plan.push(links(0.01, steps, snapshots.clone())?);
            plan.push(coherent(steps, snapshots)?);
        }
        Preset::Fig5 => {
            plan.push(links(0.01, 1000, Vec::new())?);
            plan.push(coherent(1000, Vec::new())?);
        }
        Preset::Fig6 => {
            for p in [0.01, 0.03, 0.10, 0.20, 0.40] {
                plan.push(links(p, 1000, Vec::new())?);
            }
            plan.push(coherent(1000, Vec::new())?);
            let config = make(ModelKind::Classical, 1000, 1, &|l| l.p = Some(0.0))?;
            plan.push(PlannedSeries::Ensemble {
                label: "classical_p0".to_owned(),
                config,
            });
        }
        Preset::Fig7 => {
            for p in [0.01, 0.1, 0.3, 0.4] {
                let series = links(p, 2000, Vec::new())?;
                let steps = match &series {
                    PlannedSeries::Ensemble { config, .. } => config.steps,
                    PlannedSeries::BrownianOverlay { .. } => unreachable!(),
                };
                plan.push(series);
                plan.push(PlannedSeries::BrownianOverlay {
                    label: format!("brownian_{}", p_label(p)),
                    p,
                    steps,
                });
            }
        }
    }
    Ok(plan)
}

fn config_json(config: &ExperimentConfig) -> serde_json::Value {
    let mut embedded = config.clone();
    embedded.output_path = None;
    embedded.output_format = Default::default();
    serde_json::to_value(embedded).expect("config serializes")
}

fn variance_records(series: &VarianceSeries) -> Records {
    Records::Variance {
        t: series.times.clone(),
        sigma2: series.sigma2.clone(),
        stderr: series.standard_errors.clone(),
    }
}

/// Exact `sigma_q^2` average over one cycle of the schedule divided by `2 <T>`.
pub fn exact_measurement_diffusion(
    schedule: &MeasurementSchedule,
    coin: &CoinOperator,
    qubit: Qubit,
) -> Result<f64> {
    let intervals: Vec<u32> = match schedule {
        MeasurementSchedule::Periodic { period } => vec![*period],
        MeasurementSchedule::UniformRandom { min, max } => (*min..=*max).collect(),
        MeasurementSchedule::Explicit { intervals } => intervals.clone(),
    };
    let (mut var, mut time) = (0.0, 0.0);
    for &t in &intervals {
        let k = kernel_q(t, coin, qubit)?;
        var += 2.0 * t as f64 * d_rm_from_kernel(&k);
        time += t as f64;
    }
    Ok(var / (2.0 * time))
}

fn summarize(config: &ExperimentConfig, result: &EnsembleResult, mut file: ResultFile) -> Result<ResultFile> {
    let series = &result.series;
    let last = series.last_time();
    file = file
        .with_summary("final_sigma2", *series.sigma2.last().unwrap_or(&0.0))
        .with_summary("ensemble_size", series.ensemble_size as f64);
    let late_tail = (last / 2, last);
    match config.model {
        ModelKind::Coherent => {
            if let Ok(fit) = fit_quadratic_coefficient(series, (late_tail.0.max(10), last)) {
                file = file.with_summary("quadratic_c", fit.c);
            }
        }
        ModelKind::Measure => {
            let spec = config.ensemble_spec()?;
            if let Some(schedule) = config.schedule()? {
                file = file.with_summary(
                    "d_theory",
                    exact_measurement_diffusion(&schedule, &spec.coin, spec.qubit)?,
                );
            }
            if let Ok(fit) = fit_diffusion(series, late_tail) {
                file = file.with_summary("d_fit", fit.d);
            }
        }
        ModelKind::Classical => {
            let p = config.p.unwrap_or_default();
            file = file.with_summary("d_theory", d_cl(p)?);
            if let Ok(fit) = fit_diffusion(series, late_tail) {
                file = file.with_summary("d_fit", fit.d);
            }
        }
        ModelKind::Links => {
            let p = config.p.unwrap_or_default();
            if let Some(tc) = coherence_time(p)?.finite() {
                file = file.with_summary("coherence_time", tc);
                if let Ok(fit) = fit_diffusion(series, (default_tail_start(tc), last)) {
                    file = file.with_summary("d_fit", fit.d);
                }
            }
            if let Ok(d) = d_bl(p, DEFAULT_K) {
                file = file.with_summary("d_theory", d);
            }
            if let Ok(fit) = fit_brownian(series, Some(COHERENT_C)) {
                file = file.with_summary("gamma_fit", fit.params.gamma);
            }
            if let Ok(g) = gamma_from_p(p) {
                file = file.with_summary("gamma_theory", g);
            }
            file = file.with_summary("confinement_dominated", result.confinement_dominated as u8 as f64);
        }
    }
    Ok(file)
}

/// Runs one config: a variance series followed by one distribution per snapshot.
pub fn run_experiment(
    config: &ExperimentConfig,
    label: &str,
    execution: Execution,
) -> Result<Vec<ResultFile>> {
    let spec = config.ensemble_spec()?;
    let result = ensemble_run(&spec, execution)?;
    let embedded = config_json(config);
    let seed = Some(config.seed);
    let variance = ResultFile::new(label, seed, embedded.clone(), variance_records(&result.series));
    let mut files = vec![summarize(config, &result, variance)?];
    for snap in &result.snapshots {
        let (n, p): (Vec<i64>, Vec<f64>) = snap.distribution.iter().unzip();
        files.push(ResultFile::new(
            format!("{label}_t{}", snap.time),
            seed,
            embedded.clone(),
            Records::Distribution { n, p },
        ));
    }
    Ok(files)
}

pub fn brownian_overlay(label: &str, p: f64, steps: u64) -> Result<ResultFile> {
    let params = BrownianParams::new(COHERENT_C, gamma_from_p(p)?)?;
    let t: Vec<u64> = (0..=steps).collect();
    let sigma2 = t.iter().map(|&t| brownian_variance(params, t as f64)).collect();
    let config = json!({ "overlay": "brownian", "p": p, "steps": steps });
    Ok(ResultFile::new(
        label,
        None,
        config,
        Records::Variance {
            stderr: vec![0.0; t.len()],
            t,
            sigma2,
        },
    )
    .with_summary("c", params.c)
    .with_summary("gamma", params.gamma))
}

pub fn run_plan(plan: &[PlannedSeries], execution: Execution) -> Result<Vec<ResultFile>> {
    let mut files = Vec::new();
    for series in plan {
        match series {
            PlannedSeries::Ensemble { label, config } => {
                files.extend(run_experiment(config, label, execution)?)
            }
            PlannedSeries::BrownianOverlay { label, p, steps } => {
                files.push(brownian_overlay(label, *p, *steps)?)
            }
        }
    }
    Ok(files)
}

/// Recomputes a stored series from its embedded configuration.
pub fn regenerate(file: &ResultFile, execution: Execution) -> Result<ResultFile> {
    if file.config.get("overlay").is_some() {
        let p = file.config["p"]
            .as_f64()
            .ok_or_else(|| anyhow!("overlay without `p`"))?;
        let steps = file.config["steps"]
            .as_u64()
            .ok_or_else(|| anyhow!("overlay without `steps`"))?;
        return brownian_overlay(&file.label, p, steps);
    }
    if file.config.get("fit").is_some() {
        bail!("`{}` holds fit results; rerun them with `qwalk fit`", file.label);
    }
    let config = ExperimentConfig::from_json(&file.config.to_string())
        .with_context(|| format!("embedded config of `{}`", file.label))?;
    let stem = file.label.rsplit_once("_t").map(|(s, _)| s);
    let candidates = run_experiment(&config, stem.unwrap_or(&file.label), execution)?;
    let wanted = candidates.iter().find(|f| f.label == file.label);
    let fallback = || run_experiment(&config, &file.label, execution).map(|mut v| v.swap_remove(0));
    match wanted {
        Some(f) => Ok(f.clone()),
        None => fallback(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum FitKind {
    Diffusion,
    Brownian,
    Quadratic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitRequest {
    pub fit: FitKind,
    pub input: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window: Option<(u64, u64)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fixed_c: Option<f64>,
}

pub fn series_from_file(file: &ResultFile) -> Result<VarianceSeries> {
    match &file.records {
        Records::Variance { t, sigma2, stderr } => Ok(VarianceSeries {
            times: t.clone(),
            sigma2: sigma2.clone(),
            standard_errors: stderr.clone(),
            ensemble_size: file.summary_value("ensemble_size").map_or(1, |n| n as u64),
        }),
        _ => bail!("`{}` does not hold a variance series", file.label),
    }
}

/// Fits a stored variance series and returns the fit summary as a result file.
pub fn run_fit(request: &FitRequest, input: &ResultFile) -> Result<ResultFile> {
    let series = series_from_file(input)?;
    let last = series.last_time();
    let row = |parameter: &str, value: f64, ci: Option<(f64, f64)>| FitRow {
        parameter: parameter.to_owned(),
        value,
        ci_low: ci.map(|c| c.0),
        ci_high: ci.map(|c| c.1),
    };
    let (window, rows) = match request.fit {
        FitKind::Diffusion => {
            let window = request.window.unwrap_or((last / 2, last));
            let fit = fit_diffusion(&series, window)?;
            (
                Some(window),
                vec![
                    row("D", fit.d, Some((fit.ci_low, fit.ci_high))),
                    row("intercept", fit.intercept, None),
                ],
            )
        }
        FitKind::Quadratic => {
            let window = request.window.unwrap_or(((last / 2).max(10), last));
            let fit = fit_quadratic_coefficient(&series, window)?;
            (
                Some(window),
                vec![
                    row("C", fit.c, None),
                    row("relative_rms_residual", fit.relative_rms_residual, None),
                ],
            )
        }
        FitKind::Brownian => {
            let fit = fit_brownian(&series, request.fixed_c)?;
            let p = fit.params;
            (
                None,
                vec![
                    row("C", p.c, None),
                    row("gamma", p.gamma, None),
                    row("D", p.diffusion(), None),
                ],
            )
        }
    };
    let mut embedded = request.clone();
    embedded.window = window;
    let config = serde_json::to_value(&embedded).expect("fit request serializes");
    let label = format!(
        "{}_fit_{}",
        input.label,
        serde_json::to_value(request.fit)?.as_str().unwrap_or("fit")
    );
    Ok(ResultFile::new(label, input.seed, config, Records::Fit { rows }))
}
