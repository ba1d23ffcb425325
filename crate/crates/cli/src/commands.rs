//! The batch commands: demonstration generation, the estimation-error
//! sweep, one selection run, the multi-trial selection statistics, and the
//! bound diagnostics.

use anyhow::{bail, Context, Result};
use rayon::prelude::*;
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use srm_irl::complexity::{bound_diagnostics, penalty, BoundDiagnostics};
use srm_irl::dataset::{load_demonstration, save_demonstration};
use srm_irl::features::reward_eval;
use srm_irl::mdp::Demonstration;
use srm_irl::risk::score_profile;
use srm_irl::seeding::derive_seed;
use srm_irl::srm::SrmReport;

use crate::config::Experiment;
use crate::pipeline::{
    collect_demonstration, mle_policy, run_selection, streams, subsample, train_expert,
    true_weights,
};
use crate::reports::{fmt, read_json_report, write_csv, write_json_report, write_key_values};

#[derive(Debug)]
pub struct GenerateOutcome {
    pub dataset_path: PathBuf,
    pub curve_path: PathBuf,
    pub expert_gain: nalgebra::DMatrix<f64>,
    pub returns: Vec<f64>,
}

/// Trains the expert, samples the demonstration, and writes the dataset and
/// the learning-curve CSV.
pub fn cmd_generate(exp: &Experiment, out_dir: &Path) -> Result<GenerateOutcome> {
    std::fs::create_dir_all(out_dir)
        .with_context(|| format!("creating {}", out_dir.display()))?;
    let trained = train_expert(exp)?;
    let demo = collect_demonstration(
        exp,
        &trained.policy,
        exp.demonstration_size,
        streams::DEMONSTRATION,
    )?;
    let dataset_path = out_dir.join("demonstration.txt");
    save_demonstration(&dataset_path, &demo, &exp.system)?;
    let curve_path = out_dir.join("learning_curve.csv");
    let rows: Vec<String> = trained
        .returns
        .iter()
        .enumerate()
        .map(|(episode, value)| format!("{episode},{}", fmt(*value)))
        .collect();
    write_csv(
        &curve_path,
        &exp.config_hash,
        exp.config.seed,
        "episode,average_return",
        &rows,
    )?;
    Ok(GenerateOutcome {
        dataset_path,
        curve_path,
        expert_gain: trained.policy.gain().clone(),
        returns: trained.returns,
    })
}

fn load_dataset(exp: &Experiment, dataset: &Path) -> Result<Demonstration> {
    let (header, demo) = load_demonstration(dataset)
        .with_context(|| format!("loading {}", dataset.display()))?;
    if header.state_dim != exp.system.state_dim()
        || header.action_dim != exp.system.action_dim()
        || header.horizon != exp.system.horizon()
    {
        bail!(
            "dataset dimensions ({}, {}, T={}) do not match the configuration ({}, {}, T={})",
            header.state_dim,
            header.action_dim,
            header.horizon,
            exp.system.state_dim(),
            exp.system.action_dim(),
            exp.system.horizon()
        );
    }
    Ok(demo)
}

#[derive(Debug, Clone)]
pub struct SweepRow {
    pub size: usize,
    pub seed_index: usize,
    pub error: f64,
}

#[derive(Debug)]
pub struct SweepOutcome {
    pub rows: Vec<SweepRow>,
    pub csv_path: PathBuf,
}

/// For each dataset size and subsampling seed: estimate the gain, solve the
/// ERM problem in the configured class, and record the parameter error
/// against the normalized true weights.
pub fn cmd_erm_sweep(exp: &Experiment, dataset: &Path, out_dir: &Path) -> Result<SweepOutcome> {
    std::fs::create_dir_all(out_dir)?;
    let demo = load_dataset(exp, dataset)?;
    for &size in &exp.config.sweep.sizes {
        if size > demo.len() {
            bail!(
                "sweep size {size} exceeds the dataset's {} trajectories",
                demo.len()
            );
        }
    }
    let class = exp.classes.classes()[exp.config.sweep.class_index - 1].clone();
    let truth = true_weights(&class, &exp.q, &exp.r)?;

    let cells: Vec<(usize, usize)> = (0..exp.config.sweep.seeds)
        .flat_map(|seed_index| {
            exp.config
                .sweep
                .sizes
                .iter()
                .map(move |&size| (seed_index, size))
        })
        .collect();
    let rows: Vec<Result<SweepRow>> = cells
        .par_iter()
        .map(|&(seed_index, size)| -> Result<SweepRow> {
            let order_seed = derive_seed(
                derive_seed(exp.config.seed, streams::SWEEP),
                seed_index as u64,
            );
            let sub = subsample(&demo, size, order_seed)?;
            let policy = mle_policy(&sub, exp.noise_std)?;
            let erm_config = srm_irl::erm::ErmConfig {
                seed: derive_seed(order_seed, size as u64),
                ..exp.srm.erm
            };
            let solution = srm_irl::erm::solve_erm(
                &sub,
                &policy,
                &class,
                &exp.srm.loss,
                &erm_config,
                exp.system.discount(),
            )?;
            let error = (solution.params.omega() - truth.omega()).norm();
            Ok(SweepRow {
                size,
                seed_index,
                error,
            })
        })
        .collect();
    let rows: Vec<SweepRow> = rows.into_iter().collect::<Result<_>>()?;

    let csv_path = out_dir.join("erm_sweep.csv");
    let lines: Vec<String> = rows
        .iter()
        .map(|r| format!("{},{},{}", r.size, r.seed_index, fmt(r.error)))
        .collect();
    write_csv(
        &csv_path,
        &exp.config_hash,
        exp.config.seed,
        "size,seed_index,omega_error",
        &lines,
    )?;
    Ok(SweepOutcome { rows, csv_path })
}

#[derive(Debug)]
pub struct SrmOutcome {
    pub report: SrmReport,
    pub report_path: PathBuf,
    pub classes_csv_path: PathBuf,
}

/// Runs the selection loop once on a stored dataset and writes the report
/// plus the per-class risk table.
pub fn cmd_srm(exp: &Experiment, dataset: &Path, out_dir: &Path) -> Result<SrmOutcome> {
    std::fs::create_dir_all(out_dir)?;
    let demo = load_dataset(exp, dataset)?;
    let report = run_selection(exp, &demo, streams::ERM)?;
    let report_path = out_dir.join("srm_report.json");
    write_json_report(&report_path, &report)?;
    let classes_csv_path = out_dir.join("srm_classes.csv");
    write_classes_csv(&classes_csv_path, exp, std::slice::from_ref(&report))?;
    Ok(SrmOutcome {
        report,
        report_path,
        classes_csv_path,
    })
}

fn write_classes_csv(path: &Path, exp: &Experiment, reports: &[SrmReport]) -> Result<()> {
    let mut lines = Vec::new();
    for (trial, report) in reports.iter().enumerate() {
        for result in &report.per_class {
            lines.push(format!(
                "{trial},{},{},{},{},{}",
                result.class_index,
                fmt(result.empirical_risk),
                fmt(result.penalty.total),
                fmt(result.structural_risk),
                if result.class_index == report.selected {
                    1
                } else {
                    0
                },
            ));
        }
    }
    write_csv(
        path,
        &exp.config_hash,
        exp.config.seed,
        "trial,class_index,empirical_risk,penalty,structural_risk,selected",
        &lines,
    )
}

#[derive(Debug)]
pub struct TrialsOutcome {
    pub reports: Vec<SrmReport>,
    pub failures: Vec<(usize, String)>,
    pub histogram: BTreeMap<usize, usize>,
    pub histogram_path: PathBuf,
    pub trials_path: PathBuf,
    pub classes_path: PathBuf,
}

/// Regenerates a fresh demonstration per trial from one trained expert,
/// runs the selection loop, and tabulates the selected-class histogram.
/// A failed trial is recorded and skipped, not fatal.
pub fn cmd_srm_trials(exp: &Experiment, trials: usize, out_dir: &Path) -> Result<TrialsOutcome> {
    if trials == 0 {
        bail!("trial count must be positive");
    }
    std::fs::create_dir_all(out_dir)?;
    let expert = train_expert(exp)?.policy;
    let outcomes: Vec<(usize, Result<SrmReport>)> = (0..trials)
        .into_par_iter()
        .map(|trial| {
            let stream = derive_seed(streams::TRIALS, trial as u64);
            let result = collect_demonstration(exp, &expert, exp.demonstration_size, stream)
                .and_then(|demo| run_selection(exp, &demo, derive_seed(stream, streams::ERM)));
            (trial, result)
        })
        .collect();

    let mut reports = Vec::new();
    let mut failures = Vec::new();
    let mut histogram: BTreeMap<usize, usize> = BTreeMap::new();
    let mut trial_rows = Vec::new();
    for (trial, outcome) in outcomes {
        match outcome {
            Ok(report) => {
                *histogram.entry(report.selected).or_insert(0) += 1;
                let picked = &report.per_class[report.selected - 1];
                trial_rows.push(format!(
                    "{trial},{},{},{},{},ok",
                    report.selected,
                    fmt(picked.empirical_risk),
                    fmt(picked.penalty.total),
                    fmt(picked.structural_risk),
                ));
                reports.push(report);
            }
            Err(error) => {
                let message = error.to_string().replace(',', ";").replace('\n', " ");
                trial_rows.push(format!("{trial},,,,,{message}"));
                failures.push((trial, message));
            }
        }
    }

    let trials_path = out_dir.join("trials.csv");
    write_csv(
        &trials_path,
        &exp.config_hash,
        exp.config.seed,
        "trial,selected,empirical_risk,penalty,structural_risk,status",
        &trial_rows,
    )?;

    let classes_path = out_dir.join("trials_classes.csv");
    write_classes_csv(&classes_path, exp, &reports)?;

    let histogram_path = out_dir.join("trials_histogram.csv");
    let hist_rows: Vec<String> = (1..=exp.classes.len())
        .map(|j| format!("{j},{}", histogram.get(&j).copied().unwrap_or(0)))
        .collect();
    write_csv(
        &histogram_path,
        &exp.config_hash,
        exp.config.seed,
        "class_index,count",
        &hist_rows,
    )?;

    Ok(TrialsOutcome {
        reports,
        failures,
        histogram,
        histogram_path,
        trials_path,
        classes_path,
    })
}

#[derive(Debug)]
pub struct BoundsOutcome {
    pub diagnostics: BoundDiagnostics,
    pub bounds_path: PathBuf,
}

/// Evaluates the bound diagnostics for the selected class of a stored
/// report on a stored dataset and writes the ingredient terms.
pub fn cmd_bounds(
    exp: &Experiment,
    dataset: &Path,
    report_path: &Path,
    out_dir: &Path,
) -> Result<BoundsOutcome> {
    std::fs::create_dir_all(out_dir)?;
    let demo = load_dataset(exp, dataset)?;
    let report = read_json_report(report_path)?;
    if report.selected == 0 || report.selected > exp.classes.len() {
        bail!(
            "report selects class {} outside the configured set",
            report.selected
        );
    }
    let class = &exp.classes.classes()[report.selected - 1];
    let policy = mle_policy(&demo, exp.noise_std)?;
    let score = score_profile(&demo, &policy);
    let breakdown = penalty(class, &demo, &score, &exp.srm.loss, exp.system.discount())?;
    let picked = &report.per_class[report.selected - 1];

    let mut clip_bound = 0.0f64;
    for traj in demo.trajectories() {
        for t in 0..traj.len() {
            let value = reward_eval(class, &report.solution, &traj.states()[t], &traj.actions()[t])?;
            clip_bound = clip_bound.max(value.abs());
        }
    }
    let clip_bound = clip_bound.max(f64::MIN_POSITIVE);

    let diagnostics = bound_diagnostics(
        picked.empirical_risk,
        &breakdown,
        &score,
        &exp.srm.loss,
        clip_bound,
        demo.len(),
        exp.classes.len(),
        exp.delta,
        exp.system.discount(),
    )?;

    let bounds_path = out_dir.join("bounds.txt");
    write_key_values(
        &bounds_path,
        &exp.config_hash,
        exp.config.seed,
        &[
            ("selected_class", report.selected.to_string()),
            ("delta", fmt(diagnostics.delta)),
            ("sample_count", demo.len().to_string()),
            ("class_count", exp.classes.len().to_string()),
            ("empirical_risk", fmt(picked.empirical_risk)),
            ("penalty", fmt(breakdown.total)),
            ("clip_bound", fmt(diagnostics.clip_bound)),
            ("score_mass", fmt(diagnostics.score_mass)),
            ("union_bound", fmt(diagnostics.union_bound_value)),
            ("srm_bound", fmt(diagnostics.srm_bound_value)),
            ("linear_srm_bound", fmt(diagnostics.linear_srm_bound_value)),
        ],
    )?;
    Ok(BoundsOutcome {
        diagnostics,
        bounds_path,
    })
}
