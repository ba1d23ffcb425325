use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use srm_irl_cli::commands;
use srm_irl_cli::config::{default_config_template, Experiment, ExperimentConfig};

/// Reward-model selection experiments on LQR tasks.
#[derive(Parser)]
#[command(name = "srm-irl", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonArgs {
    /// Experiment configuration (TOML); built-in defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory; overrides the configuration.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Base seed; overrides the configuration.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads for parallel sections (default: all cores).
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Train the expert, sample the demonstration, write the dataset and
    /// the learning curve.
    Generate {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Estimation error of the ERM weights against the true weights across
    /// dataset sizes.
    ErmSweep {
        #[command(flatten)]
        common: CommonArgs,
        /// Demonstration file written by `generate`.
        #[arg(long)]
        dataset: PathBuf,
    },
    /// One model-selection run on a stored dataset.
    Srm {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        dataset: PathBuf,
    },
    /// Selection statistics over freshly generated demonstrations.
    SrmTrials {
        #[command(flatten)]
        common: CommonArgs,
        /// Number of trials; overrides the configuration.
        #[arg(long)]
        trials: Option<usize>,
    },
    /// Generalization-bound diagnostics for a stored selection report.
    Bounds {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        dataset: PathBuf,
        /// Selection report written by `srm`.
        #[arg(long)]
        report: PathBuf,
    },
    /// Print the default configuration template.
    InitConfig,
}

fn resolve(common: &CommonArgs) -> Result<(Experiment, PathBuf)> {
    if let Some(jobs) = common.jobs {
        if jobs == 0 {
            bail!("--jobs must be positive");
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .context("configuring the thread pool")?;
    }
    let mut config = match &common.config {
        Some(path) => ExperimentConfig::from_path(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = common.seed {
        config.seed = seed;
    }
    if let Some(out) = &common.out {
        config.output_dir = out.display().to_string();
    }
    let out_dir = PathBuf::from(&config.output_dir);
    let experiment = config.resolve()?;
    Ok((experiment, out_dir))
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Generate { common } => {
            let (exp, out) = resolve(&common)?;
            let outcome = commands::cmd_generate(&exp, &out)?;
            println!(
                "trained expert over {} episodes; final average return {:.4}",
                outcome.returns.len(),
                outcome.returns.last().copied().unwrap_or(f64::NAN)
            );
            println!("dataset: {}", outcome.dataset_path.display());
            println!("learning curve: {}", outcome.curve_path.display());
        }
        Command::ErmSweep { common, dataset } => {
            let (exp, out) = resolve(&common)?;
            let outcome = commands::cmd_erm_sweep(&exp, &dataset, &out)?;
            for &size in &exp.config.sweep.sizes {
                let mut errors: Vec<f64> = outcome
                    .rows
                    .iter()
                    .filter(|r| r.size == size)
                    .map(|r| r.error)
                    .collect();
                errors.sort_by(|a, b| a.partial_cmp(b).unwrap());
                let median = errors[errors.len() / 2];
                println!("size {size}: median error {median:.4}");
            }
            println!("sweep table: {}", outcome.csv_path.display());
        }
        Command::Srm { common, dataset } => {
            let (exp, out) = resolve(&common)?;
            let outcome = commands::cmd_srm(&exp, &dataset, &out)?;
            for result in &outcome.report.per_class {
                println!(
                    "class {}: risk {:.4}  penalty {:.4}  structural {:.4}",
                    result.class_index,
                    result.empirical_risk,
                    result.penalty.total,
                    result.structural_risk
                );
            }
            println!("selected class: {}", outcome.report.selected);
            println!("report: {}", outcome.report_path.display());
        }
        Command::SrmTrials { common, trials } => {
            let (exp, out) = resolve(&common)?;
            let count = trials.unwrap_or(exp.config.trials.count);
            let outcome = commands::cmd_srm_trials(&exp, count, &out)?;
            for (class, hits) in &outcome.histogram {
                println!("class {class}: selected {hits} times");
            }
            if !outcome.failures.is_empty() {
                println!("failed trials: {}", outcome.failures.len());
            }
            println!("histogram: {}", outcome.histogram_path.display());
        }
        Command::Bounds {
            common,
            dataset,
            report,
        } => {
            let (exp, out) = resolve(&common)?;
            let outcome = commands::cmd_bounds(&exp, &dataset, &report, &out)?;
            println!("union bound:      {:.4}", outcome.diagnostics.union_bound_value);
            println!("srm bound:        {:.4}", outcome.diagnostics.srm_bound_value);
            println!(
                "linear srm bound: {:.4}",
                outcome.diagnostics.linear_srm_bound_value
            );
            println!("written to: {}", outcome.bounds_path.display());
        }
        Command::InitConfig => {
            print!("{}", default_config_template());
        }
    }
    Ok(())
}
