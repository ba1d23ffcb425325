//! Experiment configuration: TOML schema, defaults, validation, and
//! resolution into core types.
//!
//! The dynamics, cost matrices, noise level and solver settings default to
//! implementation choices (the source experiments do not publish them); a
//! config file overrides any subset.

use anyhow::{bail, Context, Result};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::Path;

use srm_irl::erm::{ErmConfig, StepRule};
use srm_irl::features::{default_lqr_classes, FeatureTerm, HypothesisClass, HypothesisSet};
use srm_irl::learning::TrainConfig;
use srm_irl::mdp::{InitialDistribution, LqrSystem};
use srm_irl::risk::LossSpec;
use srm_irl::srm::SrmConfig;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Base seed; every stream (training, demonstrations, solvers, trials)
    /// derives from it.
    pub seed: u64,
    /// Output directory for datasets, reports and CSV files.
    pub output_dir: String,
    /// Confidence level for the bound diagnostics.
    pub delta: f64,
    pub system: SystemConfig,
    pub cost: CostConfig,
    pub policy: PolicyConfig,
    pub initial_state: InitialStateConfig,
    pub training: TrainingConfig,
    pub demonstration: DemonstrationConfig,
    pub erm: ErmSection,
    pub sweep: SweepConfig,
    pub trials: TrialsConfig,
    pub srm: SrmSection,
    /// Optional explicit hypothesis classes; each class is a list of
    /// `[state_power, action_power]` pairs. Defaults to the built-in
    /// five-class polynomial hierarchy.
    pub classes: Option<Vec<ClassSpec>>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 17,
            output_dir: "out".into(),
            delta: 0.05,
            system: SystemConfig::default(),
            cost: CostConfig::default(),
            policy: PolicyConfig::default(),
            initial_state: InitialStateConfig::default(),
            training: TrainingConfig::default(),
            demonstration: DemonstrationConfig::default(),
            erm: ErmSection::default(),
            sweep: SweepConfig::default(),
            trials: TrialsConfig::default(),
            srm: SrmSection::default(),
            classes: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SystemConfig {
    /// Named plant preset; `"default"` is the only built-in. Explicit
    /// matrices override the preset when both are given.
    pub preset: Option<String>,
    /// State transition matrix, row by row.
    pub a: Option<Vec<Vec<f64>>>,
    /// Input matrix, row by row.
    pub b: Option<Vec<Vec<f64>>>,
    pub horizon: usize,
    pub discount: f64,
}

impl Default for SystemConfig {
    fn default() -> Self {
        Self {
            preset: Some("default".into()),
            a: None,
            b: None,
            horizon: 50,
            discount: 0.9,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CostConfig {
    /// State cost matrix Q (positive definite), row by row.
    pub q: Vec<Vec<f64>>,
    /// Action cost matrix R (positive definite), row by row.
    pub r: Vec<Vec<f64>>,
}

impl Default for CostConfig {
    fn default() -> Self {
        Self {
            q: vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            r: vec![vec![0.5, 0.0], vec![0.0, 0.5]],
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PolicyConfig {
    /// Exploration standard deviation of the Gaussian linear policy.
    pub noise_std: f64,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        Self { noise_std: 0.1 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InitialStateConfig {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Default for InitialStateConfig {
    fn default() -> Self {
        Self {
            lower: vec![-1.0, -1.0],
            upper: vec![1.0, 1.0],
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingConfig {
    pub episodes: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub baseline_window: usize,
    pub max_step_norm: f64,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            episodes: 60,
            batch_size: 400,
            learning_rate: 1e-2,
            baseline_window: 10,
            max_step_norm: 0.08,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DemonstrationConfig {
    /// Number of trajectories collected by `generate`.
    pub size: usize,
}

impl Default for DemonstrationConfig {
    fn default() -> Self {
        Self { size: 1000 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ErmSection {
    pub max_iterations: usize,
    pub tolerance: f64,
    pub restarts: usize,
    /// `"backtracking"` or `"fixed"`.
    pub step_rule: String,
    /// Step size when `step_rule = "fixed"`.
    pub fixed_step: f64,
}

impl Default for ErmSection {
    fn default() -> Self {
        Self {
            max_iterations: 5000,
            tolerance: 1e-8,
            restarts: 5,
            step_rule: "backtracking".into(),
            fixed_step: 1e-3,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    /// Dataset sizes of the estimation-error sweep.
    pub sizes: Vec<usize>,
    /// Number of subsampling seeds per size.
    pub seeds: usize,
    /// Class whose parameters are compared against the true weights.
    pub class_index: usize,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            sizes: vec![10, 50, 100, 500, 1000],
            seeds: 20,
            class_index: 3,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrialsConfig {
    pub count: usize,
}

impl Default for TrialsConfig {
    fn default() -> Self {
        Self { count: 50 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SrmSection {
    /// Weight of the complexity penalty in the structural risk. The
    /// standard value is 2; anything else is a non-standard override.
    pub penalty_weight: f64,
}

impl Default for SrmSection {
    fn default() -> Self {
        Self {
            penalty_weight: 2.0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClassSpec {
    /// `[state_power, action_power]` per feature term; a zero power means
    /// the block is absent.
    pub terms: Vec<[u32; 2]>,
}

/// A validated, resolved experiment.
#[derive(Debug)]
pub struct Experiment {
    pub config: ExperimentConfig,
    pub config_hash: String,
    pub system: LqrSystem,
    pub q: DMatrix<f64>,
    pub r: DMatrix<f64>,
    pub noise_std: f64,
    pub initial_dist: InitialDistribution,
    pub train: TrainConfig,
    pub classes: HypothesisSet,
    pub srm: SrmConfig,
    pub demonstration_size: usize,
    pub delta: f64,
}

fn matrix_from_rows(rows: &[Vec<f64>], what: &str) -> Result<DMatrix<f64>> {
    if rows.is_empty() {
        bail!("{what}: empty matrix");
    }
    let cols = rows[0].len();
    if cols == 0 || rows.iter().any(|r| r.len() != cols) {
        bail!("{what}: ragged or empty rows");
    }
    let flat: Vec<f64> = rows.iter().flatten().copied().collect();
    Ok(DMatrix::from_row_slice(rows.len(), cols, &flat))
}

/// Eigenvalue positivity check for symmetric cost matrices.
fn require_positive_definite(m: &DMatrix<f64>, what: &str) -> Result<()> {
    if m.nrows() != m.ncols() {
        bail!("{what} must be square");
    }
    if (m - m.transpose()).norm() > 1e-10 * m.norm().max(1.0) {
        bail!("{what} must be symmetric");
    }
    let eigenvalues = m.clone().symmetric_eigen().eigenvalues;
    if eigenvalues.iter().any(|&v| v < 1e-10) {
        bail!("{what} must be positive definite (eigenvalues >= 1e-10)");
    }
    Ok(())
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).context("parsing experiment configuration")
    }

    pub fn from_path<P: AsRef<Path>>(path: P) -> Result<Self> {
        let text = std::fs::read_to_string(path.as_ref())
            .with_context(|| format!("reading {}", path.as_ref().display()))?;
        Self::from_toml_str(&text)
    }

    /// Hash of the effective configuration, echoed into every output file.
    pub fn hash(&self) -> String {
        let canonical = toml::to_string(self).expect("config serializes");
        let digest = Sha256::digest(canonical.as_bytes());
        digest
            .iter()
            .take(8)
            .map(|b| format!("{b:02x}"))
            .collect()
    }

    pub fn resolve(&self) -> Result<Experiment> {
        let (a, b) = match (&self.system.a, &self.system.b) {
            (Some(a), Some(b)) => (
                matrix_from_rows(a, "system.a")?,
                matrix_from_rows(b, "system.b")?,
            ),
            (None, None) => match self.system.preset.as_deref() {
                Some("default") | None => (
                    DMatrix::from_row_slice(2, 2, &[1.0, 0.1, 0.0, 1.0]),
                    DMatrix::identity(2, 2) * 0.1,
                ),
                Some(other) => bail!("unknown system preset `{other}`"),
            },
            _ => bail!("system.a and system.b must be given together"),
        };
        let system = LqrSystem::new(a, b, self.system.horizon, self.system.discount)
            .context("building the plant")?;

        let q = matrix_from_rows(&self.cost.q, "cost.q")?;
        let r = matrix_from_rows(&self.cost.r, "cost.r")?;
        require_positive_definite(&q, "cost.q")?;
        require_positive_definite(&r, "cost.r")?;
        if q.nrows() != system.state_dim() {
            bail!("cost.q must be {0}x{0}", system.state_dim());
        }
        if r.nrows() != system.action_dim() {
            bail!("cost.r must be {0}x{0}", system.action_dim());
        }

        if !(self.policy.noise_std > 0.0) {
            bail!("policy.noise_std must be positive");
        }

        let lower = DVector::from_vec(self.initial_state.lower.clone());
        let upper = DVector::from_vec(self.initial_state.upper.clone());
        if lower.len() != system.state_dim() {
            bail!("initial_state bounds must have {} entries", system.state_dim());
        }
        let initial_dist =
            InitialDistribution::uniform_box(lower, upper).context("initial_state")?;

        let train = TrainConfig {
            episodes: self.training.episodes,
            batch_size: self.training.batch_size,
            learning_rate: self.training.learning_rate,
            baseline_window: self.training.baseline_window,
            max_step_norm: self.training.max_step_norm,
            seed: 0, // derived per use
        };

        let classes = match &self.classes {
            None => default_lqr_classes(system.state_dim(), system.action_dim()),
            Some(specs) => {
                let mut built = Vec::with_capacity(specs.len());
                for (i, spec) in specs.iter().enumerate() {
                    let terms: Vec<FeatureTerm> = spec
                        .terms
                        .iter()
                        .map(|&[s, a]| FeatureTerm::new(s, a))
                        .collect::<srm_irl::Result<_>>()
                        .with_context(|| format!("classes[{i}]"))?;
                    built.push(
                        HypothesisClass::new(
                            i + 1,
                            terms,
                            system.state_dim(),
                            system.action_dim(),
                            true,
                        )
                        .with_context(|| format!("classes[{i}]"))?,
                    );
                }
                HypothesisSet::new(built).context("classes")?
            }
        };

        let step_rule = match self.erm.step_rule.as_str() {
            "backtracking" => StepRule::Backtracking,
            "fixed" => StepRule::Fixed(self.erm.fixed_step),
            other => bail!("erm.step_rule must be `backtracking` or `fixed`, got `{other}`"),
        };
        let srm = SrmConfig {
            erm: ErmConfig {
                max_iterations: self.erm.max_iterations,
                tolerance: self.erm.tolerance,
                restarts: self.erm.restarts,
                step_rule,
                seed: 0, // derived per use
            },
            loss: LossSpec::euclidean(),
            penalty_weight: self.srm.penalty_weight,
            delta: self.delta,
        };

        if !(self.delta > 0.0 && self.delta <= 1.0) {
            bail!("delta must lie in (0, 1]");
        }
        if self.demonstration.size == 0 {
            bail!("demonstration.size must be positive");
        }
        if self.sweep.sizes.is_empty() || self.sweep.seeds == 0 {
            bail!("sweep.sizes and sweep.seeds must be non-empty/positive");
        }
        if self.trials.count == 0 {
            bail!("trials.count must be positive");
        }
        if self.sweep.class_index == 0 || self.sweep.class_index > classes.len() {
            bail!(
                "sweep.class_index must lie in 1..={}, got {}",
                classes.len(),
                self.sweep.class_index
            );
        }

        Ok(Experiment {
            config: self.clone(),
            config_hash: self.hash(),
            system,
            q,
            r,
            noise_std: self.policy.noise_std,
            initial_dist,
            train,
            classes,
            srm,
            demonstration_size: self.demonstration.size,
            delta: self.delta,
        })
    }
}

/// A commented configuration template with the implementation defaults.
pub fn default_config_template() -> String {
    let mut out = String::new();
    out.push_str("# srm-irl experiment configuration\n");
    out.push_str("# The plant, cost matrices, noise level and solver settings below are\n");
    out.push_str("# implementation defaults (the source experiments do not publish them);\n");
    out.push_str("# horizon = 50, discount = 0.9 and demonstration.size = 1000 follow the\n");
    out.push_str("# reference setup.\n\n");
    out.push_str(&toml::to_string(&ExperimentConfig::default()).expect("serializes"));
    out
}
