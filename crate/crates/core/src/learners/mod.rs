//! From-scratch learned models: reward regression (in- and
//! out-of-distribution), preference-based reward learning, and least-squares
//! or MLP dynamics fitting. No autodiff framework; gradients are
//! hand-derived and verified against finite differences.

mod adam;
mod dynamics_fit;
mod features;
mod gradcheck;
mod mlp;
mod preferences;
mod regress;

pub use adam::{clip_grad_norm, AdamState};
pub use dynamics_fit::{
    fit_dynamics_lsq, load_dynamics_checkpoint, save_dynamics_checkpoint, train_dynamics_mlp,
    LsqDynamics, MlpDynamics,
};
pub use features::FeatureExtractor;
pub use gradcheck::grad_check;
pub use mlp::{Activation, Mlp, MlpCache};
pub use preferences::{preference_accuracy, train_preferences};
pub use regress::{train_regress, train_regress_ood};

use std::fs;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::types::{RewardError, RewardFunction, Triple};

#[derive(Error, Debug)]
pub enum TrainError {
    #[error("training diverged: {0}")]
    DivergenceDetected(String),
    #[error("normal equations are singular beyond ridge rescue")]
    SingularSystem,
    #[error("invalid training data: {0}")]
    InvalidData(String),
    #[error(transparent)]
    Reward(#[from] RewardError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("malformed checkpoint: {0}")]
    Checkpoint(String),
}

/// Hyperparameters shared by the reward learners. Hidden sizes are desk
/// scale; the remaining values follow the reference training setup.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RewardTrainConfig {
    pub hidden: Vec<usize>,
    pub lr: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Early stopping: epochs without validation improvement before halting.
    pub patience: usize,
    pub grad_clip: f64,
    /// Recombined (a, s') draws per record for out-of-distribution
    /// regression.
    pub n_random_pairs: usize,
    /// Trajectory segment length for preference learning.
    pub segment_len: usize,
    /// Number of preference pairs synthesized from the training split.
    pub n_pref_pairs: usize,
    /// Squared-magnitude penalty on predicted rewards (preference loss).
    pub reward_reg: f64,
    /// Discount used when computing segment returns for preference labels.
    pub gamma: f64,
}

impl Default for RewardTrainConfig {
    fn default() -> Self {
        Self {
            hidden: vec![32, 32],
            lr: 1e-3,
            batch_size: 2048,
            max_epochs: 150,
            patience: 10,
            grad_clip: 1.0,
            n_random_pairs: 10,
            segment_len: 25,
            n_pref_pairs: 6000,
            reward_reg: 0.01,
            gamma: crate::types::DEFAULT_GAMMA,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TrainManifest {
    pub method: String,
    pub seed: u64,
    pub dataset_hash: String,
    pub config: RewardTrainConfig,
    pub epochs_run: usize,
    pub best_val_loss: f64,
}

/// An MLP reward over standardized transition features.
pub struct LearnedReward {
    pub(crate) mlp: Mlp,
    pub(crate) features: FeatureExtractor,
    name: String,
    manifest: TrainManifest,
}

impl LearnedReward {
    pub(crate) fn new(
        mlp: Mlp,
        features: FeatureExtractor,
        name: impl Into<String>,
        manifest: TrainManifest,
    ) -> Self {
        Self {
            mlp,
            features,
            name: name.into(),
            manifest,
        }
    }

    pub fn manifest(&self) -> &TrainManifest {
        &self.manifest
    }

    /// Mean squared error against a target column on the given triples.
    pub fn mse(&self, triples: &[Triple<'_>], targets: &[f64]) -> Result<f64, RewardError> {
        let predictions = self.evaluate(triples)?;
        Ok(predictions
            .iter()
            .zip(targets)
            .map(|(p, t)| (p - t) * (p - t))
            .sum::<f64>()
            / targets.len().max(1) as f64)
    }
}

impl RewardFunction for LearnedReward {
    fn name(&self) -> &str {
        &self.name
    }

    fn evaluate_into(&self, batch: &[Triple<'_>], out: &mut Vec<f64>) -> Result<(), RewardError> {
        let mut cache = MlpCache::default();
        let mut buf = Vec::with_capacity(self.features.dim());
        out.reserve(batch.len());
        for t in batch {
            buf.clear();
            self.features.extract(*t, &mut buf)?;
            out.push(self.mlp.forward_scalar(&buf, &mut cache));
        }
        Ok(())
    }
}

const REWARD_CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct RewardCheckpoint {
    format_version: u32,
    kind: String,
    name: String,
    sizes: Vec<usize>,
    activation: Activation,
    features: FeatureExtractor,
    params: Vec<f64>,
    training: TrainManifest,
}

/// Serialize a learned reward: architecture, standardization statistics,
/// flat parameters, and the training manifest.
pub fn save_reward_checkpoint(reward: &LearnedReward, path: &Path) -> Result<(), TrainError> {
    let ckpt = RewardCheckpoint {
        format_version: REWARD_CHECKPOINT_VERSION,
        kind: "reward_mlp".into(),
        name: reward.name.clone(),
        sizes: reward.mlp.sizes().to_vec(),
        activation: reward.mlp.activation(),
        features: reward.features.clone(),
        params: reward.mlp.params().to_vec(),
        training: reward.manifest.clone(),
    };
    fs::write(
        path,
        serde_json::to_string(&ckpt).expect("checkpoint serializes"),
    )?;
    Ok(())
}

pub fn load_reward_checkpoint(path: &Path) -> Result<Arc<dyn RewardFunction>, TrainError> {
    let raw = fs::read_to_string(path)?;
    let ckpt: RewardCheckpoint =
        serde_json::from_str(&raw).map_err(|e| TrainError::Checkpoint(e.to_string()))?;
    if ckpt.format_version != REWARD_CHECKPOINT_VERSION || ckpt.kind != "reward_mlp" {
        return Err(TrainError::Checkpoint(format!(
            "unsupported checkpoint kind {} version {}",
            ckpt.kind, ckpt.format_version
        )));
    }
    let mlp = Mlp::from_params(ckpt.sizes, ckpt.activation, ckpt.params)
        .ok_or_else(|| TrainError::Checkpoint("parameter count mismatch".into()))?;
    Ok(Arc::new(LearnedReward::new(
        mlp,
        ckpt.features,
        ckpt.name,
        ckpt.training,
    )))
}
