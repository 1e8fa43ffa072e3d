//! Reward-distance pseudometrics: the EPIC canonicalization, the
//! dynamics-aware transformation, the Pearson distance, their sampled
//! estimators, and bootstrap confidence intervals.
//!
//! The estimators share all random draws between the two rewards being
//! compared (and, for EPIC, across every transition in the batch). Sharing
//! makes `d(R, R) = 0` exact, makes shaping cancel sample-wise rather than
//! only in expectation, and reduces variance in the difference.

mod bootstrap;
mod dard;
mod epic;
mod pearson;

pub use bootstrap::{bootstrap_ci, BootstrapSummary};
pub use dard::{dard_distance, dard_transform, dard_transform_multi};
pub use epic::{epic_canonicalize, epic_canonicalize_multi, epic_distance};
pub use pearson::{pearson_correlation, pearson_distance, raw_reward_distance};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::Rng;
use crate::types::{
    ActionVec, DynamicsError, RewardError, StateVec, Transition, DEFAULT_GAMMA,
};

#[derive(Error, Debug)]
pub enum MetricError {
    /// A reward is (numerically) constant on the batch, so correlation is
    /// undefined. Surfaced as an error rather than a silent 0 or 1; callers
    /// decide whether to resample or abort.
    #[error("degenerate variance: {0} is constant on this batch")]
    DegenerateVariance(&'static str),
    #[error("inputs must have equal length >= 2 (got {x} and {y})")]
    BadInputLength { x: usize, y: usize },
    #[error("coverage batch is empty or has an empty pool")]
    EmptyBatch,
    #[error("invalid metric config: {0}")]
    InvalidConfig(String),
    #[error("dynamics failure: {0}")]
    Dynamics(#[from] DynamicsError),
    #[error(transparent)]
    Reward(#[from] RewardError),
    #[error("bootstrap draw still degenerate after {0} attempts")]
    BootstrapDegenerate(usize),
}

/// Transitions jointly drawn from a coverage distribution, plus the marginal
/// state and action pools the canonicalization stage draws from.
#[derive(Clone, Debug)]
pub struct CoverageBatch {
    pub transitions: Vec<Transition>,
    pub state_pool: Vec<StateVec>,
    pub action_pool: Vec<ActionVec>,
}

impl CoverageBatch {
    /// Build a batch whose pools are the marginals of the given transitions
    /// (states from `s`, actions from `a`).
    pub fn from_transitions(transitions: Vec<Transition>) -> Result<Self, MetricError> {
        if transitions.is_empty() {
            return Err(MetricError::EmptyBatch);
        }
        let state_pool = transitions.iter().map(|t| t.s.clone()).collect();
        let action_pool = transitions.iter().map(|t| t.a.clone()).collect();
        Ok(Self {
            transitions,
            state_pool,
            action_pool,
        })
    }

    pub fn validate(&self) -> Result<(), MetricError> {
        if self.transitions.is_empty() || self.state_pool.is_empty() || self.action_pool.is_empty()
        {
            return Err(MetricError::EmptyBatch);
        }
        Ok(())
    }

    /// Same pools, transitions restricted to `indices`.
    pub fn subset(&self, indices: &[usize]) -> Self {
        Self {
            transitions: indices.iter().map(|&i| self.transitions[i].clone()).collect(),
            state_pool: self.state_pool.clone(),
            action_pool: self.action_pool.clone(),
        }
    }
}

/// Cross product of per-dimension linearly spaced action values.
#[derive(Clone, Debug)]
pub struct ActionGrid {
    actions: Vec<ActionVec>,
    per_dim_count: usize,
}

impl ActionGrid {
    pub fn new(bounds: &[(f64, f64)], per_dim_count: usize) -> Result<Self, MetricError> {
        if per_dim_count == 0 || bounds.is_empty() {
            return Err(MetricError::InvalidConfig(
                "action grid needs at least one dimension and one point per dimension".into(),
            ));
        }
        let axis = |&(lo, hi): &(f64, f64)| -> Vec<f64> {
            if per_dim_count == 1 {
                vec![0.5 * (lo + hi)]
            } else {
                (0..per_dim_count)
                    .map(|i| lo + (hi - lo) * i as f64 / (per_dim_count - 1) as f64)
                    .collect()
            }
        };
        let axes: Vec<Vec<f64>> = bounds.iter().map(axis).collect();
        let total = per_dim_count.pow(bounds.len() as u32);
        let mut actions = Vec::with_capacity(total);
        let mut values = vec![0.0; bounds.len()];
        for flat in 0..total {
            let mut rem = flat;
            for d in (0..bounds.len()).rev() {
                values[d] = axes[d][rem % per_dim_count];
                rem /= per_dim_count;
            }
            let action = ActionVec::new(values.clone(), bounds.to_vec())
                .map_err(|e| MetricError::InvalidConfig(e.to_string()))?;
            actions.push(action);
        }
        Ok(Self {
            actions,
            per_dim_count,
        })
    }

    /// A grid holding exactly the given actions (used for discrete action
    /// sets such as tabular MDPs).
    pub fn from_actions(actions: Vec<ActionVec>) -> Result<Self, MetricError> {
        if actions.is_empty() {
            return Err(MetricError::InvalidConfig("empty action grid".into()));
        }
        let per_dim_count = actions.len();
        Ok(Self {
            actions,
            per_dim_count,
        })
    }

    pub fn actions(&self) -> &[ActionVec] {
        &self.actions
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn per_dim_count(&self) -> usize {
        self.per_dim_count
    }
}

/// How the transformation's quadruple term pairs its samples.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum QuadTermMode {
    /// Average `R(x'_ij, u_k, x''_kl)` over the full cross product of the
    /// second and third terms' samples.
    #[default]
    Quadratic,
    /// Pair each `x'` sample with a single freshly drawn `(u, x'')`,
    /// trading the quadratic cost for extra variance.
    Independent,
}

/// Sample counts and discount for the estimators.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MetricConfig {
    /// Pearson-stage sample count (batch transitions used per distance).
    pub n_v: usize,
    /// Number of canonicalization draws for the EPIC estimator.
    pub n_m: usize,
    /// Next-state samples per (state, action) for the dynamics-aware
    /// estimator; 1 suffices for deterministic models.
    pub n_t: usize,
    pub gamma: f64,
    pub seed: u64,
    #[serde(default)]
    pub quad_term: QuadTermMode,
}

impl Default for MetricConfig {
    fn default() -> Self {
        Self {
            n_v: 4096,
            n_m: 4096,
            n_t: 1,
            gamma: DEFAULT_GAMMA,
            seed: 0,
            quad_term: QuadTermMode::Quadratic,
        }
    }
}

impl MetricConfig {
    pub fn validate(&self) -> Result<(), MetricError> {
        if self.n_v == 0 || self.n_m == 0 || self.n_t == 0 {
            return Err(MetricError::InvalidConfig(
                "sample counts must be >= 1".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(MetricError::InvalidConfig(format!(
                "gamma {} outside [0, 1]",
                self.gamma
            )));
        }
        Ok(())
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self { seed, ..self.clone() }
    }
}

/// Per-pair metric values with seed-wise means and standard errors.
#[derive(Clone, Debug, Serialize)]
pub struct DistanceReport {
    pub pair: (String, String),
    pub seeds: Vec<u64>,
    pub d_epic: f64,
    pub d_dard: f64,
    pub d_dard_learned: Option<f64>,
    pub d_pearson: f64,
    pub se_epic: f64,
    pub se_dard: f64,
    pub se_dard_learned: Option<f64>,
    pub se_pearson: f64,
    pub per_seed_epic: Vec<f64>,
    pub per_seed_dard: Vec<f64>,
    pub per_seed_dard_learned: Option<Vec<f64>>,
    pub per_seed_pearson: Vec<f64>,
}

impl DistanceReport {
    pub fn from_seed_values(
        pair: (String, String),
        seeds: Vec<u64>,
        epic: Vec<f64>,
        dard: Vec<f64>,
        dard_learned: Option<Vec<f64>>,
        pearson: Vec<f64>,
    ) -> Self {
        let (d_epic, se_epic) = mean_and_stderr(&epic);
        let (d_dard, se_dard) = mean_and_stderr(&dard);
        let (d_pearson, se_pearson) = mean_and_stderr(&pearson);
        let (d_dard_learned, se_dard_learned) = match &dard_learned {
            Some(v) => {
                let (m, s) = mean_and_stderr(v);
                (Some(m), Some(s))
            }
            None => (None, None),
        };
        Self {
            pair,
            seeds,
            d_epic,
            d_dard,
            d_dard_learned,
            d_pearson,
            se_epic,
            se_dard,
            se_dard_learned,
            se_pearson,
            per_seed_epic: epic,
            per_seed_dard: dard,
            per_seed_dard_learned: dard_learned,
            per_seed_pearson: pearson,
        }
    }
}

/// Mean and standard error of the mean (sample std / sqrt(k)); zero standard
/// error for a single value.
pub fn mean_and_stderr(values: &[f64]) -> (f64, f64) {
    let mean = stable_mean(values);
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = stable_sum(values.iter().map(|v| (v - mean) * (v - mean)))
        / (values.len() - 1) as f64;
    (mean, (var / values.len() as f64).sqrt())
}

/// Neumaier compensated summation: a stable, order-fixed reduction so that
/// results are reproducible to the bit regardless of how callers chunk work.
pub(crate) fn stable_sum(xs: impl Iterator<Item = f64>) -> f64 {
    let mut sum = 0.0;
    let mut comp = 0.0;
    for x in xs {
        let t = sum + x;
        if sum.abs() >= x.abs() {
            comp += (sum - t) + x;
        } else {
            comp += (x - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

pub(crate) fn stable_mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    stable_sum(xs.iter().copied()) / xs.len() as f64
}

/// Deterministically pick `n_v` transitions when the batch is larger.
pub(crate) fn subsample_batch(
    batch: &CoverageBatch,
    n_v: usize,
    rng: &mut Rng,
) -> CoverageBatch {
    if batch.transitions.len() <= n_v {
        return batch.clone();
    }
    let mut sub_rng = rng.child("subsample");
    let indices = sub_rng.sample_indices(batch.transitions.len(), n_v);
    batch.subset(&indices)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn action_grid_cross_product() {
        let grid = ActionGrid::new(&[(-5.0, 5.0), (-5.0, 5.0)], 4).unwrap();
        assert_eq!(grid.len(), 16);
        for a in grid.actions() {
            for (&v, &(lo, hi)) in a.values().iter().zip(a.bounds()) {
                assert!(v >= lo && v <= hi);
            }
        }
        // Endpoints are exact.
        assert_eq!(grid.actions()[0].values(), &[-5.0, -5.0]);
        assert_eq!(grid.actions()[15].values(), &[5.0, 5.0]);
    }

    #[test]
    fn action_grid_single_point_uses_midpoint() {
        let grid = ActionGrid::new(&[(-4.0, 8.0)], 1).unwrap();
        assert_eq!(grid.actions()[0].values(), &[2.0]);
    }

    #[test]
    fn mean_stderr_basics() {
        let (m, se) = mean_and_stderr(&[0.5]);
        assert_eq!((m, se), (0.5, 0.0));
        let (m, se) = mean_and_stderr(&[1.0, 3.0]);
        assert_eq!(m, 2.0);
        assert!((se - 1.0).abs() < 1e-12);
    }

    #[test]
    fn stable_sum_handles_cancellation() {
        let xs = vec![1e16, 1.0, -1e16];
        assert_eq!(stable_sum(xs.into_iter()), 1.0);
    }
}
