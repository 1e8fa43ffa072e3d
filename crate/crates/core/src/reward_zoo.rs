//! Hand-designed reward models and wrappers: potential shaping, the
//! feasibility probe, hash-seeded noisy rewards, and randomized linear
//! rewards over the ball-world features.
//!
//! Noise-carrying wrappers derive their noise from a content hash of the
//! transition rather than from a stateful stream, so every reward here is a
//! pure function: re-evaluating the same triple always returns the same
//! value, which is what makes `d(R, R) = 0` well defined.

use std::path::PathBuf;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bouncing_balls::{
    fold, BallWorldConfig, BallWorldLayout, GroundTruthReward, SqrtGoalPotential,
};
use crate::rng::{mix64, normal_from_hash, Rng};
use crate::types::{
    triple_content_hash, PotentialFunction, RewardError, RewardFunction, SchemaId, Triple,
    DEFAULT_GAMMA,
};

#[derive(Error, Debug)]
pub enum RewardZooError {
    #[error(transparent)]
    Reward(#[from] RewardError),
    #[error("cannot load learned reward: {0}")]
    Checkpoint(String),
}

/// `base + gamma * phi(s') - phi(s)`, exactly.
pub struct ShapedReward {
    base: Arc<dyn RewardFunction>,
    phi: Arc<dyn PotentialFunction>,
    gamma: f64,
    name: String,
}

impl ShapedReward {
    pub fn new(base: Arc<dyn RewardFunction>, phi: Arc<dyn PotentialFunction>, gamma: f64) -> Self {
        let name = format!("shaped({})", base.name());
        Self {
            base,
            phi,
            gamma,
            name,
        }
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }
}

impl RewardFunction for ShapedReward {
    fn name(&self) -> &str {
        &self.name
    }

    fn evaluate_into(&self, batch: &[Triple<'_>], out: &mut Vec<f64>) -> Result<(), RewardError> {
        let start = out.len();
        self.base.evaluate_into(batch, out)?;
        let cur: Vec<_> = batch.iter().map(|t| t.s).collect();
        let next: Vec<_> = batch.iter().map(|t| t.s_next).collect();
        let phi_cur = self.phi.evaluate(&cur)?;
        let phi_next = self.phi.evaluate(&next)?;
        for (i, v) in out[start..].iter_mut().enumerate() {
            *v += self.gamma * phi_next[i] - phi_cur[i];
        }
        Ok(())
    }
}

/// Dynamic-feasibility test for ball-world transitions.
///
/// A transition is feasible when every ball's next position is within
/// `tol + accel_max * dt^2` of its constant-velocity prediction (folded into
/// the arena the same way the integrator reflects off walls) and the action
/// is within the acceleration bounds. The default tolerance leaves slack for
/// the acceleration each ball may apply in one step, including on the
/// one-step-apart recombined triples the dynamics-aware transformation
/// evaluates; independently resampled state pairings teleport balls across
/// the arena and fail by orders of magnitude.
#[derive(Clone, Debug)]
pub struct FeasibilityCheck {
    config: BallWorldConfig,
    layout: BallWorldLayout,
    schema: SchemaId,
    tol: f64,
}

impl FeasibilityCheck {
    pub fn new(config: &BallWorldConfig) -> Self {
        Self::with_tol(config, Self::default_tol(config))
    }

    pub fn with_tol(config: &BallWorldConfig, tol: f64) -> Self {
        Self {
            layout: config.layout(),
            schema: config.schema_id(),
            config: config.clone(),
            tol,
        }
    }

    pub fn default_tol(config: &BallWorldConfig) -> f64 {
        let accel_max = config.accel_bounds.1;
        1e-6 * config.arena + 9.0 * accel_max * config.dt * config.dt
    }

    pub fn tol(&self) -> f64 {
        self.tol
    }

    pub fn is_feasible(&self, t: Triple<'_>) -> Result<bool, RewardError> {
        if t.s.schema_id() != self.schema {
            return Err(RewardError::SchemaMismatch {
                name: "feasibility".into(),
                expected: self.schema,
                got: t.s.schema_id(),
            });
        }
        let (alo, ahi) = self.config.accel_bounds;
        if t.a.values().iter().any(|&v| v < alo || v > ahi) {
            return Ok(false);
        }
        let accel_max = self.config.accel_bounds.1;
        let slack = self.tol + accel_max * self.config.dt * self.config.dt;
        let (wlo, whi) = (
            self.config.ball_radius,
            self.config.arena - self.config.ball_radius,
        );
        let cur = t.s.values();
        let next = t.s_next.values();
        for ball in 0..self.layout.n_balls {
            let p = self.layout.ball_pos(cur, ball);
            let v = self.layout.ball_vel(cur, ball);
            let q = self.layout.ball_pos(next, ball);
            let mut dist2 = 0.0;
            for axis in 0..2 {
                let predicted = fold(p[axis] + v[axis] * self.config.dt, wlo, whi);
                dist2 += (q[axis] - predicted).powi(2);
            }
            if dist2.sqrt() > slack {
                return Ok(false);
            }
        }
        Ok(true)
    }
}

/// Convenience wrapper over [`FeasibilityCheck::is_feasible`].
pub fn feasibility_predicate(
    config: &BallWorldConfig,
    t: Triple<'_>,
    tol: f64,
) -> Result<bool, RewardError> {
    FeasibilityCheck::with_tol(config, tol).is_feasible(t)
}

/// Probe reward: equals its base on dynamically feasible transitions and
/// returns seeded Gaussian noise otherwise. Exposes a metric's sensitivity
/// to evaluating rewards on transitions the environment could never produce.
pub struct FeasibilityReward {
    base: Arc<dyn RewardFunction>,
    check: FeasibilityCheck,
    noise_std: f64,
    salt: u64,
    name: String,
}

impl FeasibilityReward {
    pub fn new(base: Arc<dyn RewardFunction>, config: &BallWorldConfig) -> Self {
        let name = format!("feasibility({})", base.name());
        Self {
            base,
            check: FeasibilityCheck::new(config),
            noise_std: 1.0,
            salt: 0x7fea_51b1_e000_0001,
            name,
        }
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn with_noise_std(mut self, noise_std: f64) -> Self {
        self.noise_std = noise_std;
        self
    }
}

impl RewardFunction for FeasibilityReward {
    fn name(&self) -> &str {
        &self.name
    }

    fn evaluate_into(&self, batch: &[Triple<'_>], out: &mut Vec<f64>) -> Result<(), RewardError> {
        let start = out.len();
        self.base.evaluate_into(batch, out)?;
        for (i, t) in batch.iter().enumerate() {
            if !self.check.is_feasible(*t)? {
                let h = mix64(triple_content_hash(*t) ^ self.salt);
                out[start + i] = self.noise_std * normal_from_hash(h);
            }
        }
        Ok(())
    }
}

/// `base + eps` with `eps ~ N(0, sigma)` seeded from the transition content.
pub struct NoisyReward {
    base: Arc<dyn RewardFunction>,
    sigma: f64,
    salt: u64,
    name: String,
}

impl NoisyReward {
    pub fn new(base: Arc<dyn RewardFunction>, sigma: f64) -> Self {
        let name = format!("noisy({}, sigma={})", base.name(), sigma);
        Self {
            base,
            sigma,
            salt: 0x1001_5e00_0000_0002,
            name,
        }
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }
}

impl RewardFunction for NoisyReward {
    fn name(&self) -> &str {
        &self.name
    }

    fn evaluate_into(&self, batch: &[Triple<'_>], out: &mut Vec<f64>) -> Result<(), RewardError> {
        let start = out.len();
        self.base.evaluate_into(batch, out)?;
        for (i, t) in batch.iter().enumerate() {
            let h = mix64(triple_content_hash(*t) ^ self.salt);
            out[start + i] += self.sigma * normal_from_hash(h);
        }
        Ok(())
    }
}

/// Linear combination of the three ball-world reward components:
/// `-w_dist * |agent - goal|(s') - w_act * |a| + w_goal * goal_indicator(s')`.
#[derive(Clone, Debug)]
pub struct RandomLinearReward {
    pub w_dist: f64,
    pub w_act: f64,
    pub w_goal: f64,
    layout: BallWorldLayout,
    threshold: f64,
    schema: SchemaId,
    name: String,
}

impl RandomLinearReward {
    pub fn new(config: &BallWorldConfig, w_dist: f64, w_act: f64, w_goal: f64) -> Self {
        Self {
            w_dist,
            w_act,
            w_goal,
            layout: config.layout(),
            threshold: config.goal_threshold,
            schema: config.schema_id(),
            name: format!("random_linear({w_dist:.3},{w_act:.3},{w_goal:.3})"),
        }
    }
}

impl RewardFunction for RandomLinearReward {
    fn name(&self) -> &str {
        &self.name
    }

    fn evaluate_into(&self, batch: &[Triple<'_>], out: &mut Vec<f64>) -> Result<(), RewardError> {
        out.reserve(batch.len());
        for t in batch {
            if t.s_next.schema_id() != self.schema {
                return Err(RewardError::SchemaMismatch {
                    name: self.name.clone(),
                    expected: self.schema,
                    got: t.s_next.schema_id(),
                });
            }
            let dist = self.layout.goal_distance(t.s_next.values());
            let act_mag = t.a.values().iter().map(|v| v * v).sum::<f64>().sqrt();
            let goal = if dist <= self.threshold { 1.0 } else { 0.0 };
            out.push(-self.w_dist * dist - self.w_act * act_mag + self.w_goal * goal);
        }
        Ok(())
    }
}

/// Distance and action weights uniform in `[0, 1]`, goal-indicator weight
/// uniform in `[-1, 1]`.
pub fn sample_random_reward(config: &BallWorldConfig, rng: &mut Rng) -> RandomLinearReward {
    let w_dist = rng.uniform(0.0, 1.0);
    let w_act = rng.uniform(0.0, 1.0);
    let w_goal = rng.uniform(-1.0, 1.0);
    RandomLinearReward::new(config, w_dist, w_act, w_goal)
}

/// Serializable reward description; the JSON surface other tools use to name
/// rewards.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RewardSpec {
    GroundTruth,
    Shaped,
    Feasibility {
        #[serde(default = "default_noise_std")]
        noise_std: f64,
    },
    Noisy {
        sigma: f64,
    },
    RandomLinear {
        w_dist: f64,
        w_act: f64,
        w_goal: f64,
    },
    Learned {
        path: PathBuf,
    },
}

fn default_noise_std() -> f64 {
    1.0
}

impl RewardSpec {
    pub fn label(&self) -> String {
        match self {
            RewardSpec::GroundTruth => "GT".into(),
            RewardSpec::Shaped => "SHAPED".into(),
            RewardSpec::Feasibility { .. } => "FEASIBILITY".into(),
            RewardSpec::Noisy { sigma } => format!("NOISY({sigma})"),
            RewardSpec::RandomLinear { .. } => "RANDOM_LINEAR".into(),
            RewardSpec::Learned { path } => path
                .file_stem()
                .map(|s| s.to_string_lossy().to_uppercase())
                .unwrap_or_else(|| "LEARNED".into()),
        }
    }
}

/// Ground truth shaped by the square-root goal potential; the target the
/// regression learners fit.
pub fn shaped_ground_truth(config: &BallWorldConfig, gamma: f64) -> Arc<dyn RewardFunction> {
    Arc::new(
        ShapedReward::new(
            Arc::new(GroundTruthReward::new(config)),
            Arc::new(SqrtGoalPotential::new(config)),
            gamma,
        )
        .with_name("SHAPED"),
    )
}

/// Instantiate a reward from its serialized description.
pub fn build_reward(
    spec: &RewardSpec,
    config: &BallWorldConfig,
    gamma: f64,
) -> Result<Arc<dyn RewardFunction>, RewardZooError> {
    let gamma = if gamma == 0.0 { DEFAULT_GAMMA } else { gamma };
    Ok(match spec {
        RewardSpec::GroundTruth => Arc::new(GroundTruthReward::new(config)),
        RewardSpec::Shaped => shaped_ground_truth(config, gamma),
        RewardSpec::Feasibility { noise_std } => Arc::new(
            FeasibilityReward::new(shaped_ground_truth(config, gamma), config)
                .with_noise_std(*noise_std)
                .with_name("FEASIBILITY"),
        ),
        RewardSpec::Noisy { sigma } => Arc::new(NoisyReward::new(
            Arc::new(GroundTruthReward::new(config)),
            *sigma,
        )),
        RewardSpec::RandomLinear {
            w_dist,
            w_act,
            w_goal,
        } => Arc::new(RandomLinearReward::new(config, *w_dist, *w_act, *w_goal)),
        RewardSpec::Learned { path } => crate::learners::load_reward_checkpoint(path)
            .map_err(|e| RewardZooError::Checkpoint(e.to_string()))?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bouncing_balls::Policy;
    use crate::datasets::collect;
    use crate::types::{StateVec, Transition};

    struct ZeroPotential;
    impl PotentialFunction for ZeroPotential {
        fn name(&self) -> &str {
            "zero"
        }
        fn evaluate(&self, states: &[&StateVec]) -> Result<Vec<f64>, RewardError> {
            Ok(vec![0.0; states.len()])
        }
    }

    fn config() -> BallWorldConfig {
        BallWorldConfig::default()
    }

    fn dataset(n: usize, seed: u64) -> Vec<Transition> {
        collect(&config(), Policy::Uniform, n, seed)
            .unwrap()
            .transitions
    }

    #[test]
    fn shaped_with_zero_potential_equals_base() {
        let cfg = config();
        let gt: Arc<dyn RewardFunction> = Arc::new(GroundTruthReward::new(&cfg));
        let shaped = ShapedReward::new(gt.clone(), Arc::new(ZeroPotential), DEFAULT_GAMMA);
        let transitions = dataset(500, 3);
        let a = gt.evaluate_transitions(&transitions).unwrap();
        let b = shaped.evaluate_transitions(&transitions).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn collected_transitions_are_feasible() {
        let cfg = config();
        let check = FeasibilityCheck::new(&cfg);
        // Includes wall bounces and goal hits; all must pass.
        for tr in dataset(4000, 9) {
            assert!(check.is_feasible(tr.triple()).unwrap());
        }
    }

    #[test]
    fn feasibility_reward_equals_base_on_collected_data() {
        let cfg = config();
        let shaped = shaped_ground_truth(&cfg, DEFAULT_GAMMA);
        let probe = FeasibilityReward::new(shaped.clone(), &cfg);
        let transitions = dataset(3000, 17);
        let a = shaped.evaluate_transitions(&transitions).unwrap();
        let b = probe.evaluate_transitions(&transitions).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn teleport_pairings_are_infeasible() {
        let cfg = config();
        let check = FeasibilityCheck::new(&cfg);
        let transitions = dataset(600, 23);
        // Pair s from one transition with s' from a far-away record, the way
        // the canonicalization stage recombines draws.
        let mut infeasible = 0usize;
        let mut total = 0usize;
        for i in 0..transitions.len() {
            let j = (i + 293) % transitions.len();
            if transitions[i].episode == transitions[j].episode
                && transitions[i].t.abs_diff(transitions[j].t) < 5
            {
                continue;
            }
            let t = Triple {
                s: &transitions[i].s,
                a: &transitions[i].a,
                s_next: &transitions[j].s_next,
            };
            total += 1;
            if !check.is_feasible(t).unwrap() {
                infeasible += 1;
            }
        }
        let frac_feasible = 1.0 - infeasible as f64 / total as f64;
        assert!(frac_feasible <= 0.05, "feasible fraction {frac_feasible}");
    }

    #[test]
    fn noise_is_deterministic_per_transition() {
        let cfg = config();
        let gt: Arc<dyn RewardFunction> = Arc::new(GroundTruthReward::new(&cfg));
        let noisy = NoisyReward::new(gt, 0.7);
        let transitions = dataset(200, 5);
        let a = noisy.evaluate_transitions(&transitions).unwrap();
        let b = noisy.evaluate_transitions(&transitions).unwrap();
        assert_eq!(a, b);
        // And it is actually noisy.
        let gt2: Arc<dyn RewardFunction> = Arc::new(GroundTruthReward::new(&cfg));
        let clean = gt2.evaluate_transitions(&transitions).unwrap();
        assert_ne!(a, clean);
    }

    #[test]
    fn random_reward_ranges_and_goal_corner() {
        let cfg = config();
        let mut rng = Rng::new(77);
        for _ in 0..128 {
            let r = sample_random_reward(&cfg, &mut rng);
            assert!((0.0..=1.0).contains(&r.w_dist));
            assert!((0.0..=1.0).contains(&r.w_act));
            assert!((-1.0..=1.0).contains(&r.w_goal));
        }

        let transitions = dataset(300, 31);
        let goal_only = RandomLinearReward::new(&cfg, 0.0, 0.0, 1.0);
        let gt = GroundTruthReward::new(&cfg);
        assert_eq!(
            goal_only.evaluate_transitions(&transitions).unwrap(),
            gt.evaluate_transitions(&transitions).unwrap()
        );
        let neg = RandomLinearReward::new(&cfg, 0.0, 0.0, -1.0);
        let negated: Vec<f64> = gt
            .evaluate_transitions(&transitions)
            .unwrap()
            .iter()
            .map(|v| -v)
            .collect();
        assert_eq!(neg.evaluate_transitions(&transitions).unwrap(), negated);
    }

    #[test]
    fn reward_spec_json_round_trip() {
        let specs = vec![
            RewardSpec::GroundTruth,
            RewardSpec::Shaped,
            RewardSpec::Feasibility { noise_std: 1.0 },
            RewardSpec::Noisy { sigma: 0.3 },
            RewardSpec::RandomLinear {
                w_dist: 0.5,
                w_act: 0.25,
                w_goal: -0.75,
            },
        ];
        let json = serde_json::to_string(&specs).unwrap();
        let back: Vec<RewardSpec> = serde_json::from_str(&json).unwrap();
        assert_eq!(specs, back);
        // Stated wire format.
        assert!(json.contains("\"kind\":\"ground_truth\""));
        assert!(json.contains("\"kind\":\"random_linear\""));
    }
}
