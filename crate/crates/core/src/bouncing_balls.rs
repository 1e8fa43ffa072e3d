//! 2D ball-navigation environment: an agent ball accelerates toward a goal
//! while other balls drift under random accelerations, all bouncing
//! elastically off the arena walls.
//!
//! State layout (flattened into a [`StateVec`]):
//!
//! ```text
//! [agent px, py, vx, vy, (other px, py, vx, vy) x (n_balls - 1), goal gx, gy]
//! ```
//!
//! The episode never terminates inside the horizon; reaching the goal
//! respawns the agent and goal so the process approximates a continuing MDP.
//! The respawn takes effect at the start of the *next* step: the transition
//! that earns the reward shows the agent at the goal in `s'`, and every
//! recorded transition is dynamics-consistent (the teleport happens between
//! transitions, not inside one).

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::Rng;
use crate::types::{
    ActionBounds, ActionVec, CoreError, DynamicsError, DynamicsModel, PotentialFunction,
    RewardError, RewardFunction, SchemaId, StateVec, Triple,
};

#[derive(Error, Debug)]
pub enum BallWorldError {
    #[error("action outside acceleration bounds: {0}")]
    OutOfBoundsAction(String),
    #[error(transparent)]
    Core(#[from] CoreError),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BallWorldConfig {
    /// Side length of the square arena; positions live in `[0, arena]^2`.
    pub arena: f64,
    /// Total ball count, agent included.
    pub n_balls: usize,
    pub ball_radius: f64,
    pub dt: f64,
    /// Symmetric per-axis acceleration bounds for the agent.
    pub accel_bounds: (f64, f64),
    /// Std of the other balls' per-axis Gaussian accelerations.
    pub other_accel_std: f64,
    pub goal_threshold: f64,
    pub horizon: usize,
    /// Speed (velocity norm) cap for every ball.
    pub max_speed: f64,
}

impl Default for BallWorldConfig {
    fn default() -> Self {
        Self {
            arena: 20.0,
            n_balls: 4,
            ball_radius: 0.5,
            dt: 0.1,
            accel_bounds: (-5.0, 5.0),
            other_accel_std: 0.5,
            goal_threshold: 1.0,
            horizon: 400,
            max_speed: 5.0,
        }
    }
}

impl BallWorldConfig {
    pub fn validate(&self) -> Result<(), CoreError> {
        // Reuse the dimension-mismatch error for structurally bad configs.
        let bad = |_: &str| CoreError::DimensionMismatch {
            expected: 0,
            got: 0,
        };
        if self.goal_threshold <= 0.0
            || self.horizon == 0
            || self.n_balls == 0
            || self.dt <= 0.0
            || self.max_speed <= 0.0
            || self.arena <= 4.0 * self.ball_radius
        {
            return Err(bad("config"));
        }
        if self.accel_bounds.0 != -self.accel_bounds.1 || self.accel_bounds.1 <= 0.0 {
            return Err(bad("bounds"));
        }
        Ok(())
    }

    pub fn schema_name(&self) -> String {
        format!("bouncing_balls/v1/balls{}", self.n_balls)
    }

    pub fn schema_id(&self) -> SchemaId {
        SchemaId::from_name(&self.schema_name())
    }

    pub fn state_dim(&self) -> usize {
        4 * self.n_balls + 2
    }

    pub fn action_bounds(&self) -> ActionBounds {
        vec![self.accel_bounds; 2]
    }

    pub fn layout(&self) -> BallWorldLayout {
        BallWorldLayout {
            n_balls: self.n_balls,
        }
    }

    /// Interval positions may occupy after wall reflection.
    fn wall_bounds(&self) -> (f64, f64) {
        (self.ball_radius, self.arena - self.ball_radius)
    }
}

/// Index helper for the flattened state layout.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BallWorldLayout {
    pub n_balls: usize,
}

impl BallWorldLayout {
    pub fn state_dim(&self) -> usize {
        4 * self.n_balls + 2
    }

    pub fn ball_pos(&self, v: &[f64], ball: usize) -> [f64; 2] {
        [v[4 * ball], v[4 * ball + 1]]
    }

    pub fn ball_vel(&self, v: &[f64], ball: usize) -> [f64; 2] {
        [v[4 * ball + 2], v[4 * ball + 3]]
    }

    pub fn agent_pos(&self, v: &[f64]) -> [f64; 2] {
        self.ball_pos(v, 0)
    }

    pub fn goal(&self, v: &[f64]) -> [f64; 2] {
        [v[4 * self.n_balls], v[4 * self.n_balls + 1]]
    }

    pub fn goal_distance(&self, v: &[f64]) -> f64 {
        let p = self.agent_pos(v);
        let g = self.goal(v);
        ((p[0] - g[0]).powi(2) + (p[1] - g[1]).powi(2)).sqrt()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Ball {
    pub pos: [f64; 2],
    pub vel: [f64; 2],
}

#[derive(Clone, Debug, PartialEq)]
pub struct BallWorldState {
    pub balls: Vec<Ball>,
    pub goal: [f64; 2],
}

impl BallWorldState {
    pub fn to_state_vec(&self, config: &BallWorldConfig) -> StateVec {
        let mut values = Vec::with_capacity(config.state_dim());
        for b in &self.balls {
            values.extend_from_slice(&[b.pos[0], b.pos[1], b.vel[0], b.vel[1]]);
        }
        values.extend_from_slice(&self.goal);
        StateVec::new(values, config.schema_id()).expect("simulated states are finite")
    }

    pub fn from_state_vec(sv: &StateVec, config: &BallWorldConfig) -> Result<Self, BallWorldError> {
        if sv.schema_id() != config.schema_id() {
            return Err(CoreError::SchemaMismatch {
                expected: config.schema_id(),
                got: sv.schema_id(),
            }
            .into());
        }
        let v = sv.values();
        let layout = config.layout();
        let balls = (0..config.n_balls)
            .map(|i| Ball {
                pos: layout.ball_pos(v, i),
                vel: layout.ball_vel(v, i),
            })
            .collect();
        Ok(Self {
            balls,
            goal: layout.goal(v),
        })
    }
}

/// Outcome of one physics step.
#[derive(Clone, Debug)]
pub struct StepResult {
    /// The state after physics; this is what an observer records as `s'`.
    pub next: BallWorldState,
    pub reward_gt: f64,
    /// Always false inside the horizon: the process is approximately
    /// continuing.
    pub done: bool,
    /// Present when the goal was reached: the post-respawn state from which
    /// the next step proceeds.
    pub respawn: Option<BallWorldState>,
}

/// One environment step: semi-implicit Euler with speed clamping, elastic
/// wall reflection, goal check on the agent's new position, and respawn of
/// agent and goal on success.
pub fn step(
    config: &BallWorldConfig,
    state: &BallWorldState,
    action: &ActionVec,
    rng: &mut Rng,
) -> Result<StepResult, BallWorldError> {
    let (lo, hi) = config.accel_bounds;
    if action.dim() != 2 {
        return Err(BallWorldError::OutOfBoundsAction(format!(
            "expected 2 dimensions, got {}",
            action.dim()
        )));
    }
    for &v in action.values() {
        if v < lo || v > hi {
            return Err(BallWorldError::OutOfBoundsAction(format!(
                "{v} outside [{lo}, {hi}]"
            )));
        }
    }

    let mut next = state.clone();
    for (i, ball) in next.balls.iter_mut().enumerate() {
        let accel = if i == 0 {
            [action.values()[0], action.values()[1]]
        } else {
            [
                rng.normal(0.0, config.other_accel_std),
                rng.normal(0.0, config.other_accel_std),
            ]
        };
        *ball = advance_ball(config, *ball, accel);
    }

    let agent = next.balls[0].pos;
    let dist =
        ((agent[0] - next.goal[0]).powi(2) + (agent[1] - next.goal[1]).powi(2)).sqrt();
    let reached = dist <= config.goal_threshold;
    let reward_gt = if reached { 1.0 } else { 0.0 };

    let respawn = if reached {
        let mut re = next.clone();
        let (wlo, whi) = config.wall_bounds();
        re.balls[0].pos = [rng.uniform(wlo, whi), rng.uniform(wlo, whi)];
        re.goal = [rng.uniform(wlo, whi), rng.uniform(wlo, whi)];
        Some(re)
    } else {
        None
    };

    Ok(StepResult {
        next,
        reward_gt,
        done: false,
        respawn,
    })
}

fn advance_ball(config: &BallWorldConfig, ball: Ball, accel: [f64; 2]) -> Ball {
    let mut vel = [
        ball.vel[0] + accel[0] * config.dt,
        ball.vel[1] + accel[1] * config.dt,
    ];
    let speed = (vel[0] * vel[0] + vel[1] * vel[1]).sqrt();
    if speed > config.max_speed {
        let scale = config.max_speed / speed;
        vel = [vel[0] * scale, vel[1] * scale];
    }
    let (lo, hi) = config.wall_bounds();
    let mut pos = [ball.pos[0] + vel[0] * config.dt, ball.pos[1] + vel[1] * config.dt];
    for axis in 0..2 {
        let (p, v) = reflect(pos[axis], vel[axis], lo, hi);
        pos[axis] = p;
        vel[axis] = v;
    }
    Ball { pos, vel }
}

/// Mirror `p` into `[lo, hi]`, negating the velocity once per bounce.
pub(crate) fn reflect(mut p: f64, mut v: f64, lo: f64, hi: f64) -> (f64, f64) {
    debug_assert!(lo < hi);
    while p < lo || p > hi {
        if p < lo {
            p = 2.0 * lo - p;
        } else {
            p = 2.0 * hi - p;
        }
        v = -v;
    }
    (p, v)
}

/// Position-only mirror into `[lo, hi]`.
pub(crate) fn fold(mut p: f64, lo: f64, hi: f64) -> f64 {
    while p < lo || p > hi {
        if p < lo {
            p = 2.0 * lo - p;
        } else {
            p = 2.0 * hi - p;
        }
    }
    p
}

/// Stateful wrapper that owns the current state and applies deferred
/// respawns, so that data collection records dynamics-consistent
/// transitions.
pub struct BallWorld {
    config: BallWorldConfig,
    state: BallWorldState,
}

impl BallWorld {
    pub fn new(config: BallWorldConfig, rng: &mut Rng) -> Self {
        let state = Self::spawn(&config, rng);
        Self { config, state }
    }

    fn spawn(config: &BallWorldConfig, rng: &mut Rng) -> BallWorldState {
        let (lo, hi) = config.wall_bounds();
        let balls = (0..config.n_balls)
            .map(|_| Ball {
                pos: [rng.uniform(lo, hi), rng.uniform(lo, hi)],
                vel: [0.0, 0.0],
            })
            .collect();
        let goal = [rng.uniform(lo, hi), rng.uniform(lo, hi)];
        BallWorldState { balls, goal }
    }

    pub fn reset(&mut self, rng: &mut Rng) {
        self.state = Self::spawn(&self.config, rng);
    }

    pub fn config(&self) -> &BallWorldConfig {
        &self.config
    }

    pub fn state(&self) -> &BallWorldState {
        &self.state
    }

    pub fn observed_state(&self) -> StateVec {
        self.state.to_state_vec(&self.config)
    }

    /// Step the internal state, returning the observed `s'` and reward. On a
    /// goal hit the internal state jumps to the respawn while the returned
    /// `s_next` still shows the agent at the goal.
    pub fn step(&mut self, action: &ActionVec, rng: &mut Rng) -> Result<ObservedStep, BallWorldError> {
        let result = step(&self.config, &self.state, action, rng)?;
        let s_next = result.next.to_state_vec(&self.config);
        self.state = result.respawn.unwrap_or(result.next);
        Ok(ObservedStep {
            s_next,
            reward_gt: result.reward_gt,
            done: result.done,
        })
    }
}

#[derive(Clone, Debug)]
pub struct ObservedStep {
    pub s_next: StateVec,
    pub reward_gt: f64,
    pub done: bool,
}

/// Coverage policies for data collection.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Policy {
    /// i.i.d. uniform accelerations across the bounds.
    Uniform,
    /// Scripted goal-seeking controller standing in for a trained expert.
    Expert,
}

impl Policy {
    pub fn name(&self) -> &'static str {
        match self {
            Policy::Uniform => "uniform",
            Policy::Expert => "expert",
        }
    }

    pub fn act(&self, config: &BallWorldConfig, state: &BallWorldState, rng: &mut Rng) -> ActionVec {
        match self {
            Policy::Uniform => uniform_policy(config, rng),
            Policy::Expert => scripted_expert(config, state),
        }
    }
}

pub fn uniform_policy(config: &BallWorldConfig, rng: &mut Rng) -> ActionVec {
    let (lo, hi) = config.accel_bounds;
    let values = vec![rng.uniform(lo, hi), rng.uniform(lo, hi)];
    ActionVec::new(values, config.action_bounds()).expect("uniform draw is in bounds")
}

/// Proportional-derivative acceleration toward the goal with an analytic
/// repulsion term pushing away from nearby balls, clamped per axis.
pub fn scripted_expert(config: &BallWorldConfig, state: &BallWorldState) -> ActionVec {
    const KP: f64 = 2.0;
    const KD: f64 = 1.6;
    const REPULSE_RANGE: f64 = 3.0;
    const REPULSE_GAIN: f64 = 10.0;

    let agent = &state.balls[0];
    let mut accel = [
        KP * (state.goal[0] - agent.pos[0]) - KD * agent.vel[0],
        KP * (state.goal[1] - agent.pos[1]) - KD * agent.vel[1],
    ];
    for other in &state.balls[1..] {
        let d = [agent.pos[0] - other.pos[0], agent.pos[1] - other.pos[1]];
        let dist = (d[0] * d[0] + d[1] * d[1]).sqrt().max(1e-6);
        if dist < REPULSE_RANGE {
            let push = REPULSE_GAIN * (1.0 - dist / REPULSE_RANGE).powi(2) / dist;
            accel[0] += push * d[0];
            accel[1] += push * d[1];
        }
    }
    let (lo, hi) = config.accel_bounds;
    let values = vec![accel[0].clamp(lo, hi), accel[1].clamp(lo, hi)];
    ActionVec::new(values, config.action_bounds()).expect("clamped action is in bounds")
}

/// Goal-based ground truth: 1 when the agent in `s'` is within the goal
/// threshold, 0 otherwise. Depends only on `s'`, so it is well defined on
/// the independently recombined triples the canonicalization stage builds.
#[derive(Clone, Debug)]
pub struct GroundTruthReward {
    layout: BallWorldLayout,
    threshold: f64,
    schema: SchemaId,
}

impl GroundTruthReward {
    pub fn new(config: &BallWorldConfig) -> Self {
        Self {
            layout: config.layout(),
            threshold: config.goal_threshold,
            schema: config.schema_id(),
        }
    }
}

impl RewardFunction for GroundTruthReward {
    fn name(&self) -> &str {
        "GT"
    }

    fn evaluate_into(&self, batch: &[Triple<'_>], out: &mut Vec<f64>) -> Result<(), RewardError> {
        out.reserve(batch.len());
        for tr in batch {
            if tr.s_next.schema_id() != self.schema {
                return Err(RewardError::SchemaMismatch {
                    name: "GT".into(),
                    expected: self.schema,
                    got: tr.s_next.schema_id(),
                });
            }
            let d = self.layout.goal_distance(tr.s_next.values());
            out.push(if d <= self.threshold { 1.0 } else { 0.0 });
        }
        Ok(())
    }
}

/// `phi(s) = -sqrt(|agent - goal|)`; the square root tames the arena-scale
/// distance values.
#[derive(Clone, Debug)]
pub struct SqrtGoalPotential {
    layout: BallWorldLayout,
    schema: SchemaId,
}

impl SqrtGoalPotential {
    pub fn new(config: &BallWorldConfig) -> Self {
        Self {
            layout: config.layout(),
            schema: config.schema_id(),
        }
    }
}

impl PotentialFunction for SqrtGoalPotential {
    fn name(&self) -> &str {
        "sqrt_goal_potential"
    }

    fn evaluate(&self, states: &[&StateVec]) -> Result<Vec<f64>, RewardError> {
        let mut out = Vec::with_capacity(states.len());
        for sv in states {
            if sv.schema_id() != self.schema {
                return Err(RewardError::SchemaMismatch {
                    name: "sqrt_goal_potential".into(),
                    expected: self.schema,
                    got: sv.schema_id(),
                });
            }
            out.push(-self.layout.goal_distance(sv.values()).sqrt());
        }
        Ok(out)
    }
}

/// Deterministic approximate dynamics: every ball keeps its velocity (the
/// agent additionally applies the queried acceleration), positions advance
/// one step and reflect off the walls. The other balls' random accelerations
/// are zero-mean, so this is their best single-step prediction.
#[derive(Clone, Debug)]
pub struct ConstantVelocityDynamics {
    config: BallWorldConfig,
}

impl ConstantVelocityDynamics {
    pub fn new(config: BallWorldConfig) -> Self {
        Self { config }
    }
}

impl DynamicsModel for ConstantVelocityDynamics {
    fn is_deterministic(&self) -> bool {
        true
    }

    fn sample(
        &self,
        s: &StateVec,
        a: &ActionVec,
        _rng: &mut Rng,
    ) -> Result<StateVec, DynamicsError> {
        if s.schema_id() != self.config.schema_id() {
            return Err(DynamicsError::SchemaMismatch {
                expected: self.config.schema_id(),
                got: s.schema_id(),
            });
        }
        let state = BallWorldState::from_state_vec(s, &self.config)
            .expect("schema checked above");
        let mut next = state;
        for (i, ball) in next.balls.iter_mut().enumerate() {
            let accel = if i == 0 {
                [a.values()[0], a.values()[1]]
            } else {
                [0.0, 0.0]
            };
            *ball = advance_ball(&self.config, *ball, accel);
        }
        Ok(next.to_state_vec(&self.config))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> BallWorldConfig {
        BallWorldConfig::default()
    }

    fn mk_state(config: &BallWorldConfig, agent: Ball, goal: [f64; 2]) -> BallWorldState {
        let mut balls = vec![agent];
        for i in 1..config.n_balls {
            balls.push(Ball {
                pos: [2.0 + i as f64 * 3.0, 15.0],
                vel: [0.0, 0.0],
            });
        }
        BallWorldState { balls, goal }
    }

    #[test]
    fn zero_velocity_zero_action_interior_stays_put() {
        let config = cfg();
        let state = mk_state(
            &config,
            Ball {
                pos: [10.0, 10.0],
                vel: [0.0, 0.0],
            },
            [3.0, 3.0],
        );
        let action = ActionVec::new(vec![0.0, 0.0], config.action_bounds()).unwrap();
        let mut rng = Rng::new(0);
        let result = step(&config, &state, &action, &mut rng).unwrap();
        assert_eq!(result.next.balls[0].pos, [10.0, 10.0]);
        assert_eq!(result.reward_gt, 0.0);
        assert!(result.respawn.is_none());
    }

    #[test]
    fn agent_on_goal_rewarded_and_respawned() {
        let config = cfg();
        let state = mk_state(
            &config,
            Ball {
                pos: [10.0, 10.0],
                vel: [0.0, 0.0],
            },
            [10.0, 10.0],
        );
        let action = ActionVec::new(vec![1.0, -1.0], config.action_bounds()).unwrap();
        let mut rng = Rng::new(0);
        let result = step(&config, &state, &action, &mut rng).unwrap();
        assert_eq!(result.reward_gt, 1.0);
        assert!(!result.done);
        let respawn = result.respawn.expect("goal hit respawns");
        assert_ne!(respawn.goal, result.next.goal);
    }

    #[test]
    fn wall_reflection_closed_form() {
        let config = cfg();
        // Ball exactly at the reflective boundary moving right: the raw
        // position overshoots by v*dt and mirrors back inside.
        let x0 = config.arena - config.ball_radius;
        let v = 3.0;
        let state = mk_state(
            &config,
            Ball {
                pos: [x0, 10.0],
                vel: [v, 0.0],
            },
            [3.0, 3.0],
        );
        let action = ActionVec::new(vec![0.0, 0.0], config.action_bounds()).unwrap();
        let mut rng = Rng::new(0);
        let result = step(&config, &state, &action, &mut rng).unwrap();
        let agent = result.next.balls[0];
        assert!((agent.pos[0] - (x0 - v * config.dt)).abs() < 1e-12);
        assert!((agent.vel[0] + v).abs() < 1e-12);
    }

    #[test]
    fn speeds_and_positions_stay_bounded() {
        let config = cfg();
        let mut rng = Rng::new(42);
        let mut world = BallWorld::new(config.clone(), &mut rng);
        for _ in 0..2000 {
            let action = uniform_policy(&config, &mut rng);
            world.step(&action, &mut rng).unwrap();
            for ball in &world.state().balls {
                let speed = (ball.vel[0].powi(2) + ball.vel[1].powi(2)).sqrt();
                assert!(speed <= config.max_speed + 1e-9, "speed {speed}");
                for &p in &ball.pos {
                    assert!(
                        p >= config.ball_radius - 1e-9
                            && p <= config.arena - config.ball_radius + 1e-9,
                        "position {p}"
                    );
                }
            }
        }
    }

    #[test]
    fn trajectories_are_seed_deterministic() {
        let config = cfg();
        let run = |seed: u64| {
            let mut rng = Rng::new(seed);
            let mut world = BallWorld::new(config.clone(), &mut rng);
            let mut log = Vec::new();
            for _ in 0..200 {
                let action = uniform_policy(&config, &mut rng);
                let obs = world.step(&action, &mut rng).unwrap();
                log.push((obs.s_next, obs.reward_gt));
            }
            log
        };
        assert_eq!(run(9), run(9));
        assert_ne!(run(9), run(10));
    }

    #[test]
    fn ground_truth_reads_next_state_only() {
        let config = cfg();
        let gt = GroundTruthReward::new(&config);
        let on_goal = mk_state(
            &config,
            Ball {
                pos: [5.0, 5.0],
                vel: [0.0, 0.0],
            },
            [5.0, 5.0],
        )
        .to_state_vec(&config);
        let far = mk_state(
            &config,
            Ball {
                pos: [5.0, 15.0],
                vel: [0.0, 0.0],
            },
            [5.0, 5.0],
        )
        .to_state_vec(&config);
        let a = ActionVec::new(vec![0.0, 0.0], config.action_bounds()).unwrap();
        let values = gt
            .evaluate(&[
                Triple {
                    s: &far,
                    a: &a,
                    s_next: &on_goal,
                },
                Triple {
                    s: &on_goal,
                    a: &a,
                    s_next: &far,
                },
            ])
            .unwrap();
        assert_eq!(values, vec![1.0, 0.0]);
    }

    #[test]
    fn potential_examples() {
        let config = cfg();
        let phi = SqrtGoalPotential::new(&config);
        let on_goal = mk_state(
            &config,
            Ball {
                pos: [5.0, 5.0],
                vel: [0.0, 0.0],
            },
            [5.0, 5.0],
        )
        .to_state_vec(&config);
        let at_four = mk_state(
            &config,
            Ball {
                pos: [5.0, 9.0],
                vel: [0.0, 0.0],
            },
            [5.0, 5.0],
        )
        .to_state_vec(&config);
        let values = phi.evaluate(&[&on_goal, &at_four]).unwrap();
        assert_eq!(values[0], 0.0);
        assert!((values[1] + 2.0).abs() < 1e-12);
    }

    #[test]
    fn uniform_policy_centered() {
        let config = cfg();
        let mut rng = Rng::new(123);
        let n = 100_000;
        let mut sums = [0.0, 0.0];
        for _ in 0..n {
            let a = uniform_policy(&config, &mut rng);
            sums[0] += a.values()[0];
            sums[1] += a.values()[1];
        }
        for s in sums {
            assert!((s / n as f64).abs() <= 0.1);
        }
    }

    #[test]
    fn expert_accelerates_toward_goal() {
        let config = cfg();
        // Goal directly +x of a stationary agent, no other balls nearby.
        let state = mk_state(
            &config,
            Ball {
                pos: [5.0, 5.0],
                vel: [0.0, 0.0],
            },
            [12.0, 5.0],
        );
        let action = scripted_expert(&config, &state);
        assert!(action.values()[0] > 0.0);
    }

    #[test]
    fn expert_outperforms_uniform() {
        let config = cfg();
        let goals = |policy: Policy, seed: u64| -> f64 {
            let mut total = 0.0;
            for ep in 0..20 {
                let mut rng = Rng::new(seed).child_idx("ep", ep);
                let mut world = BallWorld::new(config.clone(), &mut rng);
                for _ in 0..config.horizon {
                    let action = policy.act(&config, world.state(), &mut rng);
                    total += world.step(&action, &mut rng).unwrap().reward_gt;
                }
            }
            total / 20.0
        };
        let expert = goals(Policy::Expert, 1);
        let uniform = goals(Policy::Uniform, 1);
        assert!(
            expert >= 5.0 * uniform.max(0.05),
            "expert {expert} vs uniform {uniform}"
        );
    }

    #[test]
    fn out_of_bounds_action_rejected() {
        let config = cfg();
        let state = mk_state(
            &config,
            Ball {
                pos: [5.0, 5.0],
                vel: [0.0, 0.0],
            },
            [12.0, 5.0],
        );
        // Construct with looser bounds, then step against the env's.
        let action = ActionVec::new(vec![9.0, 0.0], vec![(-10.0, 10.0); 2]).unwrap();
        let mut rng = Rng::new(0);
        assert!(matches!(
            step(&config, &state, &action, &mut rng),
            Err(BallWorldError::OutOfBoundsAction(_))
        ));
    }

    #[test]
    fn constant_velocity_dynamics_matches_noiseless_step() {
        let config = cfg();
        let dynamics = ConstantVelocityDynamics::new(config.clone());
        let state = mk_state(
            &config,
            Ball {
                pos: [8.0, 9.0],
                vel: [1.0, -2.0],
            },
            [3.0, 3.0],
        );
        let sv = state.to_state_vec(&config);
        let a = ActionVec::new(vec![2.0, 0.5], config.action_bounds()).unwrap();
        let mut rng = Rng::new(0);
        let predicted = dynamics.sample(&sv, &a, &mut rng).unwrap();
        // Agent matches the true integrator (others differ only by their
        // random accelerations, which are zero here only in expectation).
        let layout = config.layout();
        let vx = 1.0 + 2.0 * config.dt;
        let vy = -2.0 + 0.5 * config.dt;
        let expected_pos = [8.0 + vx * config.dt, 9.0 + vy * config.dt];
        let got = layout.agent_pos(predicted.values());
        assert!((got[0] - expected_pos[0]).abs() < 1e-12);
        assert!((got[1] - expected_pos[1]).abs() < 1e-12);
    }
}
