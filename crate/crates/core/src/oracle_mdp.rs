//! Tiny tabular MDP with exact, enumeration-based implementations of both
//! reward transformations and distances. Every Monte Carlo estimator in
//! [`crate::metrics`] is verified against this module.
//!
//! Sizes are capped (12 states, 5 actions) so the quadruple enumeration in
//! the dynamics-aware transform stays trivially fast and obviously correct.

use thiserror::Error;

use crate::metrics::{ActionGrid, CoverageBatch, MetricError};
use crate::rng::Rng;
use crate::types::{
    ActionBounds, ActionVec, DynamicsError, DynamicsModel, RewardError, RewardFunction, SchemaId,
    StateVec, Transition, Triple,
};

pub const MAX_STATES: usize = 12;
pub const MAX_ACTIONS: usize = 5;

#[derive(Error, Debug)]
pub enum OracleError {
    #[error("tabular MDP limited to {MAX_STATES} states and {MAX_ACTIONS} actions, got {states}x{actions}")]
    TooLarge { states: usize, actions: usize },
    #[error("transition row ({s}, {a}) sums to {sum}, not 1")]
    BadRow { s: usize, a: usize, sum: f64 },
    #[error("negative probability at ({s}, {a}, {s2})")]
    NegativeProbability { s: usize, a: usize, s2: usize },
    #[error("table size mismatch: expected {expected}, got {got}")]
    BadTableSize { expected: usize, got: usize },
}

/// Finite MDP with dense transition probabilities `[s][a][s']`.
#[derive(Clone, Debug)]
pub struct TabularMdp {
    n_states: usize,
    n_actions: usize,
    transition: Vec<f64>,
    pub gamma: f64,
}

impl TabularMdp {
    pub fn new(
        n_states: usize,
        n_actions: usize,
        transition: Vec<f64>,
        gamma: f64,
    ) -> Result<Self, OracleError> {
        if n_states == 0 || n_actions == 0 || n_states > MAX_STATES || n_actions > MAX_ACTIONS {
            return Err(OracleError::TooLarge {
                states: n_states,
                actions: n_actions,
            });
        }
        let expected = n_states * n_actions * n_states;
        if transition.len() != expected {
            return Err(OracleError::BadTableSize {
                expected,
                got: transition.len(),
            });
        }
        for s in 0..n_states {
            for a in 0..n_actions {
                let mut sum = 0.0;
                for s2 in 0..n_states {
                    let p = transition[(s * n_actions + a) * n_states + s2];
                    if p < 0.0 {
                        return Err(OracleError::NegativeProbability { s, a, s2 });
                    }
                    sum += p;
                }
                if (sum - 1.0).abs() > 1e-12 {
                    return Err(OracleError::BadRow { s, a, sum });
                }
            }
        }
        Ok(Self {
            n_states,
            n_actions,
            transition,
            gamma,
        })
    }

    /// Strictly positive random transition table (ergodic by construction).
    pub fn random(n_states: usize, n_actions: usize, gamma: f64, rng: &mut Rng) -> Self {
        let mut transition = vec![0.0; n_states * n_actions * n_states];
        for s in 0..n_states {
            for a in 0..n_actions {
                let row = &mut transition[(s * n_actions + a) * n_states..][..n_states];
                let mut sum = 0.0;
                for p in row.iter_mut() {
                    *p = rng.uniform(0.05, 1.0);
                    sum += *p;
                }
                for p in row.iter_mut() {
                    *p /= sum;
                }
                // Renormalize exactly so validation never trips on rounding.
                let err: f64 = 1.0 - row.iter().sum::<f64>();
                row[0] += err;
            }
        }
        Self::new(n_states, n_actions, transition, gamma).expect("constructed rows are valid")
    }

    /// Deterministic cycle `s -> s+1 mod n` with a single action.
    pub fn deterministic_chain(n_states: usize, gamma: f64) -> Self {
        let mut transition = vec![0.0; n_states * n_states];
        for s in 0..n_states {
            transition[s * n_states + (s + 1) % n_states] = 1.0;
        }
        Self::new(n_states, 1, transition, gamma).expect("chain rows are valid")
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn prob(&self, s: usize, a: usize, s2: usize) -> f64 {
        self.transition[(s * self.n_actions + a) * self.n_states + s2]
    }

    pub fn schema_name(&self) -> String {
        format!("tabular/v1/s{}a{}", self.n_states, self.n_actions)
    }

    pub fn schema_id(&self) -> SchemaId {
        SchemaId::from_name(&self.schema_name())
    }

    pub fn action_bounds(&self) -> ActionBounds {
        vec![(0.0, (self.n_actions - 1) as f64)]
    }

    /// Discrete states are encoded as a 1-length vector holding the index.
    pub fn state_vec(&self, s: usize) -> StateVec {
        StateVec::new(vec![s as f64], self.schema_id()).expect("index is finite")
    }

    pub fn action_vec(&self, a: usize) -> ActionVec {
        ActionVec::new(vec![a as f64], self.action_bounds()).expect("index within bounds")
    }

    /// Grid enumerating every action exactly once.
    pub fn action_grid(&self) -> ActionGrid {
        let actions = (0..self.n_actions).map(|a| self.action_vec(a)).collect();
        ActionGrid::from_actions(actions).expect("non-empty action set")
    }

    pub fn dynamics(&self) -> TabularDynamics {
        let deterministic = (0..self.n_states).all(|s| {
            (0..self.n_actions).all(|a| {
                (0..self.n_states).all(|s2| {
                    let p = self.prob(s, a, s2);
                    p == 0.0 || p == 1.0
                })
            })
        });
        TabularDynamics {
            mdp: self.clone(),
            deterministic,
        }
    }

    /// Stationary distribution of the uniform-random-action Markov chain,
    /// by damped power iteration to 1e-13.
    pub fn stationary_uniform_policy(&self) -> Vec<f64> {
        let n = self.n_states;
        let mut chain = vec![0.0; n * n];
        for s in 0..n {
            for a in 0..self.n_actions {
                for s2 in 0..n {
                    chain[s * n + s2] += self.prob(s, a, s2) / self.n_actions as f64;
                }
            }
        }
        let mut dist = vec![1.0 / n as f64; n];
        let mut next = vec![0.0; n];
        for _ in 0..200_000 {
            for x in next.iter_mut() {
                *x = 0.0;
            }
            for s in 0..n {
                for s2 in 0..n {
                    next[s2] += dist[s] * chain[s * n + s2];
                }
            }
            // Damping keeps periodic chains convergent without changing the
            // fixed point.
            let mut delta = 0.0f64;
            for s in 0..n {
                let blended = 0.5 * dist[s] + 0.5 * next[s];
                delta = delta.max((blended - dist[s]).abs());
                dist[s] = blended;
            }
            let total: f64 = dist.iter().sum();
            for x in dist.iter_mut() {
                *x /= total;
            }
            if delta < 1e-13 {
                break;
            }
        }
        dist
    }
}

/// Categorical sampler over the MDP's transition table.
#[derive(Clone, Debug)]
pub struct TabularDynamics {
    mdp: TabularMdp,
    deterministic: bool,
}

impl TabularDynamics {
    fn state_index(&self, sv: &StateVec) -> Result<usize, DynamicsError> {
        if sv.schema_id() != self.mdp.schema_id() {
            return Err(DynamicsError::SchemaMismatch {
                expected: self.mdp.schema_id(),
                got: sv.schema_id(),
            });
        }
        Ok(sv.values()[0].round() as usize)
    }
}

impl DynamicsModel for TabularDynamics {
    fn is_deterministic(&self) -> bool {
        self.deterministic
    }

    fn sample(&self, s: &StateVec, a: &ActionVec, rng: &mut Rng) -> Result<StateVec, DynamicsError> {
        let si = self.state_index(s)?;
        let ai = a.values()[0].round() as usize;
        let u = rng.unit();
        let mut acc = 0.0;
        let mut chosen = self.mdp.n_states - 1;
        for s2 in 0..self.mdp.n_states {
            acc += self.mdp.prob(si, ai, s2);
            if u < acc {
                chosen = s2;
                break;
            }
        }
        Ok(self.mdp.state_vec(chosen))
    }
}

/// Dense reward table over `[s][a][s']`.
#[derive(Clone, Debug, PartialEq)]
pub struct TabularReward {
    n_states: usize,
    n_actions: usize,
    values: Vec<f64>,
}

impl TabularReward {
    pub fn new(n_states: usize, n_actions: usize, values: Vec<f64>) -> Result<Self, OracleError> {
        let expected = n_states * n_actions * n_states;
        if values.len() != expected {
            return Err(OracleError::BadTableSize {
                expected,
                got: values.len(),
            });
        }
        Ok(Self {
            n_states,
            n_actions,
            values,
        })
    }

    pub fn constant(n_states: usize, n_actions: usize, c: f64) -> Self {
        Self {
            n_states,
            n_actions,
            values: vec![c; n_states * n_actions * n_states],
        }
    }

    pub fn random(n_states: usize, n_actions: usize, rng: &mut Rng) -> Self {
        let values = (0..n_states * n_actions * n_states)
            .map(|_| rng.normal(0.0, 1.0))
            .collect();
        Self {
            n_states,
            n_actions,
            values,
        }
    }

    pub fn get(&self, s: usize, a: usize, s2: usize) -> f64 {
        self.values[(s * self.n_actions + a) * self.n_states + s2]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// `R + gamma * phi[s'] - phi[s]`.
    pub fn shaped(&self, phi: &[f64], gamma: f64) -> Self {
        assert_eq!(phi.len(), self.n_states);
        let mut out = self.clone();
        for s in 0..self.n_states {
            for a in 0..self.n_actions {
                for s2 in 0..self.n_states {
                    let idx = (s * self.n_actions + a) * self.n_states + s2;
                    out.values[idx] += gamma * phi[s2] - phi[s];
                }
            }
        }
        out
    }

    /// `lambda * R + c`.
    pub fn affine(&self, lambda: f64, c: f64) -> Self {
        let values = self.values.iter().map(|v| lambda * v + c).collect();
        Self {
            n_states: self.n_states,
            n_actions: self.n_actions,
            values,
        }
    }

    /// `R + scale * other`, e.g. for building noisy reward ladders.
    pub fn add_scaled(&self, other: &TabularReward, scale: f64) -> Self {
        assert_eq!(self.values.len(), other.values.len());
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a + scale * b)
            .collect();
        Self {
            n_states: self.n_states,
            n_actions: self.n_actions,
            values,
        }
    }

    pub fn max_abs_diff(&self, other: &TabularReward) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()))
    }

    /// Wrap as a [`RewardFunction`] over index-coded states for use with the
    /// sampled estimators.
    pub fn reward_fn(&self, mdp: &TabularMdp, name: impl Into<String>) -> TabularRewardFn {
        TabularRewardFn {
            table: self.clone(),
            schema: mdp.schema_id(),
            name: name.into(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct TabularRewardFn {
    table: TabularReward,
    schema: SchemaId,
    name: String,
}

impl RewardFunction for TabularRewardFn {
    fn name(&self) -> &str {
        &self.name
    }

    fn evaluate_into(&self, batch: &[Triple<'_>], out: &mut Vec<f64>) -> Result<(), RewardError> {
        out.reserve(batch.len());
        for tr in batch {
            if tr.s.schema_id() != self.schema {
                return Err(RewardError::SchemaMismatch {
                    name: self.name.clone(),
                    expected: self.schema,
                    got: tr.s.schema_id(),
                });
            }
            let s = tr.s.values()[0].round() as usize;
            let a = tr.a.values()[0].round() as usize;
            let s2 = tr.s_next.values()[0].round() as usize;
            out.push(self.table.get(s, a, s2));
        }
        Ok(())
    }
}

/// Exact EPIC canonicalization by weighted enumeration:
///
/// `C(s,a,s') = R(s,a,s') + gamma*m(s') - m(s) - gamma*m0` where
/// `m(x) = E_{A,X'}[R(x, A, X')]` and `m0 = E_X[m(X)]`.
pub fn exact_epic_canonicalize(
    r: &TabularReward,
    d_s: &[f64],
    d_a: &[f64],
    gamma: f64,
) -> TabularReward {
    let n = r.n_states;
    let na = r.n_actions;
    debug_assert!((d_s.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    debug_assert!((d_a.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    let mut m = vec![0.0; n];
    for x in 0..n {
        let mut acc = 0.0;
        for a in 0..na {
            for y in 0..n {
                acc += d_a[a] * d_s[y] * r.get(x, a, y);
            }
        }
        m[x] = acc;
    }
    let m0: f64 = (0..n).map(|x| d_s[x] * m[x]).sum();
    let mut out = r.clone();
    for s in 0..n {
        for a in 0..na {
            for s2 in 0..n {
                let idx = (s * na + a) * n + s2;
                out.values[idx] += gamma * m[s2] - m[s] - gamma * m0;
            }
        }
    }
    out
}

/// Exact dynamics-aware transformation by weighted enumeration:
///
/// `C(s,a,s') = R(s,a,s') + gamma*g(s') - g(s) - gamma*h(s,s')` where
/// `g(x) = E_{A, Y~T(.|x,A)}[R(x, A, Y)]` is the one-step expected reward
/// from `x`, and `h(s,s')` averages `R(X', A, X'')` with
/// `X' ~ T(.|s, A1)` and `X'' ~ T(.|s', A2)` (both conditioned on the
/// original transition's states, matching the sampled estimator).
pub fn exact_dard_transform(r: &TabularReward, mdp: &TabularMdp, d_a: &[f64]) -> TabularReward {
    let n = mdp.n_states();
    let na = mdp.n_actions();
    let gamma = mdp.gamma;
    debug_assert!((d_a.iter().sum::<f64>() - 1.0).abs() < 1e-9);

    let mut g = vec![0.0; n];
    for x in 0..n {
        let mut acc = 0.0;
        for a in 0..na {
            for y in 0..n {
                acc += d_a[a] * mdp.prob(x, a, y) * r.get(x, a, y);
            }
        }
        g[x] = acc;
    }

    // k[x'][s'] = E_{A2, X''~T(.|s',A2)}[ R(x', A2, X'') ]
    let mut k = vec![0.0; n * n];
    for xp in 0..n {
        for sp in 0..n {
            let mut acc = 0.0;
            for a2 in 0..na {
                for xpp in 0..n {
                    acc += d_a[a2] * mdp.prob(sp, a2, xpp) * r.get(xp, a2, xpp);
                }
            }
            k[xp * n + sp] = acc;
        }
    }

    // w[s][x'] = P(X' = x' | s) under A1 ~ d_a.
    let mut w = vec![0.0; n * n];
    for s in 0..n {
        for a1 in 0..na {
            for xp in 0..n {
                w[s * n + xp] += d_a[a1] * mdp.prob(s, a1, xp);
            }
        }
    }

    let mut out = r.clone();
    for s in 0..n {
        for a in 0..na {
            for s2 in 0..n {
                let mut h = 0.0;
                for xp in 0..n {
                    h += w[s * n + xp] * k[xp * n + s2];
                }
                let idx = (s * na + a) * n + s2;
                out.values[idx] += gamma * g[s2] - g[s] - gamma * h;
            }
        }
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TransformKind {
    Epic,
    Dard,
}

/// Explicit joint coverage distribution over `(s, a, s')`.
#[derive(Clone, Debug)]
pub struct JointCoverage {
    n_states: usize,
    n_actions: usize,
    weights: Vec<f64>,
}

impl JointCoverage {
    /// Stationary distribution of uniform-random actions composed with the
    /// true dynamics: `w(s,a,s') = pi(s) * (1/|A|) * T(s'|s,a)`.
    pub fn stationary_uniform(mdp: &TabularMdp) -> Self {
        let pi = mdp.stationary_uniform_policy();
        let n = mdp.n_states();
        let na = mdp.n_actions();
        let mut weights = vec![0.0; n * na * n];
        for s in 0..n {
            for a in 0..na {
                for s2 in 0..n {
                    weights[(s * na + a) * n + s2] = pi[s] * mdp.prob(s, a, s2) / na as f64;
                }
            }
        }
        Self {
            n_states: n,
            n_actions: na,
            weights,
        }
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn state_marginal(&self) -> Vec<f64> {
        let mut d = vec![0.0; self.n_states];
        for s in 0..self.n_states {
            for a in 0..self.n_actions {
                for s2 in 0..self.n_states {
                    d[s] += self.weights[(s * self.n_actions + a) * self.n_states + s2];
                }
            }
        }
        d
    }

    pub fn action_marginal(&self) -> Vec<f64> {
        let mut d = vec![0.0; self.n_actions];
        for s in 0..self.n_states {
            for a in 0..self.n_actions {
                for s2 in 0..self.n_states {
                    d[a] += self.weights[(s * self.n_actions + a) * self.n_states + s2];
                }
            }
        }
        d
    }

    /// i.i.d. transitions drawn from the joint coverage.
    pub fn sample_transitions(&self, mdp: &TabularMdp, n: usize, rng: &mut Rng) -> Vec<Transition> {
        let pi = self.state_marginal();
        let da = self.action_marginal();
        let mut out = Vec::with_capacity(n);
        for i in 0..n {
            let s = categorical(&pi, rng);
            let a = categorical(&da, rng);
            let row: Vec<f64> = (0..mdp.n_states()).map(|s2| mdp.prob(s, a, s2)).collect();
            let s2 = categorical(&row, rng);
            out.push(
                Transition::new(
                    mdp.state_vec(s),
                    mdp.action_vec(a),
                    mdp.state_vec(s2),
                    0,
                    i as u64,
                    0.0,
                    false,
                )
                .expect("tabular schemas match"),
            );
        }
        out
    }

    pub fn sample_batch(&self, mdp: &TabularMdp, n: usize, rng: &mut Rng) -> CoverageBatch {
        CoverageBatch::from_transitions(self.sample_transitions(mdp, n, rng))
            .expect("n >= 1 transitions")
    }
}

fn categorical(weights: &[f64], rng: &mut Rng) -> usize {
    let total: f64 = weights.iter().sum();
    let u = rng.unit() * total;
    let mut acc = 0.0;
    for (i, w) in weights.iter().enumerate() {
        acc += w;
        if u < acc {
            return i;
        }
    }
    weights.len() - 1
}

/// Exact pseudometric under the coverage weights: population Pearson distance
/// between the two exactly transformed reward tables.
pub fn exact_distance(
    ra: &TabularReward,
    rb: &TabularReward,
    kind: TransformKind,
    mdp: &TabularMdp,
    coverage: &JointCoverage,
) -> Result<f64, MetricError> {
    let d_a = coverage.action_marginal();
    let (ca, cb) = match kind {
        TransformKind::Epic => {
            let d_s = coverage.state_marginal();
            (
                exact_epic_canonicalize(ra, &d_s, &d_a, mdp.gamma),
                exact_epic_canonicalize(rb, &d_s, &d_a, mdp.gamma),
            )
        }
        TransformKind::Dard => (
            exact_dard_transform(ra, mdp, &d_a),
            exact_dard_transform(rb, mdp, &d_a),
        ),
    };
    weighted_pearson_distance(ca.values(), cb.values(), coverage.weights())
}

/// Population Pearson distance under explicit weights.
pub fn weighted_pearson_distance(x: &[f64], y: &[f64], w: &[f64]) -> Result<f64, MetricError> {
    assert_eq!(x.len(), y.len());
    assert_eq!(x.len(), w.len());
    let total: f64 = w.iter().sum();
    let mx: f64 = x.iter().zip(w).map(|(v, w)| v * w).sum::<f64>() / total;
    let my: f64 = y.iter().zip(w).map(|(v, w)| v * w).sum::<f64>() / total;
    let mut var_x = 0.0;
    let mut var_y = 0.0;
    let mut cov = 0.0;
    let mut dev_x = 0.0f64;
    let mut dev_y = 0.0f64;
    for i in 0..x.len() {
        if w[i] == 0.0 {
            continue;
        }
        let dx = x[i] - mx;
        let dy = y[i] - my;
        var_x += w[i] * dx * dx;
        var_y += w[i] * dy * dy;
        cov += w[i] * dx * dy;
        dev_x = dev_x.max(dx.abs());
        dev_y = dev_y.max(dy.abs());
    }
    if var_x <= 0.0 || dev_x <= 1e-12 * (1.0 + mx.abs()) {
        return Err(MetricError::DegenerateVariance("first reward"));
    }
    if var_y <= 0.0 || dev_y <= 1e-12 * (1.0 + my.abs()) {
        return Err(MetricError::DegenerateVariance("second reward"));
    }
    if x == y {
        return Ok(0.0);
    }
    let rho = (cov / (var_x.sqrt() * var_y.sqrt())).clamp(-1.0, 1.0);
    Ok(((1.0 - rho) / 2.0).max(0.0).sqrt())
}
