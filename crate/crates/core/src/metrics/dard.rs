//! Sampled dynamics-aware transformation and its pseudometric.
//!
//! For a transition `(s, a, s')` with transition model `T`:
//!
//! ```text
//! C(R)(s, a, s') = R(s, a, s')
//!                  + gamma * E[ R(s', A, X'') ]    X'' ~ T(. | s', A)
//!                  -         E[ R(s,  A, X')  ]    X'  ~ T(. | s,  A)
//!                  - gamma * E[ R(X', A, X'') ]
//! ```
//!
//! Actions come from a dense deterministic grid. The sampled estimator draws
//! `x'_ij ~ T(.|s, u_i)` and `x''_kl ~ T(.|s', u_k)` once per transition and
//! evaluates the last term over all pairs of these samples — `X''` stays
//! conditioned on the original `s'`, which is what makes potential shaping
//! cancel sample-for-sample. The resulting cost is
//! `O(n_v * (n_a * n_t)^2)` reward queries.

use super::{
    pearson_distance, stable_mean, subsample_batch, ActionGrid, CoverageBatch, MetricConfig,
    MetricError, QuadTermMode,
};
use crate::rng::Rng;
use crate::types::{DynamicsError, DynamicsModel, RewardFunction, StateVec, Triple};

/// Transformed reward values for each transition in `batch`, one inner vector
/// per reward. All rewards see identical sampled actions and next states.
pub fn dard_transform_multi(
    rewards: &[&dyn RewardFunction],
    dynamics: &dyn DynamicsModel,
    batch: &CoverageBatch,
    grid: &ActionGrid,
    cfg: &MetricConfig,
    rng: &mut Rng,
) -> Result<Vec<Vec<f64>>, MetricError> {
    batch.validate()?;
    cfg.validate()?;
    if grid.is_empty() {
        return Err(MetricError::InvalidConfig("empty action grid".into()));
    }
    // One next-state sample per (state, action) is exact for deterministic
    // models; extra draws would only repeat it.
    let n_t = if dynamics.is_deterministic() { 1 } else { cfg.n_t };
    let n_a = grid.len();
    let n_samples = n_a * n_t;
    let gamma = cfg.gamma;
    let base_rng = rng.child("dard");

    let batch_triples: Vec<Triple<'_>> = batch.transitions.iter().map(|t| t.triple()).collect();
    let mut base_values: Vec<Vec<f64>> = Vec::with_capacity(rewards.len());
    for reward in rewards {
        base_values.push(reward.evaluate(&batch_triples)?);
    }

    let mut results = vec![Vec::with_capacity(batch.transitions.len()); rewards.len()];
    let mut values: Vec<f64> = Vec::new();

    for (i, tr) in batch.transitions.iter().enumerate() {
        // Per-transition child stream: identical draws for every reward, and
        // independent of the order transitions are processed in.
        let mut t_rng = base_rng.child_idx("t", i as u64);
        let expected_schema = tr.s.schema_id();

        let mut x_from_s: Vec<StateVec> = Vec::with_capacity(n_samples);
        for u in grid.actions() {
            for _ in 0..n_t {
                let x = dynamics.sample(&tr.s, u, &mut t_rng)?;
                if x.schema_id() != expected_schema {
                    return Err(MetricError::Dynamics(DynamicsError::SchemaMismatch {
                        expected: expected_schema,
                        got: x.schema_id(),
                    }));
                }
                x_from_s.push(x);
            }
        }
        let mut x_from_sn: Vec<StateVec> = Vec::with_capacity(n_samples);
        for u in grid.actions() {
            for _ in 0..n_t {
                let x = dynamics.sample(&tr.s_next, u, &mut t_rng)?;
                if x.schema_id() != expected_schema {
                    return Err(MetricError::Dynamics(DynamicsError::SchemaMismatch {
                        expected: expected_schema,
                        got: x.schema_id(),
                    }));
                }
                x_from_sn.push(x);
            }
        }
        let mut indep: Vec<(usize, StateVec)> = Vec::new();
        if cfg.quad_term == QuadTermMode::Independent {
            // One fresh (u, x'' ~ T(.|s', u)) pair per x' sample instead of
            // the full cross product.
            for _ in 0..x_from_s.len() {
                let k = t_rng.index(n_a);
                let x = dynamics.sample(&tr.s_next, &grid.actions()[k], &mut t_rng)?;
                indep.push((k, x));
            }
        }

        let mut triples: Vec<Triple<'_>> = Vec::new();
        for (r_i, reward) in rewards.iter().enumerate() {
            // E[R(s', A, X'')]
            triples.clear();
            for (k, u) in grid.actions().iter().enumerate() {
                for l in 0..n_t {
                    triples.push(Triple {
                        s: &tr.s_next,
                        a: u,
                        s_next: &x_from_sn[k * n_t + l],
                    });
                }
            }
            values.clear();
            reward.evaluate_into(&triples, &mut values)?;
            let term_next = stable_mean(&values);

            // E[R(s, A, X')]
            triples.clear();
            for (k, u) in grid.actions().iter().enumerate() {
                for j in 0..n_t {
                    triples.push(Triple {
                        s: &tr.s,
                        a: u,
                        s_next: &x_from_s[k * n_t + j],
                    });
                }
            }
            values.clear();
            reward.evaluate_into(&triples, &mut values)?;
            let term_cur = stable_mean(&values);

            // E[R(X', A, X'')]
            triples.clear();
            match cfg.quad_term {
                QuadTermMode::Quadratic => {
                    for xp in &x_from_s {
                        for (k, u) in grid.actions().iter().enumerate() {
                            for l in 0..n_t {
                                triples.push(Triple {
                                    s: xp,
                                    a: u,
                                    s_next: &x_from_sn[k * n_t + l],
                                });
                            }
                        }
                    }
                }
                QuadTermMode::Independent => {
                    for (xp, (k, x)) in x_from_s.iter().zip(&indep) {
                        triples.push(Triple {
                            s: xp,
                            a: &grid.actions()[*k],
                            s_next: x,
                        });
                    }
                }
            }
            values.clear();
            reward.evaluate_into(&triples, &mut values)?;
            let term_both = stable_mean(&values);

            results[r_i]
                .push(base_values[r_i][i] + gamma * term_next - term_cur - gamma * term_both);
        }
    }
    Ok(results)
}

/// Transformed reward values for a single reward.
pub fn dard_transform(
    reward: &dyn RewardFunction,
    dynamics: &dyn DynamicsModel,
    batch: &CoverageBatch,
    grid: &ActionGrid,
    cfg: &MetricConfig,
    rng: &mut Rng,
) -> Result<Vec<f64>, MetricError> {
    Ok(dard_transform_multi(&[reward], dynamics, batch, grid, cfg, rng)?.remove(0))
}

/// Dynamics-aware pseudometric: Pearson distance between the two transformed
/// rewards, with identical sampled actions and next states for both.
pub fn dard_distance(
    ra: &dyn RewardFunction,
    rb: &dyn RewardFunction,
    dynamics: &dyn DynamicsModel,
    batch: &CoverageBatch,
    grid: &ActionGrid,
    cfg: &MetricConfig,
    rng: &mut Rng,
) -> Result<f64, MetricError> {
    let sub = subsample_batch(batch, cfg.n_v, rng);
    let canon = dard_transform_multi(&[ra, rb], dynamics, &sub, grid, cfg, rng)?;
    pearson_distance(&canon[0], &canon[1])
}
