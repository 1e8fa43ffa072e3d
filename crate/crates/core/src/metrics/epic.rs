//! Sampled EPIC canonicalization and the EPIC pseudometric.
//!
//! For a transition `(s, a, s')` the canonically shaped reward is
//!
//! ```text
//! C(R)(s, a, s') = R(s, a, s')
//!                  + E[ gamma R(s', A, X') - R(s, A, X') - gamma R(X, A, X') ]
//! ```
//!
//! with `A` drawn from the action pool and `X`, `X'` drawn independently from
//! the state pool. The estimator draws the `(A, X, X')` triples once per call
//! and reuses them across every batch transition and across both rewards of a
//! distance computation.

use std::collections::HashMap;

use super::{
    pearson_distance, stable_mean, subsample_batch, CoverageBatch, MetricConfig, MetricError,
};
use crate::rng::Rng;
use crate::types::{RewardFunction, StateVec, Triple};

/// Interns states by value so the per-state canonicalization mean is
/// evaluated once per distinct state. Rollout batches repeat states heavily
/// (`s'_t == s_{t+1}` inside an episode), and tabular batches have only a
/// handful of distinct states.
struct StateInterner<'a> {
    distinct: Vec<&'a StateVec>,
    slots: HashMap<(u64, usize), usize>,
}

impl<'a> StateInterner<'a> {
    fn new() -> Self {
        Self {
            distinct: Vec::new(),
            slots: HashMap::new(),
        }
    }

    fn intern(&mut self, sv: &'a StateVec) -> usize {
        let h = sv.content_hash();
        let mut probe = 0usize;
        loop {
            match self.slots.get(&(h, probe)) {
                Some(&i) if self.distinct[i] == sv => return i,
                Some(_) => probe += 1, // hash collision, rare
                None => {
                    let i = self.distinct.len();
                    self.slots.insert((h, probe), i);
                    self.distinct.push(sv);
                    return i;
                }
            }
        }
    }
}

/// Canonicalized reward values for each transition in `batch`, one inner
/// vector per reward. All rewards see identical draws.
pub fn epic_canonicalize_multi(
    rewards: &[&dyn RewardFunction],
    batch: &CoverageBatch,
    cfg: &MetricConfig,
    rng: &mut Rng,
) -> Result<Vec<Vec<f64>>, MetricError> {
    batch.validate()?;
    cfg.validate()?;
    let n_m = cfg.n_m;
    let gamma = cfg.gamma;

    let mut draw = rng.child("epic/draws");
    let mut action_idx = Vec::with_capacity(n_m);
    let mut state_idx = Vec::with_capacity(n_m);
    let mut next_idx = Vec::with_capacity(n_m);
    for _ in 0..n_m {
        action_idx.push(draw.index(batch.action_pool.len()));
        state_idx.push(draw.index(batch.state_pool.len()));
        next_idx.push(draw.index(batch.state_pool.len()));
    }

    let mut interner = StateInterner::new();
    let mut s_slot = Vec::with_capacity(batch.transitions.len());
    let mut sn_slot = Vec::with_capacity(batch.transitions.len());
    for tr in &batch.transitions {
        s_slot.push(interner.intern(&tr.s));
        sn_slot.push(interner.intern(&tr.s_next));
    }
    let distinct = interner.distinct;

    let batch_triples: Vec<Triple<'_>> = batch.transitions.iter().map(|t| t.triple()).collect();
    let mut results = Vec::with_capacity(rewards.len());
    let mut triples: Vec<Triple<'_>> = Vec::with_capacity(n_m);
    let mut values: Vec<f64> = Vec::with_capacity(n_m);
    for reward in rewards {
        let base = reward.evaluate(&batch_triples)?;

        // mean_k R(x, A_k, X'_k) per distinct state.
        let mut state_mean = Vec::with_capacity(distinct.len());
        for &x in &distinct {
            triples.clear();
            for k in 0..n_m {
                triples.push(Triple {
                    s: x,
                    a: &batch.action_pool[action_idx[k]],
                    s_next: &batch.state_pool[next_idx[k]],
                });
            }
            values.clear();
            reward.evaluate_into(&triples, &mut values)?;
            state_mean.push(stable_mean(&values));
        }

        // mean_k R(X_k, A_k, X'_k); constant across the batch.
        triples.clear();
        for k in 0..n_m {
            triples.push(Triple {
                s: &batch.state_pool[state_idx[k]],
                a: &batch.action_pool[action_idx[k]],
                s_next: &batch.state_pool[next_idx[k]],
            });
        }
        values.clear();
        reward.evaluate_into(&triples, &mut values)?;
        let grand_mean = stable_mean(&values);

        let canon: Vec<f64> = (0..batch.transitions.len())
            .map(|i| {
                base[i] + gamma * state_mean[sn_slot[i]] - state_mean[s_slot[i]]
                    - gamma * grand_mean
            })
            .collect();
        results.push(canon);
    }
    Ok(results)
}

/// Canonicalized reward values for a single reward.
pub fn epic_canonicalize(
    reward: &dyn RewardFunction,
    batch: &CoverageBatch,
    cfg: &MetricConfig,
    rng: &mut Rng,
) -> Result<Vec<f64>, MetricError> {
    Ok(epic_canonicalize_multi(&[reward], batch, cfg, rng)?.remove(0))
}

/// EPIC pseudometric: Pearson distance between the two canonicalized rewards
/// on the batch's joint transitions, with shared canonicalization draws.
pub fn epic_distance(
    ra: &dyn RewardFunction,
    rb: &dyn RewardFunction,
    batch: &CoverageBatch,
    cfg: &MetricConfig,
    rng: &mut Rng,
) -> Result<f64, MetricError> {
    let sub = subsample_batch(batch, cfg.n_v, rng);
    let canon = epic_canonicalize_multi(&[ra, rb], &sub, cfg, rng)?;
    pearson_distance(&canon[0], &canon[1])
}
