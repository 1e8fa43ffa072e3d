//! Domain types shared by every module: states, actions, transitions, and
//! the reward / potential / dynamics interfaces.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::{fnv1a, fnv1a_extend_f64, Rng};

/// Discount factor used everywhere unless a caller overrides it.
pub const DEFAULT_GAMMA: f64 = 0.95;

/// Identifies a state-vector layout. Environments derive one per
/// configuration so that rewards can reject states they do not understand.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SchemaId(pub u64);

impl SchemaId {
    pub fn from_name(name: &str) -> Self {
        SchemaId(fnv1a(name.as_bytes()))
    }
}

impl fmt::Debug for SchemaId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "SchemaId({:016x})", self.0)
    }
}

#[derive(Error, Debug)]
pub enum CoreError {
    #[error("state entry {0} is not finite")]
    NonFiniteState(usize),
    #[error("action entry {0} is not finite")]
    NonFiniteAction(usize),
    #[error("action entry {index} = {value} outside bounds [{lo}, {hi}]")]
    OutOfBoundsAction {
        index: usize,
        value: f64,
        lo: f64,
        hi: f64,
    },
    #[error("schema mismatch: expected {expected:?}, got {got:?}")]
    SchemaMismatch { expected: SchemaId, got: SchemaId },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
}

/// Fixed-length real vector tagged with the layout schema it follows.
/// All entries are finite by construction.
#[derive(Clone, PartialEq, Debug, Serialize, Deserialize)]
pub struct StateVec {
    values: Vec<f64>,
    schema_id: SchemaId,
}

impl StateVec {
    pub fn new(values: Vec<f64>, schema_id: SchemaId) -> Result<Self, CoreError> {
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(CoreError::NonFiniteState(i));
        }
        Ok(Self { values, schema_id })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn schema_id(&self) -> SchemaId {
        self.schema_id
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    /// Stable content hash (schema plus value bit patterns).
    pub fn content_hash(&self) -> u64 {
        fnv1a_extend_f64(self.schema_id.0, &self.values)
    }
}

/// Per-dimension action bounds, `[lo, hi]` inclusive.
pub type ActionBounds = Vec<(f64, f64)>;

/// Bounded real action vector. Entries are finite and within their declared
/// bounds by construction.
#[derive(Clone, PartialEq, Debug, Serialize, Deserialize)]
pub struct ActionVec {
    values: Vec<f64>,
    bounds: ActionBounds,
}

impl ActionVec {
    pub fn new(values: Vec<f64>, bounds: ActionBounds) -> Result<Self, CoreError> {
        if values.len() != bounds.len() {
            return Err(CoreError::DimensionMismatch {
                expected: bounds.len(),
                got: values.len(),
            });
        }
        for (i, (&v, &(lo, hi))) in values.iter().zip(bounds.iter()).enumerate() {
            if !v.is_finite() {
                return Err(CoreError::NonFiniteAction(i));
            }
            if v < lo || v > hi {
                return Err(CoreError::OutOfBoundsAction {
                    index: i,
                    value: v,
                    lo,
                    hi,
                });
            }
        }
        Ok(Self { values, bounds })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn bounds(&self) -> &[(f64, f64)] {
        &self.bounds
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }
}

/// One `(s, a, s')` sample with collection metadata; the atomic unit every
/// metric consumes.
#[derive(Clone, PartialEq, Debug)]
pub struct Transition {
    pub s: StateVec,
    pub a: ActionVec,
    pub s_next: StateVec,
    pub episode: u64,
    pub t: u64,
    /// Ground-truth reward recorded at collection time.
    pub r_gt: f64,
    pub done: bool,
}

impl Transition {
    pub fn new(
        s: StateVec,
        a: ActionVec,
        s_next: StateVec,
        episode: u64,
        t: u64,
        r_gt: f64,
        done: bool,
    ) -> Result<Self, CoreError> {
        if s.schema_id() != s_next.schema_id() {
            return Err(CoreError::SchemaMismatch {
                expected: s.schema_id(),
                got: s_next.schema_id(),
            });
        }
        Ok(Self {
            s,
            a,
            s_next,
            episode,
            t,
            r_gt,
            done,
        })
    }

    pub fn triple(&self) -> Triple<'_> {
        Triple {
            s: &self.s,
            a: &self.a,
            s_next: &self.s_next,
        }
    }

    /// Stable content hash over `(s, a, s')` only; metadata is excluded so
    /// synthetic triples built from the same vectors hash identically.
    pub fn content_hash(&self) -> u64 {
        triple_content_hash(self.triple())
    }
}

/// Borrowed `(s, a, s')` view. Metrics evaluate rewards on synthetic triples
/// (canonicalization draws, dynamics samples) that never exist as owned
/// [`Transition`]s, so the reward interface works on views.
#[derive(Clone, Copy, Debug)]
pub struct Triple<'a> {
    pub s: &'a StateVec,
    pub a: &'a ActionVec,
    pub s_next: &'a StateVec,
}

pub fn triple_content_hash(t: Triple<'_>) -> u64 {
    let mut h = t.s.content_hash();
    h = fnv1a_extend_f64(h, t.a.values());
    fnv1a_extend_f64(h, t.s_next.values())
}

#[derive(Error, Debug)]
pub enum RewardError {
    #[error("reward '{name}' schema mismatch: expected {expected:?}, got {got:?}")]
    SchemaMismatch {
        name: String,
        expected: SchemaId,
        got: SchemaId,
    },
    #[error("reward produced a non-finite value at batch index {0}")]
    NonFinite(usize),
    #[error(transparent)]
    Core(#[from] CoreError),
}

/// Maps transitions to scalar rewards.
///
/// Implementations must be deterministic: repeated evaluation of the same
/// triple yields the same value (noise-wrapped rewards derive their noise
/// from a content hash, not from stream state), and outputs are finite for
/// in-bounds inputs.
pub trait RewardFunction: Send + Sync {
    fn name(&self) -> &str;

    /// Evaluate a batch of triples, appending one value per triple to `out`.
    fn evaluate_into(&self, batch: &[Triple<'_>], out: &mut Vec<f64>) -> Result<(), RewardError>;

    fn evaluate(&self, batch: &[Triple<'_>]) -> Result<Vec<f64>, RewardError> {
        let mut out = Vec::with_capacity(batch.len());
        self.evaluate_into(batch, &mut out)?;
        Ok(out)
    }

    fn evaluate_transitions(&self, transitions: &[Transition]) -> Result<Vec<f64>, RewardError> {
        let triples: Vec<Triple<'_>> = transitions.iter().map(Transition::triple).collect();
        self.evaluate(&triples)
    }
}

impl<T: RewardFunction + ?Sized> RewardFunction for Arc<T> {
    fn name(&self) -> &str {
        (**self).name()
    }

    fn evaluate_into(&self, batch: &[Triple<'_>], out: &mut Vec<f64>) -> Result<(), RewardError> {
        (**self).evaluate_into(batch, out)
    }
}

/// State potential used for reward shaping.
pub trait PotentialFunction: Send + Sync {
    fn name(&self) -> &str;

    /// One value per state; finite and bounded on the state space in use.
    fn evaluate(&self, states: &[&StateVec]) -> Result<Vec<f64>, RewardError>;
}

#[derive(Error, Debug)]
pub enum DynamicsError {
    #[error("dynamics produced an invalid state: {0}")]
    InvalidState(#[from] CoreError),
    #[error("dynamics schema mismatch: expected {expected:?}, got {got:?}")]
    SchemaMismatch { expected: SchemaId, got: SchemaId },
}

/// Conditional next-state sampler `T(s' | s, a)`.
pub trait DynamicsModel: Send + Sync {
    /// When true, `sample` ignores the rng and identical `(s, a)` inputs
    /// yield identical outputs.
    fn is_deterministic(&self) -> bool;

    fn sample(&self, s: &StateVec, a: &ActionVec, rng: &mut Rng) -> Result<StateVec, DynamicsError>;
}

/// Sum of discounted rewards along one trajectory: `Σ γ^t r_t`.
pub fn discounted_return(rewards: &[f64], gamma: f64) -> f64 {
    let mut acc = 0.0;
    let mut w = 1.0;
    for &r in rewards {
        acc += w * r;
        w *= gamma;
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn discounted_return_examples() {
        assert_eq!(discounted_return(&[1.0, 1.0, 1.0], 0.0), 1.0);
        assert_eq!(discounted_return(&[], 0.95), 0.0);
        assert_eq!(discounted_return(&[2.0, 3.0, 5.0], 0.5), 4.75);
    }

    #[test]
    fn state_rejects_non_finite() {
        let id = SchemaId::from_name("test");
        assert!(StateVec::new(vec![0.0, f64::NAN], id).is_err());
        assert!(StateVec::new(vec![0.0, f64::INFINITY], id).is_err());
        assert!(StateVec::new(vec![0.0, 1.0], id).is_ok());
    }

    #[test]
    fn action_bounds_enforced() {
        let bounds = vec![(-5.0, 5.0), (-5.0, 5.0)];
        assert!(ActionVec::new(vec![0.0, 5.0], bounds.clone()).is_ok());
        let err = ActionVec::new(vec![0.0, 5.1], bounds.clone()).unwrap_err();
        assert!(matches!(err, CoreError::OutOfBoundsAction { index: 1, .. }));
        assert!(ActionVec::new(vec![0.0], bounds).is_err());
    }

    #[test]
    fn transition_requires_matching_schemas() {
        let a = SchemaId::from_name("a");
        let b = SchemaId::from_name("b");
        let s = StateVec::new(vec![0.0], a).unwrap();
        let sn = StateVec::new(vec![1.0], b).unwrap();
        let act = ActionVec::new(vec![0.0], vec![(-1.0, 1.0)]).unwrap();
        assert!(Transition::new(s.clone(), act.clone(), sn, 0, 0, 0.0, false).is_err());
        let sn2 = StateVec::new(vec![1.0], a).unwrap();
        assert!(Transition::new(s, act, sn2, 0, 0, 0.0, false).is_ok());
    }

    #[test]
    fn content_hash_ignores_metadata() {
        let id = SchemaId::from_name("test");
        let s = StateVec::new(vec![0.5], id).unwrap();
        let sn = StateVec::new(vec![0.25], id).unwrap();
        let a = ActionVec::new(vec![0.0], vec![(-1.0, 1.0)]).unwrap();
        let t1 = Transition::new(s.clone(), a.clone(), sn.clone(), 0, 0, 0.0, false).unwrap();
        let t2 = Transition::new(s, a, sn, 9, 7, 1.0, true).unwrap();
        assert_eq!(t1.content_hash(), t2.content_hash());
    }
}
