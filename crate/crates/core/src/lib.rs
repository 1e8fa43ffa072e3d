//! Comparing reinforcement-learning reward functions without policy
//! optimization.
//!
//! The crate provides two transformations that map rewards into a form
//! invariant to potential shaping — the EPIC canonicalization, which draws
//! states and actions independently from dataset marginals, and the
//! dynamics-aware transformation, which instead samples next states from a
//! transition model so that learned rewards are only queried near their
//! training distribution — plus the Pearson-distance pseudometrics built on
//! them. Supporting modules supply a 2D ball-navigation environment, a zoo
//! of hand-designed and learned reward models, small from-scratch neural
//! trainers, dataset collection and persistence, and a tabular MDP with
//! exact enumeration oracles used to verify every Monte Carlo estimator.

pub mod bouncing_balls;
pub mod datasets;
pub mod learners;
pub mod metrics;
pub mod oracle_mdp;
pub mod reward_zoo;
pub mod rng;
pub mod types;

pub use rng::Rng;
pub use types::{
    discounted_return, ActionVec, CoreError, DynamicsError, DynamicsModel, PotentialFunction,
    RewardError, RewardFunction, SchemaId, StateVec, Transition, Triple, DEFAULT_GAMMA,
};
