//! Mutual-information bounds, the learnable critic, and an exact discrete oracle.

mod bounds;
mod critic;
mod discrete;

pub use bounds::{
    critic_score, infonce_bound, infonce_bound_with_grad, infonce_lower, infonce_upper, BoundKind, MIEstimate,
    ScoreMatrix,
};
pub use critic::{CriticConfig, CriticNetwork};
pub use discrete::{entropy, exact_mi_discrete, optimal_critic_scores, DiscreteJoint, LOG_PROB_FLOOR};
