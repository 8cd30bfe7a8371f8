//! Multi-cycle translation chains and the constrained objective.

mod chain;
mod loss;

pub use chain::{chain_on, run_chain, TranslationChain};
pub use loss::{
    first_cycle_loss, first_cycle_loss_on, hinge_loss, hinge_loss_on, hinge_terms, lsgan_generator_on,
    mi_constraint_loss, mi_constraint_loss_scores, second_cycle_adversarial, second_cycle_adversarial_on, total_loss,
    ChainBounds, FirstCycleTerms, HingeTerm, LossReport,
};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// How the consecutive-pair MI constraints are written as hinges.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoundVariant {
    /// `max(U(later) − L(earlier) + m, 0)`: non-increasing MI via the bound sandwich.
    #[default]
    Standard,
    /// `max(L(later) − L(earlier) + m, 0)`.
    LowerLower,
    /// `max(L(earlier) − U(later) + m, 0)`: the reversed inequality.
    NonDecreasing,
    /// Standard and non-decreasing hinges together.
    NonChanging,
}

impl BoundVariant {
    pub const ALL: [BoundVariant; 4] = [
        BoundVariant::Standard,
        BoundVariant::LowerLower,
        BoundVariant::NonDecreasing,
        BoundVariant::NonChanging,
    ];

    pub fn name(self) -> &'static str {
        match self {
            BoundVariant::Standard => "standard",
            BoundVariant::LowerLower => "lower-lower",
            BoundVariant::NonDecreasing => "non-decreasing",
            BoundVariant::NonChanging => "non-changing",
        }
    }
}

impl std::str::FromStr for BoundVariant {
    type Err = crate::McmiError;

    fn from_str(s: &str) -> Result<Self> {
        BoundVariant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| invalid(format!("unknown bound variant {s:?}")))
    }
}

/// Weights of the first-cycle terms.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CycleWeights {
    /// Weight of the L1 reconstruction term.
    pub cycle: f64,
    /// Weight of the least-squares adversarial terms.
    pub adversarial: f64,
    /// Weight of the identity term; 0 disables it.
    pub identity: f64,
}

impl Default for CycleWeights {
    fn default() -> Self {
        Self {
            cycle: 10.0,
            adversarial: 1.0,
            identity: 0.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MCMIConfig {
    pub n_cycles: usize,
    /// Hinge margin in nats.
    pub margin: f64,
    /// Weight of the MI hinge loss.
    pub alpha: f64,
    /// Weight of the rewarded lower bound.
    pub beta: f64,
    pub variant: BoundVariant,
    pub weights: CycleWeights,
}

impl Default for MCMIConfig {
    fn default() -> Self {
        Self {
            n_cycles: 2,
            margin: 0.0,
            alpha: 0.5,
            beta: 1.0,
            variant: BoundVariant::Standard,
            weights: CycleWeights::default(),
        }
    }
}

impl MCMIConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_cycles == 0 {
            return Err(invalid("n_cycles must be at least 1"));
        }
        if self.mi_enabled() && self.n_cycles < 2 {
            return Err(invalid(
                "MI constraints act from the second cycle on; set n_cycles >= 2 or alpha = beta = 0",
            ));
        }
        for (name, v) in [("alpha", self.alpha), ("beta", self.beta)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(invalid(format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        let w = &self.weights;
        for (name, v) in [
            ("weights.cycle", w.cycle),
            ("weights.adversarial", w.adversarial),
            ("weights.identity", w.identity),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(invalid(format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        if !self.margin.is_finite() {
            return Err(invalid("margin must be finite"));
        }
        Ok(())
    }

    /// Whether either MI term reaches the generators.
    pub fn mi_enabled(&self) -> bool {
        self.alpha > 0.0 || self.beta > 0.0
    }
}
