use mcmi_tensor::{Element, Graph, Tensor, Var};
use serde::{Deserialize, Serialize};

use crate::backbone::{discriminate, translate, BackboneModule};
use crate::engine::chain::domain_of;
use crate::engine::{BoundVariant, CycleWeights, MCMIConfig, TranslationChain};
use crate::error::{invalid, McmiError, Result};
use crate::image::{Direction, Domain};
use crate::mi::{infonce_bound, infonce_bound_with_grad, BoundKind, CriticNetwork, ScoreMatrix};

/// Decomposition of the per-direction objective.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub l_orig: f64,
    pub l_adv: f64,
    pub l_mi: f64,
    pub i_lower: f64,
    pub total: f64,
}

/// `l_orig + l_adv + α·l_mi − β·i_lower`, rejecting non-finite parts.
pub fn total_loss(l_orig: f64, l_adv: f64, l_mi: f64, i_lower: f64, config: &MCMIConfig) -> Result<LossReport> {
    for (name, v) in [
        ("l_orig", l_orig),
        ("l_adv", l_adv),
        ("l_mi", l_mi),
        ("i_lower", i_lower),
    ] {
        if !v.is_finite() {
            return Err(McmiError::NonFinite(format!("{name} = {v}")));
        }
    }
    Ok(LossReport {
        l_orig,
        l_adv,
        l_mi,
        i_lower,
        total: l_orig + l_adv + config.alpha * l_mi - config.beta * i_lower,
    })
}

/// Lower/upper bounds for the pairs `(s0, s_k)`, `k = 1..=2N`.
#[derive(Clone, Debug, PartialEq)]
pub struct ChainBounds {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl ChainBounds {
    /// `lower[k - 1]` and `upper[k - 1]` bound `I(s0; s_k)`.
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() || lower.len() < 2 || !lower.len().is_multiple_of(2) {
            return Err(invalid(format!(
                "chain bounds need 2N entries per side, got {} and {}",
                lower.len(),
                upper.len()
            )));
        }
        Ok(Self { lower, upper })
    }

    /// Masked bounds from one score matrix per pair.
    pub fn from_scores(scores: &[ScoreMatrix], live: usize) -> Result<Self> {
        let lower = scores
            .iter()
            .map(|s| infonce_bound(s, BoundKind::Lower, live))
            .collect::<Result<_>>()?;
        let upper = scores
            .iter()
            .map(|s| infonce_bound(s, BoundKind::Upper, live))
            .collect::<Result<_>>()?;
        Self::new(lower, upper)
    }

    pub fn n_cycles(&self) -> usize {
        self.lower.len() / 2
    }

    /// Bound on `I(s0; s_k)`.
    pub fn get(&self, kind: BoundKind, k: usize) -> f64 {
        match kind {
            BoundKind::Lower => self.lower[k - 1],
            BoundKind::Upper => self.upper[k - 1],
        }
    }
}

/// One hinge `max(plus − minus + margin, 0)` over chain-pair bounds.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct HingeTerm {
    pub plus: (BoundKind, usize),
    pub minus: (BoundKind, usize),
}

/// Hinges for consecutive pairs from the second cycle on.
///
/// For `N = 2` the standard variant gives exactly
/// `[U(s0;s3) − L(s0;s2), U(s0;s4) − L(s0;s3)]`.
pub fn hinge_terms(n_cycles: usize, variant: BoundVariant) -> Vec<HingeTerm> {
    use BoundKind::{Lower, Upper};
    let mut terms = Vec::new();
    for e in 2..2 * n_cycles {
        let l = e + 1;
        let standard = HingeTerm {
            plus: (Upper, l),
            minus: (Lower, e),
        };
        let reversed = HingeTerm {
            plus: (Lower, e),
            minus: (Upper, l),
        };
        match variant {
            BoundVariant::Standard => terms.push(standard),
            BoundVariant::LowerLower => terms.push(HingeTerm {
                plus: (Lower, l),
                minus: (Lower, e),
            }),
            BoundVariant::NonDecreasing => terms.push(reversed),
            BoundVariant::NonChanging => terms.extend([standard, reversed]),
        }
    }
    terms
}

fn require_two_cycles(n_cycles: usize) -> Result<()> {
    if n_cycles < 2 {
        return Err(invalid(format!(
            "MI constraints need at least two cycles (5 chain states), got {n_cycles}"
        )));
    }
    Ok(())
}

/// MI hinge loss from precomputed bounds.
pub fn hinge_loss(bounds: &ChainBounds, margin: f64, variant: BoundVariant) -> Result<f64> {
    require_two_cycles(bounds.n_cycles())?;
    Ok(hinge_terms(bounds.n_cycles(), variant)
        .iter()
        .map(|t| (bounds.get(t.plus.0, t.plus.1) - bounds.get(t.minus.0, t.minus.1) + margin).max(0.0))
        .sum())
}

/// MI hinge loss from one score matrix per pair `(s0, s_k)`, with its
/// gradient with respect to every score entry of every matrix.
pub fn mi_constraint_loss_scores(
    scores: &[ScoreMatrix],
    live: usize,
    margin: f64,
    variant: BoundVariant,
) -> Result<(f64, Vec<Vec<f64>>)> {
    let mut lower = Vec::with_capacity(scores.len());
    let mut upper = Vec::with_capacity(scores.len());
    for s in scores {
        lower.push(infonce_bound_with_grad(s, BoundKind::Lower, live)?);
        upper.push(infonce_bound_with_grad(s, BoundKind::Upper, live)?);
    }
    let bounds = ChainBounds::new(lower.iter().map(|b| b.0).collect(), upper.iter().map(|b| b.0).collect())?;
    require_two_cycles(bounds.n_cycles())?;
    let mut grads: Vec<Vec<f64>> = scores.iter().map(|s| vec![0.0; s.k() * s.k()]).collect();
    let mut total = 0.0;
    let pick = |(kind, k): (BoundKind, usize)| match kind {
        BoundKind::Lower => &lower[k - 1],
        BoundKind::Upper => &upper[k - 1],
    };
    for t in hinge_terms(bounds.n_cycles(), variant) {
        let arg = pick(t.plus).0 - pick(t.minus).0 + margin;
        if arg > 0.0 {
            total += arg;
            for (sign, side) in [(1.0, t.plus), (-1.0, t.minus)] {
                for (dst, src) in grads[side.1 - 1].iter_mut().zip(&pick(side).1) {
                    *dst += sign * src;
                }
            }
        }
    }
    Ok((total, grads))
}

/// MI hinge loss over bound variables on a graph; `lower[k - 1]` and
/// `upper[k - 1]` are scalar bounds on `I(s0; s_k)`.
pub fn hinge_loss_on<T: Element>(
    g: &Graph<T>,
    lower: &[Var],
    upper: &[Var],
    margin: f64,
    variant: BoundVariant,
) -> Result<Var> {
    if lower.len() != upper.len() || !lower.len().is_multiple_of(2) {
        return Err(invalid("bound variables must come in 2N pairs"));
    }
    let n = lower.len() / 2;
    require_two_cycles(n)?;
    let pick = |(kind, k): (BoundKind, usize)| match kind {
        BoundKind::Lower => lower[k - 1],
        BoundKind::Upper => upper[k - 1],
    };
    let mut acc: Option<Var> = None;
    for t in hinge_terms(n, variant) {
        let d = g.sub(pick(t.plus), pick(t.minus))?;
        let h = g.relu(g.add_scalar(d, T::from_f64(margin)));
        acc = Some(match acc {
            Some(a) => g.add(a, h)?,
            None => h,
        });
    }
    Ok(acc.unwrap_or_else(|| g.constant(Tensor::scalar(T::zero()))))
}

/// MI hinge loss of a chain under `critic`, using the full batch as samples.
pub fn mi_constraint_loss(
    chain: &TranslationChain,
    critic: &CriticNetwork,
    margin: f64,
    variant: BoundVariant,
) -> Result<f64> {
    require_two_cycles(chain.n_cycles())?;
    let s0 = chain.state(0);
    let scores = (1..chain.len())
        .map(|k| critic.score_matrix(s0, chain.state(k)))
        .collect::<Result<Vec<_>>>()?;
    let bounds = ChainBounds::from_scores(&scores, s0.len())?;
    hinge_loss(&bounds, margin, variant)
}

/// Raw (unweighted) first-cycle terms.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FirstCycleTerms {
    /// Mean absolute difference between `s2` and `s0`.
    pub cycle: f64,
    /// Mean of the least-squares generator losses on `s1` and `s2`.
    pub adversarial: f64,
    /// Mean absolute change of `s0` under the generator into its own domain.
    pub identity: f64,
}

impl FirstCycleTerms {
    pub fn weighted(&self, w: &CycleWeights) -> f64 {
        w.cycle * self.cycle + w.adversarial * self.adversarial + w.identity * self.identity
    }
}

fn lsgan_generator(d: &Tensor<f32>) -> f64 {
    let n = d.numel() as f64;
    d.data().iter().map(|&v| (v as f64 - 1.0).powi(2)).sum::<f64>() / n
}

fn mean_abs_diff(a: &Tensor<f32>, b: &Tensor<f32>) -> f64 {
    let n = a.numel() as f64;
    a.data()
        .iter()
        .zip(b.data())
        .map(|(&x, &y)| (x as f64 - y as f64).abs())
        .sum::<f64>()
        / n
}

/// Cycle-consistency, adversarial, and optional identity terms of the first cycle.
pub fn first_cycle_loss<M: BackboneModule<f32> + ?Sized>(
    chain: &TranslationChain,
    module: &M,
    weights: &CycleWeights,
) -> Result<FirstCycleTerms> {
    let s0 = chain.state(0);
    let cycle = mean_abs_diff(chain.state(2).tensor(), s0.tensor());
    let adversarial = 0.5
        * (lsgan_generator(&discriminate(module, chain.state(1), chain.domain(1))?)
            + lsgan_generator(&discriminate(module, chain.state(2), chain.domain(2))?));
    let identity = if weights.identity > 0.0 {
        let into_start = Direction::from_domain(chain.start().other());
        let same = translate(module, s0, into_start, None)?;
        mean_abs_diff(same.tensor(), s0.tensor())
    } else {
        0.0
    };
    Ok(FirstCycleTerms {
        cycle,
        adversarial,
        identity,
    })
}

/// Least-squares generator loss of states `s3..=s_{2N}`, averaged.
pub fn second_cycle_adversarial<M: BackboneModule<f32> + ?Sized>(chain: &TranslationChain, module: &M) -> Result<f64> {
    require_two_cycles(chain.n_cycles())?;
    let mut total = 0.0;
    for k in 3..chain.len() {
        total += lsgan_generator(&discriminate(module, chain.state(k), chain.domain(k))?);
    }
    Ok(total / (chain.len() - 3) as f64)
}

/// `mean((d − 1)²)`: the generator wants every patch scored real.
pub fn lsgan_generator_on<T: Element>(g: &Graph<T>, d: Var) -> Var {
    let shifted = g.add_scalar(d, -T::one());
    g.mean(g.square(shifted))
}

/// Weighted first-cycle loss on graph states `[s0, s1, s2, …]`.
#[allow(clippy::too_many_arguments)]
pub fn first_cycle_loss_on<T: Element, M: BackboneModule<T> + ?Sized>(
    module: &M,
    g: &Graph<T>,
    gen: &[Var],
    disc: &[Var],
    states: &[Var],
    start: Domain,
    weights: &CycleWeights,
) -> Result<Var> {
    if states.len() < 3 {
        return Err(invalid("first-cycle loss needs at least 3 chain states"));
    }
    let cyc = g.mean(g.abs(g.sub(states[2], states[0])?));
    let mut loss = g.scale(cyc, T::from_f64(weights.cycle));
    if weights.adversarial > 0.0 {
        let a1 = lsgan_generator_on(g, module.discriminate_on(g, disc, states[1], domain_of(start, 1))?);
        let a2 = lsgan_generator_on(g, module.discriminate_on(g, disc, states[2], domain_of(start, 2))?);
        let adv = g.scale(g.add(a1, a2)?, T::from_f64(0.5 * weights.adversarial));
        loss = g.add(loss, adv)?;
    }
    if weights.identity > 0.0 {
        let into_start = Direction::from_domain(start.other());
        let same = module.translate_on(g, gen, states[0], into_start, None)?;
        let id = g.mean(g.abs(g.sub(same, states[0])?));
        loss = g.add(loss, g.scale(id, T::from_f64(weights.identity)))?;
    }
    Ok(loss)
}

/// Least-squares generator loss on second-cycle states `s3..`, averaged.
pub fn second_cycle_adversarial_on<T: Element, M: BackboneModule<T> + ?Sized>(
    module: &M,
    g: &Graph<T>,
    disc: &[Var],
    states: &[Var],
    start: Domain,
) -> Result<Var> {
    if states.len() < 5 {
        return Err(invalid("second-cycle adversarial loss needs at least 5 chain states"));
    }
    let mut acc: Option<Var> = None;
    for (k, &s) in states.iter().enumerate().skip(3) {
        let l = lsgan_generator_on(g, module.discriminate_on(g, disc, s, domain_of(start, k))?);
        acc = Some(match acc {
            Some(a) => g.add(a, l)?,
            None => l,
        });
    }
    let sum = acc.expect("at least two second-cycle states");
    Ok(g.scale(sum, T::from_f64(1.0 / (states.len() - 3) as f64)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backbone::IdentityBackbone;
    use crate::engine::run_chain;
    use crate::image::{Geometry, ImageBatch};
    use proptest::prelude::*;

    fn bounds(l2: f64, u3: f64, l3: f64, u4: f64) -> ChainBounds {
        ChainBounds::new(vec![0.0, l2, l3, 0.0], vec![0.0, 0.0, u3, u4]).unwrap()
    }

    #[test]
    fn two_cycle_hinge_examples() {
        let s = BoundVariant::Standard;
        assert_eq!(hinge_loss(&bounds(1.0, 0.5, 0.4, 0.3), 0.0, s).unwrap(), 0.0);
        assert_eq!(hinge_loss(&bounds(1.0, 1.5, 0.4, 0.3), 0.0, s).unwrap(), 0.5);
        assert_eq!(hinge_loss(&bounds(1.0, 1.3, 0.4, 0.3), -0.4, s).unwrap(), 0.0);
    }

    #[test]
    fn reversed_variant_flips_the_sign() {
        // max(L2 − U3, 0) + max(L3 − U4, 0) = 0.5 + 0.1
        let v = hinge_loss(&bounds(1.0, 0.5, 0.4, 0.3), 0.0, BoundVariant::NonDecreasing).unwrap();
        assert!((v - 0.6).abs() < 1e-12);
        let both = hinge_loss(&bounds(1.0, 1.5, 0.4, 0.3), 0.0, BoundVariant::NonChanging).unwrap();
        // standard: 0.5 + 0; reversed: 0 + 0.1
        assert!((both - 0.6).abs() < 1e-12);
    }

    #[test]
    fn hinge_terms_per_cycle_count() {
        for n in 2..=4 {
            assert_eq!(hinge_terms(n, BoundVariant::Standard).len(), 2 * n - 2);
            assert_eq!(hinge_terms(n, BoundVariant::NonChanging).len(), 4 * n - 4);
        }
        assert!(hinge_terms(1, BoundVariant::Standard).is_empty());
    }

    #[test]
    fn single_cycle_rejected() {
        let b = ChainBounds::new(vec![0.1, 0.2], vec![0.3, 0.4]).unwrap();
        assert!(hinge_loss(&b, 0.0, BoundVariant::Standard).is_err());
    }

    #[test]
    fn total_loss_composition() {
        let cfg = MCMIConfig::default();
        let r = total_loss(1.0, 0.5, 0.2, 0.3, &cfg).unwrap();
        assert!((r.total - 1.3).abs() < 1e-12);
        assert_eq!(total_loss(0.0, 0.0, 0.0, 0.0, &cfg).unwrap().total, 0.0);
        let zero_alpha = MCMIConfig { alpha: 0.0, ..cfg };
        let a = total_loss(1.0, 0.5, 0.2, 0.3, &zero_alpha).unwrap().total;
        let b = total_loss(1.0, 0.5, 9.0, 0.3, &zero_alpha).unwrap().total;
        assert_eq!(a, b);
    }

    #[test]
    fn total_loss_names_the_bad_component() {
        let err = total_loss(1.0, f64::NAN, 0.0, 0.0, &MCMIConfig::default()).unwrap_err();
        assert!(err.to_string().contains("l_adv"));
    }

    fn flat(v: f32) -> ImageBatch {
        ImageBatch::signed(Tensor::full(&[2, 3, 32, 32], v)).unwrap()
    }

    #[test]
    fn first_cycle_examples() {
        let real = IdentityBackbone::<f32>::new(Geometry::default(), 1.0);
        let chain = run_chain(&real, &flat(0.3), Domain::X, &MCMIConfig::default()).unwrap();
        let w = CycleWeights {
            identity: 1.0,
            ..CycleWeights::default()
        };
        let t = first_cycle_loss(&chain, &real, &w).unwrap();
        assert_eq!((t.cycle, t.adversarial, t.identity), (0.0, 0.0, 0.0));

        let chain = TranslationChain::new(vec![flat(-1.0), flat(0.0), flat(1.0)], Domain::X).unwrap();
        let t = first_cycle_loss(&chain, &real, &CycleWeights::default()).unwrap();
        assert_eq!(t.cycle, 2.0);
    }

    #[test]
    fn second_cycle_targets() {
        let cfg = MCMIConfig::default();
        for (value, expected) in [(1.0, 0.0), (0.0, 1.0)] {
            let m = IdentityBackbone::<f32>::new(Geometry::default(), value);
            let chain = run_chain(&m, &flat(0.1), Domain::Y, &cfg).unwrap();
            assert_eq!(second_cycle_adversarial(&chain, &m).unwrap(), expected);
        }
        let m = IdentityBackbone::<f32>::new(Geometry::default(), 1.0);
        let short = run_chain(&m, &flat(0.1), Domain::Y, &MCMIConfig { n_cycles: 1, ..cfg }).unwrap();
        assert!(second_cycle_adversarial(&short, &m).is_err());
    }

    proptest! {
        #[test]
        fn hinge_is_nonnegative_and_monotone_in_margin(
            l in proptest::collection::vec(-3.0f64..3.0, 4),
            u in proptest::collection::vec(-3.0f64..3.0, 4),
            m1 in -1.0f64..1.0,
            dm in 0.0f64..1.0,
        ) {
            let b = ChainBounds::new(l, u).unwrap();
            for v in BoundVariant::ALL {
                let a = hinge_loss(&b, m1, v).unwrap();
                let c = hinge_loss(&b, m1 + dm, v).unwrap();
                prop_assert!(a >= 0.0);
                prop_assert!(c >= a);
            }
        }

        #[test]
        fn zero_iff_inequalities_hold(
            l in proptest::collection::vec(-3.0f64..3.0, 4),
            u in proptest::collection::vec(-3.0f64..3.0, 4),
        ) {
            let b = ChainBounds::new(l.clone(), u.clone()).unwrap();
            let holds = l[1] >= u[2] && l[2] >= u[3];
            let loss = hinge_loss(&b, 0.0, BoundVariant::Standard).unwrap();
            prop_assert_eq!(loss == 0.0, holds);
        }
    }
}
