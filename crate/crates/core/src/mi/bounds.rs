use serde::{Deserialize, Serialize};

use crate::error::{invalid, McmiError, Result};

/// `K×K` critic scores, entry `(j, i) = f(x_j, y_i)`.
///
/// Row index walks the `x` samples, column index the `y` samples, so the
/// InfoNCE denominators are column reductions.
#[derive(Clone, Debug, PartialEq)]
pub struct ScoreMatrix {
    k: usize,
    scores: Vec<f64>,
}

impl ScoreMatrix {
    pub fn new(k: usize, scores: Vec<f64>) -> Result<Self> {
        if k == 0 {
            return Err(invalid("score matrix needs at least one sample"));
        }
        if scores.len() != k * k {
            return Err(invalid(format!(
                "score matrix of size {k} needs {} entries, got {}",
                k * k,
                scores.len()
            )));
        }
        Ok(Self { k, scores })
    }

    pub fn from_fn(k: usize, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        let scores = (0..k * k).map(|idx| f(idx / k, idx % k)).collect();
        Self::new(k, scores)
    }

    pub fn constant(k: usize, value: f64) -> Result<Self> {
        Self::new(k, vec![value; k * k])
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// `f(x_j, y_i)`.
    pub fn get(&self, j: usize, i: usize) -> f64 {
        self.scores[j * self.k + i]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.scores
    }

    /// True when every diagonal entry is the maximum of its column.
    pub fn diagonal_dominates(&self) -> bool {
        (0..self.k).all(|i| (0..self.k).all(|j| self.get(j, i) <= self.get(i, i)))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum BoundKind {
    /// InfoNCE: the positive score also sits in the denominator.
    Lower,
    /// Leave-one-out variant: only negatives in the denominator.
    Upper,
}

/// Lower/upper InfoNCE values in nats for one variable pair.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MIEstimate {
    pub lower: f64,
    pub upper: f64,
    pub k: usize,
}

pub fn infonce_lower(scores: &ScoreMatrix) -> Result<f64> {
    infonce_bound(scores, BoundKind::Lower, scores.k())
}

pub fn infonce_upper(scores: &ScoreMatrix) -> Result<f64> {
    infonce_bound(scores, BoundKind::Upper, scores.k())
}

/// Bound averaged over the first `live` columns only.
///
/// Columns `live..K` belong to anchor rows: their `x` samples still serve as
/// negatives in every denominator, but their own diagonal terms are not part
/// of the positive average.
pub fn infonce_bound(scores: &ScoreMatrix, kind: BoundKind, live: usize) -> Result<f64> {
    Ok(evaluate(scores, kind, live, false)?.0)
}

/// Bound value and its gradient with respect to every score entry.
pub fn infonce_bound_with_grad(scores: &ScoreMatrix, kind: BoundKind, live: usize) -> Result<(f64, Vec<f64>)> {
    evaluate(scores, kind, live, true)
}

fn evaluate(scores: &ScoreMatrix, kind: BoundKind, live: usize, want_grad: bool) -> Result<(f64, Vec<f64>)> {
    let k = scores.k;
    if live == 0 || live > k {
        return Err(invalid(format!("live rows {live} must lie in 1..={k}")));
    }
    if kind == BoundKind::Upper && k < 2 {
        return Err(invalid("upper bound needs at least one negative sample (K >= 2)"));
    }
    if let Some(bad) = scores.scores.iter().position(|v| !v.is_finite()) {
        return Err(McmiError::NonFinite(format!("score ({}, {})", bad / k, bad % k)));
    }
    let norm = match kind {
        BoundKind::Lower => k as f64,
        BoundKind::Upper => (k - 1) as f64,
    };
    let inv_live = 1.0 / live as f64;
    let mut grad = if want_grad { vec![0.0; k * k] } else { Vec::new() };
    let mut total = 0.0;
    for i in 0..live {
        let in_denominator = |j: usize| kind == BoundKind::Lower || j != i;
        let max = (0..k)
            .filter(|&j| in_denominator(j))
            .map(|j| scores.get(j, i))
            .fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = (0..k)
            .filter(|&j| in_denominator(j))
            .map(|j| (scores.get(j, i) - max).exp())
            .sum();
        // Written so a constant column evaluates to exactly zero.
        let log_mean = sum.ln() - norm.ln();
        total += (scores.get(i, i) - max) - log_mean;
        if want_grad {
            grad[i * k + i] += inv_live;
            for j in (0..k).filter(|&j| in_denominator(j)) {
                grad[j * k + i] -= inv_live * (scores.get(j, i) - max).exp() / sum;
            }
        }
    }
    Ok((total * inv_live, grad))
}

/// `|cos(ea, eb)|·s − m`; zero-norm embeddings have cosine 0.
pub fn critic_score(ea: &[f64], eb: &[f64], s: f64, m: f64) -> Result<f64> {
    if ea.is_empty() || ea.len() != eb.len() {
        return Err(invalid(format!(
            "embedding lengths {} and {} must match and be nonzero",
            ea.len(),
            eb.len()
        )));
    }
    let na = ea.iter().map(|v| v * v).sum::<f64>().sqrt();
    let nb = eb.iter().map(|v| v * v).sum::<f64>().sqrt();
    let cos = if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        ea.iter().zip(eb).map(|(a, b)| a * b).sum::<f64>() / (na * nb)
    };
    Ok(cos.abs().min(1.0) * s - m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn two_by_two() -> ScoreMatrix {
        ScoreMatrix::new(2, vec![0.0, -2.0, -2.0, 0.0]).unwrap()
    }

    #[test]
    fn constant_critic_gives_exact_zero() {
        for k in [2, 3, 7, 64] {
            let s = ScoreMatrix::constant(k, -0.73).unwrap();
            assert_eq!(infonce_lower(&s).unwrap(), 0.0);
            assert_eq!(infonce_upper(&s).unwrap(), 0.0);
        }
        assert_eq!(infonce_lower(&ScoreMatrix::constant(1, 3.0).unwrap()).unwrap(), 0.0);
    }

    #[test]
    fn hand_evaluated_two_by_two() {
        // log(1 / (0.5 (1 + e^-2)))
        let lower = infonce_lower(&two_by_two()).unwrap();
        assert_abs_diff_eq!(lower, (2.0 / (1.0 + (-2.0f64).exp())).ln(), epsilon = 1e-15);
        assert_abs_diff_eq!(lower, 0.566219, epsilon = 1e-6);
        let upper = infonce_upper(&two_by_two()).unwrap();
        assert_abs_diff_eq!(upper, 2.0, epsilon = 1e-15);
        assert!(upper >= lower);
    }

    #[test]
    fn upper_needs_two_samples() {
        let s = ScoreMatrix::constant(1, 0.0).unwrap();
        assert!(infonce_upper(&s).is_err());
    }

    #[test]
    fn non_finite_scores_rejected() {
        let s = ScoreMatrix::new(2, vec![0.0, f64::NAN, 0.0, 0.0]).unwrap();
        assert!(matches!(infonce_lower(&s), Err(McmiError::NonFinite(_))));
    }

    #[test]
    fn masked_columns_only_change_denominators() {
        // 3x3 with one live row: the bound is the single live column term.
        let s = ScoreMatrix::new(3, vec![0.0, -1.0, -0.5, -2.0, -0.1, -1.5, -1.0, -0.3, 0.0]).unwrap();
        let by_hand = 0.0 - ((0.0f64.exp() + (-2.0f64).exp() + (-1.0f64).exp()) / 3.0).ln();
        assert_abs_diff_eq!(
            infonce_bound(&s, BoundKind::Lower, 1).unwrap(),
            by_hand,
            epsilon = 1e-14
        );
        // anchor diagonals (1,1) and (2,2) do not matter once masked
        let mut moved = s.as_slice().to_vec();
        moved[4] = -3.0;
        moved[8] = -3.0;
        let moved = ScoreMatrix::new(3, moved).unwrap();
        assert_eq!(
            infonce_bound(&s, BoundKind::Lower, 1).unwrap(),
            infonce_bound(&moved, BoundKind::Lower, 1).unwrap()
        );
        // but anchor x rows do enter the live denominator
        let mut neg = s.as_slice().to_vec();
        neg[3] = 0.0;
        let neg = ScoreMatrix::new(3, neg).unwrap();
        assert!(infonce_bound(&neg, BoundKind::Lower, 1).unwrap() < by_hand);
    }

    #[test]
    fn critic_score_examples() {
        let a = [1.0, 2.0, -0.5];
        assert_eq!(critic_score(&a, &a, 2.0, 2.0).unwrap(), 0.0);
        let neg: Vec<f64> = a.iter().map(|v| -v).collect();
        assert_eq!(critic_score(&a, &neg, 2.0, 2.0).unwrap(), 0.0);
        assert_eq!(critic_score(&[1.0, 0.0], &[0.0, 3.0], 2.0, 2.0).unwrap(), -2.0);
        assert_eq!(critic_score(&[0.0, 0.0], &[0.0, 3.0], 2.0, 2.0).unwrap(), -2.0);
        assert!(critic_score(&[1.0], &[1.0, 2.0], 2.0, 2.0).is_err());
    }

    proptest! {
        #[test]
        fn critic_score_in_range(
            a in prop::collection::vec(-10.0f64..10.0, 4),
            b in prop::collection::vec(-10.0f64..10.0, 4),
            s in 0.1f64..4.0,
            m in 0.1f64..4.0,
        ) {
            let v = critic_score(&a, &b, s, m).unwrap();
            prop_assert!(v >= -m - 1e-12 && v <= s - m + 1e-12);
        }

        #[test]
        fn lower_never_exceeds_log_k(k in 2usize..12, seed in any::<u64>()) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let s = ScoreMatrix::from_fn(k, |_, _| rng.gen_range(-20.0..20.0)).unwrap();
            prop_assert!(infonce_lower(&s).unwrap() <= (k as f64).ln() + 1e-9);
        }

        #[test]
        fn diagonal_dominance_orders_bounds(k in 2usize..10, seed in any::<u64>()) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let mut s: Vec<f64> = (0..k * k).map(|_| rng.gen_range(-5.0..0.0)).collect();
            for i in 0..k {
                let col_max = (0..k).map(|j| s[j * k + i]).fold(f64::NEG_INFINITY, f64::max);
                s[i * k + i] = col_max + rng.gen_range(0.0..1.0);
            }
            let s = ScoreMatrix::new(k, s).unwrap();
            prop_assert!(s.diagonal_dominates());
            prop_assert!(infonce_upper(&s).unwrap() >= infonce_lower(&s).unwrap());
        }
    }
}
