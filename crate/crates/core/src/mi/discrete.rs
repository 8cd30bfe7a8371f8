use rand::Rng;

use crate::error::{invalid, Result};
use crate::mi::bounds::ScoreMatrix;

/// Floor applied to `log p(y|x)` so zero-probability pairs stay finite.
pub const LOG_PROB_FLOOR: f64 = -30.0;

/// Joint probability table `p(x, y)` over finite alphabets.
#[derive(Clone, Debug, PartialEq)]
pub struct DiscreteJoint {
    rows: usize,
    cols: usize,
    table: Vec<f64>,
}

impl DiscreteJoint {
    pub fn new(rows: usize, cols: usize, table: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 || table.len() != rows * cols {
            return Err(invalid(format!(
                "joint table must be {rows}x{cols} with nonzero sides, got {} entries",
                table.len()
            )));
        }
        if let Some(v) = table.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(invalid(format!("joint entries must be finite and >= 0, found {v}")));
        }
        let mass: f64 = table.iter().sum();
        if (mass - 1.0).abs() > 1e-12 {
            return Err(invalid(format!("joint mass must be 1, got {mass:.15}")));
        }
        Ok(Self { rows, cols, table })
    }

    pub fn from_rows(rows: &[&[f64]]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.len());
        if rows.iter().any(|r| r.len() != cols) {
            return Err(invalid("ragged joint table"));
        }
        Self::new(rows.len(), cols, rows.concat())
    }

    /// Joint from `p(x)` and row-stochastic `p(y|x)`.
    pub fn from_marginal_and_channel(px: &[f64], channel: &[Vec<f64>]) -> Result<Self> {
        if px.len() != channel.len() {
            return Err(invalid("channel needs one row per x symbol"));
        }
        let cols = channel.first().map_or(0, Vec::len);
        let mut table = Vec::with_capacity(px.len() * cols);
        for (p, row) in px.iter().zip(channel) {
            if row.len() != cols {
                return Err(invalid("ragged channel"));
            }
            table.extend(row.iter().map(|q| p * q));
        }
        Self::new(px.len(), cols, table)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn p(&self, x: usize, y: usize) -> f64 {
        self.table[x * self.cols + y]
    }

    pub fn marginal_x(&self) -> Vec<f64> {
        (0..self.rows)
            .map(|x| (0..self.cols).map(|y| self.p(x, y)).sum())
            .collect()
    }

    pub fn marginal_y(&self) -> Vec<f64> {
        (0..self.cols)
            .map(|y| (0..self.rows).map(|x| self.p(x, y)).sum())
            .collect()
    }

    /// `p(y | x)` for one `x`; `None` when `p(x) = 0`.
    pub fn conditional(&self, x: usize) -> Option<Vec<f64>> {
        let px: f64 = (0..self.cols).map(|y| self.p(x, y)).sum();
        (px > 0.0).then(|| (0..self.cols).map(|y| self.p(x, y) / px).collect())
    }

    /// `k` i.i.d. draws of `(x, y)` by inverse-CDF over the flattened table.
    pub fn sample_pairs<R: Rng + ?Sized>(&self, k: usize, rng: &mut R) -> (Vec<usize>, Vec<usize>) {
        let mut xs = Vec::with_capacity(k);
        let mut ys = Vec::with_capacity(k);
        for _ in 0..k {
            let u: f64 = rng.gen();
            let mut acc = 0.0;
            let mut pick = self.table.len() - 1;
            for (idx, &p) in self.table.iter().enumerate() {
                acc += p;
                if u < acc {
                    pick = idx;
                    break;
                }
            }
            // Rounding can leave u above the final cumulative sum; step back
            // onto a cell with positive mass.
            while self.table[pick] == 0.0 && pick > 0 {
                pick -= 1;
            }
            xs.push(pick / self.cols);
            ys.push(pick % self.cols);
        }
        (xs, ys)
    }
}

/// Shannon entropy in nats, `0·log 0 = 0`.
pub fn entropy(p: &[f64]) -> f64 {
    -p.iter().filter(|&&v| v > 0.0).map(|v| v * v.ln()).sum::<f64>()
}

/// `Σ p(x,y) log[p(x,y) / (p(x) p(y))]` in nats.
pub fn exact_mi_discrete(joint: &DiscreteJoint) -> f64 {
    let px = joint.marginal_x();
    let py = joint.marginal_y();
    let mut mi = 0.0;
    for (x, &pxv) in px.iter().enumerate() {
        for (y, &pyv) in py.iter().enumerate() {
            let pxy = joint.p(x, y);
            if pxy > 0.0 {
                mi += pxy * (pxy / (pxv * pyv)).ln();
            }
        }
    }
    mi.max(0.0)
}

/// Scores of the optimal critic, `(j, i) = log p(y_i | x_j)`, floored at
/// [`LOG_PROB_FLOOR`].
pub fn optimal_critic_scores(joint: &DiscreteJoint, xs: &[usize], ys: &[usize]) -> Result<ScoreMatrix> {
    if xs.len() != ys.len() {
        return Err(invalid("x and y sample counts differ"));
    }
    let conds = xs
        .iter()
        .map(|&x| {
            if x >= joint.rows() || y_out_of_range(ys, joint.cols()) {
                return Err(invalid("sample symbol outside the joint's alphabet"));
            }
            joint
                .conditional(x)
                .ok_or_else(|| invalid(format!("sampled x = {x} has zero marginal probability")))
        })
        .collect::<Result<Vec<_>>>()?;
    let k = xs.len();
    ScoreMatrix::from_fn(k, |j, i| {
        let p = conds[j][ys[i]];
        if p > 0.0 {
            p.ln().max(LOG_PROB_FLOOR)
        } else {
            LOG_PROB_FLOOR
        }
    })
}

fn y_out_of_range(ys: &[usize], cols: usize) -> bool {
    ys.iter().any(|&y| y >= cols)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mi::bounds::{infonce_lower, infonce_upper};
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn validates_tables() {
        assert!(DiscreteJoint::from_rows(&[&[0.5, 0.5], &[0.0, 0.1]]).is_err());
        assert!(DiscreteJoint::from_rows(&[&[1.2, -0.2]]).is_err());
        assert!(DiscreteJoint::from_rows(&[&[0.25, 0.25], &[0.25, 0.25]]).is_ok());
    }

    #[test]
    fn exact_mi_examples() {
        let indep = DiscreteJoint::from_rows(&[&[0.25, 0.25], &[0.25, 0.25]]).unwrap();
        assert_eq!(exact_mi_discrete(&indep), 0.0);
        let det = DiscreteJoint::from_rows(&[&[0.5, 0.0], &[0.0, 0.5]]).unwrap();
        assert_abs_diff_eq!(exact_mi_discrete(&det), 2f64.ln(), epsilon = 1e-15);
        // 0.8·ln(1.6) + 0.2·ln(0.4), summed directly
        let corr = DiscreteJoint::from_rows(&[&[0.4, 0.1], &[0.1, 0.4]]).unwrap();
        let direct = 2.0 * 0.4 * (0.4f64 / 0.25).ln() + 2.0 * 0.1 * (0.1f64 / 0.25).ln();
        assert_abs_diff_eq!(exact_mi_discrete(&corr), direct, epsilon = 1e-15);
        assert_abs_diff_eq!(exact_mi_discrete(&corr), 0.1927, epsilon = 5e-5);
    }

    #[test]
    fn optimal_scores_for_deterministic_joint() {
        let det = DiscreteJoint::from_rows(&[&[0.5, 0.0], &[0.0, 0.5]]).unwrap();
        let s = optimal_critic_scores(&det, &[0, 1], &[0, 1]).unwrap();
        assert_eq!(s.get(0, 0), 0.0);
        assert_eq!(s.get(1, 1), 0.0);
        assert_eq!(s.get(0, 1), LOG_PROB_FLOOR);
        assert_eq!(s.get(1, 0), LOG_PROB_FLOOR);
    }

    #[test]
    fn independent_joint_gives_zero_bounds() {
        let indep = DiscreteJoint::from_rows(&[&[0.25, 0.25], &[0.25, 0.25]]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (xs, ys) = indep.sample_pairs(16, &mut rng);
        let s = optimal_critic_scores(&indep, &xs, &ys).unwrap();
        assert_eq!(infonce_lower(&s).unwrap(), 0.0);
        assert_eq!(infonce_upper(&s).unwrap(), 0.0);
    }

    #[test]
    fn zero_marginal_sample_rejected() {
        let j = DiscreteJoint::from_rows(&[&[0.5, 0.5], &[0.0, 0.0]]).unwrap();
        assert!(optimal_critic_scores(&j, &[1, 0], &[0, 1]).is_err());
    }

    #[test]
    fn correlated_joint_is_sandwiched() {
        let corr = DiscreteJoint::from_rows(&[&[0.4, 0.1], &[0.1, 0.4]]).unwrap();
        let exact = exact_mi_discrete(&corr);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let (mut lo, mut up) = (0.0, 0.0);
        let batches = 10_000 / 64;
        for _ in 0..batches {
            let (xs, ys) = corr.sample_pairs(64, &mut rng);
            let s = optimal_critic_scores(&corr, &xs, &ys).unwrap();
            lo += infonce_lower(&s).unwrap();
            up += infonce_upper(&s).unwrap();
        }
        lo /= batches as f64;
        up /= batches as f64;
        assert!(lo <= exact + 0.02, "lower {lo} vs exact {exact}");
        assert!(up >= exact - 0.02, "upper {up} vs exact {exact}");
    }

    #[test]
    fn sampling_matches_table() {
        let j = DiscreteJoint::from_rows(&[&[0.1, 0.2], &[0.3, 0.4]]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (xs, ys) = j.sample_pairs(40_000, &mut rng);
        let frac = xs.iter().zip(&ys).filter(|(&x, &y)| x == 1 && y == 1).count() as f64 / 40_000.0;
        assert_abs_diff_eq!(frac, 0.4, epsilon = 0.01);
    }
}
