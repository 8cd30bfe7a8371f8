//! Exact-information checks of the estimators.

use anyhow::Result;
use mcmi_core::mi::{exact_mi_discrete, infonce_lower, infonce_upper, optimal_critic_scores};
use mcmi_core::synth::random_markov_chain_joint;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

pub const DPI_TOLERANCE: f64 = 1e-9;
pub const SANDWICH_TOLERANCE: f64 = 0.05;

#[derive(Clone, Debug)]
pub struct OracleOptions {
    pub seed: u64,
    /// Random Markov chains for the data-processing check.
    pub dpi_trials: usize,
    /// Random joints for the bound sandwich.
    pub sandwich_joints: usize,
    pub batch_size: usize,
    pub batches: usize,
}

impl OracleOptions {
    /// `trials` chains and one sandwich joint per ten chains.
    pub fn new(seed: u64, trials: usize) -> Self {
        Self {
            seed,
            dpi_trials: trials,
            sandwich_joints: trials.div_ceil(10),
            batch_size: 128,
            batches: 1000,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct SandwichRow {
    pub exact: f64,
    pub mean_lower: f64,
    pub mean_upper: f64,
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct OracleReport {
    pub dpi_trials: usize,
    pub dpi_violations: usize,
    /// Largest `I(X;Z) − I(X;Y)` seen (negative when every chain passes).
    pub dpi_max_violation: f64,
    pub sandwich: Vec<SandwichRow>,
    pub sandwich_violations: usize,
    /// Largest `mean_lower − exact`.
    pub max_lower_excess: f64,
    /// Largest `exact − mean_upper`.
    pub max_upper_deficit: f64,
}

impl OracleReport {
    pub fn passed(&self) -> bool {
        self.dpi_violations == 0 && self.sandwich_violations == 0
    }

    pub fn summary(&self) -> String {
        format!(
            "DPI: {} chains, {} violations (max I(X;Z)-I(X;Y) = {:.3e})\n\
             sandwich: {} joints, {} violations (max lower excess {:.4}, max upper deficit {:.4})",
            self.dpi_trials,
            self.dpi_violations,
            self.dpi_max_violation,
            self.sandwich.len(),
            self.sandwich_violations,
            self.max_lower_excess,
            self.max_upper_deficit
        )
    }
}

fn alphabets(rng: &mut ChaCha8Rng) -> [usize; 3] {
    [rng.gen_range(2..=8), rng.gen_range(2..=8), rng.gen_range(2..=8)]
}

pub fn cmd_oracle(opts: &OracleOptions) -> Result<OracleReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut report = OracleReport {
        dpi_max_violation: f64::NEG_INFINITY,
        max_lower_excess: f64::NEG_INFINITY,
        max_upper_deficit: f64::NEG_INFINITY,
        ..OracleReport::default()
    };
    for _ in 0..opts.dpi_trials {
        let (xy, xz) = random_markov_chain_joint(alphabets(&mut rng), rng.gen())?;
        let gap = exact_mi_discrete(&xz) - exact_mi_discrete(&xy);
        report.dpi_trials += 1;
        report.dpi_max_violation = report.dpi_max_violation.max(gap);
        if gap > DPI_TOLERANCE {
            report.dpi_violations += 1;
        }
    }
    for _ in 0..opts.sandwich_joints {
        let (joint, _) = random_markov_chain_joint(alphabets(&mut rng), rng.gen())?;
        let exact = exact_mi_discrete(&joint);
        let (mut lo, mut up) = (0.0, 0.0);
        for _ in 0..opts.batches {
            let (xs, ys) = joint.sample_pairs(opts.batch_size, &mut rng);
            let scores = optimal_critic_scores(&joint, &xs, &ys)?;
            lo += infonce_lower(&scores)?;
            up += infonce_upper(&scores)?;
        }
        let n = opts.batches.max(1) as f64;
        let row = SandwichRow {
            exact,
            mean_lower: lo / n,
            mean_upper: up / n,
        };
        report.max_lower_excess = report.max_lower_excess.max(row.mean_lower - exact);
        report.max_upper_deficit = report.max_upper_deficit.max(exact - row.mean_upper);
        if row.mean_lower > exact + SANDWICH_TOLERANCE || row.mean_upper < exact - SANDWICH_TOLERANCE {
            report.sandwich_violations += 1;
        }
        report.sandwich.push(row);
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_trials_pass_trivially() {
        let r = cmd_oracle(&OracleOptions::new(0, 0)).unwrap();
        assert!(r.passed());
        assert_eq!((r.dpi_trials, r.sandwich.len()), (0, 0));
    }

    #[test]
    fn small_run_passes() {
        let mut opts = OracleOptions::new(3, 20);
        opts.batches = 100;
        opts.batch_size = 64;
        let r = cmd_oracle(&opts).unwrap();
        assert!(r.passed(), "{}", r.summary());
        assert_eq!(r.sandwich.len(), 2);
    }
}
