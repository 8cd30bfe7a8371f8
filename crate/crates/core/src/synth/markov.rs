use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1};

use crate::error::{invalid, Result};
use crate::mi::DiscreteJoint;

/// Exact joints `(X, Y)` and `(X, Z)` of the chain `X → Y → Z`.
///
/// `px` is the law of X; `xy[x][y] = p(y | x)` and `yz[y][z] = p(z | y)`.
pub fn markov_chain_joints(px: &[f64], xy: &[Vec<f64>], yz: &[Vec<f64>]) -> Result<(DiscreteJoint, DiscreteJoint)> {
    if xy.len() != px.len() {
        return Err(invalid("X→Y map needs one row per X symbol"));
    }
    let ny = xy.first().map_or(0, Vec::len);
    if yz.len() != ny {
        return Err(invalid("Y→Z map needs one row per Y symbol"));
    }
    let nz = yz.first().map_or(0, Vec::len);
    let xz: Vec<Vec<f64>> = xy
        .iter()
        .map(|row| {
            (0..nz)
                .map(|z| row.iter().zip(yz).map(|(p, yrow)| p * yrow[z]).sum())
                .collect()
        })
        .collect();
    Ok((
        DiscreteJoint::from_marginal_and_channel(px, xy)?,
        DiscreteJoint::from_marginal_and_channel(px, &xz)?,
    ))
}

fn random_simplex<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<f64> {
    // Normalised exponentials are uniform on the simplex; cubing sharpens
    // them so some channels come out nearly deterministic.
    let raw: Vec<f64> = (0..n)
        .map(|_| {
            let e: f64 = Exp1.sample(rng);
            e.powi(3) + 1e-12
        })
        .collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / total).collect()
}

/// Random chain `X → Y → Z` with alphabet sizes `[|X|, |Y|, |Z|]` in `2..=8`.
pub fn random_markov_chain_joint(alphabets: [usize; 3], seed: u64) -> Result<(DiscreteJoint, DiscreteJoint)> {
    if alphabets.iter().any(|a| !(2..=8).contains(a)) {
        return Err(invalid(format!("alphabet sizes {alphabets:?} must lie in 2..=8")));
    }
    let [nx, ny, nz] = alphabets;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let px = random_simplex(nx, &mut rng);
    let xy: Vec<Vec<f64>> = (0..nx).map(|_| random_simplex(ny, &mut rng)).collect();
    let yz: Vec<Vec<f64>> = (0..ny).map(|_| random_simplex(nz, &mut rng)).collect();
    markov_chain_joints(&px, &xy, &yz)
}
