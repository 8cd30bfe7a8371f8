//! Evaluation metrics over `[0, 1]`-renormalised images and embeddings.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::engine::TranslationChain;
use crate::error::{invalid, Result};
use crate::image::{Geometry, ImageBatch};
use crate::mi::{CriticConfig, CriticNetwork};

fn check_pair(a: &ImageBatch, b: &ImageBatch) -> Result<()> {
    if a.geometry() != b.geometry() || a.len() != b.len() {
        return Err(crate::McmiError::Geometry {
            expected: format!("{} x {}", a.len(), a.geometry()),
            got: format!("{} x {}", b.len(), b.geometry()),
        });
    }
    Ok(())
}

/// Per-image mean squared error in `[0, 1]` range.
pub fn per_item_mse(a: &ImageBatch, b: &ImageBatch) -> Result<Vec<f64>> {
    check_pair(a, b)?;
    let (ua, ub) = (a.to_unit(), b.to_unit());
    let item = a.geometry().pixels();
    Ok(ua
        .tensor()
        .data()
        .chunks(item)
        .zip(ub.tensor().data().chunks(item))
        .map(|(x, y)| {
            x.iter()
                .zip(y)
                .map(|(&p, &q)| (p as f64 - q as f64).powi(2))
                .sum::<f64>()
                / item as f64
        })
        .collect())
}

/// Mean squared error over every pixel, channel and image in `[0, 1]` range.
pub fn pixel_mse(a: &ImageBatch, b: &ImageBatch) -> Result<f64> {
    let per = per_item_mse(a, b)?;
    Ok(per.iter().sum::<f64>() / per.len() as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MarkovnessReport {
    pub cycle: usize,
    /// Error of the translated image against the ground-truth partner.
    pub eps_y: f64,
    /// Error of the reconstruction against the source.
    pub eps_x: f64,
    /// `eps_y / eps_x`; infinite when `eps_x = 0`.
    pub eps_mark: f64,
    /// Ratio of per-image errors; infinite entries where reconstruction is exact.
    pub per_item: Vec<f64>,
}

impl MarkovnessReport {
    pub fn is_infinite(&self) -> bool {
        self.eps_mark.is_infinite()
    }
}

/// `eps_y / eps_x`, with `+∞` for exact reconstruction.
pub fn markovness_ratio(eps_y: f64, eps_x: f64) -> f64 {
    if eps_x > 0.0 {
        eps_y / eps_x
    } else {
        f64::INFINITY
    }
}

/// Markovness error of cycle `cycle` (1-based): the ratio of set-mean errors.
pub fn markovness(
    chain: &TranslationChain,
    gt_target: &ImageBatch,
    source: &ImageBatch,
    cycle: usize,
) -> Result<MarkovnessReport> {
    if cycle == 0 || cycle > chain.n_cycles() {
        return Err(invalid(format!("cycle {cycle} outside 1..={}", chain.n_cycles())));
    }
    let ey = per_item_mse(chain.translated(cycle), gt_target)?;
    let ex = per_item_mse(chain.reconstructed(cycle), source)?;
    let n = ey.len() as f64;
    let (eps_y, eps_x) = (ey.iter().sum::<f64>() / n, ex.iter().sum::<f64>() / n);
    Ok(MarkovnessReport {
        cycle,
        eps_y,
        eps_x,
        eps_mark: markovness_ratio(eps_y, eps_x),
        per_item: ey.iter().zip(&ex).map(|(&y, &x)| markovness_ratio(y, x)).collect(),
    })
}

/// Maps images to feature vectors for distribution-level metrics.
pub trait Embedder {
    /// Short identifier written next to every metric value.
    fn id(&self) -> &str;
    fn embed(&self, batch: &ImageBatch) -> Result<Vec<Vec<f64>>>;
}

/// Flattened `[0, 1]` pixels.
#[derive(Clone, Copy, Debug, Default)]
pub struct PixelEmbedder;

impl Embedder for PixelEmbedder {
    fn id(&self) -> &str {
        "pixels"
    }

    fn embed(&self, batch: &ImageBatch) -> Result<Vec<Vec<f64>>> {
        let unit = batch.to_unit();
        let item = batch.geometry().pixels();
        Ok(unit
            .tensor()
            .data()
            .chunks(item)
            .map(|c| c.iter().map(|&v| v as f64).collect())
            .collect())
    }
}

/// Features of a convolutional encoder with fixed, seeded random weights.
///
/// A stand-in for pretrained perceptual features; values are comparable only
/// between runs using the same seed and geometry.
#[derive(Clone, Debug)]
pub struct RandomConvEmbedder {
    id: String,
    net: CriticNetwork,
}

impl RandomConvEmbedder {
    pub fn new(geometry: Geometry, seed: u64) -> Result<Self> {
        let config = CriticConfig {
            geometry,
            widths: [16, 32, 32, 64],
            ..CriticConfig::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Ok(Self {
            id: format!("random-conv-{seed}"),
            net: CriticNetwork::new(config, &mut rng)?,
        })
    }
}

impl Embedder for RandomConvEmbedder {
    fn id(&self) -> &str {
        &self.id
    }

    fn embed(&self, batch: &ImageBatch) -> Result<Vec<Vec<f64>>> {
        self.net.encode(batch)
    }
}

fn l2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

/// Mean over inputs of the mean pairwise embedding distance between the
/// translations `samples[s][i]` of input `i`.
pub fn pairwise_diversity(samples: &[ImageBatch], embedder: &dyn Embedder) -> Result<f64> {
    if samples.len() < 2 {
        return Err(invalid("pairwise diversity needs at least two sample sets"));
    }
    for s in &samples[1..] {
        check_pair(&samples[0], s)?;
    }
    let emb = samples.iter().map(|s| embedder.embed(s)).collect::<Result<Vec<_>>>()?;
    let n = samples[0].len();
    let pairs = samples.len() * (samples.len() - 1) / 2;
    let mut total = 0.0;
    for i in 0..n {
        let mut acc = 0.0;
        for a in 0..emb.len() {
            for b in a + 1..emb.len() {
                acc += l2(&emb[a][i], &emb[b][i]);
            }
        }
        total += acc / pairs as f64;
    }
    Ok(total / n as f64)
}

/// Ridge added to singular covariances.
pub const FRECHET_EPS: f64 = 1e-6;

fn moments(feats: &[Vec<f64>]) -> Result<(DVector<f64>, DMatrix<f64>)> {
    if feats.len() < 2 {
        return Err(invalid("Fréchet distance needs at least two samples per side"));
    }
    let d = feats[0].len();
    if d == 0 || feats.iter().any(|f| f.len() != d) {
        return Err(invalid("embeddings must be non-empty and of equal length"));
    }
    let n = feats.len();
    let x = DMatrix::from_fn(n, d, |i, j| feats[i][j]);
    let mu = x.row_mean().transpose();
    let centred = DMatrix::from_fn(n, d, |i, j| x[(i, j)] - mu[j]);
    let cov = centred.transpose() * &centred / (n as f64 - 1.0);
    Ok((mu, cov))
}

/// Symmetric PSD square root; tiny negative eigenvalues are clipped.
fn sqrtm_psd(m: &DMatrix<f64>) -> DMatrix<f64> {
    let sym = (m + m.transpose()) * 0.5;
    let eig = sym.symmetric_eigen();
    let vals = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
    &eig.eigenvectors * DMatrix::from_diagonal(&vals) * eig.eigenvectors.transpose()
}

fn is_singular(cov: &DMatrix<f64>) -> bool {
    cov.clone().symmetric_eigen().eigenvalues.min() <= FRECHET_EPS * 1e-3
}

/// Fréchet distance between Gaussians given by their moments.
pub fn frechet_from_moments(
    mu_a: &DVector<f64>,
    cov_a: &DMatrix<f64>,
    mu_b: &DVector<f64>,
    cov_b: &DMatrix<f64>,
) -> Result<f64> {
    let d = mu_a.len();
    if mu_b.len() != d || cov_a.shape() != (d, d) || cov_b.shape() != (d, d) {
        return Err(invalid("Fréchet moments have inconsistent dimensions"));
    }
    let (mut ca, mut cb) = (cov_a.clone(), cov_b.clone());
    if is_singular(&ca) || is_singular(&cb) {
        log::info!("singular covariance in Fréchet distance; adding {FRECHET_EPS}·I");
        let ridge = DMatrix::<f64>::identity(d, d) * FRECHET_EPS;
        ca += &ridge;
        cb += &ridge;
    }
    let root_a = sqrtm_psd(&ca);
    let cross = sqrtm_psd(&(&root_a * &cb * &root_a));
    let mean_term = (mu_a - mu_b).norm_squared();
    let value = mean_term + ca.trace() + cb.trace() - 2.0 * cross.trace();
    Ok(value.max(0.0))
}

/// `‖μa − μb‖² + Tr(Σa + Σb − 2(Σa Σb)^{1/2})` of two embedding sets.
pub fn frechet_feature_distance(feats_a: &[Vec<f64>], feats_b: &[Vec<f64>]) -> Result<f64> {
    let (mu_a, cov_a) = moments(feats_a)?;
    let (mu_b, cov_b) = moments(feats_b)?;
    frechet_from_moments(&mu_a, &cov_a, &mu_b, &cov_b)
}

/// One line of the evaluation CSV.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub metric: String,
    pub cycle: usize,
    pub value: f64,
    pub embedder: String,
}

impl MarkovnessReport {
    /// `eps_y`, `eps_x` and `eps_mark` rows for this cycle.
    pub fn rows(&self) -> Vec<EvalRow> {
        [
            ("eps_y", self.eps_y),
            ("eps_x", self.eps_x),
            ("eps_mark", self.eps_mark),
        ]
        .into_iter()
        .map(|(m, v)| EvalRow {
            metric: m.into(),
            cycle: self.cycle,
            value: v,
            embedder: "none".into(),
        })
        .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::ValueRange;
    use mcmi_tensor::Tensor;

    fn unit(shape: &[usize], data: Vec<f32>) -> ImageBatch {
        ImageBatch::new(Tensor::from_vec(shape, data).unwrap(), ValueRange::Unit).unwrap()
    }

    #[test]
    fn mse_examples() {
        let z = unit(&[1, 1, 2, 2], vec![0.0; 4]);
        let o = unit(&[1, 1, 2, 2], vec![1.0; 4]);
        assert_eq!(pixel_mse(&z, &z).unwrap(), 0.0);
        assert_eq!(pixel_mse(&z, &o).unwrap(), 1.0);
        let half = unit(&[1, 1, 2, 2], vec![0.5, 0.5, 0.0, 0.0]);
        assert_eq!(pixel_mse(&z, &half).unwrap(), 0.125);
    }

    #[test]
    fn mse_renormalises_signed_inputs() {
        let s = ImageBatch::signed(Tensor::full(&[1, 1, 2, 2], -1.0)).unwrap();
        let o = unit(&[1, 1, 2, 2], vec![1.0; 4]);
        assert_eq!(pixel_mse(&s, &o).unwrap(), 1.0);
        assert!(pixel_mse(&s, &unit(&[1, 1, 1, 4], vec![0.0; 4])).is_err());
    }

    #[test]
    fn table_ratios() {
        assert!((markovness_ratio(0.0238, 0.0056) - 4.25).abs() < 5e-3);
        assert!((markovness_ratio(0.0211, 0.0141) - 1.50).abs() < 5e-3);
        assert_eq!(markovness_ratio(0.3, 0.3), 1.0);
        assert!(markovness_ratio(0.3, 0.0).is_infinite());
    }

    #[test]
    fn one_hot_diversity_is_sqrt_two() {
        let sets: Vec<ImageBatch> = (0..4)
            .map(|k| {
                let mut d = vec![0.0; 4];
                d[k] = 1.0;
                unit(&[1, 1, 2, 2], d)
            })
            .collect();
        let v = pairwise_diversity(&sets, &PixelEmbedder).unwrap();
        assert!((v - 2f64.sqrt()).abs() < 1e-12);
        assert_eq!(
            pairwise_diversity(&[sets[0].clone(), sets[0].clone()], &PixelEmbedder).unwrap(),
            0.0
        );
        assert!(pairwise_diversity(&sets[..1], &PixelEmbedder).is_err());
    }

    #[test]
    fn frechet_closed_forms() {
        let mu = |v: &[f64]| DVector::from_row_slice(v);
        let cov = |v: f64| DMatrix::from_element(1, 1, v);
        let v = frechet_from_moments(&mu(&[0.0]), &cov(1.0), &mu(&[1.0]), &cov(4.0)).unwrap();
        assert!((v - 2.0).abs() < 1e-9);

        let a: Vec<Vec<f64>> = (0..20)
            .map(|i| vec![(i as f64).sin(), (i as f64 * 0.7).cos()])
            .collect();
        assert!(frechet_feature_distance(&a, &a).unwrap().abs() < 1e-6);
        let shifted: Vec<Vec<f64>> = a.iter().map(|r| vec![r[0] + 3.0, r[1] - 4.0]).collect();
        assert!((frechet_feature_distance(&a, &shifted).unwrap() - 25.0).abs() < 1e-6);
    }

    #[test]
    fn frechet_handles_singular_covariance() {
        // Three points in 5 dimensions: rank-deficient covariance.
        let a: Vec<Vec<f64>> = (0..3).map(|i| (0..5).map(|j| (i * j) as f64).collect()).collect();
        let b: Vec<Vec<f64>> = (0..3).map(|i| (0..5).map(|j| (i + j) as f64).collect()).collect();
        let ab = frechet_feature_distance(&a, &b).unwrap();
        let ba = frechet_feature_distance(&b, &a).unwrap();
        assert!(ab.is_finite() && ab >= 0.0);
        assert!((ab - ba).abs() < 1e-6 * (1.0 + ab));
    }
}
