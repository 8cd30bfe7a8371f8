use mcmi_tensor::{Element, Graph, ParamSet, Var};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::image::{Geometry, ImageBatch};
use crate::mi::bounds::{infonce_lower, infonce_upper, MIEstimate, ScoreMatrix};
use crate::nn::{he_std, Conv};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CriticConfig {
    pub geometry: Geometry,
    /// Output channels of the four conv layers; the last one is the
    /// embedding length.
    pub widths: [usize; 4],
    /// 2×2 max-pooling after each layer.
    pub pool_after: [bool; 4],
    pub kernel_size: usize,
    pub leaky_slope: f64,
    /// `s` in `|cos|·s − m`.
    pub scale: f64,
    /// `m` in `|cos|·s − m`.
    pub offset: f64,
}

impl Default for CriticConfig {
    fn default() -> Self {
        Self {
            geometry: Geometry::default(),
            widths: [64, 128, 128, 128],
            pool_after: [true, true, false, false],
            kernel_size: 3,
            leaky_slope: 0.2,
            scale: 2.0,
            offset: 2.0,
        }
    }
}

impl CriticConfig {
    pub fn validate(&self) -> Result<()> {
        if self.widths.contains(&0) {
            return Err(invalid("critic widths must be positive"));
        }
        if self.kernel_size.is_multiple_of(2) {
            return Err(invalid("critic kernel size must be odd"));
        }
        let pools = self.pool_after.iter().filter(|&&p| p).count() as u32;
        let div = 1usize << pools;
        let g = self.geometry;
        if !g.height.is_multiple_of(div) || !g.width.is_multiple_of(div) || g.height / div == 0 {
            return Err(invalid(format!(
                "input {g} is not divisible by {div} for {pools} pooling stages"
            )));
        }
        if self.scale < 0.0 || self.offset < 0.0 {
            return Err(invalid("critic scale and offset must be nonnegative"));
        }
        Ok(())
    }
}

/// Shared conv encoder plus the absolute-cosine critic
/// `f(x, y) = |cos(enc x, enc y)|·s − m`.
///
/// Layers 1–3 are conv → instance norm → leaky ReLU (with the configured
/// pooling); layer 4 is a biased linear conv whose output is averaged over
/// space to form the embedding.
#[derive(Clone, Debug, PartialEq)]
pub struct CriticNetwork<T: Element = f32> {
    config: CriticConfig,
    params: ParamSet<T>,
    convs: Vec<Conv>,
}

impl<T: Element> CriticNetwork<T> {
    pub fn new<R: Rng + ?Sized>(config: CriticConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let mut params = ParamSet::new();
        let k = config.kernel_size;
        let mut in_ch = config.geometry.channels;
        let mut convs = Vec::with_capacity(4);
        for (idx, &out_ch) in config.widths.iter().enumerate() {
            let last = idx == 3;
            convs.push(Conv::new(
                &mut params,
                &format!("critic.conv{idx}"),
                in_ch,
                out_ch,
                k,
                1,
                k / 2,
                last,
                he_std(in_ch, k),
                rng,
            ));
            in_ch = out_ch;
        }
        Ok(Self { config, params, convs })
    }

    pub fn config(&self) -> &CriticConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamSet<T> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet<T> {
        &mut self.params
    }

    pub fn embedding_len(&self) -> usize {
        self.config.widths[3]
    }

    /// Same network with parameters converted to another element type.
    pub fn cast<U: Element>(&self) -> CriticNetwork<U> {
        CriticNetwork {
            config: self.config.clone(),
            params: self.params.cast(),
            convs: self.convs.clone(),
        }
    }

    /// `[n, c, h, w] -> [n, d]` embeddings on a graph.
    pub fn encode_on(&self, g: &Graph<T>, vars: &[Var], images: Var) -> Result<Var> {
        self.config.geometry.check(&g.value(images))?;
        let slope = T::from_f64(self.config.leaky_slope);
        let mut h = images;
        for (idx, conv) in self.convs.iter().enumerate() {
            h = conv.forward(g, vars, h)?;
            if idx < 3 {
                h = g.instance_norm(h, 1e-5)?;
                h = g.leaky_relu(h, slope);
            }
            if self.config.pool_after[idx] {
                h = g.max_pool2(h)?;
            }
        }
        Ok(g.global_avg_pool(h)?)
    }

    /// `[kx, ky]` critic scores between two embedding sets.
    pub fn scores_on(&self, g: &Graph<T>, ex: Var, ey: Var) -> Result<Var> {
        Ok(g.abs_cosine_scores(ex, ey, T::from_f64(self.config.scale), T::from_f64(self.config.offset))?)
    }

    /// Embeddings of every image in the batch.
    pub fn encode(&self, batch: &ImageBatch) -> Result<Vec<Vec<f64>>> {
        let g = Graph::new();
        let vars = self.params.bind(&g, false);
        let x = g.constant(batch.to_signed().tensor().cast::<T>());
        let e = self.encode_on(&g, &vars, x)?;
        let value = g.value(e);
        let d = self.embedding_len();
        Ok(value
            .data()
            .chunks(d)
            .map(|row| row.iter().map(|v| v.as_f64()).collect())
            .collect())
    }

    /// Embedding of a single image.
    pub fn encode_one(&self, image: &ImageBatch) -> Result<Vec<f64>> {
        if image.len() != 1 {
            return Err(invalid(format!("expected one image, got {}", image.len())));
        }
        Ok(self.encode(image)?.remove(0))
    }

    /// Full `K×K` score matrix; row `i` of `xs` pairs with row `i` of `ys`.
    pub fn score_matrix(&self, xs: &ImageBatch, ys: &ImageBatch) -> Result<ScoreMatrix> {
        if xs.len() != ys.len() {
            return Err(invalid(format!("batch sizes differ: {} vs {}", xs.len(), ys.len())));
        }
        let g = Graph::new();
        let vars = self.params.bind(&g, false);
        let x = g.constant(xs.to_signed().tensor().cast::<T>());
        let y = g.constant(ys.to_signed().tensor().cast::<T>());
        let ex = self.encode_on(&g, &vars, x)?;
        let ey = self.encode_on(&g, &vars, y)?;
        let s = self.scores_on(&g, ex, ey)?;
        let k = xs.len();
        ScoreMatrix::new(k, g.value(s).data().iter().map(|v| v.as_f64()).collect())
    }

    /// Both InfoNCE bounds for positive pairs `(xs[i], ys[i])`.
    pub fn estimate_pair(&self, xs: &ImageBatch, ys: &ImageBatch) -> Result<MIEstimate> {
        if xs.len() < 2 {
            return Err(invalid("estimating a pair needs K >= 2 samples"));
        }
        let s = self.score_matrix(xs, ys)?;
        Ok(MIEstimate {
            lower: infonce_lower(&s)?,
            upper: infonce_upper(&s)?,
            k: s.k(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mi::bounds::critic_score;
    use mcmi_tensor::Tensor;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn small_config() -> CriticConfig {
        CriticConfig {
            widths: [8, 16, 16, 16],
            ..CriticConfig::default()
        }
    }

    fn batch(n: usize, seed: u64) -> ImageBatch {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let t = Tensor::randn(&[n, 3, 32, 32], 0.5, &mut rng).map(|v: f32| v.clamp(-1.0, 1.0));
        ImageBatch::signed(t).unwrap()
    }

    #[test]
    fn default_embedding_is_128() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let c = CriticNetwork::<f32>::new(CriticConfig::default(), &mut rng).unwrap();
        let e = c.encode_one(&batch(1, 1)).unwrap();
        assert_eq!(e.len(), 128);
    }

    #[test]
    fn encode_is_deterministic_and_checks_geometry() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let c = CriticNetwork::<f32>::new(small_config(), &mut rng).unwrap();
        let img = batch(1, 2);
        assert_eq!(c.encode_one(&img).unwrap(), c.encode_one(&img).unwrap());
        let gray = ImageBatch::signed(Tensor::zeros(&[1, 1, 32, 32])).unwrap();
        assert!(c.encode_one(&gray).is_err());
    }

    #[test]
    fn matrix_matches_pointwise_scores() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let c = CriticNetwork::<f32>::new(small_config(), &mut rng).unwrap();
        let (xs, ys) = (batch(3, 3), batch(3, 4));
        let s = c.score_matrix(&xs, &ys).unwrap();
        let ex = c.encode(&xs).unwrap();
        let ey = c.encode(&ys).unwrap();
        for (j, a) in ex.iter().enumerate() {
            for (i, b) in ey.iter().enumerate() {
                let direct = critic_score(a, b, 2.0, 2.0).unwrap();
                assert!((s.get(j, i) - direct).abs() < 1e-5);
                assert!(s.get(j, i) <= 1e-6 && s.get(j, i) >= -2.0 - 1e-6);
            }
        }
    }

    #[test]
    fn copies_have_positive_lower_bound() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let c = CriticNetwork::<f32>::new(small_config(), &mut rng).unwrap();
        let xs = batch(6, 9);
        let est = c.estimate_pair(&xs, &xs).unwrap();
        assert!(est.lower > 0.0);
        assert!(est.lower <= (6f64).ln() + 1e-9);
        assert!(est.upper >= est.lower);
    }

    #[test]
    fn estimate_pair_preconditions() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let c = CriticNetwork::<f32>::new(small_config(), &mut rng).unwrap();
        assert!(c.estimate_pair(&batch(1, 1), &batch(1, 2)).is_err());
        assert!(c.estimate_pair(&batch(2, 1), &batch(3, 2)).is_err());
    }
}
