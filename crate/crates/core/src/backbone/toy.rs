use mcmi_tensor::{Element, Graph, ParamSet, Var};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::backbone::{resolve_style, BackboneModule};
use crate::error::{invalid, Result};
use crate::image::{Direction, Domain, Geometry};
use crate::nn::Conv;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ToyConfig {
    pub geometry: Geometry,
    /// Base generator width; the bottleneck runs at `4 * ngf` channels.
    pub ngf: usize,
    /// Base discriminator width.
    pub ndf: usize,
    pub residual_blocks: usize,
    /// Std of the normal weight initialisation.
    pub init_std: f64,
}

impl Default for ToyConfig {
    fn default() -> Self {
        Self {
            geometry: Geometry::default(),
            ngf: 16,
            ndf: 16,
            residual_blocks: 2,
            init_std: 0.02,
        }
    }
}

impl ToyConfig {
    pub fn validate(&self) -> Result<()> {
        let g = self.geometry;
        if !g.height.is_multiple_of(4) || !g.width.is_multiple_of(4) || g.height < 8 || g.width < 8 {
            return Err(invalid(format!(
                "toy backbone needs height/width divisible by 4 and >= 8, got {g}"
            )));
        }
        if self.ngf == 0 || self.ndf == 0 {
            return Err(invalid("toy backbone widths must be positive"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
struct Generator {
    stem: Conv,
    down: [Conv; 2],
    res: Vec<(Conv, Conv)>,
    up: [Conv; 2],
    out: Conv,
}

impl Generator {
    fn new<T: Element, R: Rng + ?Sized>(params: &mut ParamSet<T>, name: &str, cfg: &ToyConfig, rng: &mut R) -> Self {
        let c = cfg.geometry.channels;
        let f = cfg.ngf;
        let std = cfg.init_std;
        let mut conv =
            |n: &str, i, o, k, s, p, b| Conv::new(params, &format!("{name}.{n}"), i, o, k, s, p, b, std, rng);
        let stem = conv("stem", c, f, 3, 1, 1, false);
        let down = [
            conv("down0", f, 2 * f, 3, 2, 1, false),
            conv("down1", 2 * f, 4 * f, 3, 2, 1, false),
        ];
        let res = (0..cfg.residual_blocks)
            .map(|r| {
                (
                    conv(&format!("res{r}.a"), 4 * f, 4 * f, 3, 1, 1, false),
                    conv(&format!("res{r}.b"), 4 * f, 4 * f, 3, 1, 1, false),
                )
            })
            .collect();
        let up = [
            conv("up0", 4 * f, 2 * f, 3, 1, 1, false),
            conv("up1", 2 * f, f, 3, 1, 1, false),
        ];
        let out = conv("out", f, c, 3, 1, 1, true);
        Self {
            stem,
            down,
            res,
            up,
            out,
        }
    }

    fn forward<T: Element>(&self, g: &Graph<T>, v: &[Var], x: Var) -> Result<Var> {
        let block = |conv: &Conv, h: Var| -> Result<Var> {
            let h = conv.forward(g, v, h)?;
            let h = g.instance_norm(h, 1e-5)?;
            Ok(g.relu(h))
        };
        let mut h = block(&self.stem, x)?;
        for d in &self.down {
            h = block(d, h)?;
        }
        for (a, b) in &self.res {
            let r = block(a, h)?;
            let r = b.forward(g, v, r)?;
            let r = g.instance_norm(r, 1e-5)?;
            h = g.add(h, r)?;
        }
        for u in &self.up {
            h = g.upsample2x(h)?;
            h = block(u, h)?;
        }
        let h = self.out.forward(g, v, h)?;
        Ok(g.tanh(h))
    }
}

/// 70×70-style PatchGAN shrunk to 32×32 inputs: two stride-2 convs and a
/// 3×3 scoring conv, giving an `(h/4)×(w/4)` realism map.
#[derive(Clone, Debug, PartialEq)]
struct Discriminator {
    c0: Conv,
    c1: Conv,
    score: Conv,
}

impl Discriminator {
    fn new<T: Element, R: Rng + ?Sized>(params: &mut ParamSet<T>, name: &str, cfg: &ToyConfig, rng: &mut R) -> Self {
        let c = cfg.geometry.channels;
        let f = cfg.ndf;
        let std = cfg.init_std;
        Self {
            c0: Conv::new(params, &format!("{name}.c0"), c, f, 4, 2, 1, true, std, rng),
            c1: Conv::new(params, &format!("{name}.c1"), f, 2 * f, 4, 2, 1, false, std, rng),
            score: Conv::new(params, &format!("{name}.score"), 2 * f, 1, 3, 1, 1, true, std, rng),
        }
    }

    fn forward<T: Element>(&self, g: &Graph<T>, v: &[Var], x: Var) -> Result<Var> {
        let slope = T::from_f64(0.2);
        let h = self.c0.forward(g, v, x)?;
        let h = g.leaky_relu(h, slope);
        let h = self.c1.forward(g, v, h)?;
        let h = g.instance_norm(h, 1e-5)?;
        let h = g.leaky_relu(h, slope);
        self.score.forward(g, v, h)
    }
}

/// Deterministic two-generator, two-discriminator CycleGAN at desk scale.
#[derive(Clone, Debug, PartialEq)]
pub struct ToyCycleGan<T: Element = f32> {
    config: ToyConfig,
    gen_params: ParamSet<T>,
    disc_params: ParamSet<T>,
    g_xy: Generator,
    g_yx: Generator,
    d_x: Discriminator,
    d_y: Discriminator,
}

impl<T: Element> ToyCycleGan<T> {
    pub fn new<R: Rng + ?Sized>(config: ToyConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let mut gen_params = ParamSet::new();
        let g_xy = Generator::new(&mut gen_params, "g_xy", &config, rng);
        let g_yx = Generator::new(&mut gen_params, "g_yx", &config, rng);
        let mut disc_params = ParamSet::new();
        let d_x = Discriminator::new(&mut disc_params, "d_x", &config, rng);
        let d_y = Discriminator::new(&mut disc_params, "d_y", &config, rng);
        Ok(Self {
            config,
            gen_params,
            disc_params,
            g_xy,
            g_yx,
            d_x,
            d_y,
        })
    }

    pub fn config(&self) -> &ToyConfig {
        &self.config
    }

    pub fn num_parameters(&self) -> usize {
        self.gen_params.num_elements() + self.disc_params.num_elements()
    }

    pub fn cast<U: Element>(&self) -> ToyCycleGan<U> {
        ToyCycleGan {
            config: self.config.clone(),
            gen_params: self.gen_params.cast(),
            disc_params: self.disc_params.cast(),
            g_xy: self.g_xy.clone(),
            g_yx: self.g_yx.clone(),
            d_x: self.d_x.clone(),
            d_y: self.d_y.clone(),
        }
    }
}

impl<T: Element> BackboneModule<T> for ToyCycleGan<T> {
    fn geometry(&self) -> Geometry {
        self.config.geometry
    }

    fn generator_params(&self) -> &ParamSet<T> {
        &self.gen_params
    }

    fn generator_params_mut(&mut self) -> &mut ParamSet<T> {
        &mut self.gen_params
    }

    fn discriminator_params(&self) -> &ParamSet<T> {
        &self.disc_params
    }

    fn discriminator_params_mut(&mut self) -> &mut ParamSet<T> {
        &mut self.disc_params
    }

    fn translate_on(
        &self,
        g: &Graph<T>,
        gen: &[Var],
        x: Var,
        direction: Direction,
        style: Option<&[T]>,
    ) -> Result<Var> {
        self.config.geometry.check(&g.value(x))?;
        resolve_style(self, style)?;
        match direction {
            Direction::XToY => self.g_xy.forward(g, gen, x),
            Direction::YToX => self.g_yx.forward(g, gen, x),
        }
    }

    fn discriminate_on(&self, g: &Graph<T>, disc: &[Var], x: Var, domain: Domain) -> Result<Var> {
        self.config.geometry.check(&g.value(x))?;
        match domain {
            Domain::X => self.d_x.forward(g, disc, x),
            Domain::Y => self.d_y.forward(g, disc, x),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backbone::{discriminate, translate, IdentityBackbone};
    use crate::image::ImageBatch;
    use mcmi_tensor::Tensor;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn batch(n: usize, seed: u64) -> ImageBatch {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        ImageBatch::signed(Tensor::randn(&[n, 3, 32, 32], 0.5, &mut rng)).unwrap()
    }

    fn toy() -> ToyCycleGan {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        ToyCycleGan::new(ToyConfig::default(), &mut rng).unwrap()
    }

    #[test]
    fn desk_scale_parameter_budget() {
        assert!(toy().num_parameters() <= 1_000_000);
    }

    #[test]
    fn translate_preserves_geometry_and_range() {
        let m = toy();
        for dir in [Direction::XToY, Direction::YToX] {
            let out = translate(&m, &batch(4, 1), dir, None).unwrap();
            assert_eq!(out.tensor().shape(), &[4, 3, 32, 32]);
            assert!(out.tensor().data().iter().all(|v| (-1.0..=1.0).contains(v)));
        }
    }

    #[test]
    fn translate_is_deterministic() {
        let m = toy();
        let x = batch(2, 3);
        let a = translate(&m, &x, Direction::XToY, None).unwrap();
        let b = translate(&m, &x, Direction::XToY, None).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn style_is_ignored_by_unimodal_backbone() {
        let m = toy();
        let x = batch(1, 3);
        let a = translate(&m, &x, Direction::XToY, None).unwrap();
        let b = translate(&m, &x, Direction::XToY, Some(&[0.3, -1.0])).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn geometry_mismatch_rejected() {
        let m = toy();
        let bad = ImageBatch::signed(Tensor::zeros(&[1, 3, 16, 16])).unwrap();
        assert!(translate(&m, &bad, Direction::XToY, None).is_err());
        assert!(discriminate(&m, &bad, Domain::X).is_err());
    }

    #[test]
    fn identity_backbone_returns_input() {
        let m = IdentityBackbone::<f32>::new(Geometry::default(), 1.0);
        let x = batch(3, 5);
        assert_eq!(translate(&m, &x, Direction::YToX, None).unwrap(), x);
    }

    #[test]
    fn one_score_map_per_image() {
        let m = toy();
        let d = discriminate(&m, &batch(4, 2), Domain::Y).unwrap();
        assert_eq!(d.shape(), &[4, 1, 8, 8]);
    }

    #[test]
    fn zero_discriminator_gives_constant_maps() {
        let mut m = toy();
        for p in m.discriminator_params_mut().iter_mut() {
            p.value = Tensor::zeros(p.value.shape());
        }
        let d = discriminate(&m, &batch(4, 2), Domain::X).unwrap();
        let first = d.data()[0];
        assert!(d.data().iter().all(|&v| v == first));
    }
}
