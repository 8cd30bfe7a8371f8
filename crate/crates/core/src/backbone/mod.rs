//! Translation backbones: the module interface and a toy CycleGAN.

mod identity;
mod toy;

use mcmi_tensor::{Element, Graph, ParamSet, Tensor, Var};

use crate::error::{invalid, Result};
use crate::image::{Direction, Domain, Geometry, ImageBatch, ValueRange};

pub use identity::IdentityBackbone;
pub use toy::{ToyConfig, ToyCycleGan};

/// Two direction-indexed generators and two domain discriminators.
///
/// Generators and discriminators keep separate parameter sets so that each
/// group can be optimised (or frozen) on its own.
pub trait BackboneModule<T: Element> {
    fn geometry(&self) -> Geometry;

    /// Length of the optional style code; 0 for unimodal backbones.
    fn style_dim(&self) -> usize {
        0
    }

    fn generator_params(&self) -> &ParamSet<T>;
    fn generator_params_mut(&mut self) -> &mut ParamSet<T>;
    fn discriminator_params(&self) -> &ParamSet<T>;
    fn discriminator_params_mut(&mut self) -> &mut ParamSet<T>;

    /// Differentiable translation of a `[n, c, h, w]` batch. `gen` are the
    /// generator parameters bound on `g`.
    fn translate_on(&self, g: &Graph<T>, gen: &[Var], x: Var, direction: Direction, style: Option<&[T]>)
        -> Result<Var>;

    /// Realism score maps `[n, 1, h', w']` from the discriminator of `domain`.
    fn discriminate_on(&self, g: &Graph<T>, disc: &[Var], x: Var, domain: Domain) -> Result<Var>;
}

/// Validates a style code against the module; unimodal modules ignore codes.
pub fn resolve_style<'a, T: Element, M: BackboneModule<T> + ?Sized>(
    module: &M,
    style: Option<&'a [T]>,
) -> Result<Option<&'a [T]>> {
    match (module.style_dim(), style) {
        (_, None) => Ok(None),
        (0, Some(_)) => {
            log::warn!("style code passed to a unimodal backbone; ignoring it");
            Ok(None)
        }
        (d, Some(s)) if s.len() == d => Ok(Some(s)),
        (d, Some(s)) => Err(invalid(format!(
            "style code has length {}, backbone expects {d}",
            s.len()
        ))),
    }
}

/// Translate a batch outside of any training graph.
pub fn translate<M: BackboneModule<f32> + ?Sized>(
    module: &M,
    x: &ImageBatch,
    direction: Direction,
    style: Option<&[f32]>,
) -> Result<ImageBatch> {
    module.geometry().check(x.tensor())?;
    let g = Graph::new();
    let gen = module.generator_params().bind(&g, false);
    let xv = g.constant(x.to_signed().into_tensor());
    let y = module.translate_on(&g, &gen, xv, direction, style)?;
    let out = (*g.value(y)).clone();
    ImageBatch::new(out, ValueRange::Signed)
}

/// Discriminator score maps for a batch outside of any training graph.
pub fn discriminate<M: BackboneModule<f32> + ?Sized>(
    module: &M,
    x: &ImageBatch,
    domain: Domain,
) -> Result<Tensor<f32>> {
    module.geometry().check(x.tensor())?;
    let g = Graph::new();
    let disc = module.discriminator_params().bind(&g, false);
    let xv = g.constant(x.to_signed().into_tensor());
    let d = module.discriminate_on(&g, &disc, xv, domain)?;
    let out = (*g.value(d)).clone();
    if !out.all_finite() {
        return Err(crate::error::McmiError::NonFinite("discriminator output".into()));
    }
    Ok(out)
}
