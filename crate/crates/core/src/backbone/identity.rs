use mcmi_tensor::{Element, Graph, ParamSet, Tensor, Var};

use crate::backbone::{resolve_style, BackboneModule};
use crate::error::Result;
use crate::image::{Direction, Domain, Geometry};

/// Generators are the identity map; discriminators emit a constant score.
///
/// Used to pin down chain and loss plumbing independent of any learning.
#[derive(Clone, Debug)]
pub struct IdentityBackbone<T: Element = f32> {
    geometry: Geometry,
    disc_value: T,
    empty_gen: ParamSet<T>,
    empty_disc: ParamSet<T>,
}

impl<T: Element> IdentityBackbone<T> {
    /// `disc_value` is what both discriminators output everywhere.
    pub fn new(geometry: Geometry, disc_value: f64) -> Self {
        Self {
            geometry,
            disc_value: T::from_f64(disc_value),
            empty_gen: ParamSet::new(),
            empty_disc: ParamSet::new(),
        }
    }
}

impl<T: Element> BackboneModule<T> for IdentityBackbone<T> {
    fn geometry(&self) -> Geometry {
        self.geometry
    }

    fn generator_params(&self) -> &ParamSet<T> {
        &self.empty_gen
    }

    fn generator_params_mut(&mut self) -> &mut ParamSet<T> {
        &mut self.empty_gen
    }

    fn discriminator_params(&self) -> &ParamSet<T> {
        &self.empty_disc
    }

    fn discriminator_params_mut(&mut self) -> &mut ParamSet<T> {
        &mut self.empty_disc
    }

    fn translate_on(
        &self,
        g: &Graph<T>,
        _gen: &[Var],
        x: Var,
        _direction: Direction,
        style: Option<&[T]>,
    ) -> Result<Var> {
        self.geometry.check(&g.value(x))?;
        resolve_style(self, style)?;
        Ok(x)
    }

    fn discriminate_on(&self, g: &Graph<T>, _disc: &[Var], x: Var, _domain: Domain) -> Result<Var> {
        let n = self.geometry.check(&g.value(x))?;
        Ok(g.constant(Tensor::full(&[n, 1, 1, 1], self.disc_value)))
    }
}
