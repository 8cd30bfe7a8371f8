//! Convolution layer bookkeeping shared by the critic and the toy backbone.

use mcmi_tensor::{Element, Graph, ParamSet, Tensor, Var};
use rand::Rng;

use crate::error::Result;

/// Slot indices of one convolution inside a [`ParamSet`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub(crate) struct Conv {
    weight: usize,
    bias: Option<usize>,
    stride: usize,
    pad: usize,
}

impl Conv {
    #[allow(clippy::too_many_arguments)]
    pub fn new<T: Element, R: Rng + ?Sized>(
        params: &mut ParamSet<T>,
        name: &str,
        in_ch: usize,
        out_ch: usize,
        kernel: usize,
        stride: usize,
        pad: usize,
        bias: bool,
        std: f64,
        rng: &mut R,
    ) -> Self {
        let weight = params.push(
            format!("{name}.weight"),
            Tensor::randn(&[out_ch, in_ch, kernel, kernel], std, rng),
        );
        let bias = bias.then(|| params.push(format!("{name}.bias"), Tensor::zeros(&[out_ch])));
        Self {
            weight,
            bias,
            stride,
            pad,
        }
    }

    pub fn forward<T: Element>(&self, g: &Graph<T>, vars: &[Var], x: Var) -> Result<Var> {
        Ok(g.conv2d(x, vars[self.weight], self.bias.map(|b| vars[b]), self.stride, self.pad)?)
    }
}

/// He-normal standard deviation for a `k×k` kernel over `in_ch` channels.
pub(crate) fn he_std(in_ch: usize, kernel: usize) -> f64 {
    (2.0 / (in_ch * kernel * kernel) as f64).sqrt()
}
