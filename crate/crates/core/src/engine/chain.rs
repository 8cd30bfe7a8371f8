use mcmi_tensor::{Element, Graph, Var};

use crate::backbone::{translate, BackboneModule};
use crate::engine::MCMIConfig;
use crate::error::{invalid, Result};
use crate::image::{Direction, Domain, ImageBatch};

/// States `s0 → s1 → … → s_{2N}` of `N` translation cycles.
///
/// `s0` is the input; even states live in the start domain, odd states in the
/// other one.
#[derive(Clone, Debug, PartialEq)]
pub struct TranslationChain {
    states: Vec<ImageBatch>,
    start: Domain,
}

impl TranslationChain {
    pub fn new(states: Vec<ImageBatch>, start: Domain) -> Result<Self> {
        if states.len() < 3 || states.len().is_multiple_of(2) {
            return Err(invalid(format!(
                "a chain has 2N + 1 states with N >= 1, got {}",
                states.len()
            )));
        }
        let (g, n) = (states[0].geometry(), states[0].len());
        if states.iter().any(|s| s.geometry() != g || s.len() != n) {
            return Err(invalid("chain states must share geometry and batch size"));
        }
        Ok(Self { states, start })
    }

    pub fn n_cycles(&self) -> usize {
        (self.states.len() - 1) / 2
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn start(&self) -> Domain {
        self.start
    }

    pub fn states(&self) -> &[ImageBatch] {
        &self.states
    }

    pub fn state(&self, k: usize) -> &ImageBatch {
        &self.states[k]
    }

    /// Domain of state `k`.
    pub fn domain(&self, k: usize) -> Domain {
        domain_of(self.start, k)
    }

    /// The translated image of cycle `c` (1-based): `s_{2c-1}`.
    pub fn translated(&self, cycle: usize) -> &ImageBatch {
        &self.states[2 * cycle - 1]
    }

    /// The reconstruction closing cycle `c` (1-based): `s_{2c}`.
    pub fn reconstructed(&self, cycle: usize) -> &ImageBatch {
        &self.states[2 * cycle]
    }
}

pub(crate) fn domain_of(start: Domain, k: usize) -> Domain {
    if k.is_multiple_of(2) {
        start
    } else {
        start.other()
    }
}

/// Apply the same module `2N` times, alternating directions.
pub fn run_chain<M: BackboneModule<f32> + ?Sized>(
    module: &M,
    x: &ImageBatch,
    start: Domain,
    config: &MCMIConfig,
) -> Result<TranslationChain> {
    if config.n_cycles == 0 {
        return Err(invalid("n_cycles must be at least 1"));
    }
    let mut states = vec![x.to_signed()];
    for k in 0..2 * config.n_cycles {
        let dir = Direction::from_domain(domain_of(start, k));
        let next = translate(module, &states[k], dir, None)?;
        states.push(next);
    }
    TranslationChain::new(states, start)
}

/// Differentiable chain on `g`; returns the `2N + 1` state variables.
pub fn chain_on<T: Element, M: BackboneModule<T> + ?Sized>(
    module: &M,
    g: &Graph<T>,
    gen: &[Var],
    x: Var,
    start: Domain,
    n_cycles: usize,
) -> Result<Vec<Var>> {
    if n_cycles == 0 {
        return Err(invalid("n_cycles must be at least 1"));
    }
    let mut states = vec![x];
    for k in 0..2 * n_cycles {
        let dir = Direction::from_domain(domain_of(start, k));
        states.push(module.translate_on(g, gen, states[k], dir, None)?);
    }
    Ok(states)
}
