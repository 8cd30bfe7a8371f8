//! Alternating optimisation of the translation model and the MI critic.

mod checkpoint;
mod pool;

pub use checkpoint::{load_checkpoint, load_checkpoint_for, save_checkpoint, CHECKPOINT_FORMAT, CHECKPOINT_VERSION};
pub use pool::{assemble_mi_batch, AnchorPool, MiBatch};

use mcmi_tensor::{Adam, AdamConfig, Graph, Tensor, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::backbone::{BackboneModule, ToyConfig, ToyCycleGan};
use crate::engine::{
    chain_on, first_cycle_loss_on, hinge_loss_on, lsgan_generator_on, run_chain, second_cycle_adversarial_on,
    total_loss, LossReport, MCMIConfig,
};
use crate::error::{invalid, McmiError, Result};
use crate::image::{Domain, ImageBatch};
use crate::mi::{infonce_bound_with_grad, infonce_lower, BoundKind, CriticConfig, CriticNetwork, ScoreMatrix};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    /// Adam learning rate of generators and discriminators.
    pub lr_i2i: f64,
    pub lr_critic: f64,
    /// Adam `(β1, β2)` of generators and discriminators.
    pub gan_betas: [f64; 2],
    pub critic_betas: [f64; 2],
    pub i2i_batch_size: usize,
    /// Samples per side of every score matrix (`K`); padded with anchors.
    pub mi_batch_size: usize,
    pub anchor_pool_size: usize,
    /// Critic updates per translation-model update.
    pub critic_steps: usize,
    pub total_steps: usize,
    pub seed: u64,
    pub mcmi: MCMIConfig,
    pub backbone: ToyConfig,
    pub critic: CriticConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr_i2i: 2e-4,
            lr_critic: 1e-4,
            gan_betas: [0.5, 0.999],
            critic_betas: [0.9, 0.999],
            i2i_batch_size: 1,
            mi_batch_size: 8,
            anchor_pool_size: 256,
            critic_steps: 1,
            total_steps: 2000,
            seed: 0,
            mcmi: MCMIConfig::default(),
            backbone: ToyConfig::default(),
            critic: CriticConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.mcmi.validate()?;
        self.backbone.validate()?;
        self.critic.validate()?;
        if self.backbone.geometry != self.critic.geometry {
            return Err(invalid(format!(
                "backbone geometry {} differs from critic geometry {}",
                self.backbone.geometry, self.critic.geometry
            )));
        }
        let (b, k) = (self.i2i_batch_size, self.mi_batch_size);
        if b == 0 || k < 2 || b > k {
            return Err(invalid(format!(
                "need 1 <= i2i_batch_size <= mi_batch_size and mi_batch_size >= 2, got {b} and {k}"
            )));
        }
        if self.anchor_pool_size < k {
            return Err(invalid(format!(
                "anchor_pool_size {} must be at least mi_batch_size {k}",
                self.anchor_pool_size
            )));
        }
        for (name, lr) in [("lr_i2i", self.lr_i2i), ("lr_critic", self.lr_critic)] {
            if !(lr >= 0.0 && lr.is_finite()) {
                return Err(invalid(format!("{name} must be finite and >= 0")));
            }
        }
        for betas in [self.gan_betas, self.critic_betas] {
            if betas.iter().any(|b| !(0.0..1.0).contains(b)) {
                return Err(invalid("Adam betas must lie in [0, 1)"));
            }
        }
        if self.critic_steps == 0 {
            return Err(invalid("critic_steps must be at least 1"));
        }
        Ok(())
    }

    fn anchors_per_step(&self) -> usize {
        self.mi_batch_size - self.i2i_batch_size
    }
}

/// Loss decomposition of one training step, per chain start domain.
#[derive(Clone, Debug, PartialEq)]
pub struct StepOutput {
    pub step: u64,
    /// `[X-start chain, Y-start chain]`.
    pub reports: [LossReport; 2],
    /// Mean masked lower bound the critic maximised.
    pub critic_lower: f64,
    pub disc_loss: f64,
}

/// One row of the training metrics CSV.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub step: u64,
    pub l_orig: f64,
    pub l_adv: f64,
    pub l_mi: f64,
    pub i_lower: f64,
    pub total: f64,
    pub direction: String,
}

impl StepOutput {
    pub fn rows(&self) -> Vec<MetricsRow> {
        [(Domain::X, "x-start"), (Domain::Y, "y-start")]
            .into_iter()
            .map(|(d, name)| {
                let r = &self.reports[domain_index(d)];
                MetricsRow {
                    step: self.step,
                    l_orig: r.l_orig,
                    l_adv: r.l_adv,
                    l_mi: r.l_mi,
                    i_lower: r.i_lower,
                    total: r.total,
                    direction: name.into(),
                }
            })
            .collect()
    }
}

pub(crate) fn domain_index(d: Domain) -> usize {
    match d {
        Domain::X => 0,
        Domain::Y => 1,
    }
}

const DOMAINS: [Domain; 2] = [Domain::X, Domain::Y];

/// Everything that evolves during training.
#[derive(Clone, Debug)]
pub struct TrainState {
    pub config: TrainConfig,
    pub backbone: ToyCycleGan,
    pub critic: CriticNetwork,
    pub opt_gen: Adam<f32>,
    pub opt_disc: Adam<f32>,
    pub opt_critic: Adam<f32>,
    /// Indexed by domain: `[X, Y]`.
    pub pools: [AnchorPool; 2],
    pub step: u64,
    /// Drives anchor sampling.
    pub rng: ChaCha8Rng,
    /// Drives training-batch sampling.
    pub data_rng: ChaCha8Rng,
}

fn stream(seed: u64, s: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(s);
    rng
}

/// Chain state values per start domain, `[X-start, Y-start]`.
type ChainValues = [Vec<Tensor<f32>>; 2];

/// Chain state variables and score bookkeeping for one start domain.
struct ChainBoundsOn {
    lower: Vec<Var>,
    upper: Vec<Var>,
}

impl TrainState {
    pub fn new(config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let backbone = ToyCycleGan::new(config.backbone.clone(), &mut stream(config.seed, 0))?;
        let critic = CriticNetwork::new(config.critic.clone(), &mut stream(config.seed, 1))?;
        let [g1, g2] = config.gan_betas;
        let [c1, c2] = config.critic_betas;
        let opt_gen = Adam::new(AdamConfig::new(config.lr_i2i, g1, g2), backbone.generator_params());
        let opt_disc = Adam::new(AdamConfig::new(config.lr_i2i, g1, g2), backbone.discriminator_params());
        let opt_critic = Adam::new(AdamConfig::new(config.lr_critic, c1, c2), critic.params());
        let geometry = config.backbone.geometry;
        let pool = AnchorPool::new(geometry, config.anchor_pool_size)?;
        Ok(Self {
            backbone,
            critic,
            opt_gen,
            opt_disc,
            opt_critic,
            pools: [pool.clone(), pool],
            step: 0,
            rng: stream(config.seed, 2),
            data_rng: stream(config.seed, 3),
            config,
        })
    }

    /// Fill both anchor pools with real images before the first step.
    pub fn seed_pools(&mut self, x: &ImageBatch, y: &ImageBatch) -> Result<()> {
        self.pools[0].push_real(x)?;
        self.pools[1].push_real(y)
    }

    /// Random record indices for the next unpaired batch of each domain.
    pub fn sample_indices(&mut self, n_x: usize, n_y: usize) -> (Vec<usize>, Vec<usize>) {
        let b = self.config.i2i_batch_size;
        let xs = (0..b).map(|_| self.data_rng.gen_range(0..n_x)).collect();
        let ys = (0..b).map(|_| self.data_rng.gen_range(0..n_y)).collect();
        (xs, ys)
    }

    fn sample_anchors(&mut self) -> Result<[Option<Tensor<f32>>; 2]> {
        let n = self.config.anchors_per_step();
        if n == 0 {
            return Ok([None, None]);
        }
        let ax = self.pools[0].sample(n, &mut self.rng)?;
        let ay = self.pools[1].sample(n, &mut self.rng)?;
        Ok([Some(ax.into_tensor()), Some(ay.into_tensor())])
    }

    /// Masked bounds for the pairs `(s0, s_k)` of one chain on `g`.
    fn bounds_on(
        &self,
        g: &Graph<f32>,
        cvars: &[Var],
        states: &[Var],
        start: Domain,
        anchor_emb: &[Option<Var>; 2],
    ) -> Result<ChainBoundsOn> {
        let b = self.config.i2i_batch_size;
        let k = self.config.mi_batch_size;
        let all = g.concat_batch(states)?;
        let emb = self.critic.encode_on(g, cvars, all)?;
        let pad = |e: Var, d: Domain| -> Result<Var> {
            Ok(match anchor_emb[domain_index(d)] {
                Some(a) => g.concat_batch(&[e, a])?,
                None => e,
            })
        };
        let ex = pad(g.slice_batch(emb, 0, b)?, start)?;
        let mut out = ChainBoundsOn {
            lower: Vec::new(),
            upper: Vec::new(),
        };
        for idx in 1..states.len() {
            let d = if idx % 2 == 0 { start } else { start.other() };
            let ey = pad(g.slice_batch(emb, idx * b, b)?, d)?;
            let s = self.critic.scores_on(g, ex, ey)?;
            let sm = ScoreMatrix::new(k, g.value(s).data().iter().map(|&v| v as f64).collect())?;
            for (kind, dst) in [(BoundKind::Lower, &mut out.lower), (BoundKind::Upper, &mut out.upper)] {
                let (value, grad) = infonce_bound_with_grad(&sm, kind, b)?;
                let grad = Tensor::from_vec(&[k, k], grad.iter().map(|&v| v as f32).collect())?;
                dst.push(g.scalar_fn(s, value as f32, grad)?);
            }
        }
        Ok(out)
    }

    fn embed_anchors(
        &self,
        g: &Graph<f32>,
        cvars: &[Var],
        anchors: &[Option<Tensor<f32>>; 2],
    ) -> Result<[Option<Var>; 2]> {
        let mut out = [None, None];
        for (slot, a) in out.iter_mut().zip(anchors) {
            if let Some(t) = a {
                let v = g.constant(t.clone());
                *slot = Some(self.critic.encode_on(g, cvars, v)?);
            }
        }
        Ok(out)
    }

    /// Generator update; returns per-chain reports and state values.
    fn generator_step(
        &mut self,
        batches: [&Tensor<f32>; 2],
        anchors: &[Option<Tensor<f32>>; 2],
    ) -> Result<([LossReport; 2], ChainValues)> {
        let mcmi = self.config.mcmi.clone();
        let n = mcmi.n_cycles;
        let g = Graph::new();
        let gvars = self.backbone.generator_params().bind(&g, true);
        let dvars = self.backbone.discriminator_params().bind(&g, false);
        let cvars = self.critic.params().bind(&g, false);
        let anchor_emb = self.embed_anchors(&g, &cvars, anchors)?;
        let mut reports = Vec::with_capacity(2);
        let mut values: ChainValues = [Vec::new(), Vec::new()];
        let mut objective: Option<Var> = None;
        for start in DOMAINS {
            let x = g.constant(batches[domain_index(start)].clone());
            let states = chain_on(&self.backbone, &g, &gvars, x, start, n)?;
            let l_orig = first_cycle_loss_on(&self.backbone, &g, &gvars, &dvars, &states, start, &mcmi.weights)?;
            let l_adv = if n >= 2 {
                second_cycle_adversarial_on(&self.backbone, &g, &dvars, &states, start)?
            } else {
                g.constant(Tensor::scalar(0.0))
            };
            let critic_in: Vec<Var> = if mcmi.mi_enabled() {
                states.clone()
            } else {
                states.iter().map(|&s| g.detach(s)).collect()
            };
            let bounds = self.bounds_on(&g, &cvars, &critic_in, start, &anchor_emb)?;
            let l_mi = if n >= 2 {
                hinge_loss_on(&g, &bounds.lower, &bounds.upper, mcmi.margin, mcmi.variant)?
            } else {
                g.constant(Tensor::scalar(0.0))
            };
            let i_lower = bounds.lower[0];
            let val = |v: Var| g.value(v).item() as f64;
            let report = total_loss(val(l_orig), val(l_adv), val(l_mi), val(i_lower), &mcmi)?;
            reports.push(report);
            let mut obj = g.add(l_orig, l_adv)?;
            if mcmi.alpha > 0.0 {
                obj = g.add(obj, g.scale(l_mi, mcmi.alpha as f32))?;
            }
            if mcmi.beta > 0.0 {
                obj = g.sub(obj, g.scale(i_lower, mcmi.beta as f32))?;
            }
            objective = Some(match objective {
                Some(o) => g.add(o, obj)?,
                None => obj,
            });
            values[domain_index(start)] = states.iter().map(|&s| (*g.value(s)).clone()).collect();
        }
        let objective = objective.expect("two chains");
        let mut grads = g.backward(objective)?;
        let gen_grads = self.backbone.generator_params().collect_grads(&gvars, &mut grads);
        if gen_grads.iter().flatten().any(|t| !t.all_finite()) {
            return Err(McmiError::NonFinite("generator gradient".into()));
        }
        self.opt_gen.step(self.backbone.generator_params_mut(), &gen_grads)?;
        Ok(([reports[0], reports[1]], values))
    }

    /// Least-squares discriminator update on reals and every generated state.
    fn discriminator_step(&mut self, batches: [&Tensor<f32>; 2], values: &ChainValues) -> Result<f64> {
        let g = Graph::new();
        let dvars = self.backbone.discriminator_params().bind(&g, true);
        let mut loss: Option<Var> = None;
        for domain in DOMAINS {
            let fakes: Vec<&Tensor<f32>> = DOMAINS
                .iter()
                .flat_map(|&start| {
                    values[domain_index(start)]
                        .iter()
                        .enumerate()
                        .skip(1)
                        .filter(move |(k, _)| (if k % 2 == 0 { start } else { start.other() }) == domain)
                        .map(|(_, t)| t)
                })
                .collect();
            let fake = g.constant(Tensor::concat_batch(&fakes)?);
            let real = g.constant(batches[domain_index(domain)].clone());
            let dr = self.backbone.discriminate_on(&g, &dvars, real, domain)?;
            let df = self.backbone.discriminate_on(&g, &dvars, fake, domain)?;
            let lr = lsgan_generator_on(&g, dr);
            let lf = g.mean(g.square(df));
            let l = g.scale(g.add(lr, lf)?, 0.5);
            loss = Some(match loss {
                Some(a) => g.add(a, l)?,
                None => l,
            });
        }
        let loss = loss.expect("two domains");
        let value = g.value(loss).item() as f64;
        if !value.is_finite() {
            return Err(McmiError::NonFinite("discriminator loss".into()));
        }
        let mut grads = g.backward(loss)?;
        let dgrads = self.backbone.discriminator_params().collect_grads(&dvars, &mut grads);
        self.opt_disc.step(self.backbone.discriminator_params_mut(), &dgrads)?;
        Ok(value)
    }

    /// Critic ascent on the mean masked lower bound over all chain pairs.
    fn critic_step(&mut self, values: &ChainValues, anchors: &[Option<Tensor<f32>>; 2]) -> Result<f64> {
        let g = Graph::new();
        let cvars = self.critic.params().bind(&g, true);
        let anchor_emb = self.embed_anchors(&g, &cvars, anchors)?;
        let mut lowers = Vec::new();
        for start in DOMAINS {
            let states: Vec<Var> = values[domain_index(start)]
                .iter()
                .map(|t| g.constant(t.clone()))
                .collect();
            lowers.extend(self.bounds_on(&g, &cvars, &states, start, &anchor_emb)?.lower);
        }
        let n = lowers.len();
        let mut sum = lowers[0];
        for &l in &lowers[1..] {
            sum = g.add(sum, l)?;
        }
        let mean = g.scale(sum, 1.0 / n as f32);
        let value = g.value(mean).item() as f64;
        if !value.is_finite() {
            return Err(McmiError::NonFinite("critic lower bound".into()));
        }
        let neg = g.scale(mean, -1.0);
        let mut grads = g.backward(neg)?;
        let cgrads = self.critic.params().collect_grads(&cvars, &mut grads);
        self.opt_critic.step(self.critic.params_mut(), &cgrads)?;
        Ok(value)
    }

    fn check_batch(&self, b: &ImageBatch) -> Result<Tensor<f32>> {
        self.config.backbone.geometry.check(b.tensor())?;
        if b.len() != self.config.i2i_batch_size {
            return Err(invalid(format!(
                "expected a batch of {}, got {}",
                self.config.i2i_batch_size,
                b.len()
            )));
        }
        Ok(b.to_signed().into_tensor())
    }

    /// One alternating step: generators, discriminators, then the critic.
    ///
    /// The critic sees detached chain states and the translation model sees a
    /// frozen critic, so neither update leaks into the other's parameters.
    pub fn train_step(&mut self, batch_x: &ImageBatch, batch_y: &ImageBatch) -> Result<StepOutput> {
        let bx = self.check_batch(batch_x)?;
        let by = self.check_batch(batch_y)?;
        let anchors = self.sample_anchors()?;
        let (reports, values) = self.generator_step([&bx, &by], &anchors)?;
        let disc_loss = self.discriminator_step([&bx, &by], &values)?;
        let mut critic_lower = 0.0;
        for _ in 0..self.config.critic_steps {
            critic_lower = self.critic_step(&values, &anchors)?;
        }
        self.pools[0].push_real(batch_x)?;
        self.pools[1].push_real(batch_y)?;
        for start in DOMAINS {
            let first = ImageBatch::signed(values[domain_index(start)][1].clone())?;
            self.pools[domain_index(start.other())].push_generated(&first)?;
        }
        self.step += 1;
        Ok(StepOutput {
            step: self.step,
            reports,
            critic_lower,
            disc_loss,
        })
    }

    /// Critic-only update on chains of the current (frozen) translation model.
    pub fn critic_only_step(&mut self, batch_x: &ImageBatch, batch_y: &ImageBatch) -> Result<f64> {
        let bx = ImageBatch::signed(self.check_batch(batch_x)?)?;
        let by = ImageBatch::signed(self.check_batch(batch_y)?)?;
        let anchors = self.sample_anchors()?;
        let mut values: ChainValues = [Vec::new(), Vec::new()];
        for (start, b) in [(Domain::X, &bx), (Domain::Y, &by)] {
            let chain = run_chain(&self.backbone, b, start, &self.config.mcmi)?;
            values[domain_index(start)] = chain.states().iter().map(|s| s.tensor().clone()).collect();
        }
        self.critic_step(&values, &anchors)
    }

    /// Mean full-batch lower bound over every chain pair of both directions.
    ///
    /// Row `i` of `x` and `y` need not be related; each chain pairs its own
    /// input with its own states.
    pub fn heldout_lower(&self, x: &ImageBatch, y: &ImageBatch) -> Result<f64> {
        if x.len() < 2 || y.len() < 2 {
            return Err(invalid("held-out estimate needs at least two images per domain"));
        }
        let mut total = 0.0;
        let mut count = 0;
        for (start, b) in [(Domain::X, x), (Domain::Y, y)] {
            let chain = run_chain(&self.backbone, b, start, &self.config.mcmi)?;
            for k in 1..chain.len() {
                total += infonce_lower(&self.critic.score_matrix(chain.state(0), chain.state(k))?)?;
                count += 1;
            }
        }
        Ok(total / count as f64)
    }
}
