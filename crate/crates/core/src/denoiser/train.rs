//! The simple denoising objective and a generic training loop.

use std::path::Path;

use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::mlp::{Linear, MlpDenoiser, MlpGrads};
use super::optim::{AdamW, AdamWParams};
use super::{Condition, Denoiser};
use crate::error::{Error, Result};
use crate::io::CsvTable;
use crate::schedule::NoiseSchedule;
use crate::seed::{self, stream, Rng};
use crate::world::GaussianWorld;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub iterations: usize,
    /// Probability of replacing a condition by `Null` during training.
    pub p_drop: f64,
    /// Inclusive timestep window; `None` means 1 and `T` respectively.
    pub t_lo: Option<usize>,
    pub t_hi: Option<usize>,
    pub grad_clip: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub weight_decay: f64,
    pub adam_eps: f64,
    pub seed: u64,
    pub validation_size: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            batch_size: 128,
            iterations: 2000,
            p_drop: 0.1,
            t_lo: None,
            t_hi: None,
            grad_clip: 1.0,
            beta1: 0.9,
            beta2: 0.999,
            weight_decay: 1e-2,
            adam_eps: 1e-8,
            seed: 0,
            validation_size: 512,
        }
    }
}

impl TrainConfig {
    pub fn window(&self, steps: usize) -> Result<(usize, usize)> {
        let lo = self.t_lo.unwrap_or(1);
        let hi = self.t_hi.unwrap_or(steps);
        if lo < 1 || lo > hi || hi > steps {
            return Err(Error::InvalidParameter(format!(
                "timestep window [{lo}, {hi}] must satisfy 1 <= t_lo <= t_hi <= {steps}"
            )));
        }
        Ok((lo, hi))
    }

    pub fn validate(&self, steps: usize) -> Result<()> {
        self.window(steps)?;
        if !(0.0..1.0).contains(&self.p_drop) {
            return Err(Error::InvalidParameter(format!(
                "p_drop must lie in [0, 1), got {}",
                self.p_drop
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidParameter("batch_size must be positive".into()));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::InvalidParameter("learning_rate must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::InvalidParameter("optimizer betas must lie in [0, 1)".into()));
        }
        Ok(())
    }

    pub fn adamw(&self) -> AdamWParams {
        AdamWParams {
            learning_rate: self.learning_rate,
            beta1: self.beta1,
            beta2: self.beta2,
            weight_decay: self.weight_decay,
            eps: self.adam_eps,
            grad_clip: self.grad_clip,
        }
    }
}

/// The random quantities of one objective evaluation, fixed up front so the
/// same loss can be re-evaluated (finite differences, validation).
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseDraw {
    pub t: usize,
    pub eps: Vec<f64>,
    pub drop_cond: bool,
}

pub fn draw_noise(
    n: usize,
    dim: usize,
    window: (usize, usize),
    p_drop: f64,
    rng: &mut Rng,
) -> Vec<NoiseDraw> {
    (0..n)
        .map(|_| {
            let t = rng.random_range(window.0..=window.1);
            let eps = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
            let drop_cond = p_drop > 0.0 && rng.random::<f64>() < p_drop;
            NoiseDraw { t, eps, drop_cond }
        })
        .collect()
}

pub type Example = (Condition, Vec<f64>);

/// Where training examples come from.
#[derive(Debug, Clone, Copy)]
pub enum DataSource<'a> {
    /// Fresh joint draws every batch.
    World(&'a GaussianWorld),
    /// Uniform sampling with replacement from a fixed set.
    Dataset(&'a [Example]),
}

impl DataSource<'_> {
    pub fn batch(&self, n: usize, rng: &mut Rng) -> Result<Vec<Example>> {
        match self {
            DataSource::World(w) => Ok((0..n).map(|_| w.draw_joint(rng)).collect()),
            DataSource::Dataset(items) => {
                if items.is_empty() {
                    return Err(Error::Empty("training set"));
                }
                Ok((0..n)
                    .map(|_| items[rng.random_range(0..items.len())].clone())
                    .collect())
            }
        }
    }
}

/// A model trainable on the simple denoising objective.
pub trait Trainable {
    fn steps(&self) -> usize;

    fn data_dim(&self) -> usize;

    /// Batch-mean of `||eps - eps_hat||^2` and its gradient per trainable
    /// parameter group.
    fn loss_and_grads(
        &self,
        batch: &[Example],
        draws: &[NoiseDraw],
        schedule: &NoiseSchedule,
    ) -> Result<(f64, Vec<Vec<f64>>)>;

    fn loss(&self, batch: &[Example], draws: &[NoiseDraw], schedule: &NoiseSchedule) -> Result<f64>;

    fn trainable_groups_mut(&mut self) -> Vec<&mut [f64]>;
}

/// Objective and gradients for `net` evaluated with `layers` in place of its
/// own layers (adapted layers share shapes). Embedding gradients are only
/// accumulated when `embedding_grad` is set.
pub(crate) fn mlp_objective(
    net: &MlpDenoiser,
    layers: &[Linear],
    batch: &[Example],
    draws: &[NoiseDraw],
    schedule: &NoiseSchedule,
    embedding_grad: bool,
) -> Result<(f64, MlpGrads)> {
    if batch.is_empty() {
        return Err(Error::Empty("batch"));
    }
    assert_eq!(batch.len(), draws.len(), "one noise draw per example");
    let mut grads = MlpGrads {
        embedding: vec![0.0; if embedding_grad { net.embedding.len() } else { 0 }],
        layers: layers
            .iter()
            .map(|l| Linear::zeros(l.in_dim, l.out_dim))
            .collect(),
    };
    let scale = 1.0 / batch.len() as f64;
    let mut total = 0.0;
    for ((cond, z0), draw) in batch.iter().zip(draws) {
        let cond = if draw.drop_cond { &Condition::Null } else { cond };
        let z_t = schedule.noise(z0, &draw.eps, draw.t);
        let input = net.input_features(&z_t, cond, draw.t)?;
        let trace = net.forward_trace(layers, input);
        let out = trace.output();
        let mut d_out = Vec::with_capacity(out.len());
        for (o, e) in out.iter().zip(&draw.eps) {
            let r = o - e;
            total += r * r;
            d_out.push(2.0 * scale * r);
        }
        let d_in = net.backward_trace(layers, &trace, &d_out, &mut grads.layers);
        if embedding_grad {
            net.accumulate_embedding_grad(cond, &d_in, &mut grads.embedding);
        }
    }
    Ok((total * scale, grads))
}

pub(crate) fn denoiser_objective<D: Denoiser + ?Sized>(
    net: &D,
    batch: &[Example],
    draws: &[NoiseDraw],
    schedule: &NoiseSchedule,
) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::Empty("batch"));
    }
    let mut total = 0.0;
    for ((cond, z0), draw) in batch.iter().zip(draws) {
        let cond = if draw.drop_cond { &Condition::Null } else { cond };
        let z_t = schedule.noise(z0, &draw.eps, draw.t);
        let out = net.eval_eps(&z_t, cond, draw.t)?;
        total += out
            .iter()
            .zip(&draw.eps)
            .map(|(o, e)| (o - e) * (o - e))
            .sum::<f64>();
    }
    Ok(total / batch.len() as f64)
}

impl Trainable for MlpDenoiser {
    fn steps(&self) -> usize {
        MlpDenoiser::steps(self)
    }

    fn data_dim(&self) -> usize {
        self.config().data_dim
    }

    fn loss_and_grads(
        &self,
        batch: &[Example],
        draws: &[NoiseDraw],
        schedule: &NoiseSchedule,
    ) -> Result<(f64, Vec<Vec<f64>>)> {
        let (loss, grads) = mlp_objective(self, &self.layers, batch, draws, schedule, true)?;
        Ok((loss, grads.into_groups()))
    }

    fn loss(&self, batch: &[Example], draws: &[NoiseDraw], schedule: &NoiseSchedule) -> Result<f64> {
        denoiser_objective(self, batch, draws, schedule)
    }

    fn trainable_groups_mut(&mut self) -> Vec<&mut [f64]> {
        self.param_groups_mut()
    }
}

/// One evaluation of the simple objective with fresh noise from `rng`.
pub fn loss_simple(
    net: &MlpDenoiser,
    batch: &[Example],
    schedule: &NoiseSchedule,
    cfg: &TrainConfig,
    rng: &mut Rng,
) -> Result<(f64, MlpGrads)> {
    if batch.is_empty() {
        return Err(Error::Empty("batch"));
    }
    let window = cfg.window(schedule.steps())?;
    let draws = draw_noise(batch.len(), net.config().data_dim, window, cfg.p_drop, rng);
    mlp_objective(net, &net.layers, batch, &draws, schedule, true)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    /// Training loss per iteration.
    pub losses: Vec<f64>,
    pub validation_initial: f64,
    pub validation_final: f64,
    /// Validation loss with every condition replaced by `Null`.
    pub unconditional_initial: f64,
    pub unconditional_final: f64,
}

impl TrainReport {
    pub fn write_loss_csv(&self, path: &Path) -> Result<()> {
        let mut t = CsvTable::create(path, "loss", &["iteration", "loss"])?;
        for (i, l) in self.losses.iter().enumerate() {
            t.row(&[(i + 1).to_string(), l.to_string()])?;
        }
        t.finish()
    }
}

/// Runs `cfg.iterations` AdamW steps on `model`.
pub fn fit<M: Trainable>(
    model: &mut M,
    data: DataSource<'_>,
    schedule: &NoiseSchedule,
    cfg: &TrainConfig,
) -> Result<TrainReport> {
    if schedule.steps() != model.steps() {
        return Err(Error::InvalidParameter(format!(
            "schedule has {} steps but the model expects {}",
            schedule.steps(),
            model.steps()
        )));
    }
    cfg.validate(schedule.steps())?;
    let window = cfg.window(schedule.steps())?;
    let dim = model.data_dim();

    let mut val_rng = seed::rng(seed::derive(cfg.seed, &[stream::VALIDATION]));
    let val_size = cfg.validation_size.max(1);
    let val_batch = data.batch(val_size, &mut val_rng)?;
    let val_draws = draw_noise(val_size, dim, window, 0.0, &mut val_rng);
    let val_null: Vec<Example> = val_batch
        .iter()
        .map(|(_, z)| (Condition::Null, z.clone()))
        .collect();

    let validation_initial = model.loss(&val_batch, &val_draws, schedule)?;
    let unconditional_initial = model.loss(&val_null, &val_draws, schedule)?;

    let mut rng = seed::rng(seed::derive(cfg.seed, &[stream::TRAIN]));
    let sizes: Vec<usize> = model.trainable_groups_mut().iter().map(|g| g.len()).collect();
    let mut opt = AdamW::new(cfg.adamw(), &sizes);
    let mut losses = Vec::with_capacity(cfg.iterations);
    for iteration in 0..cfg.iterations {
        let batch = data.batch(cfg.batch_size, &mut rng)?;
        let draws = draw_noise(batch.len(), dim, window, cfg.p_drop, &mut rng);
        let (loss, grads) = model.loss_and_grads(&batch, &draws, schedule)?;
        if !loss.is_finite() || grads.iter().flatten().any(|g| !g.is_finite()) {
            return Err(Error::Diverged {
                iteration: iteration + 1,
                loss,
            });
        }
        let mut groups = model.trainable_groups_mut();
        opt.step(&mut groups, &grads);
        losses.push(loss);
    }

    let validation_final = model.loss(&val_batch, &val_draws, schedule)?;
    let unconditional_final = model.loss(&val_null, &val_draws, schedule)?;
    if !validation_final.is_finite() {
        return Err(Error::Diverged {
            iteration: cfg.iterations,
            loss: validation_final,
        });
    }
    Ok(TrainReport {
        losses,
        validation_initial,
        validation_final,
        unconditional_initial,
        unconditional_final,
    })
}

/// Trains every parameter of `net` (embeddings and layers).
pub fn train(
    net: &mut MlpDenoiser,
    data: DataSource<'_>,
    schedule: &NoiseSchedule,
    cfg: &TrainConfig,
) -> Result<TrainReport> {
    fit(net, data, schedule, cfg)
}
