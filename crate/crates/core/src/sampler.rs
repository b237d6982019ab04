//! Ancestral DDPM sampling with classifier-free guidance.

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::denoiser::{Condition, Denoiser};
use crate::error::{Error, Result};
use crate::schedule::NoiseSchedule;
use crate::seed::{self, Rng};

/// Which noise-prediction difference the fused MI loop accumulates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum MiTerm {
    /// `eps(z, p) - eps(z, null)`, independent of the guidance scale.
    #[default]
    Conditional,
    /// `guided - eps(z, null)`, i.e. the conditional difference times gamma.
    Guided,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplerConfig {
    pub guidance: f64,
    pub seed: u64,
    pub mi_term: MiTerm,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            guidance: 2.0,
            seed: 0,
            mi_term: MiTerm::Conditional,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.guidance.is_finite() && self.guidance >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "guidance scale must be a non-negative number, got {}",
                self.guidance
            )));
        }
        Ok(())
    }

    pub fn with_seed(self, seed: u64) -> Self {
        Self { seed, ..self }
    }
}

/// `eps_null + gamma * (eps_cond - eps_null)`, with the `gamma in {0, 1}`
/// endpoints returned verbatim.
pub fn combine(eps_cond: &[f64], eps_null: &[f64], gamma: f64) -> Vec<f64> {
    if gamma == 1.0 {
        return eps_cond.to_vec();
    }
    if gamma == 0.0 {
        return eps_null.to_vec();
    }
    eps_null
        .iter()
        .zip(eps_cond)
        .map(|(u, c)| u + gamma * (c - u))
        .collect()
}

pub fn guided_eps<D: Denoiser + ?Sized>(
    net: &D,
    z_t: &[f64],
    cond: &Condition,
    t: usize,
    gamma: f64,
) -> Result<Vec<f64>> {
    if cond.is_null() || gamma == 0.0 {
        return net.eval_eps(z_t, &Condition::Null, t);
    }
    if gamma == 1.0 {
        return net.eval_eps(z_t, cond, t);
    }
    let (c, u) = net.eval_pair(z_t, cond, t)?;
    Ok(combine(&c, &u, gamma))
}

/// `z_{t-1} = (z_t - beta_t / sqrt(1 - abar_t) * eps_hat) / sqrt(alpha_t) + sigma_t * w`.
pub fn ddpm_step(
    z_t: &[f64],
    t: usize,
    eps_hat: &[f64],
    w: &[f64],
    schedule: &NoiseSchedule,
) -> Result<Vec<f64>> {
    schedule.check_step(t)?;
    for len in [eps_hat.len(), w.len()] {
        if len != z_t.len() {
            return Err(Error::DimensionMismatch {
                expected: z_t.len(),
                got: len,
            });
        }
    }
    let alpha = schedule.alpha(t);
    let coef = (1.0 - alpha) / (1.0 - schedule.alpha_bar(t)).sqrt();
    let inv = 1.0 / alpha.sqrt();
    let sigma = schedule.sigma(t);
    Ok(z_t
        .iter()
        .zip(eps_hat)
        .zip(w)
        .map(|((z, e), wi)| inv * (z - coef * e) + sigma * wi)
        .collect())
}

pub(crate) fn standard_normal(rng: &mut Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| StandardNormal.sample(rng)).collect()
}

/// Reverse-step noise: fresh normal for `t > 1`, zero at the last step.
pub(crate) fn step_noise(rng: &mut Rng, dim: usize, t: usize) -> Vec<f64> {
    if t > 1 {
        standard_normal(rng, dim)
    } else {
        vec![0.0; dim]
    }
}

pub(crate) fn check_finite(z: &[f64], t: usize) -> Result<()> {
    if z.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(format!(
            "sampler state became non-finite at step {t}: {z:?}"
        )))
    }
}

/// Runs the full reverse chain from `z_T ~ N(0, I)`.
pub fn generate<D: Denoiser + ?Sized>(
    net: &D,
    cond: &Condition,
    schedule: &NoiseSchedule,
    cfg: &SamplerConfig,
) -> Result<Vec<f64>> {
    cfg.validate()?;
    let dim = net.data_dim();
    let mut rng = seed::rng(cfg.seed);
    let mut z = standard_normal(&mut rng, dim);
    for t in (1..=schedule.steps()).rev() {
        let eps = guided_eps(net, &z, cond, t, cfg.guidance)?;
        let w = step_noise(&mut rng, dim, t);
        z = ddpm_step(&z, t, &eps, &w, schedule)?;
        check_finite(&z, t)?;
    }
    Ok(z)
}
