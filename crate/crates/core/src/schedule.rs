//! Discrete-time variance schedules and the MI weighting coefficients.
//!
//! Steps are indexed `1..=T`; step 0 is clean data and has no table entry.
//! All tables are `f64` regardless of the precision used elsewhere.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleKind {
    #[default]
    Linear,
}

impl ScheduleKind {
    pub fn code(self) -> u8 {
        match self {
            ScheduleKind::Linear => 0,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(ScheduleKind::Linear),
            _ => None,
        }
    }
}

/// The parameters a schedule is derived from. Schedules themselves are never
/// serialized; only these four values are.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleParams {
    pub steps: usize,
    pub beta_start: f64,
    pub beta_end: f64,
    #[serde(default)]
    pub kind: ScheduleKind,
}

impl Default for ScheduleParams {
    fn default() -> Self {
        Self {
            steps: 1000,
            beta_start: 1e-4,
            beta_end: 0.02,
            kind: ScheduleKind::Linear,
        }
    }
}

impl ScheduleParams {
    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 {
            return Err(Error::InvalidParameter(
                "schedule steps must be positive".into(),
            ));
        }
        let ok = |b: f64| b.is_finite() && b > 0.0 && b < 1.0;
        if !ok(self.beta_start) || !ok(self.beta_end) {
            return Err(Error::InvalidParameter(format!(
                "beta bounds must lie in (0, 1): beta_start={}, beta_end={}",
                self.beta_start, self.beta_end
            )));
        }
        if self.beta_start > self.beta_end {
            return Err(Error::InvalidParameter(format!(
                "beta_start ({}) exceeds beta_end ({})",
                self.beta_start, self.beta_end
            )));
        }
        Ok(())
    }

    pub fn build(&self) -> Result<NoiseSchedule> {
        build_schedule(self.steps, self.beta_start, self.beta_end, self.kind)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSchedule {
    params: ScheduleParams,
    betas: Vec<f64>,
    alphas: Vec<f64>,
    alpha_bars: Vec<f64>,
    sigmas: Vec<f64>,
    kappas: Vec<f64>,
}

pub fn build_schedule(
    steps: usize,
    beta_start: f64,
    beta_end: f64,
    kind: ScheduleKind,
) -> Result<NoiseSchedule> {
    let params = ScheduleParams {
        steps,
        beta_start,
        beta_end,
        kind,
    };
    params.validate()?;
    let betas = match kind {
        ScheduleKind::Linear => linear_betas(steps, beta_start, beta_end),
    };
    let mut schedule = NoiseSchedule::from_betas(betas)?;
    schedule.params = params;
    Ok(schedule)
}

fn linear_betas(steps: usize, start: f64, end: f64) -> Vec<f64> {
    if steps == 1 {
        return vec![start];
    }
    let span = (steps - 1) as f64;
    (0..steps)
        .map(|i| {
            let frac = i as f64 / span;
            start + (end - start) * frac
        })
        .collect()
}

impl NoiseSchedule {
    /// Rebuilds every derived table from a raw beta sequence.
    pub fn from_betas(betas: Vec<f64>) -> Result<Self> {
        if betas.is_empty() {
            return Err(Error::InvalidParameter("empty beta sequence".into()));
        }
        if let Some((i, b)) = betas
            .iter()
            .enumerate()
            .find(|(_, &b)| !(b.is_finite() && b > 0.0 && b < 1.0))
        {
            return Err(Error::InvalidParameter(format!(
                "beta at step {} is {}, outside (0, 1)",
                i + 1,
                b
            )));
        }
        let steps = betas.len();
        let alphas: Vec<f64> = betas.iter().map(|b| 1.0 - b).collect();
        let mut alpha_bars = Vec::with_capacity(steps);
        let mut prod = 1.0;
        for a in &alphas {
            prod *= a;
            alpha_bars.push(prod);
        }
        let sigmas = betas.iter().map(|b| b.sqrt()).collect();
        let big_t = steps as f64;
        let kappas = betas
            .iter()
            .zip(&alphas)
            .zip(&alpha_bars)
            .map(|((b, a), ab)| b * big_t / (2.0 * a * (1.0 - ab)))
            .collect();
        let params = ScheduleParams {
            steps,
            beta_start: betas[0],
            beta_end: betas[steps - 1],
            kind: ScheduleKind::Linear,
        };
        Ok(Self {
            params,
            betas,
            alphas,
            alpha_bars,
            sigmas,
            kappas,
        })
    }

    pub fn params(&self) -> ScheduleParams {
        self.params
    }

    /// Number of diffusion steps `T`.
    pub fn steps(&self) -> usize {
        self.betas.len()
    }

    pub fn check_step(&self, t: usize) -> Result<()> {
        if t == 0 || t > self.steps() {
            Err(Error::StepOutOfRange {
                t,
                max: self.steps(),
            })
        } else {
            Ok(())
        }
    }

    pub fn kappa_at(&self, t: usize) -> Result<f64> {
        self.check_step(t)?;
        Ok(self.kappas[t - 1])
    }

    // Unchecked accessors; callers validate `t` once per loop.

    pub fn beta(&self, t: usize) -> f64 {
        self.betas[t - 1]
    }

    pub fn alpha(&self, t: usize) -> f64 {
        self.alphas[t - 1]
    }

    pub fn alpha_bar(&self, t: usize) -> f64 {
        self.alpha_bars[t - 1]
    }

    pub fn sigma(&self, t: usize) -> f64 {
        self.sigmas[t - 1]
    }

    pub fn kappa(&self, t: usize) -> f64 {
        self.kappas[t - 1]
    }

    pub fn betas(&self) -> &[f64] {
        &self.betas
    }

    pub fn alphas(&self) -> &[f64] {
        &self.alphas
    }

    pub fn alpha_bars(&self) -> &[f64] {
        &self.alpha_bars
    }

    pub fn sigmas(&self) -> &[f64] {
        &self.sigmas
    }

    pub fn kappas(&self) -> &[f64] {
        &self.kappas
    }

    /// Forward noising `z_t = sqrt(abar_t) z0 + sqrt(1 - abar_t) eps`.
    pub fn noise(&self, z0: &[f64], eps: &[f64], t: usize) -> Vec<f64> {
        let ab = self.alpha_bar(t);
        let (a, b) = (ab.sqrt(), (1.0 - ab).sqrt());
        z0.iter().zip(eps).map(|(z, e)| a * z + b * e).collect()
    }
}
