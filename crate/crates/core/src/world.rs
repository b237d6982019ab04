//! Analytic (condition, data) worlds with closed-form marginals.
//!
//! Two families are supported. In the correlated Gaussian world every
//! dimension of `(z, p)` is an independent standard bivariate normal pair with
//! correlation `rho`; the condition is the vector `p`. In the labeled mixture
//! world the condition is a label `c` and `z0 | c ~ N(mu_c, sigma^2 I)` with an
//! equal-weight unconditional mixture. Densities, oracles and the reference MI
//! describe this clean world; `label_noise` only corrupts the training pairs
//! returned by [`GaussianWorld::sample_joint`].

use std::f64::consts::PI;
use std::path::Path;

use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::denoiser::Condition;
use crate::error::{Error, Result};
use crate::schedule::NoiseSchedule;
use crate::seed::{self, Rng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum WorldKind {
    CorrelatedGaussian,
    #[default]
    LabeledMixture,
}

/// Config-level description of a world.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WorldParams {
    pub kind: WorldKind,
    pub dim: usize,
    pub rho: f64,
    pub num_labels: usize,
    pub data_sigma: f64,
    /// Distance of each mixture mean from the origin.
    pub mean_radius: f64,
    pub label_noise: f64,
    /// Explicit means; overrides the regular layout when present.
    pub means: Option<Vec<Vec<f64>>>,
}

impl Default for WorldParams {
    fn default() -> Self {
        Self {
            kind: WorldKind::LabeledMixture,
            dim: 2,
            rho: 0.5,
            num_labels: 4,
            data_sigma: 0.3,
            mean_radius: 2.0,
            label_noise: 0.3,
            means: None,
        }
    }
}

impl WorldParams {
    pub fn build(&self) -> Result<GaussianWorld> {
        match self.kind {
            WorldKind::CorrelatedGaussian => GaussianWorld::correlated(self.dim, self.rho),
            WorldKind::LabeledMixture => {
                let means = match &self.means {
                    Some(m) => m.clone(),
                    None => regular_means(self.dim, self.num_labels, self.mean_radius)?,
                };
                GaussianWorld::mixture(means, self.data_sigma, self.label_noise)
            }
        }
    }
}

/// Means on a circle in the first two coordinates (or evenly on a line when
/// `dim == 1`).
pub fn regular_means(dim: usize, num_labels: usize, radius: f64) -> Result<Vec<Vec<f64>>> {
    if dim == 0 || num_labels == 0 {
        return Err(Error::InvalidParameter(
            "mixture needs dim >= 1 and num_labels >= 1".into(),
        ));
    }
    Ok((0..num_labels)
        .map(|c| {
            let mut mu = vec![0.0; dim];
            if dim == 1 {
                if num_labels > 1 {
                    mu[0] = radius * (2.0 * c as f64 / (num_labels - 1) as f64 - 1.0);
                }
            } else {
                let angle = 2.0 * PI * c as f64 / num_labels as f64;
                mu[0] = radius * angle.cos();
                mu[1] = radius * angle.sin();
            }
            mu
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub enum WorldMode {
    CorrelatedGaussian {
        rho: f64,
    },
    LabeledMixture {
        means: Vec<Vec<f64>>,
        data_sigma: f64,
        label_noise: f64,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianWorld {
    dim: usize,
    mode: WorldMode,
}

/// Reference MI in nats with its Monte Carlo standard error (zero when exact).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MiReference {
    pub value: f64,
    pub stderr: f64,
    pub samples: usize,
}

/// Isotropic Gaussian component of a step-`t` marginal.
struct Component<'a> {
    log_weight: f64,
    mean: &'a [f64],
    mean_scale: f64,
}

impl GaussianWorld {
    pub fn correlated(dim: usize, rho: f64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidParameter("dim must be positive".into()));
        }
        if !(rho.is_finite() && rho > -1.0 && rho < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "rho must lie in (-1, 1), got {rho}"
            )));
        }
        Ok(Self {
            dim,
            mode: WorldMode::CorrelatedGaussian { rho },
        })
    }

    pub fn mixture(means: Vec<Vec<f64>>, data_sigma: f64, label_noise: f64) -> Result<Self> {
        let dim = means.first().map(Vec::len).unwrap_or(0);
        if dim == 0 {
            return Err(Error::InvalidParameter(
                "mixture needs at least one non-empty mean".into(),
            ));
        }
        if means.iter().any(|m| m.len() != dim) {
            return Err(Error::InvalidParameter(
                "mixture means have inconsistent dimensions".into(),
            ));
        }
        if !(data_sigma.is_finite() && data_sigma > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "data_sigma must be positive, got {data_sigma}"
            )));
        }
        if !(0.0..1.0).contains(&label_noise) {
            return Err(Error::InvalidParameter(format!(
                "label_noise must lie in [0, 1), got {label_noise}"
            )));
        }
        if means.len() == 1 && label_noise > 0.0 {
            return Err(Error::InvalidParameter(
                "label noise needs at least two labels".into(),
            ));
        }
        Ok(Self {
            dim,
            mode: WorldMode::LabeledMixture {
                means,
                data_sigma,
                label_noise,
            },
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn mode(&self) -> &WorldMode {
        &self.mode
    }

    pub fn num_labels(&self) -> Option<usize> {
        match &self.mode {
            WorldMode::LabeledMixture { means, .. } => Some(means.len()),
            _ => None,
        }
    }

    pub fn means(&self) -> Option<&[Vec<f64>]> {
        match &self.mode {
            WorldMode::LabeledMixture { means, .. } => Some(means),
            _ => None,
        }
    }

    /// Index of the closest mixture mean (ties go to the lower index).
    pub fn nearest_mean(&self, z: &[f64]) -> Option<usize> {
        let means = self.means()?;
        let mut best = (0, f64::INFINITY);
        for (k, mu) in means.iter().enumerate() {
            let d = sq_dist(z, mu);
            if d < best.1 {
                best = (k, d);
            }
        }
        Some(best.0)
    }

    fn check_cond(&self, cond: &Condition) -> Result<()> {
        match (&self.mode, cond) {
            (_, Condition::Null) => Ok(()),
            (WorldMode::CorrelatedGaussian { .. }, Condition::Vector(p)) => {
                if p.len() == self.dim {
                    Ok(())
                } else {
                    Err(Error::DimensionMismatch {
                        expected: self.dim,
                        got: p.len(),
                    })
                }
            }
            (WorldMode::LabeledMixture { means, .. }, Condition::Label(c)) => {
                if *c < means.len() {
                    Ok(())
                } else {
                    Err(Error::InvalidParameter(format!(
                        "label {c} out of range for {} labels",
                        means.len()
                    )))
                }
            }
            (WorldMode::CorrelatedGaussian { .. }, _) => Err(Error::InvalidParameter(
                "correlated world expects a vector condition".into(),
            )),
            (WorldMode::LabeledMixture { .. }, _) => Err(Error::InvalidParameter(
                "mixture world expects a label condition".into(),
            )),
        }
    }

    fn check_dim(&self, z: &[f64]) -> Result<()> {
        if z.len() == self.dim {
            Ok(())
        } else {
            Err(Error::DimensionMismatch {
                expected: self.dim,
                got: z.len(),
            })
        }
    }

    /// `n` independent draws from the joint, label noise included.
    pub fn sample_joint(&self, n: usize, seed: u64) -> Vec<(Condition, Vec<f64>)> {
        let mut rng = seed::rng(seed);
        (0..n).map(|_| self.draw_joint(&mut rng)).collect()
    }

    pub fn draw_joint(&self, rng: &mut Rng) -> (Condition, Vec<f64>) {
        match &self.mode {
            WorldMode::CorrelatedGaussian { rho } => {
                let p = standard_normal(rng, self.dim);
                let z = self.draw_correlated(&p, *rho, rng);
                (Condition::Vector(p), z)
            }
            WorldMode::LabeledMixture {
                means,
                data_sigma,
                label_noise,
            } => {
                let c = means.len();
                let truth = rng.random_range(0..c);
                let z = draw_isotropic(&means[truth], *data_sigma, rng);
                let mut observed = truth;
                if c > 1 && rng.random::<f64>() < *label_noise {
                    let offset = rng.random_range(1..c);
                    observed = (truth + offset) % c;
                }
                (Condition::Label(observed), z)
            }
        }
    }

    /// A draw from `q(z0 | cond)`.
    pub fn sample_conditional(&self, cond: &Condition, rng: &mut Rng) -> Result<Vec<f64>> {
        self.check_cond(cond)?;
        Ok(match (&self.mode, cond) {
            (WorldMode::CorrelatedGaussian { .. }, Condition::Null) => {
                standard_normal(rng, self.dim)
            }
            (WorldMode::CorrelatedGaussian { rho }, Condition::Vector(p)) => {
                self.draw_correlated(p, *rho, rng)
            }
            (
                WorldMode::LabeledMixture {
                    means, data_sigma, ..
                },
                cond,
            ) => {
                let k = match cond {
                    Condition::Label(c) => *c,
                    _ => rng.random_range(0..means.len()),
                };
                draw_isotropic(&means[k], *data_sigma, rng)
            }
            _ => unreachable!("validated by check_cond"),
        })
    }

    fn draw_correlated(&self, p: &[f64], rho: f64, rng: &mut Rng) -> Vec<f64> {
        let s = (1.0 - rho * rho).sqrt();
        p.iter()
            .map(|pi| {
                let xi: f64 = StandardNormal.sample(rng);
                rho * pi + s * xi
            })
            .collect()
    }

    /// Mixture components of `q_t(z | cond)` given `abar = alpha_bar_t`
    /// (`abar = 1` is clean data). Returns the components and their common
    /// per-dimension variance.
    fn components<'a>(&'a self, cond: &'a Condition, abar: f64) -> (Vec<Component<'a>>, f64) {
        let root = abar.sqrt();
        match (&self.mode, cond) {
            (WorldMode::CorrelatedGaussian { .. }, Condition::Null) => (
                vec![Component {
                    log_weight: 0.0,
                    mean: &[],
                    mean_scale: 0.0,
                }],
                1.0,
            ),
            (WorldMode::CorrelatedGaussian { rho }, Condition::Vector(p)) => (
                vec![Component {
                    log_weight: 0.0,
                    mean: p,
                    mean_scale: root * rho,
                }],
                1.0 - abar * rho * rho,
            ),
            (
                WorldMode::LabeledMixture {
                    means, data_sigma, ..
                },
                cond,
            ) => {
                let var = abar * data_sigma * data_sigma + (1.0 - abar);
                let uniform = -(means.len() as f64).ln();
                let comps = means
                    .iter()
                    .enumerate()
                    .filter_map(|(k, mu)| {
                        let log_weight = match cond {
                            Condition::Label(c) if *c != k => return None,
                            Condition::Label(_) => 0.0,
                            _ => uniform,
                        };
                        Some(Component {
                            log_weight,
                            mean: mu,
                            mean_scale: root,
                        })
                    })
                    .collect();
                (comps, var)
            }
            _ => unreachable!("validated by check_cond"),
        }
    }

    /// Log-density and score of the step marginal with `abar = alpha_bar_t`.
    pub fn log_density_and_score(
        &self,
        z: &[f64],
        cond: &Condition,
        abar: f64,
    ) -> Result<(f64, Vec<f64>)> {
        self.check_dim(z)?;
        self.check_cond(cond)?;
        let (comps, var) = self.components(cond, abar);
        let d = self.dim as f64;
        let norm = -0.5 * d * (2.0 * PI * var).ln();
        let mut logs = Vec::with_capacity(comps.len());
        let mut diffs = Vec::with_capacity(comps.len());
        for comp in &comps {
            let diff: Vec<f64> = if comp.mean.is_empty() {
                z.to_vec()
            } else {
                z.iter()
                    .zip(comp.mean)
                    .map(|(zi, mi)| zi - comp.mean_scale * mi)
                    .collect()
            };
            let sq: f64 = diff.iter().map(|x| x * x).sum();
            logs.push(comp.log_weight + norm - 0.5 * sq / var);
            diffs.push(diff);
        }
        let max = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let total: f64 = logs.iter().map(|l| (l - max).exp()).sum();
        let log_density = max + total.ln();
        let mut score = vec![0.0; self.dim];
        for (l, diff) in logs.iter().zip(&diffs) {
            let r = (l - log_density).exp();
            for (s, x) in score.iter_mut().zip(diff) {
                *s -= r * x / var;
            }
        }
        Ok((log_density, score))
    }

    pub fn log_density(&self, z: &[f64], cond: &Condition, abar: f64) -> Result<f64> {
        Ok(self.log_density_and_score(z, cond, abar)?.0)
    }

    /// Bayes-optimal noise prediction `-sqrt(1 - abar_t) * grad log q_t(z_t | cond)`.
    pub fn optimal_eps(
        &self,
        z_t: &[f64],
        cond: &Condition,
        schedule: &NoiseSchedule,
        t: usize,
    ) -> Result<Vec<f64>> {
        schedule.check_step(t)?;
        let abar = schedule.alpha_bar(t);
        let (_, score) = self.log_density_and_score(z_t, cond, abar)?;
        let s = (1.0 - abar).sqrt();
        Ok(score.into_iter().map(|g| -s * g).collect())
    }

    /// Point-wise log-likelihood ratio `log q(z0 | cond) - log q(z0)`.
    pub fn log_likelihood_ratio(&self, z0: &[f64], cond: &Condition) -> Result<f64> {
        Ok(self.log_density(z0, cond, 1.0)? - self.log_density(z0, &Condition::Null, 1.0)?)
    }

    /// Exact MI in nats, available for the correlated Gaussian world.
    pub fn closed_form_mi(&self) -> Option<f64> {
        match &self.mode {
            WorldMode::CorrelatedGaussian { rho } => {
                Some(-0.5 * self.dim as f64 * (1.0 - rho * rho).ln())
            }
            _ => None,
        }
    }

    /// Exact MI when available, otherwise a Monte Carlo average of the
    /// log-likelihood ratio over `n` noiseless joint draws.
    pub fn reference_mi(&self, n: usize, seed: u64) -> MiReference {
        if let Some(value) = self.closed_form_mi() {
            return MiReference {
                value,
                stderr: 0.0,
                samples: 0,
            };
        }
        let mut rng = seed::rng(seed);
        let mut stats = crate::stats::Running::default();
        let labels = self.num_labels().unwrap_or(1);
        for _ in 0..n {
            let cond = Condition::Label(rng.random_range(0..labels));
            let z = self
                .sample_conditional(&cond, &mut rng)
                .expect("label in range");
            let llr = self
                .log_likelihood_ratio(&z, &cond)
                .expect("joint draws are well formed");
            stats.push(llr);
        }
        MiReference {
            value: stats.mean(),
            stderr: stats.stderr(),
            samples: n,
        }
    }

    /// Writes `(label, z_1, ..., z_d)` rows. Vector conditions are written as
    /// `[p_1;...;p_d]`.
    pub fn dump_samples(&self, path: &Path, samples: &[(Condition, Vec<f64>)]) -> Result<()> {
        let mut header = vec!["label".to_string()];
        header.extend((0..self.dim).map(|i| format!("z{i}")));
        let mut w = crate::io::CsvTable::create(path, "samples", &header)?;
        for (cond, z) in samples {
            let mut row = vec![cond.to_string()];
            row.extend(z.iter().map(|x| x.to_string()));
            w.row(&row)?;
        }
        w.finish()
    }
}

fn standard_normal(rng: &mut Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| StandardNormal.sample(rng)).collect()
}

fn draw_isotropic(mean: &[f64], sigma: f64, rng: &mut Rng) -> Vec<f64> {
    mean.iter()
        .map(|m| {
            let xi: f64 = StandardNormal.sample(rng);
            m + sigma * xi
        })
        .collect()
}

pub(crate) fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}
