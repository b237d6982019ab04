//! Point-wise mutual information estimation.
//!
//! Both estimators average `kappa_t * |eps(z_t, p, t) - eps(z_t, null, t)|^2`
//! over diffusion steps. [`pointwise_mi_generate`] does so along the reverse
//! trajectory that produces the sample, dividing the sum over all `T` steps by
//! `T`; [`pointwise_mi_forward`] forward-noises a given sample at uniformly
//! drawn steps. Values are in nats and never negative.

use rand::Rng as _;

use crate::denoiser::{Condition, Denoiser};
use crate::error::{Error, Result};
use crate::sampler::{self, MiTerm, SamplerConfig};
use crate::schedule::NoiseSchedule;
use crate::seed;
use crate::stats::Running;

#[derive(Debug, Clone, PartialEq)]
pub struct MiEstimate {
    /// Nats.
    pub value: f64,
    /// Contribution of each step `t = 1..=T` (index `t - 1`); sums to `value`.
    pub per_step: Vec<f64>,
    pub n_trajectories: usize,
    /// Standard error across trajectories or Monte Carlo draws, when more
    /// than one was taken.
    pub stderr: Option<f64>,
}

impl MiEstimate {
    pub fn per_step_sum(&self) -> f64 {
        self.per_step.iter().sum()
    }

    /// Averages independent estimates; `stderr` is taken across their values.
    pub fn aggregate(estimates: &[MiEstimate]) -> Result<MiEstimate> {
        let first = estimates.first().ok_or(Error::Empty("estimates"))?;
        let steps = first.per_step.len();
        let mut per_step = vec![0.0; steps];
        let mut stats = Running::default();
        for e in estimates {
            if e.per_step.len() != steps {
                return Err(Error::DimensionMismatch {
                    expected: steps,
                    got: e.per_step.len(),
                });
            }
            stats.push(e.value);
            for (a, b) in per_step.iter_mut().zip(&e.per_step) {
                *a += b;
            }
        }
        let n = estimates.len() as f64;
        per_step.iter_mut().for_each(|v| *v /= n);
        Ok(MiEstimate {
            value: stats.mean(),
            per_step,
            n_trajectories: estimates.iter().map(|e| e.n_trajectories).sum(),
            stderr: (estimates.len() > 1).then(|| stats.stderr()),
        })
    }
}

fn sq_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Generates one sample for `cond` and estimates its point-wise MI along the
/// same reverse trajectory.
///
/// The trajectory follows `cfg.guidance`; the MI term uses the unguided
/// conditional prediction unless `cfg.mi_term` is [`MiTerm::Guided`]. With the
/// same config and seed the returned sample equals
/// [`sampler::generate`]'s.
pub fn pointwise_mi_generate<D: Denoiser + ?Sized>(
    net: &D,
    cond: &Condition,
    schedule: &NoiseSchedule,
    cfg: &SamplerConfig,
) -> Result<(Vec<f64>, MiEstimate)> {
    cfg.validate()?;
    if cond.is_null() {
        return Err(Error::InvalidParameter(
            "point-wise MI needs a non-null condition".into(),
        ));
    }
    let steps = schedule.steps();
    let dim = net.data_dim();
    let mut rng = seed::rng(cfg.seed);
    let mut z = sampler::standard_normal(&mut rng, dim);
    let mut per_step = vec![0.0; steps];
    let big_t = steps as f64;
    for t in (1..=steps).rev() {
        let (eps_c, eps_u) = net.eval_pair(&z, cond, t)?;
        let guided = sampler::combine(&eps_c, &eps_u, cfg.guidance);
        let diff = match cfg.mi_term {
            MiTerm::Conditional => sq_diff(&eps_c, &eps_u),
            MiTerm::Guided => sq_diff(&guided, &eps_u),
        };
        let term = schedule.kappa(t) * diff / big_t;
        if !term.is_finite() {
            return Err(Error::NonFinite(format!(
                "MI accumulation at step {t} (conditional/unconditional branches diverged)"
            )));
        }
        per_step[t - 1] = term;
        let w = sampler::step_noise(&mut rng, dim, t);
        z = sampler::ddpm_step(&z, t, &guided, &w, schedule)?;
        sampler::check_finite(&z, t)?;
    }
    let value = per_step.iter().sum();
    Ok((
        z,
        MiEstimate {
            value,
            per_step,
            n_trajectories: 1,
            stderr: None,
        },
    ))
}

/// Monte Carlo estimate for a given clean sample `z0`: `n_mc` draws of
/// `t ~ U{1..T}` and `eps ~ N(0, I)`.
pub fn pointwise_mi_forward<D: Denoiser + ?Sized>(
    net: &D,
    z0: &[f64],
    cond: &Condition,
    schedule: &NoiseSchedule,
    n_mc: usize,
    seed: u64,
) -> Result<MiEstimate> {
    if n_mc == 0 {
        return Err(Error::InvalidParameter("n_mc must be at least 1".into()));
    }
    if z0.len() != net.data_dim() {
        return Err(Error::DimensionMismatch {
            expected: net.data_dim(),
            got: z0.len(),
        });
    }
    if cond.is_null() {
        return Err(Error::InvalidParameter(
            "point-wise MI needs a non-null condition".into(),
        ));
    }
    let steps = schedule.steps();
    let mut rng = seed::rng(seed);
    let mut per_step = vec![0.0; steps];
    let mut stats = Running::default();
    let share = 1.0 / n_mc as f64;
    for _ in 0..n_mc {
        let t = rng.random_range(1..=steps);
        let eps = sampler::standard_normal(&mut rng, z0.len());
        let z_t = schedule.noise(z0, &eps, t);
        let (eps_c, eps_u) = net.eval_pair(&z_t, cond, t)?;
        let term = schedule.kappa(t) * sq_diff(&eps_c, &eps_u);
        if !term.is_finite() {
            return Err(Error::NonFinite(format!("MI term at step {t}")));
        }
        per_step[t - 1] += term * share;
        stats.push(term);
    }
    Ok(MiEstimate {
        value: stats.mean(),
        per_step,
        n_trajectories: n_mc,
        stderr: (n_mc > 1).then(|| stats.stderr()),
    })
}

/// Descending order of `values`; equal values keep their original order.
pub fn rank_by_mi(values: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[b].total_cmp(&values[a]));
    idx
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::denoiser::AnalyticDenoiser;
    use crate::schedule::{build_schedule, ScheduleKind};
    use crate::world::GaussianWorld;

    /// Routes every condition to the unconditional branch.
    struct SameBranch<D>(D);

    impl<D: Denoiser> Denoiser for SameBranch<D> {
        fn data_dim(&self) -> usize {
            self.0.data_dim()
        }

        fn eval_eps(&self, z: &[f64], _: &Condition, t: usize) -> Result<Vec<f64>> {
            self.0.eval_eps(z, &Condition::Null, t)
        }
    }

    fn world(rho: f64) -> (GaussianWorld, NoiseSchedule) {
        let s = build_schedule(200, 5e-4, 0.1, ScheduleKind::Linear).unwrap();
        (GaussianWorld::correlated(2, rho).unwrap(), s)
    }

    #[test]
    fn identical_branches_give_zero() {
        let (w, s) = world(0.7);
        let net = SameBranch(AnalyticDenoiser::new(w, s.clone()));
        let cond = Condition::Vector(vec![1.0, -0.5]);
        for seed in 0..5 {
            let cfg = SamplerConfig {
                seed,
                ..SamplerConfig::default()
            };
            let (_, est) = pointwise_mi_generate(&net, &cond, &s, &cfg).unwrap();
            assert_eq!(est.value, 0.0);
            let est = pointwise_mi_forward(&net, &[0.2, 0.3], &cond, &s, 16, seed).unwrap();
            assert_eq!(est.value, 0.0);
        }
    }

    #[test]
    fn estimates_are_nonnegative_and_consistent() {
        let (w, s) = world(0.6);
        let net = AnalyticDenoiser::new(w.clone(), s.clone());
        for (i, (cond, z)) in w.sample_joint(20, 4).into_iter().enumerate() {
            let cfg = SamplerConfig {
                seed: i as u64,
                ..SamplerConfig::default()
            };
            let (_, g) = pointwise_mi_generate(&net, &cond, &s, &cfg).unwrap();
            let f = pointwise_mi_forward(&net, &z, &cond, &s, 8, i as u64).unwrap();
            for est in [&g, &f] {
                assert!(est.value >= 0.0);
                assert!(est.per_step.iter().all(|&v| v >= 0.0));
                assert_eq!(est.per_step.len(), 200);
                assert!((est.per_step_sum() - est.value).abs() < 1e-9 * (1.0 + est.value));
            }
        }
    }

    #[test]
    fn fused_sample_matches_generate() {
        let (w, s) = world(0.6);
        let net = AnalyticDenoiser::new(w, s.clone());
        let cond = Condition::Vector(vec![0.5, 1.0]);
        for guidance in [1.0, 2.0] {
            let cfg = SamplerConfig {
                guidance,
                seed: 3,
                ..SamplerConfig::default()
            };
            let (z, _) = pointwise_mi_generate(&net, &cond, &s, &cfg).unwrap();
            assert_eq!(z, sampler::generate(&net, &cond, &s, &cfg).unwrap());
        }
    }

    #[test]
    fn guided_term_scales_by_gamma_squared() {
        let (w, s) = world(0.6);
        let net = AnalyticDenoiser::new(w, s.clone());
        let cond = Condition::Vector(vec![0.5, 1.0]);
        let base = SamplerConfig {
            guidance: 3.0,
            seed: 5,
            mi_term: MiTerm::Conditional,
        };
        let guided = SamplerConfig {
            mi_term: MiTerm::Guided,
            ..base
        };
        let (_, a) = pointwise_mi_generate(&net, &cond, &s, &base).unwrap();
        let (_, b) = pointwise_mi_generate(&net, &cond, &s, &guided).unwrap();
        assert!((b.value - 9.0 * a.value).abs() < 1e-9 * b.value);
    }

    #[test]
    fn null_condition_rejected() {
        let (w, s) = world(0.6);
        let net = AnalyticDenoiser::new(w, s.clone());
        assert!(pointwise_mi_generate(&net, &Condition::Null, &s, &SamplerConfig::default()).is_err());
        assert!(pointwise_mi_forward(&net, &[0.0, 0.0], &Condition::Null, &s, 4, 0).is_err());
        let cond = Condition::Vector(vec![0.0, 0.0]);
        assert!(pointwise_mi_forward(&net, &[0.0, 0.0], &cond, &s, 0, 0).is_err());
        assert!(pointwise_mi_forward(&net, &[0.0], &cond, &s, 4, 0).is_err());
    }

    #[test]
    fn ranking() {
        assert_eq!(rank_by_mi(&[2.0, 5.0, 1.0]), vec![1, 0, 2]);
        assert_eq!(rank_by_mi(&[3.0; 5]), vec![0, 1, 2, 3, 4]);
        let sorted = [9.0, 7.0, 4.0, 1.0];
        assert_eq!(rank_by_mi(&sorted), vec![0, 1, 2, 3]);
        let reversed: Vec<f64> = sorted.iter().rev().copied().collect();
        assert_eq!(rank_by_mi(&reversed), vec![3, 2, 1, 0]);
        assert_eq!(rank_by_mi(&[1.0, 2.0, 1.0, 2.0]), vec![1, 3, 0, 2]);
    }

    #[test]
    fn aggregate_means_and_stderr() {
        let mk = |v: f64| MiEstimate {
            value: v,
            per_step: vec![v / 2.0, v / 2.0],
            n_trajectories: 1,
            stderr: None,
        };
        let agg = MiEstimate::aggregate(&[mk(1.0), mk(3.0)]).unwrap();
        assert_eq!(agg.value, 2.0);
        assert_eq!(agg.per_step, vec![1.0, 1.0]);
        assert_eq!(agg.n_trajectories, 2);
        assert!((agg.stderr.unwrap() - 1.0).abs() < 1e-12);
        assert!(MiEstimate::aggregate(&[]).is_err());
    }
}
