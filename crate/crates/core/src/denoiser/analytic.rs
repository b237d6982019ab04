use super::{Condition, Denoiser};
use crate::error::Result;
use crate::schedule::NoiseSchedule;
use crate::world::GaussianWorld;

/// The Bayes-optimal denoiser of a [`GaussianWorld`].
#[derive(Debug, Clone)]
pub struct AnalyticDenoiser {
    world: GaussianWorld,
    schedule: NoiseSchedule,
}

impl AnalyticDenoiser {
    pub fn new(world: GaussianWorld, schedule: NoiseSchedule) -> Self {
        Self { world, schedule }
    }

    pub fn world(&self) -> &GaussianWorld {
        &self.world
    }

    pub fn schedule(&self) -> &NoiseSchedule {
        &self.schedule
    }
}

impl Denoiser for AnalyticDenoiser {
    fn data_dim(&self) -> usize {
        self.world.dim()
    }

    fn eval_eps(&self, z_t: &[f64], cond: &Condition, t: usize) -> Result<Vec<f64>> {
        self.world.optimal_eps(z_t, cond, &self.schedule, t)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schedule::ScheduleParams;

    #[test]
    fn zero_at_scaled_mean() {
        let s = ScheduleParams::default().build().unwrap();
        let w = GaussianWorld::mixture(vec![vec![2.0, 1.0]], 0.5, 0.0).unwrap();
        let net = AnalyticDenoiser::new(w, s.clone());
        let r = s.alpha_bar(300).sqrt();
        let eps = net.eval_eps(&[2.0 * r, r], &Condition::Label(0), 300).unwrap();
        assert!(eps.iter().all(|e| e.abs() < 1e-12));
        let again = net.eval_eps(&[2.0 * r, r], &Condition::Label(0), 300).unwrap();
        assert_eq!(eps, again);
    }
}
