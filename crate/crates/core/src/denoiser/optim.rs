//! Decoupled-weight-decay Adam with global gradient-norm clipping.

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamWParams {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub weight_decay: f64,
    pub eps: f64,
    /// Global L2 clip; non-positive disables clipping.
    pub grad_clip: f64,
}

#[derive(Debug, Clone)]
pub struct AdamW {
    params: AdamWParams,
    step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl AdamW {
    pub fn new(params: AdamWParams, group_sizes: &[usize]) -> Self {
        Self {
            params,
            step: 0,
            m: group_sizes.iter().map(|&n| vec![0.0; n]).collect(),
            v: group_sizes.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    /// Applies one update and returns the pre-clipping gradient norm.
    pub fn step(&mut self, params: &mut [&mut [f64]], grads: &[Vec<f64>]) -> f64 {
        assert_eq!(params.len(), grads.len(), "parameter/gradient group count");
        let norm = grads
            .iter()
            .flat_map(|g| g.iter())
            .map(|g| g * g)
            .sum::<f64>()
            .sqrt();
        let clip = if self.params.grad_clip > 0.0 && norm > self.params.grad_clip {
            self.params.grad_clip / norm
        } else {
            1.0
        };
        self.step += 1;
        let p = self.params;
        let bc1 = 1.0 - p.beta1.powi(self.step as i32);
        let bc2 = 1.0 - p.beta2.powi(self.step as i32);
        for (gi, (group, grad)) in params.iter_mut().zip(grads).enumerate() {
            let (m, v) = (&mut self.m[gi], &mut self.v[gi]);
            for j in 0..group.len() {
                let g = grad[j] * clip;
                m[j] = p.beta1 * m[j] + (1.0 - p.beta1) * g;
                v[j] = p.beta2 * v[j] + (1.0 - p.beta2) * g * g;
                let m_hat = m[j] / bc1;
                let v_hat = v[j] / bc2;
                group[j] -= p.learning_rate * (m_hat / (v_hat.sqrt() + p.eps) + p.weight_decay * group[j]);
            }
        }
        norm
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params() -> AdamWParams {
        AdamWParams {
            learning_rate: 0.1,
            beta1: 0.9,
            beta2: 0.999,
            weight_decay: 0.0,
            eps: 1e-8,
            grad_clip: 0.0,
        }
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut opt = AdamW::new(params(), &[2]);
        let mut x = vec![1.0, -1.0];
        opt.step(&mut [x.as_mut_slice()], &[vec![3.0, -0.5]]);
        assert!((x[0] - 0.9).abs() < 1e-6);
        assert!((x[1] + 0.9).abs() < 1e-6);
    }

    #[test]
    fn minimises_quadratic() {
        let mut opt = AdamW::new(params(), &[1]);
        let mut x = vec![5.0];
        for _ in 0..500 {
            let g = vec![2.0 * (x[0] - 2.0)];
            opt.step(&mut [x.as_mut_slice()], &[g]);
        }
        assert!((x[0] - 2.0).abs() < 1e-2);
    }

    #[test]
    fn clipping_reports_raw_norm() {
        let mut p = params();
        p.grad_clip = 1.0;
        let mut opt = AdamW::new(p, &[2]);
        let mut x = vec![0.0, 0.0];
        let norm = opt.step(&mut [x.as_mut_slice()], &[vec![3.0, 4.0]]);
        assert_eq!(norm, 5.0);
    }

    #[test]
    fn decoupled_decay_shrinks_with_zero_gradient() {
        let mut p = params();
        p.weight_decay = 0.5;
        let mut opt = AdamW::new(p, &[1]);
        let mut x = vec![2.0];
        opt.step(&mut [x.as_mut_slice()], &[vec![0.0]]);
        assert!((x[0] - (2.0 - 0.1 * 0.5 * 2.0)).abs() < 1e-12);
    }
}
