//! Small conditional MLP noise predictor with exact reverse-mode gradients.
//!
//! Input layout: `[z_t (d) | time features | condition encoding]`. Time
//! features are fixed sinusoids of `t / T`; label conditions look up a learned
//! embedding table with one extra row for `Null`, vector conditions are fed
//! directly followed by a null flag.

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{Condition, Denoiser};
use crate::error::{Error, Result};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    #[default]
    Silu,
    Tanh,
}

impl Activation {
    pub fn code(self) -> u8 {
        match self {
            Activation::Silu => 0,
            Activation::Tanh => 1,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(Activation::Silu),
            1 => Some(Activation::Tanh),
            _ => None,
        }
    }

    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Silu => x / (1.0 + (-x).exp()),
            Activation::Tanh => x.tanh(),
        }
    }

    #[inline]
    pub fn derivative(self, x: f64) -> f64 {
        match self {
            Activation::Silu => {
                let s = 1.0 / (1.0 + (-x).exp());
                s * (1.0 + x * (1.0 - s))
            }
            Activation::Tanh => {
                let t = x.tanh();
                1.0 - t * t
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum CondEncoding {
    Labels { num_labels: usize, embed_dim: usize },
    Vector { len: usize },
}

impl CondEncoding {
    pub fn width(&self) -> usize {
        match self {
            CondEncoding::Labels { embed_dim, .. } => *embed_dim,
            CondEncoding::Vector { len } => len + 1,
        }
    }

    /// Rows of the embedding table, `Null` last.
    pub fn table_rows(&self) -> usize {
        match self {
            CondEncoding::Labels { num_labels, .. } => num_labels + 1,
            CondEncoding::Vector { .. } => 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MlpConfig {
    pub data_dim: usize,
    pub hidden: Vec<usize>,
    pub time_features: usize,
    pub cond: CondEncoding,
    #[serde(default)]
    pub activation: Activation,
}

impl MlpConfig {
    pub fn validate(&self) -> Result<()> {
        if self.data_dim == 0 {
            return Err(Error::InvalidParameter("data_dim must be positive".into()));
        }
        if self.hidden.iter().any(|&h| h == 0) {
            return Err(Error::InvalidParameter("hidden widths must be positive".into()));
        }
        if self.time_features % 2 != 0 {
            return Err(Error::InvalidParameter(
                "time_features must be even (sin/cos pairs)".into(),
            ));
        }
        match self.cond {
            CondEncoding::Labels {
                num_labels,
                embed_dim,
            } if num_labels == 0 || embed_dim == 0 => Err(Error::InvalidParameter(
                "label encoding needs num_labels >= 1 and embed_dim >= 1".into(),
            )),
            CondEncoding::Vector { len: 0 } => Err(Error::InvalidParameter(
                "vector encoding needs len >= 1".into(),
            )),
            _ => Ok(()),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.data_dim + self.time_features + self.cond.width()
    }

    /// `(in, out)` per linear layer.
    pub fn layer_shapes(&self) -> Vec<(usize, usize)> {
        let mut dims = vec![self.input_dim()];
        dims.extend(&self.hidden);
        dims.push(self.data_dim);
        dims.windows(2).map(|w| (w[0], w[1])).collect()
    }
}

/// Dense layer, weights row-major `out x in`.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub in_dim: usize,
    pub out_dim: usize,
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Linear {
    pub fn zeros(in_dim: usize, out_dim: usize) -> Self {
        Self {
            in_dim,
            out_dim,
            weight: vec![0.0; in_dim * out_dim],
            bias: vec![0.0; out_dim],
        }
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.weight[i * self.in_dim..(i + 1) * self.in_dim]
    }

    /// `W x` without the bias.
    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.out_dim)
            .map(|i| dot(self.row(i), x))
            .collect()
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut y = self.matvec(x);
        for (yi, b) in y.iter_mut().zip(&self.bias) {
            *yi += b;
        }
        y
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Activations recorded by a forward pass. `inputs[l]` feeds layer `l`,
/// `pre[l]` is its pre-activation output.
#[derive(Debug, Clone)]
pub struct Trace {
    pub inputs: Vec<Vec<f64>>,
    pub pre: Vec<Vec<f64>>,
}

impl Trace {
    pub fn output(&self) -> &[f64] {
        self.pre.last().expect("at least one layer")
    }
}

/// Gradients with the same layout as the trainable parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpGrads {
    pub embedding: Vec<f64>,
    pub layers: Vec<Linear>,
}

impl MlpGrads {
    pub fn zeros_like(net: &MlpDenoiser) -> Self {
        Self {
            embedding: vec![0.0; net.embedding.len()],
            layers: net
                .layers
                .iter()
                .map(|l| Linear::zeros(l.in_dim, l.out_dim))
                .collect(),
        }
    }

    pub fn scale(&mut self, k: f64) {
        self.embedding.iter_mut().for_each(|g| *g *= k);
        for l in &mut self.layers {
            l.weight.iter_mut().for_each(|g| *g *= k);
            l.bias.iter_mut().for_each(|g| *g *= k);
        }
    }

    pub fn into_groups(self) -> Vec<Vec<f64>> {
        let mut out = vec![self.embedding];
        for l in self.layers {
            out.push(l.weight);
            out.push(l.bias);
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpDenoiser {
    config: MlpConfig,
    steps: usize,
    /// Embedding table, `table_rows x embed_dim` row-major.
    pub(crate) embedding: Vec<f64>,
    pub(crate) layers: Vec<Linear>,
}

impl MlpDenoiser {
    /// Fresh network for a `steps`-step schedule. Weights are
    /// `N(0, 1/fan_in)`, biases zero, embeddings `N(0, 1)`.
    pub fn new(config: MlpConfig, steps: usize, seed: u64) -> Result<Self> {
        config.validate()?;
        if steps == 0 {
            return Err(Error::InvalidParameter("steps must be positive".into()));
        }
        let mut rng = seed::rng(seed);
        let unit = Normal::new(0.0, 1.0).expect("valid normal");
        let rows = config.cond.table_rows();
        let embed_dim = match config.cond {
            CondEncoding::Labels { embed_dim, .. } => embed_dim,
            CondEncoding::Vector { .. } => 0,
        };
        let embedding = (0..rows * embed_dim).map(|_| unit.sample(&mut rng)).collect();
        let layers = config
            .layer_shapes()
            .into_iter()
            .map(|(i, o)| {
                let std = (1.0 / i as f64).sqrt();
                let mut l = Linear::zeros(i, o);
                l.weight.iter_mut().for_each(|w| *w = std * unit.sample(&mut rng));
                l
            })
            .collect();
        Ok(Self {
            config,
            steps,
            embedding,
            layers,
        })
    }

    pub(crate) fn from_parts(
        config: MlpConfig,
        steps: usize,
        embedding: Vec<f64>,
        layers: Vec<Linear>,
    ) -> Result<Self> {
        config.validate()?;
        let shapes = config.layer_shapes();
        let embed_dim = match config.cond {
            CondEncoding::Labels { embed_dim, .. } => embed_dim,
            CondEncoding::Vector { .. } => 0,
        };
        if embedding.len() != config.cond.table_rows() * embed_dim
            || layers.len() != shapes.len()
            || layers.iter().zip(&shapes).any(|(l, &(i, o))| {
                l.in_dim != i || l.out_dim != o || l.weight.len() != i * o || l.bias.len() != o
            })
        {
            return Err(Error::InvalidParameter(
                "parameter shapes do not match the network config".into(),
            ));
        }
        let net = Self {
            config,
            steps,
            embedding,
            layers,
        };
        if !net.is_finite() {
            return Err(Error::NonFinite("network weights".into()));
        }
        Ok(net)
    }

    pub fn config(&self) -> &MlpConfig {
        &self.config
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn layers(&self) -> &[Linear] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Linear] {
        &mut self.layers
    }

    pub fn embedding(&self) -> &[f64] {
        &self.embedding
    }

    pub fn embedding_mut(&mut self) -> &mut [f64] {
        &mut self.embedding
    }

    pub fn activation(&self) -> Activation {
        self.config.activation
    }

    fn embed_dim(&self) -> usize {
        match self.config.cond {
            CondEncoding::Labels { embed_dim, .. } => embed_dim,
            CondEncoding::Vector { .. } => 0,
        }
    }

    /// Embedding row used for `cond`, if the encoding is a label table.
    pub fn embedding_row(&self, cond: &Condition) -> Option<usize> {
        match (self.config.cond, cond) {
            (CondEncoding::Labels { num_labels, .. }, Condition::Null) => Some(num_labels),
            (CondEncoding::Labels { .. }, Condition::Label(c)) => Some(*c),
            _ => None,
        }
    }

    pub fn parameter_count(&self) -> usize {
        self.embedding.len()
            + self
                .layers
                .iter()
                .map(|l| l.weight.len() + l.bias.len())
                .sum::<usize>()
    }

    pub fn is_finite(&self) -> bool {
        self.embedding.iter().all(|x| x.is_finite())
            && self
                .layers
                .iter()
                .all(|l| l.weight.iter().chain(&l.bias).all(|x| x.is_finite()))
    }

    pub fn time_features(&self, t: usize) -> Vec<f64> {
        let half = self.config.time_features / 2;
        let phase = t as f64 / self.steps as f64;
        let mut out = Vec::with_capacity(2 * half);
        for i in 0..half {
            let freq = if half > 1 {
                100f64.powf(i as f64 / (half - 1) as f64)
            } else {
                1.0
            };
            out.push((phase * freq).sin());
            out.push((phase * freq).cos());
        }
        out
    }

    /// Builds the network input for `(z_t, cond, t)`.
    pub fn input_features(&self, z_t: &[f64], cond: &Condition, t: usize) -> Result<Vec<f64>> {
        let d = self.config.data_dim;
        if z_t.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: z_t.len(),
            });
        }
        if t == 0 || t > self.steps {
            return Err(Error::StepOutOfRange {
                t,
                max: self.steps,
            });
        }
        let mut x = Vec::with_capacity(self.config.input_dim());
        x.extend_from_slice(z_t);
        x.extend(self.time_features(t));
        match (self.config.cond, cond) {
            (CondEncoding::Labels { num_labels, .. }, Condition::Null | Condition::Label(_)) => {
                let row = self.embedding_row(cond).expect("label encoding");
                if let Condition::Label(c) = cond {
                    if *c >= num_labels {
                        return Err(Error::InvalidParameter(format!(
                            "label {c} out of range for {num_labels} labels"
                        )));
                    }
                }
                let e = self.embed_dim();
                x.extend_from_slice(&self.embedding[row * e..(row + 1) * e]);
            }
            (CondEncoding::Vector { len }, Condition::Null) => {
                x.extend(std::iter::repeat_n(0.0, len));
                x.push(1.0);
            }
            (CondEncoding::Vector { len }, Condition::Vector(p)) => {
                if p.len() != len {
                    return Err(Error::DimensionMismatch {
                        expected: len,
                        got: p.len(),
                    });
                }
                x.extend_from_slice(p);
                x.push(0.0);
            }
            _ => {
                return Err(Error::InvalidParameter(format!(
                    "condition {cond} does not match the network's encoding"
                )))
            }
        }
        Ok(x)
    }

    /// Forward pass through `layers` (which must share this network's shapes),
    /// recording everything needed for backpropagation.
    pub fn forward_trace(&self, layers: &[Linear], input: Vec<f64>) -> Trace {
        let act = self.config.activation;
        let n = layers.len();
        let mut inputs = Vec::with_capacity(n);
        let mut pre = Vec::with_capacity(n);
        let mut x = input;
        for (l, layer) in layers.iter().enumerate() {
            let y = layer.apply(&x);
            let next = if l + 1 < n {
                y.iter().map(|&v| act.apply(v)).collect()
            } else {
                Vec::new()
            };
            inputs.push(std::mem::replace(&mut x, next));
            pre.push(y);
        }
        Trace { inputs, pre }
    }

    /// Accumulates `d loss / d params` into `grads.layers` given the output
    /// gradient, returning the gradient with respect to the input vector.
    pub fn backward_trace(
        &self,
        layers: &[Linear],
        trace: &Trace,
        d_out: &[f64],
        grads: &mut [Linear],
    ) -> Vec<f64> {
        let act = self.config.activation;
        let n = layers.len();
        let mut delta = d_out.to_vec();
        for l in (0..n).rev() {
            if l + 1 < n {
                for (d, &p) in delta.iter_mut().zip(&trace.pre[l]) {
                    *d *= act.derivative(p);
                }
            }
            let layer = &layers[l];
            let x = &trace.inputs[l];
            let g = &mut grads[l];
            for (i, &di) in delta.iter().enumerate() {
                if di == 0.0 {
                    continue;
                }
                g.bias[i] += di;
                let row = &mut g.weight[i * layer.in_dim..(i + 1) * layer.in_dim];
                for (gw, &xj) in row.iter_mut().zip(x) {
                    *gw += di * xj;
                }
            }
            let mut d_in = vec![0.0; layer.in_dim];
            for (i, &di) in delta.iter().enumerate() {
                if di == 0.0 {
                    continue;
                }
                for (dj, &w) in d_in.iter_mut().zip(layer.row(i)) {
                    *dj += di * w;
                }
            }
            delta = d_in;
        }
        delta
    }

    /// Routes an input gradient into the embedding-table gradient.
    pub fn accumulate_embedding_grad(&self, cond: &Condition, d_input: &[f64], grad: &mut [f64]) {
        if let Some(row) = self.embedding_row(cond) {
            let e = self.embed_dim();
            let offset = self.config.data_dim + self.config.time_features;
            for (g, d) in grad[row * e..(row + 1) * e]
                .iter_mut()
                .zip(&d_input[offset..offset + e])
            {
                *g += d;
            }
        }
    }

    /// Mutable views over every trainable parameter group, in the same order
    /// as [`MlpGrads::into_groups`].
    pub fn param_groups_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = vec![self.embedding.as_mut_slice()];
        for l in &mut self.layers {
            out.push(l.weight.as_mut_slice());
            out.push(l.bias.as_mut_slice());
        }
        out
    }

    pub fn param_groups(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = vec![self.embedding.as_slice()];
        for l in &self.layers {
            out.push(l.weight.as_slice());
            out.push(l.bias.as_slice());
        }
        out
    }
}

impl Denoiser for MlpDenoiser {
    fn data_dim(&self) -> usize {
        self.config.data_dim
    }

    fn eval_eps(&self, z_t: &[f64], cond: &Condition, t: usize) -> Result<Vec<f64>> {
        let mut x = self.input_features(z_t, cond, t)?;
        let act = self.config.activation;
        let n = self.layers.len();
        for (l, layer) in self.layers.iter().enumerate() {
            x = layer.apply(&x);
            if l + 1 < n {
                x.iter_mut().for_each(|v| *v = act.apply(*v));
            }
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("denoiser output".into()));
        }
        Ok(x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn label_config() -> MlpConfig {
        MlpConfig {
            data_dim: 2,
            hidden: vec![16, 16],
            time_features: 8,
            cond: CondEncoding::Labels {
                num_labels: 3,
                embed_dim: 4,
            },
            activation: Activation::Silu,
        }
    }

    #[test]
    fn output_shape_and_determinism() {
        let net = MlpDenoiser::new(label_config(), 100, 1).unwrap();
        let z = [0.3, -0.7];
        for cond in [Condition::Null, Condition::Label(2)] {
            let a = net.eval_eps(&z, &cond, 10).unwrap();
            let b = net.eval_eps(&z, &cond, 10).unwrap();
            assert_eq!(a.len(), 2);
            assert_eq!(a, b);
            let norm: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
            assert!(norm.is_finite() && norm < 20.0);
        }
    }

    #[test]
    fn null_uses_last_row() {
        let net = MlpDenoiser::new(label_config(), 100, 1).unwrap();
        assert_eq!(net.embedding_row(&Condition::Null), Some(3));
        let x = net.input_features(&[0.0, 0.0], &Condition::Null, 1).unwrap();
        assert_eq!(&x[10..14], &net.embedding()[12..16]);
    }

    #[test]
    fn rejects_bad_inputs() {
        let net = MlpDenoiser::new(label_config(), 100, 1).unwrap();
        assert!(net.eval_eps(&[0.0], &Condition::Null, 1).is_err());
        assert!(net.eval_eps(&[0.0, 0.0], &Condition::Null, 0).is_err());
        assert!(net.eval_eps(&[0.0, 0.0], &Condition::Null, 101).is_err());
        assert!(net.eval_eps(&[0.0, 0.0], &Condition::Label(3), 1).is_err());
        assert!(net
            .eval_eps(&[0.0, 0.0], &Condition::Vector(vec![1.0]), 1)
            .is_err());
    }

    #[test]
    fn non_finite_weights_are_reported() {
        let mut net = MlpDenoiser::new(label_config(), 100, 1).unwrap();
        net.layers_mut()[0].bias[0] = f64::NAN;
        assert!(matches!(
            net.eval_eps(&[0.0, 0.0], &Condition::Null, 5),
            Err(Error::NonFinite(_))
        ));
    }

    #[test]
    fn vector_encoding() {
        let cfg = MlpConfig {
            data_dim: 1,
            hidden: vec![4],
            time_features: 2,
            cond: CondEncoding::Vector { len: 1 },
            activation: Activation::Tanh,
        };
        let net = MlpDenoiser::new(cfg, 10, 2).unwrap();
        let x = net.input_features(&[0.5], &Condition::Vector(vec![2.0]), 3).unwrap();
        assert_eq!(x.len(), 5);
        assert_eq!(&x[3..], &[2.0, 0.0]);
        let x = net.input_features(&[0.5], &Condition::Null, 3).unwrap();
        assert_eq!(&x[3..], &[0.0, 1.0]);
        assert!(net.eval_eps(&[0.5], &Condition::Label(0), 3).is_err());
    }

    #[test]
    fn activation_derivatives() {
        for act in [Activation::Silu, Activation::Tanh] {
            for x in [-3.0, -0.5, 0.0, 0.7, 4.0] {
                let h = 1e-6;
                let fd = (act.apply(x + h) - act.apply(x - h)) / (2.0 * h);
                assert!((fd - act.derivative(x)).abs() < 1e-8);
            }
        }
    }
}
