//! Low-rank adapters on a frozen [`MlpDenoiser`].
//!
//! For a frozen layer `W` (`out x in`) with down matrix `A` (`r x in`), up
//! matrix `B` (`out x r`) and scale `s = alpha / r`:
//!
//! - plain: `W_eff = W + s * B A`
//! - magnitude-normalized: `V = W + s * B A`, and row `i` of `W_eff` is
//!   `m_i * V_i / |V_i|`, with `m` initialised to the row norms of `W`.
//!
//! `B` starts at zero, so both variants reproduce the frozen layer exactly
//! until the first update. Biases, embeddings and non-adapted layers stay
//! frozen.

use std::fs;
use std::path::Path;

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::denoiser::checkpoint::{self, CheckpointKind, Decoder, Encoder};
use crate::denoiser::mlp::{dot, Linear, MlpDenoiser};
use crate::denoiser::train::{self, fit, DataSource, Example, NoiseDraw, Trainable};
use crate::denoiser::{Condition, Denoiser, TrainConfig, TrainReport};
use crate::error::{Error, Result};
use crate::schedule::{NoiseSchedule, ScheduleParams};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum AdapterVariant {
    Plain,
    #[default]
    MagnitudeNormalized,
}

impl AdapterVariant {
    fn code(self) -> u8 {
        match self {
            AdapterVariant::Plain => 0,
            AdapterVariant::MagnitudeNormalized => 1,
        }
    }

    fn from_code(c: u8) -> Option<Self> {
        match c {
            0 => Some(AdapterVariant::Plain),
            1 => Some(AdapterVariant::MagnitudeNormalized),
            _ => None,
        }
    }
}

/// Which layers get adapters and how.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdapterConfig {
    pub rank: usize,
    pub scale: f64,
    pub variant: AdapterVariant,
    /// Layer indices; `None` selects every hidden layer (all but the output
    /// projection).
    pub layers: Option<Vec<usize>>,
}

impl Default for AdapterConfig {
    fn default() -> Self {
        Self {
            rank: 4,
            scale: 4.0,
            variant: AdapterVariant::MagnitudeNormalized,
            layers: None,
        }
    }
}

impl AdapterConfig {
    pub fn resolve_layers(&self, net: &MlpDenoiser) -> Vec<usize> {
        match &self.layers {
            Some(l) => l.clone(),
            None => (0..net.layers().len().saturating_sub(1)).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LowRankAdapter {
    pub layer: usize,
    pub rank: usize,
    pub scale: f64,
    pub variant: AdapterVariant,
    pub in_dim: usize,
    pub out_dim: usize,
    /// `rank x in`, row-major.
    pub down: Vec<f64>,
    /// `out x rank`, row-major.
    pub up: Vec<f64>,
    /// Per-output-row magnitudes; empty for the plain variant.
    pub magnitude: Vec<f64>,
}

impl LowRankAdapter {
    /// `s / r`.
    pub fn factor(&self) -> f64 {
        self.scale / self.rank as f64
    }

    pub fn trainable_count(&self) -> usize {
        self.down.len() + self.up.len() + self.magnitude.len()
    }

    /// `s * B A` as an `out x in` matrix.
    fn delta(&self) -> Vec<f64> {
        let f = self.factor();
        let mut out = vec![0.0; self.out_dim * self.in_dim];
        for i in 0..self.out_dim {
            let row = &mut out[i * self.in_dim..(i + 1) * self.in_dim];
            for k in 0..self.rank {
                let b = self.up[i * self.rank + k];
                if b == 0.0 {
                    continue;
                }
                let a = &self.down[k * self.in_dim..(k + 1) * self.in_dim];
                for (o, &aj) in row.iter_mut().zip(a) {
                    *o += f * b * aj;
                }
            }
        }
        out
    }

    /// `V = W + s * B A`.
    fn direction(&self, base: &Linear) -> Vec<f64> {
        let mut v = self.delta();
        for (vi, w) in v.iter_mut().zip(&base.weight) {
            *vi += w;
        }
        v
    }

    /// Materialised effective layer.
    pub fn effective(&self, base: &Linear) -> Linear {
        let mut weight = self.direction(base);
        if self.variant == AdapterVariant::MagnitudeNormalized {
            for i in 0..self.out_dim {
                let row = &mut weight[i * self.in_dim..(i + 1) * self.in_dim];
                let g = self.magnitude[i] / norm(row);
                row.iter_mut().for_each(|w| *w *= g);
            }
        }
        Linear {
            in_dim: self.in_dim,
            out_dim: self.out_dim,
            weight,
            bias: base.bias.clone(),
        }
    }

    /// Evaluates the adapted layer without materialising it.
    pub fn apply(&self, base: &Linear, x: &[f64]) -> Vec<f64> {
        let f = self.factor();
        let ax: Vec<f64> = (0..self.rank)
            .map(|k| dot(&self.down[k * self.in_dim..(k + 1) * self.in_dim], x))
            .collect();
        let mut y = Vec::with_capacity(self.out_dim);
        for i in 0..self.out_dim {
            let up_row = &self.up[i * self.rank..(i + 1) * self.rank];
            let mut acc = dot(base.row(i), x);
            acc += f * dot(up_row, &ax);
            if self.variant == AdapterVariant::MagnitudeNormalized {
                let n = self.direction_row_norm(base, i);
                acc *= self.magnitude[i] / n;
            }
            y.push(acc + base.bias[i]);
        }
        y
    }

    fn direction_row_norm(&self, base: &Linear, i: usize) -> f64 {
        let f = self.factor();
        let up_row = &self.up[i * self.rank..(i + 1) * self.rank];
        let mut sq = 0.0;
        for (j, w) in base.row(i).iter().enumerate() {
            let mut v = *w;
            for (k, b) in up_row.iter().enumerate() {
                v += f * b * self.down[k * self.in_dim + j];
            }
            sq += v * v;
        }
        sq.sqrt()
    }

    /// Maps `d loss / d W_eff` to gradients of `(A, B[, m])`.
    fn backprop(&self, base: &Linear, g_eff: &[f64]) -> Vec<Vec<f64>> {
        let (n_in, n_out, r) = (self.in_dim, self.out_dim, self.rank);
        let mut g_dir = g_eff.to_vec();
        let mut g_mag = Vec::new();
        if self.variant == AdapterVariant::MagnitudeNormalized {
            let v = self.direction(base);
            g_mag = vec![0.0; n_out];
            for i in 0..n_out {
                let vi = &v[i * n_in..(i + 1) * n_in];
                let gi = &mut g_dir[i * n_in..(i + 1) * n_in];
                let n = norm(vi);
                let gv = dot(gi, vi);
                g_mag[i] = gv / n;
                let m = self.magnitude[i];
                for (g, &vij) in gi.iter_mut().zip(vi) {
                    *g = m * (*g / n - gv * vij / (n * n * n));
                }
            }
        }
        let f = self.factor();
        // dB = f * G A^T, dA = f * B^T G
        let mut g_up = vec![0.0; n_out * r];
        let mut g_down = vec![0.0; r * n_in];
        for i in 0..n_out {
            let gi = &g_dir[i * n_in..(i + 1) * n_in];
            for k in 0..r {
                let a = &self.down[k * n_in..(k + 1) * n_in];
                g_up[i * r + k] = f * dot(gi, a);
                let b = self.up[i * r + k];
                if b != 0.0 {
                    for (ga, &gij) in g_down[k * n_in..(k + 1) * n_in].iter_mut().zip(gi) {
                        *ga += f * b * gij;
                    }
                }
            }
        }
        let mut out = vec![g_down, g_up];
        if self.variant == AdapterVariant::MagnitudeNormalized {
            out.push(g_mag);
        }
        out
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// A frozen base network plus adapters on some of its layers.
#[derive(Debug, Clone, PartialEq)]
pub struct AdaptedDenoiser {
    base: MlpDenoiser,
    adapters: Vec<LowRankAdapter>,
}

/// Attaches fresh adapters to `layers` of `net`. `A` is drawn
/// `N(0, 1/in)` from `seed`; `B` is zero.
pub fn inject(
    net: MlpDenoiser,
    layers: &[usize],
    rank: usize,
    scale: f64,
    variant: AdapterVariant,
    seed: u64,
) -> Result<AdaptedDenoiser> {
    if rank == 0 {
        return Err(Error::Adapter("rank must be positive".into()));
    }
    if !(scale.is_finite() && scale > 0.0) {
        return Err(Error::Adapter(format!("scale must be positive, got {scale}")));
    }
    let mut sorted = layers.to_vec();
    sorted.sort_unstable();
    if sorted.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::Adapter("duplicate adapter on one layer".into()));
    }
    let mut rng = seed::rng(seed::derive(seed, &[seed::stream::INIT]));
    let mut adapters = Vec::with_capacity(sorted.len());
    for &l in &sorted {
        let layer = net.layers().get(l).ok_or_else(|| {
            Error::Adapter(format!(
                "layer {l} does not exist (network has {})",
                net.layers().len()
            ))
        })?;
        let (n_in, n_out) = (layer.in_dim, layer.out_dim);
        if rank > n_in.min(n_out) {
            return Err(Error::Adapter(format!(
                "rank {rank} exceeds min(in, out) = {} of layer {l}",
                n_in.min(n_out)
            )));
        }
        let dist = Normal::new(0.0, (1.0 / n_in as f64).sqrt()).expect("valid normal");
        let down = (0..rank * n_in).map(|_| dist.sample(&mut rng)).collect();
        let magnitude = match variant {
            AdapterVariant::Plain => Vec::new(),
            AdapterVariant::MagnitudeNormalized => (0..n_out).map(|i| norm(layer.row(i))).collect(),
        };
        adapters.push(LowRankAdapter {
            layer: l,
            rank,
            scale,
            variant,
            in_dim: n_in,
            out_dim: n_out,
            down,
            up: vec![0.0; n_out * rank],
            magnitude,
        });
    }
    Ok(AdaptedDenoiser {
        base: net,
        adapters,
    })
}

pub fn inject_with(net: MlpDenoiser, cfg: &AdapterConfig, seed: u64) -> Result<AdaptedDenoiser> {
    let layers = cfg.resolve_layers(&net);
    inject(net, &layers, cfg.rank, cfg.scale, cfg.variant, seed)
}

impl AdaptedDenoiser {
    pub fn base(&self) -> &MlpDenoiser {
        &self.base
    }

    pub fn adapters(&self) -> &[LowRankAdapter] {
        &self.adapters
    }

    pub fn adapters_mut(&mut self) -> &mut [LowRankAdapter] {
        &mut self.adapters
    }

    pub fn trainable_count(&self) -> usize {
        self.adapters.iter().map(LowRankAdapter::trainable_count).sum()
    }

    fn adapter_for(&self, layer: usize) -> Option<&LowRankAdapter> {
        self.adapters.iter().find(|a| a.layer == layer)
    }

    /// Effective layers with every adapter materialised.
    pub fn effective_layers(&self) -> Vec<Linear> {
        self.base
            .layers()
            .iter()
            .enumerate()
            .map(|(l, layer)| match self.adapter_for(l) {
                Some(a) => a.effective(layer),
                None => layer.clone(),
            })
            .collect()
    }

    /// Folds the adapters into a plain network.
    pub fn merge(&self) -> MlpDenoiser {
        let mut net = self.base.clone();
        let eff = self.effective_layers();
        for (dst, src) in net.layers_mut().iter_mut().zip(eff) {
            *dst = src;
        }
        net
    }

    /// Persists the adapter set (not the base) together with the base
    /// weights digest it was trained against.
    pub fn encode_adapters(&self, schedule: &ScheduleParams) -> Vec<u8> {
        let mut e = Encoder::new(CheckpointKind::Adapter, schedule);
        e.bytes(&checkpoint::weights_digest(&self.base));
        e.u32(self.adapters.len() as u32);
        for a in &self.adapters {
            e.u32(a.layer as u32);
            e.u32(a.rank as u32);
            e.f64(a.scale);
            e.u8(a.variant.code());
            e.u32(a.in_dim as u32);
            e.u32(a.out_dim as u32);
            e.f64s(&a.down);
            e.f64s(&a.up);
            e.f64s(&a.magnitude);
        }
        e.finish()
    }

    /// Rebuilds an adapted network from `base` and an adapter checkpoint.
    pub fn decode_adapters(base: MlpDenoiser, bytes: &[u8]) -> Result<Self> {
        let (mut d, _) = Decoder::open(bytes, CheckpointKind::Adapter)?;
        let digest = d.bytes(32)?;
        if digest[..] != checkpoint::weights_digest(&base)[..] {
            return Err(Error::Checkpoint(
                "adapter checkpoint was trained against a different base network".into(),
            ));
        }
        let n = d.u32()? as usize;
        let mut adapters = Vec::with_capacity(n);
        for _ in 0..n {
            let layer = d.u32()? as usize;
            let rank = d.u32()? as usize;
            let scale = d.f64()?;
            let variant = AdapterVariant::from_code(d.u8()?)
                .ok_or_else(|| Error::Checkpoint("unknown adapter variant".into()))?;
            let in_dim = d.u32()? as usize;
            let out_dim = d.u32()? as usize;
            let shape_ok = base
                .layers()
                .get(layer)
                .is_some_and(|l| l.in_dim == in_dim && l.out_dim == out_dim);
            if !shape_ok || rank == 0 || rank > in_dim.min(out_dim) {
                return Err(Error::Checkpoint(format!(
                    "adapter on layer {layer} does not fit the base network"
                )));
            }
            let down = d.f64s(rank * in_dim)?;
            let up = d.f64s(out_dim * rank)?;
            let magnitude = match variant {
                AdapterVariant::Plain => Vec::new(),
                AdapterVariant::MagnitudeNormalized => d.f64s(out_dim)?,
            };
            adapters.push(LowRankAdapter {
                layer,
                rank,
                scale,
                variant,
                in_dim,
                out_dim,
                down,
                up,
                magnitude,
            });
        }
        d.finish()?;
        Ok(Self { base, adapters })
    }

    pub fn save_adapters(&self, path: &Path, schedule: &ScheduleParams) -> Result<()> {
        fs::write(path, self.encode_adapters(schedule)).map_err(|e| Error::io(path, e))
    }

    pub fn load_adapters(base: MlpDenoiser, path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::decode_adapters(base, &bytes).map_err(|e| Error::file(path, e.to_string()))
    }
}

impl Denoiser for AdaptedDenoiser {
    fn data_dim(&self) -> usize {
        self.base.config().data_dim
    }

    fn eval_eps(&self, z_t: &[f64], cond: &Condition, t: usize) -> Result<Vec<f64>> {
        let mut x = self.base.input_features(z_t, cond, t)?;
        let act = self.base.activation();
        let n = self.base.layers().len();
        for (l, layer) in self.base.layers().iter().enumerate() {
            x = match self.adapter_for(l) {
                Some(a) => a.apply(layer, &x),
                None => layer.apply(&x),
            };
            if l + 1 < n {
                x.iter_mut().for_each(|v| *v = act.apply(*v));
            }
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("adapted denoiser output".into()));
        }
        Ok(x)
    }
}

impl Trainable for AdaptedDenoiser {
    fn steps(&self) -> usize {
        self.base.steps()
    }

    fn data_dim(&self) -> usize {
        self.base.config().data_dim
    }

    fn loss_and_grads(
        &self,
        batch: &[Example],
        draws: &[NoiseDraw],
        schedule: &NoiseSchedule,
    ) -> Result<(f64, Vec<Vec<f64>>)> {
        let eff = self.effective_layers();
        let (loss, grads) =
            train::mlp_objective(&self.base, &eff, batch, draws, schedule, false)?;
        let mut out = Vec::new();
        for a in &self.adapters {
            out.extend(a.backprop(&self.base.layers()[a.layer], &grads.layers[a.layer].weight));
        }
        Ok((loss, out))
    }

    fn loss(&self, batch: &[Example], draws: &[NoiseDraw], schedule: &NoiseSchedule) -> Result<f64> {
        train::denoiser_objective(&self.merge(), batch, draws, schedule)
    }

    fn trainable_groups_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = Vec::new();
        for a in &mut self.adapters {
            out.push(a.down.as_mut_slice());
            out.push(a.up.as_mut_slice());
            if a.variant == AdapterVariant::MagnitudeNormalized {
                out.push(a.magnitude.as_mut_slice());
            }
        }
        out
    }
}

/// Trains only the adapter parameters on `set` with each pair's stored
/// condition.
pub fn finetune_adapters(
    adapted: &mut AdaptedDenoiser,
    set: &[Example],
    schedule: &NoiseSchedule,
    cfg: &TrainConfig,
) -> Result<TrainReport> {
    if set.is_empty() {
        return Err(Error::Empty("fine-tuning set"));
    }
    fit(adapted, DataSource::Dataset(set), schedule, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::denoiser::checkpoint::weights_digest;
    use crate::denoiser::mlp::{Activation, CondEncoding, MlpConfig};
    use crate::denoiser::train::draw_noise;
    use crate::schedule::{build_schedule, ScheduleKind};
    use crate::world::{regular_means, GaussianWorld};
    use rand_distr::StandardNormal;

    fn base(hidden: Vec<usize>, seed: u64) -> MlpDenoiser {
        let cfg = MlpConfig {
            data_dim: 2,
            hidden,
            time_features: 4,
            cond: CondEncoding::Labels {
                num_labels: 3,
                embed_dim: 3,
            },
            activation: Activation::Silu,
        };
        MlpDenoiser::new(cfg, 50, seed).unwrap()
    }

    fn randomize(a: &mut AdaptedDenoiser, seed: u64) {
        let mut rng = seed::rng(seed);
        for ad in a.adapters_mut() {
            for u in ad.up.iter_mut() {
                let x: f64 = StandardNormal.sample(&mut rng);
                *u = 0.3 * x;
            }
            for m in ad.magnitude.iter_mut() {
                let x: f64 = StandardNormal.sample(&mut rng);
                *m *= 1.0 + 0.2 * x;
            }
        }
    }

    fn random_inputs(n: usize) -> Vec<(Vec<f64>, Condition, usize)> {
        let mut rng = seed::rng(77);
        (0..n)
            .map(|i| {
                let z = (0..2).map(|_| StandardNormal.sample(&mut rng)).collect();
                let cond = if i % 4 == 0 {
                    Condition::Null
                } else {
                    Condition::Label(i % 3)
                };
                (z, cond, 1 + (i * 7) % 50)
            })
            .collect()
    }

    #[test]
    fn identity_at_injection() {
        let net = base(vec![8, 8], 1);
        for variant in [AdapterVariant::Plain, AdapterVariant::MagnitudeNormalized] {
            let a = inject(net.clone(), &[0, 1], 4, 4.0, variant, 3).unwrap();
            for (z, cond, t) in random_inputs(100) {
                let x = net.eval_eps(&z, &cond, t).unwrap();
                let y = a.eval_eps(&z, &cond, t).unwrap();
                match variant {
                    AdapterVariant::Plain => assert_eq!(x, y),
                    AdapterVariant::MagnitudeNormalized => {
                        for (p, q) in x.iter().zip(&y) {
                            assert!((p - q).abs() <= 1e-12);
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn nonzero_up_changes_outputs() {
        let net = base(vec![8, 8], 1);
        let mut a = inject(net.clone(), &[0, 1], 2, 2.0, AdapterVariant::Plain, 3).unwrap();
        randomize(&mut a, 5);
        let (z, cond, t) = (vec![0.3, 0.1], Condition::Label(1), 10);
        assert_ne!(net.eval_eps(&z, &cond, t).unwrap(), a.eval_eps(&z, &cond, t).unwrap());
    }

    #[test]
    fn injection_errors() {
        let net = base(vec![8, 8], 1);
        assert!(inject(net.clone(), &[0], 9, 1.0, AdapterVariant::Plain, 0).is_err());
        assert!(inject(net.clone(), &[2], 3, 1.0, AdapterVariant::Plain, 0).is_err());
        assert!(inject(net.clone(), &[5], 1, 1.0, AdapterVariant::Plain, 0).is_err());
        assert!(inject(net.clone(), &[1, 1], 1, 1.0, AdapterVariant::Plain, 0).is_err());
        assert!(inject(net, &[0], 0, 1.0, AdapterVariant::Plain, 0).is_err());
    }

    #[test]
    fn trainable_parameter_count() {
        let net = base(vec![8, 6], 1);
        let shapes = net.config().layer_shapes();
        let r = 3;
        for variant in [AdapterVariant::Plain, AdapterVariant::MagnitudeNormalized] {
            let a = inject(net.clone(), &[0, 1], r, 1.0, variant, 0).unwrap();
            let mut expected = 0;
            for &l in &[0usize, 1] {
                let (i, o) = shapes[l];
                expected += r * (i + o);
                if variant == AdapterVariant::MagnitudeNormalized {
                    expected += o;
                }
            }
            assert_eq!(a.trainable_count(), expected);
        }
    }

    #[test]
    fn merged_matches_adapter_form() {
        let net = base(vec![8, 8], 2);
        for variant in [AdapterVariant::Plain, AdapterVariant::MagnitudeNormalized] {
            let mut a = inject(net.clone(), &[0, 1, 2], 2, 2.0, variant, 4).unwrap();
            randomize(&mut a, 6);
            let merged = a.merge();
            for (z, cond, t) in random_inputs(50) {
                let x = merged.eval_eps(&z, &cond, t).unwrap();
                let y = a.eval_eps(&z, &cond, t).unwrap();
                for (p, q) in x.iter().zip(&y) {
                    assert!((p - q).abs() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn adapter_gradients_match_finite_differences() {
        let s = build_schedule(50, 1e-3, 0.2, ScheduleKind::Linear).unwrap();
        let w = GaussianWorld::mixture(regular_means(2, 3, 1.0).unwrap(), 0.5, 0.0).unwrap();
        let items = w.sample_joint(4, 8);
        let mut rng = seed::rng(1);
        let draws = draw_noise(items.len(), 2, (1, 50), 0.0, &mut rng);
        for variant in [AdapterVariant::Plain, AdapterVariant::MagnitudeNormalized] {
            let mut a = inject(base(vec![3, 3], 5), &[0, 1], 2, 2.0, variant, 2).unwrap();
            randomize(&mut a, 9);
            let (_, grads) = a.loss_and_grads(&items, &draws, &s).unwrap();
            let h = 1e-5;
            for g in 0..grads.len() {
                for j in 0..grads[g].len() {
                    let orig = a.trainable_groups_mut()[g][j];
                    a.trainable_groups_mut()[g][j] = orig + h;
                    let plus = a.loss(&items, &draws, &s).unwrap();
                    a.trainable_groups_mut()[g][j] = orig - h;
                    let minus = a.loss(&items, &draws, &s).unwrap();
                    a.trainable_groups_mut()[g][j] = orig;
                    let fd = (plus - minus) / (2.0 * h);
                    let an = grads[g][j];
                    let rel = (fd - an).abs() / fd.abs().max(an.abs()).max(1e-6);
                    assert!(rel < 1e-4, "{variant:?} group {g}[{j}]: {an} vs {fd}");
                }
            }
        }
    }

    #[test]
    fn finetune_freezes_base_and_handles_edge_cases() {
        let s = build_schedule(50, 1e-3, 0.2, ScheduleKind::Linear).unwrap();
        let net = base(vec![8, 8], 3);
        let digest = weights_digest(&net);
        let set = vec![(Condition::Label(0), vec![1.0, 0.5])];
        let mut a = inject(net.clone(), &[0, 1], 2, 2.0, AdapterVariant::MagnitudeNormalized, 1)
            .unwrap();
        let before = a.clone();
        let cfg = TrainConfig {
            iterations: 0,
            batch_size: 4,
            validation_size: 4,
            ..TrainConfig::default()
        };
        finetune_adapters(&mut a, &set, &s, &cfg).unwrap();
        assert_eq!(a, before);
        let cfg = TrainConfig {
            iterations: 20,
            ..cfg
        };
        finetune_adapters(&mut a, &set, &s, &cfg).unwrap();
        assert_ne!(a.adapters(), before.adapters());
        assert_eq!(weights_digest(a.base()), digest);
        assert!(matches!(
            finetune_adapters(&mut a, &[], &s, &cfg),
            Err(Error::Empty(_))
        ));
    }

    #[test]
    fn adapter_checkpoint_round_trip() {
        let net = base(vec![8, 8], 3);
        let params = ScheduleParams {
            steps: 50,
            beta_start: 1e-3,
            beta_end: 0.2,
            kind: ScheduleKind::Linear,
        };
        let mut a = inject(net.clone(), &[0, 1], 2, 2.0, AdapterVariant::MagnitudeNormalized, 1)
            .unwrap();
        randomize(&mut a, 2);
        let bytes = a.encode_adapters(&params);
        let back = AdaptedDenoiser::decode_adapters(net.clone(), &bytes).unwrap();
        assert_eq!(back, a);
        let other = base(vec![8, 8], 4);
        assert!(AdaptedDenoiser::decode_adapters(other, &bytes).is_err());
        assert!(crate::denoiser::checkpoint::decode_base(&bytes).is_err());
    }
}
