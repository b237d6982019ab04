//! Self-supervised fine-tuning: generate a pool per prompt, keep the top-k
//! samples by point-wise MI, fine-tune low-rank adapters on them, repeat.

use std::fmt;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::adapter::{finetune_adapters, inject_with, AdaptedDenoiser, AdapterConfig};
use crate::denoiser::{Condition, Denoiser, Example, MlpDenoiser, TrainConfig, TrainReport};
use crate::error::{Error, Result};
use crate::io::{CsvData, CsvTable};
use crate::mi::{pointwise_mi_forward, pointwise_mi_generate, rank_by_mi};
use crate::sampler::{generate, SamplerConfig};
use crate::schedule::NoiseSchedule;
use crate::seed::{self, stream};
use crate::stats::{binomial_stderr, Running};
use crate::world::GaussianWorld;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Explicit prompt list (labels, repeats allowed). Empty means every
    /// label `prompts_per_label` times.
    pub prompts: Vec<usize>,
    pub prompts_per_label: usize,
    /// `M`: generations scored per prompt.
    pub pool_size: usize,
    /// `k`: samples kept per prompt.
    pub top_k: usize,
    pub rounds: usize,
    /// Fraction of each prompt's `k` kept entries drawn from real data.
    pub real_mix_fraction: f64,
    /// Forward-estimator timesteps used to score real candidates.
    pub real_mc: usize,
    /// Generations per label for the alignment score.
    pub alignment_samples: usize,
    pub alignment_guidance: f64,
    pub seed: u64,
    pub finetune: TrainConfig,
    pub sampler: SamplerConfig,
    pub adapter: AdapterConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            prompts: Vec::new(),
            prompts_per_label: 16,
            pool_size: 50,
            top_k: 1,
            rounds: 1,
            real_mix_fraction: 0.0,
            real_mc: 8,
            alignment_samples: 1000,
            alignment_guidance: 1.0,
            seed: 0,
            finetune: TrainConfig {
                iterations: 300,
                batch_size: 64,
                p_drop: 0.0,
                ..TrainConfig::default()
            },
            sampler: SamplerConfig::default(),
            adapter: AdapterConfig::default(),
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self, num_labels: usize, steps: usize) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if self.top_k == 0 || self.top_k > self.pool_size {
            return bad(format!(
                "need 1 <= k <= M, got k = {} and M = {}",
                self.top_k, self.pool_size
            ));
        }
        if self.rounds == 0 {
            return bad("rounds must be at least 1".into());
        }
        if !(0.0..=1.0).contains(&self.real_mix_fraction) {
            return bad(format!(
                "real_mix_fraction must lie in [0, 1], got {}",
                self.real_mix_fraction
            ));
        }
        if self.real_mix_fraction > 0.0 && self.real_mc == 0 {
            return bad("real_mc must be positive when mixing real samples".into());
        }
        if self.alignment_samples == 0 {
            return bad("alignment_samples must be positive".into());
        }
        if !(self.alignment_guidance.is_finite() && self.alignment_guidance >= 0.0) {
            return bad("alignment_guidance must be a non-negative number".into());
        }
        if let Some(&p) = self.prompts.iter().find(|&&p| p >= num_labels) {
            return bad(format!("prompt label {p} out of range for {num_labels} labels"));
        }
        if self.prompts.is_empty() && self.prompts_per_label == 0 {
            return Err(Error::Empty("prompt set"));
        }
        self.sampler.validate()?;
        self.finetune_config(0).validate(steps)
    }

    /// The prompt labels in evaluation order.
    pub fn prompt_labels(&self, num_labels: usize) -> Vec<usize> {
        if !self.prompts.is_empty() {
            return self.prompts.clone();
        }
        (0..self.prompts_per_label)
            .flat_map(|_| 0..num_labels)
            .collect()
    }

    /// Fine-tuning config for `round`.
    pub fn finetune_config(&self, round: usize) -> TrainConfig {
        TrainConfig {
            seed: seed::derive(self.seed, &[stream::FINETUNE, round as u64, self.finetune.seed]),
            ..self.finetune.clone()
        }
    }

    /// Real entries kept for prompt `i`, spread so the running total tracks
    /// `x * k * (i + 1)`.
    pub fn real_count(&self, i: usize) -> usize {
        let xk = self.real_mix_fraction * self.top_k as f64;
        let upto = |n: usize| (n as f64 * xk + 0.5).floor() as usize;
        (upto(i + 1) - upto(i)).min(self.top_k)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Generated,
    Real,
}

impl Provenance {
    pub fn name(self) -> &'static str {
        match self {
            Provenance::Generated => "generated",
            Provenance::Real => "real",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        match s {
            "generated" => Some(Provenance::Generated),
            "real" => Some(Provenance::Real),
            _ => None,
        }
    }
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One scored candidate.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreRow {
    pub prompt: usize,
    pub label: usize,
    pub sample_id: usize,
    pub provenance: Provenance,
    /// Regenerates the sample (sampler seed, or the real draw's RNG seed).
    pub seed: u64,
    pub mi: f64,
    pub stderr: Option<f64>,
    pub per_step_sum: f64,
    pub selected: bool,
    pub z: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ScoreTable {
    pub rows: Vec<ScoreRow>,
}

impl ScoreTable {
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let dim = self.rows.first().map_or(0, |r| r.z.len());
        let mut header: Vec<String> = [
            "prompt",
            "label",
            "sample_id",
            "provenance",
            "seed",
            "mi",
            "stderr",
            "per_step_sum",
            "selected",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect();
        header.extend((0..dim).map(|i| format!("z{i}")));
        let mut t = CsvTable::create(path, "scores", &header)?;
        for r in &self.rows {
            let mut f = vec![
                r.prompt.to_string(),
                r.label.to_string(),
                r.sample_id.to_string(),
                r.provenance.to_string(),
                r.seed.to_string(),
                r.mi.to_string(),
                r.stderr.map_or(String::new(), |s| s.to_string()),
                r.per_step_sum.to_string(),
                u8::from(r.selected).to_string(),
            ];
            f.extend(r.z.iter().map(|v| v.to_string()));
            t.row(&f)?;
        }
        t.finish()
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let data = CsvData::read(path)?;
        let prompt = data.usize_column("prompt")?;
        let label = data.usize_column("label")?;
        let sample_id = data.usize_column("sample_id")?;
        let mi = data.f64_column("mi")?;
        let step_sum = data.f64_column("per_step_sum")?;
        let selected = data.usize_column("selected")?;
        let prov = data.column("provenance")?;
        let seed_col = data.column("seed")?;
        let stderr_col = data.column("stderr")?;
        let z_cols: Vec<usize> = (0..)
            .map_while(|i| data.column(&format!("z{i}")).ok())
            .collect();
        let bad = |row: usize, what: &str| Error::file(path, format!("row {}: bad {what}", row + 1));
        let mut rows = Vec::with_capacity(data.rows.len());
        for (i, raw) in data.rows.iter().enumerate() {
            let stderr = match raw[stderr_col].as_str() {
                "" => None,
                s => Some(s.parse().map_err(|_| bad(i, "stderr"))?),
            };
            rows.push(ScoreRow {
                prompt: prompt[i],
                label: label[i],
                sample_id: sample_id[i],
                provenance: Provenance::from_name(&raw[prov]).ok_or_else(|| bad(i, "provenance"))?,
                seed: raw[seed_col].parse().map_err(|_| bad(i, "seed"))?,
                mi: mi[i],
                stderr,
                per_step_sum: step_sum[i],
                selected: match selected[i] {
                    0 => false,
                    1 => true,
                    _ => return Err(bad(i, "selected flag")),
                },
                z: z_cols
                    .iter()
                    .map(|&c| raw[c].parse().map_err(|_| bad(i, "sample coordinate")))
                    .collect::<Result<_>>()?,
            });
        }
        Ok(Self { rows })
    }

    /// Checks that within every (prompt, provenance) group the smallest kept
    /// MI is at least the largest discarded one.
    pub fn check_selection(&self) -> Result<()> {
        let mut groups: std::collections::BTreeMap<(usize, Provenance), (f64, f64)> =
            Default::default();
        for r in &self.rows {
            let g = groups
                .entry((r.prompt, r.provenance))
                .or_insert((f64::INFINITY, f64::NEG_INFINITY));
            if r.selected {
                g.0 = g.0.min(r.mi);
            } else {
                g.1 = g.1.max(r.mi);
            }
        }
        for ((prompt, prov), (kept, dropped)) in groups {
            if kept < dropped {
                return Err(Error::InvalidParameter(format!(
                    "prompt {prompt} ({prov}): kept MI {kept} below discarded MI {dropped}"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FineTuneEntry {
    pub prompt: usize,
    pub condition: Condition,
    pub sample_id: usize,
    pub z: Vec<f64>,
    pub mi: f64,
    pub provenance: Provenance,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FineTuneSet {
    pub entries: Vec<FineTuneEntry>,
    pub round: usize,
    pub pool_size: usize,
    pub top_k: usize,
}

impl FineTuneSet {
    pub fn examples(&self) -> Vec<Example> {
        self.entries
            .iter()
            .map(|e| (e.condition.clone(), e.z.clone()))
            .collect()
    }

    pub fn write_manifest(&self, path: &Path) -> Result<()> {
        let dim = self.entries.first().map_or(0, |e| e.z.len());
        let mut header: Vec<String> = [
            "round",
            "prompt",
            "condition",
            "sample_id",
            "provenance",
            "seed",
            "mi",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect();
        header.extend((0..dim).map(|i| format!("z{i}")));
        let mut t = CsvTable::create(path, "finetune-set", &header)?;
        for e in &self.entries {
            let mut f = vec![
                self.round.to_string(),
                e.prompt.to_string(),
                e.condition.to_string(),
                e.sample_id.to_string(),
                e.provenance.to_string(),
                e.seed.to_string(),
                e.mi.to_string(),
            ];
            f.extend(e.z.iter().map(|v| v.to_string()));
            t.row(&f)?;
        }
        t.finish()
    }
}

/// Seed of the `j`-th pool generation of prompt `i` in `round`.
pub fn pool_seed(base: u64, round: usize, prompt: usize, j: usize) -> u64 {
    seed::derive(base, &[stream::POOL, round as u64, prompt as u64, j as u64])
}

/// Seed of the `j`-th real candidate of prompt `i` in `round`.
pub fn real_seed(base: u64, round: usize, prompt: usize, j: usize) -> u64 {
    seed::derive(base, &[stream::REAL, round as u64, prompt as u64, j as u64])
}

fn real_candidate<D: Denoiser + ?Sized>(
    net: &D,
    world: &GaussianWorld,
    schedule: &NoiseSchedule,
    cond: &Condition,
    real_mc: usize,
    seed: u64,
) -> Result<(Vec<f64>, crate::mi::MiEstimate)> {
    let mut rng = seed::rng(seed);
    let z = world.sample_conditional(cond, &mut rng)?;
    let est = pointwise_mi_forward(net, &z, cond, schedule, real_mc, seed::derive(seed, &[stream::MI]))?;
    Ok((z, est))
}

/// Regenerates a fine-tuning entry from its stored seed.
pub fn regenerate_entry<D: Denoiser + ?Sized>(
    net: &D,
    world: &GaussianWorld,
    schedule: &NoiseSchedule,
    cfg: &PipelineConfig,
    entry: &FineTuneEntry,
) -> Result<Vec<f64>> {
    match entry.provenance {
        Provenance::Generated => {
            pointwise_mi_generate(net, &entry.condition, schedule, &cfg.sampler.with_seed(entry.seed))
                .map(|(z, _)| z)
        }
        Provenance::Real => {
            real_candidate(net, world, schedule, &entry.condition, cfg.real_mc, entry.seed).map(|(z, _)| z)
        }
    }
}

/// Scores `M` candidates per prompt and keeps the top `k` by MI (ties go to
/// the lower sample id). With real mixing, prompt `i` keeps
/// [`PipelineConfig::real_count`] real candidates, themselves MI-top among
/// `M` real draws, in place of its lowest generated picks.
pub fn build_set<D: Denoiser + ?Sized>(
    net: &D,
    world: &GaussianWorld,
    schedule: &NoiseSchedule,
    cfg: &PipelineConfig,
    round: usize,
) -> Result<(FineTuneSet, ScoreTable)> {
    let labels = world
        .num_labels()
        .ok_or_else(|| Error::InvalidParameter("pipeline needs a labeled world".into()))?;
    cfg.validate(labels, schedule.steps())?;
    let prompts = cfg.prompt_labels(labels);
    if prompts.is_empty() {
        return Err(Error::Empty("prompt set"));
    }
    let m = cfg.pool_size;

    let mut tasks: Vec<(usize, usize, Provenance)> = Vec::new();
    for i in 0..prompts.len() {
        tasks.extend((0..m).map(|j| (i, j, Provenance::Generated)));
        if cfg.real_count(i) > 0 {
            tasks.extend((0..m).map(|j| (i, j, Provenance::Real)));
        }
    }
    let mut rows: Vec<ScoreRow> = tasks
        .par_iter()
        .map(|&(i, j, provenance)| -> Result<ScoreRow> {
            let cond = Condition::Label(prompts[i]);
            let (seed, (z, est)) = match provenance {
                Provenance::Generated => {
                    let s = pool_seed(cfg.seed, round, i, j);
                    (s, pointwise_mi_generate(net, &cond, schedule, &cfg.sampler.with_seed(s))?)
                }
                Provenance::Real => {
                    let s = real_seed(cfg.seed, round, i, j);
                    (s, real_candidate(net, world, schedule, &cond, cfg.real_mc, s)?)
                }
            };
            Ok(ScoreRow {
                prompt: i,
                label: prompts[i],
                sample_id: j,
                provenance,
                seed,
                mi: est.value,
                stderr: est.stderr,
                per_step_sum: est.per_step_sum(),
                selected: false,
                z,
            })
        })
        .collect::<Result<_>>()?;

    let mut entries = Vec::new();
    let mut start = 0;
    for i in 0..prompts.len() {
        let n_real = cfg.real_count(i);
        let group_len = if n_real > 0 { 2 * m } else { m };
        let group = &mut rows[start..start + group_len];
        for (offset, keep) in [(0, cfg.top_k - n_real), (m, n_real)] {
            if keep == 0 {
                continue;
            }
            let pool = &mut group[offset..offset + m];
            let mi: Vec<f64> = pool.iter().map(|r| r.mi).collect();
            for &idx in &rank_by_mi(&mi)[..keep] {
                let r = &mut pool[idx];
                r.selected = true;
                entries.push(FineTuneEntry {
                    prompt: i,
                    condition: Condition::Label(r.label),
                    sample_id: r.sample_id,
                    z: r.z.clone(),
                    mi: r.mi,
                    provenance: r.provenance,
                    seed: r.seed,
                });
            }
        }
        start += group_len;
    }
    Ok((
        FineTuneSet {
            entries,
            round,
            pool_size: m,
            top_k: cfg.top_k,
        },
        ScoreTable { rows },
    ))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlignmentScore {
    pub fraction: f64,
    pub stderr: f64,
    pub n: usize,
}

/// Fraction of generations landing nearest their requested mode, over
/// `n_per_label` generations for every label.
pub fn alignment_score<D: Denoiser + ?Sized>(
    net: &D,
    world: &GaussianWorld,
    schedule: &NoiseSchedule,
    n_per_label: usize,
    guidance: f64,
    seed: u64,
) -> Result<AlignmentScore> {
    let labels = world
        .num_labels()
        .ok_or_else(|| Error::InvalidParameter("alignment needs a labeled world".into()))?;
    if n_per_label == 0 {
        return Err(Error::Empty("alignment sample set"));
    }
    let cfg = SamplerConfig {
        guidance,
        ..SamplerConfig::default()
    };
    cfg.validate()?;
    let hits: usize = (0..labels * n_per_label)
        .into_par_iter()
        .map(|task| -> Result<usize> {
            let (c, j) = (task / n_per_label, task % n_per_label);
            let s = seed::derive(seed, &[c as u64, j as u64]);
            let z = generate(net, &Condition::Label(c), schedule, &cfg.with_seed(s))?;
            Ok(usize::from(world.nearest_mean(&z) == Some(c)))
        })
        .sum::<Result<usize>>()?;
    let n = labels * n_per_label;
    let fraction = hits as f64 / n as f64;
    Ok(AlignmentScore {
        fraction,
        stderr: binomial_stderr(fraction, n),
        n,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoundMetrics {
    /// 1-based.
    pub round: usize,
    pub alignment_pre: AlignmentScore,
    pub alignment_post: AlignmentScore,
    pub mean_pool_mi: f64,
    pub set_size: usize,
    pub finetune_loss: f64,
}

pub fn write_metrics_csv(path: &Path, rows: &[RoundMetrics]) -> Result<()> {
    let mut t = CsvTable::create(
        path,
        "round-metrics",
        &[
            "round",
            "alignment_pre",
            "alignment_pre_stderr",
            "alignment_post",
            "alignment_post_stderr",
            "alignment_n",
            "mean_pool_mi",
            "set_size",
            "finetune_loss",
        ],
    )?;
    for m in rows {
        t.row(&[
            m.round.to_string(),
            m.alignment_pre.fraction.to_string(),
            m.alignment_pre.stderr.to_string(),
            m.alignment_post.fraction.to_string(),
            m.alignment_post.stderr.to_string(),
            m.alignment_post.n.to_string(),
            m.mean_pool_mi.to_string(),
            m.set_size.to_string(),
            m.finetune_loss.to_string(),
        ])?;
    }
    t.finish()
}

/// Reads a table written by [`write_metrics_csv`].
pub fn read_metrics_csv(path: &Path) -> Result<Vec<RoundMetrics>> {
    let data = CsvData::read(path)?;
    let round = data.usize_column("round")?;
    let pre = data.f64_column("alignment_pre")?;
    let pre_se = data.f64_column("alignment_pre_stderr")?;
    let post = data.f64_column("alignment_post")?;
    let post_se = data.f64_column("alignment_post_stderr")?;
    let n = data.usize_column("alignment_n")?;
    let mi = data.f64_column("mean_pool_mi")?;
    let size = data.usize_column("set_size")?;
    let loss = data.f64_column("finetune_loss")?;
    Ok((0..data.rows.len())
        .map(|i| RoundMetrics {
            round: round[i],
            alignment_pre: AlignmentScore {
                fraction: pre[i],
                stderr: pre_se[i],
                n: n[i],
            },
            alignment_post: AlignmentScore {
                fraction: post[i],
                stderr: post_se[i],
                n: n[i],
            },
            mean_pool_mi: mi[i],
            set_size: size[i],
            finetune_loss: loss[i],
        })
        .collect())
}

pub struct RoundOutput {
    /// Base with this round's adapters merged in; the next round starts here.
    pub net: MlpDenoiser,
    pub adapted: AdaptedDenoiser,
    pub set: FineTuneSet,
    pub scores: ScoreTable,
    pub metrics: RoundMetrics,
    pub train: TrainReport,
}

/// Seed shared by every alignment evaluation of a run, so pre and post
/// scores use common random numbers.
pub fn alignment_seed(cfg: &PipelineConfig) -> u64 {
    seed::derive(cfg.seed, &[stream::ALIGNMENT])
}

/// One round: score and select from `net`'s own generations, fine-tune fresh
/// adapters on the selection, and merge them. `round` is 1-based.
pub fn run_round(
    net: &MlpDenoiser,
    world: &GaussianWorld,
    schedule: &NoiseSchedule,
    cfg: &PipelineConfig,
    round: usize,
    alignment_pre: Option<AlignmentScore>,
) -> Result<RoundOutput> {
    let aseed = alignment_seed(cfg);
    let align = |n: &MlpDenoiser| {
        alignment_score(n, world, schedule, cfg.alignment_samples, cfg.alignment_guidance, aseed)
    };
    let alignment_pre = match alignment_pre {
        Some(a) => a,
        None => align(net)?,
    };
    let (set, scores) = build_set(net, world, schedule, cfg, round)?;
    let mean_pool_mi = scores
        .rows
        .iter()
        .filter(|r| r.provenance == Provenance::Generated)
        .map(|r| r.mi)
        .collect::<Running>()
        .mean();
    let mut adapted = inject_with(
        net.clone(),
        &cfg.adapter,
        seed::derive(cfg.seed, &[stream::INIT, round as u64]),
    )?;
    let train = finetune_adapters(
        &mut adapted,
        &set.examples(),
        schedule,
        &cfg.finetune_config(round),
    )?;
    let merged = adapted.merge();
    let alignment_post = align(&merged)?;
    let finetune_loss = train.losses.last().copied().unwrap_or(f64::NAN);
    Ok(RoundOutput {
        net: merged,
        adapted,
        metrics: RoundMetrics {
            round,
            alignment_pre,
            alignment_post,
            mean_pool_mi,
            set_size: set.entries.len(),
            finetune_loss,
        },
        set,
        scores,
        train,
    })
}

/// Runs `cfg.rounds` rounds from `base`, calling `on_round` after each.
pub fn run_pipeline(
    base: &MlpDenoiser,
    world: &GaussianWorld,
    schedule: &NoiseSchedule,
    cfg: &PipelineConfig,
    mut on_round: impl FnMut(&RoundOutput) -> Result<()>,
) -> Result<Vec<RoundMetrics>> {
    let mut net = base.clone();
    let mut pre = None;
    let mut out = Vec::new();
    for round in 1..=cfg.rounds {
        let r = run_round(&net, world, schedule, cfg, round, pre)?;
        on_round(&r)?;
        pre = Some(r.metrics.alignment_post);
        out.push(r.metrics.clone());
        net = r.net;
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub pool_size: usize,
    pub top_k: usize,
    pub real_mix_fraction: f64,
    pub metrics: RoundMetrics,
}

/// One round per `(M, k, x)` setting from the same base.
pub fn sweep(
    base: &MlpDenoiser,
    world: &GaussianWorld,
    schedule: &NoiseSchedule,
    cfg: &PipelineConfig,
    settings: &[(usize, usize, f64)],
) -> Result<Vec<SweepRow>> {
    let labels = world.num_labels().unwrap_or(0);
    let pre = alignment_score(
        base,
        world,
        schedule,
        cfg.alignment_samples,
        cfg.alignment_guidance,
        alignment_seed(cfg),
    )?;
    // validate every setting before running any
    let configs: Vec<PipelineConfig> = settings
        .iter()
        .map(|&(m, k, x)| {
            let c = PipelineConfig {
                pool_size: m,
                top_k: k,
                real_mix_fraction: x,
                ..cfg.clone()
            };
            c.validate(labels, schedule.steps()).map(|_| c)
        })
        .collect::<Result<_>>()?;
    configs
        .iter()
        .map(|c| {
            let r = run_round(base, world, schedule, c, 1, Some(pre))?;
            Ok(SweepRow {
                pool_size: c.pool_size,
                top_k: c.top_k,
                real_mix_fraction: c.real_mix_fraction,
                metrics: r.metrics,
            })
        })
        .collect()
}

/// Selection ratios `k/M` of the canned sweep.
pub const SELECTION_SWEEP: [(usize, usize); 5] = [(50, 7), (30, 1), (50, 1), (100, 1), (500, 1)];
/// Real-data fractions of the canned mixing sweep.
pub const REAL_MIX_SWEEP: [f64; 3] = [0.25, 0.5, 0.9];

pub fn write_sweep_csv(path: &Path, rows: &[SweepRow]) -> Result<()> {
    let mut t = CsvTable::create(
        path,
        "sweep",
        &[
            "pool_size",
            "top_k",
            "real_mix_fraction",
            "alignment_pre",
            "alignment_post",
            "alignment_post_stderr",
            "mean_pool_mi",
        ],
    )?;
    for r in rows {
        t.row(&[
            r.pool_size.to_string(),
            r.top_k.to_string(),
            r.real_mix_fraction.to_string(),
            r.metrics.alignment_pre.fraction.to_string(),
            r.metrics.alignment_post.fraction.to_string(),
            r.metrics.alignment_post.stderr.to_string(),
            r.metrics.mean_pool_mi.to_string(),
        ])?;
    }
    t.finish()
}
