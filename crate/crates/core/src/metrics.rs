//! Rank agreement between scoring functions.

use std::fmt;
use std::path::Path;

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::denoiser::{Condition, Denoiser};
use crate::error::{Error, Result};
use crate::io::CsvTable;
use crate::mi::{pointwise_mi_generate, rank_by_mi};
use crate::sampler::SamplerConfig;
use crate::schedule::NoiseSchedule;
use crate::seed::{self, stream};
use crate::stats::Running;
use crate::world::GaussianWorld;

/// Kendall's tau-a between two strict rankings of the same ids (each slice
/// lists ids from best to worst).
pub fn kendall_tau(a: &[usize], b: &[usize]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Ranking(format!(
            "length mismatch: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    let n = a.len();
    if n < 2 {
        return Err(Error::Ranking("need at least two items".into()));
    }
    let max_id = a.iter().chain(b).copied().max().unwrap_or(0);
    let mut pos_a = vec![usize::MAX; max_id + 1];
    let mut pos_b = vec![usize::MAX; max_id + 1];
    for (i, &id) in a.iter().enumerate() {
        if pos_a[id] != usize::MAX {
            return Err(Error::Ranking(format!("duplicate id {id}")));
        }
        pos_a[id] = i;
    }
    for (i, &id) in b.iter().enumerate() {
        if pos_b[id] != usize::MAX {
            return Err(Error::Ranking(format!("duplicate id {id}")));
        }
        if pos_a[id] == usize::MAX {
            return Err(Error::Ranking(format!("id {id} missing from first ranking")));
        }
        pos_b[id] = i;
    }
    let mut score: i64 = 0;
    for i in 0..n {
        for j in i + 1..n {
            // a ranks a[i] above a[j]; concordant if b agrees
            if pos_b[a[i]] < pos_b[a[j]] {
                score += 1;
            } else {
                score -= 1;
            }
        }
    }
    Ok(score as f64 / (n * (n - 1) / 2) as f64)
}

/// Orders `ids` by descending score, breaking exact ties by lower id.
pub fn rank_ids(ids: &[usize], scores: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..ids.len()).collect();
    order.sort_by(|&x, &y| scores[y].total_cmp(&scores[x]).then(ids[x].cmp(&ids[y])));
    order.into_iter().map(|i| ids[i]).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    /// Point-wise MI from the fused estimator.
    Mi,
    /// `log q(z | c) - log q(z)` under the world's densities.
    LogLikelihoodRatio,
    /// 1 when the nearest mixture mean is the requested label.
    Alignment,
    /// Independent uniform scores.
    Random,
}

impl Metric {
    pub const ALL: [Metric; 4] = [
        Metric::Mi,
        Metric::LogLikelihoodRatio,
        Metric::Alignment,
        Metric::Random,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Metric::Mi => "mi",
            Metric::LogLikelihoodRatio => "llr",
            Metric::Alignment => "alignment",
            Metric::Random => "random",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Metric::ALL.into_iter().find(|m| m.name() == s)
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Scores of one item set under several metrics.
#[derive(Debug, Clone, PartialEq)]
pub struct RankTable {
    pub ids: Vec<usize>,
    pub scores: Vec<(Metric, Vec<f64>)>,
}

impl RankTable {
    pub fn new(ids: Vec<usize>) -> Self {
        Self {
            ids,
            scores: Vec::new(),
        }
    }

    pub fn add(&mut self, metric: Metric, scores: Vec<f64>) -> Result<()> {
        if scores.len() != self.ids.len() {
            return Err(Error::DimensionMismatch {
                expected: self.ids.len(),
                got: scores.len(),
            });
        }
        self.scores.push((metric, scores));
        Ok(())
    }

    pub fn ranking(&self, metric: Metric) -> Option<Vec<usize>> {
        self.scores
            .iter()
            .find(|(m, _)| *m == metric)
            .map(|(_, s)| rank_ids(&self.ids, s))
    }

    /// Restricts the table to the given positions.
    pub fn subset(&self, positions: &[usize]) -> RankTable {
        RankTable {
            ids: positions.iter().map(|&p| self.ids[p]).collect(),
            scores: self
                .scores
                .iter()
                .map(|(m, s)| (*m, positions.iter().map(|&p| s[p]).collect()))
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgreementRow {
    pub first: Metric,
    pub second: Metric,
    pub mean_tau: f64,
    pub stderr: f64,
    pub n: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AgreementConfig {
    pub prompts: usize,
    pub pool_size: usize,
    pub sampler: SamplerConfig,
    pub seed: u64,
}

impl Default for AgreementConfig {
    fn default() -> Self {
        Self {
            prompts: 64,
            pool_size: 50,
            sampler: SamplerConfig::default(),
            seed: 0,
        }
    }
}

/// Positions of ranks `1`, `ceil(M/2)` and `M` in an `M`-item ranking.
pub fn representative_positions(m: usize) -> [usize; 3] {
    [0, m.div_ceil(2) - 1, m - 1]
}

/// For each prompt (label `i mod C`), scores `pool_size` generations under
/// every [`Metric`], keeps the MI-rank `1`, `ceil(M/2)`, `M` triplet, and
/// averages Kendall's tau between each metric pair over prompts.
pub fn agreement_study<D: Denoiser + ?Sized>(
    net: &D,
    world: &GaussianWorld,
    schedule: &NoiseSchedule,
    cfg: &AgreementConfig,
) -> Result<Vec<AgreementRow>> {
    let labels = world
        .num_labels()
        .ok_or_else(|| Error::InvalidParameter("agreement study needs a labeled world".into()))?;
    if cfg.pool_size < 3 {
        return Err(Error::InvalidParameter("pool_size must be at least 3".into()));
    }
    if cfg.prompts == 0 {
        return Err(Error::Empty("prompt set"));
    }
    let taus: Vec<Vec<f64>> = (0..cfg.prompts)
        .into_par_iter()
        .map(|i| -> Result<Vec<f64>> {
            let cond = Condition::Label(i % labels);
            let mut mi = Vec::with_capacity(cfg.pool_size);
            let mut llr = Vec::with_capacity(cfg.pool_size);
            let mut aligned = Vec::with_capacity(cfg.pool_size);
            for j in 0..cfg.pool_size {
                let s = seed::derive(cfg.seed, &[stream::AGREEMENT, i as u64, j as u64]);
                let (z, est) = pointwise_mi_generate(net, &cond, schedule, &cfg.sampler.with_seed(s))?;
                mi.push(est.value);
                llr.push(world.log_likelihood_ratio(&z, &cond)?);
                aligned.push(if world.nearest_mean(&z) == cond.label() { 1.0 } else { 0.0 });
            }
            let mut rng = seed::rng(seed::derive(cfg.seed, &[stream::AGREEMENT, i as u64, u64::MAX]));
            let random = (0..cfg.pool_size).map(|_| rng.random::<f64>()).collect();
            let mut table = RankTable::new((0..cfg.pool_size).collect());
            table.add(Metric::Mi, mi.clone())?;
            table.add(Metric::LogLikelihoodRatio, llr)?;
            table.add(Metric::Alignment, aligned)?;
            table.add(Metric::Random, random)?;
            let order = rank_by_mi(&mi);
            let picks: Vec<usize> = representative_positions(cfg.pool_size)
                .iter()
                .map(|&p| order[p])
                .collect();
            let triplet = table.subset(&picks);
            let mut out = Vec::new();
            for (a, b) in metric_pairs() {
                let ra = triplet.ranking(a).expect("metric present");
                let rb = triplet.ranking(b).expect("metric present");
                out.push(kendall_tau(&ra, &rb)?);
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    Ok(metric_pairs()
        .into_iter()
        .enumerate()
        .map(|(k, (first, second))| {
            let stats: Running = taus.iter().map(|t| t[k]).collect();
            AgreementRow {
                first,
                second,
                mean_tau: stats.mean(),
                stderr: if stats.count() > 1 { stats.stderr() } else { 0.0 },
                n: stats.count(),
            }
        })
        .collect())
}

/// Every unordered pair of metrics, self-pairs included.
pub fn metric_pairs() -> Vec<(Metric, Metric)> {
    let mut out = Vec::new();
    for (i, &a) in Metric::ALL.iter().enumerate() {
        for &b in &Metric::ALL[i..] {
            out.push((a, b));
        }
    }
    out
}

pub fn write_agreement_csv(path: &Path, rows: &[AgreementRow]) -> Result<()> {
    let mut t = CsvTable::create(path, "agreement", &["first", "second", "mean_tau", "stderr", "n"])?;
    for r in rows {
        t.row(&[
            r.first.name().to_string(),
            r.second.name().to_string(),
            r.mean_tau.to_string(),
            r.stderr.to_string(),
            r.n.to_string(),
        ])?;
    }
    t.finish()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn tau_reference_cases() {
        assert_eq!(kendall_tau(&[1, 2, 3, 4], &[1, 2, 3, 4]).unwrap(), 1.0);
        assert_eq!(kendall_tau(&[1, 2, 3, 4], &[4, 3, 2, 1]).unwrap(), -1.0);
        let t = kendall_tau(&[1, 2, 3], &[1, 3, 2]).unwrap();
        assert!((t - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn tau_errors() {
        assert!(kendall_tau(&[1, 2], &[1, 2, 3]).is_err());
        assert!(kendall_tau(&[1], &[1]).is_err());
        assert!(kendall_tau(&[1, 1], &[1, 2]).is_err());
        assert!(kendall_tau(&[1, 2], &[2, 2]).is_err());
        assert!(kendall_tau(&[1, 2], &[1, 3]).is_err());
    }

    #[test]
    fn ties_broken_by_id() {
        assert_eq!(rank_ids(&[5, 2, 9], &[1.0, 1.0, 1.0]), vec![2, 5, 9]);
        assert_eq!(rank_ids(&[5, 2, 9], &[0.0, 1.0, 3.0]), vec![9, 2, 5]);
    }

    #[test]
    fn representative_triplets() {
        assert_eq!(representative_positions(50), [0, 24, 49]);
        assert_eq!(representative_positions(3), [0, 1, 2]);
        assert_eq!(representative_positions(5), [0, 2, 4]);
    }

    #[test]
    fn pairs_cover_matrix() {
        assert_eq!(metric_pairs().len(), 10);
        assert!(metric_pairs().contains(&(Metric::Mi, Metric::Mi)));
    }

    fn permutation() -> impl Strategy<Value = Vec<usize>> {
        (2usize..12).prop_flat_map(|n| Just((0..n).collect::<Vec<_>>()).prop_shuffle())
    }

    proptest! {
        #[test]
        fn reversing_negates(a in permutation(), seed in 0u64..1000) {
            let mut b = a.clone();
            let mut rng = seed::rng(seed);
            for i in (1..b.len()).rev() {
                let j = rng.random_range(0..=i);
                b.swap(i, j);
            }
            let t = kendall_tau(&a, &b).unwrap();
            let rev: Vec<usize> = b.iter().rev().copied().collect();
            prop_assert!((kendall_tau(&a, &rev).unwrap() + t).abs() < 1e-12);
            prop_assert!((-1.0..=1.0).contains(&t));
            prop_assert_eq!(kendall_tau(&a, &b).unwrap(), kendall_tau(&b, &a).unwrap());
        }

        #[test]
        fn monotone_transform_invariance(scores in proptest::collection::vec(-5.0f64..5.0, 2..15)) {
            let ids: Vec<usize> = (0..scores.len()).collect();
            let base = rank_ids(&ids, &scores);
            let transformed: Vec<f64> = scores.iter().map(|s| (2.0 * s).exp() + 3.0).collect();
            let other = rank_ids(&ids, &transformed);
            prop_assert_eq!(kendall_tau(&base, &other).unwrap(), 1.0);
        }
    }
}
