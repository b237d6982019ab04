//! Command-line front end: subcommands, run directories and exit codes.

use std::ffi::OsString;
use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde_json::{json, Value};

use crate::adapter::AdaptedDenoiser;
use crate::config::{AgreementDenoiser, MiMode, RunConfig};
use crate::denoiser::checkpoint::{decode_base, hex, peek_schedule, save_base, weights_digest};
use crate::denoiser::{train, AnalyticDenoiser, Condition, DataSource, Denoiser, MlpDenoiser, TrainReport};
use crate::error::{Error, Result};
use crate::io::CsvTable;
use crate::metrics::{agreement_study, write_agreement_csv};
use crate::mi::{pointwise_mi_forward, pointwise_mi_generate, MiEstimate};
use crate::pipeline::{
    read_metrics_csv, run_round, sweep, write_metrics_csv, write_sweep_csv, RoundOutput, REAL_MIX_SWEEP,
    SELECTION_SWEEP,
};
use crate::sampler::{standard_normal, SamplerConfig};
use crate::schedule::NoiseSchedule;
use crate::seed;
use crate::stats::Running;
use crate::world::GaussianWorld;

/// Environment variable naming the default output root.
pub const OUT_ENV: &str = "MITUNE_OUT";
pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "mitune", version, about = "Point-wise MI estimation and MI-filtered fine-tuning on toy diffusion worlds")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a base denoiser; writes model.ckpt and loss.csv.
    Train(CommonArgs),
    /// Score samples with the point-wise MI estimator; writes mi.csv.
    Mi(MiArgs),
    /// Run the select-and-fine-tune rounds; writes a full run directory.
    Mitune(MituneArgs),
    /// Rank agreement between MI and reference scores; writes agreement.csv.
    Agreement(ModelArgs),
    /// One-round sweeps over selection ratio or real-data fraction.
    Sweep(SweepArgs),
    /// Plots and summary tables for a run directory.
    Report(ReportArgs),
}

#[derive(Debug, Clone, Default, Args)]
pub struct CommonArgs {
    /// TOML run configuration; defaults apply when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory (overrides the config and the MITUNE_OUT root).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Global seed (overrides the config).
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads for parallel generation.
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct ModelArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Base checkpoint to load.
    #[arg(long, conflicts_with = "oracle")]
    pub checkpoint: Option<PathBuf>,
    /// Use the analytic denoiser of the configured world.
    #[arg(long)]
    pub oracle: bool,
}

#[derive(Debug, Clone, Args)]
pub struct MiArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, value_enum)]
    pub mode: Option<MiMode>,
}

#[derive(Debug, Clone, Args)]
pub struct MituneArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Start from this base checkpoint instead of training one.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Continue an interrupted run in the output directory.
    #[arg(long)]
    pub resume: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SweepKind {
    Selection,
    RealMix,
}

#[derive(Debug, Clone, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Base checkpoint to sweep from instead of training one
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Selection ratios (M, k) or real-data fractions
    #[arg(long, value_enum)]
    pub kind: SweepKind,
}

#[derive(Debug, Clone, Args)]
pub struct ReportArgs {
    pub run_dir: PathBuf,
}

/// Parses `args`, runs the command and prints one JSON line (stdout on
/// success, stderr on failure). Returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match run(cli) {
        Ok(v) => {
            println!("{v}");
            EXIT_OK
        }
        Err(e) => {
            let code = exit_code(&e);
            eprintln!(
                "{}",
                json!({"error": {"kind": e.kind(), "message": e.to_string(), "exit_code": code}})
            );
            code
        }
    }
}

pub fn exit_code(e: &Error) -> i32 {
    if e.is_config() {
        EXIT_CONFIG
    } else {
        EXIT_RUNTIME
    }
}

pub fn run(cli: Cli) -> Result<Value> {
    let threads = match &cli.command {
        Command::Train(c) => c.threads,
        Command::Mi(a) => a.model.common.threads,
        Command::Mitune(a) => a.common.threads,
        Command::Agreement(a) => a.common.threads,
        Command::Sweep(a) => a.common.threads,
        Command::Report(_) => None,
    };
    let work = move || match cli.command {
        Command::Train(c) => cmd_train(&c),
        Command::Mi(a) => cmd_mi(&a),
        Command::Mitune(a) => cmd_mitune(&a),
        Command::Agreement(a) => cmd_agreement(&a),
        Command::Sweep(a) => cmd_sweep(&a),
        Command::Report(a) => crate::report::generate(&a.run_dir).map(|r| r.to_json()),
    };
    match threads {
        Some(0) => Err(Error::InvalidParameter("--threads must be positive".into())),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::InvalidParameter(format!("thread pool: {e}")))?
            .install(work),
        None => work(),
    }
}

/// Loads the config and resolves the output directory.
pub fn prepare(args: &CommonArgs) -> Result<(RunConfig, PathBuf)> {
    let mut cfg = match &args.config {
        Some(p) => RunConfig::load(p)?,
        None => {
            let c = RunConfig::default();
            c.validate()?;
            c
        }
    };
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    let stem = args
        .config
        .as_ref()
        .and_then(|p| p.file_stem())
        .map_or_else(|| "default".into(), |s| s.to_string_lossy().into_owned());
    let out = args
        .out
        .clone()
        .or_else(|| cfg.output.dir.clone())
        .or_else(|| std::env::var_os(OUT_ENV).map(|root| PathBuf::from(root).join(&stem)))
        .unwrap_or_else(|| Path::new("runs").join(&stem));
    Ok((cfg, out))
}

/// The config as persisted in a run directory (output location stripped).
pub fn snapshot(cfg: &RunConfig) -> Result<String> {
    let mut c = cfg.clone();
    c.output.dir = None;
    c.to_toml()
}

/// Advisory lock held for the lifetime of a command writing to a run
/// directory.
pub struct RunLock {
    path: PathBuf,
}

pub const LOCK_FILE: &str = ".mitune.lock";

impl RunLock {
    pub fn acquire(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let path = dir.join(LOCK_FILE);
        let mut f = OpenOptions::new()
            .write(true)
            .create_new(true)
            .open(&path)
            .map_err(|e| {
                if e.kind() == std::io::ErrorKind::AlreadyExists {
                    Error::file(
                        &path,
                        "run directory is locked by another process (delete the lock file if no run is active)",
                    )
                } else {
                    Error::io(&path, e)
                }
            })?;
        let _ = writeln!(f, "{}", std::process::id());
        Ok(Self { path })
    }
}

impl Drop for RunLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

/// Either the analytic oracle or a trained network.
pub enum Net {
    Oracle(AnalyticDenoiser),
    Model(MlpDenoiser),
}

impl Denoiser for Net {
    fn data_dim(&self) -> usize {
        match self {
            Net::Oracle(o) => o.data_dim(),
            Net::Model(m) => m.data_dim(),
        }
    }

    fn eval_eps(&self, z_t: &[f64], cond: &Condition, t: usize) -> Result<Vec<f64>> {
        match self {
            Net::Oracle(o) => o.eval_eps(z_t, cond, t),
            Net::Model(m) => m.eval_eps(z_t, cond, t),
        }
    }
}

/// Loads a base checkpoint, refusing schedule or architecture mismatches.
pub fn load_checked(path: &Path, cfg: &RunConfig, world: &GaussianWorld) -> Result<MlpDenoiser> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let header = peek_schedule(&bytes)
        .map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))?;
    if header != cfg.schedule {
        return Err(Error::Checkpoint(format!(
            "{}: schedule in checkpoint header (T={}, beta {}..{}) does not match config (T={}, beta {}..{})",
            path.display(),
            header.steps,
            header.beta_start,
            header.beta_end,
            cfg.schedule.steps,
            cfg.schedule.beta_start,
            cfg.schedule.beta_end
        )));
    }
    let (net, _) = decode_base(&bytes).map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))?;
    let expected = cfg.mlp_config(world);
    if net.config() != &expected {
        return Err(Error::Checkpoint(format!(
            "{}: network architecture {:?} does not match the configured {:?}",
            path.display(),
            net.config(),
            expected
        )));
    }
    Ok(net)
}

fn resolve_net(args: &ModelArgs, cfg: &RunConfig, world: &GaussianWorld, schedule: &NoiseSchedule, oracle_default: bool) -> Result<Net> {
    match (&args.checkpoint, args.oracle || oracle_default) {
        (Some(p), _) => Ok(Net::Model(load_checked(p, cfg, world)?)),
        (None, true) => Ok(Net::Oracle(AnalyticDenoiser::new(world.clone(), schedule.clone()))),
        (None, false) => Err(Error::Config("pass --checkpoint PATH or --oracle".into())),
    }
}

/// Trains the configured base network from scratch.
pub fn train_base(cfg: &RunConfig, world: &GaussianWorld, schedule: &NoiseSchedule) -> Result<(MlpDenoiser, TrainReport)> {
    let mut net = MlpDenoiser::new(cfg.mlp_config(world), schedule.steps(), cfg.model_seed())?;
    let report = train(&mut net, DataSource::World(world), schedule, &cfg.train_config())?;
    Ok((net, report))
}

fn setup(args: &CommonArgs) -> Result<(RunConfig, PathBuf, GaussianWorld, NoiseSchedule)> {
    let (cfg, out) = prepare(args)?;
    let world = cfg.build_world()?;
    let schedule = cfg.schedule.build()?;
    Ok((cfg, out, world, schedule))
}

fn cmd_train(args: &CommonArgs) -> Result<Value> {
    let (cfg, out, world, schedule) = setup(args)?;
    let _lock = RunLock::acquire(&out)?;
    write_file(&out.join("config.toml"), snapshot(&cfg)?.as_bytes())?;
    let (net, report) = train_base(&cfg, &world, &schedule)?;
    let ckpt = out.join("model.ckpt");
    save_base(&ckpt, &net, &cfg.schedule)?;
    report.write_loss_csv(&out.join("loss.csv"))?;
    Ok(json!({
        "command": "train",
        "out": out,
        "checkpoint": ckpt,
        "validation_initial": report.validation_initial,
        "validation_final": report.validation_final,
        "weights_sha256": hex(&weights_digest(&net)),
    }))
}

struct MiRow {
    prompt: usize,
    seed: u64,
    condition: Condition,
    estimate: MiEstimate,
}

fn cmd_mi(args: &MiArgs) -> Result<Value> {
    let (cfg, out, world, schedule) = setup(&args.model.common)?;
    let net = resolve_net(&args.model, &cfg, &world, &schedule, false)?;
    let mode = args.mode.unwrap_or(cfg.mi.mode);
    let _lock = RunLock::acquire(&out)?;
    write_file(&out.join("config.toml"), snapshot(&cfg)?.as_bytes())?;
    let base = cfg.mi_seed();
    let rows: Vec<MiRow> = (0..cfg.mi.samples)
        .into_par_iter()
        .map(|i| -> Result<MiRow> {
            let (prompt, condition) = match world.num_labels() {
                Some(c) => (i % c, Condition::Label(i % c)),
                None => {
                    let mut rng = seed::rng(seed::derive(base, &[i as u64, 0]));
                    (i, Condition::Vector(standard_normal(&mut rng, world.dim())))
                }
            };
            let (seed, estimate) = match mode {
                MiMode::Generate => {
                    let s = seed::derive(base, &[i as u64, 1]);
                    let sampler = SamplerConfig {
                        guidance: cfg.mi.guidance,
                        seed: s,
                        ..SamplerConfig::default()
                    };
                    (s, pointwise_mi_generate(&net, &condition, &schedule, &sampler)?.1)
                }
                MiMode::Forward => {
                    let s = seed::derive(base, &[i as u64, 2]);
                    let z = world.sample_conditional(&condition, &mut seed::rng(s))?;
                    let est = pointwise_mi_forward(&net, &z, &condition, &schedule, cfg.mi.n_mc, seed::derive(s, &[1]))?;
                    (s, est)
                }
            };
            Ok(MiRow {
                prompt,
                seed,
                condition,
                estimate,
            })
        })
        .collect::<Result<_>>()?;
    let path = out.join("mi.csv");
    let mut t = CsvTable::create(
        &path,
        "mi",
        &["prompt", "sample_id", "seed", "condition", "mi", "stderr", "per_step_sum"],
    )?;
    let mut stats = Running::default();
    for (i, r) in rows.iter().enumerate() {
        stats.push(r.estimate.value);
        t.row(&[
            r.prompt.to_string(),
            i.to_string(),
            r.seed.to_string(),
            r.condition.to_string(),
            r.estimate.value.to_string(),
            r.estimate.stderr.map_or(String::new(), |s| s.to_string()),
            r.estimate.per_step_sum().to_string(),
        ])?;
    }
    t.finish()?;
    let reference = world.reference_mi(100_000, seed::derive(base, &[u64::MAX]));
    let stderr = if stats.count() > 1 { stats.stderr() } else { 0.0 };
    Ok(json!({
        "command": "mi",
        "out": out,
        "mode": mode,
        "samples": stats.count(),
        "mean_mi": stats.mean(),
        "stderr": stderr,
        "reference_mi": reference.value,
        "reference_stderr": reference.stderr,
    }))
}

fn round_dir(out: &Path, round: usize) -> PathBuf {
    out.join(format!("round_{round}"))
}

fn persist_round(out: &Path, r: &RoundOutput, cfg: &RunConfig) -> Result<()> {
    let dir = round_dir(out, r.metrics.round);
    create_dir(&dir)?;
    r.scores.write_csv(&dir.join("scores.csv"))?;
    r.set.write_manifest(&dir.join("finetune_set.csv"))?;
    r.train.write_loss_csv(&dir.join("finetune_loss.csv"))?;
    write_file(&dir.join("adapters.ckpt"), &r.adapted.encode_adapters(&cfg.schedule))?;
    save_base(&dir.join("model.ckpt"), &r.net, &cfg.schedule)
}

fn cmd_mitune(args: &MituneArgs) -> Result<Value> {
    let (cfg, out, world, schedule) = setup(&args.common)?;
    if world.num_labels().is_none() {
        return Err(Error::Config("mitune needs a labeled_mixture world".into()));
    }
    let base_from = args
        .checkpoint
        .as_ref()
        .map(|p| load_checked(p, &cfg, &world))
        .transpose()?;
    let _lock = RunLock::acquire(&out)?;
    let snap = snapshot(&cfg)?;
    let config_path = out.join("config.toml");
    let metrics_path = out.join("metrics.csv");
    let mut done = Vec::new();
    if args.resume {
        let existing = fs::read_to_string(&config_path).map_err(|e| Error::io(&config_path, e))?;
        if existing != snap {
            return Err(Error::Config(format!(
                "{} differs from the requested config; cannot resume",
                config_path.display()
            )));
        }
        if metrics_path.exists() {
            done = read_metrics_csv(&metrics_path)?;
        }
    } else {
        write_file(&config_path, snap.as_bytes())?;
    }

    let base_dir = out.join("base");
    let base_ckpt = base_dir.join("model.ckpt");
    let mut net = if let Some(last) = done.last() {
        load_checked(&round_dir(&out, last.round).join("model.ckpt"), &cfg, &world)?
    } else if args.resume && base_ckpt.exists() {
        load_checked(&base_ckpt, &cfg, &world)?
    } else {
        create_dir(&base_dir)?;
        let net = match base_from {
            Some(n) => n,
            None => {
                let (n, report) = train_base(&cfg, &world, &schedule)?;
                report.write_loss_csv(&base_dir.join("loss.csv"))?;
                n
            }
        };
        save_base(&base_ckpt, &net, &cfg.schedule)?;
        net
    };

    let agreement_path = out.join("agreement.csv");
    if cfg.agreement.enabled && !(args.resume && agreement_path.exists()) {
        let rows = match cfg.agreement.denoiser {
            AgreementDenoiser::Oracle => agreement_study(
                &AnalyticDenoiser::new(world.clone(), schedule.clone()),
                &world,
                &schedule,
                &cfg.agreement_config(),
            )?,
            AgreementDenoiser::Model => agreement_study(&net, &world, &schedule, &cfg.agreement_config())?,
        };
        write_agreement_csv(&agreement_path, &rows)?;
    }

    let pcfg = cfg.pipeline_config();
    let mut pre = done.last().map(|m| m.alignment_post);
    for round in done.len() + 1..=pcfg.rounds {
        let r = run_round(&net, &world, &schedule, &pcfg, round, pre).map_err(|e| Error::in_round(round, e))?;
        persist_round(&out, &r, &cfg).map_err(|e| Error::in_round(round, e))?;
        done.push(r.metrics.clone());
        write_metrics_csv(&metrics_path, &done)?;
        pre = Some(r.metrics.alignment_post);
        net = r.net;
    }
    let rounds: Vec<Value> = done
        .iter()
        .map(|m| {
            json!({
                "round": m.round,
                "alignment_pre": m.alignment_pre.fraction,
                "alignment_post": m.alignment_post.fraction,
                "mean_pool_mi": m.mean_pool_mi,
            })
        })
        .collect();
    Ok(json!({"command": "mitune", "out": out, "rounds": rounds}))
}

fn cmd_agreement(args: &ModelArgs) -> Result<Value> {
    let (cfg, out, world, schedule) = setup(&args.common)?;
    let net = resolve_net(args, &cfg, &world, &schedule, cfg.agreement.denoiser == AgreementDenoiser::Oracle)?;
    let _lock = RunLock::acquire(&out)?;
    write_file(&out.join("config.toml"), snapshot(&cfg)?.as_bytes())?;
    let rows = agreement_study(&net, &world, &schedule, &cfg.agreement_config())?;
    write_agreement_csv(&out.join("agreement.csv"), &rows)?;
    let pairs: Vec<Value> = rows
        .iter()
        .map(|r| json!({"first": r.first, "second": r.second, "mean_tau": r.mean_tau, "stderr": r.stderr}))
        .collect();
    Ok(json!({"command": "agreement", "out": out, "pairs": pairs}))
}

fn cmd_sweep(args: &SweepArgs) -> Result<Value> {
    let (cfg, out, world, schedule) = setup(&args.common)?;
    let pcfg = cfg.pipeline_config();
    let settings: Vec<(usize, usize, f64)> = match args.kind {
        SweepKind::Selection => SELECTION_SWEEP.iter().map(|&(m, k)| (m, k, 0.0)).collect(),
        SweepKind::RealMix => REAL_MIX_SWEEP
            .iter()
            .map(|&x| (pcfg.pool_size, pcfg.top_k, x))
            .collect(),
    };
    let base = args
        .checkpoint
        .as_ref()
        .map(|p| load_checked(p, &cfg, &world))
        .transpose()?;
    let _lock = RunLock::acquire(&out)?;
    write_file(&out.join("config.toml"), snapshot(&cfg)?.as_bytes())?;
    let base = match base {
        Some(b) => b,
        None => train_base(&cfg, &world, &schedule)?.0,
    };
    let rows = sweep(&base, &world, &schedule, &pcfg, &settings)?;
    let name = match args.kind {
        SweepKind::Selection => "sweep_selection.csv",
        SweepKind::RealMix => "sweep_real_mix.csv",
    };
    write_sweep_csv(&out.join(name), &rows)?;
    Ok(json!({"command": "sweep", "out": out, "file": name, "settings": rows.len()}))
}

/// Loads the adapters of a persisted round on top of its starting network.
pub fn load_round_adapters(out: &Path, round: usize, cfg: &RunConfig, world: &GaussianWorld) -> Result<AdaptedDenoiser> {
    let start = if round <= 1 {
        out.join("base").join("model.ckpt")
    } else {
        round_dir(out, round - 1).join("model.ckpt")
    };
    let base = load_checked(&start, cfg, world)?;
    AdaptedDenoiser::load_adapters(base, &round_dir(out, round).join("adapters.ckpt"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lock_is_exclusive_and_released() {
        let dir = tempfile::tempdir().unwrap();
        let a = RunLock::acquire(dir.path()).unwrap();
        assert!(RunLock::acquire(dir.path()).is_err());
        drop(a);
        RunLock::acquire(dir.path()).unwrap();
    }

    #[test]
    fn exit_codes() {
        assert_eq!(exit_code(&Error::Config("x".into())), EXIT_CONFIG);
        assert_eq!(exit_code(&Error::in_round(2, Error::InvalidParameter("k".into()))), EXIT_CONFIG);
        assert_eq!(exit_code(&Error::Diverged { iteration: 1, loss: f64::NAN }), EXIT_RUNTIME);
    }

    #[test]
    fn output_precedence() {
        let args = CommonArgs {
            out: Some("/tmp/x".into()),
            ..CommonArgs::default()
        };
        assert_eq!(prepare(&args).unwrap().1, PathBuf::from("/tmp/x"));
    }

    #[test]
    fn cli_parses() {
        let cli = Cli::try_parse_from(["mitune", "mi", "--oracle", "--mode", "forward", "--seed", "4"]).unwrap();
        match cli.command {
            Command::Mi(a) => {
                assert!(a.model.oracle);
                assert_eq!(a.mode, Some(MiMode::Forward));
                assert_eq!(a.model.common.seed, Some(4));
            }
            _ => panic!("wrong subcommand"),
        }
        assert!(Cli::try_parse_from(["mitune", "mi", "--oracle", "--checkpoint", "a"]).is_err());
    }
}
