//! Point-wise mutual information between conditions and samples of a
//! conditional diffusion model, and MI-filtered self-supervised fine-tuning.
//!
//! The crate is organised bottom-up:
//!
//! - [`schedule`]: noise schedules and the MI weights `kappa_t`.
//! - [`world`]: analytic Gaussian worlds with closed-form scores and MI.
//! - [`denoiser`]: the denoiser interface, the analytic oracle and a trainable
//!   conditional MLP.
//! - [`adapter`]: low-rank adapters on a frozen MLP.
//! - [`sampler`]: ancestral sampling with classifier-free guidance.
//! - [`mi`]: the fused generate-and-estimate loop and the forward-noising
//!   estimator.
//! - [`pipeline`]: pool generation, top-k selection and adapter fine-tuning
//!   rounds.
//! - [`metrics`]: Kendall's tau and rank-agreement studies.
//! - [`config`], [`run`], [`report`]: the experiment runner behind the CLI.

pub mod adapter;
pub mod config;
pub mod denoiser;
pub mod error;
pub mod io;
pub mod metrics;
pub mod mi;
pub mod pipeline;
pub mod report;
pub mod run;
pub mod sampler;
pub mod schedule;
pub mod seed;
pub mod stats;
pub mod world;

pub use denoiser::{AnalyticDenoiser, Condition, Denoiser, MlpDenoiser};
pub use error::{Error, Result};
pub use schedule::{build_schedule, NoiseSchedule, ScheduleKind, ScheduleParams};
pub use world::{GaussianWorld, WorldParams};
