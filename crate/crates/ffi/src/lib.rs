//! C ABI over the `mitune` core.
//!
//! Objects are opaque heap handles created by `*_new`/`*_load` functions and
//! released with the matching `*_free`. Every fallible call returns a
//! [`MituneStatus`]; on failure [`mitune_last_error`] describes the problem
//! for the calling thread. Output pointers are written only on success.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::slice;

use mitune::denoiser::checkpoint::load_base;
use mitune::denoiser::{AnalyticDenoiser, Condition, Denoiser, MlpDenoiser};
use mitune::error::Error;
use mitune::metrics::kendall_tau;
use mitune::mi::{pointwise_mi_forward, pointwise_mi_generate};
use mitune::sampler::SamplerConfig;
use mitune::{build_schedule, GaussianWorld, NoiseSchedule, ScheduleKind};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MituneStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    DimensionMismatch = 3,
    StepOutOfRange = 4,
    Checkpoint = 5,
    Io = 6,
    Numeric = 7,
    NotAvailable = 8,
    Panic = 9,
}

/// Values of [`MituneCondition::kind`].
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MituneConditionKind {
    Null = 0,
    Label = 1,
    Vector = 2,
}

/// A condition passed by value. `kind` is a [`MituneConditionKind`] value;
/// `label` is read for labels, `values` and `len` for vectors.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct MituneCondition {
    pub kind: u32,
    pub label: usize,
    pub values: *const f64,
    pub len: usize,
}

/// Opaque noise schedule.
pub struct MituneSchedule(NoiseSchedule);

/// Opaque data world.
pub struct MituneWorld(GaussianWorld);

enum Net {
    Oracle(AnalyticDenoiser),
    Model(MlpDenoiser),
}

/// Opaque denoiser: either a loaded checkpoint or an analytic oracle.
pub struct MituneDenoiser(Net);

impl MituneDenoiser {
    fn net(&self) -> &dyn Denoiser {
        match &self.0 {
            Net::Oracle(o) => o,
            Net::Model(m) => m,
        }
    }

    fn steps(&self) -> usize {
        match &self.0 {
            Net::Oracle(o) => o.schedule().steps(),
            Net::Model(m) => m.steps(),
        }
    }
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).unwrap_or_default());
}

fn status_of(e: &Error) -> MituneStatus {
    match e {
        Error::DimensionMismatch { .. } => MituneStatus::DimensionMismatch,
        Error::StepOutOfRange { .. } => MituneStatus::StepOutOfRange,
        Error::Checkpoint(_) => MituneStatus::Checkpoint,
        Error::Io { .. } | Error::File { .. } => MituneStatus::Io,
        Error::NonFinite(_) | Error::Diverged { .. } => MituneStatus::Numeric,
        _ => MituneStatus::InvalidArgument,
    }
}

struct Fail(MituneStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(MituneStatus::NullPointer, format!("{what} is null"))
}

/// Runs `f`, converting errors and panics into a status code.
fn guard(f: impl FnOnce() -> Result<(), Fail>) -> MituneStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            MituneStatus::Ok
        }
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            MituneStatus::Panic
        }
    }
}

unsafe fn obj<'a, T>(p: *const T, what: &str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn input<'a>(p: *const f64, len: usize, what: &str) -> Result<&'a [f64], Fail> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(slice::from_raw_parts(p, len))
}

unsafe fn output<'a>(p: *mut f64, len: usize, what: &str) -> Result<&'a mut [f64], Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    Ok(slice::from_raw_parts_mut(p, len))
}

unsafe fn write<T>(p: *mut T, v: T, what: &str) -> Result<(), Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    p.write(v);
    Ok(())
}

unsafe fn condition(c: &MituneCondition) -> Result<Condition, Fail> {
    Ok(match c.kind {
        k if k == MituneConditionKind::Null as u32 => Condition::Null,
        k if k == MituneConditionKind::Label as u32 => Condition::Label(c.label),
        k if k == MituneConditionKind::Vector as u32 => {
            Condition::Vector(input(c.values, c.len, "condition values")?.to_vec())
        }
        k => {
            return Err(Fail(
                MituneStatus::InvalidArgument,
                format!("unknown condition kind {k}"),
            ))
        }
    })
}

fn check_steps(den: &MituneDenoiser, s: &MituneSchedule) -> Result<(), Fail> {
    if den.steps() != s.0.steps() {
        return Err(Fail(
            MituneStatus::InvalidArgument,
            format!("denoiser expects {} steps, schedule has {}", den.steps(), s.0.steps()),
        ));
    }
    Ok(())
}

/// Message of the last failed call on this thread; empty after a success.
/// The pointer stays valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn mitune_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Linear schedule with `steps` steps from `beta_start` to `beta_end`.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn mitune_schedule_new(
    steps: usize,
    beta_start: f64,
    beta_end: f64,
    out: *mut *mut MituneSchedule,
) -> MituneStatus {
    guard(|| {
        let s = build_schedule(steps, beta_start, beta_end, ScheduleKind::Linear)?;
        write(out, Box::into_raw(Box::new(MituneSchedule(s))), "out")
    })
}

/// # Safety
/// `s` must come from [`mitune_schedule_new`] or be null.
#[no_mangle]
pub unsafe extern "C" fn mitune_schedule_free(s: *mut MituneSchedule) {
    if !s.is_null() {
        drop(Box::from_raw(s));
    }
}

/// # Safety
/// `s` must be a live schedule handle or null.
#[no_mangle]
pub unsafe extern "C" fn mitune_schedule_steps(s: *const MituneSchedule) -> usize {
    s.as_ref().map_or(0, |s| s.0.steps())
}

/// Writes `alpha_bar_t` and `kappa_t` for `1 <= t <= T`.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn mitune_schedule_at(
    s: *const MituneSchedule,
    t: usize,
    alpha_bar: *mut f64,
    kappa: *mut f64,
) -> MituneStatus {
    guard(|| {
        let s = &obj(s, "schedule")?.0;
        let k = s.kappa_at(t)?;
        write(alpha_bar, s.alpha_bar(t), "alpha_bar")?;
        write(kappa, k, "kappa")
    })
}

/// Correlated Gaussian world of dimension `dim`.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn mitune_world_correlated(dim: usize, rho: f64, out: *mut *mut MituneWorld) -> MituneStatus {
    guard(|| {
        let w = GaussianWorld::correlated(dim, rho)?;
        write(out, Box::into_raw(Box::new(MituneWorld(w))), "out")
    })
}

/// Labeled mixture with `num_labels` means stored row-major in `means`
/// (`num_labels * dim` values).
///
/// # Safety
/// `means` must hold `num_labels * dim` values; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn mitune_world_mixture(
    means: *const f64,
    num_labels: usize,
    dim: usize,
    data_sigma: f64,
    label_noise: f64,
    out: *mut *mut MituneWorld,
) -> MituneStatus {
    guard(|| {
        if dim == 0 {
            return Err(Fail(MituneStatus::InvalidArgument, "dim must be positive".into()));
        }
        let flat = input(means, num_labels * dim, "means")?;
        let rows = flat.chunks(dim).map(<[f64]>::to_vec).collect();
        let w = GaussianWorld::mixture(rows, data_sigma, label_noise)?;
        write(out, Box::into_raw(Box::new(MituneWorld(w))), "out")
    })
}

/// # Safety
/// `w` must come from a world constructor or be null.
#[no_mangle]
pub unsafe extern "C" fn mitune_world_free(w: *mut MituneWorld) {
    if !w.is_null() {
        drop(Box::from_raw(w));
    }
}

/// Closed-form MI in nats; `NotAvailable` for mixture worlds.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn mitune_world_closed_form_mi(w: *const MituneWorld, out: *mut f64) -> MituneStatus {
    guard(|| match obj(w, "world")?.0.closed_form_mi() {
        Some(v) => write(out, v, "out"),
        None => Err(Fail(MituneStatus::NotAvailable, "no closed form for this world".into())),
    })
}

/// `log q(z | cond) - log q(z)` under the world's densities.
///
/// # Safety
/// `z` must hold `len` values; pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn mitune_world_log_likelihood_ratio(
    w: *const MituneWorld,
    z: *const f64,
    len: usize,
    cond: MituneCondition,
    out: *mut f64,
) -> MituneStatus {
    guard(|| {
        let v = obj(w, "world")?.0.log_likelihood_ratio(input(z, len, "z")?, &condition(&cond)?)?;
        write(out, v, "out")
    })
}

/// Analytic denoiser of `world` under `schedule` (both are copied).
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn mitune_denoiser_oracle(
    world: *const MituneWorld,
    schedule: *const MituneSchedule,
    out: *mut *mut MituneDenoiser,
) -> MituneStatus {
    guard(|| {
        let w = obj(world, "world")?.0.clone();
        let s = obj(schedule, "schedule")?.0.clone();
        write(out, Box::into_raw(Box::new(MituneDenoiser(Net::Oracle(AnalyticDenoiser::new(w, s))))), "out")
    })
}

/// Loads a base checkpoint. When `schedule_out` is non-null it receives a
/// new handle for the schedule stored in the checkpoint header.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn mitune_denoiser_load(
    path: *const c_char,
    out: *mut *mut MituneDenoiser,
    schedule_out: *mut *mut MituneSchedule,
) -> MituneStatus {
    guard(|| {
        if path.is_null() {
            return Err(null("path"));
        }
        let path = CStr::from_ptr(path)
            .to_str()
            .map_err(|_| Fail(MituneStatus::InvalidArgument, "path is not UTF-8".into()))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let (net, params) = load_base(Path::new(path))?;
        if !schedule_out.is_null() {
            schedule_out.write(Box::into_raw(Box::new(MituneSchedule(params.build()?))));
        }
        out.write(Box::into_raw(Box::new(MituneDenoiser(Net::Model(net)))));
        Ok(())
    })
}

/// # Safety
/// `d` must come from a denoiser constructor or be null.
#[no_mangle]
pub unsafe extern "C" fn mitune_denoiser_free(d: *mut MituneDenoiser) {
    if !d.is_null() {
        drop(Box::from_raw(d));
    }
}

/// # Safety
/// `d` must be a live denoiser handle or null.
#[no_mangle]
pub unsafe extern "C" fn mitune_denoiser_dim(d: *const MituneDenoiser) -> usize {
    d.as_ref().map_or(0, |d| d.net().data_dim())
}

/// Noise prediction at step `t`; `z` and `eps_out` hold `len` values.
///
/// # Safety
/// Buffers must hold `len` values; pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn mitune_denoiser_eval(
    d: *const MituneDenoiser,
    z: *const f64,
    len: usize,
    cond: MituneCondition,
    t: usize,
    eps_out: *mut f64,
) -> MituneStatus {
    guard(|| {
        let eps = obj(d, "denoiser")?.net().eval_eps(input(z, len, "z")?, &condition(&cond)?, t)?;
        let out = output(eps_out, len, "eps_out")?;
        out.copy_from_slice(&eps);
        Ok(())
    })
}

/// Point-wise MI of a given sample averaged over `n_mc` random steps.
/// `stderr_out` may be null; it receives NaN when `n_mc == 1`.
///
/// # Safety
/// `z` must hold `len` values; pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn mitune_mi_forward(
    d: *const MituneDenoiser,
    s: *const MituneSchedule,
    z: *const f64,
    len: usize,
    cond: MituneCondition,
    n_mc: usize,
    seed: u64,
    mi_out: *mut f64,
    stderr_out: *mut f64,
) -> MituneStatus {
    guard(|| {
        let (d, s) = (obj(d, "denoiser")?, obj(s, "schedule")?);
        check_steps(d, s)?;
        let est = pointwise_mi_forward(d.net(), input(z, len, "z")?, &condition(&cond)?, &s.0, n_mc, seed)?;
        if !stderr_out.is_null() {
            stderr_out.write(est.stderr.unwrap_or(f64::NAN));
        }
        write(mi_out, est.value, "mi_out")
    })
}

/// Generates one sample (written to `z_out`, `len` values) and its
/// point-wise MI along the same trajectory.
///
/// # Safety
/// `z_out` must hold `len` values; pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn mitune_mi_generate(
    d: *const MituneDenoiser,
    s: *const MituneSchedule,
    cond: MituneCondition,
    guidance: f64,
    seed: u64,
    z_out: *mut f64,
    len: usize,
    mi_out: *mut f64,
) -> MituneStatus {
    guard(|| {
        let (d, s) = (obj(d, "denoiser")?, obj(s, "schedule")?);
        check_steps(d, s)?;
        if len != d.net().data_dim() {
            return Err(Error::DimensionMismatch {
                expected: d.net().data_dim(),
                got: len,
            }
            .into());
        }
        let cfg = SamplerConfig {
            guidance,
            seed,
            ..SamplerConfig::default()
        };
        let (z, est) = pointwise_mi_generate(d.net(), &condition(&cond)?, &s.0, &cfg)?;
        output(z_out, len, "z_out")?.copy_from_slice(&z);
        write(mi_out, est.value, "mi_out")
    })
}

/// Kendall tau-a between two rankings of the same `n` ids.
///
/// # Safety
/// `a` and `b` must hold `n` values; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn mitune_kendall_tau(a: *const usize, b: *const usize, n: usize, out: *mut f64) -> MituneStatus {
    guard(|| {
        if a.is_null() || b.is_null() {
            return Err(null("ranking"));
        }
        let tau = kendall_tau(slice::from_raw_parts(a, n), slice::from_raw_parts(b, n))?;
        write(out, tau, "out")
    })
}
