//! Noise-prediction networks.
//!
//! [`Denoiser`] is the evaluation interface shared by the analytic oracle, the
//! trainable MLP and its adapted form. Training lives in [`train`], binary
//! persistence in [`checkpoint`].

pub mod analytic;
pub mod checkpoint;
pub mod mlp;
pub mod optim;
pub mod train;

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::Result;

pub use analytic::AnalyticDenoiser;
pub use mlp::{Activation, CondEncoding, Linear, MlpConfig, MlpDenoiser};
pub use train::{loss_simple, train, DataSource, Example, TrainConfig, TrainReport};

/// Conditioning signal. `Null` routes to the unconditional branch and is never
/// encoded as a label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Condition {
    Null,
    Label(usize),
    Vector(Vec<f64>),
}

impl Condition {
    pub fn is_null(&self) -> bool {
        matches!(self, Condition::Null)
    }

    pub fn label(&self) -> Option<usize> {
        match self {
            Condition::Label(c) => Some(*c),
            _ => None,
        }
    }
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Condition::Null => write!(f, "null"),
            Condition::Label(c) => write!(f, "{c}"),
            Condition::Vector(v) => {
                let parts: Vec<String> = v.iter().map(|x| x.to_string()).collect();
                write!(f, "[{}]", parts.join(";"))
            }
        }
    }
}

/// An evaluable noise predictor `eps(z_t, cond, t)`.
pub trait Denoiser: Send + Sync {
    fn data_dim(&self) -> usize;

    fn eval_eps(&self, z_t: &[f64], cond: &Condition, t: usize) -> Result<Vec<f64>>;

    /// Conditional and unconditional predictions at the same point.
    fn eval_pair(&self, z_t: &[f64], cond: &Condition, t: usize) -> Result<(Vec<f64>, Vec<f64>)> {
        let c = self.eval_eps(z_t, cond, t)?;
        let u = if cond.is_null() {
            c.clone()
        } else {
            self.eval_eps(z_t, &Condition::Null, t)?
        };
        Ok((c, u))
    }
}

impl<D: Denoiser + ?Sized> Denoiser for &D {
    fn data_dim(&self) -> usize {
        (**self).data_dim()
    }

    fn eval_eps(&self, z_t: &[f64], cond: &Condition, t: usize) -> Result<Vec<f64>> {
        (**self).eval_eps(z_t, cond, t)
    }
}

impl<D: Denoiser + ?Sized> Denoiser for Box<D> {
    fn data_dim(&self) -> usize {
        (**self).data_dim()
    }

    fn eval_eps(&self, z_t: &[f64], cond: &Condition, t: usize) -> Result<Vec<f64>> {
        (**self).eval_eps(z_t, cond, t)
    }
}
