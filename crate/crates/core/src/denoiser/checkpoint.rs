//! Binary checkpoint envelope.
//!
//! Layout (all integers and floats little-endian):
//!
//! ```text
//! magic        8 bytes  "MITUNECK"
//! version      u32      currently 1
//! kind         u8       1 = base network, 2 = adapter set
//! steps        u32      schedule T
//! beta_start   f64
//! beta_end     f64
//! sched kind   u8       0 = linear
//! ...kind-specific header and payload
//! ```
//!
//! Base payload: `data_dim u32, time_features u32, activation u8,
//! cond kind u8 (0 labels / 1 vector), cond a u32 (num_labels / len),
//! cond b u32 (embed_dim / 0), n_hidden u32, hidden widths u32 * n_hidden`,
//! then the embedding table (rows `num_labels + 1`, null last) and for every
//! layer its weight matrix (`out x in`, row-major) followed by its bias, all
//! as f64.
//!
//! The adapter payload is written by [`crate::adapter`].

use std::fs;
use std::path::Path;

use sha2::{Digest, Sha256};

use super::mlp::{Activation, CondEncoding, Linear, MlpConfig, MlpDenoiser};
use crate::error::{Error, Result};
use crate::schedule::{ScheduleKind, ScheduleParams};

pub const MAGIC: &[u8; 8] = b"MITUNECK";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CheckpointKind {
    Base = 1,
    Adapter = 2,
}

#[derive(Default)]
pub(crate) struct Encoder {
    buf: Vec<u8>,
}

impl Encoder {
    pub fn new(kind: CheckpointKind, schedule: &ScheduleParams) -> Self {
        let mut e = Self::default();
        e.buf.extend_from_slice(MAGIC);
        e.u32(FORMAT_VERSION);
        e.u8(kind as u8);
        e.u32(schedule.steps as u32);
        e.f64(schedule.beta_start);
        e.f64(schedule.beta_end);
        e.u8(schedule.kind.code());
        e
    }

    pub fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }

    pub fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn f64(&mut self, v: f64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn f64s(&mut self, vs: &[f64]) {
        for v in vs {
            self.f64(*v);
        }
    }

    pub fn bytes(&mut self, b: &[u8]) {
        self.buf.extend_from_slice(b);
    }

    pub fn finish(self) -> Vec<u8> {
        self.buf
    }
}

pub(crate) struct Decoder<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Decoder<'a> {
    /// Parses the common header, returning the decoder positioned at the
    /// kind-specific payload.
    pub fn open(buf: &'a [u8], expect: CheckpointKind) -> Result<(Self, ScheduleParams)> {
        let mut d = Self { buf, pos: 0 };
        let magic = d.take(8)?;
        if magic != MAGIC {
            return Err(Error::Checkpoint("bad magic; not a checkpoint file".into()));
        }
        let version = d.u32()?;
        if version != FORMAT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported format version {version} (expected {FORMAT_VERSION})"
            )));
        }
        let kind = d.u8()?;
        if kind != expect as u8 {
            return Err(Error::Checkpoint(format!(
                "checkpoint kind {kind} but expected {}",
                expect as u8
            )));
        }
        let steps = d.u32()? as usize;
        let beta_start = d.f64()?;
        let beta_end = d.f64()?;
        let kind = ScheduleKind::from_code(d.u8()?)
            .ok_or_else(|| Error::Checkpoint("unknown schedule kind".into()))?;
        let params = ScheduleParams {
            steps,
            beta_start,
            beta_end,
            kind,
        };
        params
            .validate()
            .map_err(|e| Error::Checkpoint(format!("invalid schedule header: {e}")))?;
        Ok((d, params))
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(Error::Checkpoint("truncated checkpoint".into()));
        }
        let out = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    pub fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    pub fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        (0..n).map(|_| self.f64()).collect()
    }

    pub fn bytes(&mut self, n: usize) -> Result<Vec<u8>> {
        Ok(self.take(n)?.to_vec())
    }

    pub fn finish(self) -> Result<()> {
        if self.pos != self.buf.len() {
            return Err(Error::Checkpoint(format!(
                "{} trailing bytes after payload",
                self.buf.len() - self.pos
            )));
        }
        Ok(())
    }
}

/// Reads only the schedule parameters from a checkpoint of either kind.
pub fn peek_schedule(bytes: &[u8]) -> Result<ScheduleParams> {
    let kind = bytes
        .get(12)
        .copied()
        .ok_or_else(|| Error::Checkpoint("truncated checkpoint".into()))?;
    let kind = match kind {
        1 => CheckpointKind::Base,
        2 => CheckpointKind::Adapter,
        k => return Err(Error::Checkpoint(format!("unknown checkpoint kind {k}"))),
    };
    Decoder::open(bytes, kind).map(|(_, p)| p)
}

pub fn encode_base(net: &MlpDenoiser, schedule: &ScheduleParams) -> Result<Vec<u8>> {
    if schedule.steps != net.steps() {
        return Err(Error::Checkpoint(format!(
            "schedule has {} steps but the network was built for {}",
            schedule.steps,
            net.steps()
        )));
    }
    let cfg = net.config();
    let mut e = Encoder::new(CheckpointKind::Base, schedule);
    e.u32(cfg.data_dim as u32);
    e.u32(cfg.time_features as u32);
    e.u8(cfg.activation.code());
    match cfg.cond {
        CondEncoding::Labels {
            num_labels,
            embed_dim,
        } => {
            e.u8(0);
            e.u32(num_labels as u32);
            e.u32(embed_dim as u32);
        }
        CondEncoding::Vector { len } => {
            e.u8(1);
            e.u32(len as u32);
            e.u32(0);
        }
    }
    e.u32(cfg.hidden.len() as u32);
    for h in &cfg.hidden {
        e.u32(*h as u32);
    }
    e.f64s(net.embedding());
    for l in net.layers() {
        e.f64s(&l.weight);
        e.f64s(&l.bias);
    }
    Ok(e.finish())
}

pub fn decode_base(bytes: &[u8]) -> Result<(MlpDenoiser, ScheduleParams)> {
    let (mut d, schedule) = Decoder::open(bytes, CheckpointKind::Base)?;
    let data_dim = d.u32()? as usize;
    let time_features = d.u32()? as usize;
    let activation = Activation::from_code(d.u8()?)
        .ok_or_else(|| Error::Checkpoint("unknown activation".into()))?;
    let cond_kind = d.u8()?;
    let a = d.u32()? as usize;
    let b = d.u32()? as usize;
    let cond = match cond_kind {
        0 => CondEncoding::Labels {
            num_labels: a,
            embed_dim: b,
        },
        1 => CondEncoding::Vector { len: a },
        k => return Err(Error::Checkpoint(format!("unknown condition encoding {k}"))),
    };
    let n_hidden = d.u32()? as usize;
    if n_hidden > 1024 {
        return Err(Error::Checkpoint("implausible layer count".into()));
    }
    let hidden = (0..n_hidden)
        .map(|_| d.u32().map(|v| v as usize))
        .collect::<Result<Vec<_>>>()?;
    let config = MlpConfig {
        data_dim,
        hidden,
        time_features,
        cond,
        activation,
    };
    config
        .validate()
        .map_err(|e| Error::Checkpoint(format!("invalid network header: {e}")))?;
    let embed = match cond {
        CondEncoding::Labels { embed_dim, .. } => cond.table_rows() * embed_dim,
        CondEncoding::Vector { .. } => 0,
    };
    let embedding = d.f64s(embed)?;
    let mut layers = Vec::new();
    for (i, o) in config.layer_shapes() {
        let weight = d.f64s(i * o)?;
        let bias = d.f64s(o)?;
        layers.push(Linear {
            in_dim: i,
            out_dim: o,
            weight,
            bias,
        });
    }
    d.finish()?;
    let net = MlpDenoiser::from_parts(config, schedule.steps, embedding, layers)
        .map_err(|e| Error::Checkpoint(e.to_string()))?;
    Ok((net, schedule))
}

pub fn save_base(path: &Path, net: &MlpDenoiser, schedule: &ScheduleParams) -> Result<()> {
    let bytes = encode_base(net, schedule)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn load_base(path: &Path) -> Result<(MlpDenoiser, ScheduleParams)> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_base(&bytes).map_err(|e| Error::file(path, e.to_string()))
}

/// SHA-256 over every parameter's little-endian bytes, in checkpoint order.
pub fn weights_digest(net: &MlpDenoiser) -> [u8; 32] {
    let mut h = Sha256::new();
    for group in net.param_groups() {
        for v in group {
            h.update(v.to_le_bytes());
        }
    }
    h.finalize().into()
}

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::denoiser::{Condition, Denoiser};

    fn net() -> MlpDenoiser {
        let cfg = MlpConfig {
            data_dim: 2,
            hidden: vec![8, 8],
            time_features: 4,
            cond: CondEncoding::Labels {
                num_labels: 3,
                embed_dim: 3,
            },
            activation: Activation::Silu,
        };
        MlpDenoiser::new(cfg, 40, 9).unwrap()
    }

    fn params() -> ScheduleParams {
        ScheduleParams {
            steps: 40,
            beta_start: 1e-3,
            beta_end: 0.2,
            kind: ScheduleKind::Linear,
        }
    }

    #[test]
    fn round_trip_is_exact() {
        let n = net();
        let bytes = encode_base(&n, &params()).unwrap();
        assert_eq!(&bytes[..8], MAGIC);
        let (back, sched) = decode_base(&bytes).unwrap();
        assert_eq!(back, n);
        assert_eq!(sched, params());
        assert_eq!(encode_base(&back, &sched).unwrap(), bytes);
        let z = [0.1, 0.2];
        assert_eq!(
            back.eval_eps(&z, &Condition::Label(1), 7).unwrap(),
            n.eval_eps(&z, &Condition::Label(1), 7).unwrap()
        );
        assert_eq!(peek_schedule(&bytes).unwrap(), params());
    }

    #[test]
    fn corrupt_inputs_rejected() {
        let bytes = encode_base(&net(), &params()).unwrap();
        assert!(decode_base(&bytes[..bytes.len() - 1]).is_err());
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(decode_base(&extra).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(decode_base(&bad).is_err());
        let mut ver = bytes.clone();
        ver[8] = 9;
        assert!(decode_base(&ver).is_err());
        let mut nan = bytes;
        let last = nan.len() - 8;
        nan[last..].copy_from_slice(&f64::NAN.to_le_bytes());
        assert!(decode_base(&nan).is_err());
    }

    #[test]
    fn mismatched_schedule_rejected() {
        let mut p = params();
        p.steps = 41;
        assert!(encode_base(&net(), &p).is_err());
    }

    #[test]
    fn digest_tracks_weights() {
        let a = net();
        let mut b = a.clone();
        assert_eq!(weights_digest(&a), weights_digest(&b));
        b.layers_mut()[1].weight[3] += 1e-12;
        assert_ne!(weights_digest(&a), weights_digest(&b));
    }
}
