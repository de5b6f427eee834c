//! Binary checkpoint codec.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! "SFTC"  u32 version
//! config: u32 descriptor_dim, u32 input_channels, u8 use_dsc_tail,
//!         u32 tail_dilation, u32 n_layers, n_layers x u32 width,
//!         n_layers x u32 dilation
//! u64 training step
//! u32 n_params, then per parameter:
//!         u32 name_len, name bytes (UTF-8), u32 ndim, ndim x u32 dims,
//!         prod(dims) x f64 values
//! u8 has_optimizer, then when 1:
//!         u64 optimizer step, per parameter prod(dims) x f64 first moment,
//!         per parameter prod(dims) x f64 second moment
//! ```
//!
//! Every length is checked against the bytes that remain before anything
//! is allocated for it.

use alloc::string::String;
use alloc::vec::Vec;

use crate::network::{BackboneConfig, Network, Param};
use crate::optim::AdamState;
use crate::tensor::Tensor;

pub const MAGIC: [u8; 4] = *b"SFTC";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CheckpointError {
    #[error("bad magic bytes {0:?}, expected \"SFTC\"")]
    BadMagic([u8; 4]),
    #[error("format version {found}, this build reads version {expected}")]
    Version { found: u32, expected: u32 },
    #[error("truncated {what}: needs {needed} bytes, {available} remain")]
    Truncated { what: &'static str, needed: usize, available: usize },
    #[error("{0} trailing bytes after the last record")]
    TrailingBytes(usize),
    #[error("malformed {0}")]
    Malformed(&'static str),
    #[error("config mismatch: {0}")]
    ConfigMismatch(String),
    #[error("parameter {name}: expected shape {expected:?}, found {found:?}")]
    ShapeMismatch { name: String, expected: Vec<usize>, found: Vec<usize> },
    #[error("parameter {found} where {expected} was expected")]
    NameMismatch { expected: String, found: String },
}

type Result<T> = core::result::Result<T, CheckpointError>;

/// Everything stored in a checkpoint file.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub config: BackboneConfig,
    pub step: u64,
    pub params: Vec<Param>,
    pub optimizer: Option<AdamState>,
}

impl Checkpoint {
    pub fn from_network(net: &Network, step: u64, optimizer: Option<AdamState>) -> Self {
        Checkpoint { config: net.config().clone(), step, params: net.params().to_vec(), optimizer }
    }

    pub fn into_network(self) -> crate::Result<Network> {
        Network::from_params(self.config, self.params)
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(&MAGIC);
        put_u32(&mut out, FORMAT_VERSION);
        let c = &self.config;
        put_u32(&mut out, c.descriptor_dim as u32);
        put_u32(&mut out, c.input_channels as u32);
        out.push(c.use_dsc_tail as u8);
        put_u32(&mut out, c.tail_dilation as u32);
        put_u32(&mut out, c.channel_widths.len() as u32);
        for &w in &c.channel_widths {
            put_u32(&mut out, w as u32);
        }
        for &d in &c.dilations {
            put_u32(&mut out, d as u32);
        }
        out.extend_from_slice(&self.step.to_le_bytes());
        put_u32(&mut out, self.params.len() as u32);
        for p in &self.params {
            put_u32(&mut out, p.name.len() as u32);
            out.extend_from_slice(p.name.as_bytes());
            put_u32(&mut out, p.value.ndim() as u32);
            for &d in p.value.shape() {
                put_u32(&mut out, d as u32);
            }
            put_f64s(&mut out, p.value.data());
        }
        match &self.optimizer {
            None => out.push(0),
            Some(st) => {
                out.push(1);
                out.extend_from_slice(&st.step.to_le_bytes());
                for m in &st.m {
                    put_f64s(&mut out, m);
                }
                for v in &st.v {
                    put_f64s(&mut out, v);
                }
            }
        }
        out
    }

    /// Parses and validates a checkpoint, including the parameter names and
    /// shapes implied by the stored config.
    pub fn decode(bytes: &[u8]) -> Result<Checkpoint> {
        let mut r = Reader { buf: bytes, pos: 0 };
        let magic: [u8; 4] = r.take(4, "magic")?.try_into().expect("4 bytes");
        if magic != MAGIC {
            return Err(CheckpointError::BadMagic(magic));
        }
        let version = r.u32("version")?;
        if version != FORMAT_VERSION {
            return Err(CheckpointError::Version { found: version, expected: FORMAT_VERSION });
        }
        let descriptor_dim = r.u32("config")? as usize;
        let input_channels = r.u32("config")? as usize;
        let use_dsc_tail = match r.take(1, "config")?[0] {
            0 => false,
            1 => true,
            _ => return Err(CheckpointError::Malformed("config flag")),
        };
        let tail_dilation = r.u32("config")? as usize;
        let n_layers = r.u32("config")? as usize;
        r.ensure(n_layers.saturating_mul(8), "config layers")?;
        let channel_widths = (0..n_layers).map(|_| r.u32("config").map(|v| v as usize)).collect::<Result<Vec<_>>>()?;
        let dilations = (0..n_layers).map(|_| r.u32("config").map(|v| v as usize)).collect::<Result<Vec<_>>>()?;
        let config = BackboneConfig { descriptor_dim, channel_widths, dilations, tail_dilation, use_dsc_tail, input_channels };
        config.validate().map_err(|e| CheckpointError::ConfigMismatch(alloc::format!("{e}")))?;
        let step = r.u64("step")?;

        let expected = config.parameter_shapes();
        let n_params = r.u32("parameter count")? as usize;
        if n_params != expected.len() {
            return Err(CheckpointError::ConfigMismatch(alloc::format!(
                "{n_params} parameters stored, config implies {}",
                expected.len()
            )));
        }
        let mut params = Vec::with_capacity(n_params);
        for (name, shape) in &expected {
            let len = r.u32("parameter name")? as usize;
            let raw = r.take(len, "parameter name")?;
            let found = core::str::from_utf8(raw).map_err(|_| CheckpointError::Malformed("parameter name"))?;
            if found != name {
                return Err(CheckpointError::NameMismatch { expected: name.clone(), found: found.into() });
            }
            let ndim = r.u32("parameter shape")? as usize;
            r.ensure(ndim.saturating_mul(4), "parameter shape")?;
            let dims = (0..ndim).map(|_| r.u32("parameter shape").map(|v| v as usize)).collect::<Result<Vec<_>>>()?;
            if &dims != shape {
                return Err(CheckpointError::ShapeMismatch { name: name.clone(), expected: shape.clone(), found: dims });
            }
            let data = r.f64s(shape.iter().product(), "parameter payload")?;
            let value = Tensor::new(dims, data).expect("length checked");
            params.push(Param { name: name.clone(), value });
        }
        let optimizer = match r.take(1, "optimizer flag")?[0] {
            0 => None,
            1 => {
                let st = r.u64("optimizer step")?;
                let sizes: Vec<usize> = params.iter().map(|p| p.value.numel()).collect();
                let total: usize = sizes.iter().sum();
                r.ensure(total.saturating_mul(16), "optimizer payload")?;
                let m = sizes.iter().map(|&n| r.f64s(n, "optimizer payload")).collect::<Result<Vec<_>>>()?;
                let v = sizes.iter().map(|&n| r.f64s(n, "optimizer payload")).collect::<Result<Vec<_>>>()?;
                Some(AdamState { step: st, m, v })
            }
            _ => return Err(CheckpointError::Malformed("optimizer flag")),
        };
        if r.pos != bytes.len() {
            return Err(CheckpointError::TrailingBytes(bytes.len() - r.pos));
        }
        Ok(Checkpoint { config, step, params, optimizer })
    }
}

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_f64s(out: &mut Vec<u8>, vals: &[f64]) {
    out.reserve(vals.len() * 8);
    for v in vals {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn ensure(&self, needed: usize, what: &'static str) -> Result<()> {
        let available = self.buf.len() - self.pos;
        if needed > available {
            Err(CheckpointError::Truncated { what, needed, available })
        } else {
            Ok(())
        }
    }

    fn take(&mut self, n: usize, what: &'static str) -> Result<&'a [u8]> {
        self.ensure(n, what)?;
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &'static str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self, what: &'static str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().expect("8 bytes")))
    }

    fn f64s(&mut self, n: usize, what: &'static str) -> Result<Vec<f64>> {
        let raw = self.take(n.checked_mul(8).ok_or(CheckpointError::Malformed("payload size"))?, what)?;
        Ok(raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Checkpoint {
        let net = Network::new(BackboneConfig::desk(), 3).unwrap();
        let opt = AdamState::new(net.params().iter().map(|p| &p.value));
        Checkpoint::from_network(&net, 17, Some(opt))
    }

    #[test]
    fn round_trip_is_bit_identical() {
        let ck = sample();
        let back = Checkpoint::decode(&ck.encode()).unwrap();
        assert_eq!(back, ck);
        for (a, b) in back.params.iter().zip(&ck.params) {
            let bits = |t: &Tensor| t.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
            assert_eq!(bits(&a.value), bits(&b.value));
        }
    }

    #[test]
    fn wrong_magic() {
        let mut bytes = sample().encode();
        bytes[0] = b'X';
        assert!(matches!(Checkpoint::decode(&bytes), Err(CheckpointError::BadMagic(_))));
    }

    #[test]
    fn wrong_version() {
        let mut bytes = sample().encode();
        bytes[4] = 9;
        assert_eq!(Checkpoint::decode(&bytes), Err(CheckpointError::Version { found: 9, expected: 1 }));
    }

    #[test]
    fn truncation_reports_payload_length() {
        let bytes = sample().encode();
        let cut = &bytes[..bytes.len() / 2];
        assert!(matches!(Checkpoint::decode(cut), Err(CheckpointError::Truncated { .. })));
    }

    #[test]
    fn trailing_bytes() {
        let mut bytes = sample().encode();
        bytes.push(0);
        assert_eq!(Checkpoint::decode(&bytes), Err(CheckpointError::TrailingBytes(1)));
    }
}
