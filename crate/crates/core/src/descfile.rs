//! Binary keypoint/descriptor file codec.
//!
//! ```text
//! "SFDK"  u32 version  u32 count  u32 dim
//! count x (f32 x, f32 y, f32 scale, f32 score)
//! count x dim f32 descriptor values, row-major
//! ```
//!
//! All values little-endian.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::keypoints::{Keypoint, KeypointSet};

pub const MAGIC: [u8; 4] = *b"SFDK";
pub const FORMAT_VERSION: u32 = 1;
const HEADER: usize = 16;

fn bad(detail: impl Into<alloc::string::String>) -> Error {
    Error::DescriptorFile(detail.into())
}

pub fn encode(set: &KeypointSet) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER + set.len() * (16 + 4 * set.dim));
    out.extend_from_slice(&MAGIC);
    for v in [FORMAT_VERSION, set.len() as u32, set.dim as u32] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for k in &set.keypoints {
        for v in [k.x, k.y, k.scale, k.score] {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    for v in &set.descriptors {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode(bytes: &[u8]) -> Result<KeypointSet> {
    if bytes.len() < HEADER {
        return Err(bad(format!("{} bytes is shorter than the header", bytes.len())));
    }
    if bytes[..4] != MAGIC {
        return Err(bad(format!("bad magic {:?}", &bytes[..4])));
    }
    let word = |i: usize| u32::from_le_bytes(bytes[4 + 4 * i..8 + 4 * i].try_into().expect("4 bytes"));
    let (version, count, dim) = (word(0), word(1) as usize, word(2) as usize);
    if version != FORMAT_VERSION {
        return Err(bad(format!("version {version}, expected {FORMAT_VERSION}")));
    }
    let expected = count
        .checked_mul(4 * dim + 16)
        .and_then(|p| p.checked_add(HEADER))
        .ok_or_else(|| bad("size overflow"))?;
    if bytes.len() != expected {
        return Err(bad(format!("{count} points of dim {dim} need {expected} bytes, found {}", bytes.len())));
    }
    let floats = |range: &[u8]| -> Vec<f32> {
        range.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes"))).collect()
    };
    let kp = floats(&bytes[HEADER..HEADER + 16 * count]);
    let keypoints = kp.chunks_exact(4).map(|c| Keypoint { x: c[0], y: c[1], scale: c[2], score: c[3] }).collect();
    let descriptors = floats(&bytes[HEADER + 16 * count..]);
    Ok(KeypointSet { keypoints, dim, descriptors })
}
