//! Lossless byte-stream stage behind one abstraction. Identity and DEFLATE
//! (RFC 1951) are the supported codecs.
//!
//! Frame layout, normative and bit-exact:
//!   1 byte codec id | 8 bytes little-endian raw length | body | 4 bytes CRC32 of body

use std::io::{Read, Write};

use crate::error::{Error, Result};

pub const DEFAULT_DEFLATE_LEVEL: u32 = 6;

/// Worst-case DEFLATE expansion used to sanity-cap decode allocations.
const MAX_DEFLATE_RATIO: u64 = 1032;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LosslessCodec {
    Identity,
    Deflate { level: u32 },
}

impl LosslessCodec {
    pub fn deflate_default() -> Self {
        LosslessCodec::Deflate { level: DEFAULT_DEFLATE_LEVEL }
    }

    pub fn wire_id(&self) -> u8 {
        match self {
            LosslessCodec::Identity => 0,
            LosslessCodec::Deflate { .. } => 1,
        }
    }

    pub fn level(&self) -> u32 {
        match self {
            LosslessCodec::Identity => 0,
            LosslessCodec::Deflate { level } => *level,
        }
    }

    pub fn from_wire(id: u8, level: u8) -> Result<Self> {
        match id {
            0 => Ok(LosslessCodec::Identity),
            1 => Ok(LosslessCodec::Deflate { level: level as u32 }),
            _ => Err(Error::corrupt(format!("unknown lossless codec id {id}"))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            LosslessCodec::Identity => "identity",
            LosslessCodec::Deflate { .. } => "deflate",
        }
    }
}

/// Encodes a payload into a self-describing frame.
pub fn encode(codec: LosslessCodec, payload: &[u8]) -> Vec<u8> {
    let body = match codec {
        LosslessCodec::Identity => payload.to_vec(),
        LosslessCodec::Deflate { level } => {
            let mut enc = flate2::write::DeflateEncoder::new(
                Vec::new(),
                flate2::Compression::new(level.min(9)),
            );
            enc.write_all(payload).expect("in-memory deflate");
            enc.finish().expect("in-memory deflate")
        }
    };
    let mut out = Vec::with_capacity(13 + body.len());
    out.push(codec.wire_id());
    out.extend_from_slice(&(payload.len() as u64).to_le_bytes());
    out.extend_from_slice(&body);
    out.extend_from_slice(&crc32fast::hash(&body).to_le_bytes());
    out
}

/// Decodes a frame produced by [`encode`], bit-exact. Rejects truncation,
/// unknown codec ids, checksum mismatches, and length inconsistencies.
pub fn decode(frame: &[u8]) -> Result<Vec<u8>> {
    if frame.len() < 13 {
        return Err(Error::corrupt(format!("frame too short: {} bytes", frame.len())));
    }
    let codec_id = frame[0];
    let raw_len = u64::from_le_bytes(frame[1..9].try_into().unwrap());
    let body = &frame[9..frame.len() - 4];
    let stored_crc = u32::from_le_bytes(frame[frame.len() - 4..].try_into().unwrap());
    if crc32fast::hash(body) != stored_crc {
        return Err(Error::corrupt("frame body CRC mismatch"));
    }
    match codec_id {
        0 => {
            if body.len() as u64 != raw_len {
                return Err(Error::corrupt(format!(
                    "identity frame claims {raw_len} bytes but carries {}",
                    body.len()
                )));
            }
            Ok(body.to_vec())
        }
        1 => {
            if raw_len > body.len() as u64 * MAX_DEFLATE_RATIO + 64 {
                return Err(Error::corrupt("deflate frame claims implausible raw length"));
            }
            let mut out = Vec::with_capacity(raw_len as usize);
            let dec = flate2::read::DeflateDecoder::new(body);
            dec.take(raw_len + 1)
                .read_to_end(&mut out)
                .map_err(|e| Error::corrupt(format!("deflate stream: {e}")))?;
            if out.len() as u64 != raw_len {
                return Err(Error::corrupt(format!(
                    "deflate frame decoded to {} bytes, claimed {raw_len}",
                    out.len()
                )));
            }
            Ok(out)
        }
        other => Err(Error::corrupt(format!("unknown lossless codec id {other}"))),
    }
}
