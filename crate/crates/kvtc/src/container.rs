//! Bit-exact on-disk formats. All fields little-endian, fixed order, no
//! padding.
//!
//! - `KVTA` calibration artifact: stream kind, RoPE metadata, sampling seed,
//!   mean/basis at binary16 (basis column-major), singular values at
//!   binary32, trailing 64-bit FNV-1a fingerprint of all preceding bytes.
//! - `KVTC` compressed cache: header, plan blobs, raw sink/window sections,
//!   entropy-coded payloads, trailing CRC32.
//! - `KVTR` raw tensor: dims, element type, payload, trailing CRC32.
//! - `KVTP` allocation plan: artifact fingerprint, target ratio, plan blob,
//!   trailing CRC32.

use half::f16;

use crate::allocator::{AllocationPlan, PcaOnlyPlan, PlanGroup};
use crate::codec::{CacheShape, CompressedCache, CompressionPlan, KvCache, StreamKind};
use crate::entropy::LosslessCodec;
use crate::error::{Error, Result};
use crate::linalg::{Matrix, PcaModel};
use crate::quant::ElementType;
use crate::rope::{PairingConvention, RopeConfig};

pub const ARTIFACT_MAGIC: [u8; 4] = *b"KVTA";
pub const CACHE_MAGIC: [u8; 4] = *b"KVTC";
pub const TENSOR_MAGIC: [u8; 4] = *b"KVTR";
pub const PLAN_MAGIC: [u8; 4] = *b"KVTP";
pub const FORMAT_VERSION: u16 = 1;

// ---------------------------------------------------------------------------
// primitives
// ---------------------------------------------------------------------------

fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

struct Reader<'a> {
    buf: &'a [u8],
    at: usize,
}

impl<'a> Reader<'a> {
    fn new(buf: &'a [u8]) -> Self {
        Reader { buf, at: 0 }
    }

    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.at.checked_add(n).filter(|&e| e <= self.buf.len());
        let Some(end) = end else {
            return Err(Error::truncated(format!(
                "{what}: need {n} bytes at offset {}, file has {}",
                self.at,
                self.buf.len()
            )));
        };
        let out = &self.buf[self.at..end];
        self.at = end;
        Ok(out)
    }

    fn take_elems(&mut self, count: usize, elem_size: usize, what: &str) -> Result<&'a [u8]> {
        let n = count
            .checked_mul(elem_size)
            .ok_or_else(|| Error::corrupt(format!("{what}: element count overflows")))?;
        self.take(n, what)
    }

    fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    fn f64(&mut self, what: &str) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    fn u16_vec(&mut self, count: usize, what: &str) -> Result<Vec<u16>> {
        let raw = self.take_elems(count, 2, what)?;
        Ok(raw
            .chunks_exact(2)
            .map(|c| u16::from_le_bytes([c[0], c[1]]))
            .collect())
    }

    fn done(&self, what: &str) -> Result<()> {
        if self.at != self.buf.len() {
            return Err(Error::corrupt(format!(
                "{what}: {} trailing bytes",
                self.buf.len() - self.at
            )));
        }
        Ok(())
    }
}

fn check_magic(buf: &[u8], expected: [u8; 4]) -> Result<()> {
    if buf.len() < 4 {
        return Err(Error::truncated("file shorter than magic"));
    }
    let found = [buf[0], buf[1], buf[2], buf[3]];
    if found != expected {
        return Err(Error::BadMagic { expected, found });
    }
    Ok(())
}

fn check_version(version: u16) -> Result<()> {
    if version != FORMAT_VERSION {
        return Err(Error::UnsupportedVersion { found: version, supported: FORMAT_VERSION });
    }
    Ok(())
}

fn rope_to_wire(out: &mut Vec<u8>, rope: &RopeConfig) {
    out.push(match rope.convention {
        PairingConvention::Interleaved => 0,
        PairingConvention::HalfSplit => 1,
    });
    out.extend_from_slice(&(rope.head_dim as u32).to_le_bytes());
    out.extend_from_slice(&rope.base.to_le_bytes());
    out.extend_from_slice(&rope.scaling.to_le_bytes());
}

fn rope_from_wire(r: &mut Reader) -> Result<RopeConfig> {
    let convention = match r.u8("rope convention")? {
        0 => PairingConvention::Interleaved,
        1 => PairingConvention::HalfSplit,
        other => return Err(Error::corrupt(format!("unknown rope convention {other}"))),
    };
    let head_dim = r.u32("rope head_dim")? as usize;
    let base = r.f64("rope base")?;
    let scaling = r.f64("rope scaling")?;
    let rope = RopeConfig { head_dim, base, scaling, convention };
    rope.validate().map_err(|e| Error::corrupt(e.to_string()))?;
    Ok(rope)
}

// ---------------------------------------------------------------------------
// calibration artifact (KVTA)
// ---------------------------------------------------------------------------

/// On-disk calibration artifact: a [`PcaModel`] at storage precision plus the
/// metadata needed to reuse it (stream kind, RoPE parameters, sampling seed).
#[derive(Debug, Clone, PartialEq)]
pub struct ArtifactFile {
    pub kind: StreamKind,
    pub rope: RopeConfig,
    pub seed: u64,
    pub feature_count: u32,
    pub rank: u32,
    pub sample_count: u32,
    /// binary16 bit patterns, length `feature_count`.
    pub mean: Vec<u16>,
    /// binary16 bit patterns, column-major, length `feature_count * rank`.
    pub basis: Vec<u16>,
    /// binary32 singular values, length `rank`.
    pub sigma: Vec<f32>,
}

impl ArtifactFile {
    pub fn from_model(model: &PcaModel, kind: StreamKind, rope: RopeConfig, seed: u64) -> Self {
        let p = model.feature_count;
        let r = model.rank;
        let mut basis = Vec::with_capacity(p * r);
        for c in 0..r {
            for row in 0..p {
                basis.push(f16::from_f64(model.basis.get(row, c)).to_bits());
            }
        }
        ArtifactFile {
            kind,
            rope,
            seed,
            feature_count: p as u32,
            rank: r as u32,
            sample_count: model.sample_count as u32,
            mean: model.mean.iter().map(|&m| f16::from_f64(m).to_bits()).collect(),
            basis,
            sigma: model.sigma.iter().map(|&s| s as f32).collect(),
        }
    }

    /// Widens the stored representation back into a working model.
    pub fn to_model(&self) -> Result<PcaModel> {
        let p = self.feature_count as usize;
        let r = self.rank as usize;
        let mut basis = Matrix::zeros(p, r);
        for c in 0..r {
            for row in 0..p {
                basis.set(row, c, f16::from_bits(self.basis[c * p + row]).to_f64());
            }
        }
        Ok(PcaModel {
            mean: self.mean.iter().map(|&b| f16::from_bits(b).to_f64()).collect(),
            basis,
            sigma: self.sigma.iter().map(|&s| s as f64).collect(),
            feature_count: p,
            rank: r,
            sample_count: self.sample_count as usize,
        })
    }

    /// Fingerprint of the model content (not the file metadata); what cache
    /// files record for artifact-mismatch detection.
    pub fn model_fingerprint(&self) -> u64 {
        content_fingerprint(
            self.feature_count,
            self.rank,
            self.sample_count,
            &self.mean,
            &self.basis,
            &self.sigma,
        )
    }
}

fn content_fingerprint(
    p: u32,
    r: u32,
    n: u32,
    mean: &[u16],
    basis: &[u16],
    sigma: &[f32],
) -> u64 {
    let mut bytes = Vec::with_capacity(12 + mean.len() * 2 + basis.len() * 2 + sigma.len() * 4);
    bytes.extend_from_slice(&p.to_le_bytes());
    bytes.extend_from_slice(&r.to_le_bytes());
    bytes.extend_from_slice(&n.to_le_bytes());
    for &m in mean {
        bytes.extend_from_slice(&m.to_le_bytes());
    }
    for &b in basis {
        bytes.extend_from_slice(&b.to_le_bytes());
    }
    for &s in sigma {
        bytes.extend_from_slice(&s.to_le_bytes());
    }
    fnv1a64(&bytes)
}

/// Fingerprint of an in-memory model at storage precision. A model written
/// to an artifact and loaded back fingerprints identically.
pub fn model_fingerprint(model: &PcaModel) -> u64 {
    let p = model.feature_count;
    let r = model.rank;
    let mean: Vec<u16> = model.mean.iter().map(|&m| f16::from_f64(m).to_bits()).collect();
    let mut basis = Vec::with_capacity(p * r);
    for c in 0..r {
        for row in 0..p {
            basis.push(f16::from_f64(model.basis.get(row, c)).to_bits());
        }
    }
    let sigma: Vec<f32> = model.sigma.iter().map(|&s| s as f32).collect();
    content_fingerprint(p as u32, r as u32, model.sample_count as u32, &mean, &basis, &sigma)
}

pub fn serialize_artifact(a: &ArtifactFile) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(&ARTIFACT_MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.push(a.kind.wire_id());
    rope_to_wire(&mut out, &a.rope);
    out.extend_from_slice(&a.seed.to_le_bytes());
    out.extend_from_slice(&a.feature_count.to_le_bytes());
    out.extend_from_slice(&a.rank.to_le_bytes());
    out.extend_from_slice(&a.sample_count.to_le_bytes());
    for &m in &a.mean {
        out.extend_from_slice(&m.to_le_bytes());
    }
    for &v in &a.basis {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for &s in &a.sigma {
        out.extend_from_slice(&s.to_le_bytes());
    }
    let fp = fnv1a64(&out);
    out.extend_from_slice(&fp.to_le_bytes());
    out
}

pub fn parse_artifact(buf: &[u8]) -> Result<ArtifactFile> {
    check_magic(buf, ARTIFACT_MAGIC)?;
    if buf.len() < 6 {
        return Err(Error::truncated("artifact shorter than header"));
    }
    check_version(u16::from_le_bytes([buf[4], buf[5]]))?;
    if buf.len() < 14 {
        return Err(Error::truncated("artifact shorter than fingerprint"));
    }
    let body = &buf[..buf.len() - 8];
    let stored = u64::from_le_bytes(buf[buf.len() - 8..].try_into().unwrap());
    if fnv1a64(body) != stored {
        return Err(Error::ChecksumMismatch { section: "artifact fingerprint" });
    }

    let mut r = Reader::new(body);
    r.take(6, "magic+version")?;
    let kind = StreamKind::from_wire_id(r.u8("stream kind")?)?;
    let rope = rope_from_wire(&mut r)?;
    let seed = r.u64("seed")?;
    let p = r.u32("feature count")?;
    let rank = r.u32("rank")?;
    let n = r.u32("sample count")?;
    let mean = r.u16_vec(p as usize, "mean")?;
    let basis_count = (p as usize)
        .checked_mul(rank as usize)
        .ok_or_else(|| Error::corrupt("basis size overflows"))?;
    let basis = r.u16_vec(basis_count, "basis")?;
    let sigma_raw = r.take_elems(rank as usize, 4, "sigma")?;
    let sigma: Vec<f32> = sigma_raw
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    r.done("artifact")?;
    Ok(ArtifactFile {
        kind,
        rope,
        seed,
        feature_count: p,
        rank,
        sample_count: n,
        mean,
        basis,
        sigma,
    })
}

/// Serialized artifact size in bytes for a (p, r) model; header and
/// fingerprint included.
pub fn artifact_file_len(p: u64, r: u64) -> u64 {
    // magic 4 + version 2 + kind 1 + rope 21 + seed 8 + p/r/n 12
    48 + 2 * p + 2 * p * r + 4 * r + 8
}

// ---------------------------------------------------------------------------
// plan blobs (shared by KVTC and KVTP)
// ---------------------------------------------------------------------------

fn plan_to_blob(plan: &CompressionPlan) -> Vec<u8> {
    let mut out = Vec::new();
    match plan {
        CompressionPlan::Dp(p) => {
            out.push(0u8);
            out.extend_from_slice(&(p.total_components as u32).to_le_bytes());
            out.extend_from_slice(&p.budget_bits.to_le_bytes());
            out.extend_from_slice(&p.bits_per_token.to_le_bytes());
            out.extend_from_slice(&p.expected_error.to_le_bytes());
            out.extend_from_slice(&(p.groups.len() as u32).to_le_bytes());
            for g in &p.groups {
                out.extend_from_slice(&(g.size as u32).to_le_bytes());
                out.push(g.etype.wire_id());
            }
        }
        CompressionPlan::PcaOnly(p) => {
            out.push(1u8);
            out.extend_from_slice(&(p.total_components as u32).to_le_bytes());
            out.extend_from_slice(&(p.kept_components as u32).to_le_bytes());
            out.extend_from_slice(&p.budget_bits.to_le_bytes());
            out.extend_from_slice(&p.bits_per_token.to_le_bytes());
            out.extend_from_slice(&p.expected_error.to_le_bytes());
        }
    }
    out
}

fn plan_from_blob(blob: &[u8]) -> Result<CompressionPlan> {
    let mut r = Reader::new(blob);
    let kind = r.u8("plan kind")?;
    let plan = match kind {
        0 => {
            let total = r.u32("plan components")? as usize;
            let budget_bits = r.u64("plan budget")?;
            let bits_per_token = r.u64("plan bits per token")?;
            let expected_error = r.f64("plan expected error")?;
            let ngroups = r.u32("plan group count")? as usize;
            if ngroups > total {
                return Err(Error::corrupt("plan has more groups than components"));
            }
            let mut groups = Vec::with_capacity(ngroups);
            let mut covered = 0usize;
            for _ in 0..ngroups {
                let size = r.u32("group size")? as usize;
                let etype = ElementType::from_wire_id(r.u8("group type")?)?;
                covered += size;
                groups.push(PlanGroup { size, etype });
            }
            if covered > total {
                return Err(Error::corrupt("plan groups exceed component span"));
            }
            CompressionPlan::Dp(AllocationPlan {
                groups,
                covered_components: covered,
                total_components: total,
                bits_per_token,
                budget_bits,
                expected_error,
            })
        }
        1 => {
            let total = r.u32("plan components")? as usize;
            let kept = r.u32("kept components")? as usize;
            if kept > total {
                return Err(Error::corrupt("pca-only plan keeps more than it spans"));
            }
            let budget_bits = r.u64("plan budget")?;
            let bits_per_token = r.u64("plan bits per token")?;
            let expected_error = r.f64("plan expected error")?;
            CompressionPlan::PcaOnly(PcaOnlyPlan {
                kept_components: kept,
                total_components: total,
                bits_per_token,
                budget_bits,
                expected_error,
            })
        }
        other => return Err(Error::corrupt(format!("unknown plan kind {other}"))),
    };
    r.done("plan blob")?;
    Ok(plan)
}

// ---------------------------------------------------------------------------
// compressed cache (KVTC)
// ---------------------------------------------------------------------------

pub fn serialize_cache(c: &CompressedCache) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(&CACHE_MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(c.shape.layers as u32).to_le_bytes());
    out.extend_from_slice(&(c.shape.kv_heads as u32).to_le_bytes());
    out.extend_from_slice(&(c.shape.head_dim as u32).to_le_bytes());
    out.extend_from_slice(&(c.shape.tokens as u64).to_le_bytes());
    out.extend_from_slice(&(c.sink_count as u32).to_le_bytes());
    out.extend_from_slice(&(c.window as u32).to_le_bytes());
    out.push(c.lossless.wire_id());
    out.push(c.lossless.level() as u8);
    rope_to_wire(&mut out, &c.rope);
    out.extend_from_slice(&c.start_position.to_le_bytes());
    out.extend_from_slice(&c.key_fingerprint.to_le_bytes());
    out.extend_from_slice(&c.value_fingerprint.to_le_bytes());
    for plan in [&c.key_plan, &c.value_plan] {
        let blob = plan_to_blob(plan);
        out.extend_from_slice(&(blob.len() as u32).to_le_bytes());
        out.extend_from_slice(&blob);
    }
    for section in [
        &c.raw_sink_keys,
        &c.raw_sink_values,
        &c.raw_window_keys,
        &c.raw_window_values,
    ] {
        out.extend_from_slice(&(section.len() as u64).to_le_bytes());
        for &v in section.iter() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    for payload in [&c.key_payload, &c.value_payload] {
        out.extend_from_slice(&(payload.len() as u64).to_le_bytes());
        out.extend_from_slice(payload);
    }
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    out
}

pub fn parse_cache(buf: &[u8]) -> Result<CompressedCache> {
    check_magic(buf, CACHE_MAGIC)?;
    if buf.len() < 6 {
        return Err(Error::truncated("cache file shorter than header"));
    }
    check_version(u16::from_le_bytes([buf[4], buf[5]]))?;
    if buf.len() < 10 {
        return Err(Error::truncated("cache file shorter than checksum"));
    }
    let body = &buf[..buf.len() - 4];
    let stored = u32::from_le_bytes(buf[buf.len() - 4..].try_into().unwrap());
    if crc32fast::hash(body) != stored {
        return Err(Error::ChecksumMismatch { section: "cache file CRC" });
    }

    let mut r = Reader::new(body);
    r.take(6, "magic+version")?;
    let shape = CacheShape {
        layers: r.u32("layers")? as usize,
        kv_heads: r.u32("kv heads")? as usize,
        head_dim: r.u32("head dim")? as usize,
        tokens: r.u64("tokens")? as usize,
    };
    let sink_count = r.u32("sink count")? as usize;
    let window = r.u32("window")? as usize;
    let codec_id = r.u8("codec id")?;
    let codec_level = r.u8("codec level")?;
    let lossless = LosslessCodec::from_wire(codec_id, codec_level)?;
    let rope = rope_from_wire(&mut r)?;
    let start_position = r.u64("start position")?;
    let key_fingerprint = r.u64("key fingerprint")?;
    let value_fingerprint = r.u64("value fingerprint")?;

    let mut plans = Vec::with_capacity(2);
    for name in ["key plan", "value plan"] {
        let len = r.u32(name)? as usize;
        let blob = r.take(len, name)?;
        plans.push(plan_from_blob(blob)?);
    }
    let value_plan = plans.pop().unwrap();
    let key_plan = plans.pop().unwrap();

    shape.validate().map_err(|e| Error::corrupt(e.to_string()))?;
    if sink_count + window > shape.tokens {
        return Err(Error::corrupt("sink + window exceed token count"));
    }

    let mut sections = Vec::with_capacity(4);
    for (name, tokens) in [
        ("raw sink keys", sink_count),
        ("raw sink values", sink_count),
        ("raw window keys", window),
        ("raw window values", window),
    ] {
        let len = r.u64(name)? as usize;
        let expect = shape.layers * shape.kv_heads * tokens * shape.head_dim;
        if len != expect {
            return Err(Error::corrupt(format!(
                "{name} holds {len} values, shape implies {expect}"
            )));
        }
        sections.push(r.u16_vec(len, name)?);
    }
    let raw_window_values = sections.pop().unwrap();
    let raw_window_keys = sections.pop().unwrap();
    let raw_sink_values = sections.pop().unwrap();
    let raw_sink_keys = sections.pop().unwrap();

    let mut payloads = Vec::with_capacity(2);
    for name in ["key payload", "value payload"] {
        let len = r.u64(name)? as usize;
        payloads.push(r.take(len, name)?.to_vec());
    }
    let value_payload = payloads.pop().unwrap();
    let key_payload = payloads.pop().unwrap();
    r.done("cache file")?;

    Ok(CompressedCache {
        shape,
        sink_count,
        window,
        lossless,
        rope,
        start_position,
        key_fingerprint,
        value_fingerprint,
        key_plan,
        value_plan,
        raw_sink_keys,
        raw_sink_values,
        raw_window_keys,
        raw_window_values,
        key_payload,
        value_payload,
    })
}

// ---------------------------------------------------------------------------
// raw tensor (KVTR)
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
pub enum TensorData {
    F16(Vec<u16>),
    F32(Vec<f32>),
    F64(Vec<f64>),
}

impl TensorData {
    fn elem_id(&self) -> u8 {
        match self {
            TensorData::F16(_) => 0,
            TensorData::F32(_) => 1,
            TensorData::F64(_) => 2,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            TensorData::F16(v) => v.len(),
            TensorData::F32(v) => v.len(),
            TensorData::F64(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn elem_name(&self) -> &'static str {
        match self {
            TensorData::F16(_) => "binary16",
            TensorData::F32(_) => "binary32",
            TensorData::F64(_) => "binary64",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RawTensorFile {
    pub dims: Vec<u64>,
    pub data: TensorData,
}

pub fn write_tensor(t: &RawTensorFile) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(&TENSOR_MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.push(t.data.elem_id());
    out.extend_from_slice(&(t.dims.len() as u32).to_le_bytes());
    for &d in &t.dims {
        out.extend_from_slice(&d.to_le_bytes());
    }
    match &t.data {
        TensorData::F16(v) => {
            for &x in v {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        TensorData::F32(v) => {
            for &x in v {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        TensorData::F64(v) => {
            for &x in v {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
    }
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    out
}

pub fn read_tensor(buf: &[u8]) -> Result<RawTensorFile> {
    check_magic(buf, TENSOR_MAGIC)?;
    if buf.len() < 6 {
        return Err(Error::truncated("tensor file shorter than header"));
    }
    check_version(u16::from_le_bytes([buf[4], buf[5]]))?;
    if buf.len() < 10 {
        return Err(Error::truncated("tensor file shorter than checksum"));
    }
    let body = &buf[..buf.len() - 4];
    let stored = u32::from_le_bytes(buf[buf.len() - 4..].try_into().unwrap());
    if crc32fast::hash(body) != stored {
        return Err(Error::ChecksumMismatch { section: "tensor file CRC" });
    }

    let mut r = Reader::new(body);
    r.take(6, "magic+version")?;
    let elem = r.u8("element type")?;
    let ndims = r.u32("dims count")? as usize;
    let mut dims = Vec::with_capacity(ndims.min(64));
    for _ in 0..ndims {
        dims.push(r.u64("dim")?);
    }
    let count = dims
        .iter()
        .try_fold(1u64, |a, &d| a.checked_mul(d))
        .ok_or_else(|| Error::corrupt("tensor dims overflow"))? as usize;
    let data = match elem {
        0 => TensorData::F16(r.u16_vec(count, "f16 payload")?),
        1 => {
            let raw = r.take_elems(count, 4, "f32 payload")?;
            TensorData::F32(
                raw.chunks_exact(4)
                    .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                    .collect(),
            )
        }
        2 => {
            let raw = r.take_elems(count, 8, "f64 payload")?;
            TensorData::F64(
                raw.chunks_exact(8)
                    .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                    .collect(),
            )
        }
        other => return Err(Error::corrupt(format!("unknown tensor element type {other}"))),
    };
    r.done("tensor file")?;
    Ok(RawTensorFile { dims, data })
}

// ---------------------------------------------------------------------------
// cache dumps: a KvCache as a KVTR tensor of dims [2, l, h, t, d_head]
// (index 0 keys, index 1 values). RoPE metadata travels with the consumer
// (artifact file or CLI flags), not the dump.
// ---------------------------------------------------------------------------

pub fn write_cache_dump(cache: &KvCache) -> Vec<u8> {
    let s = &cache.shape;
    let mut data = Vec::with_capacity(cache.keys.len() * 2);
    data.extend_from_slice(&cache.keys);
    data.extend_from_slice(&cache.values);
    write_tensor(&RawTensorFile {
        dims: vec![
            2,
            s.layers as u64,
            s.kv_heads as u64,
            s.tokens as u64,
            s.head_dim as u64,
        ],
        data: TensorData::F16(data),
    })
}

pub fn read_cache_dump(buf: &[u8], rope: RopeConfig, start_position: u64) -> Result<KvCache> {
    let tensor = read_tensor(buf)?;
    if tensor.dims.len() != 5 || tensor.dims[0] != 2 {
        return Err(Error::invalid(format!(
            "cache dump must have dims [2, l, h, t, d_head], got {:?}",
            tensor.dims
        )));
    }
    let shape = CacheShape {
        layers: tensor.dims[1] as usize,
        kv_heads: tensor.dims[2] as usize,
        head_dim: tensor.dims[4] as usize,
        tokens: tensor.dims[3] as usize,
    };
    let TensorData::F16(data) = tensor.data else {
        return Err(Error::invalid("cache dump must store binary16 elements"));
    };
    let half_len = shape.element_count();
    if data.len() != half_len * 2 {
        return Err(Error::corrupt("cache dump payload length mismatch"));
    }
    KvCache::from_parts(
        shape,
        data[..half_len].to_vec(),
        data[half_len..].to_vec(),
        rope,
        start_position,
    )
}

// ---------------------------------------------------------------------------
// plan file (KVTP)
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
pub struct PlanFile {
    /// Model fingerprint of the artifact this plan was computed against.
    pub artifact_fingerprint: u64,
    pub target_cr: f64,
    pub plan: CompressionPlan,
}

pub fn serialize_plan(p: &PlanFile) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(&PLAN_MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&p.artifact_fingerprint.to_le_bytes());
    out.extend_from_slice(&p.target_cr.to_le_bytes());
    let blob = plan_to_blob(&p.plan);
    out.extend_from_slice(&(blob.len() as u32).to_le_bytes());
    out.extend_from_slice(&blob);
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    out
}

pub fn parse_plan(buf: &[u8]) -> Result<PlanFile> {
    check_magic(buf, PLAN_MAGIC)?;
    if buf.len() < 6 {
        return Err(Error::truncated("plan file shorter than header"));
    }
    check_version(u16::from_le_bytes([buf[4], buf[5]]))?;
    if buf.len() < 10 {
        return Err(Error::truncated("plan file shorter than checksum"));
    }
    let body = &buf[..buf.len() - 4];
    let stored = u32::from_le_bytes(buf[buf.len() - 4..].try_into().unwrap());
    if crc32fast::hash(body) != stored {
        return Err(Error::ChecksumMismatch { section: "plan file CRC" });
    }
    let mut r = Reader::new(body);
    r.take(6, "magic+version")?;
    let artifact_fingerprint = r.u64("artifact fingerprint")?;
    let target_cr = r.f64("target cr")?;
    let len = r.u32("plan blob length")? as usize;
    let blob = r.take(len, "plan blob")?;
    let plan = plan_from_blob(blob)?;
    r.done("plan file")?;
    Ok(PlanFile { artifact_fingerprint, target_cr, plan })
}

// ---------------------------------------------------------------------------
// inspection
// ---------------------------------------------------------------------------

/// Human-readable description of any container file; validates checksums.
pub fn describe(buf: &[u8]) -> Result<String> {
    if buf.len() < 4 {
        return Err(Error::truncated("file shorter than magic"));
    }
    match [buf[0], buf[1], buf[2], buf[3]] {
        ARTIFACT_MAGIC => {
            let a = parse_artifact(buf)?;
            Ok(format!(
                "KVTA calibration artifact v{FORMAT_VERSION}\n\
                 stream: {}\n\
                 features (p): {}\n\
                 rank (r): {}\n\
                 samples (n): {}\n\
                 rope: head_dim={} base={} scaling={} convention={:?}\n\
                 sampling seed: {}\n\
                 model fingerprint: {:016x}\n\
                 file bytes: {}",
                a.kind.name(),
                a.feature_count,
                a.rank,
                a.sample_count,
                a.rope.head_dim,
                a.rope.base,
                a.rope.scaling,
                a.rope.convention,
                a.seed,
                a.model_fingerprint(),
                buf.len()
            ))
        }
        CACHE_MAGIC => {
            let c = parse_cache(buf)?;
            Ok(format!(
                "KVTC compressed cache v{FORMAT_VERSION}\n\
                 shape: l={} h={} d_head={} t={}\n\
                 policy: sinks={} window={} codec={} level={}\n\
                 start position: {}\n\
                 key plan: {} ({} bits/token), value plan: {} ({} bits/token)\n\
                 fingerprints: key {:016x}, value {:016x}\n\
                 payload bytes: key {}, value {}\n\
                 file bytes: {}",
                c.shape.layers,
                c.shape.kv_heads,
                c.shape.head_dim,
                c.shape.tokens,
                c.sink_count,
                c.window,
                c.lossless.name(),
                c.lossless.level(),
                c.start_position,
                c.key_plan.mode_name(),
                c.key_plan.bits_per_token(),
                c.value_plan.mode_name(),
                c.value_plan.bits_per_token(),
                c.key_fingerprint,
                c.value_fingerprint,
                c.key_payload.len(),
                c.value_payload.len(),
                buf.len()
            ))
        }
        TENSOR_MAGIC => {
            let t = read_tensor(buf)?;
            Ok(format!(
                "KVTR raw tensor v{FORMAT_VERSION}\n\
                 dims: {:?}\n\
                 element type: {}\n\
                 elements: {}\n\
                 file bytes: {}",
                t.dims,
                t.data.elem_name(),
                t.data.len(),
                buf.len()
            ))
        }
        PLAN_MAGIC => {
            let p = parse_plan(buf)?;
            Ok(format!(
                "KVTP allocation plan v{FORMAT_VERSION}\n\
                 artifact fingerprint: {:016x}\n\
                 target compression ratio: {}\n\
                 mode: {}\n\
                 bits per token: {}\n\
                 components: {}\n\
                 file bytes: {}",
                p.artifact_fingerprint,
                p.target_cr,
                p.plan.mode_name(),
                p.plan.bits_per_token(),
                p.plan.total_components(),
                buf.len()
            ))
        }
        found => Err(Error::BadMagic { expected: *b"????", found }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::allocator::PcaOnlyPlan;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn sample_artifact(seed: u64) -> ArtifactFile {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (p, r) = (12usize, 5usize);
        ArtifactFile {
            kind: StreamKind::Key,
            rope: RopeConfig::new(4),
            seed: 77,
            feature_count: p as u32,
            rank: r as u32,
            sample_count: 100,
            mean: (0..p).map(|_| rng.random::<u16>() & 0x7bff).collect(),
            basis: (0..p * r).map(|_| rng.random::<u16>() & 0x7bff).collect(),
            sigma: (0..r).map(|_| rng.random::<f32>()).collect(),
        }
    }

    #[test]
    fn artifact_roundtrip_bitexact() {
        let a = sample_artifact(1);
        let bytes = serialize_artifact(&a);
        let back = parse_artifact(&bytes).unwrap();
        assert_eq!(a, back);
        assert_eq!(bytes, serialize_artifact(&back));
        assert_eq!(bytes.len() as u64, artifact_file_len(12, 5));
    }

    #[test]
    fn artifact_fingerprint_survives_storage() {
        use crate::linalg::{fit_pca, PcaMethod};
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let data = Matrix::from_fn(20, 8, |_, _| rng.random::<f64>()).unwrap();
        let model = fit_pca(&data, 4, PcaMethod::Exact).unwrap();
        let artifact = ArtifactFile::from_model(&model, StreamKind::Value, RopeConfig::new(4), 9);
        let loaded = parse_artifact(&serialize_artifact(&artifact)).unwrap();
        assert_eq!(model_fingerprint(&model), artifact.model_fingerprint());
        assert_eq!(
            artifact.model_fingerprint(),
            model_fingerprint(&loaded.to_model().unwrap())
        );
    }

    #[test]
    fn artifact_corruption_detected_everywhere() {
        let bytes = serialize_artifact(&sample_artifact(5));
        for at in 0..bytes.len() {
            let mut bad = bytes.clone();
            bad[at] ^= 0x01;
            assert!(parse_artifact(&bad).is_err(), "byte {at} undetected");
        }
    }

    #[test]
    fn artifact_version_gated() {
        let mut bytes = serialize_artifact(&sample_artifact(7));
        bytes[4] = 9;
        // Refresh the fingerprint so only the version differs.
        let fp = fnv1a64(&bytes[..bytes.len() - 8]);
        let at = bytes.len() - 8;
        bytes[at..].copy_from_slice(&fp.to_le_bytes());
        assert!(matches!(
            parse_artifact(&bytes),
            Err(Error::UnsupportedVersion { found: 9, .. })
        ));
    }

    #[test]
    fn artifact_sizing_matches_reference_models() {
        // 32768 features cut to 10000 components is ~328M parameters and
        // ~655 MB per stream at binary16.
        let params = 32_768u64 * 10_000;
        assert_eq!(params, 327_680_000);
        let bytes = artifact_file_len(32_768, 10_000);
        assert!(bytes > 2 * params && bytes < 2 * params + 200_000);
    }

    #[test]
    fn tensor_roundtrip_and_corruption() {
        let t = RawTensorFile {
            dims: vec![2, 3, 4],
            data: TensorData::F64((0..24).map(|i| i as f64 / 7.0).collect()),
        };
        let bytes = write_tensor(&t);
        assert_eq!(read_tensor(&bytes).unwrap(), t);
        for at in 0..bytes.len() {
            let mut bad = bytes.clone();
            bad[at] ^= 0x80;
            assert!(read_tensor(&bad).is_err(), "byte {at} undetected");
        }
    }

    #[test]
    fn tensor_dim_overflow_rejected() {
        let t = RawTensorFile { dims: vec![4], data: TensorData::F32(vec![0.0; 4]) };
        let mut bytes = write_tensor(&t);
        // Swap the dim for u64::MAX and fix the CRC; the parser must refuse
        // before allocating.
        bytes[11..19].copy_from_slice(&u64::MAX.to_le_bytes());
        let len = bytes.len();
        let crc = crc32fast::hash(&bytes[..len - 4]);
        bytes[len - 4..].copy_from_slice(&crc.to_le_bytes());
        assert!(read_tensor(&bytes).is_err());
    }

    #[test]
    fn plan_file_roundtrip() {
        let plan = CompressionPlan::Dp(AllocationPlan {
            groups: vec![
                PlanGroup { size: 16, etype: ElementType::Fp8E4M3 },
                PlanGroup { size: 4, etype: ElementType::None0 },
                PlanGroup { size: 64, etype: ElementType::Int2 },
            ],
            covered_components: 84,
            total_components: 128,
            bits_per_token: 16 * 8 + 32 + 64 * 2 + 32,
            budget_bits: 400,
            expected_error: 12.5,
        });
        let pf = PlanFile { artifact_fingerprint: 0xdead_beef, target_cr: 16.0, plan };
        let bytes = serialize_plan(&pf);
        assert_eq!(parse_plan(&bytes).unwrap(), pf);
        for at in 0..bytes.len() {
            let mut bad = bytes.clone();
            bad[at] ^= 0x02;
            assert!(parse_plan(&bad).is_err(), "byte {at} undetected");
        }
    }

    #[test]
    fn every_format_gates_on_version() {
        // Flip the version and refresh the checksum so only the version is
        // wrong; parsers must refuse rather than guess.
        let mut a = serialize_artifact(&sample_artifact(13));
        a[4] = 7;
        let fp = fnv1a64(&a[..a.len() - 8]);
        let at = a.len() - 8;
        a[at..].copy_from_slice(&fp.to_le_bytes());
        assert!(matches!(parse_artifact(&a), Err(Error::UnsupportedVersion { .. })));

        let refresh_crc = |bytes: &mut Vec<u8>| {
            let len = bytes.len();
            let crc = crc32fast::hash(&bytes[..len - 4]);
            bytes[len - 4..].copy_from_slice(&crc.to_le_bytes());
        };
        let mut t = write_tensor(&RawTensorFile { dims: vec![2], data: TensorData::F32(vec![0.5; 2]) });
        t[4] = 7;
        refresh_crc(&mut t);
        assert!(matches!(read_tensor(&t), Err(Error::UnsupportedVersion { .. })));

        let mut p = serialize_plan(&PlanFile {
            artifact_fingerprint: 1,
            target_cr: 8.0,
            plan: CompressionPlan::PcaOnly(PcaOnlyPlan {
                kept_components: 1,
                total_components: 2,
                bits_per_token: 16,
                budget_bits: 16,
                expected_error: 0.5,
            }),
        });
        p[4] = 7;
        refresh_crc(&mut p);
        assert!(matches!(parse_plan(&p), Err(Error::UnsupportedVersion { .. })));
    }

    #[test]
    fn bad_magic_reported_as_such() {
        let bytes = serialize_artifact(&sample_artifact(9));
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(parse_artifact(&bad), Err(Error::BadMagic { .. })));
        assert!(matches!(parse_cache(&bytes), Err(Error::BadMagic { .. })));
    }

    #[test]
    fn describe_dispatches_on_magic() {
        let a = serialize_artifact(&sample_artifact(11));
        assert!(describe(&a).unwrap().contains("KVTA"));
        let t = write_tensor(&RawTensorFile { dims: vec![3], data: TensorData::F32(vec![1.0; 3]) });
        assert!(describe(&t).unwrap().contains("KVTR"));
        assert!(describe(b"QQQQ12345").is_err());
    }
}
