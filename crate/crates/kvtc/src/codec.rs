//! End-to-end pipeline: policy-aware splitting (attention sinks and a
//! sliding window stay raw), per-stream PCA projection, plan-driven grouped
//! quantization, entropy coding, and the exact inverse.
//!
//! Keys are un-rotated (RoPE undone at their absolute positions) before
//! projection and re-rotated on decompression; values skip the RoPE step.
//! Key and value streams share code but never share artifacts.

use half::f16;

use crate::allocator::{AllocationPlan, PcaOnlyPlan};
use crate::container;
use crate::entropy::{self, LosslessCodec};
use crate::error::{Error, Result};
use crate::linalg::{project, reconstruct, Matrix, PcaModel};
use crate::quant::{
    dequantize_group, pack_codes, packed_len, quantize_group, unpack_codes, ElementType,
    GroupParams, QuantizedGroup,
};
use crate::rope::{rotate_row, RopeConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CacheShape {
    pub layers: usize,
    pub kv_heads: usize,
    pub head_dim: usize,
    pub tokens: usize,
}

impl CacheShape {
    pub fn feature_count(&self) -> usize {
        self.layers * self.kv_heads * self.head_dim
    }

    pub fn element_count(&self) -> usize {
        self.feature_count() * self.tokens
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers == 0 || self.kv_heads == 0 || self.head_dim == 0 || self.tokens == 0 {
            return Err(Error::invalid("cache shape dimensions must be positive"));
        }
        Ok(())
    }
}

/// 16-bit baseline size of a KV cache: 4 * l * h * d_head * t bytes
/// (two streams at two bytes per element).
pub fn kv_cache_bytes(shape: &CacheShape) -> Result<u64> {
    shape.validate()?;
    4u64.checked_mul(shape.layers as u64)
        .and_then(|v| v.checked_mul(shape.kv_heads as u64))
        .and_then(|v| v.checked_mul(shape.head_dim as u64))
        .and_then(|v| v.checked_mul(shape.tokens as u64))
        .ok_or_else(|| Error::invalid("cache size overflows u64"))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StreamKind {
    Key,
    Value,
}

impl StreamKind {
    pub fn name(&self) -> &'static str {
        match self {
            StreamKind::Key => "key",
            StreamKind::Value => "value",
        }
    }

    pub fn wire_id(&self) -> u8 {
        match self {
            StreamKind::Key => 0,
            StreamKind::Value => 1,
        }
    }

    pub fn from_wire_id(id: u8) -> Result<Self> {
        match id {
            0 => Ok(StreamKind::Key),
            1 => Ok(StreamKind::Value),
            _ => Err(Error::corrupt(format!("unknown stream kind {id}"))),
        }
    }
}

/// Key/value tensors of binary16 values, laid out `[layer][head][token][dim]`,
/// plus the RoPE configuration and the absolute position of token 0.
#[derive(Debug, Clone, PartialEq)]
pub struct KvCache {
    pub shape: CacheShape,
    pub keys: Vec<u16>,
    pub values: Vec<u16>,
    pub rope: RopeConfig,
    pub start_position: u64,
}

impl KvCache {
    pub fn zeroed(shape: CacheShape, rope: RopeConfig, start_position: u64) -> Result<Self> {
        shape.validate()?;
        rope.validate()?;
        if rope.head_dim != shape.head_dim {
            return Err(Error::invalid("rope head_dim differs from cache head_dim"));
        }
        let n = shape.element_count();
        Ok(KvCache { shape, keys: vec![0; n], values: vec![0; n], rope, start_position })
    }

    pub fn from_parts(
        shape: CacheShape,
        keys: Vec<u16>,
        values: Vec<u16>,
        rope: RopeConfig,
        start_position: u64,
    ) -> Result<Self> {
        let cache = KvCache { shape, keys, values, rope, start_position };
        cache.validate()?;
        Ok(cache)
    }

    pub fn validate(&self) -> Result<()> {
        self.shape.validate()?;
        self.rope.validate()?;
        if self.rope.head_dim != self.shape.head_dim {
            return Err(Error::invalid("rope head_dim differs from cache head_dim"));
        }
        let n = self.shape.element_count();
        if self.keys.len() != n || self.values.len() != n {
            return Err(Error::invalid(format!(
                "tensor lengths {}/{} do not match shape ({} elements)",
                self.keys.len(),
                self.values.len(),
                n
            )));
        }
        for &bits in self.keys.iter().chain(&self.values) {
            if bits >> 10 & 0x1f == 0x1f {
                return Err(Error::invalid("non-finite binary16 entry in cache"));
            }
        }
        Ok(())
    }

    #[inline]
    pub fn index(&self, layer: usize, head: usize, token: usize, dim: usize) -> usize {
        ((layer * self.shape.kv_heads + head) * self.shape.tokens + token) * self.shape.head_dim
            + dim
    }

    pub fn stream(&self, kind: StreamKind) -> &[u16] {
        match kind {
            StreamKind::Key => &self.keys,
            StreamKind::Value => &self.values,
        }
    }

    fn stream_mut(&mut self, kind: StreamKind) -> &mut [u16] {
        match kind {
            StreamKind::Key => &mut self.keys,
            StreamKind::Value => &mut self.values,
        }
    }

    /// Writes one `(layer, head, token)` slice, rounding f64 to binary16.
    pub fn set_head_token(
        &mut self,
        kind: StreamKind,
        layer: usize,
        head: usize,
        token: usize,
        dims: &[f64],
    ) {
        let at = self.index(layer, head, token, 0);
        let slot = &mut self.stream_mut(kind)[at..at + dims.len()];
        for (s, &v) in slot.iter_mut().zip(dims) {
            *s = f16::from_f64(v).to_bits();
        }
    }
}

/// Feature index of `(layer, head, dim)` in the flattened token row:
/// layer-major, then head, then dim. Calibration and compression must agree
/// on this ordering for projection to make sense.
pub fn feature_index(shape: &CacheShape, layer: usize, head: usize, dim: usize) -> usize {
    (layer * shape.kv_heads + head) * shape.head_dim + dim
}

/// One flattened token row over `layer_range`, widened to f64. Keys are
/// un-rotated at their absolute position.
pub(crate) fn token_row(
    cache: &KvCache,
    kind: StreamKind,
    token: usize,
    layer_range: std::ops::Range<usize>,
    freqs: &[f64],
    out: &mut [f64],
) {
    let d = cache.shape.head_dim;
    let h = cache.shape.kv_heads;
    let position = cache.start_position + token as u64;
    let data = cache.stream(kind);
    for (li, layer) in layer_range.enumerate() {
        for head in 0..h {
            let src = cache.index(layer, head, token, 0);
            let dst = (li * h + head) * d;
            let row = &mut out[dst..dst + d];
            for (o, &bits) in row.iter_mut().zip(&data[src..src + d]) {
                *o = f16::from_bits(bits).to_f64();
            }
            if kind == StreamKind::Key {
                rotate_row(&cache.rope, freqs, row, position, true);
            }
        }
    }
}

pub(crate) fn rope_frequencies(rope: &RopeConfig) -> Vec<f64> {
    let d = rope.head_dim as f64;
    (0..rope.head_dim / 2)
        .map(|j| rope.base.powf(-2.0 * j as f64 / d))
        .collect()
}

/// Flattens a token range into rows of width `l*h*d_head` (keys un-RoPE'd).
pub fn token_matrix(
    cache: &KvCache,
    kind: StreamKind,
    tokens: std::ops::Range<usize>,
) -> Result<Matrix> {
    cache.validate()?;
    if tokens.end > cache.shape.tokens {
        return Err(Error::invalid("token range exceeds cache length"));
    }
    let p = cache.shape.feature_count();
    let freqs = rope_frequencies(&cache.rope);
    let mut m = Matrix::zeros(tokens.len(), p);
    for (row, token) in tokens.clone().enumerate() {
        token_row(cache, kind, token, 0..cache.shape.layers, &freqs, m.row_mut(row));
    }
    Ok(m)
}

/// Either a DP-derived group layout or the pure-PCA truncation fallback
/// (leading components kept at 16-bit raw).
#[derive(Debug, Clone, PartialEq)]
pub enum CompressionPlan {
    Dp(AllocationPlan),
    PcaOnly(PcaOnlyPlan),
}

impl CompressionPlan {
    pub fn total_components(&self) -> usize {
        match self {
            CompressionPlan::Dp(p) => p.total_components,
            CompressionPlan::PcaOnly(p) => p.total_components,
        }
    }

    pub fn bits_per_token(&self) -> u64 {
        match self {
            CompressionPlan::Dp(p) => p.bits_per_token,
            CompressionPlan::PcaOnly(p) => p.bits_per_token,
        }
    }

    pub fn mode_name(&self) -> &'static str {
        match self {
            CompressionPlan::Dp(_) => "dp",
            CompressionPlan::PcaOnly(_) => "pca-only",
        }
    }
}

#[derive(Debug, Clone)]
pub struct CompressionPolicy {
    pub sink_count: usize,
    pub window: usize,
    pub key_plan: CompressionPlan,
    pub value_plan: CompressionPlan,
    pub lossless: LosslessCodec,
}

impl CompressionPolicy {
    pub const DEFAULT_SINKS: usize = 4;
    pub const DEFAULT_WINDOW: usize = 128;
}

/// Compressed container: raw sink/window sections kept bit-exact, middle
/// tokens as entropy-coded quantized group streams.
#[derive(Debug, Clone, PartialEq)]
pub struct CompressedCache {
    pub shape: CacheShape,
    pub sink_count: usize,
    pub window: usize,
    pub lossless: LosslessCodec,
    pub rope: RopeConfig,
    pub start_position: u64,
    pub key_fingerprint: u64,
    pub value_fingerprint: u64,
    pub key_plan: CompressionPlan,
    pub value_plan: CompressionPlan,
    pub raw_sink_keys: Vec<u16>,
    pub raw_sink_values: Vec<u16>,
    pub raw_window_keys: Vec<u16>,
    pub raw_window_values: Vec<u16>,
    pub key_payload: Vec<u8>,
    pub value_payload: Vec<u8>,
}

impl CompressedCache {
    pub fn middle_tokens(&self) -> usize {
        self.shape.tokens - self.sink_count - self.window
    }

    /// True when the whole cache was stored raw (nothing to compress).
    pub fn is_raw_passthrough(&self) -> bool {
        self.middle_tokens() == 0
    }
}

fn extract_raw(cache: &KvCache, kind: StreamKind, tokens: std::ops::Range<usize>) -> Vec<u16> {
    let d = cache.shape.head_dim;
    let mut out = Vec::with_capacity(tokens.len() * cache.shape.layers * cache.shape.kv_heads * d);
    let data = cache.stream(kind);
    for layer in 0..cache.shape.layers {
        for head in 0..cache.shape.kv_heads {
            for token in tokens.clone() {
                let at = cache.index(layer, head, token, 0);
                out.extend_from_slice(&data[at..at + d]);
            }
        }
    }
    out
}

fn place_raw(
    cache: &mut KvCache,
    kind: StreamKind,
    tokens: std::ops::Range<usize>,
    raw: &[u16],
) -> Result<()> {
    let d = cache.shape.head_dim;
    let expect = tokens.len() * cache.shape.layers * cache.shape.kv_heads * d;
    if raw.len() != expect {
        return Err(Error::corrupt(format!(
            "raw section has {} values, expected {expect}",
            raw.len()
        )));
    }
    let mut cursor = 0;
    for layer in 0..cache.shape.layers {
        for head in 0..cache.shape.kv_heads {
            for token in tokens.clone() {
                let at = cache.index(layer, head, token, 0);
                cache.stream_mut(kind)[at..at + d].copy_from_slice(&raw[cursor..cursor + d]);
                cursor += d;
            }
        }
    }
    Ok(())
}

/// Serializes the quantized middle-token stream (before entropy coding).
///
/// DP layout, per non-None0 group in plan order: shift f16 LE, scale f16 LE,
/// then token-major codes packed little-endian-bit-first, padded to a byte.
/// Pca-only layout: kept components per token as raw binary16.
fn encode_stream_payload(projected: &Matrix, plan: &CompressionPlan) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    match plan {
        CompressionPlan::Dp(plan) => {
            let mut offset = 0usize;
            for g in &plan.groups {
                if g.etype == ElementType::None0 {
                    offset += g.size;
                    continue;
                }
                let block = projected.column_block(offset, offset + g.size);
                let q = quantize_group(&block, g.etype)?;
                let params = q.params.expect("non-None0 group has params");
                out.extend_from_slice(&params.shift.to_le_bytes());
                out.extend_from_slice(&params.scale.to_le_bytes());
                out.extend_from_slice(&pack_codes(&q.codes, g.etype.payload_bits()));
                offset += g.size;
            }
        }
        CompressionPlan::PcaOnly(plan) => {
            for row in 0..projected.rows() {
                for &x in &projected.row(row)[..plan.kept_components] {
                    out.extend_from_slice(&f16::from_f64(x).to_bits().to_le_bytes());
                }
            }
        }
    }
    Ok(out)
}

/// Inverse of [`encode_stream_payload`]: rebuilds the dequantized projection
/// matrix, zero-filling uncovered components.
fn decode_stream_payload(bytes: &[u8], plan: &CompressionPlan, tokens: usize) -> Result<Matrix> {
    let r = plan.total_components();
    let mut out = Matrix::zeros(tokens, r);
    let mut cursor = 0usize;
    match plan {
        CompressionPlan::Dp(plan) => {
            let mut offset = 0usize;
            for g in &plan.groups {
                if g.etype == ElementType::None0 {
                    offset += g.size;
                    continue;
                }
                if cursor + 4 > bytes.len() {
                    return Err(Error::corrupt("payload truncated at group params"));
                }
                let shift = u16::from_le_bytes([bytes[cursor], bytes[cursor + 1]]);
                let scale = u16::from_le_bytes([bytes[cursor + 2], bytes[cursor + 3]]);
                cursor += 4;
                let count = g.size * tokens;
                let plen = packed_len(count, g.etype.payload_bits());
                if cursor + plen > bytes.len() {
                    return Err(Error::corrupt("payload truncated inside group codes"));
                }
                let codes = unpack_codes(&bytes[cursor..cursor + plen], g.etype.payload_bits(), count)?;
                cursor += plen;
                let group = QuantizedGroup {
                    etype: g.etype,
                    size: g.size,
                    params: Some(GroupParams { shift, scale }),
                    codes,
                };
                let block = dequantize_group(&group, tokens)?;
                for row in 0..tokens {
                    out.row_mut(row)[offset..offset + g.size].copy_from_slice(block.row(row));
                }
                offset += g.size;
            }
        }
        CompressionPlan::PcaOnly(plan) => {
            let need = tokens * plan.kept_components * 2;
            if bytes.len() < need {
                return Err(Error::corrupt("pca-only payload truncated"));
            }
            for row in 0..tokens {
                for c in 0..plan.kept_components {
                    let b = cursor + (row * plan.kept_components + c) * 2;
                    let bits = u16::from_le_bytes([bytes[b], bytes[b + 1]]);
                    out.set(row, c, f16::from_bits(bits).to_f64());
                }
            }
            cursor += need;
        }
    }
    if cursor != bytes.len() {
        return Err(Error::corrupt(format!(
            "payload has {} trailing bytes",
            bytes.len() - cursor
        )));
    }
    Ok(out)
}

fn check_models(
    shape: &CacheShape,
    key_model: &PcaModel,
    value_model: &PcaModel,
    key_plan: &CompressionPlan,
    value_plan: &CompressionPlan,
) -> Result<()> {
    let p = shape.feature_count();
    for (model, name) in [(key_model, "key"), (value_model, "value")] {
        if model.feature_count != p {
            return Err(Error::invalid(format!(
                "{name} model covers {} features, cache has {p}",
                model.feature_count
            )));
        }
    }
    for (plan, model, name) in [
        (key_plan, key_model, "key"),
        (value_plan, value_model, "value"),
    ] {
        if plan.total_components() != model.rank {
            return Err(Error::invalid(format!(
                "{name} plan spans {} components, model rank is {}",
                plan.total_components(),
                model.rank
            )));
        }
    }
    Ok(())
}

/// Compresses a cache. Tokens `[0, s)` and `[t-w, t)` are stored raw at 16
/// bits; the middle tokens go through un-RoPE (keys), projection, grouped
/// quantization, and entropy coding. When `t <= s + w` the cache is stored
/// raw in full (nothing to compress) and the ratio stays ~1.
pub fn compress(
    cache: &KvCache,
    key_model: &PcaModel,
    value_model: &PcaModel,
    policy: &CompressionPolicy,
) -> Result<CompressedCache> {
    cache.validate()?;
    check_models(&cache.shape, key_model, value_model, &policy.key_plan, &policy.value_plan)?;

    let t = cache.shape.tokens;
    let (sink_count, window) = if t <= policy.sink_count + policy.window {
        let s = policy.sink_count.min(t);
        (s, t - s)
    } else {
        (policy.sink_count, policy.window)
    };
    let middle = sink_count..t - window;

    let (key_payload, value_payload) = if middle.is_empty() {
        (Vec::new(), Vec::new())
    } else {
        let key_rows = token_matrix(cache, StreamKind::Key, middle.clone())?;
        let value_rows = token_matrix(cache, StreamKind::Value, middle.clone())?;
        let key_proj = project(key_model, &key_rows)?;
        let value_proj = project(value_model, &value_rows)?;
        let key_bytes = encode_stream_payload(&key_proj, &policy.key_plan)?;
        let value_bytes = encode_stream_payload(&value_proj, &policy.value_plan)?;
        (
            entropy::encode(policy.lossless, &key_bytes),
            entropy::encode(policy.lossless, &value_bytes),
        )
    };

    Ok(CompressedCache {
        shape: cache.shape,
        sink_count,
        window,
        lossless: policy.lossless,
        rope: cache.rope,
        start_position: cache.start_position,
        key_fingerprint: container::model_fingerprint(key_model),
        value_fingerprint: container::model_fingerprint(value_model),
        key_plan: policy.key_plan.clone(),
        value_plan: policy.value_plan.clone(),
        raw_sink_keys: extract_raw(cache, StreamKind::Key, 0..sink_count),
        raw_sink_values: extract_raw(cache, StreamKind::Value, 0..sink_count),
        raw_window_keys: extract_raw(cache, StreamKind::Key, t - window..t),
        raw_window_values: extract_raw(cache, StreamKind::Value, t - window..t),
        key_payload,
        value_payload,
    })
}

fn check_fingerprints(
    c: &CompressedCache,
    key_model: &PcaModel,
    value_model: &PcaModel,
) -> Result<()> {
    let key_fp = container::model_fingerprint(key_model);
    if key_fp != c.key_fingerprint {
        return Err(Error::ArtifactMismatch(format!(
            "key model fingerprint {key_fp:016x} != stored {:016x}",
            c.key_fingerprint
        )));
    }
    let value_fp = container::model_fingerprint(value_model);
    if value_fp != c.value_fingerprint {
        return Err(Error::ArtifactMismatch(format!(
            "value model fingerprint {value_fp:016x} != stored {:016x}",
            c.value_fingerprint
        )));
    }
    Ok(())
}

/// Decompresses every layer. See [`decompress_layer_range`] for the
/// layer-sliced entry point this delegates to.
pub fn decompress(
    c: &CompressedCache,
    key_model: &PcaModel,
    value_model: &PcaModel,
) -> Result<KvCache> {
    decompress_layer_range(c, key_model, value_model, 0..c.shape.layers)
}

/// Decompresses only the layers in `layers`, reconstructing through the
/// corresponding row block of the basis. Layers decode independently, so
/// generation can start before the whole cache is restored.
pub fn decompress_layer_range(
    c: &CompressedCache,
    key_model: &PcaModel,
    value_model: &PcaModel,
    layers: std::ops::Range<usize>,
) -> Result<KvCache> {
    if layers.end > c.shape.layers || layers.is_empty() {
        return Err(Error::invalid("layer range out of bounds"));
    }
    check_fingerprints(c, key_model, value_model)?;
    check_models(&c.shape, key_model, value_model, &c.key_plan, &c.value_plan)?;

    let t = c.shape.tokens;
    let mid = c.middle_tokens();
    let out_shape = CacheShape { layers: layers.len(), ..c.shape };
    let mut out = KvCache::zeroed(out_shape, c.rope, c.start_position)?;

    if mid > 0 {
        let key_bytes = entropy::decode(&c.key_payload)?;
        let value_bytes = entropy::decode(&c.value_payload)?;
        let key_proj = decode_stream_payload(&key_bytes, &c.key_plan, mid)?;
        let value_proj = decode_stream_payload(&value_bytes, &c.value_plan, mid)?;
        let freqs = rope_frequencies(&c.rope);
        let h = c.shape.kv_heads;
        let d = c.shape.head_dim;

        for (li, layer) in layers.clone().enumerate() {
            let f0 = feature_index(&c.shape, layer, 0, 0);
            let f1 = f0 + h * d;
            for (proj, model, kind) in [
                (&key_proj, key_model, StreamKind::Key),
                (&value_proj, value_model, StreamKind::Value),
            ] {
                let sub = layer_submodel(model, f0, f1);
                let rows = reconstruct(&sub, proj)?;
                for token in 0..mid {
                    let position = c.start_position + (c.sink_count + token) as u64;
                    let row = rows.row(token);
                    for head in 0..h {
                        let mut dims = row[head * d..(head + 1) * d].to_vec();
                        if kind == StreamKind::Key {
                            rotate_row(&c.rope, &freqs, &mut dims, position, false);
                        }
                        out.set_head_token(kind, li, head, c.sink_count + token, &dims);
                    }
                }
            }
        }
    }

    // Raw sink/window sections restore bit-exact, sliced to the layer range.
    let full = FullRawView { c };
    for (kind, sink, window) in [
        (StreamKind::Key, &c.raw_sink_keys, &c.raw_window_keys),
        (StreamKind::Value, &c.raw_sink_values, &c.raw_window_values),
    ] {
        let sink_slice = full.slice_layers(sink, c.sink_count, layers.clone())?;
        let window_slice = full.slice_layers(window, c.window, layers.clone())?;
        place_raw(&mut out, kind, 0..c.sink_count, &sink_slice)?;
        place_raw(&mut out, kind, t - c.window..t, &window_slice)?;
    }
    Ok(out)
}

struct FullRawView<'a> {
    c: &'a CompressedCache,
}

impl FullRawView<'_> {
    /// Extracts the rows of a raw section belonging to a layer range.
    fn slice_layers(
        &self,
        raw: &[u16],
        tokens: usize,
        layers: std::ops::Range<usize>,
    ) -> Result<Vec<u16>> {
        let h = self.c.shape.kv_heads;
        let d = self.c.shape.head_dim;
        let per_layer = h * tokens * d;
        if raw.len() != self.c.shape.layers * per_layer {
            return Err(Error::corrupt("raw section length mismatch"));
        }
        Ok(raw[layers.start * per_layer..layers.end * per_layer].to_vec())
    }
}

fn layer_submodel(model: &PcaModel, f0: usize, f1: usize) -> PcaModel {
    let basis = model.basis.row_block(f0, f1);
    PcaModel {
        mean: model.mean[f0..f1].to_vec(),
        basis,
        sigma: model.sigma.clone(),
        feature_count: f1 - f0,
        rank: model.rank,
        sample_count: model.sample_count,
    }
}

/// Compression-ratio accounting: 16-bit size of sink plus middle tokens over
/// stored bytes, window tokens excluded from both sides. Reported with and
/// without the per-cache header.
#[derive(Debug, Clone, Copy)]
pub struct CrReport {
    pub including_header: f64,
    pub excluding_header: f64,
    pub baseline_bytes: u64,
    pub raw_sink_bytes: u64,
    pub payload_bytes: u64,
    pub header_bytes: u64,
}

pub fn compression_ratio(c: &CompressedCache) -> CrReport {
    let p = c.shape.feature_count() as u64;
    let counted_tokens = (c.sink_count + c.middle_tokens()) as u64;
    let baseline_bytes = counted_tokens * p * 2 * 2;

    let raw_sink_bytes = (c.raw_sink_keys.len() + c.raw_sink_values.len()) as u64 * 2;
    let raw_window_bytes = (c.raw_window_keys.len() + c.raw_window_values.len()) as u64 * 2;
    let payload_bytes = (c.key_payload.len() + c.value_payload.len()) as u64;
    let file_bytes = container::serialize_cache(c).len() as u64;
    let header_bytes = file_bytes - raw_sink_bytes - raw_window_bytes - payload_bytes;

    let ratio = |stored: u64| -> f64 {
        if stored == 0 {
            1.0
        } else {
            baseline_bytes as f64 / stored as f64
        }
    };
    CrReport {
        including_header: ratio(raw_sink_bytes + payload_bytes + header_bytes),
        excluding_header: ratio(raw_sink_bytes + payload_bytes),
        baseline_bytes,
        raw_sink_bytes,
        payload_bytes,
        header_bytes,
    }
}
