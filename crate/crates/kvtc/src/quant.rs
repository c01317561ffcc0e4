//! Grouped scalar quantization in the decorrelated domain.
//!
//! A group is a run of consecutive transform components sharing one 16-bit
//! shift and one 16-bit scale. Element types are None0 (zero bits, component
//! removal), Int2/Int4 (min/max affine), and Fp8 E4M3 (mean shift, absmax
//! scale). Shift and scale are stored as IEEE binary16 and the *stored*
//! values are used for encoding, so decode is bit-faithful.

use half::f16;

use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// Per-group overhead charged by the bit allocator: one 16-bit shift plus
/// one 16-bit scale, counted per token.
pub const GROUP_OVERHEAD_BITS: u64 = 32;

/// Smallest positive normal binary16 value, used as the scale floor for
/// constant blocks.
pub const SCALE_FLOOR: f64 = 6.103515625e-5; // 2^-14

const E4M3_MAX: f64 = 448.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ElementType {
    None0,
    Int2,
    Int4,
    Fp8E4M3,
}

impl ElementType {
    pub fn payload_bits(&self) -> u32 {
        match self {
            ElementType::None0 => 0,
            ElementType::Int2 => 2,
            ElementType::Int4 => 4,
            ElementType::Fp8E4M3 => 8,
        }
    }

    /// Bits per token for a group of `size` components: payload plus the
    /// shared shift/scale overhead. None0 groups cost nothing.
    pub fn bit_cost_per_token(&self, size: usize) -> u64 {
        match self {
            ElementType::None0 => 0,
            _ => size as u64 * self.payload_bits() as u64 + GROUP_OVERHEAD_BITS,
        }
    }

    pub fn wire_id(&self) -> u8 {
        match self {
            ElementType::None0 => 0,
            ElementType::Int2 => 1,
            ElementType::Int4 => 2,
            ElementType::Fp8E4M3 => 3,
        }
    }

    pub fn from_wire_id(id: u8) -> Result<Self> {
        match id {
            0 => Ok(ElementType::None0),
            1 => Ok(ElementType::Int2),
            2 => Ok(ElementType::Int4),
            3 => Ok(ElementType::Fp8E4M3),
            _ => Err(Error::corrupt(format!("unknown element type id {id}"))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            ElementType::None0 => "none",
            ElementType::Int2 => "int2",
            ElementType::Int4 => "int4",
            ElementType::Fp8E4M3 => "fp8",
        }
    }
}

/// Shared 16-bit shift and scale factors, stored as binary16 bit patterns.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GroupParams {
    pub shift: u16,
    pub scale: u16,
}

impl GroupParams {
    pub fn shift_f64(&self) -> f64 {
        f16::from_bits(self.shift).to_f64()
    }

    pub fn scale_f64(&self) -> f64 {
        f16::from_bits(self.scale).to_f64()
    }
}

/// One quantized group: element type, width in components, shared factors
/// (absent for None0) and unpacked codes laid out token-major.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantizedGroup {
    pub etype: ElementType,
    pub size: usize,
    pub params: Option<GroupParams>,
    pub codes: Vec<u8>,
}

impl QuantizedGroup {
    pub fn none(size: usize) -> Self {
        QuantizedGroup { etype: ElementType::None0, size, params: None, codes: Vec::new() }
    }
}

fn round_to_f16(x: f64) -> f16 {
    f16::from_f64(x)
}

fn scale_with_floor(raw: f64) -> f16 {
    let s = round_to_f16(raw);
    if s.to_f64() > 0.0 {
        s
    } else {
        round_to_f16(SCALE_FLOOR)
    }
}

fn encode_with_params(data: &[f64], etype: ElementType, params: GroupParams) -> Vec<u8> {
    let shift = params.shift_f64();
    let scale = params.scale_f64();
    match etype {
        ElementType::None0 => Vec::new(),
        ElementType::Int2 | ElementType::Int4 => {
            let levels = ((1u32 << etype.payload_bits()) - 1) as f64;
            data.iter()
                .map(|&x| ((x - shift) / scale).round_ties_even().clamp(0.0, levels) as u8)
                .collect()
        }
        ElementType::Fp8E4M3 => data.iter().map(|&x| e4m3_encode((x - shift) / scale)).collect(),
    }
}

/// Quantizes a `tokens x size` block with one shared shift/scale pair.
///
/// Int-k uses min/max affine factors; Fp8 centers on the block mean and
/// scales the absolute maximum onto the E4M3 range.
pub fn quantize_group(block: &Matrix, etype: ElementType) -> Result<QuantizedGroup> {
    if etype == ElementType::None0 {
        return Err(Error::invalid("quantize_group does not accept None0"));
    }
    if block.rows() == 0 || block.cols() == 0 {
        return Err(Error::invalid("quantize_group on empty block"));
    }
    let data = block.data();

    let params = match etype {
        ElementType::Int2 | ElementType::Int4 => {
            let min = data.iter().copied().fold(f64::INFINITY, f64::min);
            let max = data.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let levels = ((1u32 << etype.payload_bits()) - 1) as f64;
            let shift = round_to_f16(min);
            let scale = scale_with_floor((max - min) / levels);
            GroupParams { shift: shift.to_bits(), scale: scale.to_bits() }
        }
        ElementType::Fp8E4M3 => {
            let mean = data.iter().sum::<f64>() / data.len() as f64;
            let shift = round_to_f16(mean);
            let shift_v = shift.to_f64();
            let amax = data.iter().map(|x| (x - shift_v).abs()).fold(0.0, f64::max);
            let scale = scale_with_floor(amax / E4M3_MAX);
            GroupParams { shift: shift.to_bits(), scale: scale.to_bits() }
        }
        ElementType::None0 => unreachable!(),
    };

    Ok(QuantizedGroup {
        etype,
        size: block.cols(),
        params: Some(params),
        codes: encode_with_params(data, etype, params),
    })
}

/// Reconstructs the `tokens x size` block from a quantized group. Same group
/// bytes always produce the same matrix.
pub fn dequantize_group(group: &QuantizedGroup, tokens: usize) -> Result<Matrix> {
    if group.etype == ElementType::None0 {
        if !group.codes.is_empty() {
            return Err(Error::corrupt("None0 group carries codes"));
        }
        return Ok(Matrix::zeros(tokens, group.size));
    }
    if group.codes.len() != group.size * tokens {
        return Err(Error::corrupt(format!(
            "group has {} codes, expected {} ({} tokens x {} components)",
            group.codes.len(),
            group.size * tokens,
            tokens,
            group.size
        )));
    }
    let params = group
        .params
        .ok_or_else(|| Error::corrupt("quantized group missing shift/scale"))?;
    let shift = params.shift_f64();
    let scale = params.scale_f64();

    let mut data = Vec::with_capacity(group.codes.len());
    match group.etype {
        ElementType::Int2 | ElementType::Int4 => {
            let max_code = ((1u32 << group.etype.payload_bits()) - 1) as u8;
            for &c in &group.codes {
                if c > max_code {
                    return Err(Error::corrupt(format!("code {c} exceeds {max_code}")));
                }
                data.push(shift + c as f64 * scale);
            }
        }
        ElementType::Fp8E4M3 => {
            for &c in &group.codes {
                if c & 0x7f == 0x7f {
                    return Err(Error::corrupt("E4M3 NaN pattern in payload"));
                }
                data.push(shift + e4m3_decode(c) * scale);
            }
        }
        ElementType::None0 => unreachable!(),
    }
    Matrix::from_vec(tokens, group.size, data)
}

/// Quantize-dequantize round trip plus the per-token bit cost charged by the
/// allocator. None0 maps everything to zero at zero cost.
pub fn simulate_quantization(block: &Matrix, etype: ElementType) -> Result<(Matrix, u64)> {
    if etype == ElementType::None0 {
        return Ok((Matrix::zeros(block.rows(), block.cols()), 0));
    }
    let group = quantize_group(block, etype)?;
    let dequantized = dequantize_group(&group, block.rows())?;
    Ok((dequantized, etype.bit_cost_per_token(block.cols())))
}

// ---------------------------------------------------------------------------
// E4M3: 1 sign bit, 4 exponent bits (bias 7), 3 mantissa bits. Max finite
// value 448; no infinities; the all-ones pattern (exp 15, mantissa 7) is NaN.
// ---------------------------------------------------------------------------

fn e4m3_decode_raw(code: u8) -> f64 {
    let sign = if code & 0x80 != 0 { -1.0 } else { 1.0 };
    let exp = (code >> 3) & 0x0f;
    let mant = (code & 0x07) as f64;
    if exp == 0 {
        // subnormal: mant/8 * 2^-6
        return sign * mant * (1.0 / 512.0);
    }
    if exp == 0x0f && code & 0x07 == 0x07 {
        return f64::NAN;
    }
    sign * (1.0 + mant / 8.0) * 2f64.powi(exp as i32 - 7)
}

/// Decodes an E4M3 byte. Total on all 256 codes; the two NaN patterns decode
/// to NaN (the encoder never emits them).
pub fn e4m3_decode(code: u8) -> f64 {
    e4m3_decode_raw(code)
}

/// Encodes into nearest-even E4M3, saturating at +-448. The NaN patterns are
/// never produced.
pub fn e4m3_encode(x: f64) -> u8 {
    let sign_bit = if x.is_sign_negative() { 0x80u8 } else { 0 };
    let ax = x.abs().min(E4M3_MAX);
    if ax == 0.0 {
        return sign_bit;
    }
    // Positive codes 0x00..=0x7e decode to strictly increasing values; find
    // the nearest, ties to the even code (even code LSB == even mantissa).
    let (mut lo, mut hi) = (0u8, 0x7eu8);
    while lo < hi {
        let mid = (lo + hi).div_ceil(2);
        if e4m3_decode_raw(mid) <= ax {
            lo = mid;
        } else {
            hi = mid - 1;
        }
    }
    let below = lo;
    let code = if below == 0x7e {
        below
    } else {
        let above = below + 1;
        let d_below = ax - e4m3_decode_raw(below);
        let d_above = e4m3_decode_raw(above) - ax;
        if d_below < d_above {
            below
        } else if d_above < d_below {
            above
        } else if below % 2 == 0 {
            below
        } else {
            above
        }
    };
    sign_bit | code
}

// ---------------------------------------------------------------------------
// Code packing: little-endian bit order within bytes, token-major element
// order. The byte layout is part of the on-disk container format.
// ---------------------------------------------------------------------------

pub fn packed_len(count: usize, bits: u32) -> usize {
    (count * bits as usize).div_ceil(8)
}

pub fn pack_codes(codes: &[u8], bits: u32) -> Vec<u8> {
    assert!(matches!(bits, 2 | 4 | 8));
    let mut out = vec![0u8; packed_len(codes.len(), bits)];
    let mask = ((1u16 << bits) - 1) as u8;
    for (i, &c) in codes.iter().enumerate() {
        let bit = i * bits as usize;
        out[bit / 8] |= (c & mask) << (bit % 8);
    }
    out
}

pub fn unpack_codes(bytes: &[u8], bits: u32, count: usize) -> Result<Vec<u8>> {
    assert!(matches!(bits, 2 | 4 | 8));
    let need = packed_len(count, bits);
    if bytes.len() < need {
        return Err(Error::corrupt(format!(
            "packed codes truncated: {} bytes, need {need}",
            bytes.len()
        )));
    }
    let mask = ((1u16 << bits) - 1) as u8;
    let mut out = Vec::with_capacity(count);
    for i in 0..count {
        let bit = i * bits as usize;
        out.push((bytes[bit / 8] >> (bit % 8)) & mask);
    }
    Ok(out)
}
