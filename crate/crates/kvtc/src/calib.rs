//! Calibration dataset handling: seeded token-position sampling with sink
//! exclusion, cross-layer/head feature concatenation, and reconstruction
//! error reporting through the full project/quantize/reconstruct path.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::codec::{rope_frequencies, token_row, CompressionPlan, KvCache, StreamKind};
use crate::error::{Error, Result};
use crate::linalg::{project, reconstruct, Matrix, PcaModel};
use crate::quant::{simulate_quantization, ElementType};

/// Sampling is a seeded partial Fisher-Yates shuffle over the pooled
/// non-sink positions, driven by ChaCha8 so runs reproduce across
/// platforms. Positions are drawn without replacement.
#[derive(Debug, Clone)]
pub struct SamplingSpec {
    pub sample_count: usize,
    /// Leading positions per cache that are never sampled.
    pub exclude_sink_count: usize,
    pub seed: u64,
    /// How many layers concatenate into one feature row; `None` means all.
    /// Must divide the layer count; each layer group gets its own matrix
    /// (and downstream its own model).
    pub layer_concat_width: Option<usize>,
}

impl SamplingSpec {
    pub fn new(sample_count: usize, seed: u64) -> Self {
        SamplingSpec {
            sample_count,
            exclude_sink_count: 4,
            seed,
            layer_concat_width: None,
        }
    }
}

/// Number of layer groups a spec splits a cache into.
pub fn layer_group_count(layers: usize, spec: &SamplingSpec) -> Result<usize> {
    let width = spec.layer_concat_width.unwrap_or(layers);
    if width == 0 || width > layers {
        return Err(Error::invalid(format!(
            "layer concat width {width} out of range (1..={layers})"
        )));
    }
    if !layers.is_multiple_of(width) {
        return Err(Error::invalid(format!(
            "layer concat width {width} must divide layer count {layers}"
        )));
    }
    Ok(layers / width)
}

/// Samples token positions (without replacement, seeded permutation) from
/// the pooled non-sink positions of all caches and flattens them into rows
/// of width `width * h * d_head`. Keys are un-RoPE'd at their absolute
/// positions; feature order is (layer, head, dim), layer-major.
pub fn build_calibration_matrix(
    caches: &[&KvCache],
    spec: &SamplingSpec,
    stream: StreamKind,
    layer_group: usize,
) -> Result<Matrix> {
    if caches.is_empty() {
        return Err(Error::invalid("no caches supplied"));
    }
    let shape = caches[0].shape;
    for c in caches {
        c.validate()?;
        if c.shape.layers != shape.layers
            || c.shape.kv_heads != shape.kv_heads
            || c.shape.head_dim != shape.head_dim
        {
            return Err(Error::invalid("caches disagree on (layers, heads, head_dim)"));
        }
    }
    let groups = layer_group_count(shape.layers, spec)?;
    if layer_group >= groups {
        return Err(Error::invalid(format!(
            "layer group {layer_group} out of range ({groups} groups)"
        )));
    }
    let width = shape.layers / groups;
    let layer_range = layer_group * width..(layer_group + 1) * width;

    let mut pool: Vec<(usize, usize)> = Vec::new();
    for (ci, c) in caches.iter().enumerate() {
        for pos in spec.exclude_sink_count..c.shape.tokens {
            pool.push((ci, pos));
        }
    }
    if spec.sample_count > pool.len() {
        return Err(Error::invalid(format!(
            "cannot sample {} positions from a pool of {}",
            spec.sample_count,
            pool.len()
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let (chosen, _) = pool.partial_shuffle(&mut rng, spec.sample_count);

    let p = width * shape.kv_heads * shape.head_dim;
    let mut out = Matrix::zeros(spec.sample_count, p);
    for (row, &(ci, pos)) in chosen.iter().enumerate() {
        let cache = caches[ci];
        let freqs = rope_frequencies(&cache.rope);
        token_row(cache, stream, pos, layer_range.clone(), &freqs, out.row_mut(row));
    }
    Ok(out)
}

/// Per-position relative reconstruction errors through the full
/// project -> quantize -> reconstruct path, plus the overall relative
/// Frobenius error (per-position errors weighted by squared row norms).
#[derive(Debug, Clone)]
pub struct ErrorReport {
    pub overall: f64,
    pub per_position: Vec<f64>,
    /// Rows with zero norm: reported as error 0 and flagged, not dropped.
    pub flagged_rows: Vec<usize>,
    /// Optional (calibration size, held-out error) curve points.
    pub size_curve: Vec<(usize, f64)>,
}

/// Applies a compression plan to a projected matrix the same way the codec
/// does at compression time.
pub fn apply_plan_simulation(projected: &Matrix, plan: &CompressionPlan) -> Result<Matrix> {
    let mut out = Matrix::zeros(projected.rows(), projected.cols());
    match plan {
        CompressionPlan::Dp(plan) => {
            let mut offset = 0usize;
            for g in &plan.groups {
                if g.etype != ElementType::None0 {
                    let block = projected.column_block(offset, offset + g.size);
                    let (deq, _) = simulate_quantization(&block, g.etype)?;
                    for row in 0..out.rows() {
                        out.row_mut(row)[offset..offset + g.size].copy_from_slice(deq.row(row));
                    }
                }
                offset += g.size;
            }
        }
        CompressionPlan::PcaOnly(plan) => {
            for row in 0..out.rows() {
                for c in 0..plan.kept_components.min(projected.cols()) {
                    let v = half::f16::from_f64(projected.get(row, c)).to_f64();
                    out.set(row, c, v);
                }
            }
        }
    }
    Ok(out)
}

pub fn reconstruction_error_curve(
    model: &PcaModel,
    plan: &CompressionPlan,
    eval: &Matrix,
) -> Result<ErrorReport> {
    if eval.cols() != model.feature_count {
        return Err(Error::invalid(format!(
            "eval has {} features, model expects {}",
            eval.cols(),
            model.feature_count
        )));
    }
    let projected = project(model, eval)?;
    let simulated = apply_plan_simulation(&projected, plan)?;
    let restored = reconstruct(model, &simulated)?;

    let mut per_position = Vec::with_capacity(eval.rows());
    let mut flagged_rows = Vec::new();
    let (mut err_total, mut norm_total) = (0.0f64, 0.0f64);
    for r in 0..eval.rows() {
        let err: f64 = eval
            .row(r)
            .iter()
            .zip(restored.row(r))
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        let norm: f64 = eval.row(r).iter().map(|v| v * v).sum();
        err_total += err;
        norm_total += norm;
        if norm == 0.0 {
            flagged_rows.push(r);
            per_position.push(0.0);
        } else {
            per_position.push((err / norm).sqrt());
        }
    }
    let overall = if norm_total == 0.0 { 0.0 } else { (err_total / norm_total).sqrt() };
    Ok(ErrorReport { overall, per_position, flagged_rows, size_curve: Vec::new() })
}

/// Held-out error as a function of calibration size: fit on the first `n`
/// rows of `train` for each requested size, evaluate on `heldout`.
pub fn calibration_size_curve(
    train: &Matrix,
    heldout: &Matrix,
    sizes: &[usize],
    rank: usize,
    plan_for: impl Fn(&PcaModel, &Matrix) -> Result<CompressionPlan>,
) -> Result<ErrorReport> {
    let mut curve = Vec::with_capacity(sizes.len());
    let mut last: Option<ErrorReport> = None;
    for &n in sizes {
        if n < 2 || n > train.rows() {
            return Err(Error::invalid(format!(
                "calibration size {n} out of range (2..={})",
                train.rows()
            )));
        }
        let subset = train.row_block(0, n);
        let model = crate::linalg::fit_pca(&subset, rank.min(n.min(subset.cols())), crate::linalg::PcaMethod::Exact)?;
        let plan = plan_for(&model, &subset)?;
        let report = reconstruction_error_curve(&model, &plan, heldout)?;
        curve.push((n, report.overall));
        last = Some(report);
    }
    let mut report = last.ok_or_else(|| Error::invalid("no calibration sizes supplied"))?;
    report.size_curve = curve;
    Ok(report)
}
