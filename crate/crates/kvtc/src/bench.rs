//! Benchmark-style sweeps shared by the CLI `bench` subcommand and the
//! acceptance suite: the compression-ratio/error sweep across target ratios
//! and a self-checking round-trip suite.

use crate::allocator::{
    block_error_table, budget_for_target_cr, dp_tables, pca_only_plan, plan_from_tables, DpConfig,
};
use crate::codec::{
    compress, compression_ratio, decompress, token_matrix, CacheShape, CompressedCache,
    CompressionPlan, CompressionPolicy, KvCache, StreamKind,
};
use crate::container;
use crate::entropy::LosslessCodec;
use crate::error::Result;
use crate::linalg::{fit_pca, project, Matrix, PcaMethod, PcaModel};
use crate::rope::RopeConfig;
use crate::synth::{generate, SynthSpec};

#[derive(Debug, Clone)]
pub struct CrSweepConfig {
    pub shape: CacheShape,
    pub latent_rank: usize,
    pub noise_sigma: f64,
    pub seed: u64,
    pub targets: Vec<f64>,
    /// PCA rank for both streams.
    pub rank: usize,
    pub sinks: usize,
    pub window: usize,
    pub pca_method: PcaMethod,
}

impl CrSweepConfig {
    /// Desk-scale default used by the CLI.
    pub fn small(seed: u64) -> Self {
        CrSweepConfig {
            shape: CacheShape { layers: 2, kv_heads: 2, head_dim: 32, tokens: 512 },
            latent_rank: 24,
            noise_sigma: 0.05,
            seed,
            targets: vec![64.0, 32.0, 16.0, 8.0],
            rank: 96,
            sinks: 4,
            window: 128,
            pca_method: PcaMethod::Exact,
        }
    }
}

#[derive(Debug, Clone)]
pub struct CrSweepPoint {
    pub target_cr: f64,
    pub budget_bits: usize,
    pub key_bits_per_token: u64,
    pub value_bits_per_token: u64,
    /// Quantization-stage ratios (identity codec), header included/excluded.
    pub cr_quant_incl: f64,
    pub cr_quant_excl: f64,
    /// Total ratio with DEFLATE, header included.
    pub cr_deflate_incl: f64,
    /// Relative middle-token reconstruction error (both streams pooled).
    pub middle_rel_err: f64,
    pub key_dp_err: f64,
    pub key_pca_only_err: f64,
    pub value_dp_err: f64,
    pub value_pca_only_err: f64,
}

struct StreamCalibration {
    model: PcaModel,
    rows: Matrix,
    projected: Matrix,
    blocks: crate::allocator::BlockErrorTable,
}

fn calibrate_stream(
    cache: &KvCache,
    stream: StreamKind,
    middle: std::ops::Range<usize>,
    rank: usize,
    method: PcaMethod,
    dp_config: &DpConfig,
) -> Result<StreamCalibration> {
    let rows = token_matrix(cache, stream, middle)?;
    let model = fit_pca(&rows, rank, method)?;
    let projected = project(&model, &rows)?;
    let blocks = block_error_table(&projected, dp_config)?;
    Ok(StreamCalibration { model, rows, projected, blocks })
}

/// Generates the sweep cache, calibrates both streams on its own middle
/// tokens, and walks the target ratios. The DP calibration data equals the
/// compressed segment, so realized errors match plan errors exactly and the
/// DP's budget monotonicity carries over to the measured error column.
pub fn run_cr_sweep(cfg: &CrSweepConfig) -> Result<Vec<CrSweepPoint>> {
    let rope = RopeConfig::new(cfg.shape.head_dim);
    let cache = generate(&SynthSpec {
        shape: cfg.shape,
        latent_rank: cfg.latent_rank,
        noise_sigma: cfg.noise_sigma,
        sink_outlier_scale: 1.0,
        planted_rotations: false,
        rope,
        seed: cfg.seed,
        start_position: 0,
    })?;
    let t = cfg.shape.tokens;
    let middle = cfg.sinks..t - cfg.window;
    let p = cfg.shape.feature_count();
    let dp_config = DpConfig::default();

    let key = calibrate_stream(&cache, StreamKind::Key, middle.clone(), cfg.rank, cfg.pca_method, &dp_config)?;
    let value =
        calibrate_stream(&cache, StreamKind::Value, middle.clone(), cfg.rank, cfg.pca_method, &dp_config)?;

    let mut points = Vec::with_capacity(cfg.targets.len());
    for &target in &cfg.targets {
        let budget = budget_for_target_cr(p, 16, target)?.min(dp_config.max_budget_bits);
        let key_plan = plan_from_tables(&dp_tables(&key.blocks, budget));
        let value_plan = plan_from_tables(&dp_tables(&value.blocks, budget));
        let key_pca = pca_only_plan(&key.projected, budget, 16)?;
        let value_pca = pca_only_plan(&value.projected, budget, 16)?;

        let mut compressed: Vec<CompressedCache> = Vec::new();
        for codec in [LosslessCodec::Identity, LosslessCodec::deflate_default()] {
            let policy = CompressionPolicy {
                sink_count: cfg.sinks,
                window: cfg.window,
                key_plan: CompressionPlan::Dp(key_plan.clone()),
                value_plan: CompressionPlan::Dp(value_plan.clone()),
                lossless: codec,
            };
            compressed.push(compress(&cache, &key.model, &value.model, &policy)?);
        }
        let identity_cr = compression_ratio(&compressed[0]);
        let deflate_cr = compression_ratio(&compressed[1]);

        let restored = decompress(&compressed[0], &key.model, &value.model)?;
        let mut err_sq = 0.0f64;
        let mut norm_sq = 0.0f64;
        for (stream, calib) in [(StreamKind::Key, &key), (StreamKind::Value, &value)] {
            let got = token_matrix(&restored, stream, middle.clone())?;
            err_sq += got.sub(&calib.rows)?.frobenius_norm_sq();
            norm_sq += calib.rows.frobenius_norm_sq();
        }

        points.push(CrSweepPoint {
            target_cr: target,
            budget_bits: budget,
            key_bits_per_token: key_plan.bits_per_token,
            value_bits_per_token: value_plan.bits_per_token,
            cr_quant_incl: identity_cr.including_header,
            cr_quant_excl: identity_cr.excluding_header,
            cr_deflate_incl: deflate_cr.including_header,
            middle_rel_err: (err_sq / norm_sq).sqrt(),
            key_dp_err: key_plan.expected_error,
            key_pca_only_err: key_pca.expected_error,
            value_dp_err: value_plan.expected_error,
            value_pca_only_err: value_pca.expected_error,
        });
    }
    Ok(points)
}

#[derive(Debug, Clone)]
pub struct SuiteCheck {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

/// Compress/decompress self-checks on a small synthetic cache; returns one
/// row per check.
pub fn run_roundtrip_suite(seed: u64) -> Result<Vec<SuiteCheck>> {
    let shape = CacheShape { layers: 2, kv_heads: 2, head_dim: 16, tokens: 256 };
    let rope = RopeConfig::new(16);
    let cache = generate(&SynthSpec {
        shape,
        latent_rank: 8,
        noise_sigma: 0.05,
        sink_outlier_scale: 1.0,
        planted_rotations: false,
        rope,
        seed,
        start_position: 0,
    })?;
    let middle = 4..256 - 64;
    let dp_config = DpConfig::default();
    let key = calibrate_stream(&cache, StreamKind::Key, middle.clone(), 24, PcaMethod::Exact, &dp_config)?;
    let value =
        calibrate_stream(&cache, StreamKind::Value, middle.clone(), 24, PcaMethod::Exact, &dp_config)?;
    let budget = budget_for_target_cr(shape.feature_count(), 16, 16.0)?;
    let key_plan = plan_from_tables(&dp_tables(&key.blocks, budget));
    let value_plan = plan_from_tables(&dp_tables(&value.blocks, budget));

    let mut checks = Vec::new();
    let mut push = |name: &str, pass: bool, detail: String| {
        checks.push(SuiteCheck { name: name.to_string(), pass, detail });
    };

    for codec in [LosslessCodec::Identity, LosslessCodec::deflate_default()] {
        let policy = CompressionPolicy {
            sink_count: 4,
            window: 64,
            key_plan: CompressionPlan::Dp(key_plan.clone()),
            value_plan: CompressionPlan::Dp(value_plan.clone()),
            lossless: codec,
        };
        let c1 = compress(&cache, &key.model, &value.model, &policy)?;
        let c2 = compress(&cache, &key.model, &value.model, &policy)?;
        push(
            &format!("compress determinism ({})", codec.name()),
            c1 == c2,
            "two runs, identical container".to_string(),
        );

        let bytes = container::serialize_cache(&c1);
        let reparsed = container::parse_cache(&bytes)?;
        push(
            &format!("container round-trip ({})", codec.name()),
            reparsed == c1,
            format!("{} bytes", bytes.len()),
        );

        let d = decompress(&reparsed, &key.model, &value.model)?;
        let sinks_ok = (0..4).all(|tok| token_equal(&cache, &d, tok));
        let window_ok = (256 - 64..256).all(|tok| token_equal(&cache, &d, tok));
        push(
            &format!("sink/window bit-exact ({})", codec.name()),
            sinks_ok && window_ok,
            "raw sections".to_string(),
        );

        let cr = compression_ratio(&c1);
        push(
            &format!("compression ratio ({})", codec.name()),
            cr.including_header > 1.0,
            format!("incl header {:.2}, excl {:.2}", cr.including_header, cr.excluding_header),
        );
    }
    Ok(checks)
}

fn token_equal(a: &KvCache, b: &KvCache, token: usize) -> bool {
    for layer in 0..a.shape.layers {
        for head in 0..a.shape.kv_heads {
            let i = a.index(layer, head, token, 0);
            let d = a.shape.head_dim;
            if a.keys[i..i + d] != b.keys[i..i + d] || a.values[i..i + d] != b.values[i..i + d] {
                return false;
            }
        }
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_sweep_is_monotone_and_meets_targets() {
        let points = run_cr_sweep(&CrSweepConfig::small(11)).unwrap();
        assert_eq!(points.len(), 4);
        let mut prev_err = f64::INFINITY;
        for p in &points {
            assert!(
                p.cr_quant_incl >= p.target_cr,
                "target {}: CR {}",
                p.target_cr,
                p.cr_quant_incl
            );
            assert!(p.middle_rel_err <= prev_err + 1e-12);
            prev_err = p.middle_rel_err;
        }
    }

    #[test]
    fn roundtrip_suite_all_green() {
        let checks = run_roundtrip_suite(3).unwrap();
        for c in &checks {
            assert!(c.pass, "{}: {}", c.name, c.detail);
        }
    }
}
