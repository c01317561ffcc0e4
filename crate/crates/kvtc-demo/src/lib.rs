//! Browser demo bindings: three interactive views over the codec, each a
//! pure function of its sliders so the page stays stateless. Results come
//! back as small JSON strings; the page draws them on canvases.
//!
//! Build with `wasm-pack build --target web crates/kvtc-demo` (or see the
//! README for the plain wasm-bindgen invocation), then serve `www/`.

use wasm_bindgen::prelude::*;

use kvtc::allocator::{
    block_error_table, budget_for_target_cr, dp_tables, pca_only_plan, plan_from_tables, DpConfig,
};
use kvtc::bench::{run_cr_sweep, CrSweepConfig};
use kvtc::codec::{token_matrix, CacheShape, StreamKind};
use kvtc::linalg::{fit_pca, mean_token_cosine, procrustes_align, project, PcaMethod};
use kvtc::rope::RopeConfig;
use kvtc::synth::{generate, SynthSpec};

/// Demo-scale cache shape: big enough to show structure, small enough to
/// recompute on every slider move.
fn demo_shape() -> CacheShape {
    CacheShape { layers: 2, kv_heads: 2, head_dim: 16, tokens: 256 }
}

fn json_array(values: impl Iterator<Item = f64>) -> String {
    let parts: Vec<String> = values.map(|v| format!("{v:.6}")).collect();
    format!("[{}]", parts.join(","))
}

/// Compression-ratio/error sweep over target ratios {4, 8, 16, 32, 64}.
/// Returns `{targets, cr_quant, cr_deflate, rel_err}`.
#[wasm_bindgen]
pub fn sweep_curve(seed: u32, latent_rank: u32, noise_sigma: f64) -> Result<String, JsError> {
    let shape = demo_shape();
    let cfg = CrSweepConfig {
        shape,
        latent_rank: (latent_rank as usize).clamp(1, shape.feature_count()),
        noise_sigma: noise_sigma.max(0.0),
        seed: seed as u64,
        targets: vec![64.0, 32.0, 16.0, 8.0, 4.0],
        rank: 48,
        sinks: 4,
        window: 48,
        pca_method: PcaMethod::Exact,
    };
    let points = run_cr_sweep(&cfg).map_err(|e| JsError::new(&e.to_string()))?;
    Ok(format!(
        "{{\"targets\":{},\"cr_quant\":{},\"cr_deflate\":{},\"rel_err\":{}}}",
        json_array(points.iter().map(|p| p.target_cr)),
        json_array(points.iter().map(|p| p.cr_quant_incl)),
        json_array(points.iter().map(|p| p.cr_deflate_incl)),
        json_array(points.iter().map(|p| p.middle_rel_err)),
    ))
}

/// Per-component payload bit widths chosen by the DP at one target ratio,
/// plus the pure-truncation comparison. Returns
/// `{bits, budget_bits, plan_bits, dp_err, pca_err, sigma}`.
#[wasm_bindgen]
pub fn bit_allocation(
    seed: u32,
    latent_rank: u32,
    noise_sigma: f64,
    target_cr: f64,
) -> Result<String, JsError> {
    let shape = demo_shape();
    let err = |e: kvtc::Error| JsError::new(&e.to_string());
    let cache = generate(&SynthSpec {
        shape,
        latent_rank: (latent_rank as usize).clamp(1, shape.feature_count()),
        noise_sigma: noise_sigma.max(0.0),
        sink_outlier_scale: 1.0,
        planted_rotations: false,
        rope: RopeConfig::new(shape.head_dim),
        seed: seed as u64,
        start_position: 0,
    })
    .map_err(err)?;
    let rows = token_matrix(&cache, StreamKind::Key, 4..shape.tokens - 48).map_err(err)?;
    let model = fit_pca(&rows, 48, PcaMethod::Exact).map_err(err)?;
    let projected = project(&model, &rows).map_err(err)?;
    let blocks = block_error_table(&projected, &DpConfig::default()).map_err(err)?;
    let budget = budget_for_target_cr(shape.feature_count(), 16, target_cr.max(1.0))
        .map_err(err)?;
    let plan = plan_from_tables(&dp_tables(&blocks, budget));
    let pca = pca_only_plan(&projected, budget, 16).map_err(err)?;
    Ok(format!(
        "{{\"bits\":{},\"budget_bits\":{budget},\"plan_bits\":{},\"dp_err\":{:.3},\"pca_err\":{:.3},\"sigma\":{}}}",
        json_array(plan.per_component_bits().iter().map(|&b| b as f64)),
        plan.bits_per_token,
        plan.expected_error,
        pca.expected_error,
        json_array(model.sigma.iter().copied()),
    ))
}

/// Cross-head alignment study on planted-rotation keys. Returns
/// `{before, after}` mean token-wise cosine similarity.
#[wasm_bindgen]
pub fn procrustes_demo(seed: u32, noise_sigma: f64) -> Result<String, JsError> {
    let err = |e: kvtc::Error| JsError::new(&e.to_string());
    let d = 64usize;
    let cache = generate(&SynthSpec {
        shape: CacheShape { layers: 1, kv_heads: 2, head_dim: d, tokens: 512 },
        latent_rank: 24,
        noise_sigma: noise_sigma.max(0.0),
        sink_outlier_scale: 1.0,
        planted_rotations: true,
        rope: RopeConfig::new(d),
        seed: seed as u64,
        start_position: 0,
    })
    .map_err(err)?;
    let rows = token_matrix(&cache, StreamKind::Key, 0..512).map_err(err)?;
    let a = rows.column_block(0, d);
    let b = rows.column_block(d, 2 * d);
    let before = mean_token_cosine(&a, &b).map_err(err)?;
    let r = procrustes_align(&a, &b).map_err(err)?;
    let after = mean_token_cosine(&a, &b.matmul(&r).map_err(err)?).map_err(err)?;
    Ok(format!("{{\"before\":{before:.6},\"after\":{after:.6}}}"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sweep_curve_returns_json() {
        let s = sweep_curve(1, 12, 0.05).unwrap();
        assert!(s.starts_with("{\"targets\":[64"), "{s}");
        assert!(s.contains("cr_deflate"));
    }

    #[test]
    fn bit_allocation_covers_components() {
        let s = bit_allocation(1, 12, 0.05, 16.0).unwrap();
        assert!(s.contains("\"bits\":["), "{s}");
        assert!(s.contains("\"dp_err\":"));
    }

    #[test]
    fn procrustes_demo_aligns() {
        let s = procrustes_demo(2, 0.0).unwrap();
        assert!(s.contains("\"after\":"), "{s}");
    }
}
