//! Synthetic KV-cache generator: controllable low-rank latent structure,
//! planted cross-head rotations, sink-token outliers, and RoPE on keys. The
//! desk-scale stand-in for real model activations.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::codec::{CacheShape, KvCache, StreamKind};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::rope::{rope_apply, RopeConfig};

/// Number of leading positions scaled as sink outliers.
pub const SINK_POSITIONS: usize = 4;

#[derive(Debug, Clone)]
pub struct SynthSpec {
    pub shape: CacheShape,
    /// Shared latent dimensionality; the un-RoPE'd concatenated stream has
    /// numerical rank `min(latent_rank, head_dim)` with planted rotations
    /// (all heads derive from one factor) and `latent_rank` without.
    pub latent_rank: usize,
    pub noise_sigma: f64,
    pub sink_outlier_scale: f64,
    pub planted_rotations: bool,
    pub rope: RopeConfig,
    pub seed: u64,
    pub start_position: u64,
}

impl SynthSpec {
    fn validate(&self) -> Result<()> {
        self.shape.validate()?;
        self.rope.validate()?;
        if self.rope.head_dim != self.shape.head_dim {
            return Err(Error::invalid("rope head_dim differs from shape head_dim"));
        }
        if self.latent_rank == 0 || self.latent_rank > self.shape.feature_count() {
            return Err(Error::invalid(format!(
                "latent rank {} out of range (feature count {})",
                self.latent_rank,
                self.shape.feature_count()
            )));
        }
        if self.noise_sigma < 0.0 || !self.noise_sigma.is_finite() {
            return Err(Error::invalid("noise sigma must be finite and >= 0"));
        }
        if self.sink_outlier_scale < 1.0 || !self.sink_outlier_scale.is_finite() {
            return Err(Error::invalid("sink outlier scale must be >= 1"));
        }
        Ok(())
    }
}

fn gaussian(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Matrix {
    let mut m = Matrix::zeros(rows, cols);
    for r in 0..rows {
        for c in 0..cols {
            m.set(r, c, StandardNormal.sample(rng));
        }
    }
    m
}

/// Haar-ish random orthogonal matrix: QR of a Gaussian with the sign of the
/// R diagonal folded into Q.
fn random_orthogonal(d: usize, rng: &mut ChaCha8Rng) -> Matrix {
    let g = gaussian(d, d, rng);
    let qr = g.to_na().qr();
    let mut q: DMatrix<f64> = qr.q();
    let r = qr.r();
    for c in 0..d {
        if r[(c, c)] < 0.0 {
            for row in 0..d {
                q[(row, c)] = -q[(row, c)];
            }
        }
    }
    Matrix::from_na(&q)
}

/// Per-token latents z, per-head factors W_i (W_0 R_i when rotations are
/// planted), i.i.d. element noise, sink scaling on the first 4 positions,
/// then RoPE over keys at absolute positions. Same seed, same cache bytes.
pub fn generate(spec: &SynthSpec) -> Result<KvCache> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut cache = KvCache::zeroed(spec.shape, spec.rope, spec.start_position)?;

    for stream in [StreamKind::Key, StreamKind::Value] {
        fill_stream(spec, stream, &mut rng, &mut cache)?;
    }
    Ok(cache)
}

fn fill_stream(
    spec: &SynthSpec,
    stream: StreamKind,
    rng: &mut ChaCha8Rng,
    cache: &mut KvCache,
) -> Result<()> {
    let shape = spec.shape;
    let (t, d, k) = (shape.tokens, shape.head_dim, spec.latent_rank);
    let heads = shape.layers * shape.kv_heads;

    // Draw order is fixed: latents, factors (head-major), noise per head.
    let z = gaussian(t, k, rng);
    let scale = 1.0 / (k as f64).sqrt();
    let factors: Vec<Matrix> = if spec.planted_rotations {
        let mut w0 = gaussian(k, d, rng);
        for v in 0..k {
            for c in 0..d {
                w0.set(v, c, w0.get(v, c) * scale);
            }
        }
        (0..heads)
            .map(|_| {
                let rot = random_orthogonal(d, rng);
                w0.matmul(&rot).unwrap()
            })
            .collect()
    } else {
        (0..heads)
            .map(|_| {
                let mut w = gaussian(k, d, rng);
                for v in 0..k {
                    for c in 0..d {
                        w.set(v, c, w.get(v, c) * scale);
                    }
                }
                w
            })
            .collect()
    };

    for (head_idx, factor) in factors.iter().enumerate() {
        let (layer, head) = (head_idx / shape.kv_heads, head_idx % shape.kv_heads);
        let mut tokens = z.matmul(factor)?;
        if spec.noise_sigma > 0.0 {
            let noise = gaussian(t, d, rng);
            for r in 0..t {
                for c in 0..d {
                    tokens.set(r, c, tokens.get(r, c) + spec.noise_sigma * noise.get(r, c));
                }
            }
        } else {
            // Keep the draw order independent of sigma.
            let _ = gaussian(t, d, rng);
        }
        for sink in 0..SINK_POSITIONS.min(t) {
            for c in 0..d {
                tokens.set(sink, c, tokens.get(sink, c) * spec.sink_outlier_scale);
            }
        }
        if stream == StreamKind::Key {
            tokens = rope_apply(&spec.rope, &tokens, spec.start_position)?;
        }
        for token in 0..t {
            cache.set_head_token(stream, layer, head, token, tokens.row(token));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::token_matrix;
    use crate::linalg::{exact_svd, fit_pca, mean_token_cosine, procrustes_align, PcaMethod};

    fn spec(seed: u64) -> SynthSpec {
        SynthSpec {
            shape: CacheShape { layers: 2, kv_heads: 2, head_dim: 16, tokens: 96 },
            latent_rank: 6,
            noise_sigma: 0.0,
            sink_outlier_scale: 1.0,
            planted_rotations: true,
            rope: RopeConfig::new(16),
            seed,
            start_position: 0,
        }
    }

    #[test]
    fn same_seed_same_bytes() {
        let a = generate(&spec(42)).unwrap();
        let b = generate(&spec(42)).unwrap();
        assert_eq!(a, b);
        let c = generate(&spec(43)).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn noiseless_unrotated_keys_have_rank_k() {
        let cache = generate(&spec(1)).unwrap();
        let unroped = token_matrix(&cache, StreamKind::Key, 0..96).unwrap();
        let svd = exact_svd(&unroped).unwrap();
        // binary16 storage turns exact zeros into tiny values; the gap at
        // rank k must still be many orders of magnitude.
        assert!(svd.sigma[5] > 1e-2 * svd.sigma[0]);
        assert!(svd.sigma[6] < 1e-2 * svd.sigma[5]);
    }

    #[test]
    fn rope_left_applied_raises_apparent_rank() {
        let cache = generate(&spec(2)).unwrap();
        // Read rows without undoing RoPE: widen the raw key tensor directly.
        let p = cache.shape.feature_count();
        let mut m = Matrix::zeros(96, p);
        for token in 0..96 {
            for layer in 0..2 {
                for head in 0..2 {
                    let at = cache.index(layer, head, token, 0);
                    for dim in 0..16 {
                        let v = half::f16::from_bits(cache.keys[at + dim]).to_f64();
                        m.set(token, (layer * 2 + head) * 16 + dim, v);
                    }
                }
            }
        }
        let svd = exact_svd(&m).unwrap();
        // With rotations left in, mass spreads past component k.
        assert!(
            svd.sigma[6] > 1e-3 * svd.sigma[0],
            "sigma[6]/sigma[0] = {}",
            svd.sigma[6] / svd.sigma[0]
        );
    }

    #[test]
    fn planted_rotations_align_under_procrustes() {
        let mut s = spec(3);
        s.shape = CacheShape { layers: 1, kv_heads: 2, head_dim: 128, tokens: 512 };
        s.rope = RopeConfig::new(128);
        s.latent_rank = 32;
        let cache = generate(&s).unwrap();
        let rows = token_matrix(&cache, StreamKind::Key, 0..512).unwrap();
        let a = rows.column_block(0, 128);
        let b = rows.column_block(128, 256);
        let before = mean_token_cosine(&a, &b).unwrap();
        assert!(before.abs() < 0.2, "pre-alignment cosine {before}");
        let r = procrustes_align(&a, &b).unwrap();
        let after = mean_token_cosine(&a, &b.matmul(&r).unwrap()).unwrap();
        assert!(after >= 0.999, "post-alignment cosine {after}");
    }

    #[test]
    fn sink_outliers_hurt_reconstruction() {
        let mut s = spec(4);
        s.sink_outlier_scale = 8.0;
        s.noise_sigma = 0.05;
        s.latent_rank = 8;
        let cache = generate(&s).unwrap();
        let rows = token_matrix(&cache, StreamKind::Key, 0..96).unwrap();
        // Fit on non-sink rows only.
        let model = fit_pca(&rows.row_block(4, 96), 4, PcaMethod::Exact).unwrap();
        let recon = crate::linalg::reconstruct(
            &model,
            &crate::linalg::project(&model, &rows).unwrap(),
        )
        .unwrap();
        // Scaled sinks leave *relative* subspace error unchanged, so the
        // per-token comparison uses absolute residual norms.
        let mut err = Vec::new();
        for r in 0..96 {
            let e: f64 = recon
                .row(r)
                .iter()
                .zip(rows.row(r))
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            err.push(e.sqrt());
        }
        let mut sorted = err.clone();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let median = sorted[48];
        for (sink, e) in err.iter().take(4).enumerate() {
            assert!(*e > median, "sink {sink}: {e} <= median {median}");
        }
    }

    #[test]
    fn rejects_invalid_specs() {
        let mut s = spec(5);
        s.latent_rank = 0;
        assert!(generate(&s).is_err());
        let mut s = spec(6);
        s.sink_outlier_scale = 0.5;
        assert!(generate(&s).is_err());
        let mut s = spec(7);
        s.noise_sigma = -1.0;
        assert!(generate(&s).is_err());
    }
}
