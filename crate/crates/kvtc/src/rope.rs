//! Rotary positional embeddings: applied to keys at their absolute
//! positions, undone before decorrelation so the low-rank structure of keys
//! is not masked by position-dependent rotations. Values are never rotated.

use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// Which dimensions form rotation pairs. Model families differ here.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PairingConvention {
    /// Pairs (2j, 2j+1).
    Interleaved,
    /// Pairs (j, j + head_dim/2).
    HalfSplit,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RopeConfig {
    pub head_dim: usize,
    pub base: f64,
    pub scaling: f64,
    pub convention: PairingConvention,
}

impl RopeConfig {
    pub fn new(head_dim: usize) -> Self {
        RopeConfig {
            head_dim,
            base: 10_000.0,
            scaling: 1.0,
            convention: PairingConvention::Interleaved,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.head_dim == 0 || !self.head_dim.is_multiple_of(2) {
            return Err(Error::invalid(format!(
                "head_dim must be a positive even number, got {}",
                self.head_dim
            )));
        }
        if !self.base.is_finite() || self.base <= 1.0 {
            return Err(Error::invalid(format!("rope base must be > 1, got {}", self.base)));
        }
        if !self.scaling.is_finite() || self.scaling <= 0.0 {
            return Err(Error::invalid(format!(
                "rope scaling must be > 0, got {}",
                self.scaling
            )));
        }
        Ok(())
    }

    /// theta_j = base^(-2j / head_dim) for j in 0..head_dim/2.
    fn frequencies(&self) -> Vec<f64> {
        let d = self.head_dim as f64;
        (0..self.head_dim / 2)
            .map(|j| self.base.powf(-2.0 * j as f64 / d))
            .collect()
    }

    fn pair(&self, j: usize) -> (usize, usize) {
        match self.convention {
            PairingConvention::Interleaved => (2 * j, 2 * j + 1),
            PairingConvention::HalfSplit => (j, j + self.head_dim / 2),
        }
    }
}

/// Rotates one token row in place. `inverse` rotates by the negative angle.
pub(crate) fn rotate_row(
    config: &RopeConfig,
    freqs: &[f64],
    row: &mut [f64],
    position: u64,
    inverse: bool,
) {
    let pos = position as f64 / config.scaling;
    for (j, &theta) in freqs.iter().enumerate() {
        let mut angle = theta * pos;
        if inverse {
            angle = -angle;
        }
        let (c, s) = (angle.cos(), angle.sin());
        let (i0, i1) = config.pair(j);
        let (x, y) = (row[i0], row[i1]);
        row[i0] = x * c - y * s;
        row[i1] = x * s + y * c;
    }
}

fn rope_transform(
    config: &RopeConfig,
    keys: &Matrix,
    start_position: u64,
    inverse: bool,
) -> Result<Matrix> {
    config.validate()?;
    if keys.cols() != config.head_dim {
        return Err(Error::invalid(format!(
            "rope expects {} columns, got {}",
            config.head_dim,
            keys.cols()
        )));
    }
    let freqs = config.frequencies();
    let mut out = keys.clone();
    for r in 0..out.rows() {
        rotate_row(config, &freqs, out.row_mut(r), start_position + r as u64, inverse);
    }
    Ok(out)
}

/// Rotates row i by angles theta_j * (start_position + i) on each pair.
pub fn rope_apply(config: &RopeConfig, keys: &Matrix, start_position: u64) -> Result<Matrix> {
    rope_transform(config, keys, start_position, false)
}

/// Inverse of [`rope_apply`].
pub fn rope_undo(config: &RopeConfig, keys: &Matrix, start_position: u64) -> Result<Matrix> {
    rope_transform(config, keys, start_position, true)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_keys(t: usize, d: usize, seed: u64) -> Matrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Matrix::from_fn(t, d, |_, _| rng.random::<f64>() * 2.0 - 1.0).unwrap()
    }

    #[test]
    fn position_zero_row_unchanged() {
        let cfg = RopeConfig::new(8);
        let keys = random_keys(3, 8, 1);
        let rotated = rope_apply(&cfg, &keys, 0).unwrap();
        for c in 0..8 {
            assert_eq!(rotated.get(0, c), keys.get(0, c));
        }
    }

    #[test]
    fn two_dim_unit_vector_rotates_by_position_angle() {
        // d_head = 2 gives theta_0 = 1, so position 1 rotates by 1 radian.
        let cfg = RopeConfig::new(2);
        let keys = Matrix::from_vec(1, 2, vec![1.0, 0.0]).unwrap();
        let rotated = rope_apply(&cfg, &keys, 1).unwrap();
        assert!((rotated.get(0, 0) - 1.0_f64.cos()).abs() < 1e-15);
        assert!((rotated.get(0, 1) - 1.0_f64.sin()).abs() < 1e-15);
    }

    #[test]
    fn undo_inverts_apply() {
        for convention in [PairingConvention::Interleaved, PairingConvention::HalfSplit] {
            let cfg = RopeConfig { convention, ..RopeConfig::new(16) };
            let keys = random_keys(20, 16, 2);
            let roundtrip = rope_undo(&cfg, &rope_apply(&cfg, &keys, 37).unwrap(), 37).unwrap();
            for r in 0..20 {
                for c in 0..16 {
                    assert!((roundtrip.get(r, c) - keys.get(r, c)).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn rotation_preserves_row_norms() {
        let cfg = RopeConfig::new(12);
        let keys = random_keys(10, 12, 3);
        let rotated = rope_apply(&cfg, &keys, 1000).unwrap();
        for r in 0..10 {
            let n0: f64 = keys.row(r).iter().map(|v| v * v).sum();
            let n1: f64 = rotated.row(r).iter().map(|v| v * v).sum();
            assert!((n0 - n1).abs() < 1e-12 * n0.max(1.0));
        }
    }

    #[test]
    fn angles_add_on_the_rotation_plane() {
        // Applying at position p1 then shifting by p2 equals one rotation at
        // the summed angle (checked at head_dim = 2 where there is one plane).
        let cfg = RopeConfig::new(2);
        let keys = Matrix::from_vec(1, 2, vec![0.3, -0.7]).unwrap();
        let once = rope_apply(&cfg, &rope_apply(&cfg, &keys, 2).unwrap(), 3).unwrap();
        let summed = rope_apply(&cfg, &keys, 5).unwrap();
        for c in 0..2 {
            assert!((once.get(0, c) - summed.get(0, c)).abs() < 1e-12);
        }
    }

    #[test]
    fn odd_width_rejected() {
        let cfg = RopeConfig::new(7);
        let keys = random_keys(2, 7, 4);
        assert!(rope_apply(&cfg, &keys, 0).is_err());
    }

    #[test]
    fn scaling_divides_position() {
        let base = RopeConfig::new(2);
        let scaled = RopeConfig { scaling: 2.0, ..base };
        let keys = Matrix::from_vec(1, 2, vec![1.0, 0.0]).unwrap();
        let a = rope_apply(&scaled, &keys, 4).unwrap();
        let b = rope_apply(&base, &keys, 2).unwrap();
        for c in 0..2 {
            assert!((a.get(0, c) - b.get(0, c)).abs() < 1e-15);
        }
    }
}
