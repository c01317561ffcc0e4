//! Dense matrix math for calibration: centering, exact SVD (oracle-grade,
//! small sizes), randomized SVD, PCA fit/project/reconstruct, orthogonal
//! Procrustes alignment and token-wise cosine similarity.
//!
//! All math runs in f64 regardless of the 16-bit cache storage width; inputs
//! are widened at ingestion. The exact SVD is meant for calibration-scale
//! matrices (min dimension up to a few hundred); larger decompositions should
//! go through [`randomized_svd`].

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

/// Dense row-major matrix of f64 with finite entries.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    /// Builds a matrix from row-major data. Rejects wrong lengths and
    /// non-finite entries.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::invalid(format!(
                "matrix data length {} does not match {}x{}",
                data.len(),
                rows,
                cols
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!(
                "non-finite entry {} at flat index {}",
                data[pos], pos
            )));
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Matrix::from_vec(rows, cols, data)
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn transpose(&self) -> Matrix {
        let mut out = Matrix::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.data[c * self.rows + r] = self.data[r * self.cols + c];
            }
        }
        out
    }

    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.rows {
            return Err(Error::invalid(format!(
                "matmul shape mismatch: {}x{} * {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let product = self.to_na() * other.to_na();
        Ok(Matrix::from_na(&product))
    }

    pub fn sub(&self, other: &Matrix) -> Result<Matrix> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(Error::invalid("sub shape mismatch".to_string()));
        }
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a - b)
            .collect();
        Ok(Matrix { rows: self.rows, cols: self.cols, data })
    }

    /// Copies the column block `[c0, c1)` into a new matrix.
    pub fn column_block(&self, c0: usize, c1: usize) -> Matrix {
        assert!(c0 <= c1 && c1 <= self.cols);
        let w = c1 - c0;
        let mut data = Vec::with_capacity(self.rows * w);
        for r in 0..self.rows {
            data.extend_from_slice(&self.data[r * self.cols + c0..r * self.cols + c1]);
        }
        Matrix { rows: self.rows, cols: w, data }
    }

    /// Copies the row block `[r0, r1)` into a new matrix.
    pub fn row_block(&self, r0: usize, r1: usize) -> Matrix {
        assert!(r0 <= r1 && r1 <= self.rows);
        Matrix {
            rows: r1 - r0,
            cols: self.cols,
            data: self.data[r0 * self.cols..r1 * self.cols].to_vec(),
        }
    }

    pub fn frobenius_norm_sq(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.frobenius_norm_sq().sqrt()
    }

    pub(crate) fn to_na(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.rows, self.cols, &self.data)
    }

    pub(crate) fn from_na(m: &DMatrix<f64>) -> Matrix {
        let mut data = Vec::with_capacity(m.nrows() * m.ncols());
        for r in 0..m.nrows() {
            for c in 0..m.ncols() {
                data.push(m[(r, c)]);
            }
        }
        Matrix { rows: m.nrows(), cols: m.ncols(), data }
    }
}

/// Result of a singular value decomposition `a = u * diag(sigma) * v^T`.
///
/// `sigma` is non-increasing; `u` is n-by-r and `v` is p-by-r with
/// orthonormal columns.
#[derive(Debug, Clone)]
pub struct SvdResult {
    pub u: Matrix,
    pub sigma: Vec<f64>,
    pub v: Matrix,
}

/// PCA model: per-feature mean, truncated orthonormal basis and singular
/// values of the centered data.
#[derive(Debug, Clone)]
pub struct PcaModel {
    pub mean: Vec<f64>,
    /// p-by-r, columns are principal directions ordered by singular value.
    pub basis: Matrix,
    pub sigma: Vec<f64>,
    pub feature_count: usize,
    pub rank: usize,
    pub sample_count: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PcaMethod {
    Exact,
    Randomized,
}

const SVD_MAX_ITERATIONS: usize = 4096;

/// Seed for the Gaussian sketch of [`randomized_svd`]. Fixed so results are
/// reproducible across runs without threading an RNG through every caller.
const SKETCH_SEED: u64 = 0x6b76_7463_0001;

/// Full-rank SVD, oracle-grade. Intended for matrices whose smaller
/// dimension is at most a few hundred.
pub fn exact_svd(a: &Matrix) -> Result<SvdResult> {
    if a.rows() == 0 || a.cols() == 0 {
        return Err(Error::invalid("exact_svd requires a non-empty matrix"));
    }
    let na = a.to_na();
    let svd = na
        .try_svd(true, true, f64::EPSILON, SVD_MAX_ITERATIONS)
        .ok_or_else(|| {
            Error::NumericalFailure(format!(
                "SVD did not converge within {SVD_MAX_ITERATIONS} iterations"
            ))
        })?;
    let u = svd.u.expect("u requested");
    let v_t = svd.v_t.expect("v_t requested");
    let mut sigma: Vec<f64> = svd.singular_values.iter().copied().collect();

    // nalgebra sorts descending already; re-sort defensively so the
    // non-increasing invariant never depends on upstream behavior.
    let mut order: Vec<usize> = (0..sigma.len()).collect();
    order.sort_by(|&i, &j| sigma[j].partial_cmp(&sigma[i]).unwrap());
    let sorted: Vec<f64> = order.iter().map(|&i| sigma[i]).collect();
    sigma = sorted;

    let r = sigma.len();
    let mut u_m = Matrix::zeros(a.rows(), r);
    let mut v_m = Matrix::zeros(a.cols(), r);
    for (out_col, &src_col) in order.iter().enumerate() {
        for row in 0..a.rows() {
            u_m.set(row, out_col, u[(row, src_col)]);
        }
        for row in 0..a.cols() {
            v_m.set(row, out_col, v_t[(src_col, row)]);
        }
    }
    Ok(SvdResult { u: u_m, sigma, v: v_m })
}

/// Randomized SVD (Gaussian sketch + power iterations + small exact SVD).
///
/// Returns a rank-`target_rank` approximation. With a handful of power
/// iterations the leading singular values of well-conditioned inputs match
/// the exact decomposition to ~1e-3 relative or better.
pub fn randomized_svd(
    a: &Matrix,
    target_rank: usize,
    power_iterations: usize,
    oversample: usize,
) -> Result<SvdResult> {
    let min_dim = a.rows().min(a.cols());
    if target_rank == 0 || target_rank > min_dim {
        return Err(Error::invalid(format!(
            "target_rank {} out of range for {}x{} matrix",
            target_rank,
            a.rows(),
            a.cols()
        )));
    }
    let sketch = (target_rank + oversample).min(min_dim);

    let mut rng = ChaCha8Rng::seed_from_u64(SKETCH_SEED);
    let normal = StandardNormal;
    let mut omega = Matrix::zeros(a.cols(), sketch);
    for v in omega.data.iter_mut() {
        *v = normal.sample(&mut rng);
    }

    let na = a.to_na();
    let na_t = na.transpose();
    let mut q = orthonormal_columns(&(&na * omega.to_na()));
    for _ in 0..power_iterations {
        let z = orthonormal_columns(&(&na_t * &q));
        q = orthonormal_columns(&(&na * &z));
    }

    let b = Matrix::from_na(&(q.transpose() * &na)); // sketch x cols
    let small = exact_svd(&b)?;
    let u_full = Matrix::from_na(&(&q * small.u.to_na())); // rows x min(sketch, cols)

    let k = target_rank;
    Ok(SvdResult {
        u: u_full.column_block(0, k),
        sigma: small.sigma[..k].to_vec(),
        v: small.v.column_block(0, k),
    })
}

fn orthonormal_columns(m: &DMatrix<f64>) -> DMatrix<f64> {
    m.clone().qr().q()
}

/// Fits a PCA model: column mean plus truncated SVD of the centered samples.
pub fn fit_pca(samples: &Matrix, rank: usize, method: PcaMethod) -> Result<PcaModel> {
    let (n, p) = (samples.rows(), samples.cols());
    if n < 2 {
        return Err(Error::invalid("fit_pca requires at least 2 samples"));
    }
    if rank == 0 || rank > n.min(p) {
        return Err(Error::invalid(format!(
            "rank {} out of range for {}x{} samples",
            rank, n, p
        )));
    }

    let mut mean = vec![0.0; p];
    for r in 0..n {
        for (m, v) in mean.iter_mut().zip(samples.row(r)) {
            *m += v;
        }
    }
    for m in mean.iter_mut() {
        *m /= n as f64;
    }

    let mut centered = samples.clone();
    for r in 0..n {
        for (v, m) in centered.row_mut(r).iter_mut().zip(&mean) {
            *v -= m;
        }
    }

    let svd = match method {
        PcaMethod::Exact => exact_svd(&centered)?,
        PcaMethod::Randomized => randomized_svd(&centered, rank, 8, 10)?,
    };

    Ok(PcaModel {
        mean,
        basis: svd.v.column_block(0, rank),
        sigma: svd.sigma[..rank].to_vec(),
        feature_count: p,
        rank,
        sample_count: n,
    })
}

/// Decorrelates rows: `(x - mean) * basis`, m-by-p in, m-by-r out.
pub fn project(model: &PcaModel, x: &Matrix) -> Result<Matrix> {
    if x.cols() != model.feature_count {
        return Err(Error::invalid(format!(
            "project expects {} columns, got {}",
            model.feature_count,
            x.cols()
        )));
    }
    let mut centered = x.clone();
    for r in 0..centered.rows() {
        for (v, m) in centered.row_mut(r).iter_mut().zip(&model.mean) {
            *v -= m;
        }
    }
    centered.matmul(&model.basis)
}

/// Inverse of [`project`]: `d * basis^T + mean`, m-by-r in, m-by-p out.
pub fn reconstruct(model: &PcaModel, d: &Matrix) -> Result<Matrix> {
    if d.cols() != model.rank {
        return Err(Error::invalid(format!(
            "reconstruct expects {} columns, got {}",
            model.rank,
            d.cols()
        )));
    }
    let mut out = d.matmul(&model.basis.transpose())?;
    for r in 0..out.rows() {
        for (v, m) in out.row_mut(r).iter_mut().zip(&model.mean) {
            *v += m;
        }
    }
    Ok(out)
}

/// Solves the orthogonal Procrustes problem: the orthogonal `R` minimizing
/// `||a - b R||_F`, via the SVD of `b^T a`.
pub fn procrustes_align(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if a.rows() != b.rows() || a.cols() != b.cols() {
        return Err(Error::invalid(format!(
            "procrustes shapes differ: {}x{} vs {}x{}",
            a.rows(),
            a.cols(),
            b.rows(),
            b.cols()
        )));
    }
    let m = b.transpose().matmul(a)?;
    let svd = exact_svd(&m)?;
    svd.u.matmul(&svd.v.transpose())
}

/// Mean over rows of the cosine similarity between corresponding rows.
pub fn mean_token_cosine(a: &Matrix, b: &Matrix) -> Result<f64> {
    if a.rows() != b.rows() || a.cols() != b.cols() {
        return Err(Error::invalid("mean_token_cosine shape mismatch".to_string()));
    }
    if a.rows() == 0 {
        return Err(Error::invalid("mean_token_cosine on empty matrix"));
    }
    let mut total = 0.0;
    for r in 0..a.rows() {
        let (ra, rb) = (a.row(r), b.row(r));
        let dot: f64 = ra.iter().zip(rb).map(|(x, y)| x * y).sum();
        let na: f64 = ra.iter().map(|x| x * x).sum::<f64>().sqrt();
        let nb: f64 = rb.iter().map(|x| x * x).sum::<f64>().sqrt();
        if na == 0.0 || nb == 0.0 {
            return Err(Error::DegenerateRow { row: r });
        }
        total += (dot / (na * nb)).clamp(-1.0, 1.0);
    }
    Ok(total / a.rows() as f64)
}
