//! Dense row-major matrices and the masking transformation.
//!
//! All clients build the same masking matrix `M = Q S Q'` from the shared
//! seed: `Q` and the diagonal scaling `S` come from one stream seeded with
//! the seed, `Q'` from a second stream seeded with the seed plus one. Each
//! client also draws a private Gaussian noise matrix used as an additive mask.

use rand::{CryptoRng, RngCore};
use rand::Rng;

use crate::detrng::RngStream;
use crate::error::{Error, Result};

/// Default noise standard deviation (variance 1e12).
pub const DEFAULT_NOISE_SIGMA: f64 = 1e6;

#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::shape(format!(
                "{rows}x{cols} matrix needs {} values, got {}",
                rows * cols,
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        let mut m = Self::zeros(diag.len(), diag.len());
        for (i, &d) in diag.iter().enumerate() {
            m[(i, i)] = d;
        }
        m
    }

    /// Builds a matrix from equally long rows.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(Error::shape(format!("row {i} has {} columns, expected {cols}", r.len())));
            }
            data.extend_from_slice(r);
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_iter(&self) -> impl Iterator<Item = &[f64]> + '_ {
        (0..self.rows).map(move |i| self.row(i))
    }

    /// New matrix made of the given rows, in order.
    pub fn select_rows(&self, indices: &[usize]) -> Self {
        let mut data = Vec::with_capacity(indices.len() * self.cols);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        Self {
            rows: indices.len(),
            cols: self.cols,
            data,
        }
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.rows {
            return Err(Error::shape(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            let out_row = &mut out.data[i * other.cols..(i + 1) * other.cols];
            for (k, &a) in self.row(i).iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                for (o, &b) in out_row.iter_mut().zip(other.row(k)) {
                    *o += a * b;
                }
            }
        }
        Ok(out)
    }

    pub fn add(&self, other: &Matrix) -> Result<Matrix> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Matrix) -> Result<Matrix> {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn add_assign(&mut self, other: &Matrix) -> Result<()> {
        self.check_same_shape(other)?;
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
        Ok(())
    }

    /// Largest absolute entry.
    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    fn check_same_shape(&self, other: &Matrix) -> Result<()> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(Error::shape(format!(
                "{}x{} vs {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        Ok(())
    }

    fn zip_with(&self, other: &Matrix, f: impl Fn(f64, f64) -> f64) -> Result<Matrix> {
        self.check_same_shape(other)?;
        let data = self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect();
        Ok(Matrix {
            rows: self.rows,
            cols: self.cols,
            data,
        })
    }
}

impl std::ops::Index<(usize, usize)> for Matrix {
    type Output = f64;

    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i * self.cols + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for Matrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i * self.cols + j]
    }
}

/// QR factorisation of a square matrix by Householder reflections.
///
/// Columns whose sub-diagonal part is already zero are left untouched, so an
/// upper-triangular input yields `Q = I`.
pub fn householder_qr(a: &Matrix) -> Result<(Matrix, Matrix)> {
    let n = a.rows();
    if a.cols() != n {
        return Err(Error::shape(format!("QR needs a square matrix, got {}x{}", n, a.cols())));
    }
    let mut r = a.clone();
    // Q is accumulated transposed (Q^T = H_{n-1} ... H_0) so reflections act on rows.
    let mut qt = Matrix::identity(n);
    let mut v = vec![0.0; n];

    for k in 0..n.saturating_sub(1) {
        let tail_sq: f64 = (k + 1..n).map(|i| r[(i, k)] * r[(i, k)]).sum();
        if tail_sq == 0.0 {
            continue;
        }
        let x0 = r[(k, k)];
        let norm = (x0 * x0 + tail_sq).sqrt();
        let alpha = if x0 >= 0.0 { -norm } else { norm };

        v[k] = x0 - alpha;
        for i in k + 1..n {
            v[i] = r[(i, k)];
        }
        let vtv = v[k] * v[k] + tail_sq;

        reflect_rows(&mut r, &v, vtv, k, k);
        reflect_rows(&mut qt, &v, vtv, k, 0);
        r[(k, k)] = alpha;
        for i in k + 1..n {
            r[(i, k)] = 0.0;
        }
    }
    Ok((qt.transpose(), r))
}

/// Applies `I - 2 v v^T / (v^T v)` (with `v` supported on `k..`) to rows `k..`
/// of `m`, touching only columns `col_start..`.
fn reflect_rows(m: &mut Matrix, v: &[f64], vtv: f64, k: usize, col_start: usize) {
    let n = m.rows();
    for j in col_start..m.cols() {
        let dot: f64 = (k..n).map(|i| v[i] * m[(i, j)]).sum();
        let scale = 2.0 * dot / vtv;
        for i in k..n {
            m[(i, j)] -= scale * v[i];
        }
    }
}

/// Haar-distributed orthogonal matrix: QR of an i.i.d. standard Gaussian
/// matrix, with column `j` of `Q` multiplied by `sign(R_jj)` (`sign(0) = +1`).
pub fn random_orthogonal(d: usize, stream: &mut RngStream) -> Result<Matrix> {
    if d == 0 {
        return Err(Error::invalid("orthogonal matrix dimension must be at least 1"));
    }
    let data = (0..d * d).map(|_| stream.standard_normal()).collect();
    let g = Matrix::new(d, d, data)?;
    let (mut q, r) = householder_qr(&g)?;
    for j in 0..d {
        if r[(j, j)] < 0.0 {
            for i in 0..d {
                q[(i, j)] = -q[(i, j)];
            }
        }
    }
    Ok(q)
}

fn check_t_param(t_param: f64) -> Result<()> {
    if !(t_param > 1.0) || !t_param.is_finite() {
        return Err(Error::invalid(format!("scaling bound T must be finite and > 1, got {t_param}")));
    }
    Ok(())
}

/// Diagonal entries drawn uniformly from `(1, t_param)`.
pub fn random_scaling_diagonal(d: usize, stream: &mut RngStream, t_param: f64) -> Result<Vec<f64>> {
    check_t_param(t_param)?;
    Ok((0..d).map(|_| 1.0 + (t_param - 1.0) * stream.uniform_open()).collect())
}

pub fn random_scaling(d: usize, stream: &mut RngStream, t_param: f64) -> Result<Matrix> {
    Ok(Matrix::from_diagonal(&random_scaling_diagonal(d, stream, t_param)?))
}

/// The shared masking transformation `M = Q S Q'`.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskingMatrix {
    matrix: Matrix,
    scaling: Vec<f64>,
    t_param: f64,
}

impl MaskingMatrix {
    pub fn matrix(&self) -> &Matrix {
        &self.matrix
    }

    /// Diagonal of `S`, i.e. the singular values of `M` in draw order.
    pub fn scaling(&self) -> &[f64] {
        &self.scaling
    }

    pub fn t_param(&self) -> f64 {
        self.t_param
    }

    pub fn dim(&self) -> usize {
        self.matrix.rows()
    }

    /// `X M` for data rows `X`.
    pub fn apply(&self, x: &Matrix) -> Result<Matrix> {
        x.matmul(&self.matrix)
    }
}

pub fn build_masking_matrix(d: usize, xi: u64, t_param: f64) -> Result<MaskingMatrix> {
    if d == 0 {
        return Err(Error::invalid("masking dimension must be at least 1"));
    }
    check_t_param(t_param)?;
    let mut stream = RngStream::new(xi);
    let q = random_orthogonal(d, &mut stream)?;
    let scaling = random_scaling_diagonal(d, &mut stream, t_param)?;
    let q_prime = random_orthogonal(d, &mut RngStream::new(xi.wrapping_add(1)))?;

    // Q S scales column j of Q by s_j.
    let mut qs = q;
    for i in 0..d {
        for (j, s) in scaling.iter().enumerate() {
            qs[(i, j)] *= s;
        }
    }
    let matrix = qs.matmul(&q_prime)?;
    Ok(MaskingMatrix {
        matrix,
        scaling,
        t_param,
    })
}

/// Private `n_rows x d` matrix of i.i.d. `N(0, sigma^2)` entries.
///
/// `rng` must be the party's own secret generator, never the shared stream.
pub fn noise_matrix<R: RngCore + CryptoRng>(n_rows: usize, d: usize, sigma: f64, rng: &mut R) -> Result<Matrix> {
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(Error::invalid(format!("noise sigma must be finite and > 0, got {sigma}")));
    }
    let data = (0..n_rows * d)
        .map(|_| {
            // Box-Muller over 53-bit uniforms, u1 in (0, 1]
            let u1 = 1.0 - rng.gen::<f64>();
            let u2 = rng.gen::<f64>();
            sigma * (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
        })
        .collect();
    Matrix::new(n_rows, d, data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn gaussian_matrix(rows: usize, cols: usize, seed: u64) -> Matrix {
        let mut s = RngStream::new(seed);
        Matrix::new(rows, cols, (0..rows * cols).map(|_| s.standard_normal()).collect()).unwrap()
    }

    fn max_abs_diff(a: &Matrix, b: &Matrix) -> f64 {
        a.sub(b).unwrap().max_abs()
    }

    #[test]
    fn matmul_basics() {
        let a = gaussian_matrix(4, 5, 1);
        assert_eq!(a.matmul(&Matrix::identity(5)).unwrap(), a);
        let p = Matrix::new(1, 1, vec![2.0]).unwrap().matmul(&Matrix::new(1, 1, vec![3.0]).unwrap()).unwrap();
        assert_eq!(p.as_slice(), &[6.0]);
        assert!(matches!(a.matmul(&a), Err(Error::Shape(_))));
    }

    #[test]
    fn transpose_of_product() {
        let a = gaussian_matrix(4, 5, 2);
        let b = gaussian_matrix(5, 3, 3);
        let lhs = a.matmul(&b).unwrap().transpose();
        let rhs = b.transpose().matmul(&a.transpose()).unwrap();
        assert!(max_abs_diff(&lhs, &rhs) < 1e-12);
    }

    #[test]
    fn qr_of_identity() {
        let (q, r) = householder_qr(&Matrix::identity(6)).unwrap();
        assert_eq!(q, Matrix::identity(6));
        assert_eq!(r, Matrix::identity(6));
    }

    #[test]
    fn qr_residuals_on_gaussian() {
        let a = gaussian_matrix(8, 8, 11);
        let (q, r) = householder_qr(&a).unwrap();
        let qtq = q.transpose().matmul(&q).unwrap();
        assert!(max_abs_diff(&qtq, &Matrix::identity(8)) <= 1e-10);
        let recon = q.matmul(&r).unwrap();
        assert!(max_abs_diff(&recon, &a) / a.max_abs() <= 1e-10);
        for i in 0..8 {
            for j in 0..i {
                assert_eq!(r[(i, j)], 0.0);
            }
        }
    }

    #[test]
    fn qr_rejects_rectangular() {
        assert!(matches!(householder_qr(&Matrix::zeros(3, 2)), Err(Error::Shape(_))));
    }

    #[test]
    fn orthogonal_one_by_one() {
        for seed in 0..20 {
            let q = random_orthogonal(1, &mut RngStream::new(seed)).unwrap();
            assert!(q.as_slice() == [1.0] || q.as_slice() == [-1.0]);
        }
        assert!(random_orthogonal(0, &mut RngStream::new(0)).is_err());
    }

    #[test]
    fn orthogonal_is_deterministic_and_unimodular() {
        let a = random_orthogonal(16, &mut RngStream::new(5)).unwrap();
        let b = random_orthogonal(16, &mut RngStream::new(5)).unwrap();
        assert_eq!(a, b);
        let det = nalgebra::DMatrix::from_row_slice(16, 16, a.as_slice()).determinant();
        assert!((det.abs() - 1.0).abs() <= 1e-9, "det {det}");
    }

    #[test]
    fn orthogonality_residual_up_to_large_dims() {
        for d in [2, 9, 64, 300] {
            let q = random_orthogonal(d, &mut RngStream::new(d as u64)).unwrap();
            let qtq = q.transpose().matmul(&q).unwrap();
            assert!(max_abs_diff(&qtq, &Matrix::identity(d)) <= 1e-10, "d = {d}");
        }
    }

    #[test]
    fn scaling_ranges() {
        let s = random_scaling(10, &mut RngStream::new(1), 1000.0).unwrap();
        for i in 0..10 {
            for j in 0..10 {
                if i == j {
                    assert!(s[(i, j)] > 1.0 && s[(i, j)] < 1000.0);
                } else {
                    assert_eq!(s[(i, j)], 0.0);
                }
            }
        }
        let tight = random_scaling(10, &mut RngStream::new(1), 1.0 + 1e-12).unwrap();
        for i in 0..10 {
            assert!((tight[(i, i)] - 1.0).abs() < 1e-11);
        }
        assert!(random_scaling(3, &mut RngStream::new(1), 1.0).is_err());
        assert!(random_scaling(3, &mut RngStream::new(1), 0.5).is_err());
    }

    fn singular_values(m: &Matrix) -> Vec<f64> {
        let dm = nalgebra::DMatrix::from_row_slice(m.rows(), m.cols(), m.as_slice());
        let mut sv: Vec<f64> = dm.singular_values().iter().copied().collect();
        sv.sort_by(f64::total_cmp);
        sv
    }

    #[test]
    fn masking_spectrum_matches_scaling() {
        for (d, t) in [(2, 2.0), (9, 1000.0), (20, 10.0)] {
            let mm = build_masking_matrix(d, 123_456, t).unwrap();
            let mut diag = mm.scaling().to_vec();
            diag.sort_by(f64::total_cmp);
            let sv = singular_values(mm.matrix());
            for (a, b) in sv.iter().zip(&diag) {
                assert!((a - b).abs() <= 1e-9, "d={d} T={t}: {a} vs {b}");
            }
            let cond = sv[d - 1] / sv[0];
            assert!(cond <= t * (1.0 + 1e-6));
        }
    }

    #[test]
    fn masking_is_deterministic_across_parties() {
        let a = build_masking_matrix(7, 99, 10.0).unwrap();
        let b = build_masking_matrix(7, 99, 10.0).unwrap();
        assert_eq!(a.matrix().as_slice(), b.matrix().as_slice());
        let c = build_masking_matrix(7, 100, 10.0).unwrap();
        assert_ne!(a.matrix(), c.matrix());
    }

    #[test]
    fn masking_is_linear() {
        let mm = build_masking_matrix(5, 3, 100.0).unwrap();
        let a = gaussian_matrix(12, 5, 20);
        let b = gaussian_matrix(12, 5, 21);
        let lhs = mm.apply(&a.add(&b).unwrap()).unwrap();
        let rhs = mm.apply(&a).unwrap().add(&mm.apply(&b).unwrap()).unwrap();
        assert!(max_abs_diff(&lhs, &rhs) <= 1e-9 * (1.0 + lhs.max_abs()));
    }

    #[test]
    fn noise_variance() {
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        let r = noise_matrix(1000, 1000, DEFAULT_NOISE_SIGMA, &mut rng).unwrap();
        let n = r.as_slice().len() as f64;
        let mean = r.as_slice().iter().sum::<f64>() / n;
        let var = r.as_slice().iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        assert!((var / 1e12 - 1.0).abs() < 0.02, "var {var}");
    }

    #[test]
    fn noise_is_private_per_party() {
        let a = noise_matrix(5, 3, 1e6, &mut ChaCha20Rng::seed_from_u64(1)).unwrap();
        let b = noise_matrix(5, 3, 1e6, &mut ChaCha20Rng::seed_from_u64(2)).unwrap();
        assert_ne!(a, b);
        assert!(noise_matrix(5, 3, 0.0, &mut ChaCha20Rng::seed_from_u64(2)).is_err());
    }
}
