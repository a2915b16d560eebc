//! Additive masking of transformed rows and its cancellation.

use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// `W^i`: the noise matrix with transformed row `j` added to row `z_set[j]`.
pub fn masked_contribution(x_tilde: &Matrix, z_set: &[usize], noise: &Matrix) -> Result<Matrix> {
    if x_tilde.rows() != z_set.len() {
        return Err(Error::shape(format!(
            "{} data rows but {} assigned indices",
            x_tilde.rows(),
            z_set.len()
        )));
    }
    if x_tilde.rows() > 0 && x_tilde.cols() != noise.cols() {
        return Err(Error::shape(format!(
            "data has {} columns, noise has {}",
            x_tilde.cols(),
            noise.cols()
        )));
    }
    let mut w = noise.clone();
    for (j, &k) in z_set.iter().enumerate() {
        if k >= w.rows() {
            return Err(Error::shape(format!("row index {k} outside a {}-row noise matrix", w.rows())));
        }
        for (dst, src) in w.row_mut(k).iter_mut().zip(x_tilde.row(j)) {
            *dst += src;
        }
    }
    Ok(w)
}

/// Element-wise sum of equally shaped matrices.
pub fn sum_matrices<'a>(items: impl IntoIterator<Item = &'a Matrix>) -> Result<Matrix> {
    let mut iter = items.into_iter();
    let mut acc = iter
        .next()
        .ok_or_else(|| Error::invalid("cannot sum an empty set of matrices"))?
        .clone();
    for m in iter {
        acc.add_assign(m)?;
    }
    Ok(acc)
}

/// `X_masked = W - R`.
pub fn denoise(w_sum: &Matrix, r_sum: &Matrix) -> Result<Matrix> {
    w_sum.sub(r_sum)
}
