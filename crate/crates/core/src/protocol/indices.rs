//! Plaintext view of the starting-point recurrence and the row windows.
//!
//! The auxiliary server evaluates the recurrence homomorphically; clients
//! only ever see their own start `s^i` and turn it into a set of rows.

use crate::error::{Error, Result};

/// `s^0 = offset`, `s^{i+1} = s^i + N^i`.
pub fn start_points(offset: u64, counts: &[usize]) -> Vec<u64> {
    counts
        .iter()
        .scan(offset, |s, &n| {
            let current = *s;
            *s += n as u64;
            Some(current)
        })
        .collect()
}

/// Positions `{start mod N, ..., (start + count - 1) mod N}`.
pub fn window_positions(start: u64, count: usize, total: usize) -> Result<Vec<usize>> {
    if count > total {
        return Err(Error::invalid(format!("window of {count} rows exceeds the {total} available")));
    }
    if total == 0 {
        return Ok(Vec::new());
    }
    let base = (start % total as u64) as usize;
    Ok((0..count).map(|j| (base + j) % total).collect())
}

/// Row indices taken from the shared permutation at a client's window.
pub fn index_set(permutation: &[usize], start: u64, count: usize) -> Result<Vec<usize>> {
    Ok(window_positions(start, count, permutation.len())?
        .into_iter()
        .map(|p| permutation[p])
        .collect())
}
