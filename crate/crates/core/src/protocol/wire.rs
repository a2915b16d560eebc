//! Payload encodings carried inside envelopes.
//!
//! Matrices travel as base64 of two little-endian `u32` counts (rows, cols)
//! followed by row-major little-endian `f64` values. Integers and ciphertexts
//! travel as big-endian hex; messages carrying several of them join the hex
//! fields with `.`.

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use num_bigint::BigUint;

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::paillier::Ciphertext;

pub fn encode_matrix(m: &Matrix) -> String {
    let mut bytes = Vec::with_capacity(8 + 8 * m.as_slice().len());
    bytes.extend_from_slice(&(m.rows() as u32).to_le_bytes());
    bytes.extend_from_slice(&(m.cols() as u32).to_le_bytes());
    for v in m.as_slice() {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    STANDARD.encode(bytes)
}

pub fn decode_matrix(s: &str) -> Result<Matrix> {
    let bytes = STANDARD
        .decode(s)
        .map_err(|e| Error::Format(format!("matrix payload is not base64: {e}")))?;
    if bytes.len() < 8 {
        return Err(Error::Format("matrix payload shorter than its header".into()));
    }
    let rows = u32::from_le_bytes(bytes[0..4].try_into().unwrap()) as usize;
    let cols = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let body = &bytes[8..];
    if body.len() != rows * cols * 8 {
        return Err(Error::Format(format!(
            "matrix payload declares {rows}x{cols} but carries {} bytes",
            body.len()
        )));
    }
    let data = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Matrix::new(rows, cols, data)
}

pub fn encode_u64(x: u64) -> String {
    format!("{x:x}")
}

pub fn decode_u64(s: &str) -> Result<u64> {
    if s.is_empty() || s.len() > 16 {
        return Err(Error::Format(format!("not a 64-bit hex integer: {s:?}")));
    }
    u64::from_str_radix(s, 16).map_err(|_| Error::Format(format!("not a 64-bit hex integer: {s:?}")))
}

pub fn encode_ciphertexts<'a>(items: impl IntoIterator<Item = &'a Ciphertext>) -> String {
    items.into_iter().map(Ciphertext::to_hex).collect::<Vec<_>>().join(".")
}

pub fn decode_ciphertexts(s: &str) -> Result<Vec<Ciphertext>> {
    s.split('.').map(Ciphertext::from_hex).collect()
}

/// Hex fields of a dot-joined payload, parsed as unbounded integers.
pub fn hex_fields(s: &str) -> Result<Vec<BigUint>> {
    s.split('.')
        .map(|f| {
            if f.is_empty() || !f.bytes().all(|b| b.is_ascii_hexdigit()) {
                return Err(Error::Format(format!("not a hex field: {f:?}")));
            }
            BigUint::parse_bytes(f.as_bytes(), 16).ok_or_else(|| Error::Format(format!("not a hex field: {f:?}")))
        })
        .collect()
}
