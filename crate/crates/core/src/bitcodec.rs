//! 8-bit binary encoding of scalar inputs. Bit 0 is the least significant
//! bit; infinity is all ones, so 255 is not a finite value.

use ndarray::{Array2, ArrayView2};
use thiserror::Error;

pub const N_BITS: usize = 8;
pub const INF_CODE: u32 = 255;

pub type Bits = [u8; N_BITS];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scalar {
    Finite(u32),
    Infinity,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CodecError {
    #[error("255 is reserved for infinity")]
    ReservedValue,
    #[error("{0} does not fit in 8 bits")]
    OutOfRange(u32),
}

pub fn to_bits(x: Scalar) -> Result<Bits, CodecError> {
    match x {
        Scalar::Infinity => Ok([1; N_BITS]),
        Scalar::Finite(INF_CODE) => Err(CodecError::ReservedValue),
        Scalar::Finite(v) if v > INF_CODE => Err(CodecError::OutOfRange(v)),
        Scalar::Finite(v) => {
            let mut bits = [0; N_BITS];
            for (i, b) in bits.iter_mut().enumerate() {
                *b = ((v >> i) & 1) as u8;
            }
            Ok(bits)
        }
    }
}

pub fn from_bits(bits: &Bits) -> Scalar {
    let v = bits.iter().enumerate().fold(0u32, |acc, (i, &b)| acc | (u32::from(b & 1) << i));
    if v == INF_CODE {
        Scalar::Infinity
    } else {
        Scalar::Finite(v)
    }
}

/// Encodes a saturating value: anything at or above 255 (including the
/// classical `u32::MAX` infinity) becomes infinity.
pub fn saturating_bits(v: u32) -> Bits {
    if v >= INF_CODE {
        [1; N_BITS]
    } else {
        to_bits(Scalar::Finite(v)).expect("value below 255")
    }
}

/// Rows of 0/1 bit vectors, one row per scalar, ready to multiply by an
/// embedding table.
pub fn bit_matrix<I: IntoIterator<Item = Bits>>(rows: I) -> Array2<f64> {
    let rows: Vec<Bits> = rows.into_iter().collect();
    Array2::from_shape_fn((rows.len(), N_BITS), |(r, c)| f64::from(rows[r][c]))
}

/// Sum of the table rows selected by the set bits.
pub fn embed(bits: &Bits, table: ArrayView2<'_, f64>) -> Vec<f64> {
    assert_eq!(table.nrows(), N_BITS, "embedding table needs one row per bit");
    let mut out = vec![0.0; table.ncols()];
    for (i, &b) in bits.iter().enumerate() {
        if b != 0 {
            for (o, v) in out.iter_mut().zip(table.row(i)) {
                *o += v;
            }
        }
    }
    out
}
