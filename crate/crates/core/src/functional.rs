//! Bit-exact reference semantics.
//!
//! Products are 16x16->32 bit; accumulation wraps modulo 2^32, so the order
//! in which partial sums are combined (including across k-tiles) never
//! changes the result.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{DemmError, Result};
use crate::matrix::DenseMatrix;
use crate::par::{self, Execution};
use crate::sparse::{Entry, PackedSparseMatrix};

/// Shape of `A (r x kdim) * B (kdim x cdim)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GemmDims {
    pub r: usize,
    pub kdim: usize,
    pub cdim: usize,
}

impl GemmDims {
    pub fn new(r: usize, kdim: usize, cdim: usize) -> Result<Self> {
        if r == 0 || kdim == 0 || cdim == 0 {
            return Err(DemmError::InvalidArgument(format!(
                "GEMM dims {r}x{kdim}x{cdim} must be positive"
            )));
        }
        Ok(Self { r, kdim, cdim })
    }

    /// Multiply-adds of the dense product.
    pub fn dense_macs(&self) -> u64 {
        self.r as u64 * self.kdim as u64 * self.cdim as u64
    }
}

impl std::str::FromStr for GemmDims {
    type Err = DemmError;

    /// Parses `RxKxC`.
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(['x', 'X']).collect();
        let bad = || DemmError::InvalidArgument(format!("GEMM shape `{s}` is not RxKxC"));
        let [r, k, c] = parts[..] else {
            return Err(bad());
        };
        let p = |v: &str| v.trim().parse::<usize>().map_err(|_| bad());
        Self::new(p(r)?, p(k)?, p(c)?)
    }
}

#[inline]
fn mac(acc: i32, a: i16, b: i16) -> i32 {
    acc.wrapping_add(a as i32 * b as i32)
}

pub fn dense_matmul(a: &DenseMatrix<i16>, b: &DenseMatrix<i16>) -> Result<DenseMatrix<i32>> {
    dense_matmul_with(a, b, Execution::default())
}

/// `C = A * B` with 32-bit wrapping accumulation.
pub fn dense_matmul_with(
    a: &DenseMatrix<i16>,
    b: &DenseMatrix<i16>,
    exec: Execution,
) -> Result<DenseMatrix<i32>> {
    if a.cols() != b.rows() {
        return Err(DemmError::DimensionMismatch(format!(
            "A is {}x{} but B is {}x{}",
            a.rows(),
            a.cols(),
            b.rows(),
            b.cols()
        )));
    }
    let mut out = DenseMatrix::<i32>::zeros(a.rows(), b.cols());
    let n = b.cols();
    par::for_each_chunk_mut(exec, out.data_mut(), n.max(1), |i, dst| {
        for (k, &av) in a.row(i).iter().enumerate() {
            if av == 0 {
                continue;
            }
            for (d, &bv) in dst.iter_mut().zip(b.row(k)) {
                *d = mac(*d, av, bv);
            }
        }
    });
    Ok(out)
}

pub fn rowwise_sparse_matmul(a: &PackedSparseMatrix, b: &DenseMatrix<i16>) -> Result<DenseMatrix<i32>> {
    rowwise_sparse_matmul_with(a, b, Execution::default())
}

/// Row-wise product: output row `i` is the sum over packed `(v, j)` of
/// `v * B[j, :]`.
pub fn rowwise_sparse_matmul_with(
    a: &PackedSparseMatrix,
    b: &DenseMatrix<i16>,
    exec: Execution,
) -> Result<DenseMatrix<i32>> {
    if a.cols() != b.rows() {
        return Err(DemmError::DimensionMismatch(format!(
            "A is {}x{} but B is {}x{}",
            a.rows(),
            a.cols(),
            b.rows(),
            b.cols()
        )));
    }
    if let Some(e) = a.row_entries().iter().flatten().find(|e| e.col >= b.rows()) {
        return Err(DemmError::ColumnOutOfRange {
            col: e.col,
            limit: b.rows(),
        });
    }
    let mut out = DenseMatrix::<i32>::zeros(a.rows(), b.cols());
    let n = b.cols();
    par::for_each_chunk_mut(exec, out.data_mut(), n.max(1), |i, dst| {
        accumulate_row(dst, a.row(i), b, 0);
    });
    Ok(out)
}

/// `dst += sum of v * B[col - row_offset, :]` over `entries`.
pub(crate) fn accumulate_row(dst: &mut [i32], entries: &[Entry], b: &DenseMatrix<i16>, row_offset: usize) {
    for e in entries {
        for (d, &bv) in dst.iter_mut().zip(b.row(e.col - row_offset)) {
            *d = mac(*d, e.value, bv);
        }
    }
}

/// How a GEMM is cut into engine-sized tiles: `k_tiles` slices of the inner
/// dimension of depth `m_tile`, times `c_tiles` slices of B's columns of width
/// `c_tile`. Last tiles may be partial.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TilePlan {
    pub dims: GemmDims,
    pub m_tile: usize,
    pub c_tile: usize,
    pub k_tiles: usize,
    pub c_tiles: usize,
}

impl TilePlan {
    /// Rows of B covered by k-tile `kt`.
    pub fn k_range(&self, kt: usize) -> Range<usize> {
        let start = kt * self.m_tile;
        start..(start + self.m_tile).min(self.dims.kdim)
    }

    /// Columns of B covered by c-tile `ct`.
    pub fn c_range(&self, ct: usize) -> Range<usize> {
        let start = ct * self.c_tile;
        start..(start + self.c_tile).min(self.dims.cdim)
    }

    pub fn tile_count(&self) -> usize {
        self.k_tiles * self.c_tiles
    }
}

pub fn plan_tiles(dims: GemmDims, m: usize, c: usize) -> TilePlan {
    assert!(m > 0 && c > 0, "tile sizes must be positive");
    TilePlan {
        dims,
        m_tile: m,
        c_tile: c,
        k_tiles: dims.kdim.div_ceil(m).max(1),
        c_tiles: dims.cdim.div_ceil(c).max(1),
    }
}

/// Entries of a sorted row whose column falls in k-tile `kt`, with the column
/// rebased to `[0, m)`.
pub fn slice_row_for_ktile(row: &[Entry], kt: usize, m: usize) -> Vec<Entry> {
    let range = ktile_slice(row, kt, m);
    row[range]
        .iter()
        .map(|e| Entry::new(e.value, e.col - kt * m))
        .collect()
}

/// Index range into a sorted row covering columns `[kt*m, (kt+1)*m)`.
pub(crate) fn ktile_slice(row: &[Entry], kt: usize, m: usize) -> Range<usize> {
    let lo = kt * m;
    let hi = lo + m;
    let start = row.partition_point(|e| e.col < lo);
    let end = start + row[start..].partition_point(|e| e.col < hi);
    start..end
}
