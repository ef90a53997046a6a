//! N:M structured-sparsity patterns and the packed non-zero format.
//!
//! Blocks are aligned at multiples of `m` from column 0. A trailing partial
//! block (when `cols % m != 0`) is held to the same limit `n`.

use std::fmt;
use std::str::FromStr;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{DemmError, Result};
use crate::matrix::DenseMatrix;

/// At most `n` non-zeros in every aligned block of `m` consecutive columns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct SparsityPattern {
    n: usize,
    m: usize,
}

impl SparsityPattern {
    pub fn new(n: usize, m: usize) -> Result<Self> {
        if n == 0 || m == 0 || n > m {
            return Err(DemmError::InvalidPattern { n, m });
        }
        Ok(Self { n, m })
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn m(&self) -> usize {
        self.m
    }

    /// Fraction of positions allowed to be non-zero.
    pub fn density(&self) -> f64 {
        self.n as f64 / self.m as f64
    }
}

impl fmt::Display for SparsityPattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.n, self.m)
    }
}

impl FromStr for SparsityPattern {
    type Err = DemmError;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || DemmError::InvalidArgument(format!("pattern `{s}` is not of the form N:M"));
        let (n, m) = s.trim().split_once(':').ok_or_else(bad)?;
        let n = n.trim().parse().map_err(|_| bad())?;
        let m = m.trim().parse().map_err(|_| bad())?;
        Self::new(n, m)
    }
}

impl TryFrom<String> for SparsityPattern {
    type Error = DemmError;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<SparsityPattern> for String {
    fn from(p: SparsityPattern) -> String {
        p.to_string()
    }
}

/// One packed non-zero: its value and its column in the full logical row.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Entry {
    pub value: i16,
    pub col: usize,
}

impl Entry {
    pub fn new(value: i16, col: usize) -> Self {
        Self { value, col }
    }
}

/// Row-major packed `{value, col}` representation of a sparse matrix.
///
/// Invariants: per row the columns are strictly increasing and `< cols`,
/// and no packed value is zero.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PackedSparseMatrix {
    rows: usize,
    cols: usize,
    row_entries: Vec<Vec<Entry>>,
}

impl PackedSparseMatrix {
    pub fn new(rows: usize, cols: usize, row_entries: Vec<Vec<Entry>>) -> Result<Self> {
        if row_entries.len() != rows {
            return Err(DemmError::MalformedMatrix(format!(
                "expected {rows} rows, got {}",
                row_entries.len()
            )));
        }
        for (i, row) in row_entries.iter().enumerate() {
            let mut prev: Option<usize> = None;
            for e in row {
                if e.col >= cols {
                    return Err(DemmError::ColumnOutOfRange {
                        col: e.col,
                        limit: cols,
                    });
                }
                if e.value == 0 {
                    return Err(DemmError::MalformedMatrix(format!(
                        "row {i}: zero value packed at column {}",
                        e.col
                    )));
                }
                if prev.is_some_and(|p| p >= e.col) {
                    return Err(DemmError::MalformedMatrix(format!(
                        "row {i}: column indexes not strictly increasing at {}",
                        e.col
                    )));
                }
                prev = Some(e.col);
            }
        }
        Ok(Self {
            rows,
            cols,
            row_entries,
        })
    }

    pub fn empty(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            row_entries: vec![Vec::new(); rows],
        }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[Entry] {
        &self.row_entries[i]
    }

    pub fn row_entries(&self) -> &[Vec<Entry>] {
        &self.row_entries
    }

    pub fn nnz(&self) -> usize {
        self.row_entries.iter().map(Vec::len).sum()
    }

    /// Multiplies every value by `factor`, wrapping in 16 bits and dropping
    /// entries that become zero.
    pub fn scaled(&self, factor: i16) -> Self {
        let row_entries = self
            .row_entries
            .iter()
            .map(|row| {
                row.iter()
                    .map(|e| Entry::new(e.value.wrapping_mul(factor), e.col))
                    .filter(|e| e.value != 0)
                    .collect()
            })
            .collect();
        Self {
            rows: self.rows,
            cols: self.cols,
            row_entries,
        }
    }
}

/// True iff every aligned block of `p.m` columns in every row holds at most
/// `p.n` packed entries.
pub fn validate_pattern(a: &PackedSparseMatrix, p: SparsityPattern) -> bool {
    a.row_entries.iter().all(|row| {
        let mut block = usize::MAX;
        let mut count = 0;
        for e in row {
            let b = e.col / p.m;
            if b != block {
                block = b;
                count = 0;
            }
            count += 1;
            if count > p.n {
                return false;
            }
        }
        true
    })
}

/// Keeps every non-zero of `dense`, per row in ascending column order.
pub fn pack(dense: &DenseMatrix<i16>) -> PackedSparseMatrix {
    let row_entries = (0..dense.rows())
        .map(|r| {
            dense
                .row(r)
                .iter()
                .enumerate()
                .filter(|(_, &v)| v != 0)
                .map(|(c, &v)| Entry::new(v, c))
                .collect()
        })
        .collect();
    PackedSparseMatrix {
        rows: dense.rows(),
        cols: dense.cols(),
        row_entries,
    }
}

pub fn unpack(a: &PackedSparseMatrix) -> DenseMatrix<i16> {
    let mut out = DenseMatrix::zeros(a.rows, a.cols);
    for (r, row) in a.row_entries.iter().enumerate() {
        let dst = out.row_mut(r);
        for e in row {
            dst[e.col] = e.value;
        }
    }
    out
}

/// Magnitude pruning: in each aligned block keep the `p.n` entries of largest
/// absolute value, lower column index winning ties.
pub fn prune_to_pattern(dense: &DenseMatrix<i16>, p: SparsityPattern) -> PackedSparseMatrix {
    let mut row_entries = Vec::with_capacity(dense.rows());
    let mut scratch: Vec<Entry> = Vec::with_capacity(p.m);
    for r in 0..dense.rows() {
        let row = dense.row(r);
        let mut kept = Vec::new();
        for (b, block) in row.chunks(p.m).enumerate() {
            scratch.clear();
            scratch.extend(
                block
                    .iter()
                    .enumerate()
                    .filter(|(_, &v)| v != 0)
                    .map(|(i, &v)| Entry::new(v, b * p.m + i)),
            );
            if scratch.len() > p.n {
                scratch.sort_by_key(|e| (std::cmp::Reverse((e.value as i32).abs()), e.col));
                scratch.truncate(p.n);
                scratch.sort_by_key(|e| e.col);
            }
            kept.extend_from_slice(&scratch);
        }
        row_entries.push(kept);
    }
    PackedSparseMatrix {
        rows: dense.rows(),
        cols: dense.cols(),
        row_entries,
    }
}

/// Uniform in [-128, 127] excluding zero.
fn nonzero_value(rng: &mut impl Rng) -> i16 {
    let v = rng.random_range(-128i16..127);
    if v >= 0 {
        v + 1
    } else {
        v
    }
}

fn check_shape(rows: usize, cols: usize) -> Result<()> {
    if rows == 0 || cols == 0 {
        return Err(DemmError::InvalidArgument(format!(
            "matrix shape {rows}x{cols} must be non-empty"
        )));
    }
    Ok(())
}

/// Worst-case density generator: exactly `p.n` non-zeros per full block
/// (`min(p.n, width)` in a trailing partial block), at random positions.
pub fn random_sparse(
    rows: usize,
    cols: usize,
    p: SparsityPattern,
    seed: u64,
) -> Result<PackedSparseMatrix> {
    check_shape(rows, cols)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    random_blocks(rows, cols, p.m, &mut rng, |w, _| p.n.min(w))
}

/// Block-count generator for unstructured-looking weights: each aligned block
/// of `block` columns receives a Poisson-distributed number of non-zeros whose
/// mean is `mean` scaled by the block's width, capped at the width.
pub fn random_poisson_blocks(
    rows: usize,
    cols: usize,
    block: usize,
    mean: f64,
    seed: u64,
) -> Result<PackedSparseMatrix> {
    check_shape(rows, cols)?;
    if block == 0 || !mean.is_finite() || mean < 0.0 {
        return Err(DemmError::InvalidArgument(format!(
            "block {block} / mean {mean} must be positive and finite"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    random_blocks(rows, cols, block, &mut rng, |w, rng| {
        let lambda = mean * w as f64 / block as f64;
        if lambda <= 0.0 {
            return 0;
        }
        let draw: f64 = Poisson::new(lambda).expect("positive lambda").sample(rng);
        (draw as usize).min(w)
    })
}

fn random_blocks(
    rows: usize,
    cols: usize,
    block: usize,
    rng: &mut ChaCha8Rng,
    mut count: impl FnMut(usize, &mut ChaCha8Rng) -> usize,
) -> Result<PackedSparseMatrix> {
    let mut row_entries = Vec::with_capacity(rows);
    for _ in 0..rows {
        let mut row = Vec::new();
        let mut start = 0;
        while start < cols {
            let width = block.min(cols - start);
            let k = count(width, rng);
            let mut picks = index::sample(rng, width, k).into_vec();
            picks.sort_unstable();
            for i in picks {
                row.push(Entry::new(nonzero_value(rng), start + i));
            }
            start += width;
        }
        row_entries.push(row);
    }
    Ok(PackedSparseMatrix {
        rows,
        cols,
        row_entries,
    })
}

/// Dense operand with values uniform in [-128, 127].
pub fn random_dense(rows: usize, cols: usize, seed: u64) -> DenseMatrix<i16> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    DenseMatrix::from_fn(rows, cols, |_, _| rng.random_range(-128i16..=127))
}
