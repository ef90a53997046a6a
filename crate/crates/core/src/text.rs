//! Plain-text matrix files.
//!
//! ```text
//! sparse <rows> <cols>
//! <col>:<value> <col>:<value> ...     one line per row, ascending col;
//!                                     an empty line is an empty row
//! ```
//!
//! ```text
//! dense <rows> <cols>
//! <v0> <v1> ... <v{cols-1}>           one line per row
//! ```
//!
//! Values are 16-bit signed integers. Lines starting with `#` are comments
//! and may appear anywhere; they are not counted as rows. Exactly `rows`
//! row lines must follow the header.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{DemmError, Result};
use crate::matrix::DenseMatrix;
use crate::sparse::{Entry, PackedSparseMatrix};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum MatrixFile {
    Sparse(PackedSparseMatrix),
    Dense(DenseMatrix<i16>),
}

pub fn read_matrix(path: &Path) -> Result<MatrixFile> {
    let text = std::fs::read_to_string(path).map_err(|source| DemmError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_matrix(&text, path)
}

pub fn parse_matrix(text: &str, path: &Path) -> Result<MatrixFile> {
    let err = |line: usize, msg: String| DemmError::Parse {
        path: PathBuf::from(path),
        line,
        msg,
    };
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim_end_matches('\r')))
        .filter(|(_, l)| !l.trim_start().starts_with('#'));

    let (hline, header) = lines.next().ok_or_else(|| err(1, "empty file".into()))?;
    let fields: Vec<&str> = header.split_whitespace().collect();
    let [kind, rows, cols] = fields[..] else {
        return Err(err(hline, format!("expected `sparse|dense <rows> <cols>`, got `{header}`")));
    };
    let rows: usize = rows
        .parse()
        .map_err(|_| err(hline, format!("bad row count `{rows}`")))?;
    let cols: usize = cols
        .parse()
        .map_err(|_| err(hline, format!("bad column count `{cols}`")))?;
    let body: Vec<(usize, &str)> = lines.collect();
    let body = trim_trailing_blank(&body, rows);
    if body.len() != rows {
        let at = body.last().map_or(hline, |(l, _)| *l);
        return Err(err(at, format!("expected {rows} row lines, found {}", body.len())));
    }

    let value = |line: usize, s: &str| -> Result<i16> {
        s.parse::<i16>()
            .map_err(|_| err(line, format!("`{s}` is not a 16-bit integer")))
    };

    match kind {
        "sparse" => {
            let mut row_entries = Vec::with_capacity(rows);
            for &(ln, l) in body {
                let mut row = Vec::new();
                for tok in l.split_whitespace() {
                    let (c, v) = tok
                        .split_once(':')
                        .ok_or_else(|| err(ln, format!("expected col:value, got `{tok}`")))?;
                    let c: usize = c
                        .parse()
                        .map_err(|_| err(ln, format!("bad column index `{c}`")))?;
                    row.push(Entry::new(value(ln, v)?, c));
                }
                row_entries.push(row);
            }
            PackedSparseMatrix::new(rows, cols, row_entries)
                .map(MatrixFile::Sparse)
                .map_err(|e| err(hline, e.to_string()))
        }
        "dense" => {
            let mut data = Vec::with_capacity(rows * cols);
            for &(ln, l) in body {
                let before = data.len();
                for tok in l.split_whitespace() {
                    data.push(value(ln, tok)?);
                }
                if data.len() - before != cols {
                    return Err(err(
                        ln,
                        format!("expected {cols} values, found {}", data.len() - before),
                    ));
                }
            }
            Ok(MatrixFile::Dense(DenseMatrix::from_vec(rows, cols, data)?))
        }
        other => Err(err(hline, format!("unknown matrix kind `{other}`"))),
    }
}

// A file ending in "\n\n" must not invent an extra empty sparse row, but
// legitimate empty rows at the end are kept when the count requires them.
fn trim_trailing_blank<'a>(body: &'a [(usize, &'a str)], rows: usize) -> &'a [(usize, &'a str)] {
    let mut end = body.len();
    while end > rows && body[end - 1].1.trim().is_empty() {
        end -= 1;
    }
    &body[..end]
}

pub fn format_sparse(a: &PackedSparseMatrix) -> String {
    let mut s = format!("sparse {} {}\n", a.rows(), a.cols());
    for row in a.row_entries() {
        let mut first = true;
        for e in row {
            if !first {
                s.push(' ');
            }
            first = false;
            let _ = write!(s, "{}:{}", e.col, e.value);
        }
        s.push('\n');
    }
    s
}

pub fn format_dense(d: &DenseMatrix<i16>) -> String {
    let mut s = format!("dense {} {}\n", d.rows(), d.cols());
    for r in 0..d.rows() {
        let row: Vec<String> = d.row(r).iter().map(i16::to_string).collect();
        s.push_str(&row.join(" "));
        s.push('\n');
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sparse::{pack, random_dense, random_sparse, SparsityPattern};

    fn parse(s: &str) -> Result<MatrixFile> {
        parse_matrix(s, Path::new("t.txt"))
    }

    #[test]
    fn parses_sparse_with_empty_rows() {
        let m = parse("sparse 3 8\n1:5 7:-2\n\n0:1\n").unwrap();
        let MatrixFile::Sparse(a) = m else { panic!() };
        assert_eq!(a.row(0), &[Entry::new(5, 1), Entry::new(-2, 7)]);
        assert!(a.row(1).is_empty());
        assert_eq!(a.row(2), &[Entry::new(1, 0)]);
    }

    #[test]
    fn trailing_empty_rows_survive() {
        let m = parse("sparse 2 4\n0:1\n\n").unwrap();
        let MatrixFile::Sparse(a) = m else { panic!() };
        assert_eq!(a.rows(), 2);
        assert!(a.row(1).is_empty());
    }

    #[test]
    fn parses_dense_and_comments() {
        let m = parse("# fixture\ndense 2 2\n1 -2\n# mid\n3 4\n").unwrap();
        assert_eq!(
            m,
            MatrixFile::Dense(DenseMatrix::from_vec(2, 2, vec![1, -2, 3, 4]).unwrap())
        );
    }

    #[test]
    fn reports_line_numbers() {
        let e = parse("dense 2 2\n1 2\n3\n").unwrap_err().to_string();
        assert!(e.contains("t.txt:3"), "{e}");
        let e = parse("sparse 1 4\n9:1\n").unwrap_err().to_string();
        assert!(e.contains("out of range"), "{e}");
        let e = parse("sparse 1 4\n1:70000\n").unwrap_err().to_string();
        assert!(e.contains("16-bit"), "{e}");
        assert!(parse("matrix 1 1\n1\n").is_err());
        assert!(parse("").is_err());
        assert!(parse("dense 3 1\n1\n2\n").is_err());
    }

    #[test]
    fn roundtrips() {
        let a = random_sparse(7, 40, SparsityPattern::new(2, 8).unwrap(), 1).unwrap();
        assert_eq!(parse(&format_sparse(&a)).unwrap(), MatrixFile::Sparse(a));
        let d = random_dense(5, 9, 2);
        assert_eq!(parse(&format_dense(&d)).unwrap(), MatrixFile::Dense(d.clone()));
        let empty = pack(&DenseMatrix::zeros(3, 3));
        assert_eq!(parse(&format_sparse(&empty)).unwrap(), MatrixFile::Sparse(empty));
    }
}
