//! Matrix Market exchange format (coordinate, real) reader and writer.
//!
//! Writes `general` or `symmetric` coordinate files with the standard
//! `%%MatrixMarket matrix coordinate real ...` header; reads both. Indices
//! in the file are 1-based per the format.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::sparse::SparseMatrix;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Layout {
    General,
    /// Only the lower triangle (including diagonal) is stored.
    Symmetric,
}

pub fn write(path: &Path, matrix: &SparseMatrix, layout: Layout) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let mut w = BufWriter::new(file);
    let io_err = |e| Error::io(path.display().to_string(), e);

    let (kind, entries): (&str, Vec<(usize, usize, f64)>) = match layout {
        Layout::General => ("general", matrix.iter().collect()),
        Layout::Symmetric => {
            if !matrix.is_symmetric() {
                return Err(Error::InvalidMatrix(
                    "symmetric layout requested for a non-symmetric matrix".into(),
                ));
            }
            ("symmetric", matrix.iter().filter(|&(r, c, _)| r >= c).collect())
        }
    };
    writeln!(w, "%%MatrixMarket matrix coordinate real {kind}").map_err(io_err)?;
    writeln!(w, "{} {} {}", matrix.rows(), matrix.cols(), entries.len()).map_err(io_err)?;
    for (r, c, v) in entries {
        writeln!(w, "{} {} {:.17e}", r + 1, c + 1, v).map_err(io_err)?;
    }
    w.flush().map_err(io_err)
}

pub fn read(path: &Path) -> Result<SparseMatrix> {
    let file = File::open(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let reader = BufReader::new(file);
    let path_str = path.display().to_string();
    let parse_err = |line: usize, detail: String| Error::Parse {
        path: path_str.clone(),
        line,
        detail,
    };

    let mut lines = reader.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| parse_err(1, "empty file".into()))?;
    let header = header.map_err(|e| Error::io(&path_str, e))?;
    let fields: Vec<&str> = header.split_whitespace().collect();
    if fields.len() < 5
        || !fields[0].eq_ignore_ascii_case("%%MatrixMarket")
        || !fields[1].eq_ignore_ascii_case("matrix")
        || !fields[2].eq_ignore_ascii_case("coordinate")
        || !fields[3].eq_ignore_ascii_case("real")
    {
        return Err(parse_err(1, format!("unsupported header: {header}")));
    }
    let symmetric = match fields[4].to_ascii_lowercase().as_str() {
        "general" => false,
        "symmetric" => true,
        other => return Err(parse_err(1, format!("unsupported layout: {other}"))),
    };

    let mut dims: Option<(usize, usize, usize)> = None;
    let mut triplets = Vec::new();
    for (idx, line) in lines {
        let line = line.map_err(|e| Error::io(&path_str, e))?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('%') {
            continue;
        }
        let parts: Vec<&str> = line.split_whitespace().collect();
        if dims.is_none() {
            if parts.len() != 3 {
                return Err(parse_err(idx + 1, "expected `rows cols nnz`".into()));
            }
            let parse = |s: &str| {
                s.parse::<usize>()
                    .map_err(|e| parse_err(idx + 1, e.to_string()))
            };
            dims = Some((parse(parts[0])?, parse(parts[1])?, parse(parts[2])?));
            continue;
        }
        if parts.len() != 3 {
            return Err(parse_err(idx + 1, "expected `row col value`".into()));
        }
        let r: usize = parts[0]
            .parse()
            .map_err(|e: std::num::ParseIntError| parse_err(idx + 1, e.to_string()))?;
        let c: usize = parts[1]
            .parse()
            .map_err(|e: std::num::ParseIntError| parse_err(idx + 1, e.to_string()))?;
        let v: f64 = parts[2]
            .parse()
            .map_err(|e: std::num::ParseFloatError| parse_err(idx + 1, e.to_string()))?;
        if r == 0 || c == 0 {
            return Err(parse_err(idx + 1, "indices are 1-based".into()));
        }
        triplets.push((r - 1, c - 1, v));
        if symmetric && r != c {
            triplets.push((c - 1, r - 1, v));
        }
    }
    let (rows, cols, nnz) = dims.ok_or_else(|| parse_err(2, "missing size line".into()))?;
    let stored = if symmetric {
        triplets.iter().filter(|&&(r, c, _)| r >= c).count()
    } else {
        triplets.len()
    };
    if stored != nnz {
        return Err(parse_err(
            2,
            format!("size line declares {nnz} entries, file has {stored}"),
        ));
    }
    SparseMatrix::from_triplets(rows, cols, triplets)
}
