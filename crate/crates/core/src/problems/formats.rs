//! Plain-text inputs for the generator families.

use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Result, SsnError};

/// An undirected graph with 0-indexed edges.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EdgeList {
    pub n: usize,
    pub edges: Vec<(usize, usize)>,
}

/// Edge list with one 1-indexed `u v` pair per line; `#` starts a comment.
/// The vertex count is the largest index seen unless `n` is given.
pub fn read_edge_list(path: impl AsRef<Path>, n: Option<usize>) -> Result<EdgeList> {
    let text = std::fs::read_to_string(path)?;
    parse_edge_list(&text, n)
}

pub(crate) fn parse_edge_list(text: &str, n: Option<usize>) -> Result<EdgeList> {
    let mut edges = Vec::new();
    let mut max_v = 0;
    for (k, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split_whitespace().collect();
        if f.len() < 2 {
            return Err(SsnError::parse(k + 1, "expected a pair of vertices"));
        }
        let mut pair = [0usize; 2];
        for (slot, tok) in pair.iter_mut().zip(&f[..2]) {
            *slot = tok
                .parse()
                .map_err(|_| SsnError::parse(k + 1, format!("bad vertex {tok:?}")))?;
            if *slot == 0 {
                return Err(SsnError::parse(k + 1, "vertices are 1-indexed"));
            }
        }
        max_v = max_v.max(pair[0]).max(pair[1]);
        edges.push((pair[0] - 1, pair[1] - 1));
    }
    let n = n.unwrap_or(max_v);
    if max_v > n {
        return Err(SsnError::InvalidParameter(format!("vertex {max_v} exceeds n = {n}")));
    }
    Ok(EdgeList { n, edges })
}

/// Dense square matrix stored as headerless CSV.
pub fn read_affinity_csv(path: impl AsRef<Path>) -> Result<DMatrix<f64>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| SsnError::parse(0, e.to_string()))?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (k, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| SsnError::parse(k + 1, e.to_string()))?;
        let row = rec
            .iter()
            .map(|t| t.parse::<f64>().map_err(|_| SsnError::parse(k + 1, format!("bad number {t:?}"))))
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    let n = rows.len();
    if n == 0 || rows.iter().any(|r| r.len() != n) {
        return Err(SsnError::dim("affinity matrix must be square and nonempty"));
    }
    Ok(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
}

/// Biq Mac triplet text: a header `n nnz` then 1-indexed `i j v` lines of a
/// symmetric matrix Q for `max xᵀQx` over x ∈ {0,1}ⁿ. Returned as the
/// minimization data `(Q₀, c₀) = (−2Q, 0)`.
pub fn read_biq(path: impl AsRef<Path>) -> Result<(DMatrix<f64>, Vec<f64>)> {
    let text = std::fs::read_to_string(path)?;
    parse_biq(&text)
}

pub(crate) fn parse_biq(text: &str) -> Result<(DMatrix<f64>, Vec<f64>)> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
    let (ln, header) = lines.next().ok_or_else(|| SsnError::parse(1, "empty file"))?;
    let n: usize = header
        .split_whitespace()
        .next()
        .and_then(|t| t.parse().ok())
        .ok_or_else(|| SsnError::parse(ln, "header must start with the dimension"))?;
    let mut q = DMatrix::zeros(n, n);
    for (ln, l) in lines {
        let f: Vec<&str> = l.split_whitespace().collect();
        if f.len() < 3 {
            return Err(SsnError::parse(ln, "expected `i j value`"));
        }
        let i: usize = f[0].parse().map_err(|_| SsnError::parse(ln, "bad row index"))?;
        let j: usize = f[1].parse().map_err(|_| SsnError::parse(ln, "bad column index"))?;
        let v: f64 = f[2].parse().map_err(|_| SsnError::parse(ln, "bad value"))?;
        if i == 0 || j == 0 || i > n || j > n {
            return Err(SsnError::parse(ln, format!("index ({i},{j}) outside 1..={n}")));
        }
        q[(i - 1, j - 1)] = v;
        q[(j - 1, i - 1)] = v;
    }
    Ok((q * -2.0, vec![0.0; n]))
}
