//! Sparse SDPA (`.dat-s`) files.
//!
//! The file describes `max ⟨F₀, X⟩  s.t.  ⟨F_k, X⟩ = c_k, X ⪰ 0`; it is read
//! as the minimization with objective `C = −F₀`. A negative block size `−k`
//! denotes a diagonal block and becomes `k` blocks of order one.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Result, SsnError};
use crate::linalg::{ConstraintMap, SymBlockMat, Triplet};
use crate::saddle::ProblemSpec;

pub fn read_sdpa(path: impl AsRef<Path>) -> Result<ProblemSpec> {
    let text = std::fs::read_to_string(path)?;
    parse_sdpa(&text)
}

fn is_comment(line: &str) -> bool {
    let t = line.trim_start();
    t.is_empty() || t.starts_with('*') || t.starts_with('"')
}

fn tokens(line: &str) -> Vec<&str> {
    line.split(|c: char| c.is_whitespace() || matches!(c, '{' | '}' | ',' | '(' | ')'))
        .filter(|t| !t.is_empty())
        .collect()
}

fn looks_complex(tok: &str) -> bool {
    let t = tok.trim_end_matches(['i', 'j', 'I', 'J']);
    t.len() < tok.len() && t.chars().any(|c| c.is_ascii_digit())
}

fn num(tok: &str, line: usize, what: &str) -> Result<f64> {
    if looks_complex(tok) {
        return Err(SsnError::Unsupported {
            line,
            msg: format!("complex value {tok:?}"),
        });
    }
    let v: f64 = tok
        .parse()
        .map_err(|_| SsnError::parse(line, format!("{what}: cannot parse {tok:?}")))?;
    if !v.is_finite() {
        return Err(SsnError::parse(line, format!("{what}: non-finite value")));
    }
    Ok(v)
}

fn int(tok: &str, line: usize, what: &str) -> Result<i64> {
    tok.parse()
        .map_err(|_| SsnError::parse(line, format!("{what}: expected an integer, got {tok:?}")))
}

/// Where an SDPA block lands: its first internal block and whether it is
/// diagonal.
#[derive(Clone, Copy)]
struct BlockMap {
    first: usize,
    size: usize,
    diagonal: bool,
}

pub fn parse_sdpa(text: &str) -> Result<ProblemSpec> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l))
        .filter(|(_, l)| !is_comment(l))
        .peekable();
    let last_line = text.lines().count().max(1);

    let (ln, l) = lines.next().ok_or_else(|| SsnError::parse(last_line, "empty file"))?;
    let first = *tokens(l).first().ok_or_else(|| SsnError::parse(ln, "missing constraint count"))?;
    let m = int(first, ln, "constraint count")?;
    if m < 0 {
        return Err(SsnError::parse(ln, "negative constraint count"));
    }
    let m = m as usize;

    let (ln, l) = lines.next().ok_or_else(|| SsnError::parse(last_line, "missing block count"))?;
    let first = *tokens(l).first().ok_or_else(|| SsnError::parse(ln, "missing block count"))?;
    let nb = int(first, ln, "block count")?;
    if nb <= 0 {
        return Err(SsnError::parse(ln, "block count must be positive"));
    }
    let nb = nb as usize;

    // header lists may wrap across lines; trailing annotations are ignored
    let mut sizes = Vec::with_capacity(nb);
    while sizes.len() < nb {
        let (ln, l) = lines
            .next()
            .ok_or_else(|| SsnError::parse(last_line, "block structure ended early"))?;
        for t in tokens(l) {
            if sizes.len() == nb {
                break;
            }
            let s = int(t, ln, "block size")?;
            if s == 0 {
                return Err(SsnError::parse(ln, "zero block size"));
            }
            sizes.push(s);
        }
    }
    let mut b = Vec::with_capacity(m);
    while b.len() < m {
        let (ln, l) = lines
            .next()
            .ok_or_else(|| SsnError::parse(last_line, "right-hand side ended early"))?;
        for t in tokens(l) {
            if b.len() == m {
                break;
            }
            b.push(num(t, ln, "right-hand side")?);
        }
    }

    let mut maps = Vec::with_capacity(nb);
    let mut dims = Vec::new();
    for &s in &sizes {
        let size = s.unsigned_abs() as usize;
        maps.push(BlockMap {
            first: dims.len(),
            size,
            diagonal: s < 0,
        });
        if s < 0 {
            dims.extend(std::iter::repeat_n(1, size));
        } else {
            dims.push(size);
        }
    }

    let mut f0: Vec<DMatrix<f64>> = dims.iter().map(|&d| DMatrix::zeros(d, d)).collect();
    let mut coeffs: Vec<Vec<Triplet>> = vec![Vec::new(); m];
    let mut index: Vec<HashMap<(usize, usize, usize), usize>> = vec![HashMap::new(); m];

    for (ln, l) in lines {
        let t = tokens(l);
        if t.len() < 5 {
            return Err(SsnError::parse(ln, format!("entry needs 5 fields, found {}", t.len())));
        }
        let k = int(t[0], ln, "matrix number")?;
        let blk = int(t[1], ln, "block number")?;
        let i = int(t[2], ln, "row index")?;
        let j = int(t[3], ln, "column index")?;
        let v = num(t[4], ln, "entry value")?;
        if k < 0 || k as usize > m {
            return Err(SsnError::parse(ln, format!("matrix number {k} outside 0..={m}")));
        }
        if blk < 1 || blk as usize > nb {
            return Err(SsnError::parse(ln, format!("block number {blk} outside 1..={nb}")));
        }
        let bm = maps[blk as usize - 1];
        if i < 1 || j < 1 || i as usize > bm.size || j as usize > bm.size {
            return Err(SsnError::parse(
                ln,
                format!("index ({i},{j}) outside block {blk} of size {}", bm.size),
            ));
        }
        let (i, j) = (i as usize - 1, j as usize - 1);
        let (block, r, c) = if bm.diagonal {
            if i != j {
                return Err(SsnError::parse(ln, format!("off-diagonal entry in diagonal block {blk}")));
            }
            (bm.first + i, 0, 0)
        } else {
            (bm.first, i.max(j), i.min(j))
        };
        if k == 0 {
            f0[block][(r, c)] += v;
            if r != c {
                f0[block][(c, r)] += v;
            }
        } else {
            let row = k as usize - 1;
            match index[row].get(&(block, r, c)) {
                Some(&pos) => coeffs[row][pos].value += v,
                None => {
                    index[row].insert((block, r, c), coeffs[row].len());
                    coeffs[row].push(Triplet::new(block, r, c, v));
                }
            }
        }
    }

    let c = SymBlockMat::from_blocks(f0.into_iter().map(|b| -b).collect())?;
    let a = ConstraintMap::new(dims, coeffs)?;
    ProblemSpec::sdp(c, a, b)
}

/// Serializes the equality part (C, A, b) of `p`. Every block is written
/// with a positive size; h is not representable and is left out.
pub fn write_sdpa_string(p: &ProblemSpec) -> Result<String> {
    let b = p
        .rhs()
        .ok_or_else(|| SsnError::Unsupported {
            line: 0,
            msg: "only equality constraints can be written".into(),
        })?;
    let dims = p.block_dims();
    let mut out = String::new();
    let _ = writeln!(out, "\"ssncp instance");
    let _ = writeln!(out, "{}", p.m());
    let _ = writeln!(out, "{}", dims.len());
    let _ = writeln!(out, "{}", dims.iter().map(|d| d.to_string()).collect::<Vec<_>>().join(" "));
    let _ = writeln!(out, "{}", b.iter().map(|v| format!("{v:?}")).collect::<Vec<_>>().join(" "));
    for (k, blk) in p.c.blocks().iter().enumerate() {
        let n = blk.nrows();
        for j in 0..n {
            for i in j..n {
                let v = blk[(i, j)];
                if v != 0.0 {
                    let _ = writeln!(out, "0 {} {} {} {:?}", k + 1, j + 1, i + 1, -v);
                }
            }
        }
    }
    for (row, ts) in p.a.coeffs().iter().enumerate() {
        for t in ts {
            let _ = writeln!(out, "{} {} {} {} {:?}", row + 1, t.block + 1, t.j + 1, t.i + 1, t.value);
        }
    }
    Ok(out)
}

pub fn write_sdpa(p: &ProblemSpec, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, write_sdpa_string(p)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const SCALAR: &str = "\"scalar problem\n1 =mdim\n1 =nblocks\n{1}\n1.0\n0 1 1 1 -2.0\n1 1 1 1 1.0\n";

    #[test]
    fn scalar_file() {
        let p = parse_sdpa(SCALAR).unwrap();
        assert_eq!(p.c, SymBlockMat::from_diag(&[2.0]));
        assert_eq!(p.rhs().unwrap(), &[1.0]);
        assert_eq!(p.a.coeffs()[0], vec![Triplet::new(0, 0, 0, 1.0)]);
    }

    #[test]
    fn diagonal_block_splits() {
        let p = parse_sdpa("1\n2\n2 -2\n1\n1 1 1 2 0.5\n1 2 1 1 1\n1 2 2 2 1\n").unwrap();
        assert_eq!(p.block_dims(), vec![2, 1, 1]);
        assert_eq!(p.a.coeffs()[0][0], Triplet::new(0, 1, 0, 0.5));
    }

    #[test]
    fn duplicates_are_summed() {
        let p = parse_sdpa("1\n1\n2\n0\n1 1 1 1 1\n1 1 1 1 2\n").unwrap();
        assert_eq!(p.a.coeffs()[0], vec![Triplet::new(0, 0, 0, 3.0)]);
    }

    #[test]
    fn round_trip() {
        let p = parse_sdpa("2\n2\n{2, -2}\n1.5 -0.25\n0 1 1 2 0.1\n0 2 2 2 3\n1 1 1 1 1\n1 2 1 1 1\n2 1 1 2 0.3333333333333333\n").unwrap();
        let text = write_sdpa_string(&p).unwrap();
        assert_eq!(parse_sdpa(&text).unwrap(), p);
    }

    #[test]
    fn malformed() {
        let cases = [
            ("", 1),
            ("x\n1\n1\n1\n", 1),
            ("1\n1\n1\n1\n1 1 1 1\n", 5),
            ("1\n1\n1\n1\n1 2 1 1 1.0\n", 5),
            ("1\n1\n-2\n1\n1 1 1 2 1.0\n", 5),
        ];
        for (text, line) in cases {
            match parse_sdpa(text) {
                Err(SsnError::Parse { line: l, .. }) => assert_eq!(l, line, "{text:?}"),
                other => panic!("{text:?}: {other:?}"),
            }
        }
        assert!(matches!(
            parse_sdpa("1\n1\n1\n1\n1 1 1 1 1+2i\n"),
            Err(SsnError::Unsupported { line: 5, .. })
        ));
    }
}
