//! Plain-text matrix and point files.
//!
//! Matrix: a `rows cols` line, then one line per row with 17 significant digits.
//! Point: a `kind rows cols [r]` line, then the stored matrices' rows (`B` then `A`
//! for fixed-rank points).

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{invalid, Error, Result};
use crate::manifolds::{ManifoldKind, ManifoldPoint};
use crate::matcore::DenseMatrix;

fn push_rows(out: &mut String, m: &DenseMatrix) {
    for i in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols()).map(|j| format!("{:.16e}", m[(i, j)])).collect();
        out.push_str(&row.join(" "));
        out.push('\n');
    }
}

pub fn format_matrix(m: &DenseMatrix) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{} {}", m.nrows(), m.ncols());
    push_rows(&mut out, m);
    out
}

fn parse_usize(tok: Option<&str>, what: &str) -> Result<usize> {
    tok.ok_or_else(|| Error::InvalidInput(format!("missing {what}")))?
        .parse()
        .map_err(|_| Error::InvalidInput(format!("bad {what}")))
}

fn take_values<'a>(tokens: &mut impl Iterator<Item = &'a str>, rows: usize, cols: usize) -> Result<DenseMatrix> {
    let mut data = Vec::with_capacity(rows * cols);
    for _ in 0..rows * cols {
        let tok = tokens
            .next()
            .ok_or_else(|| Error::InvalidInput(format!("expected {} values", rows * cols)))?;
        let v: f64 = tok
            .parse()
            .map_err(|_| Error::InvalidInput(format!("bad number '{tok}'")))?;
        if !v.is_finite() {
            return invalid("non-finite matrix entry");
        }
        data.push(v);
    }
    Ok(DenseMatrix::from_row_slice(rows, cols, &data))
}

pub fn parse_matrix(text: &str) -> Result<DenseMatrix> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines.next().ok_or_else(|| Error::InvalidInput("empty matrix file".into()))?;
    let mut h = header.split_whitespace();
    let rows = parse_usize(h.next(), "row count")?;
    let cols = parse_usize(h.next(), "column count")?;
    let rest: Vec<&str> = lines.flat_map(|l| l.split_whitespace()).collect();
    if rest.len() != rows * cols {
        return invalid(format!("expected {} values, found {}", rows * cols, rest.len()));
    }
    take_values(&mut rest.into_iter(), rows, cols)
}

pub fn format_point(p: &ManifoldPoint) -> String {
    let mut out = String::new();
    match p {
        ManifoldPoint::FixedRank { b, a } => {
            let _ = writeln!(out, "{} {} {} {}", p.kind(), b.nrows(), a.ncols(), b.ncols());
            push_rows(&mut out, b);
            push_rows(&mut out, a);
        }
        ManifoldPoint::Spd(x) | ManifoldPoint::Stiefel(x) | ManifoldPoint::Grassmann(x) => {
            let _ = writeln!(out, "{} {} {}", p.kind(), x.nrows(), x.ncols());
            push_rows(&mut out, x);
        }
    }
    out
}

pub fn parse_point(text: &str) -> Result<ManifoldPoint> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines.next().ok_or_else(|| Error::InvalidInput("empty point file".into()))?;
    let mut h = header.split_whitespace();
    let kind: ManifoldKind = h.next().ok_or_else(|| Error::InvalidInput("missing kind".into()))?.parse()?;
    let rows = parse_usize(h.next(), "row count")?;
    let cols = parse_usize(h.next(), "column count")?;
    let mut values = lines.flat_map(|l| l.split_whitespace());
    let point = match kind {
        ManifoldKind::FixedRank => {
            let r = parse_usize(h.next(), "rank")?;
            let b = take_values(&mut values, rows, r)?;
            let a = take_values(&mut values, r, cols)?;
            ManifoldPoint::fixed_rank(b, a)?
        }
        ManifoldKind::Spd => ManifoldPoint::spd(take_values(&mut values, rows, cols)?)?,
        ManifoldKind::Stiefel => ManifoldPoint::stiefel(take_values(&mut values, rows, cols)?)?,
        ManifoldKind::Grassmann => ManifoldPoint::grassmann(take_values(&mut values, rows, cols)?)?,
    };
    if values.next().is_some() {
        return invalid("trailing values after point data");
    }
    Ok(point)
}

fn io_err(path: &Path, e: std::io::Error) -> Error {
    Error::InvalidInput(format!("{}: {e}", path.display()))
}

pub fn save_matrix(path: &Path, m: &DenseMatrix) -> Result<()> {
    std::fs::write(path, format_matrix(m)).map_err(|e| io_err(path, e))
}

pub fn load_matrix(path: &Path) -> Result<DenseMatrix> {
    parse_matrix(&std::fs::read_to_string(path).map_err(|e| io_err(path, e))?)
}

pub fn save_point(path: &Path, p: &ManifoldPoint) -> Result<()> {
    std::fs::write(path, format_point(p)).map_err(|e| io_err(path, e))
}

pub fn load_point(path: &Path) -> Result<ManifoldPoint> {
    parse_point(&std::fs::read_to_string(path).map_err(|e| io_err(path, e))?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sample;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn matrix_roundtrip_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let m = sample::gaussian(&mut rng, 4, 3) * 1e-7;
        let text = format_matrix(&m);
        assert!(text.starts_with("4 3\n"));
        assert_eq!(parse_matrix(&text).unwrap(), m);
    }

    #[test]
    fn point_roundtrip() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let pts = vec![
            ManifoldPoint::fixed_rank(sample::gaussian(&mut rng, 5, 2), sample::gaussian(&mut rng, 2, 4)).unwrap(),
            ManifoldPoint::spd(sample::spd(&mut rng, 3)).unwrap(),
            ManifoldPoint::stiefel(sample::orthonormal(&mut rng, 5, 2)).unwrap(),
            ManifoldPoint::grassmann(sample::orthonormal(&mut rng, 4, 1)).unwrap(),
        ];
        for p in pts {
            let text = format_point(&p);
            assert_eq!(parse_point(&text).unwrap(), p);
        }
        assert!(format_point(&ManifoldPoint::spd(DenseMatrix::identity(2, 2)).unwrap()).starts_with("spd 2 2\n"));
    }

    #[test]
    fn malformed_input() {
        assert!(parse_matrix("2 2\n1 2 3").is_err());
        assert!(parse_matrix("").is_err());
        assert!(parse_point("spd 2 2\n1 0 0 -1").is_err());
        assert!(parse_point("torus 1 1\n1").is_err());
    }
}
