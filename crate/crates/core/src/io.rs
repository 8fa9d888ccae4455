//! Matrix Market coordinate files.

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use thiserror::Error;

use crate::matrix::{MatrixError, SparseMat, Triple};
use crate::scalar::Scalar;
use crate::semiring::PlusTimes;

pub const MM_HEADER: &str = "%%MatrixMarket matrix coordinate real general";

#[derive(Debug, Error)]
pub enum IoError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("unsupported field type '{0}'")]
    UnsupportedField(String),
    #[error(transparent)]
    Matrix(#[from] MatrixError),
}

fn parse_err(line: usize, message: impl Into<String>) -> IoError {
    IoError::Parse {
        line,
        message: message.into(),
    }
}

#[derive(Clone, Copy, PartialEq)]
enum Symmetry {
    General,
    Symmetric,
    SkewSymmetric,
}

/// Reads a coordinate file. Symmetric storage is expanded, duplicates are
/// summed and `pattern` entries become one.
pub fn read_matrix_market<T: Scalar>(path: impl AsRef<Path>) -> Result<SparseMat<T>, IoError> {
    let reader = BufReader::new(fs::File::open(path)?);
    parse_matrix_market(reader)
}

pub fn parse_matrix_market<T: Scalar>(reader: impl BufRead) -> Result<SparseMat<T>, IoError> {
    let mut lines = reader.lines().enumerate().map(|(i, l)| (i + 1, l));
    let (_, header) = lines.next().ok_or_else(|| parse_err(1, "empty file"))?;
    let header = header?;
    let words: Vec<String> = header.split_whitespace().map(|w| w.to_ascii_lowercase()).collect();
    if words.len() != 5 || words[0] != "%%matrixmarket" || words[1] != "matrix" {
        return Err(parse_err(1, "missing %%MatrixMarket matrix header"));
    }
    if words[2] != "coordinate" {
        return Err(parse_err(1, format!("format '{}' is not coordinate", words[2])));
    }
    let pattern = match words[3].as_str() {
        "real" | "integer" | "double" => false,
        "pattern" => true,
        other => return Err(IoError::UnsupportedField(other.to_string())),
    };
    let symmetry = match words[4].as_str() {
        "general" => Symmetry::General,
        "symmetric" => Symmetry::Symmetric,
        "skew-symmetric" => Symmetry::SkewSymmetric,
        other => return Err(parse_err(1, format!("unsupported symmetry '{other}'"))),
    };

    let mut size = None;
    let mut triples = Vec::new();
    let mut expected = 0usize;
    for (no, line) in lines {
        let line = line?;
        let t = line.trim();
        if t.is_empty() || t.starts_with('%') {
            continue;
        }
        let fields: Vec<&str> = t.split_whitespace().collect();
        let Some((nrows, ncols)) = size else {
            if fields.len() != 3 {
                return Err(parse_err(no, "size line needs rows, columns and entries"));
            }
            let num = |s: &str| s.parse::<usize>().map_err(|e| parse_err(no, format!("bad size '{s}': {e}")));
            size = Some((num(fields[0])?, num(fields[1])?));
            expected = num(fields[2])?;
            triples.reserve(expected);
            continue;
        };
        let want = if pattern { 2 } else { 3 };
        if fields.len() != want {
            return Err(parse_err(no, format!("expected {want} fields, found {}", fields.len())));
        }
        let idx = |s: &str, bound: usize| -> Result<usize, IoError> {
            let v = s.parse::<usize>().map_err(|e| parse_err(no, format!("bad index '{s}': {e}")))?;
            if v == 0 || v > bound {
                return Err(parse_err(no, format!("index {v} outside 1..={bound}")));
            }
            Ok(v - 1)
        };
        let row = idx(fields[0], nrows)?;
        let col = idx(fields[1], ncols)?;
        let val = if pattern {
            T::one()
        } else {
            parse_value::<T>(fields[2]).ok_or_else(|| parse_err(no, format!("bad value '{}'", fields[2])))?
        };
        triples.push(Triple::new(row, col, val));
        if row != col {
            match symmetry {
                Symmetry::General => {}
                Symmetry::Symmetric => triples.push(Triple::new(col, row, val)),
                Symmetry::SkewSymmetric => triples.push(Triple::new(col, row, T::zero() - val)),
            }
        }
    }
    let (nrows, ncols) = size.ok_or_else(|| parse_err(1, "missing size line"))?;
    let stored = if symmetry == Symmetry::General {
        triples.len()
    } else {
        triples.len() - triples.iter().filter(|t| t.row != t.col).count() / 2
    };
    if stored != expected {
        return Err(parse_err(0, format!("header promises {expected} entries, file has {stored}")));
    }
    Ok(SparseMat::from_triples(&triples, nrows, ncols, PlusTimes::<T>::new())?)
}

/// Integer types also accept values written as integral reals such as `3.0`.
fn parse_value<T: Scalar>(s: &str) -> Option<T> {
    s.parse::<T>().ok().or_else(|| {
        let f = s.parse::<f64>().ok()?;
        if T::EXACT && f.fract() != 0.0 {
            return None;
        }
        T::from_f64(f)
    })
}

/// Writes a sorted `real general` coordinate file.
pub fn write_matrix_market<T: Scalar>(m: &SparseMat<T>, path: impl AsRef<Path>) -> Result<(), IoError> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    format_matrix_market(m, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn format_matrix_market<T: Scalar>(m: &SparseMat<T>, w: &mut impl Write) -> Result<(), IoError> {
    let sorted;
    let m = if m.is_sorted() {
        m
    } else {
        sorted = SparseMat::from_triples(&m.triples().collect::<Vec<_>>(), m.nrows(), m.ncols(), PlusTimes::<T>::new())?;
        &sorted
    };
    writeln!(w, "{MM_HEADER}")?;
    writeln!(w, "{} {} {}", m.nrows(), m.ncols(), m.nnz())?;
    // row-major order, the usual reading order for coordinate files
    let t = m.transpose();
    for r in 0..t.ncols() {
        let (cols, vals) = t.col(r);
        for (&c, v) in cols.iter().zip(vals) {
            writeln!(w, "{} {} {}", r + 1, c + 1, v)?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gen::gen_rect;

    fn parse<T: Scalar>(s: &str) -> Result<SparseMat<T>, IoError> {
        parse_matrix_market(s.as_bytes())
    }

    #[test]
    fn identity_file() {
        let m: SparseMat<i64> = parse(&format!("{MM_HEADER}\n% comment\n3 3 3\n1 1 1\n2 2 1\n3 3 1\n")).unwrap();
        assert_eq!(m, SparseMat::identity(3));
    }

    #[test]
    fn symmetric_expansion() {
        let m: SparseMat<i64> = parse("%%MatrixMarket matrix coordinate integer symmetric\n3 3 2\n2 1 5\n3 3 7\n").unwrap();
        let t: Vec<_> = m.triples().map(|t| (t.row, t.col, t.val)).collect();
        assert_eq!(t, vec![(1, 0, 5), (0, 1, 5), (2, 2, 7)]);
    }

    #[test]
    fn pattern_and_duplicates() {
        let m: SparseMat<i64> = parse("%%MatrixMarket matrix coordinate pattern general\n2 2 3\n1 2\n1 2\n2 1\n").unwrap();
        let t: Vec<_> = m.triples().map(|t| (t.row, t.col, t.val)).collect();
        assert_eq!(t, vec![(1, 0, 1), (0, 1, 2)]);
    }

    #[test]
    fn errors_carry_line_numbers() {
        let e = parse::<i64>(&format!("{MM_HEADER}\n2 2 2\n1 1 1\n3 1 1\n")).unwrap_err();
        assert!(matches!(e, IoError::Parse { line: 4, .. }), "{e}");
        let e = parse::<i64>(&format!("{MM_HEADER}\n2 2 1\n1 x 1\n")).unwrap_err();
        assert!(matches!(e, IoError::Parse { line: 3, .. }));
        let e = parse::<i64>(&format!("{MM_HEADER}\n2 2 1\n1 1 1.5\n")).unwrap_err();
        assert!(matches!(e, IoError::Parse { line: 3, .. }));
        let e = parse::<f64>("%%MatrixMarket matrix coordinate complex general\n1 1 1\n1 1 1 0\n").unwrap_err();
        assert!(matches!(e, IoError::UnsupportedField(f) if f == "complex"));
        assert!(parse::<f64>("hello\n").is_err());
        assert!(parse::<f64>(&format!("{MM_HEADER}\n2 2 2\n1 1 1\n")).is_err());
    }

    #[test]
    fn empty_and_tiny_writes() {
        let mut out = Vec::new();
        format_matrix_market(&SparseMat::<i64>::empty(3, 2), &mut out).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), format!("{MM_HEADER}\n3 2 0\n"));
        let one: SparseMat<i64> = SparseMat::identity(1);
        let mut out = Vec::new();
        format_matrix_market(&one, &mut out).unwrap();
        assert_eq!(String::from_utf8(out.clone()).unwrap(), format!("{MM_HEADER}\n1 1 1\n1 1 1\n"));
        assert_eq!(parse::<i64>(std::str::from_utf8(&out).unwrap()).unwrap(), one);
    }

    #[test]
    fn round_trips_through_files() {
        let dir = tempfile::tempdir().unwrap();
        for seed in 0..50u64 {
            let m: SparseMat<i64> = gen_rect(1 + (seed as usize % 13), 1 + (seed as usize * 7 % 11), 0.3, seed).unwrap();
            let path = dir.path().join(format!("m{seed}.mtx"));
            write_matrix_market(&m, &path).unwrap();
            assert_eq!(read_matrix_market::<i64>(&path).unwrap(), m);
        }
        let f: SparseMat<f64> = gen_rect(9, 9, 0.4, 1).unwrap().map_values(|v: f64| v / 7.0);
        let path = dir.path().join("f.mtx");
        write_matrix_market(&f, &path).unwrap();
        assert_eq!(read_matrix_market::<f64>(&path).unwrap(), f);
    }
}
