//! Reading and writing dense matrices.
//!
//! Two formats are supported: Matrix Market `array real general` (entries in
//! column-major order, one per line) and headerless CSV (one row per line,
//! `,` delimiter, `.` decimal separator). Writers emit the shortest decimal
//! representation that round-trips exactly.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatrixFormat {
    MatrixMarket,
    Csv,
}

impl MatrixFormat {
    /// Guesses the format from a file extension (`.mtx`/`.mm` vs anything else).
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("mtx") | Some("mm") => MatrixFormat::MatrixMarket,
            _ => MatrixFormat::Csv,
        }
    }
}

pub fn read_matrix(path: &Path, format: MatrixFormat) -> Result<DenseMatrix> {
    let text = std::fs::read_to_string(path)?;
    parse_matrix(&text, format)
}

pub fn write_matrix(path: &Path, format: MatrixFormat, a: &DenseMatrix) -> Result<()> {
    std::fs::write(path, format_matrix(a, format))?;
    Ok(())
}

/// Reads a vector stored as either an `m x 1` or a `1 x m` matrix.
pub fn read_vector(path: &Path, format: MatrixFormat) -> Result<Vec<f64>> {
    let a = read_matrix(path, format)?;
    match (a.rows(), a.cols()) {
        (_, 1) => Ok(a.column(0)),
        (1, _) => Ok(a.row_major()),
        (m, n) => Err(Error::Dimension(format!("expected a vector, found {m}x{n}"))),
    }
}

pub fn parse_matrix(text: &str, format: MatrixFormat) -> Result<DenseMatrix> {
    match format {
        MatrixFormat::MatrixMarket => parse_matrix_market(text),
        MatrixFormat::Csv => parse_csv(text),
    }
}

pub fn format_matrix(a: &DenseMatrix, format: MatrixFormat) -> String {
    match format {
        MatrixFormat::MatrixMarket => to_matrix_market(a),
        MatrixFormat::Csv => to_csv(a),
    }
}

fn parse_value(tok: &str, line: usize) -> Result<f64> {
    let v: f64 = tok.trim().parse().map_err(|_| Error::Parse {
        line,
        message: format!("invalid number {:?}", tok.trim()),
    })?;
    if !v.is_finite() {
        return Err(Error::Parse {
            line,
            message: format!("non-finite value {:?}", tok.trim()),
        });
    }
    Ok(v)
}

pub fn parse_csv(text: &str) -> Result<DenseMatrix> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (k, raw) in text.lines().enumerate() {
        let line = k + 1;
        let raw = raw.trim_end_matches('\r');
        if raw.trim().is_empty() {
            continue;
        }
        let row = raw
            .split(',')
            .map(|tok| parse_value(tok, line))
            .collect::<Result<Vec<_>>>()?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(Error::Parse {
                    line,
                    message: format!("expected {} fields, found {}", first.len(), row.len()),
                });
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::Parse {
            line: 1,
            message: "no data rows".into(),
        });
    }
    DenseMatrix::from_rows(&rows)
}

pub fn to_csv(a: &DenseMatrix) -> String {
    let mut out = String::new();
    for i in 0..a.rows() {
        for j in 0..a.cols() {
            if j > 0 {
                out.push(',');
            }
            write!(out, "{}", a.get(i, j)).unwrap();
        }
        out.push('\n');
    }
    out
}

pub fn parse_matrix_market(text: &str) -> Result<DenseMatrix> {
    let mut lines = text.lines().enumerate().map(|(k, l)| (k + 1, l.trim()));
    let (hline, header) = lines.next().ok_or(Error::Parse {
        line: 1,
        message: "empty file".into(),
    })?;
    let fields: Vec<String> = header.split_whitespace().map(str::to_ascii_lowercase).collect();
    if fields.len() != 5 || fields[0] != "%%matrixmarket" || fields[1] != "matrix" {
        return Err(Error::Parse {
            line: hline,
            message: "missing %%MatrixMarket matrix header".into(),
        });
    }
    if fields[2] != "array" || fields[3] != "real" || fields[4] != "general" {
        return Err(Error::Parse {
            line: hline,
            message: format!(
                "unsupported variant {} {} {}; only array real general",
                fields[2], fields[3], fields[4]
            ),
        });
    }
    let mut body = lines.filter(|(_, l)| !l.is_empty() && !l.starts_with('%'));
    let (sline, size) = body.next().ok_or(Error::Parse {
        line: hline + 1,
        message: "missing size line".into(),
    })?;
    let dims: Vec<&str> = size.split_whitespace().collect();
    let parse_dim = |s: &str| {
        s.parse::<usize>().map_err(|_| Error::Parse {
            line: sline,
            message: format!("invalid dimension {s:?}"),
        })
    };
    if dims.len() != 2 {
        return Err(Error::Parse {
            line: sline,
            message: "size line must contain exactly two integers".into(),
        });
    }
    let (m, n) = (parse_dim(dims[0])?, parse_dim(dims[1])?);
    let expected = m * n;
    let mut colmajor = Vec::with_capacity(expected);
    let mut last_line = sline;
    for (line, l) in body {
        last_line = line;
        if colmajor.len() == expected {
            return Err(Error::Parse {
                line,
                message: format!("more than the {expected} declared entries"),
            });
        }
        let toks: Vec<&str> = l.split_whitespace().collect();
        if toks.len() != 1 {
            return Err(Error::Parse {
                line,
                message: format!("expected one value, found {}", toks.len()),
            });
        }
        colmajor.push(parse_value(toks[0], line)?);
    }
    if colmajor.len() != expected {
        return Err(Error::Parse {
            line: last_line,
            message: format!("found {} entries, header declares {expected}", colmajor.len()),
        });
    }
    let inner = nalgebra::DMatrix::from_column_slice(m, n, &colmajor);
    DenseMatrix::from_dmatrix(inner)
}

pub fn to_matrix_market(a: &DenseMatrix) -> String {
    let mut out = String::from("%%MatrixMarket matrix array real general\n");
    writeln!(out, "{} {}", a.rows(), a.cols()).unwrap();
    for j in 0..a.cols() {
        for i in 0..a.rows() {
            writeln!(out, "{}", a.get(i, j)).unwrap();
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_identity() {
        let a = parse_csv("1,0\n0,1").unwrap();
        assert_eq!(a, DenseMatrix::identity(2));
    }

    #[test]
    fn csv_ragged_row_reports_line() {
        match parse_csv("1,2\n3\n") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn matrix_market_wrong_count() {
        let text = "%%MatrixMarket matrix array real general\n% comment\n2 2\n1\n2\n3\n";
        assert!(matches!(parse_matrix_market(text), Err(Error::Parse { .. })));
    }

    #[test]
    fn matrix_market_column_major() {
        let text = "%%MatrixMarket matrix array real general\n2 2\n1\n2\n3\n4\n";
        let a = parse_matrix_market(text).unwrap();
        assert_eq!(a.get(1, 0), 2.0);
        assert_eq!(a.get(0, 1), 3.0);
    }

    #[test]
    fn matrix_market_rejects_coordinate() {
        let text = "%%MatrixMarket matrix coordinate real general\n2 2 1\n1 1 1.0\n";
        assert!(matches!(parse_matrix_market(text), Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn bad_number() {
        assert!(matches!(parse_csv("1,x\n"), Err(Error::Parse { line: 1, .. })));
    }
}
