//! Sparse coordinate text format for operator matrices.
//!
//! ```text
//! %%matrix coordinate real symmetric
//! 3 3 5
//! 1 1 2.0000000000000000e0
//! ...
//! ```
//!
//! Indices are 1-based. `symmetric` files hold the lower triangle only; `general`
//! files list every stored entry. Repeated coordinates are summed.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::linalg::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Symmetry {
    General,
    Symmetric,
}

impl Symmetry {
    fn keyword(self) -> &'static str {
        match self {
            Symmetry::General => "general",
            Symmetry::Symmetric => "symmetric",
        }
    }
}

pub fn read_matrix(path: &Path) -> Result<Matrix> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_matrix(&text, path)
}

pub fn parse_matrix(text: &str, path: &Path) -> Result<Matrix> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim()));

    let (line_no, header) = lines
        .next()
        .ok_or_else(|| Error::format(path, 1, "empty matrix file"))?;
    let symmetry = parse_header(header).map_err(|m| Error::format(path, line_no, m))?;

    let mut body = lines.filter(|(_, l)| !l.is_empty() && !l.starts_with('%'));
    let (size_line, size) = body
        .next()
        .ok_or_else(|| Error::format(path, line_no + 1, "missing size line"))?;
    let dims: Vec<usize> = size
        .split_whitespace()
        .map(str::parse)
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| Error::format(path, size_line, "size line must be `rows cols nnz`"))?;
    let [rows, cols, nnz] = dims[..] else {
        return Err(Error::format(path, size_line, "size line must be `rows cols nnz`"));
    };
    if symmetry == Symmetry::Symmetric && rows != cols {
        return Err(Error::format(path, size_line, "symmetric matrix must be square"));
    }

    let mut m = Matrix::zeros(rows, cols);
    let mut count = 0usize;
    for (line, entry) in body {
        let fields: Vec<&str> = entry.split_whitespace().collect();
        if fields.len() != 3 {
            return Err(Error::format(path, line, "expected `row col value`"));
        }
        let row: usize = fields[0]
            .parse()
            .map_err(|_| Error::format(path, line, format!("bad row index `{}`", fields[0])))?;
        let col: usize = fields[1]
            .parse()
            .map_err(|_| Error::format(path, line, format!("bad column index `{}`", fields[1])))?;
        let value: f64 = fields[2]
            .parse()
            .map_err(|_| Error::format(path, line, format!("bad value `{}`", fields[2])))?;
        if row == 0 || col == 0 || row > rows || col > cols {
            return Err(Error::format(
                path,
                line,
                format!("index ({row}, {col}) outside {rows}x{cols}"),
            ));
        }
        let (i, j) = (row - 1, col - 1);
        m[(i, j)] += value;
        if symmetry == Symmetry::Symmetric && i != j {
            m[(j, i)] += value;
        }
        count += 1;
    }
    if count != nnz {
        return Err(Error::format(
            path,
            size_line,
            format!("declared {nnz} entries, found {count}"),
        ));
    }
    Ok(m)
}

fn parse_header(header: &str) -> std::result::Result<Symmetry, String> {
    let words: Vec<String> = header.split_whitespace().map(str::to_ascii_lowercase).collect();
    let words: Vec<&str> = words.iter().map(String::as_str).collect();
    let rest = match words.as_slice() {
        ["%%matrix", rest @ ..] => rest,
        ["%%matrixmarket", "matrix", rest @ ..] => rest,
        _ => return Err(format!("unrecognized header `{header}`")),
    };
    match rest {
        ["coordinate", "real", "general"] => Ok(Symmetry::General),
        ["coordinate", "real", "symmetric"] => Ok(Symmetry::Symmetric),
        _ => Err(format!("unsupported matrix kind `{header}`")),
    }
}

pub fn format_matrix(m: &Matrix, symmetry: Symmetry) -> String {
    let mut entries = Vec::new();
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            if symmetry == Symmetry::Symmetric && i < j {
                continue;
            }
            let v = m[(i, j)];
            if v != 0.0 {
                entries.push((i + 1, j + 1, v));
            }
        }
    }
    let mut out = String::new();
    let _ = writeln!(out, "%%matrix coordinate real {}", symmetry.keyword());
    let _ = writeln!(out, "{} {} {}", m.nrows(), m.ncols(), entries.len());
    for (i, j, v) in entries {
        let _ = writeln!(out, "{i} {j} {v:.16e}");
    }
    out
}

pub fn write_matrix(path: &Path, m: &Matrix, symmetry: Symmetry) -> Result<()> {
    fs::write(path, format_matrix(m, symmetry)).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::path::PathBuf;

    fn p() -> PathBuf {
        PathBuf::from("test.mtx")
    }

    #[test]
    fn symmetric_lower_triangle_is_mirrored() {
        let text = "%%matrix coordinate real symmetric\n2 2 3\n1 1 2\n2 1 -1\n2 2 2\n";
        let m = parse_matrix(text, &p()).unwrap();
        assert_eq!(m, Matrix::from_row_slice(2, 2, &[2.0, -1.0, -1.0, 2.0]));
    }

    #[test]
    fn format_error_carries_line_number() {
        let text = "%%matrix coordinate real general\n% comment\n2 2 2\n1 1 1.0\n2 x 1.0\n";
        match parse_matrix(text, &p()) {
            Err(Error::Format { line, .. }) => assert_eq!(line, 5),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn entry_count_checked() {
        let text = "%%matrix coordinate real general\n1 1 2\n1 1 1.0\n";
        assert!(matches!(parse_matrix(text, &p()), Err(Error::Format { .. })));
    }

    #[test]
    fn out_of_range_index_rejected() {
        let text = "%%matrix coordinate real general\n1 1 1\n2 1 1.0\n";
        assert!(matches!(parse_matrix(text, &p()), Err(Error::Format { line: 3, .. })));
    }

    #[test]
    fn writer_emits_full_precision() {
        let m = Matrix::from_row_slice(1, 1, &[0.1]);
        let s = format_matrix(&m, Symmetry::General);
        assert_eq!(s, "%%matrix coordinate real general\n1 1 1\n1 1 1.0000000000000001e-1\n");
        assert_eq!(parse_matrix(&s, &p()).unwrap()[(0, 0)], 0.1);
    }

    #[test]
    fn matrix_market_header_accepted() {
        let text = "%%MatrixMarket matrix coordinate real general\n1 1 1\n1 1 4\n";
        assert_eq!(parse_matrix(text, &p()).unwrap()[(0, 0)], 4.0);
    }
}
