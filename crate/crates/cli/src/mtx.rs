//! Matrix Market reader for dense real matrices (coordinate and array formats).

use std::path::Path;

use nalgebra::DMatrix;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MtxError {
    #[error("cannot read {0}: {1}")]
    Io(String, std::io::Error),
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },
}

#[derive(Clone, Copy, PartialEq)]
enum Symmetry {
    General,
    Symmetric,
    Skew,
}

fn syntax(line: usize, msg: impl Into<String>) -> MtxError {
    MtxError::Syntax { line, msg: msg.into() }
}

pub fn read_matrix_market(path: &Path) -> Result<DMatrix<f64>, MtxError> {
    let text = std::fs::read_to_string(path).map_err(|e| MtxError::Io(path.display().to_string(), e))?;
    parse_matrix_market(&text)
}

pub fn parse_matrix_market(text: &str) -> Result<DMatrix<f64>, MtxError> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim()));
    let (_, banner) = lines.next().ok_or_else(|| syntax(1, "empty file"))?;
    let head: Vec<String> = banner.split_whitespace().map(|s| s.to_ascii_lowercase()).collect();
    if head.len() != 5 || head[0] != "%%matrixmarket" || head[1] != "matrix" {
        return Err(syntax(1, "expected '%%MatrixMarket matrix <format> <field> <symmetry>'"));
    }
    let coordinate = match head[2].as_str() {
        "coordinate" => true,
        "array" => false,
        other => return Err(syntax(1, format!("unsupported format '{other}'"))),
    };
    if !matches!(head[3].as_str(), "real" | "integer" | "double") {
        return Err(syntax(1, format!("unsupported field '{}'", head[3])));
    }
    let sym = match head[4].as_str() {
        "general" => Symmetry::General,
        "symmetric" => Symmetry::Symmetric,
        "skew-symmetric" => Symmetry::Skew,
        other => return Err(syntax(1, format!("unsupported symmetry '{other}'"))),
    };

    let mut body = lines.filter(|(_, l)| !l.is_empty() && !l.starts_with('%'));
    let (size_line, size) = body.next().ok_or_else(|| syntax(1, "missing size line"))?;
    let dims: Vec<usize> = size
        .split_whitespace()
        .map(|t| t.parse().map_err(|_| syntax(size_line, format!("bad size entry '{t}'"))))
        .collect::<Result<_, _>>()?;
    let (rows, cols) = match (coordinate, dims.as_slice()) {
        (true, [r, c, _]) | (false, [r, c]) => (*r, *c),
        _ => return Err(syntax(size_line, "wrong number of size entries")),
    };
    if sym != Symmetry::General && rows != cols {
        return Err(syntax(size_line, "symmetric storage needs a square matrix"));
    }
    let mut a = DMatrix::zeros(rows, cols);
    let mut put = |line: usize, i: usize, j: usize, v: f64| -> Result<(), MtxError> {
        if i >= rows || j >= cols {
            return Err(syntax(line, format!("entry ({}, {}) outside {rows}x{cols}", i + 1, j + 1)));
        }
        a[(i, j)] = v;
        match sym {
            Symmetry::General => {}
            Symmetry::Symmetric => a[(j, i)] = v,
            Symmetry::Skew => a[(j, i)] = -v,
        }
        Ok(())
    };
    let number = |line: usize, t: &str| t.parse::<f64>().map_err(|_| syntax(line, format!("bad number '{t}'")));

    if coordinate {
        let nnz = dims[2];
        let mut seen = 0;
        for (line, l) in body {
            let t: Vec<&str> = l.split_whitespace().collect();
            if t.len() != 3 {
                return Err(syntax(line, "expected 'row col value'"));
            }
            let i: usize = t[0].parse().map_err(|_| syntax(line, format!("bad row index '{}'", t[0])))?;
            let j: usize = t[1].parse().map_err(|_| syntax(line, format!("bad column index '{}'", t[1])))?;
            if i == 0 || j == 0 {
                return Err(syntax(line, "indices are 1-based"));
            }
            put(line, i - 1, j - 1, number(line, t[2])?)?;
            seen += 1;
        }
        if seen != nnz {
            return Err(syntax(size_line, format!("declared {nnz} entries, found {seen}")));
        }
    } else {
        // column-major; symmetric storage lists the lower triangle only
        let mut slots = Vec::new();
        for j in 0..cols {
            let first = match sym {
                Symmetry::General => 0,
                Symmetry::Symmetric => j,
                Symmetry::Skew => j + 1,
            };
            for i in first..rows {
                slots.push((i, j));
            }
        }
        let mut k = 0;
        for (line, l) in body {
            for t in l.split_whitespace() {
                let &(i, j) = slots.get(k).ok_or_else(|| syntax(line, "more values than the declared size"))?;
                put(line, i, j, number(line, t)?)?;
                k += 1;
            }
        }
        if k != slots.len() {
            return Err(syntax(size_line, format!("expected {} values, found {k}", slots.len())));
        }
    }
    Ok(a)
}
