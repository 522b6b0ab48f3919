//! Matrix Market coordinate I/O for symmetric operators.
//!
//! Reads `matrix coordinate real|integer general|symmetric` files
//! (case-insensitive header, `%` comments and blank lines skipped) and
//! rejects everything else. Symmetric files must store the lower triangle
//! only; off-diagonal entries are mirrored. Duplicate entries are summed.
//! General files are validated for exact symmetry on construction.
//!
//! The writer emits the general form with both triangles and full-precision
//! values, so a write/read round trip reproduces the operator bitwise.

use crate::error::{Error, Result};
use crate::operators::SpsdOperator;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

fn parse_err(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse { line, msg: msg.into() }
}

struct Header {
    symmetric: bool,
}

fn parse_header(line_no: usize, line: &str) -> Result<Header> {
    let lower = line.to_ascii_lowercase();
    let tokens: Vec<&str> = lower.split_whitespace().collect();
    if tokens.len() != 5 || tokens[0] != "%%matrixmarket" {
        return Err(parse_err(line_no, "expected '%%MatrixMarket matrix coordinate <field> <symmetry>'"));
    }
    if tokens[1] != "matrix" {
        return Err(parse_err(line_no, format!("unsupported object '{}'", tokens[1])));
    }
    if tokens[2] != "coordinate" {
        return Err(parse_err(line_no, format!("unsupported format '{}', only coordinate", tokens[2])));
    }
    if !matches!(tokens[3], "real" | "integer") {
        return Err(parse_err(line_no, format!("unsupported field '{}', only real or integer", tokens[3])));
    }
    let symmetric = match tokens[4] {
        "general" => false,
        "symmetric" => true,
        other => {
            return Err(parse_err(line_no, format!("unsupported symmetry '{other}', only general or symmetric")));
        }
    };
    Ok(Header { symmetric })
}

pub fn read_operator(reader: impl BufRead) -> Result<SpsdOperator> {
    let mut lines = reader.lines().enumerate();
    let (line_no, first) = match lines.next() {
        Some((idx, line)) => (idx + 1, line?),
        None => return Err(parse_err(1, "empty file")),
    };
    let header = parse_header(line_no, &first)?;

    let mut size: Option<(usize, usize)> = None; // (n, nnz)
    let mut triplets: Vec<(usize, usize, f64)> = Vec::new();
    for (idx, line) in lines {
        let line_no = idx + 1;
        let line = line?;
        let body = line.trim();
        if body.is_empty() || body.starts_with('%') {
            continue;
        }
        match size {
            None => {
                let fields: Vec<&str> = body.split_whitespace().collect();
                if fields.len() != 3 {
                    return Err(parse_err(line_no, "size line must be 'rows cols nnz'"));
                }
                let rows: usize = fields[0]
                    .parse()
                    .map_err(|_| parse_err(line_no, format!("bad row count '{}'", fields[0])))?;
                let cols: usize = fields[1]
                    .parse()
                    .map_err(|_| parse_err(line_no, format!("bad column count '{}'", fields[1])))?;
                let nnz: usize = fields[2]
                    .parse()
                    .map_err(|_| parse_err(line_no, format!("bad entry count '{}'", fields[2])))?;
                if rows != cols {
                    return Err(parse_err(line_no, format!("matrix must be square, got {rows} x {cols}")));
                }
                if rows == 0 {
                    return Err(parse_err(line_no, "matrix order must be positive"));
                }
                size = Some((rows, nnz));
                triplets.reserve(if header.symmetric { 2 * nnz } else { nnz });
            }
            Some((n, nnz)) => {
                if triplets_stored(&triplets, header.symmetric) == nnz {
                    return Err(parse_err(line_no, format!("more than the declared {nnz} entries")));
                }
                let fields: Vec<&str> = body.split_whitespace().collect();
                if fields.len() != 3 {
                    return Err(parse_err(line_no, "entry line must be 'i j value'"));
                }
                let i: usize = fields[0]
                    .parse()
                    .map_err(|_| parse_err(line_no, format!("bad row index '{}'", fields[0])))?;
                let j: usize = fields[1]
                    .parse()
                    .map_err(|_| parse_err(line_no, format!("bad column index '{}'", fields[1])))?;
                let v: f64 = fields[2]
                    .parse()
                    .map_err(|_| parse_err(line_no, format!("bad value '{}'", fields[2])))?;
                if i < 1 || i > n || j < 1 || j > n {
                    return Err(parse_err(line_no, format!("index ({i}, {j}) outside 1..={n}")));
                }
                if !v.is_finite() {
                    return Err(parse_err(line_no, format!("non-finite value {v}")));
                }
                if header.symmetric && j > i {
                    return Err(parse_err(
                        line_no,
                        format!("symmetric file must store the lower triangle, got ({i}, {j})"),
                    ));
                }
                triplets.push((i - 1, j - 1, v));
                if header.symmetric && i != j {
                    triplets.push((j - 1, i - 1, v));
                }
            }
        }
    }
    let (n, nnz) = size.ok_or_else(|| parse_err(0, "missing size line"))?;
    let stored = triplets_stored(&triplets, header.symmetric);
    if stored != nnz {
        return Err(parse_err(0, format!("declared {nnz} entries but found {stored}")));
    }
    SpsdOperator::from_triplets(n, &triplets)
}

/// Number of file entries represented so far (mirrored off-diagonals count
/// once).
fn triplets_stored(triplets: &[(usize, usize, f64)], symmetric: bool) -> usize {
    if !symmetric {
        return triplets.len();
    }
    triplets.iter().filter(|(i, j, _)| i >= j).count()
}

pub fn read_operator_path(path: impl AsRef<Path>) -> Result<SpsdOperator> {
    let file = std::fs::File::open(path)?;
    read_operator(BufReader::new(file))
}

/// Writes the general coordinate form with both triangles; values keep full
/// precision so reading the file back reproduces the operator bitwise.
pub fn write_operator(mut w: impl Write, op: &SpsdOperator) -> Result<()> {
    let n = op.order();
    let mut entries: Vec<(usize, usize, f64)> = Vec::new();
    for j in 0..n {
        let col = op.column(j);
        for (i, &v) in col.iter().enumerate() {
            if v != 0.0 {
                entries.push((i, j, v));
            }
        }
    }
    writeln!(w, "%%MatrixMarket matrix coordinate real general")?;
    writeln!(w, "{n} {n} {}", entries.len())?;
    for (i, j, v) in entries {
        writeln!(w, "{} {} {:.16e}", i + 1, j + 1, v)?;
    }
    Ok(())
}

pub fn write_operator_path(path: impl AsRef<Path>, op: &SpsdOperator) -> Result<()> {
    let file = std::fs::File::create(path)?;
    let mut buf = std::io::BufWriter::new(file);
    write_operator(&mut buf, op)?;
    buf.flush()?;
    Ok(())
}
