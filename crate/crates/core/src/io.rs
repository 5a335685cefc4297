//! Matrix file formats: plain CSV rows and JSON `{"rho": [[...]]}`.
//! Writers emit 17 significant digits so a write/read cycle reproduces every
//! f64 bit-exactly.

use nalgebra::DMatrix;

use crate::error::Error;

fn parse_err(msg: impl Into<String>) -> Error {
    Error::InvalidConfig(msg.into())
}

/// Parses comma-separated rows, one matrix row per line. Blank lines are
/// skipped.
pub fn read_matrix_csv(text: &str) -> Result<DMatrix<f64>, Error> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let row: Result<Vec<f64>, Error> = line
            .split(',')
            .map(|tok| {
                tok.trim()
                    .parse::<f64>()
                    .map_err(|_| parse_err(format!("line {}: bad number {:?}", lineno + 1, tok)))
            })
            .collect();
        rows.push(row?);
    }
    matrix_from_rows(rows)
}

/// Parses `{"rho": [[...], ...]}`.
pub fn read_matrix_json(text: &str) -> Result<DMatrix<f64>, Error> {
    #[derive(serde::Deserialize)]
    struct Wrapper {
        rho: Vec<Vec<f64>>,
    }
    let w: Wrapper =
        serde_json::from_str(text).map_err(|e| parse_err(format!("bad matrix JSON: {e}")))?;
    matrix_from_rows(w.rho)
}

/// Reads either format, sniffing JSON from a leading brace.
pub fn read_matrix_auto(text: &str) -> Result<DMatrix<f64>, Error> {
    if text.trim_start().starts_with('{') {
        read_matrix_json(text)
    } else {
        read_matrix_csv(text)
    }
}

fn matrix_from_rows(rows: Vec<Vec<f64>>) -> Result<DMatrix<f64>, Error> {
    let n = rows.len();
    if n == 0 {
        return Err(parse_err("empty matrix"));
    }
    for (i, row) in rows.iter().enumerate() {
        if row.len() != n {
            return Err(parse_err(format!(
                "row {} has {} entries, expected {n}",
                i + 1,
                row.len()
            )));
        }
    }
    Ok(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
}

/// One f64 at 17 significant digits; round-trips bit-exactly through parse.
fn fmt17(x: f64) -> String {
    format!("{x:.16e}")
}

/// Renders CSV rows at 17 significant digits.
pub fn write_matrix_csv(m: &DMatrix<f64>) -> String {
    let mut out = String::new();
    for i in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols()).map(|j| fmt17(m[(i, j)])).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

/// Renders `{"rho": [[...]]}` at 17 significant digits.
pub fn write_matrix_json(m: &DMatrix<f64>) -> String {
    let mut out = String::from("{\"rho\": [\n");
    for i in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols()).map(|j| fmt17(m[(i, j)])).collect();
        out.push_str("  [");
        out.push_str(&row.join(", "));
        out.push(']');
        if i + 1 < m.nrows() {
            out.push(',');
        }
        out.push('\n');
    }
    out.push_str("]}\n");
    out
}
