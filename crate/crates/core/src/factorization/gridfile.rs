//! Plain-text grid files for wave-function samples.
//!
//! Format (`#` starts a comment anywhere, blank lines ignored):
//!
//! ```text
//! redlab-grid 1
//! ndims 2
//! field real            # or: complex
//! axis 0 16 0.0 1.0     # axis index, node count, min, max
//! axis 1 12 -1.0 1.0
//! values
//! 0.25 -0.5 ...         # row-major, whitespace separated;
//!                       # complex values are "re im" pairs
//! ```

use super::{Axis, FactorizationError, GriddedFunction};
use num_complex::Complex64;
use thiserror::Error;

pub const FORMAT_NAME: &str = "redlab-grid";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum GridFileError {
    #[error("missing or malformed header line; expected `{FORMAT_NAME} {FORMAT_VERSION}`")]
    BadHeader,
    #[error("unsupported format version {0}")]
    UnsupportedVersion(u32),
    #[error("line {line}: expected `{expected}`, got `{got}`")]
    Malformed { line: usize, expected: &'static str, got: String },
    #[error("line {line}: cannot parse number `{token}`")]
    BadNumber { line: usize, token: String },
    #[error("ndims must be 2 or 3, got {0}")]
    BadNdims(usize),
    #[error("field must be `real` or `complex`, got `{0}`")]
    BadField(String),
    #[error("axis {0} declared more than once or out of order")]
    AxisOrder(usize),
    #[error("expected {expected} numbers in the values block, got {got}")]
    ValueCount { expected: usize, got: usize },
    #[error(transparent)]
    Grid(#[from] FactorizationError),
}

/// Parsed grid file: sample values are either real or complex.
#[derive(Debug, Clone)]
pub enum GridData {
    Real(GriddedFunction<f64>),
    Complex(GriddedFunction<Complex64>),
}

impl GridData {
    pub fn ndim(&self) -> usize {
        match self {
            GridData::Real(g) => g.ndim(),
            GridData::Complex(g) => g.ndim(),
        }
    }
}

fn strip_comment(line: &str) -> &str {
    match line.find('#') {
        Some(pos) => &line[..pos],
        None => line,
    }
}

pub fn read_grid(text: &str) -> Result<GridData, GridFileError> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(no, line)| (no + 1, strip_comment(line).trim()))
        .filter(|(_, line)| !line.is_empty());

    let (line_no, header) = lines.next().ok_or(GridFileError::BadHeader)?;
    let mut parts = header.split_whitespace();
    if parts.next() != Some(FORMAT_NAME) {
        return Err(GridFileError::BadHeader);
    }
    let version: u32 = parse_token(line_no, parts.next().unwrap_or(""))?;
    if version != FORMAT_VERSION {
        return Err(GridFileError::UnsupportedVersion(version));
    }

    let (line_no, ndims_line) = lines.next().ok_or(GridFileError::BadHeader)?;
    let ndims: usize = parse_keyed(line_no, ndims_line, "ndims")?;
    if !(2..=3).contains(&ndims) {
        return Err(GridFileError::BadNdims(ndims));
    }

    let (line_no, field_line) = lines.next().ok_or(GridFileError::BadHeader)?;
    let field = match field_line.strip_prefix("field") {
        Some(rest) => rest.trim().to_string(),
        None => {
            return Err(GridFileError::Malformed {
                line: line_no,
                expected: "field real|complex",
                got: field_line.to_string(),
            })
        }
    };
    let complex = match field.as_str() {
        "real" => false,
        "complex" => true,
        other => return Err(GridFileError::BadField(other.to_string())),
    };

    let mut axes = Vec::with_capacity(ndims);
    for expected_index in 0..ndims {
        let (line_no, axis_line) = lines.next().ok_or(GridFileError::BadHeader)?;
        let tokens: Vec<&str> = axis_line.split_whitespace().collect();
        if tokens.len() != 5 || tokens[0] != "axis" {
            return Err(GridFileError::Malformed {
                line: line_no,
                expected: "axis <index> <count> <min> <max>",
                got: axis_line.to_string(),
            });
        }
        let index: usize = parse_token(line_no, tokens[1])?;
        if index != expected_index {
            return Err(GridFileError::AxisOrder(index));
        }
        let count: usize = parse_token(line_no, tokens[2])?;
        let min: f64 = parse_token(line_no, tokens[3])?;
        let max: f64 = parse_token(line_no, tokens[4])?;
        axes.push(Axis::uniform(min, max, count)?);
    }

    let (line_no, marker) = lines.next().ok_or(GridFileError::BadHeader)?;
    if marker != "values" {
        return Err(GridFileError::Malformed {
            line: line_no,
            expected: "values",
            got: marker.to_string(),
        });
    }

    let mut numbers: Vec<f64> = Vec::new();
    for (line_no, line) in lines {
        for token in line.split_whitespace() {
            numbers.push(parse_token(line_no, token)?);
        }
    }
    let points: usize = axes.iter().map(Axis::len).product();
    let expected = if complex { 2 * points } else { points };
    if numbers.len() != expected {
        return Err(GridFileError::ValueCount { expected, got: numbers.len() });
    }

    if complex {
        let values: Vec<Complex64> =
            numbers.chunks_exact(2).map(|c| Complex64::new(c[0], c[1])).collect();
        Ok(GridData::Complex(GriddedFunction::new(axes, values)?))
    } else {
        Ok(GridData::Real(GriddedFunction::new(axes, numbers)?))
    }
}

fn parse_keyed<T: std::str::FromStr>(
    line: usize,
    text: &str,
    key: &'static str,
) -> Result<T, GridFileError> {
    let rest = text.strip_prefix(key).ok_or(GridFileError::Malformed {
        line,
        expected: key,
        got: text.to_string(),
    })?;
    parse_token(line, rest.trim())
}

fn parse_token<T: std::str::FromStr>(line: usize, token: &str) -> Result<T, GridFileError> {
    token.parse().map_err(|_| GridFileError::BadNumber { line, token: token.to_string() })
}

fn write_header(out: &mut String, ndims: usize, field: &str, axes: &[&Axis]) {
    out.push_str(&format!("{FORMAT_NAME} {FORMAT_VERSION}\n"));
    out.push_str(&format!("ndims {ndims}\n"));
    out.push_str(&format!("field {field}\n"));
    for (i, axis) in axes.iter().enumerate() {
        out.push_str(&format!("axis {i} {} {} {}\n", axis.len(), axis.min(), axis.max()));
    }
    out.push_str("values\n");
}

pub fn write_grid_real(psi: &GriddedFunction<f64>) -> String {
    let axes: Vec<&Axis> = (0..psi.ndim()).map(|i| psi.axis(i)).collect();
    let mut out = String::new();
    write_header(&mut out, psi.ndim(), "real", &axes);
    for v in psi.values() {
        out.push_str(&format!("{v}\n"));
    }
    out
}

pub fn write_grid_complex(psi: &GriddedFunction<Complex64>) -> String {
    let axes: Vec<&Axis> = (0..psi.ndim()).map(|i| psi.axis(i)).collect();
    let mut out = String::new();
    write_header(&mut out, psi.ndim(), "complex", &axes);
    for v in psi.values() {
        out.push_str(&format!("{} {}\n", v.re, v.im));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn real_roundtrip() {
        let a = Axis::uniform(0.0, 1.0, 4).unwrap();
        let b = Axis::uniform(-2.0, 2.0, 3).unwrap();
        let psi = GriddedFunction::from_fn2(a, b, |x, y| x * y + 0.25).unwrap();
        let text = write_grid_real(&psi);
        match read_grid(&text).unwrap() {
            GridData::Real(back) => assert_eq!(back, psi),
            GridData::Complex(_) => panic!("expected real"),
        }
    }

    #[test]
    fn complex_roundtrip_with_comments() {
        let a = Axis::uniform(0.0, 1.0, 3).unwrap();
        let psi = GriddedFunction::from_fn2(a.clone(), a, |x, y| Complex64::new(x, y - 0.5)).unwrap();
        let mut text = write_grid_complex(&psi);
        text.insert_str(0, "# produced by a test\n");
        match read_grid(&text).unwrap() {
            GridData::Complex(back) => assert_eq!(back, psi),
            GridData::Real(_) => panic!("expected complex"),
        }
    }

    #[test]
    fn three_axis_roundtrip() {
        let a = Axis::uniform(0.0, 1.0, 3).unwrap();
        let psi =
            GriddedFunction::from_fn3(a.clone(), a.clone(), a, |x, y, z| x + 2.0 * y - z).unwrap();
        let text = write_grid_real(&psi);
        match read_grid(&text).unwrap() {
            GridData::Real(back) => assert_eq!(back, psi),
            GridData::Complex(_) => panic!("expected real"),
        }
    }

    #[test]
    fn malformed_inputs_are_rejected() {
        assert!(matches!(read_grid(""), Err(GridFileError::BadHeader)));
        assert!(matches!(read_grid("wrong 1\n"), Err(GridFileError::BadHeader)));
        assert!(matches!(
            read_grid("redlab-grid 9\nndims 2\n"),
            Err(GridFileError::UnsupportedVersion(9))
        ));
        let bad_ndims = "redlab-grid 1\nndims 4\nfield real\n";
        assert!(matches!(read_grid(bad_ndims), Err(GridFileError::BadNdims(4))));
        let bad_field = "redlab-grid 1\nndims 2\nfield quaternion\n";
        assert!(matches!(read_grid(bad_field), Err(GridFileError::BadField(_))));
        let bad_count = "redlab-grid 1\nndims 2\nfield real\naxis 0 2 0 1\naxis 1 2 0 1\nvalues\n1 2 3\n";
        assert!(matches!(
            read_grid(bad_count),
            Err(GridFileError::ValueCount { expected: 4, got: 3 })
        ));
        let bad_axis = "redlab-grid 1\nndims 2\nfield real\naxis 1 2 0 1\n";
        assert!(matches!(read_grid(bad_axis), Err(GridFileError::AxisOrder(1))));
    }
}
