//! Matrix Market (dense array and sparse coordinate) reading and writing,
//! plus plain-text vectors. Values are written in shortest round-trip form.

use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum IoError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("unsupported Matrix Market header: {0}")]
    Header(String),
}

fn parse_err(line: usize, message: impl Into<String>) -> IoError {
    IoError::Parse { line, message: message.into() }
}

pub fn write_matrix_market<W: Write>(mut w: W, a: &DMatrix<f64>) -> Result<(), IoError> {
    writeln!(w, "%%MatrixMarket matrix array real general")?;
    writeln!(w, "{} {}", a.nrows(), a.ncols())?;
    for v in a.iter() {
        writeln!(w, "{v}")?;
    }
    Ok(())
}

/// Sparse coordinate output; exact zeros are omitted.
pub fn write_matrix_market_coordinate<W: Write>(mut w: W, a: &DMatrix<f64>) -> Result<(), IoError> {
    let nnz = a.iter().filter(|v| **v != 0.0).count();
    writeln!(w, "%%MatrixMarket matrix coordinate real general")?;
    writeln!(w, "{} {} {nnz}", a.nrows(), a.ncols())?;
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            let v = a[(i, j)];
            if v != 0.0 {
                writeln!(w, "{} {} {v}", i + 1, j + 1)?;
            }
        }
    }
    Ok(())
}

#[derive(Clone, Copy, PartialEq)]
enum Symmetry {
    General,
    Symmetric,
    SkewSymmetric,
}

/// Reads `real`/`integer` matrices in `array` or `coordinate` format with
/// `general`, `symmetric` or `skew-symmetric` storage.
pub fn read_matrix_market<R: Read>(r: R) -> Result<DMatrix<f64>, IoError> {
    let mut lines = BufReader::new(r).lines().enumerate();
    let (_, header) = lines.next().ok_or_else(|| IoError::Header("empty input".into()))?;
    let header = header?;
    let fields: Vec<String> = header.split_whitespace().map(|s| s.to_ascii_lowercase()).collect();
    if fields.len() != 5 || fields[0] != "%%matrixmarket" || fields[1] != "matrix" {
        return Err(IoError::Header(header));
    }
    let coordinate = match fields[2].as_str() {
        "array" => false,
        "coordinate" => true,
        _ => return Err(IoError::Header(header)),
    };
    if fields[3] != "real" && fields[3] != "integer" && fields[3] != "double" {
        return Err(IoError::Header(header));
    }
    let symmetry = match fields[4].as_str() {
        "general" => Symmetry::General,
        "symmetric" => Symmetry::Symmetric,
        "skew-symmetric" => Symmetry::SkewSymmetric,
        _ => return Err(IoError::Header(header)),
    };

    let mut data = lines.filter_map(|(i, l)| match l {
        Ok(text) => {
            let t = text.trim().to_string();
            if t.is_empty() || t.starts_with('%') {
                None
            } else {
                Some(Ok((i + 1, t)))
            }
        }
        Err(e) => Some(Err(e)),
    });
    let (size_line, size) = data.next().ok_or_else(|| parse_err(0, "missing size line"))??;
    let dims: Vec<usize> = size
        .split_whitespace()
        .map(|t| t.parse().map_err(|_| parse_err(size_line, format!("bad size entry {t:?}"))))
        .collect::<Result<_, _>>()?;
    let number = |line: usize, t: &str| t.parse::<f64>().map_err(|_| parse_err(line, format!("bad number {t:?}")));

    if coordinate {
        if dims.len() != 3 {
            return Err(parse_err(size_line, "coordinate size line needs rows, columns and entries"));
        }
        let (m, n, nnz) = (dims[0], dims[1], dims[2]);
        let mut a = DMatrix::zeros(m, n);
        let mut count = 0;
        for item in data {
            let (line, text) = item?;
            let toks: Vec<&str> = text.split_whitespace().collect();
            if toks.len() != 3 {
                return Err(parse_err(line, "coordinate entry needs row, column and value"));
            }
            let i: usize = toks[0].parse().map_err(|_| parse_err(line, "bad row index"))?;
            let j: usize = toks[1].parse().map_err(|_| parse_err(line, "bad column index"))?;
            if i == 0 || j == 0 || i > m || j > n {
                return Err(parse_err(line, format!("index ({i}, {j}) outside {m}x{n}")));
            }
            let v = number(line, toks[2])?;
            a[(i - 1, j - 1)] += v;
            if i != j {
                match symmetry {
                    Symmetry::Symmetric => a[(j - 1, i - 1)] += v,
                    Symmetry::SkewSymmetric => a[(j - 1, i - 1)] -= v,
                    Symmetry::General => {}
                }
            }
            count += 1;
        }
        if count != nnz {
            return Err(parse_err(size_line, format!("expected {nnz} entries, found {count}")));
        }
        Ok(a)
    } else {
        if dims.len() != 2 {
            return Err(parse_err(size_line, "array size line needs rows and columns"));
        }
        let (m, n) = (dims[0], dims[1]);
        let mut values = Vec::with_capacity(m * n);
        for item in data {
            let (line, text) = item?;
            for t in text.split_whitespace() {
                values.push(number(line, t)?);
            }
        }
        if symmetry == Symmetry::General {
            if values.len() != m * n {
                return Err(parse_err(size_line, format!("expected {} values, found {}", m * n, values.len())));
            }
            return Ok(DMatrix::from_vec(m, n, values));
        }
        // Packed lower triangle, column by column.
        let mut a = DMatrix::zeros(m, n);
        let mut it = values.into_iter();
        let skew = symmetry == Symmetry::SkewSymmetric;
        for j in 0..n {
            let start = if skew { j + 1 } else { j };
            for i in start..m {
                let v = it.next().ok_or_else(|| parse_err(size_line, "too few packed values"))?;
                a[(i, j)] = v;
                a[(j, i)] = if skew { -v } else { v };
            }
        }
        Ok(a)
    }
}

pub fn load_matrix(path: &Path) -> Result<DMatrix<f64>, IoError> {
    read_matrix_market(fs::File::open(path)?)
}

pub fn save_matrix(path: &Path, a: &DMatrix<f64>) -> Result<(), IoError> {
    let mut w = std::io::BufWriter::new(fs::File::create(path)?);
    write_matrix_market(&mut w, a)?;
    w.flush()?;
    Ok(())
}

/// Reads a vector from whitespace-separated numbers, or from a one-column
/// Matrix Market file.
pub fn read_vector<R: Read>(mut r: R) -> Result<DVector<f64>, IoError> {
    let mut text = String::new();
    r.read_to_string(&mut text)?;
    if text.trim_start().starts_with("%%MatrixMarket") {
        let a = read_matrix_market(text.as_bytes())?;
        if a.ncols() != 1 {
            return Err(parse_err(2, format!("expected one column, found {}", a.ncols())));
        }
        return Ok(a.column(0).into_owned());
    }
    let mut values = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') || t.starts_with('%') {
            continue;
        }
        for tok in t.split_whitespace() {
            values.push(tok.parse::<f64>().map_err(|_| parse_err(i + 1, format!("bad number {tok:?}")))?);
        }
    }
    Ok(DVector::from_vec(values))
}

pub fn write_vector<W: Write>(mut w: W, v: &DVector<f64>) -> Result<(), IoError> {
    for x in v.iter() {
        writeln!(w, "{x}")?;
    }
    Ok(())
}

pub fn load_vector(path: &Path) -> Result<DVector<f64>, IoError> {
    read_vector(fs::File::open(path)?)
}

pub fn save_vector(path: &Path, v: &DVector<f64>) -> Result<(), IoError> {
    let mut w = std::io::BufWriter::new(fs::File::create(path)?);
    write_vector(&mut w, v)?;
    w.flush()?;
    Ok(())
}
