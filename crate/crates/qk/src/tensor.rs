//! Dense 2-D matrix type and the QTN1 binary tensor container.
//!
//! QTN1 layout (little-endian throughout):
//!
//! ```text
//! bytes 0-3   magic, ASCII "QTN1"
//! byte  4     dtype code: 0 = f32, 1 = f64
//! byte  5     ndim, must be 2
//! bytes 6-7   zero padding
//! next 16     dims as u64: rows, cols
//! rest        payload, row-major IEEE-754 of the declared dtype
//! ```
//!
//! Trailing bytes after the payload are rejected. CSV files (plain comma-
//! separated numeric rows) are accepted by [`load_tensor`] as a convenience
//! for hand-written fixtures; QTN1 is the canonical interchange format.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"QTN1";
const HEADER_LEN: usize = 8 + 16;

/// On-disk element precision for [`save_tensor`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Precision {
    F32,
    F64,
}

/// Dense row-major matrix of finite `f64` values.
///
/// Invariants, enforced at construction: `rows >= 1`, `cols >= 1`,
/// `data.len() == rows * cols`, and every element is finite. Instances are
/// immutable after construction, so sharing one across threads is safe.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::Config(format!(
                "matrix dimensions must be at least 1x1, got {rows}x{cols}"
            )));
        }
        let expected = rows
            .checked_mul(cols)
            .ok_or_else(|| Error::Shape(format!("element count {rows}x{cols} overflows")))?;
        if data.len() != expected {
            return Err(Error::Shape(format!(
                "data length {} does not match {rows}x{cols} = {expected}",
                data.len()
            )));
        }
        for (idx, &v) in data.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::NonFinite { row: idx / cols, col: idx % cols, value: v });
            }
        }
        Ok(Matrix { rows, cols, data })
    }

    /// Builds a matrix from nested rows; handy in tests and examples.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::Config("matrix must have at least one row".into()));
        }
        let cols = rows[0].len();
        for (i, r) in rows.iter().enumerate() {
            if r.len() != cols {
                return Err(Error::Shape(format!(
                    "row {i} has {} columns, expected {cols}",
                    r.len()
                )));
            }
        }
        Matrix::new(rows.len(), cols, rows.concat())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    /// Row-major element slice.
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        assert!(row < self.rows && col < self.cols, "index ({row}, {col}) out of bounds");
        self.data[row * self.cols + col]
    }

    pub fn row(&self, row: usize) -> &[f64] {
        assert!(row < self.rows, "row {row} out of bounds");
        &self.data[row * self.cols..(row + 1) * self.cols]
    }

    pub fn transposed(&self) -> Matrix {
        let mut data = vec![0.0; self.data.len()];
        for i in 0..self.rows {
            for j in 0..self.cols {
                data[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        Matrix { rows: self.cols, cols: self.rows, data }
    }

    /// Per-row maxima of absolute values (the vector `t`).
    pub fn abs_row_maxima(&self) -> Vec<f64> {
        (0..self.rows)
            .map(|i| self.row(i).iter().fold(0.0_f64, |m, v| m.max(v.abs())))
            .collect()
    }

    /// Per-column maxima of absolute values (the vector `c`).
    pub fn abs_col_maxima(&self) -> Vec<f64> {
        let mut maxima = vec![0.0_f64; self.cols];
        for i in 0..self.rows {
            for (j, v) in self.row(i).iter().enumerate() {
                maxima[j] = maxima[j].max(v.abs());
            }
        }
        maxima
    }
}

/// Loads a matrix from a QTN1 container or, failing the magic check, a CSV
/// of numeric rows. Values are held at f64 regardless of on-disk precision.
pub fn load_tensor(path: impl AsRef<Path>) -> Result<Matrix> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.starts_with(MAGIC) {
        decode_qtn1(&bytes)
    } else {
        parse_csv(&bytes)
    }
}

/// Writes a matrix as a QTN1 container at the requested precision.
///
/// A save at [`Precision::F64`] followed by [`load_tensor`] reproduces the
/// matrix bit-exactly. Saving at f32 narrows each element first; values
/// outside f32 range become infinities on disk and are rejected on load.
pub fn save_tensor(m: &Matrix, path: impl AsRef<Path>, precision: Precision) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_qtn1(m, precision)).map_err(|e| Error::io(path, e))
}

pub(crate) fn encode_qtn1(m: &Matrix, precision: Precision) -> Vec<u8> {
    let elem = match precision {
        Precision::F32 => 4,
        Precision::F64 => 8,
    };
    let mut out = Vec::with_capacity(HEADER_LEN + m.data.len() * elem);
    out.extend_from_slice(MAGIC);
    out.push(match precision {
        Precision::F32 => 0,
        Precision::F64 => 1,
    });
    out.push(2); // ndim
    out.extend_from_slice(&[0, 0]);
    out.extend_from_slice(&(m.rows as u64).to_le_bytes());
    out.extend_from_slice(&(m.cols as u64).to_le_bytes());
    match precision {
        Precision::F32 => {
            for &v in &m.data {
                out.extend_from_slice(&(v as f32).to_le_bytes());
            }
        }
        Precision::F64 => {
            for &v in &m.data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
    }
    out
}

pub(crate) fn decode_qtn1(bytes: &[u8]) -> Result<Matrix> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::Format(format!(
            "header: file is {} bytes, shorter than the {HEADER_LEN}-byte header",
            bytes.len()
        )));
    }
    if &bytes[0..4] != MAGIC {
        return Err(Error::Format(format!("magic: expected \"QTN1\", found {:?}", &bytes[0..4])));
    }
    let dtype = bytes[4];
    if dtype > 1 {
        return Err(Error::Format(format!("dtype: unknown code {dtype} (expected 0=f32 or 1=f64)")));
    }
    if bytes[5] != 2 {
        return Err(Error::Format(format!("ndim: expected 2, found {}", bytes[5])));
    }
    if bytes[6] != 0 || bytes[7] != 0 {
        return Err(Error::Format("padding: bytes 6-7 must be zero".into()));
    }
    let rows = u64::from_le_bytes(bytes[8..16].try_into().unwrap());
    let cols = u64::from_le_bytes(bytes[16..24].try_into().unwrap());
    let (rows, cols) = (
        usize::try_from(rows).map_err(|_| Error::Shape(format!("rows {rows} exceeds usize")))?,
        usize::try_from(cols).map_err(|_| Error::Shape(format!("cols {cols} exceeds usize")))?,
    );
    let count = rows
        .checked_mul(cols)
        .ok_or_else(|| Error::Shape(format!("element count {rows}x{cols} overflows")))?;
    let elem = if dtype == 0 { 4 } else { 8 };
    let expected = count
        .checked_mul(elem)
        .ok_or_else(|| Error::Shape(format!("payload size for {rows}x{cols} overflows")))?;
    let payload = &bytes[HEADER_LEN..];
    if payload.len() < expected {
        return Err(Error::Format(format!(
            "payload: expected {expected} bytes for {rows}x{cols} dtype {dtype}, found {}",
            payload.len()
        )));
    }
    if payload.len() > expected {
        return Err(Error::Format(format!(
            "trailing data: {} bytes after the payload",
            payload.len() - expected
        )));
    }
    let data: Vec<f64> = if dtype == 0 {
        payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect()
    } else {
        payload.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect()
    };
    Matrix::new(rows, cols, data)
}

fn parse_csv(bytes: &[u8]) -> Result<Matrix> {
    let text = std::str::from_utf8(bytes)
        .map_err(|_| Error::Format("csv: file is neither QTN1 nor valid UTF-8 text".into()))?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let mut row = Vec::new();
        for (j, field) in line.split(',').enumerate() {
            let v: f64 = field.trim().parse().map_err(|_| {
                Error::Format(format!("csv: row {i}, field {j}: cannot parse {field:?} as a number"))
            })?;
            if !v.is_finite() {
                return Err(Error::NonFinite { row: rows.len(), col: j, value: v });
            }
            row.push(v);
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::Format("csv: no data rows".into()));
    }
    Matrix::from_rows(&rows)
}
