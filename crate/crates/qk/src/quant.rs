//! Symmetric integer quantizers: per-token, per-channel, group-wise, and
//! cross quantization, plus exact dequantization and one-shot fake
//! quantization.
//!
//! All schemes map an element to `round(x / s * q_max)` with
//! `q_max = 2^(N-1) - 1` and a scheme-specific scale `s`:
//!
//! * per-token / per-channel: `s = t_i`, the absolute maximum of row `i`;
//! * group-wise: `s` is the absolute maximum of the element's group after
//!   reshaping the matrix row-major into groups of `g` elements;
//! * cross: `s = t_i^alpha * c_j^(1-alpha)`, mixing the row maximum with the
//!   column maximum `c_j`.
//!
//! Rounding is half-away-from-zero. No clipping is applied anywhere: the
//! scale construction guarantees `|code| <= q_max`, and a violation would be
//! an internal error. A zero scale (zero row, zero column, or zero group)
//! short-circuits to zero codes and dequantizes to exact zeros.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{decode_qtn1, Matrix, Precision};

const MIN_BITS: u32 = 2;
const MAX_BITS: u32 = 32;

/// Largest code magnitude for an `N`-bit symmetric quantizer.
pub fn q_max(bits: u32) -> f64 {
    ((1_i64 << (bits - 1)) - 1) as f64
}

fn check_bits(bits: u32) -> Result<()> {
    if !(MIN_BITS..=MAX_BITS).contains(&bits) {
        return Err(Error::Config(format!("bit-width must be in {MIN_BITS}..={MAX_BITS}, got {bits}")));
    }
    Ok(())
}

/// Quantization scheme selector with its parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum QuantScheme {
    PerToken { bits: u32 },
    PerChannel { bits: u32 },
    #[serde(rename = "group")]
    GroupWise { bits: u32, group_size: usize },
    #[serde(rename = "crossquant")]
    CrossQuant { bits: u32, alpha: f64 },
}

impl QuantScheme {
    pub fn bits(&self) -> u32 {
        match *self {
            QuantScheme::PerToken { bits }
            | QuantScheme::PerChannel { bits }
            | QuantScheme::GroupWise { bits, .. }
            | QuantScheme::CrossQuant { bits, .. } => bits,
        }
    }

    pub fn alpha(&self) -> Option<f64> {
        match *self {
            QuantScheme::CrossQuant { alpha, .. } => Some(alpha),
            _ => None,
        }
    }

    pub fn group_size(&self) -> Option<usize> {
        match *self {
            QuantScheme::GroupWise { group_size, .. } => Some(group_size),
            _ => None,
        }
    }

    /// Scheme name as used by the CLI and report files.
    pub fn name(&self) -> &'static str {
        match self {
            QuantScheme::PerToken { .. } => "per-token",
            QuantScheme::PerChannel { .. } => "per-channel",
            QuantScheme::GroupWise { .. } => "group",
            QuantScheme::CrossQuant { .. } => "crossquant",
        }
    }

    pub fn validate(&self) -> Result<()> {
        check_bits(self.bits())?;
        match *self {
            QuantScheme::CrossQuant { alpha, .. } => {
                if !(0.0..=1.0).contains(&alpha) {
                    return Err(Error::Config(format!("alpha must lie in [0, 1], got {alpha}")));
                }
            }
            QuantScheme::GroupWise { group_size, .. } => {
                if group_size == 0 {
                    return Err(Error::Config("group size must be positive".into()));
                }
            }
            _ => {}
        }
        Ok(())
    }
}

impl fmt::Display for QuantScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            QuantScheme::PerToken { bits } => write!(f, "per-token(bits={bits})"),
            QuantScheme::PerChannel { bits } => write!(f, "per-channel(bits={bits})"),
            QuantScheme::GroupWise { bits, group_size } => {
                write!(f, "group(bits={bits};g={group_size})")
            }
            QuantScheme::CrossQuant { bits, alpha } => {
                write!(f, "crossquant(bits={bits};alpha={alpha})")
            }
        }
    }
}

/// Integer codes plus the scale metadata needed for exact dequantization.
///
/// For group-wise quantization the code matrix is the reshaped
/// `(rows*cols/g) x g` layout and `row_scales` holds one group maximum per
/// reshaped row; `original_shape` remembers the source layout so
/// [`QuantizedTensor::dequantize`] can restore it.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantizedTensor {
    codes: Vec<i32>,
    code_rows: usize,
    code_cols: usize,
    scheme: QuantScheme,
    row_scales: Vec<f64>,
    col_scales: Vec<f64>,
    original_shape: (usize, usize),
}

impl QuantizedTensor {
    pub fn codes(&self) -> &[i32] {
        &self.codes
    }

    /// Shape of the code matrix (reshaped layout for group-wise).
    pub fn code_shape(&self) -> (usize, usize) {
        (self.code_rows, self.code_cols)
    }

    pub fn scheme(&self) -> &QuantScheme {
        &self.scheme
    }

    /// Per-row absolute maxima `t` (per-group maxima for group-wise).
    pub fn row_scales(&self) -> &[f64] {
        &self.row_scales
    }

    /// Per-column absolute maxima `c`; empty unless the scheme is cross.
    pub fn col_scales(&self) -> &[f64] {
        &self.col_scales
    }

    pub fn original_shape(&self) -> (usize, usize) {
        self.original_shape
    }

    pub fn code_at(&self, row: usize, col: usize) -> i32 {
        self.codes[row * self.code_cols + col]
    }

    /// Reconstructs `codes * delta` with the per-scheme step
    /// `delta = s / q_max`; zero-scale rows, columns, and groups come back
    /// as exact zeros, and group-wise output is reshaped to the original
    /// layout.
    pub fn dequantize(&self) -> Matrix {
        let qm = q_max(self.scheme.bits());
        let (rows, cols) = self.original_shape;
        let mut out = vec![0.0_f64; self.codes.len()];
        match self.scheme {
            QuantScheme::PerToken { .. } | QuantScheme::PerChannel { .. } | QuantScheme::GroupWise { .. } => {
                for (r, &scale) in self.row_scales.iter().enumerate() {
                    if scale == 0.0 {
                        continue;
                    }
                    let delta = scale / qm;
                    for c in 0..self.code_cols {
                        let idx = r * self.code_cols + c;
                        out[idx] = self.codes[idx] as f64 * delta;
                    }
                }
            }
            QuantScheme::CrossQuant { alpha, .. } => {
                let scales = CrossScales::new(&self.row_scales, &self.col_scales, alpha);
                for r in 0..self.code_rows {
                    for c in 0..self.code_cols {
                        let s = scales.at(r, c);
                        if s == 0.0 {
                            continue;
                        }
                        let idx = r * self.code_cols + c;
                        out[idx] = self.codes[idx] as f64 * (s / qm);
                    }
                }
            }
        }
        // Codes are bounded by q_max and scales are finite, so every product
        // is finite and the constructor cannot fail.
        Matrix::new(rows, cols, out).expect("dequantized values are finite")
    }
}

/// Element scales for cross quantization.
///
/// `alpha = 1` and `alpha = 0` bypass `powf` entirely so that degeneration
/// to per-token (resp. per-column) quantization is bitwise, not merely
/// up-to-rounding.
struct CrossScales {
    row_pow: Vec<f64>,
    col_pow: Vec<f64>,
}

impl CrossScales {
    fn new(t: &[f64], c: &[f64], alpha: f64) -> Self {
        let (row_pow, col_pow) = if alpha == 1.0 {
            (t.to_vec(), vec![1.0; c.len()])
        } else if alpha == 0.0 {
            (vec![1.0; t.len()], c.to_vec())
        } else {
            (
                t.iter().map(|&v| v.powf(alpha)).collect(),
                c.iter().map(|&v| v.powf(1.0 - alpha)).collect(),
            )
        };
        CrossScales { row_pow, col_pow }
    }

    fn at(&self, row: usize, col: usize) -> f64 {
        self.row_pow[row] * self.col_pow[col]
    }
}

fn encode(value: f64, scale: f64, qm: f64) -> i32 {
    if scale == 0.0 {
        return 0;
    }
    let code = (value / scale * qm).round();
    assert!(
        code.abs() <= qm,
        "internal error: code {code} exceeds q_max {qm} (value {value}, scale {scale})"
    );
    code as i32
}

fn quantize_rows(data: &[f64], rows: usize, cols: usize, bits: u32) -> (Vec<i32>, Vec<f64>) {
    let qm = q_max(bits);
    let mut codes = vec![0_i32; data.len()];
    let mut scales = vec![0.0_f64; rows];
    for r in 0..rows {
        let row = &data[r * cols..(r + 1) * cols];
        let t = row.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        scales[r] = t;
        if t == 0.0 {
            continue;
        }
        for (c, &v) in row.iter().enumerate() {
            codes[r * cols + c] = encode(v, t, qm);
        }
    }
    (codes, scales)
}

/// Quantizes each row of an activation matrix against its absolute maximum.
pub fn per_token_quantize(x: &Matrix, bits: u32) -> Result<QuantizedTensor> {
    check_bits(bits)?;
    let (codes, row_scales) = quantize_rows(x.data(), x.rows(), x.cols(), bits);
    Ok(QuantizedTensor {
        codes,
        code_rows: x.rows(),
        code_cols: x.cols(),
        scheme: QuantScheme::PerToken { bits },
        row_scales,
        col_scales: Vec::new(),
        original_shape: (x.rows(), x.cols()),
    })
}

/// Row-wise symmetric quantization of a weight matrix. The computation is
/// identical to [`per_token_quantize`]; the two are distinct operations
/// because they play different roles (activations vs weights).
pub fn per_channel_quantize(w: &Matrix, bits: u32) -> Result<QuantizedTensor> {
    check_bits(bits)?;
    let q = per_token_quantize(w, bits)?;
    Ok(QuantizedTensor { scheme: QuantScheme::PerChannel { bits }, ..q })
}

/// Reshapes the matrix row-major into `(rows*cols/g) x g` groups and
/// quantizes each group against its own absolute maximum.
pub fn group_wise_quantize(w: &Matrix, bits: u32, group_size: usize) -> Result<QuantizedTensor> {
    check_bits(bits)?;
    if group_size == 0 {
        return Err(Error::Config("group size must be positive".into()));
    }
    let n = w.rows() * w.cols();
    if n % group_size != 0 {
        return Err(Error::Config(format!(
            "group size {group_size} does not divide the {} x {} element count {n}",
            w.rows(),
            w.cols()
        )));
    }
    let groups = n / group_size;
    let (codes, row_scales) = quantize_rows(w.data(), groups, group_size, bits);
    Ok(QuantizedTensor {
        codes,
        code_rows: groups,
        code_cols: group_size,
        scheme: QuantScheme::GroupWise { bits, group_size },
        row_scales,
        col_scales: Vec::new(),
        original_shape: (w.rows(), w.cols()),
    })
}

/// Quantizes each element against `t_i^alpha * c_j^(1-alpha)`, the mix of
/// its row and column absolute maxima.
pub fn cross_quantize(x: &Matrix, bits: u32, alpha: f64) -> Result<QuantizedTensor> {
    let scheme = QuantScheme::CrossQuant { bits, alpha };
    scheme.validate()?;
    let qm = q_max(bits);
    let t = x.abs_row_maxima();
    let c = x.abs_col_maxima();
    let scales = CrossScales::new(&t, &c, alpha);
    let mut codes = vec![0_i32; x.rows() * x.cols()];
    for r in 0..x.rows() {
        for (col, &v) in x.row(r).iter().enumerate() {
            codes[r * x.cols() + col] = encode(v, scales.at(r, col), qm);
        }
    }
    Ok(QuantizedTensor {
        codes,
        code_rows: x.rows(),
        code_cols: x.cols(),
        scheme,
        row_scales: t,
        col_scales: c,
        original_shape: (x.rows(), x.cols()),
    })
}

/// Applies the scheme named by `scheme` to `m`.
pub fn quantize(m: &Matrix, scheme: &QuantScheme) -> Result<QuantizedTensor> {
    match *scheme {
        QuantScheme::PerToken { bits } => per_token_quantize(m, bits),
        QuantScheme::PerChannel { bits } => per_channel_quantize(m, bits),
        QuantScheme::GroupWise { bits, group_size } => group_wise_quantize(m, bits, group_size),
        QuantScheme::CrossQuant { bits, alpha } => cross_quantize(m, bits, alpha),
    }
}

/// Quantize-then-dequantize in one call; exactly equals
/// `quantize(m, scheme)?.dequantize()`.
pub fn fake_quantize(m: &Matrix, scheme: &QuantScheme) -> Result<Matrix> {
    Ok(quantize(m, scheme)?.dequantize())
}

#[derive(Serialize, Deserialize)]
struct Sidecar {
    scheme: String,
    bits: u32,
    alpha: Option<f64>,
    group_size: Option<usize>,
    original_shape: [usize; 2],
    row_scales: Vec<f64>,
    col_scales: Vec<f64>,
}

/// Writes the codes as a QTN1 container (f64 payload of integer values) and
/// the scheme, shape, and scale vectors as a JSON sidecar.
pub fn save_quantized(
    q: &QuantizedTensor,
    codes_path: impl AsRef<Path>,
    sidecar_path: impl AsRef<Path>,
) -> Result<()> {
    let codes = Matrix::new(
        q.code_rows,
        q.code_cols,
        q.codes.iter().map(|&c| c as f64).collect(),
    )?;
    crate::tensor::save_tensor(&codes, codes_path, Precision::F64)?;
    let sidecar = Sidecar {
        scheme: q.scheme.name().to_string(),
        bits: q.scheme.bits(),
        alpha: q.scheme.alpha(),
        group_size: q.scheme.group_size(),
        original_shape: [q.original_shape.0, q.original_shape.1],
        row_scales: q.row_scales.clone(),
        col_scales: q.col_scales.clone(),
    };
    let text = serde_json::to_string_pretty(&sidecar).expect("sidecar serializes");
    let path = sidecar_path.as_ref();
    std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

/// Reloads a quantized tensor written by [`save_quantized`].
pub fn load_quantized(
    codes_path: impl AsRef<Path>,
    sidecar_path: impl AsRef<Path>,
) -> Result<QuantizedTensor> {
    let path = sidecar_path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let sidecar: Sidecar =
        serde_json::from_str(&text).map_err(|e| Error::Format(format!("sidecar: {e}")))?;
    let scheme = match sidecar.scheme.as_str() {
        "per-token" => QuantScheme::PerToken { bits: sidecar.bits },
        "per-channel" => QuantScheme::PerChannel { bits: sidecar.bits },
        "group" => QuantScheme::GroupWise {
            bits: sidecar.bits,
            group_size: sidecar
                .group_size
                .ok_or_else(|| Error::Format("sidecar: group scheme lacks group_size".into()))?,
        },
        "crossquant" => QuantScheme::CrossQuant {
            bits: sidecar.bits,
            alpha: sidecar
                .alpha
                .ok_or_else(|| Error::Format("sidecar: crossquant scheme lacks alpha".into()))?,
        },
        other => return Err(Error::Format(format!("sidecar: unknown scheme {other:?}"))),
    };
    scheme.validate()?;

    let bytes = std::fs::read(codes_path.as_ref()).map_err(|e| Error::io(codes_path.as_ref(), e))?;
    let code_matrix = decode_qtn1(&bytes)?;
    let qm = q_max(scheme.bits());
    let mut codes = Vec::with_capacity(code_matrix.data().len());
    for (idx, &v) in code_matrix.data().iter().enumerate() {
        if v.fract() != 0.0 || v.abs() > qm {
            return Err(Error::Format(format!(
                "codes: element {v} at flat index {idx} is not an integer in [-{qm}, {qm}]"
            )));
        }
        codes.push(v as i32);
    }
    let (rows, cols) = (sidecar.original_shape[0], sidecar.original_shape[1]);
    if rows * cols != codes.len() {
        return Err(Error::Shape(format!(
            "sidecar shape {rows}x{cols} does not match {} codes",
            codes.len()
        )));
    }
    if sidecar.row_scales.len() != code_matrix.rows() {
        return Err(Error::Shape(format!(
            "{} row scales for {} code rows",
            sidecar.row_scales.len(),
            code_matrix.rows()
        )));
    }
    let col_scales_expected =
        if matches!(scheme, QuantScheme::CrossQuant { .. }) { code_matrix.cols() } else { 0 };
    if sidecar.col_scales.len() != col_scales_expected {
        return Err(Error::Shape(format!(
            "{} column scales, expected {col_scales_expected}",
            sidecar.col_scales.len()
        )));
    }
    if sidecar.row_scales.iter().chain(&sidecar.col_scales).any(|&s| !(s >= 0.0) || !s.is_finite()) {
        return Err(Error::Format("scales must be finite and non-negative".into()));
    }
    Ok(QuantizedTensor {
        codes,
        code_rows: code_matrix.rows(),
        code_cols: code_matrix.cols(),
        scheme,
        row_scales: sidecar.row_scales,
        col_scales: sidecar.col_scales,
        original_shape: (rows, cols),
    })
}
