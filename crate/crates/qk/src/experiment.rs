//! Sweep drivers and the matmul-error metric.
//!
//! Quantization quality is measured as the relative Frobenius error of the
//! linear-layer product: `||X*W - Xhat*What||_F / ||X*W||_F`, with `Xhat`
//! and `What` fake-quantized (or otherwise perturbed) versions of the
//! inputs. Sweeps record one row per parameter value and serialize to CSV
//! or JSON with 17-significant-digit numbers, so a re-parse recovers every
//! value exactly.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{remove_by_proportion, removal_count};
use crate::quant::{cross_quantize, fake_quantize, QuantScheme};
use crate::tensor::Matrix;

/// One row of an experiment sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    pub parameter_name: String,
    pub parameter_value: f64,
    pub kernel_proportion: f64,
    pub matmul_rel_error: f64,
    pub scheme: String,
}

/// Output encoding for [`emit_report`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Json,
}

const REPORT_HEADER: &str = "parameter_name,parameter_value,kernel_proportion,matmul_rel_error,scheme";

pub fn matmul(x: &Matrix, w: &Matrix) -> Result<Matrix> {
    if x.cols() != w.rows() {
        return Err(Error::Shape(format!(
            "cannot multiply {}x{} by {}x{}",
            x.rows(),
            x.cols(),
            w.rows(),
            w.cols()
        )));
    }
    let mut out = vec![0.0_f64; x.rows() * w.cols()];
    for i in 0..x.rows() {
        let out_row = &mut out[i * w.cols()..(i + 1) * w.cols()];
        for (k, &a) in x.row(i).iter().enumerate() {
            if a == 0.0 {
                continue;
            }
            for (o, &b) in out_row.iter_mut().zip(w.row(k)) {
                *o += a * b;
            }
        }
    }
    Matrix::new(x.rows(), w.cols(), out)
}

fn frobenius(m: &Matrix) -> f64 {
    m.data().iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn frobenius_diff(a: &Matrix, b: &Matrix) -> f64 {
    a.data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| {
            let d = x - y;
            d * d
        })
        .sum::<f64>()
        .sqrt()
}

/// Relative Frobenius error of `xhat * what` against the reference
/// `x * w`. A zero-norm reference returns 0 when the perturbed product is
/// also zero and a degenerate-baseline error otherwise.
fn relative_product_error(x: &Matrix, w: &Matrix, xhat: &Matrix, what: &Matrix) -> Result<f64> {
    let reference = matmul(x, w)?;
    let perturbed = matmul(xhat, what)?;
    let denominator = frobenius(&reference);
    let numerator = frobenius_diff(&reference, &perturbed);
    if denominator == 0.0 {
        if numerator == 0.0 {
            return Ok(0.0);
        }
        return Err(Error::DegenerateBaseline);
    }
    Ok(numerator / denominator)
}

/// Matmul error with `x` and `w` fake-quantized under the given schemes;
/// `None` leaves that side unquantized.
pub fn matmul_error(
    x: &Matrix,
    w: &Matrix,
    scheme_x: Option<&QuantScheme>,
    scheme_w: Option<&QuantScheme>,
) -> Result<f64> {
    let xhat = match scheme_x {
        Some(s) => fake_quantize(x, s)?,
        None => x.clone(),
    };
    let what = match scheme_w {
        Some(s) => fake_quantize(w, s)?,
        None => w.clone(),
    };
    relative_product_error(x, w, &xhat, &what)
}

fn descriptor(scheme_x: Option<&QuantScheme>, scheme_w: Option<&QuantScheme>) -> String {
    let part = |s: Option<&QuantScheme>| s.map_or("none".to_string(), |s| s.to_string());
    format!("x={} w={}", part(scheme_x), part(scheme_w))
}

/// Cross-quantization sweep over `alphas`: each record holds the kernel
/// proportion of `cross(alpha)` on `x` and the matmul error with the weight
/// scheme applied to `w`. Records keep the input order.
pub fn alpha_sweep(
    x: &Matrix,
    w: &Matrix,
    alphas: &[f64],
    bits_x: u32,
    weight_scheme: Option<&QuantScheme>,
) -> Result<Vec<SweepRecord>> {
    let n = (x.rows() * x.cols()) as f64;
    alphas
        .iter()
        .map(|&alpha| {
            let scheme = QuantScheme::CrossQuant { bits: bits_x, alpha };
            let q = cross_quantize(x, bits_x, alpha)?;
            let zeros = q.codes().iter().filter(|&&c| c == 0).count();
            let err = matmul_error(x, w, Some(&scheme), weight_scheme)?;
            Ok(SweepRecord {
                parameter_name: "alpha".to_string(),
                parameter_value: alpha,
                kernel_proportion: zeros as f64 / n,
                matmul_rel_error: err,
                scheme: descriptor(Some(&scheme), weight_scheme),
            })
        })
        .collect()
}

/// Removal sweep: for each proportion `p`, zero the `floor(p*n)` smallest
/// activations (leaving the rest unquantized), fake-quantize the weights,
/// and record the matmul error.
pub fn removal_sweep(
    x: &Matrix,
    w: &Matrix,
    proportions: &[f64],
    weight_scheme: Option<&QuantScheme>,
) -> Result<Vec<SweepRecord>> {
    let what = match weight_scheme {
        Some(s) => fake_quantize(w, s)?,
        None => w.clone(),
    };
    let n = (x.rows() * x.cols()) as f64;
    proportions
        .iter()
        .map(|&p| {
            let xhat = remove_by_proportion(x, p)?;
            let err = relative_product_error(x, w, &xhat, &what)?;
            Ok(SweepRecord {
                parameter_name: "removal_proportion".to_string(),
                parameter_value: p,
                kernel_proportion: removal_count(p, x.rows(), x.cols()) as f64 / n,
                matmul_rel_error: err,
                scheme: descriptor(None, weight_scheme),
            })
        })
        .collect()
}

/// Error split between zeroing the per-token kernel and full per-token
/// quantization, weights left untouched in both.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RemoveVsQuant {
    pub err_full_quant: f64,
    pub err_remove_only: f64,
    /// `err_remove_only / err_full_quant`; `None` when the full-quant error
    /// is zero.
    pub ratio: Option<f64>,
}

pub fn compare_remove_vs_quant(x: &Matrix, w: &Matrix, bits: u32) -> Result<RemoveVsQuant> {
    let scheme = QuantScheme::PerToken { bits };
    let err_full_quant = matmul_error(x, w, Some(&scheme), None)?;
    let removed = crate::kernel::remove_kernel(x, &scheme)?;
    let err_remove_only = relative_product_error(x, w, &removed, w)?;
    let ratio = if err_full_quant > 0.0 { Some(err_remove_only / err_full_quant) } else { None };
    Ok(RemoveVsQuant { err_full_quant, err_remove_only, ratio })
}

/// Renders records as CSV (header plus one line per record) or a JSON
/// array. All numbers carry 17 significant digits, which round-trips f64
/// exactly.
pub fn render_report(records: &[SweepRecord], format: ReportFormat) -> String {
    match format {
        ReportFormat::Csv => {
            let mut out = String::from(REPORT_HEADER);
            out.push('\n');
            for r in records {
                writeln!(
                    out,
                    "{},{:.16e},{:.16e},{:.16e},{}",
                    r.parameter_name, r.parameter_value, r.kernel_proportion, r.matmul_rel_error, r.scheme
                )
                .expect("writing to a String cannot fail");
            }
            out
        }
        ReportFormat::Json => {
            let mut out = String::from("[");
            for (i, r) in records.iter().enumerate() {
                out.push_str(if i == 0 { "\n" } else { ",\n" });
                write!(
                    out,
                    "  {{\"parameter_name\": {}, \"parameter_value\": {:.16e}, \
                     \"kernel_proportion\": {:.16e}, \"matmul_rel_error\": {:.16e}, \"scheme\": {}}}",
                    serde_json::to_string(&r.parameter_name).expect("string serializes"),
                    r.parameter_value,
                    r.kernel_proportion,
                    r.matmul_rel_error,
                    serde_json::to_string(&r.scheme).expect("string serializes"),
                )
                .expect("writing to a String cannot fail");
            }
            out.push_str("\n]\n");
            out
        }
    }
}

/// Writes [`render_report`] output to a file.
pub fn emit_report(
    records: &[SweepRecord],
    format: ReportFormat,
    path: impl AsRef<Path>,
) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, render_report(records, format)).map_err(|e| Error::io(path, e))
}

/// Parses a report produced by [`render_report`] back into records.
pub fn parse_report(text: &str, format: ReportFormat) -> Result<Vec<SweepRecord>> {
    match format {
        ReportFormat::Csv => {
            let mut lines = text.lines();
            match lines.next() {
                Some(h) if h == REPORT_HEADER => {}
                other => return Err(Error::Format(format!("csv report: bad header {other:?}"))),
            }
            lines
                .map(|line| {
                    let fields: Vec<&str> = line.split(',').collect();
                    if fields.len() != 5 {
                        return Err(Error::Format(format!(
                            "csv report: expected 5 fields, got {} in {line:?}",
                            fields.len()
                        )));
                    }
                    let num = |s: &str| {
                        s.parse::<f64>()
                            .map_err(|_| Error::Format(format!("csv report: bad number {s:?}")))
                    };
                    Ok(SweepRecord {
                        parameter_name: fields[0].to_string(),
                        parameter_value: num(fields[1])?,
                        kernel_proportion: num(fields[2])?,
                        matmul_rel_error: num(fields[3])?,
                        scheme: fields[4].to_string(),
                    })
                })
                .collect()
        }
        ReportFormat::Json => {
            serde_json::from_str(text).map_err(|e| Error::Format(format!("json report: {e}")))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(rows: &[Vec<f64>]) -> Matrix {
        Matrix::from_rows(rows).unwrap()
    }

    const PT8: QuantScheme = QuantScheme::PerToken { bits: 8 };

    #[test]
    fn unquantized_product_has_zero_error() {
        let x = m(&[vec![1.0, 2.0], vec![3.0, 4.0]]);
        let w = m(&[vec![0.5, -1.0], vec![2.0, 0.25]]);
        assert_eq!(matmul_error(&x, &w, None, None).unwrap(), 0.0);
    }

    #[test]
    fn zero_activations_give_zero_error() {
        let x = m(&[vec![0.0, 0.0]]);
        let w = m(&[vec![1.0], vec![2.0]]);
        assert_eq!(matmul_error(&x, &w, Some(&PT8), None).unwrap(), 0.0);
    }

    #[test]
    fn matmul_error_golden_value() {
        let x = m(&[vec![2.0, -1.0, 0.006]]);
        let w = m(&[vec![1.0], vec![1.0], vec![1.0]]);
        let err = matmul_error(&x, &w, Some(&PT8), None).unwrap();
        assert!((err - 0.013791268139196304).abs() <= 1e-12, "err = {err}");
    }

    #[test]
    fn shape_mismatch_is_a_size_error() {
        let x = m(&[vec![1.0, 2.0]]);
        let w = m(&[vec![1.0]]);
        assert!(matches!(matmul_error(&x, &w, None, None), Err(Error::Shape(_))));
    }

    #[test]
    fn zero_reference_with_nonzero_quantized_product_is_degenerate() {
        // X*W = 1 - 1 = 0 exactly, but quantizing -0.5 to -64/127 breaks it
        let x = m(&[vec![1.0, -0.5]]);
        let w = m(&[vec![1.0], vec![2.0]]);
        assert!(matches!(
            matmul_error(&x, &w, Some(&PT8), None),
            Err(Error::DegenerateBaseline)
        ));
    }

    #[test]
    fn alpha_one_record_matches_a_per_token_run() {
        let x = m(&[vec![4.0, -0.03, 1.0], vec![0.2, 5.0, -2.5]]);
        let w = m(&[vec![0.5, 1.0], vec![-0.25, 2.0], vec![1.5, -1.0]]);
        let records = alpha_sweep(&x, &w, &[1.0], 8, None).unwrap();
        assert_eq!(records.len(), 1);
        let direct_err = matmul_error(&x, &w, Some(&PT8), None).unwrap();
        assert_eq!(records[0].matmul_rel_error.to_bits(), direct_err.to_bits());
        let q = crate::quant::per_token_quantize(&x, 8).unwrap();
        let zeros = q.codes().iter().filter(|&&c| c == 0).count();
        assert_eq!(records[0].kernel_proportion, zeros as f64 / 6.0);
    }

    #[test]
    fn empty_sweeps_yield_empty_records() {
        let x = m(&[vec![1.0]]);
        let w = m(&[vec![1.0]]);
        assert!(alpha_sweep(&x, &w, &[], 8, None).unwrap().is_empty());
        assert!(removal_sweep(&x, &w, &[], None).unwrap().is_empty());
    }

    #[test]
    fn removal_sweep_endpoints() {
        let x = m(&[vec![3.0, -1.0], vec![0.5, 2.0]]);
        let w = m(&[vec![1.0, 0.5], vec![-0.5, 2.0]]);
        let records = removal_sweep(&x, &w, &[0.0, 1.0], None).unwrap();
        assert_eq!(records[0].matmul_rel_error, 0.0);
        assert_eq!(records[1].matmul_rel_error, 1.0);
        assert_eq!(records[0].kernel_proportion, 0.0);
        assert_eq!(records[1].kernel_proportion, 1.0);
    }

    #[test]
    fn compare_remove_vs_quant_golden() {
        let x = m(&[vec![2.0, -1.0, 0.006]]);
        let w = m(&[vec![1.0], vec![1.0], vec![1.0]]);
        let r = compare_remove_vs_quant(&x, &w, 8).unwrap();
        assert!((r.err_remove_only - 0.005964214711729627).abs() <= 1e-12);
        assert!((r.err_full_quant - 0.013791268139196304).abs() <= 1e-12);
        let ratio = r.ratio.unwrap();
        assert!((ratio - 0.43246311010215727).abs() <= 1e-9, "ratio = {ratio}");
    }

    #[test]
    fn kernel_free_matrix_has_zero_removal_error() {
        // no kernel member, but 1.7*127/3 = 71.97 rounds inexactly
        let x = m(&[vec![3.0, 1.7], vec![2.0, -2.9]]);
        let w = m(&[vec![1.0, 2.0], vec![0.5, 1.0]]);
        let r = compare_remove_vs_quant(&x, &w, 8).unwrap();
        assert_eq!(r.err_remove_only, 0.0);
        assert!(r.err_full_quant > 0.0);
        assert_eq!(r.ratio, Some(0.0));

        // equal-magnitude matrix: empty kernel and an exact round trip,
        // so the full-quant error itself is zero and the ratio undefined
        let flat = m(&[vec![5.0, -5.0], vec![5.0, 5.0]]);
        let r = compare_remove_vs_quant(&flat, &w, 8).unwrap();
        assert_eq!(r.err_remove_only, 0.0);
        assert_eq!(r.err_full_quant, 0.0);
        assert_eq!(r.ratio, None);
    }

    #[test]
    fn csv_report_round_trips_exactly() {
        let records = vec![SweepRecord {
            parameter_name: "alpha".into(),
            parameter_value: 0.15,
            kernel_proportion: 0.0141,
            matmul_rel_error: 1.3791268139196304e-2,
            scheme: "x=crossquant(bits=8;alpha=0.15) w=none".into(),
        }];
        let text = render_report(&records, ReportFormat::Csv);
        assert!(text.starts_with(REPORT_HEADER));
        let back = parse_report(&text, ReportFormat::Csv).unwrap();
        assert_eq!(back, records);

        let empty = render_report(&[], ReportFormat::Csv);
        assert_eq!(empty, format!("{REPORT_HEADER}\n"));
        assert!(parse_report(&empty, ReportFormat::Csv).unwrap().is_empty());
    }

    #[test]
    fn json_report_round_trips_exactly() {
        let records = vec![
            SweepRecord {
                parameter_name: "removal_proportion".into(),
                parameter_value: 0.05,
                kernel_proportion: 6553.0 / 131072.0,
                matmul_rel_error: 0.007856,
                scheme: "x=none w=per-token(bits=8)".into(),
            },
            SweepRecord {
                parameter_name: "removal_proportion".into(),
                parameter_value: 0.1,
                kernel_proportion: 13107.0 / 131072.0,
                matmul_rel_error: 0.010016,
                scheme: "x=none w=per-token(bits=8)".into(),
            },
        ];
        let text = render_report(&records, ReportFormat::Json);
        let back = parse_report(&text, ReportFormat::Json).unwrap();
        assert_eq!(back, records);
    }
}
