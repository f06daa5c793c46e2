//! Quantization-kernel analysis: which elements does a scheme map to code
//! zero, how large is that set, and what happens when it is zeroed directly.
//!
//! The kernel of a quantization function is the set of elements quantized
//! to integer code 0. Under half-away rounding an element is in the kernel
//! exactly when its magnitude is below the zero bound `B = 0.5 * delta`
//! (or its scale is zero). [`kernel_mask`] is defined by the code-zero
//! characterization; the bound predicate is exposed via [`zero_bound`] and
//! the two agree on every corpus we test.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::quant::{q_max, quantize, QuantScheme};
use crate::tensor::Matrix;

/// Dense boolean matrix, row-major; `true` marks a kernel member.
#[derive(Debug, Clone, PartialEq)]
pub struct BoolMatrix {
    rows: usize,
    cols: usize,
    data: Vec<bool>,
}

impl BoolMatrix {
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[bool] {
        &self.data
    }

    pub fn get(&self, row: usize, col: usize) -> bool {
        self.data[row * self.cols + col]
    }

    pub fn count_true(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    /// 0.0/1.0 representation, e.g. for dumping as a QTN1 container.
    pub fn to_matrix(&self) -> Matrix {
        let data = self.data.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
        Matrix::new(self.rows, self.cols, data).expect("mask values are finite")
    }
}

/// Kernel statistics for one matrix under one scheme.
#[derive(Debug, Clone)]
pub struct KernelReport {
    pub scheme: QuantScheme,
    pub mask: BoolMatrix,
    /// Fraction of all elements quantized to code 0 (exact zeros included).
    pub kernel_proportion: f64,
    /// Fraction of all elements that are kernel members with `|x| > 0`.
    pub nonzero_kernel_proportion: f64,
    /// Fraction of (i, j) pairs with `c_j >= t_i`.
    pub frac_c_ge_t: f64,
    /// Fraction of (i, j) pairs whose cross zero bound is strictly below the
    /// per-token one at equal bit-width; `None` unless the scheme is cross.
    pub frac_btilde_lt_b: Option<f64>,
}

/// Serializable view of a [`KernelReport`], mask omitted.
#[derive(Debug, Clone, Serialize)]
pub struct ReportSummary {
    pub scheme: String,
    pub bits: u32,
    pub alpha: Option<f64>,
    pub kernel_proportion: f64,
    pub nonzero_kernel_proportion: f64,
    pub frac_c_ge_t: f64,
    #[serde(rename = "frac_Btilde_lt_B")]
    pub frac_btilde_lt_b: Option<f64>,
    pub rows: usize,
    pub cols: usize,
}

impl KernelReport {
    pub fn rows(&self) -> usize {
        self.mask.rows()
    }

    pub fn cols(&self) -> usize {
        self.mask.cols()
    }

    pub fn summary(&self) -> ReportSummary {
        ReportSummary {
            scheme: self.scheme.name().to_string(),
            bits: self.scheme.bits(),
            alpha: self.scheme.alpha(),
            kernel_proportion: self.kernel_proportion,
            nonzero_kernel_proportion: self.nonzero_kernel_proportion,
            frac_c_ge_t: self.frac_c_ge_t,
            frac_btilde_lt_b: self.frac_btilde_lt_b,
            rows: self.rows(),
            cols: self.cols(),
        }
    }

    /// Report as pretty-printed JSON (mask omitted; dump it separately).
    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(&self.summary()).expect("report serializes")
    }
}

fn check_supported(scheme: &QuantScheme) -> Result<()> {
    scheme.validate()?;
    match scheme {
        QuantScheme::PerToken { .. } | QuantScheme::CrossQuant { .. } => Ok(()),
        other => Err(Error::Config(format!(
            "kernel analysis supports per-token and crossquant, not {}",
            other.name()
        ))),
    }
}

/// Per-element zero bound `B = 0.5 * delta`; entries with zero scale get
/// bound 0. Supports per-token and cross schemes.
pub fn zero_bound(x: &Matrix, scheme: &QuantScheme) -> Result<Matrix> {
    check_supported(scheme)?;
    let qm = q_max(scheme.bits());
    let t = x.abs_row_maxima();
    let mut bounds = vec![0.0_f64; x.rows() * x.cols()];
    match *scheme {
        QuantScheme::PerToken { .. } => {
            for (i, &ti) in t.iter().enumerate() {
                let b = 0.5 * (ti / qm);
                for j in 0..x.cols() {
                    bounds[i * x.cols() + j] = b;
                }
            }
        }
        QuantScheme::CrossQuant { alpha, .. } => {
            let c = x.abs_col_maxima();
            let scales = cross_scale_parts(&t, &c, alpha);
            for i in 0..x.rows() {
                for j in 0..x.cols() {
                    let s = scales.0[i] * scales.1[j];
                    bounds[i * x.cols() + j] = 0.5 * (s / qm);
                }
            }
        }
        _ => unreachable!(),
    }
    Matrix::new(x.rows(), x.cols(), bounds)
}

// Same alpha special-casing as the quantizer, so bounds match codes.
fn cross_scale_parts(t: &[f64], c: &[f64], alpha: f64) -> (Vec<f64>, Vec<f64>) {
    if alpha == 1.0 {
        (t.to_vec(), vec![1.0; c.len()])
    } else if alpha == 0.0 {
        (vec![1.0; t.len()], c.to_vec())
    } else {
        (
            t.iter().map(|&v| v.powf(alpha)).collect(),
            c.iter().map(|&v| v.powf(1.0 - alpha)).collect(),
        )
    }
}

/// Boolean kernel membership: `true` where the scheme's code is 0.
pub fn kernel_mask(x: &Matrix, scheme: &QuantScheme) -> Result<BoolMatrix> {
    check_supported(scheme)?;
    let q = quantize(x, scheme)?;
    Ok(BoolMatrix {
        rows: x.rows(),
        cols: x.cols(),
        data: q.codes().iter().map(|&c| c == 0).collect(),
    })
}

/// Computes the full kernel report for a per-token or cross scheme.
///
/// `frac_Btilde_lt_B` compares the unnormalized scale numerators
/// (`t_i^alpha * c_j^(1-alpha)` against `t_i`) rather than the divided
/// bounds, and treats `c_j == t_i` as exact equality (the mixed numerator
/// equals `t_i` in real arithmetic, so `powf` noise must not count it).
pub fn analyze_kernel(x: &Matrix, scheme: &QuantScheme) -> Result<KernelReport> {
    let mask = kernel_mask(x, scheme)?;
    let n = (x.rows() * x.cols()) as f64;
    let kernel_count = mask.count_true();
    let nonzero_kernel_count = mask
        .data()
        .iter()
        .zip(x.data())
        .filter(|&(&in_kernel, &v)| in_kernel && v != 0.0)
        .count();

    let t = x.abs_row_maxima();
    let c = x.abs_col_maxima();
    let mut c_ge_t = 0_usize;
    for &ti in &t {
        c_ge_t += c.iter().filter(|&&cj| cj >= ti).count();
    }

    let frac_btilde_lt_b = match *scheme {
        QuantScheme::CrossQuant { alpha, .. } => {
            let (tp, cp) = cross_scale_parts(&t, &c, alpha);
            let mut lt = 0_usize;
            for (i, &ti) in t.iter().enumerate() {
                for (j, &cj) in c.iter().enumerate() {
                    let numerator = if cj == ti { ti } else { tp[i] * cp[j] };
                    if numerator < ti {
                        lt += 1;
                    }
                }
            }
            Some(lt as f64 / n)
        }
        _ => None,
    };

    Ok(KernelReport {
        scheme: scheme.clone(),
        kernel_proportion: kernel_count as f64 / n,
        nonzero_kernel_proportion: nonzero_kernel_count as f64 / n,
        frac_c_ge_t: c_ge_t as f64 / n,
        frac_btilde_lt_b,
        mask,
    })
}

/// Copy of `x` with every kernel element set to exactly 0; all other
/// elements pass through untouched.
pub fn remove_kernel(x: &Matrix, scheme: &QuantScheme) -> Result<Matrix> {
    let mask = kernel_mask(x, scheme)?;
    let data = x
        .data()
        .iter()
        .zip(mask.data())
        .map(|(&v, &in_kernel)| if in_kernel { 0.0 } else { v })
        .collect();
    Matrix::new(x.rows(), x.cols(), data)
}

/// Zeroes exactly `floor(p * rows * cols)` elements of smallest absolute
/// value, breaking magnitude ties by ascending row-major index.
pub fn remove_by_proportion(x: &Matrix, p: f64) -> Result<Matrix> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::Config(format!("proportion must lie in [0, 1], got {p}")));
    }
    let n = x.rows() * x.cols();
    let k = ((p * n as f64).floor() as usize).min(n);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_unstable_by(|&a, &b| {
        x.data()[a]
            .abs()
            .partial_cmp(&x.data()[b].abs())
            .expect("matrix elements are finite")
            .then(a.cmp(&b))
    });
    let mut data = x.data().to_vec();
    for &idx in &order[..k] {
        data[idx] = 0.0;
    }
    Matrix::new(x.rows(), x.cols(), data)
}

/// Number of elements [`remove_by_proportion`] zeroes for a given `p`.
pub fn removal_count(p: f64, rows: usize, cols: usize) -> usize {
    let n = rows * cols;
    ((p * n as f64).floor() as usize).min(n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quant::per_token_quantize;

    fn m(rows: &[Vec<f64>]) -> Matrix {
        Matrix::from_rows(rows).unwrap()
    }

    const PT8: QuantScheme = QuantScheme::PerToken { bits: 8 };

    #[test]
    fn zero_bound_per_token_golden() {
        let x = m(&[vec![2.0, -1.0, 0.006]]);
        let b = zero_bound(&x, &PT8).unwrap();
        // 0.5 * 2 / 127
        assert_eq!(b.data(), [0.007874015748031496; 3]);
    }

    #[test]
    fn zero_bound_of_zero_matrix_is_zero() {
        let x = m(&[vec![0.0, 0.0], vec![0.0, 0.0]]);
        let b = zero_bound(&x, &PT8).unwrap();
        assert_eq!(b.data(), [0.0; 4]);
    }

    #[test]
    fn cross_bounds_at_alpha_one_equal_per_token_bounds() {
        let x = m(&[vec![3.0, -0.5], vec![0.25, 4.0]]);
        let cross = zero_bound(&x, &QuantScheme::CrossQuant { bits: 8, alpha: 1.0 }).unwrap();
        let pt = zero_bound(&x, &PT8).unwrap();
        let bits = |mm: &Matrix| mm.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&cross), bits(&pt));
    }

    #[test]
    fn unsupported_schemes_are_rejected() {
        let x = m(&[vec![1.0]]);
        let per_channel = QuantScheme::PerChannel { bits: 8 };
        assert!(matches!(zero_bound(&x, &per_channel), Err(Error::Config(_))));
        assert!(matches!(kernel_mask(&x, &per_channel), Err(Error::Config(_))));
        assert!(matches!(analyze_kernel(&x, &per_channel), Err(Error::Config(_))));
        assert!(matches!(remove_kernel(&x, &per_channel), Err(Error::Config(_))));
    }

    #[test]
    fn kernel_mask_matches_codes() {
        let x = m(&[vec![2.0, -1.0, 0.006]]);
        let mask = kernel_mask(&x, &PT8).unwrap();
        assert_eq!(mask.data(), [false, false, true]);
        let codes = per_token_quantize(&x, 8).unwrap();
        for (i, &code) in codes.codes().iter().enumerate() {
            assert_eq!(mask.data()[i], code == 0);
        }
    }

    #[test]
    fn zero_rows_are_kernel_members() {
        let x = m(&[vec![0.0, 0.0, 0.0]]);
        let mask = kernel_mask(&x, &PT8).unwrap();
        assert_eq!(mask.data(), [true, true, true]);
    }

    #[test]
    fn cross_mask_on_golden_matrix_is_empty() {
        let x = m(&[vec![10.0, 0.03], vec![0.05, 0.2]]);
        let mask = kernel_mask(&x, &QuantScheme::CrossQuant { bits: 8, alpha: 0.5 }).unwrap();
        assert_eq!(mask.count_true(), 0);
    }

    #[test]
    fn analyze_kernel_golden_two_by_two() {
        let x = m(&[vec![10.0, 0.03], vec![0.05, 0.2]]);
        let pt = analyze_kernel(&x, &PT8).unwrap();
        assert_eq!(pt.kernel_proportion, 0.25); // just the 0.03
        assert_eq!(pt.nonzero_kernel_proportion, 0.25);
        // c = [10, 0.2], t = [10, 0.2]: pairs (0,0), (1,0), (1,1)
        assert_eq!(pt.frac_c_ge_t, 0.75);
        assert_eq!(pt.frac_btilde_lt_b, None);

        let cq = analyze_kernel(&x, &QuantScheme::CrossQuant { bits: 8, alpha: 0.5 }).unwrap();
        assert_eq!(cq.kernel_proportion, 0.0);
        assert_eq!(cq.frac_c_ge_t, 0.75);
        // only (0,1) has c_j < t_i, and there sqrt(10*0.2) < 10
        assert_eq!(cq.frac_btilde_lt_b, Some(0.25));
    }

    #[test]
    fn analyze_kernel_constant_matrix() {
        let x = m(&[vec![5.0; 3], vec![5.0; 3]]);
        for alpha in [0.15, 0.45, 0.5, 0.75] {
            let r = analyze_kernel(&x, &QuantScheme::CrossQuant { bits: 8, alpha }).unwrap();
            assert_eq!(r.frac_c_ge_t, 1.0, "alpha={alpha}");
            assert_eq!(r.frac_btilde_lt_b, Some(0.0), "alpha={alpha}");
            assert_eq!(r.kernel_proportion, 0.0);
        }
    }

    #[test]
    fn nonzero_kernel_proportion_excludes_exact_zeros() {
        let x = m(&[vec![2.0, -1.0, 0.006], vec![0.0, 0.0, 0.0]]);
        let r = analyze_kernel(&x, &PT8).unwrap();
        assert_eq!(r.kernel_proportion, 4.0 / 6.0);
        assert_eq!(r.nonzero_kernel_proportion, 1.0 / 6.0);
        assert!(r.nonzero_kernel_proportion <= r.kernel_proportion);
    }

    #[test]
    fn report_json_has_the_agreed_fields() {
        let x = m(&[vec![10.0, 0.03], vec![0.05, 0.2]]);
        let r = analyze_kernel(&x, &QuantScheme::CrossQuant { bits: 8, alpha: 0.15 }).unwrap();
        let json: serde_json::Value = serde_json::from_str(&r.to_json_string()).unwrap();
        for field in [
            "scheme",
            "bits",
            "alpha",
            "kernel_proportion",
            "nonzero_kernel_proportion",
            "frac_c_ge_t",
            "frac_Btilde_lt_B",
            "rows",
            "cols",
        ] {
            assert!(json.get(field).is_some(), "missing {field}");
        }
        assert_eq!(json["scheme"], "crossquant");
        assert_eq!(json["rows"], 2);

        let pt = analyze_kernel(&x, &PT8).unwrap();
        let json: serde_json::Value = serde_json::from_str(&pt.to_json_string()).unwrap();
        assert!(json["alpha"].is_null());
        assert!(json["frac_Btilde_lt_B"].is_null());
    }

    #[test]
    fn remove_kernel_golden_row() {
        let x = m(&[vec![2.0, -1.0, 0.006]]);
        let out = remove_kernel(&x, &PT8).unwrap();
        assert_eq!(out.data(), [2.0, -1.0, 0.0]);
    }

    #[test]
    fn remove_kernel_identity_cases() {
        let zero = m(&[vec![0.0, 0.0]]);
        assert_eq!(remove_kernel(&zero, &PT8).unwrap().data(), [0.0, 0.0]);

        // every element at the row maximum: empty kernel, matrix unchanged
        let flat = m(&[vec![5.0, -5.0], vec![5.0, 5.0]]);
        let out = remove_kernel(&flat, &PT8).unwrap();
        assert_eq!(out, flat);
    }

    #[test]
    fn remove_by_proportion_golden() {
        let x = m(&[vec![3.0, -1.0], vec![0.5, 2.0]]);
        let out = remove_by_proportion(&x, 0.5).unwrap();
        assert_eq!(out.data(), [3.0, 0.0, 0.0, 2.0]);

        assert_eq!(remove_by_proportion(&x, 0.0).unwrap(), x);
        assert_eq!(remove_by_proportion(&x, 1.0).unwrap().data(), [0.0; 4]);
    }

    #[test]
    fn remove_by_proportion_breaks_ties_by_index() {
        let x = m(&[vec![1.0, -1.0], vec![1.0, 2.0]]);
        let out = remove_by_proportion(&x, 0.5).unwrap();
        assert_eq!(out.data(), [0.0, 0.0, 1.0, 2.0]);
        let out = remove_by_proportion(&x, 0.75).unwrap();
        assert_eq!(out.data(), [0.0, 0.0, 0.0, 2.0]);
    }

    #[test]
    fn remove_by_proportion_rejects_out_of_range() {
        let x = m(&[vec![1.0]]);
        assert!(matches!(remove_by_proportion(&x, 1.5), Err(Error::Config(_))));
        assert!(matches!(remove_by_proportion(&x, -0.1), Err(Error::Config(_))));
    }
}
