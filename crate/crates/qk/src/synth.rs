//! Seeded synthetic activation and weight matrices.
//!
//! Activations follow the outlier-channel regime seen in large models: a
//! small fraction of input channels carries values an order of magnitude
//! (or more) larger than the rest. Placing outliers column-wise inflates
//! every row's absolute maximum, which is what blows up the per-token
//! kernel while column maxima of ordinary channels stay small.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Matrix;

/// Parameters for [`generate_activations`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub rows: usize,
    pub cols: usize,
    /// Standard deviation of the baseline zero-mean normal values.
    pub base_sigma: f64,
    /// Fraction of columns designated outlier channels; `ceil(frac * cols)`
    /// columns are chosen deterministically from the seed.
    pub outlier_frac: f64,
    /// Magnitude multiplier for outlier columns, at least 1.
    pub outlier_scale: f64,
    pub seed: u64,
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if self.rows == 0 || self.cols == 0 {
            return Err(Error::Config(format!(
                "generator dimensions must be at least 1x1, got {}x{}",
                self.rows, self.cols
            )));
        }
        if !(self.base_sigma.is_finite() && self.base_sigma > 0.0) {
            return Err(Error::Config(format!("base sigma must be positive, got {}", self.base_sigma)));
        }
        if !(0.0..=1.0).contains(&self.outlier_frac) {
            return Err(Error::Config(format!(
                "outlier fraction must lie in [0, 1], got {}",
                self.outlier_frac
            )));
        }
        if !(self.outlier_scale.is_finite() && self.outlier_scale >= 1.0) {
            return Err(Error::Config(format!(
                "outlier scale must be at least 1, got {}",
                self.outlier_scale
            )));
        }
        Ok(())
    }
}

/// The outlier columns a spec designates, sorted ascending.
///
/// Column choice draws from its own RNG stream, so the baseline values are
/// identical whether or not any column is designated.
pub fn outlier_columns(spec: &SynthSpec) -> Result<Vec<usize>> {
    spec.validate()?;
    let count = ((spec.outlier_frac * spec.cols as f64).ceil() as usize).min(spec.cols);
    if count == 0 {
        return Ok(Vec::new());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(1);
    let mut cols: Vec<usize> = rand::seq::index::sample(&mut rng, spec.cols, count).into_vec();
    cols.sort_unstable();
    Ok(cols)
}

/// Draws a `rows x cols` matrix of zero-mean normal values and multiplies
/// the designated outlier columns by `outlier_scale`. The same spec always
/// produces the same matrix.
pub fn generate_activations(spec: &SynthSpec) -> Result<Matrix> {
    let columns = outlier_columns(spec)?;
    let mut data = fill_normal(spec.rows, spec.cols, spec.base_sigma, spec.seed)?;
    if spec.outlier_scale != 1.0 {
        for r in 0..spec.rows {
            for &c in &columns {
                data[r * spec.cols + c] *= spec.outlier_scale;
            }
        }
    }
    Matrix::new(spec.rows, spec.cols, data)
}

/// Seed-deterministic zero-mean normal matrix for matmul experiments.
pub fn generate_weights(rows: usize, cols: usize, sigma: f64, seed: u64) -> Result<Matrix> {
    if rows == 0 || cols == 0 {
        return Err(Error::Config(format!(
            "generator dimensions must be at least 1x1, got {rows}x{cols}"
        )));
    }
    if !(sigma.is_finite() && sigma > 0.0) {
        return Err(Error::Config(format!("sigma must be positive, got {sigma}")));
    }
    let data = fill_normal(rows, cols, sigma, seed)?;
    Matrix::new(rows, cols, data)
}

fn fill_normal(rows: usize, cols: usize, sigma: f64, seed: u64) -> Result<Vec<f64>> {
    let normal = Normal::new(0.0, sigma)
        .map_err(|e| Error::Config(format!("normal distribution: {e}")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..rows * cols).map(|_| normal.sample(&mut rng)).collect())
}
