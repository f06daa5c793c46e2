//! Shared corpus and reference oracles for the integration suites.

use std::sync::OnceLock;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use qk::{generate_activations, generate_weights, per_token_quantize, Matrix, SynthSpec};

/// Seeded random matrix corpus: shapes up to 64x64, values in [-100, 100],
/// with zero rows/columns injected and a few structured specials appended.
pub fn corpus(seed: u64, count: usize) -> Vec<Matrix> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut matrices = Vec::with_capacity(count + 8);
    while matrices.len() < count {
        let rows = rng.gen_range(1..=64_usize);
        let cols = rng.gen_range(1..=64_usize);
        let mut data: Vec<f64> =
            (0..rows * cols).map(|_| rng.gen_range(-100.0..=100.0)).collect();
        if rows > 1 && rng.gen_ratio(1, 8) {
            let r = rng.gen_range(0..rows);
            data[r * cols..(r + 1) * cols].fill(0.0);
        }
        if cols > 1 && rng.gen_ratio(1, 8) {
            let c = rng.gen_range(0..cols);
            for r in 0..rows {
                data[r * cols + c] = 0.0;
            }
        }
        // occasional coarse grid of duplicated values to exercise ties
        if rng.gen_ratio(1, 16) {
            for v in data.iter_mut() {
                *v = (*v / 25.0).round() * 25.0;
            }
        }
        matrices.push(Matrix::new(rows, cols, data).unwrap());
    }
    matrices.push(Matrix::new(3, 3, vec![0.0; 9]).unwrap());
    matrices.push(Matrix::new(1, 1, vec![0.0]).unwrap());
    matrices.push(Matrix::new(1, 1, vec![42.0]).unwrap());
    matrices.push(Matrix::new(4, 4, vec![5.0; 16]).unwrap());
    matrices.push(Matrix::from_rows(&[vec![2.0, -1.0, 0.006]]).unwrap());
    matrices.push(Matrix::from_rows(&[vec![10.0, 0.03], vec![0.05, 0.2]]).unwrap());
    matrices.push(Matrix::from_rows(&[vec![1.0, -1.0], vec![1.0, 2.0]]).unwrap());
    matrices
}

/// Reference for per-column quantization: quantize the transpose per-row
/// and map the codes back. Row and column maxima reduce over the same
/// element sets, so this is bit-identical to a direct per-column pass.
pub fn per_column_codes_reference(x: &Matrix, bits: u32) -> Vec<i32> {
    let q = per_token_quantize(&x.transposed(), bits).unwrap();
    let mut codes = vec![0_i32; x.rows() * x.cols()];
    for i in 0..x.rows() {
        for j in 0..x.cols() {
            codes[i * x.cols() + j] = q.codes()[j * x.rows() + i];
        }
    }
    codes
}

/// The seeded outlier fixture: activations 256x512 (sigma 1, 1% outlier
/// columns at 30x, seed 11) and weights 512x512 (sigma 0.02, seed 12).
pub fn outlier_fixture() -> &'static (Matrix, Matrix) {
    static FIXTURE: OnceLock<(Matrix, Matrix)> = OnceLock::new();
    FIXTURE.get_or_init(|| {
        let spec = SynthSpec {
            rows: 256,
            cols: 512,
            base_sigma: 1.0,
            outlier_frac: 0.01,
            outlier_scale: 30.0,
            seed: 11,
        };
        let x = generate_activations(&spec).unwrap();
        let w = generate_weights(512, 512, 0.02, 12).unwrap();
        (x, w)
    })
}
