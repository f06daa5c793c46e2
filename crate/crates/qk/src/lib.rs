//! Symmetric integer quantization and quantization-kernel analysis for
//! dense activation and weight matrices.
//!
//! The crate provides four code-producing quantizers (per-token,
//! per-channel, group-wise, and cross quantization), exact dequantization,
//! analysis of the quantization kernel (the set of elements a scheme maps
//! to integer code zero), seeded synthetic data in the outlier-channel
//! regime, and sweep drivers that measure quantization quality as relative
//! matmul error.
//!
//! Start with the runnable programs in `examples/`; the `qk` binary wires
//! the same operations into a scriptable CLI.

pub mod cli;
pub mod error;
pub mod experiment;
pub mod kernel;
pub mod quant;
pub mod synth;
pub mod tensor;

pub use error::{Error, Result};
pub use experiment::{
    alpha_sweep, compare_remove_vs_quant, emit_report, matmul, matmul_error, parse_report,
    removal_sweep, render_report, RemoveVsQuant, ReportFormat, SweepRecord,
};
pub use kernel::{
    analyze_kernel, kernel_mask, remove_by_proportion, remove_kernel, zero_bound, BoolMatrix,
    KernelReport, ReportSummary,
};
pub use quant::{
    cross_quantize, fake_quantize, group_wise_quantize, load_quantized, per_channel_quantize,
    per_token_quantize, q_max, quantize, save_quantized, QuantScheme, QuantizedTensor,
};
pub use synth::{generate_activations, generate_weights, outlier_columns, SynthSpec};
pub use tensor::{load_tensor, save_tensor, Matrix, Precision};
