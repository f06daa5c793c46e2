//! The `qk` command line: seeded generation, quantization, kernel reports,
//! removal transforms, and sweep drivers, wired for scriptable use.
//!
//! Every invocation is fully determined by its arguments and input files.
//! The only environment variable consulted is `QK_REPORT_DIR`, an optional
//! prefix applied to relative output paths. Reports go to standard output
//! unless `--out` is given. Exit codes: 0 success, 1 data/validation error,
//! 2 usage error.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::error::Error;
use crate::experiment::{alpha_sweep, matmul_error, removal_sweep, render_report, ReportFormat};
use crate::kernel::{analyze_kernel, remove_by_proportion, remove_kernel, ReportSummary};
use crate::quant::{fake_quantize, quantize, save_quantized, QuantScheme};
use crate::synth::{generate_activations, outlier_columns, SynthSpec};
use crate::tensor::{load_tensor, save_tensor, Matrix, Precision};

/// Runs the CLI on `args` (program name excluded) and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString>,
{
    let mut argv: Vec<OsString> = vec!["qk".into()];
    argv.extend(args.into_iter().map(Into::into));
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => 0,
                _ => 2,
            };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(Failure::Usage(msg)) => {
            eprintln!("usage error: {msg}");
            2
        }
        Err(Failure::Data(err)) => {
            eprintln!("error: {err}");
            1
        }
    }
}

#[derive(Debug)]
enum Failure {
    Usage(String),
    Data(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Data(e)
    }
}

type CmdResult = Result<(), Failure>;

#[derive(Parser)]
#[command(
    name = "qk",
    version,
    about = "Symmetric integer quantizers and quantization-kernel analysis for dense matrices"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a seeded synthetic activation matrix in QTN1 format
    Gen(GenArgs),
    /// Quantize a tensor, or fake-quantize it with --fake
    Quantize(QuantizeArgs),
    /// Print a kernel report for a tensor under one scheme
    Kernel(KernelArgs),
    /// Zero kernel elements, or the smallest-magnitude proportion
    RemoveKernel(RemoveKernelArgs),
    /// Case statistics: crossquant at one alpha against per-token
    Stats(StatsArgs),
    /// Sweep crossquant alpha values and record kernel size and matmul error
    SweepAlpha(SweepAlphaArgs),
    /// Sweep removal proportions and record matmul error
    SweepRemoval(SweepRemovalArgs),
    /// Relative Frobenius error of the quantized product X*W
    MatmulError(MatmulErrorArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SchemeKind {
    #[value(name = "per-token")]
    PerToken,
    #[value(name = "per-channel")]
    PerChannel,
    #[value(name = "group")]
    Group,
    #[value(name = "crossquant")]
    CrossQuant,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum KernelSchemeKind {
    #[value(name = "per-token")]
    PerToken,
    #[value(name = "crossquant")]
    CrossQuant,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum FormatKind {
    Csv,
    Json,
}

impl From<FormatKind> for ReportFormat {
    fn from(f: FormatKind) -> Self {
        match f {
            FormatKind::Csv => ReportFormat::Csv,
            FormatKind::Json => ReportFormat::Json,
        }
    }
}

#[derive(clap::Args)]
struct GenArgs {
    #[arg(long)]
    rows: usize,
    #[arg(long)]
    cols: usize,
    /// Standard deviation of the baseline normal values
    #[arg(long)]
    sigma: f64,
    /// Fraction of columns designated outlier channels
    #[arg(long, default_value_t = 0.0)]
    outlier_frac: f64,
    /// Magnitude multiplier for outlier columns
    #[arg(long, default_value_t = 1.0)]
    outlier_scale: f64,
    #[arg(long)]
    seed: u64,
    /// Output QTN1 path; a provenance sidecar is written next to it as <out>.json
    #[arg(long)]
    out: PathBuf,
}

#[derive(clap::Args)]
struct QuantizeArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    scheme: SchemeKind,
    #[arg(long)]
    bits: u32,
    /// Cross-quantization exponent (crossquant only)
    #[arg(long)]
    alpha: Option<f64>,
    /// Group size (group scheme only)
    #[arg(long)]
    group_size: Option<usize>,
    /// Write the fake-quantized matrix instead of integer codes
    #[arg(long)]
    fake: bool,
    #[arg(long)]
    out: PathBuf,
    /// Sidecar path for scheme and scale metadata; defaults to <out>.json
    #[arg(long, conflicts_with = "fake")]
    scales: Option<PathBuf>,
}

#[derive(clap::Args)]
struct KernelArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    scheme: KernelSchemeKind,
    #[arg(long)]
    bits: u32,
    #[arg(long)]
    alpha: Option<f64>,
    /// Dump the kernel mask as a QTN1 container of 0.0/1.0 values
    #[arg(long)]
    mask_out: Option<PathBuf>,
}

#[derive(clap::Args)]
struct RemoveKernelArgs {
    #[arg(long = "in")]
    input: PathBuf,
    /// Zero the kernel of this scheme (requires --bits)
    #[arg(long)]
    scheme: Option<KernelSchemeKind>,
    #[arg(long)]
    bits: Option<u32>,
    #[arg(long)]
    alpha: Option<f64>,
    /// Zero this proportion of smallest-magnitude elements instead
    #[arg(long)]
    proportion: Option<f64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(clap::Args)]
struct StatsArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    alpha: f64,
    #[arg(long)]
    bits: u32,
}

#[derive(clap::Args)]
struct SweepAlphaArgs {
    #[arg(long)]
    x: PathBuf,
    #[arg(long)]
    w: PathBuf,
    /// Comma list (0.15,0.45,1) or inclusive range (start:stop:step)
    #[arg(long)]
    alphas: String,
    /// Activation bit-width
    #[arg(long)]
    bits: u32,
    #[command(flatten)]
    weight: WeightSchemeArgs,
    #[arg(long, value_enum)]
    format: FormatKind,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(clap::Args)]
struct SweepRemovalArgs {
    #[arg(long)]
    x: PathBuf,
    #[arg(long)]
    w: PathBuf,
    /// Comma list (0,0.1,0.2) or inclusive range (start:stop:step)
    #[arg(long)]
    proportions: String,
    #[command(flatten)]
    weight: WeightSchemeArgs,
    #[arg(long, value_enum)]
    format: FormatKind,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(clap::Args)]
struct WeightSchemeArgs {
    /// Weight quantization scheme; weights stay unquantized if omitted
    #[arg(long = "w-scheme")]
    w_scheme: Option<SchemeKind>,
    #[arg(long = "w-bits", default_value_t = 8)]
    w_bits: u32,
    #[arg(long = "w-alpha")]
    w_alpha: Option<f64>,
    #[arg(long = "w-group-size")]
    w_group_size: Option<usize>,
}

impl WeightSchemeArgs {
    fn build(&self) -> Result<Option<QuantScheme>, Failure> {
        match self.w_scheme {
            None => {
                if self.w_alpha.is_some() || self.w_group_size.is_some() {
                    return Err(Failure::Usage(
                        "--w-alpha/--w-group-size require --w-scheme".into(),
                    ));
                }
                Ok(None)
            }
            Some(kind) => {
                Ok(Some(build_scheme(kind, self.w_bits, self.w_alpha, self.w_group_size, "w-")?))
            }
        }
    }
}

#[derive(clap::Args)]
struct MatmulErrorArgs {
    #[arg(long)]
    x: PathBuf,
    #[arg(long)]
    w: PathBuf,
    /// Activation scheme; activations stay unquantized if omitted
    #[arg(long = "x-scheme")]
    x_scheme: Option<SchemeKind>,
    #[arg(long = "x-bits", default_value_t = 8)]
    x_bits: u32,
    #[arg(long = "x-alpha")]
    x_alpha: Option<f64>,
    #[arg(long = "x-group-size")]
    x_group_size: Option<usize>,
    #[command(flatten)]
    weight: WeightSchemeArgs,
}

fn build_scheme(
    kind: SchemeKind,
    bits: u32,
    alpha: Option<f64>,
    group_size: Option<usize>,
    prefix: &str,
) -> Result<QuantScheme, Failure> {
    let reject_alpha = |scheme: &str| {
        if alpha.is_some() {
            Err(Failure::Usage(format!("--{prefix}alpha does not apply to --{prefix}scheme {scheme}")))
        } else {
            Ok(())
        }
    };
    let reject_group = |scheme: &str| {
        if group_size.is_some() {
            Err(Failure::Usage(format!(
                "--{prefix}group-size does not apply to --{prefix}scheme {scheme}"
            )))
        } else {
            Ok(())
        }
    };
    match kind {
        SchemeKind::PerToken => {
            reject_alpha("per-token")?;
            reject_group("per-token")?;
            Ok(QuantScheme::PerToken { bits })
        }
        SchemeKind::PerChannel => {
            reject_alpha("per-channel")?;
            reject_group("per-channel")?;
            Ok(QuantScheme::PerChannel { bits })
        }
        SchemeKind::Group => {
            reject_alpha("group")?;
            let group_size = group_size.ok_or_else(|| {
                Failure::Usage(format!("--{prefix}group-size is required with --{prefix}scheme group"))
            })?;
            Ok(QuantScheme::GroupWise { bits, group_size })
        }
        SchemeKind::CrossQuant => {
            reject_group("crossquant")?;
            let alpha = alpha.ok_or_else(|| {
                Failure::Usage(format!("--{prefix}alpha is required with --{prefix}scheme crossquant"))
            })?;
            Ok(QuantScheme::CrossQuant { bits, alpha })
        }
    }
}

fn kernel_scheme(
    kind: KernelSchemeKind,
    bits: u32,
    alpha: Option<f64>,
) -> Result<QuantScheme, Failure> {
    match kind {
        KernelSchemeKind::PerToken => build_scheme(SchemeKind::PerToken, bits, alpha, None, ""),
        KernelSchemeKind::CrossQuant => build_scheme(SchemeKind::CrossQuant, bits, alpha, None, ""),
    }
}

/// Applies the optional `QK_REPORT_DIR` prefix to relative output paths.
fn resolve_out(path: &Path) -> PathBuf {
    if path.is_relative() {
        if let Some(dir) = std::env::var_os("QK_REPORT_DIR") {
            if !dir.is_empty() {
                return PathBuf::from(dir).join(path);
            }
        }
    }
    path.to_path_buf()
}

fn default_sidecar(out: &Path) -> PathBuf {
    let mut name = out.as_os_str().to_os_string();
    name.push(".json");
    PathBuf::from(name)
}

/// Parses a sweep list: either a comma list or an inclusive start:stop:step
/// range (endpoints within 1e-12 of a step snap to the endpoint).
fn parse_value_list(text: &str, flag: &str) -> Result<Vec<f64>, Failure> {
    let usage = |msg: String| Failure::Usage(format!("{flag}: {msg}"));
    if text.contains(':') {
        let parts: Vec<&str> = text.split(':').collect();
        if parts.len() != 3 {
            return Err(usage("a range must have the form start:stop:step".into()));
        }
        let nums: Vec<f64> = parts
            .iter()
            .map(|p| p.trim().parse::<f64>().map_err(|_| usage(format!("cannot parse {p:?}"))))
            .collect::<Result<_, _>>()?;
        let (start, stop, step) = (nums[0], nums[1], nums[2]);
        if !start.is_finite() || !stop.is_finite() || !(step.is_finite() && step > 0.0) {
            return Err(usage("start and stop must be finite and step positive".into()));
        }
        if start > stop + 1e-12 {
            return Err(usage(format!("start {start} exceeds stop {stop}")));
        }
        if (stop - start) / step > 1e6 {
            return Err(usage("range would produce more than one million points".into()));
        }
        let mut values = Vec::new();
        let mut k = 0_u64;
        loop {
            let v = start + k as f64 * step;
            if v > stop + 1e-12 {
                break;
            }
            values.push(if (v - stop).abs() <= 1e-12 { stop } else { v });
            k += 1;
        }
        Ok(values)
    } else {
        text.split(',')
            .map(|p| p.trim().parse::<f64>().map_err(|_| usage(format!("cannot parse {p:?}"))))
            .collect()
    }
}

fn write_or_print(rendered: String, out: Option<&Path>) -> CmdResult {
    match out {
        Some(path) => {
            let path = resolve_out(path);
            std::fs::write(&path, rendered).map_err(|e| Error::io(path, e))?;
            Ok(())
        }
        None => {
            print!("{rendered}");
            Ok(())
        }
    }
}

fn dispatch(command: Command) -> CmdResult {
    match command {
        Command::Gen(args) => cmd_gen(args),
        Command::Quantize(args) => cmd_quantize(args),
        Command::Kernel(args) => cmd_kernel(args),
        Command::RemoveKernel(args) => cmd_remove_kernel(args),
        Command::Stats(args) => cmd_stats(args),
        Command::SweepAlpha(args) => cmd_sweep_alpha(args),
        Command::SweepRemoval(args) => cmd_sweep_removal(args),
        Command::MatmulError(args) => cmd_matmul_error(args),
    }
}

#[derive(Serialize)]
struct GenProvenance<'a> {
    #[serde(flatten)]
    spec: &'a SynthSpec,
    outlier_columns: Vec<usize>,
}

fn cmd_gen(args: GenArgs) -> CmdResult {
    let spec = SynthSpec {
        rows: args.rows,
        cols: args.cols,
        base_sigma: args.sigma,
        outlier_frac: args.outlier_frac,
        outlier_scale: args.outlier_scale,
        seed: args.seed,
    };
    let matrix = generate_activations(&spec)?;
    let out = resolve_out(&args.out);
    save_tensor(&matrix, &out, Precision::F64)?;
    let provenance =
        GenProvenance { spec: &spec, outlier_columns: outlier_columns(&spec)? };
    let sidecar = default_sidecar(&out);
    let text = serde_json::to_string_pretty(&provenance).expect("provenance serializes");
    std::fs::write(&sidecar, text + "\n").map_err(|e| Error::io(sidecar, e))?;
    Ok(())
}

fn cmd_quantize(args: QuantizeArgs) -> CmdResult {
    let scheme = build_scheme(args.scheme, args.bits, args.alpha, args.group_size, "")?;
    let matrix = load_tensor(&args.input)?;
    let out = resolve_out(&args.out);
    if args.fake {
        let fq = fake_quantize(&matrix, &scheme)?;
        save_tensor(&fq, &out, Precision::F64)?;
    } else {
        let q = quantize(&matrix, &scheme)?;
        let sidecar = match &args.scales {
            Some(path) => resolve_out(path),
            None => default_sidecar(&out),
        };
        save_quantized(&q, &out, &sidecar)?;
    }
    Ok(())
}

fn cmd_kernel(args: KernelArgs) -> CmdResult {
    let scheme = kernel_scheme(args.scheme, args.bits, args.alpha)?;
    let matrix = load_tensor(&args.input)?;
    let report = analyze_kernel(&matrix, &scheme)?;
    if let Some(mask_out) = &args.mask_out {
        save_tensor(&report.mask.to_matrix(), resolve_out(mask_out), Precision::F64)?;
    }
    println!("{}", report.to_json_string());
    Ok(())
}

fn cmd_remove_kernel(args: RemoveKernelArgs) -> CmdResult {
    let matrix = load_tensor(&args.input)?;
    let result: Matrix = match (args.scheme, args.proportion) {
        (Some(kind), None) => {
            let bits = args.bits.ok_or_else(|| {
                Failure::Usage("--bits is required when removing by --scheme".into())
            })?;
            let scheme = kernel_scheme(kind, bits, args.alpha)?;
            remove_kernel(&matrix, &scheme)?
        }
        (None, Some(p)) => {
            if args.bits.is_some() || args.alpha.is_some() {
                return Err(Failure::Usage(
                    "--bits/--alpha do not apply when removing by --proportion".into(),
                ));
            }
            remove_by_proportion(&matrix, p)?
        }
        _ => {
            return Err(Failure::Usage(
                "exactly one of --scheme or --proportion must be given".into(),
            ))
        }
    };
    save_tensor(&result, resolve_out(&args.out), Precision::F64)?;
    Ok(())
}

#[derive(Serialize)]
struct StatsOutput {
    alpha: f64,
    bits: u32,
    crossquant: ReportSummary,
    per_token: ReportSummary,
}

fn cmd_stats(args: StatsArgs) -> CmdResult {
    let matrix = load_tensor(&args.input)?;
    let cross = analyze_kernel(&matrix, &QuantScheme::CrossQuant { bits: args.bits, alpha: args.alpha })?;
    let per_token = analyze_kernel(&matrix, &QuantScheme::PerToken { bits: args.bits })?;
    let output = StatsOutput {
        alpha: args.alpha,
        bits: args.bits,
        crossquant: cross.summary(),
        per_token: per_token.summary(),
    };
    println!("{}", serde_json::to_string_pretty(&output).expect("stats serialize"));
    Ok(())
}

fn cmd_sweep_alpha(args: SweepAlphaArgs) -> CmdResult {
    let alphas = parse_value_list(&args.alphas, "--alphas")?;
    let weight_scheme = args.weight.build()?;
    let x = load_tensor(&args.x)?;
    let w = load_tensor(&args.w)?;
    let records = alpha_sweep(&x, &w, &alphas, args.bits, weight_scheme.as_ref())?;
    write_or_print(render_report(&records, args.format.into()), args.out.as_deref())
}

fn cmd_sweep_removal(args: SweepRemovalArgs) -> CmdResult {
    let proportions = parse_value_list(&args.proportions, "--proportions")?;
    let weight_scheme = args.weight.build()?;
    let x = load_tensor(&args.x)?;
    let w = load_tensor(&args.w)?;
    let records = removal_sweep(&x, &w, &proportions, weight_scheme.as_ref())?;
    write_or_print(render_report(&records, args.format.into()), args.out.as_deref())
}

fn cmd_matmul_error(args: MatmulErrorArgs) -> CmdResult {
    let x_scheme = match args.x_scheme {
        None => {
            if args.x_alpha.is_some() || args.x_group_size.is_some() {
                return Err(Failure::Usage("--x-alpha/--x-group-size require --x-scheme".into()));
            }
            None
        }
        Some(kind) => Some(build_scheme(kind, args.x_bits, args.x_alpha, args.x_group_size, "x-")?),
    };
    let weight_scheme = args.weight.build()?;
    let x = load_tensor(&args.x)?;
    let w = load_tensor(&args.w)?;
    let err = matmul_error(&x, &w, x_scheme.as_ref(), weight_scheme.as_ref())?;
    println!("{err:.16e}");
    Ok(())
}
