use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;

use gcm_core::apps::{interpolate, smooth, InterpConfig, MaskSpec, SmoothConfig};
use gcm_core::deblur::{deblur, nonblind_deconv, DeblurConfig, NonblindConfig};
use gcm_core::engine::{write_trace_csv, TraceRecord, TRACE_HEADER};
use gcm_core::error::GcmError;
use gcm_core::generator::{load_generator, GeneratorSpec};
use gcm_core::image::Domain;
use gcm_core::io::{read_kernel, read_mask, read_png, write_kernel, write_png};
use gcm_core::metrics::{error_ratio, kernel_similarity, psnr, ssim};
use gcm_core::synth::{motion_kernel, shapes_scene, smooth_scene, synth_blur, textured_blocks};
use gcm_core::{Image, Kernel};

#[derive(Parser)]
#[command(name = "gcm", version, about = "Generation-correction image restoration")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Blind deblurring: estimate kernel and latent image.
    Deblur(DeblurArgs),
    /// Deconvolution with a known kernel.
    Nonblind(NonblindArgs),
    /// Fill missing pixels.
    Interp(InterpArgs),
    /// Edge-preserving ℓ0 gradient smoothing.
    Smooth(SmoothArgs),
    /// Blur (and optionally add noise to) a sharp image.
    Synth(SynthArgs),
    /// Write a synthetic test scene.
    Scene(SceneArgs),
    /// Quality metrics of restored images against ground truth.
    Eval(EvalArgs),
    /// Convert trace CSVs to a gnuplot data file.
    TracePlot(TracePlotArgs),
}

#[derive(Args)]
struct DeblurArgs {
    input: PathBuf,
    #[arg(long, default_value_t = 15)]
    kernel_size: usize,
    /// `shock`, `identity`, or a weight file.
    #[arg(long, default_value = "shock")]
    generator: String,
    /// `auto` or a maximum number of pyramid levels.
    #[arg(long, default_value = "auto")]
    levels: String,
    #[arg(long)]
    inner: Option<usize>,
    #[arg(long)]
    outer: Option<usize>,
    #[arg(long)]
    lambda: Option<f64>,
    /// Blend image borders before the final deconvolution.
    #[arg(long)]
    taper: bool,
    /// Trace of the final non-blind run.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Directory for per-level channel traces.
    #[arg(long)]
    trace_dir: Option<PathBuf>,
    #[arg(short, long, default_value = "deblurred.png")]
    out: PathBuf,
    #[arg(long, default_value = "kernel.txt")]
    kernel_out: PathBuf,
}

#[derive(Args)]
struct NonblindArgs {
    input: PathBuf,
    kernel: PathBuf,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    iterations: Option<usize>,
    #[arg(long)]
    trace: Option<PathBuf>,
    #[arg(short, long, default_value = "restored.png")]
    out: PathBuf,
}

#[derive(Args)]
struct InterpArgs {
    input: PathBuf,
    /// Mask PNG (0 missing, 255 observed) or `random:FRACTION:SEED`.
    #[arg(long)]
    mask: String,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    iterations: Option<usize>,
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Also write the zero-filled observation.
    #[arg(long)]
    masked_out: Option<PathBuf>,
    #[arg(short, long, default_value = "interpolated.png")]
    out: PathBuf,
}

#[derive(Args)]
struct SmoothArgs {
    input: PathBuf,
    #[arg(long, default_value_t = 1e-2)]
    lambda0: f64,
    #[arg(long)]
    trace: Option<PathBuf>,
    #[arg(short, long, default_value = "smoothed.png")]
    out: PathBuf,
}

#[derive(Args)]
struct SynthArgs {
    sharp: PathBuf,
    /// Kernel file or `motion:SIZE:SEED`.
    #[arg(long)]
    kernel: String,
    #[arg(long, default_value_t = 0.0)]
    sigma: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Where to save the kernel actually used.
    #[arg(long)]
    kernel_out: Option<PathBuf>,
    #[arg(short, long, default_value = "blurred.png")]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum SceneKind {
    Shapes,
    Smooth,
    Blocks,
    Textured,
}

#[derive(Args)]
struct SceneArgs {
    #[arg(long, value_enum, default_value = "shapes")]
    kind: SceneKind,
    #[arg(long, default_value_t = 64)]
    size: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(short, long, default_value = "scene.png")]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    /// Restored images followed by the ground truth.
    #[arg(num_args = 2.., required = true)]
    files: Vec<PathBuf>,
    #[arg(long)]
    kernel_est: Option<PathBuf>,
    #[arg(long)]
    kernel_true: Option<PathBuf>,
    /// Blurred observation; with both kernels enables the error ratio.
    #[arg(long)]
    blurred: Option<PathBuf>,
    /// Fill the `seconds` column with per-file evaluation time.
    #[arg(long)]
    timing: bool,
    /// Write the table here as well as to stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct TracePlotArgs {
    #[arg(required = true)]
    traces: Vec<PathBuf>,
    #[arg(short, long, default_value = "trace.dat")]
    out: PathBuf,
}

#[derive(Debug)]
enum CliError {
    Usage(String),
    Core(GcmError),
}

impl From<GcmError> for CliError {
    fn from(e: GcmError) -> Self {
        CliError::Core(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Core(GcmError::Io(e))
    }
}

type CliResult<T = ()> = Result<T, CliError>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if let Some(n) = std::env::var("GCM_THREADS").ok().and_then(|v| v.parse::<usize>().ok()) {
        // a pool that is already built keeps its size
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(CliError::Core(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_numeric() { 2 } else { 1 })
        }
    }
}

fn run(cmd: Command) -> CliResult {
    match cmd {
        Command::Deblur(a) => cmd_deblur(a),
        Command::Nonblind(a) => cmd_nonblind(a),
        Command::Interp(a) => cmd_interp(a),
        Command::Smooth(a) => cmd_smooth(a),
        Command::Synth(a) => cmd_synth(a),
        Command::Scene(a) => cmd_scene(a),
        Command::Eval(a) => cmd_eval(a),
        Command::TracePlot(a) => cmd_trace_plot(a),
    }
}

fn parse_generator(s: &str) -> CliResult<GeneratorSpec<f64>> {
    Ok(match s {
        "shock" => GeneratorSpec::shock(),
        "identity" => GeneratorSpec::Identity,
        path => load_generator(path)?,
    })
}

fn parse_kernel(s: &str) -> CliResult<Kernel> {
    if let Some(rest) = s.strip_prefix("motion:") {
        let parts: Vec<&str> = rest.split(':').collect();
        let parsed = match parts.as_slice() {
            [size, seed] => size.parse::<usize>().ok().zip(seed.parse::<u64>().ok()),
            _ => None,
        };
        let (size, seed) = parsed.ok_or_else(|| CliError::Usage(format!("bad kernel spec `{s}`, expected motion:SIZE:SEED")))?;
        return Ok(motion_kernel(size, seed)?);
    }
    Ok(read_kernel(s)?)
}

fn parse_mask(s: &str, h: usize, w: usize) -> CliResult<MaskSpec<f64>> {
    if let Some(rest) = s.strip_prefix("random:") {
        let parts: Vec<&str> = rest.split(':').collect();
        let parsed = match parts.as_slice() {
            [frac, seed] => frac.parse::<f64>().ok().zip(seed.parse::<u64>().ok()),
            _ => None,
        };
        let (fraction, seed) =
            parsed.ok_or_else(|| CliError::Usage(format!("bad mask spec `{s}`, expected random:FRACTION:SEED")))?;
        return Ok(MaskSpec::RandomMissing { fraction, seed });
    }
    let m = read_mask(s)?;
    if m.shape() != (h, w) {
        return Err(GcmError::Mask(format!("mask is {:?}, image is {:?}", m.shape(), (h, w))).into());
    }
    Ok(MaskSpec::File(m))
}

fn write_trace(path: &Path, trace: &[TraceRecord<f64>]) -> CliResult {
    let mut f = BufWriter::new(File::create(path)?);
    write_trace_csv(trace, &mut f)?;
    f.flush()?;
    Ok(())
}

fn cmd_deblur(a: DeblurArgs) -> CliResult {
    let y: Image = read_png(&a.input)?;
    let generator = parse_generator(&a.generator)?;
    let mut cfg = DeblurConfig { kernel_size: a.kernel_size, taper: a.taper, ..DeblurConfig::default() };
    if let Some(v) = a.inner {
        cfg.inner_t = v;
    }
    if let Some(v) = a.outer {
        cfg.outer_iters = v;
    }
    if let Some(v) = a.lambda {
        cfg.lambda = v;
    }
    if a.levels != "auto" {
        let n: usize = a
            .levels
            .parse()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| CliError::Usage(format!("--levels must be `auto` or a positive integer, got `{}`", a.levels)))?;
        cfg.max_levels = Some(n);
    }
    let result = deblur(&y, &cfg, &generator)?;
    write_png(&result.latent, &a.out)?;
    write_kernel(&result.kernel, &a.kernel_out)?;
    if let Some(p) = &a.trace {
        write_trace(p, &result.nonblind_trace)?;
    }
    if let Some(dir) = &a.trace_dir {
        std::fs::create_dir_all(dir)?;
        for t in &result.level_traces {
            let ch = if t.domain == Domain::GradX { "gx" } else { "gy" };
            write_trace(&dir.join(format!("level{}_outer{}_{ch}.csv", t.level, t.outer)), &t.records)?;
        }
    }
    if result.degenerate {
        eprintln!("warning: kernel estimate collapsed to a single tap");
    }
    Ok(())
}

fn cmd_nonblind(a: NonblindArgs) -> CliResult {
    let y: Image = read_png(&a.input)?;
    let k: Kernel = read_kernel(&a.kernel)?;
    let mut cfg = NonblindConfig::default();
    if let Some(v) = a.lambda {
        cfg.lambda = v;
    }
    if let Some(v) = a.iterations {
        cfg.engine.iterations = v;
    }
    let out = nonblind_deconv(&y, &k, &cfg)?;
    write_png(&out.image, &a.out)?;
    if let Some(p) = &a.trace {
        write_trace(p, out.traces.first().map(Vec::as_slice).unwrap_or(&[]))?;
    }
    Ok(())
}

fn cmd_interp(a: InterpArgs) -> CliResult {
    let y: Image = read_png(&a.input)?;
    let (h, w) = y.shape();
    let spec = parse_mask(&a.mask, h, w)?;
    let m = spec.realize(h, w)?;
    let observed = y.zip_map(&m, |v, k| v * k);
    if let Some(p) = &a.masked_out {
        write_png(&observed, p)?;
    }
    let mut cfg = InterpConfig::default();
    if let Some(v) = a.lambda {
        cfg.lambda = v;
    }
    if let Some(v) = a.iterations {
        cfg.engine.iterations = v;
    }
    let out = interpolate(&observed, &MaskSpec::File(m), &GeneratorSpec::Identity, &cfg)?;
    write_png(&out.image, &a.out)?;
    if let Some(p) = &a.trace {
        write_trace(p, out.traces.first().map(Vec::as_slice).unwrap_or(&[]))?;
    }
    Ok(())
}

fn cmd_smooth(a: SmoothArgs) -> CliResult {
    let y: Image = read_png(&a.input)?;
    let out = smooth(&y, a.lambda0, &GeneratorSpec::Identity, &SmoothConfig::default())?;
    write_png(&out.image, &a.out)?;
    if let Some(p) = &a.trace {
        // one block per β stage, each monotone on its own
        let mut f = BufWriter::new(File::create(p)?);
        writeln!(f, "stage,{TRACE_HEADER}")?;
        for (stage, trace) in out.traces.iter().enumerate() {
            let mut buf = Vec::new();
            write_trace_csv(trace, &mut buf)?;
            for line in String::from_utf8_lossy(&buf).lines().skip(1) {
                writeln!(f, "{stage},{line}")?;
            }
        }
        f.flush()?;
    }
    Ok(())
}

fn cmd_synth(a: SynthArgs) -> CliResult {
    let sharp: Image = read_png(&a.sharp)?;
    let k = parse_kernel(&a.kernel)?;
    let y = synth_blur(&sharp, &k, a.sigma, a.seed)?;
    write_png(&y, &a.out)?;
    if let Some(p) = &a.kernel_out {
        write_kernel(&k, p)?;
    }
    Ok(())
}

fn cmd_scene(a: SceneArgs) -> CliResult {
    if a.size < 16 {
        return Err(CliError::Usage("--size must be at least 16".into()));
    }
    let img: Image = match a.kind {
        SceneKind::Shapes => shapes_scene(a.size, a.size, a.seed),
        SceneKind::Smooth => smooth_scene(a.size, a.size, a.seed),
        SceneKind::Blocks => textured_blocks(a.size, a.size, 0.05, a.seed).0,
        SceneKind::Textured => textured_blocks(a.size, a.size, 0.05, a.seed).1,
    };
    write_png(&img, &a.out)?;
    Ok(())
}

fn fmt_metric(v: f64) -> String {
    if v.is_infinite() {
        "inf".into()
    } else {
        format!("{v:.6}")
    }
}

fn cmd_eval(a: EvalArgs) -> CliResult {
    let (truth_path, restored) = a.files.split_last().expect("clap enforces two files");
    let truth: Image = read_png(truth_path)?;
    let kernels = match (&a.kernel_est, &a.kernel_true) {
        (Some(e), Some(t)) => Some((read_kernel::<f64>(e)?, read_kernel::<f64>(t)?)),
        (None, None) => None,
        _ => return Err(CliError::Usage("--kernel-est and --kernel-true go together".into())),
    };
    let blurred: Option<Image> = a.blurred.as_ref().map(read_png).transpose()?;
    if blurred.is_some() && kernels.is_none() {
        return Err(CliError::Usage("--blurred needs --kernel-est and --kernel-true".into()));
    }
    let ks = kernels.as_ref().map(|(e, t)| kernel_similarity(e, t)).transpose()?;

    let mut files: Vec<&PathBuf> = restored.iter().collect();
    files.sort();
    let rows: Vec<CliResult<String>> = files
        .par_iter()
        .map(|path| {
            let start = Instant::now();
            let img: Image = read_png(path)?;
            let p = psnr(&img, &truth)?;
            let s = ssim(&img, &truth)?;
            let er = match (&blurred, &kernels) {
                (Some(y), Some((ke, kt))) => {
                    let cfg = NonblindConfig::default();
                    let est = nonblind_deconv(y, ke, &cfg)?.image;
                    let tru = nonblind_deconv(y, kt, &cfg)?.image;
                    Some(error_ratio(&est, &tru, &truth)?)
                }
                _ => None,
            };
            let secs = start.elapsed().as_secs_f64();
            let mut row = String::new();
            write!(
                row,
                "{},{},{},{},{},{}",
                path.display(),
                fmt_metric(p),
                fmt_metric(s),
                ks.map(fmt_metric).unwrap_or_default(),
                er.map(fmt_metric).unwrap_or_default(),
                if a.timing { format!("{secs:.3}") } else { String::new() }
            )
            .expect("write to string");
            Ok(row)
        })
        .collect();
    let mut table = String::from("file,psnr,ssim,ks,er,seconds\n");
    for row in rows {
        table.push_str(&row?);
        table.push('\n');
    }
    print!("{table}");
    if let Some(p) = &a.out {
        std::fs::write(p, &table)?;
    }
    Ok(())
}

fn cmd_trace_plot(a: TracePlotArgs) -> CliResult {
    let mut out = BufWriter::new(File::create(&a.out)?);
    for (i, path) in a.traces.iter().enumerate() {
        let text = std::fs::read_to_string(path)?;
        let mut lines = text.lines();
        let header = lines.next().unwrap_or_default();
        if !header.ends_with(TRACE_HEADER) {
            return Err(GcmError::Format(format!("{} is not a trace CSV", path.display())).into());
        }
        if i > 0 {
            writeln!(out, "\n")?;
        }
        writeln!(out, "# {}", path.display())?;
        writeln!(out, "# {}", header.replace(',', " "))?;
        for line in lines.filter(|l| !l.trim().is_empty()) {
            writeln!(out, "{}", line.replace(',', " "))?;
        }
    }
    out.flush()?;
    Ok(())
}
