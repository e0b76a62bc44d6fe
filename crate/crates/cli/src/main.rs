//! `nlshrink` command-line tool.
//!
//! Exit codes: 0 success, 2 bad arguments or parameters, 3 unreadable or
//! unwritable files, 4 solver divergence.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use nlshrink::experiment::{run_experiment, Algorithm, ExperimentSpec};
use nlshrink::io::{load_image, load_mask, save_cimg, save_magnitude_png, save_mask};
use nlshrink::nls::{FUpdateMethod, SolverSettings};
use nlshrink::penalty::{PenaltyKind, Shrinkage};
use nlshrink::phantom::MAX_INTENSITY;
use nlshrink::{
    gen_mask, make_phantom, measure, run_irw, run_nls, snr_db, ComplexImage, Error, IrwConfig, MaskKind, MaskParams,
    MeasurementModel, SolverTrace,
};

#[derive(Parser)]
#[command(name = "nlshrink", version, about = "Non-local shrinkage reconstruction from undersampled Fourier data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Reconstruct an image from masked k-space samples.
    Reconstruct(ReconstructArgs),
    /// Denoise an image (identity measurement operator).
    Denoise(DenoiseArgs),
    /// Generate a sampling mask.
    Maskgen(MaskgenArgs),
    /// Synthesize a phantom, optionally with its measured k-space.
    Phantom(PhantomArgs),
    /// Tabulate a penalty and its shrinkage rule.
    ShrinkTable(ShrinkTableArgs),
    /// Join two solver traces into one cost-versus-time table.
    Compare(CompareArgs),
    /// Run a batch experiment described by a TOML file.
    Experiment(ExperimentArgs),
}

/// Penalty and solver flags shared by `reconstruct` and `denoise`.
#[derive(Args)]
struct SolverFlags {
    /// Solver settings file; flags given on the command line take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    penalty: Option<PenaltyKind>,
    #[arg(long)]
    p: Option<f64>,
    /// Saturation threshold of thresholded penalties.
    #[arg(long = "T", alias = "threshold")]
    threshold: Option<f64>,
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    beta_init: Option<f64>,
    #[arg(long)]
    beta_incfactor: Option<f64>,
    #[arg(long)]
    t_decfactor: Option<f64>,
    #[arg(long)]
    t_min_fraction: Option<f64>,
    #[arg(long)]
    sigma_decfactor: Option<f64>,
    #[arg(long)]
    outer_iters: Option<usize>,
    #[arg(long)]
    inner_iters: Option<usize>,
    #[arg(long)]
    patch_radius: Option<usize>,
    #[arg(long)]
    search_radius: Option<usize>,
    #[arg(long)]
    f_update: Option<FUpdateMethod>,
    #[arg(long)]
    cg_iters: Option<usize>,
    #[arg(long)]
    cg_tol: Option<f64>,
    /// Ground truth for SNR reporting.
    #[arg(long)]
    truth: Option<PathBuf>,
    /// Write the per-iteration trace as CSV.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Intensity mapped to white in the PNG output.
    #[arg(long, default_value_t = MAX_INTENSITY)]
    max_intensity: f64,
}

impl SolverFlags {
    fn settings(&self) -> nlshrink::Result<SolverSettings> {
        let flags = SolverSettings {
            lambda: self.lambda,
            penalty: self.penalty,
            p: self.p,
            threshold: self.threshold,
            sigma: self.sigma,
            beta_init: self.beta_init,
            beta_incfactor: self.beta_incfactor,
            t_decfactor: self.t_decfactor,
            t_min_fraction: self.t_min_fraction,
            sigma_decfactor: self.sigma_decfactor,
            inner_iters: self.inner_iters,
            outer_iters: self.outer_iters,
            patch_radius: self.patch_radius,
            search_radius: self.search_radius,
            f_update: self.f_update,
            cg_iters: self.cg_iters,
            cg_tol: self.cg_tol,
            ..Default::default()
        };
        Ok(match &self.config {
            Some(path) => SolverSettings::from_file(path)?.merged(&flags),
            None => flags,
        })
    }
}

#[derive(Args)]
struct ReconstructArgs {
    /// Full-grid k-space samples (CIMG); unsampled entries are ignored.
    #[arg(long)]
    kspace: PathBuf,
    #[arg(long)]
    mask: PathBuf,
    /// Output CIMG; a magnitude PNG is written next to it.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value = "nls", value_parser = parse_solver_algorithm)]
    algorithm: Algorithm,
    /// IRW: reweighting steps per continuation level.
    #[arg(long)]
    irw_inner_iters: Option<usize>,
    /// IRW: CG iterations per reweighting step.
    #[arg(long)]
    irw_cg_iters: Option<usize>,
    /// IRW: patch distances below this are clamped when computing weights.
    #[arg(long)]
    weight_floor: Option<f64>,
    #[command(flatten)]
    solver: SolverFlags,
}

#[derive(Args)]
struct DenoiseArgs {
    /// Noisy image (CIMG or grayscale PNG).
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    solver: SolverFlags,
}

#[derive(Args)]
struct MaskgenArgs {
    #[arg(long)]
    kind: MaskKind,
    /// `N` for a square grid or `WxH`.
    #[arg(long, value_parser = parse_dims)]
    dims: (usize, usize),
    #[arg(long, conflicts_with_all = ["acceleration", "spokes"])]
    fraction: Option<f64>,
    #[arg(long = "R", alias = "acceleration", conflicts_with = "spokes")]
    acceleration: Option<f64>,
    #[arg(long)]
    spokes: Option<usize>,
    #[arg(long)]
    seed: u64,
    /// Output mask (CIMG of zeros and ones).
    #[arg(long)]
    out: PathBuf,
    /// Also write the mask as a PNG.
    #[arg(long)]
    png: Option<PathBuf>,
}

#[derive(Args)]
struct PhantomArgs {
    #[arg(long)]
    name: String,
    #[arg(long, value_parser = parse_dims)]
    dims: (usize, usize),
    #[arg(long)]
    seed: u64,
    /// Output image (CIMG).
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    png: Option<PathBuf>,
    /// Multiply by a linear phase with this many cycles along x and y.
    #[arg(long, num_args = 2, value_names = ["CX", "CY"])]
    phase_ramp: Option<Vec<f64>>,
    /// Measure the phantom through this mask and write the k-space to `--kspace-out`.
    #[arg(long, requires = "kspace_out")]
    mask: Option<PathBuf>,
    #[arg(long, requires = "mask")]
    kspace_out: Option<PathBuf>,
    /// Image-domain standard deviation of the complex noise.
    #[arg(long, default_value_t = 0.0, requires = "mask")]
    noise_sigma: f64,
    #[arg(long, default_value_t = 0, requires = "mask")]
    noise_seed: u64,
}

#[derive(Args)]
struct ShrinkTableArgs {
    #[arg(long)]
    penalty: PenaltyKind,
    #[arg(long)]
    beta: f64,
    #[arg(long)]
    p: Option<f64>,
    #[arg(long = "T", alias = "threshold")]
    threshold: Option<f64>,
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long, default_value_t = 3.0)]
    tmax: f64,
    #[arg(long, default_value_t = 0.01)]
    step: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct CompareArgs {
    /// Trace of the first solver.
    #[arg(long)]
    nls: PathBuf,
    /// Trace of the second solver.
    #[arg(long)]
    irw: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ExperimentArgs {
    #[arg(long)]
    spec: PathBuf,
    /// Output directory for `results.csv`, images and traces.
    #[arg(long)]
    out: PathBuf,
    /// Write zero in the seconds column so reruns are byte-identical.
    #[arg(long)]
    no_timing: bool,
}

fn parse_dims(s: &str) -> Result<(usize, usize), String> {
    let parse = |v: &str| {
        v.trim()
            .parse::<usize>()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| format!("invalid dimension `{v}`"))
    };
    match s.split_once(['x', 'X']) {
        Some((w, h)) => Ok((parse(w)?, parse(h)?)),
        None => parse(s).map(|n| (n, n)),
    }
}

fn parse_solver_algorithm(s: &str) -> Result<Algorithm, String> {
    match s.parse::<Algorithm>() {
        Ok(a @ (Algorithm::Nls | Algorithm::Irw)) => Ok(a),
        Ok(other) => Err(format!("`{other}` is not available here; use nls or irw")),
        Err(e) => Err(e.to_string()),
    }
}

fn png_path(out: &Path) -> PathBuf {
    out.with_extension("png")
}

fn report_snr(f: &ComplexImage, truth: Option<&ComplexImage>) -> nlshrink::Result<()> {
    if let Some(t) = truth {
        println!("snr_db {:.6}", snr_db(f, t)?);
    }
    Ok(())
}

fn finish(
    f: &ComplexImage,
    trace: &SolverTrace,
    out: &Path,
    flags: &SolverFlags,
    truth: Option<&ComplexImage>,
) -> nlshrink::Result<()> {
    save_cimg(out, f, true)?;
    save_magnitude_png(&png_path(out), f, flags.max_intensity)?;
    if let Some(path) = &flags.trace {
        trace.save(path)?;
    }
    if let Some(c) = trace.final_cost() {
        println!("final_cost {c:.9e}");
    }
    println!("seconds {:.3}", trace.total_seconds());
    report_snr(f, truth)
}

fn load_truth(flags: &SolverFlags) -> nlshrink::Result<Option<ComplexImage>> {
    flags.truth.as_deref().map(load_image).transpose()
}

fn reconstruct(args: &ReconstructArgs) -> nlshrink::Result<()> {
    let cfg = args.solver.settings()?.build()?;
    let mask = load_mask(&args.mask)?;
    let model = MeasurementModel::new(mask, load_image(&args.kspace)?)?;
    let truth = load_truth(&args.solver)?;
    let (f, trace) = match args.algorithm {
        Algorithm::Irw => {
            let mut irw = IrwConfig::from_solver(&cfg);
            if let Some(v) = args.irw_inner_iters {
                irw.inner_iters = v;
            }
            if let Some(v) = args.irw_cg_iters {
                irw.cg_iters = v;
            }
            if let Some(v) = args.weight_floor {
                irw.weight_floor = v;
            }
            run_irw(&model, &irw, truth.as_ref())?
        }
        _ => run_nls(&model, &cfg, truth.as_ref())?,
    };
    finish(&f, &trace, &args.out, &args.solver, truth.as_ref())
}

fn denoise(args: &DenoiseArgs) -> nlshrink::Result<()> {
    let cfg = args.solver.settings()?.build()?;
    let noisy = load_image(&args.input)?;
    let truth = load_truth(&args.solver)?;
    let (f, trace) = run_nls(&MeasurementModel::denoising(&noisy), &cfg, truth.as_ref())?;
    finish(&f, &trace, &args.out, &args.solver, truth.as_ref())
}

fn maskgen(args: &MaskgenArgs) -> nlshrink::Result<()> {
    let params = match (args.fraction, args.acceleration, args.spokes) {
        (Some(f), _, _) => MaskParams::Fraction(f),
        (_, Some(r), _) => MaskParams::Acceleration(r),
        (_, _, Some(s)) => MaskParams::Spokes(s),
        _ => MaskParams::None,
    };
    let (w, h) = args.dims;
    let mask = gen_mask(args.kind, w, h, params, args.seed)?;
    save_mask(&args.out, &mask)?;
    if let Some(png) = &args.png {
        save_magnitude_png(png, &ComplexImage::from_real(&mask.indicator()), 1.0)?;
    }
    println!("kept {} of {} ({:.4})", mask.count(), w * h, mask.fraction());
    Ok(())
}

fn phantom(args: &PhantomArgs) -> nlshrink::Result<()> {
    let (w, h) = args.dims;
    let mut ph = make_phantom(&args.name, w, h, args.seed)?;
    if let Some(r) = &args.phase_ramp {
        ph = ph.with_phase_ramp(r[0], r[1]);
    }
    save_cimg(&args.out, &ph.image, true)?;
    if let Some(png) = &args.png {
        save_magnitude_png(png, &ph.image, MAX_INTENSITY)?;
    }
    if let (Some(mask), Some(kout)) = (&args.mask, &args.kspace_out) {
        let model = measure(&ph.image, &load_mask(mask)?, args.noise_sigma, args.noise_seed)?;
        save_cimg(kout, model.b0(), true)?;
    }
    Ok(())
}

fn shrink_table(args: &ShrinkTableArgs) -> nlshrink::Result<()> {
    if !(args.step > 0.0) || !(args.tmax >= 0.0) {
        return Err(Error::BadParams("step must be positive and tmax non-negative".into()));
    }
    let spec = nlshrink::PenaltySpec::new(args.penalty, args.p, args.threshold, args.sigma)?;
    let shrink = Shrinkage::new(spec, args.beta)?;
    let mut out = BufWriter::new(File::create(&args.out)?);
    writeln!(out, "t,phi,shrunk")?;
    let n = (args.tmax / args.step + 1e-9).floor() as usize;
    for k in 0..=n {
        let t = k as f64 * args.step;
        writeln!(out, "{t},{},{}", shrink.phi(t), t * shrink.nu(t))?;
    }
    out.flush()?;
    Ok(())
}

fn compare(args: &CompareArgs) -> nlshrink::Result<()> {
    let a = SolverTrace::load(&args.nls)?;
    let b = SolverTrace::load(&args.irw)?;
    let mut out = BufWriter::new(File::create(&args.out)?);
    writeln!(out, "algorithm,outer,inner,seconds,cost,snr_db")?;
    for (name, trace) in [("nls", &a), ("irw", &b)] {
        for r in &trace.records {
            let snr = r.snr_db.map_or(String::new(), |s| s.to_string());
            writeln!(out, "{name},{},{},{},{},{snr}", r.outer, r.inner, r.seconds, r.cost_raw)?;
        }
    }
    out.flush()?;
    if let (Some(ca), Some(cb)) = (a.final_cost(), b.final_cost()) {
        println!("final_cost nls {ca:.9e} irw {cb:.9e} gap {:.4}%", 100.0 * (ca - cb).abs() / ca.min(cb));
    }
    let (sa, sb) = (a.total_seconds(), b.total_seconds());
    println!("seconds nls {sa:.3} irw {sb:.3} ratio {:.2}", sb / sa);
    Ok(())
}

fn experiment(args: &ExperimentArgs) -> nlshrink::Result<()> {
    let mut spec = ExperimentSpec::from_file(&args.spec)?;
    if args.no_timing {
        spec.timing = false;
    }
    let rows = run_experiment(&spec, &args.out)?;
    for r in &rows {
        println!(
            "{:>3} {:<11} {:<28} lambda {:<8e} snr {:>8.3} dB  {:.2} s",
            r.cell_id, r.algorithm, r.penalty, r.lambda, r.snr_db, r.seconds
        );
    }
    Ok(())
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Diverged { .. } | Error::NonFiniteIterate { .. } => 4,
        Error::Toml(_) | Error::InvalidModel(_) | Error::DimensionMismatch { .. } => 3,
        e if e.is_io() => 3,
        _ => 2,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Reconstruct(a) => reconstruct(a),
        Command::Denoise(a) => denoise(a),
        Command::Maskgen(a) => maskgen(a),
        Command::Phantom(a) => phantom(a),
        Command::ShrinkTable(a) => shrink_table(a),
        Command::Compare(a) => compare(a),
        Command::Experiment(a) => experiment(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
