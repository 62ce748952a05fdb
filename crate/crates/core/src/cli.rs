//! The `archetype` command line.

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::edaa::SolverConfig;
use crate::ensemble::{run_ensemble, EnsembleConfig, DEFAULT_FIT_SLACK, DEFAULT_RUNS};
use crate::error::{Error, Result};
use crate::image::{l2_normalize, AbundanceMatrix, EndmemberMatrix, HsiImage};
use crate::io::{
    read_cube, read_matrix, write_cube_npy, write_npy, write_outputs, InputDescriptor, RunReport,
};
use crate::metrics::evaluate;
use crate::synth::{generate, SynthSpec};

/// Environment variable bounding the worker pool (0 = hardware default).
pub const THREADS_ENV: &str = "ARCHETYPE_THREADS";

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "archetype", version, about = "Blind hyperspectral unmixing")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Estimate endmembers and abundances from a cube.
    Unmix(UnmixArgs),
    /// Score an unmixing result against ground truth.
    Evaluate(EvaluateArgs),
    /// Generate a synthetic cube with known endmembers and abundances.
    Synth(SynthArgs),
    /// Summarize a cube.
    Info(InfoArgs),
}

#[derive(Debug, Args)]
struct UnmixArgs {
    /// Cube file: .npy (bands×pixels or height×width×bands) or ENVI .hdr.
    #[arg(long)]
    input: PathBuf,
    /// Number of endmembers.
    #[arg(long)]
    endmembers: usize,
    #[arg(long, default_value_t = DEFAULT_RUNS)]
    runs: usize,
    #[arg(long, default_value_t = SolverConfig::DEFAULT_OUTER)]
    outer: usize,
    /// Entropic steps per factor per outer iteration.
    #[arg(long, default_value_t = SolverConfig::DEFAULT_INNER)]
    inner: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Comma-separated step factors to sample from.
    #[arg(long, value_delimiter = ',')]
    gamma_set: Option<Vec<f64>>,
    #[arg(long, default_value_t = DEFAULT_FIT_SLACK)]
    fit_slack: f64,
    /// Rank candidates by cosine similarity instead of the raw inner product.
    #[arg(long)]
    cosine_coherence: bool,
    #[arg(long)]
    output: PathBuf,
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    /// Directory written by `unmix`.
    #[arg(long)]
    est: PathBuf,
    /// Ground-truth endmembers, bands×p (.npy or .csv).
    #[arg(long)]
    gt_endmembers: PathBuf,
    /// Ground-truth abundances, p×pixels (.npy or .csv).
    #[arg(long)]
    gt_abundances: PathBuf,
    #[arg(long)]
    json: bool,
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[arg(long)]
    bands: usize,
    #[arg(long)]
    pixels: usize,
    #[arg(long)]
    endmembers: usize,
    /// Signal-to-noise ratio in dB; omit for a noiseless cube.
    #[arg(long)]
    snr: Option<f64>,
    #[arg(long, default_value_t = 1.0)]
    alpha: f64,
    #[arg(long)]
    pure_pixels: bool,
    #[arg(long)]
    seed: u64,
    /// Raster height; the cube is written as height×width×bands.
    #[arg(long)]
    height: Option<usize>,
    #[arg(long)]
    output: PathBuf,
}

#[derive(Debug, Args)]
struct InfoArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    json: bool,
}

/// Parses `args` (including the program name), runs the command and returns
/// the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let threads = match std::env::var(THREADS_ENV) {
        Err(_) => 0,
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) => n,
            Err(_) => {
                eprintln!("error: {THREADS_ENV} must be a non-negative integer, got '{v}'");
                return EXIT_USAGE;
            }
        },
    };
    let outcome = match cli.command {
        Command::Unmix(a) => unmix(a, threads),
        Command::Evaluate(a) => evaluate_cmd(a),
        Command::Synth(a) => synth(a),
        Command::Info(a) => info(a),
    };
    match outcome {
        Ok(()) => EXIT_OK,
        Err(e @ Error::InvalidConfig(_)) => {
            eprintln!("error: {e}");
            EXIT_USAGE
        }
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_DATA
        }
    }
}

fn print_stdout(text: &str) -> Result<()> {
    let mut out = std::io::stdout().lock();
    out.write_all(text.as_bytes())
        .and_then(|_| out.flush())
        .map_err(|e| Error::io("<stdout>", e))
}

fn unmix(args: UnmixArgs, threads: usize) -> Result<()> {
    let mut cfg = EnsembleConfig::new(args.endmembers);
    cfg.runs = args.runs;
    cfg.base_seed = args.seed;
    cfg.fit_slack = args.fit_slack;
    cfg.cosine_coherence = args.cosine_coherence;
    cfg.threads = threads;
    cfg.solver.outer_iterations = args.outer;
    cfg.solver.inner_abundances = args.inner;
    cfg.solver.inner_contributions = args.inner;
    if let Some(g) = args.gamma_set {
        cfg.gamma_set = g;
    }
    cfg.validate()?;

    let image = read_cube(&args.input)?;
    if args.endmembers > image.pixels() {
        return Err(Error::InvalidConfig(format!(
            "{} endmembers requested from {} pixels",
            args.endmembers,
            image.pixels()
        )));
    }
    let normalized = l2_normalize(&image)?;
    if !normalized.zero_pixels.is_empty() {
        eprintln!(
            "warning: {} pixels have an all-zero spectrum",
            normalized.zero_pixels.len()
        );
    }
    let outcome = run_ensemble(&normalized.image, &cfg)?;
    let report = RunReport::new(
        InputDescriptor::new(&args.input, &image),
        &cfg,
        outcome.report,
        normalized.zero_pixels.len(),
    );
    write_outputs(&args.output, &outcome.best, &report, image.spatial())?;
    let sel = &report.selection;
    eprintln!(
        "selected run {} of {} (seed {}, gamma {}, fit {:.6}, {} candidates)",
        sel.selected,
        report.runs.len(),
        outcome.best.seed,
        outcome.best.gamma,
        outcome.best.fit_l1,
        sel.candidates.len()
    );
    Ok(())
}

fn evaluate_cmd(args: EvaluateArgs) -> Result<()> {
    let est_e = EndmemberMatrix::new(read_matrix(&args.est.join("endmembers.csv"))?)?;
    let est_a = AbundanceMatrix::new(read_matrix(&args.est.join("abundances.npy"))?)?;
    let gt_e = EndmemberMatrix::new(read_matrix(&args.gt_endmembers)?)?;
    let gt_a = read_matrix(&args.gt_abundances)?;
    if gt_e.endmembers() != est_e.endmembers() || gt_e.bands() != est_e.bands() {
        return Err(Error::DimensionMismatch {
            op: "evaluate endmembers",
            left: gt_e.matrix().shape(),
            right: est_e.matrix().shape(),
        });
    }
    if gt_a.shape() != est_a.matrix().shape() {
        return Err(Error::DimensionMismatch {
            op: "evaluate abundances",
            left: gt_a.shape(),
            right: est_a.matrix().shape(),
        });
    }
    let result = evaluate(&gt_e, &gt_a, &est_e, &est_a, None)?;
    if result.gt_renormalized {
        eprintln!("warning: ground-truth abundances were rescaled onto the simplex");
    }
    if args.json {
        let text = serde_json::to_string_pretty(&result).expect("evaluation serializes");
        print_stdout(&format!("{text}\n"))
    } else {
        print_stdout(&result.to_table())
    }
}

fn synth(args: SynthArgs) -> Result<()> {
    let mut spec = SynthSpec::new(args.bands, args.pixels, args.endmembers);
    spec.snr_db = args.snr;
    spec.dirichlet_alpha = args.alpha;
    spec.pure_pixels = args.pure_pixels;
    spec.seed = args.seed;
    spec.validate()?;
    let mut s = generate(&spec)?;
    if let Some(h) = args.height {
        if h == 0 || !args.pixels.is_multiple_of(h) {
            return Err(Error::InvalidConfig(format!(
                "height {h} does not divide {} pixels",
                args.pixels
            )));
        }
        s.image = s.image.with_spatial(h, args.pixels / h)?;
    }
    std::fs::create_dir_all(&args.output).map_err(|e| Error::io(&args.output, e))?;
    write_cube_npy(&args.output.join("cube.npy"), &s.image)?;
    write_npy(&args.output.join("endmembers.npy"), s.endmembers.matrix())?;
    write_npy(&args.output.join("abundances.npy"), s.abundances.matrix())?;
    Ok(())
}

#[derive(Debug, Serialize)]
struct CubeSummary {
    bands: usize,
    pixels: usize,
    height: Option<usize>,
    width: Option<usize>,
    wavelength_range: Option<(f64, f64)>,
    min: f64,
    max: f64,
    zero_pixels: usize,
}

impl CubeSummary {
    fn new(image: &HsiImage) -> Self {
        let values = image.data().as_slice();
        let (height, width) = image.spatial().unzip();
        let range = |v: &[f64]| {
            v.iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| {
                    (lo.min(x), hi.max(x))
                })
        };
        let (min, max) = range(values);
        Self {
            bands: image.bands(),
            pixels: image.pixels(),
            height,
            width,
            wavelength_range: image.wavelengths().map(range),
            min,
            max,
            zero_pixels: image.zero_pixels().len(),
        }
    }

    fn line(&self) -> String {
        let opt = |v: Option<usize>| v.map_or_else(|| "-".to_string(), |v| v.to_string());
        let wl = self
            .wavelength_range
            .map_or_else(|| "-".to_string(), |(lo, hi)| format!("{lo}..{hi}"));
        format!(
            "bands={} pixels={} height={} width={} wavelengths={wl} min={} max={} zero_pixels={}\n",
            self.bands,
            self.pixels,
            opt(self.height),
            opt(self.width),
            self.min,
            self.max,
            self.zero_pixels
        )
    }
}

fn info(args: InfoArgs) -> Result<()> {
    let summary = CubeSummary::new(&read_cube(&args.input)?);
    if args.json {
        let text = serde_json::to_string_pretty(&summary).expect("summary serializes");
        print_stdout(&format!("{text}\n"))
    } else {
        print_stdout(&summary.line())
    }
}
