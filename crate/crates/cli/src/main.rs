use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use tensorprox::harness::{
    bundled_image, load_image, make_mask, psnr, run_completion, save_image, write_records,
    Algorithm, CompletionRun, ExperimentRecord, Extrapolation, Family,
};
use tensorprox::DenseTensor;

mod config;
mod demo;
mod selftest;

use config::RunOptions;

#[derive(Parser)]
#[command(name = "tensorprox", version, about = "Tensor completion with double proximal gradient solvers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Complete one image with one algorithm.
    Complete {
        #[command(flatten)]
        opts: RunOptions,
        /// Write the recovered image here (PNG or PPM).
        #[arg(long, value_name = "PATH")]
        save: Option<PathBuf>,
    },
    /// Run the algorithm grid over images and mask levels.
    Bench {
        #[command(flatten)]
        opts: RunOptions,
        /// Dump every recovered tensor as raw little-endian f64 into this directory.
        #[arg(long, value_name = "DIR")]
        save_tensors: Option<PathBuf>,
    },
    /// Show extrapolation recovering the limit of geometric sequences.
    ExtrapolateDemo {
        /// Largest extrapolation order to demonstrate.
        #[arg(long, default_value_t = 3, value_name = "INT")]
        window: usize,
        #[arg(long, default_value_t = 42, value_name = "INT")]
        seed: u64,
    },
    /// Run the built-in oracle checks.
    Selftest,
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Complete { opts, save } => complete(opts.merged()?, save.as_deref())?,
        Command::Bench { opts, save_tensors } => bench(opts.merged()?, save_tensors.as_deref())?,
        Command::ExtrapolateDemo { window, seed } => demo::run(window, seed)?,
        Command::Selftest => return selftest::run(),
    }
    Ok(ExitCode::SUCCESS)
}

struct Source {
    label: String,
    path: Option<PathBuf>,
    image: DenseTensor,
}

fn sources(opts: &RunOptions) -> Result<Vec<Source>> {
    if opts.image.is_empty() {
        return Ok(vec![Source { label: "bundled".into(), path: None, image: bundled_image()? }]);
    }
    opts.image
        .iter()
        .map(|p| {
            let image = load_image(p).with_context(|| format!("loading {}", p.display()))?;
            let label = p.file_stem().map_or_else(|| p.display().to_string(), |s| s.to_string_lossy().into_owned());
            Ok(Source { label, path: Some(p.clone()), image })
        })
        .collect()
}

/// Runs `algorithms` on one image at one mask level, with the snapshot
/// narrowed to that image and level.
fn run_cell(
    opts: &RunOptions,
    source: &Source,
    p: f64,
    algorithms: &[Algorithm],
) -> Result<(f64, Vec<CompletionRun>)> {
    let cfg = opts.completion_config()?;
    let observed = make_mask(source.image.shape(), &opts.mask_spec(p))?;
    let masked_psnr = psnr(&observed.project(&source.image)?, &source.image)?;
    let cell = RunOptions { image: source.path.iter().cloned().collect(), mask_p: vec![p], ..opts.clone() };
    let snapshot = cell.snapshot(&cfg);
    let level = if opts.mask_image.is_some() { observed.missing_fraction() } else { p };
    let runs = run_completion(&source.image, &observed, algorithms, &cfg, level, opts.seed(), &snapshot)?;
    Ok((masked_psnr, runs))
}

fn emit(opts: &RunOptions, records: &[ExperimentRecord]) -> Result<()> {
    let format = opts.record_format();
    match &opts.out {
        Some(path) => {
            let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
            write_records(records, BufWriter::new(file), format).with_context(|| format!("writing {}", path.display()))
        }
        None => write_records(records, io::stdout().lock(), format).context("writing records to stdout"),
    }
}

fn complete(opts: RunOptions, save: Option<&Path>) -> Result<()> {
    if opts.image.len() > 1 || opts.mask_p.len() > 1 {
        bail!("`complete` takes one image and one mask level; use `bench` for grids");
    }
    let algorithm = match opts.algorithms()?.as_slice() {
        [one] => *one,
        _ => Algorithm::from_parts(Family::Tdpg, opts.extrap.map_or(Extrapolation::None, Into::into)),
    };
    let source = sources(&opts)?.remove(0);
    let p = opts.mask_levels()[0];
    let (masked, runs) = run_cell(&opts, &source, p, &[algorithm])?;
    let run = runs.into_iter().next().expect("one algorithm");
    let r = &run.record;
    match &r.failure {
        Some(why) => eprintln!("{}: failed: {why}", r.algorithm),
        None => eprintln!(
            "{}: PSNR {:.2} dB (masked {:.2} dB), Re {:.4}, {} iterations, {} cycles, {:.3} s",
            r.algorithm, r.psnr_db, masked, r.rel_error, r.outer_iters, r.cycles, r.wall_s
        ),
    }
    if let (Some(path), Some(x)) = (save, &run.recovered) {
        save_image(x, path).with_context(|| format!("saving {}", path.display()))?;
    }
    emit(&opts, std::slice::from_ref(&run.record))
}

fn bench(opts: RunOptions, save_tensors: Option<&Path>) -> Result<()> {
    let algorithms = opts.algorithms()?;
    if let Some(dir) = save_tensors {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let mut records = Vec::new();
    let mut table = String::new();
    table.push_str(&format!(
        "{:<12} {:>6} {:<10} {:>9} {:>8} {:>9} {:>7} {:>6}\n",
        "image", "mask", "algorithm", "PSNR(dB)", "Re", "time(s)", "iters", "cycles"
    ));
    for source in sources(&opts)? {
        for p in opts.mask_levels() {
            let (masked, runs) = run_cell(&opts, &source, p, &algorithms)?;
            table.push_str(&format!("{:<12} {:>6.2} {:<10} {:>9.2}\n", source.label, p, "masked", masked));
            for run in runs {
                let r = &run.record;
                table.push_str(&format!(
                    "{:<12} {:>6.2} {:<10} {:>9.2} {:>8.4} {:>9.3} {:>7} {:>6}{}\n",
                    source.label,
                    p,
                    r.algorithm,
                    r.psnr_db,
                    r.rel_error,
                    r.wall_s,
                    r.outer_iters,
                    r.cycles,
                    if r.failure.is_some() { "  FAILED" } else { "" }
                ));
                if let (Some(dir), Some(x)) = (save_tensors, &run.recovered) {
                    let path = dir.join(format!("{}_p{}_{}.f64", source.label, p, r.algorithm));
                    write_raw(x, &path)?;
                }
                records.push(run.record);
            }
        }
    }
    if opts.out.is_some() {
        print!("{table}");
    } else {
        eprint!("{table}");
    }
    emit(&opts, &records)
}

fn write_raw(x: &DenseTensor, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?);
    for v in x.data() {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush().with_context(|| format!("writing {}", path.display()))
}
