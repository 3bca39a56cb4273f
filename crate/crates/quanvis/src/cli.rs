//! Command-line front end: argv parsing, config overrides, and dispatch
//! into the harness. Logs go to stderr; machine-readable results go to
//! files under the configured output directory.

use clap::{Args, CommandFactory, Parser, Subcommand};
use std::path::PathBuf;

use crate::error::{Error, Result};
use crate::harness::{self, ExperimentConfig, ModelKind, Stage};
use crate::imaging::{self, CategoryTable, MaskLabeling};

#[derive(Parser, Debug)]
#[command(
    name = "quanvis",
    version,
    about = "Hybrid quantum-classical vision experiments: quanvolutional preprocessing, grid localization, and matched QNN/CNN training",
    propagate_version = true
)]
pub struct Cli {
    /// Increase stderr log verbosity (-v: info, -vv: debug)
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Preprocess the configured corpus into cached quantum tensors
    Quanvolve(RunArgs),
    /// Train a single model (stage-one configs; first train count and seed)
    Train(TrainArgs),
    /// Evaluate a model checkpoint on the configured test set
    Evaluate(EvaluateArgs),
    /// Run the stage-1 comparison protocol (QNN vs CNN over train counts)
    Stage1(RunArgs),
    /// Run the stage-2 localization protocol (region grids, 16 qubits)
    Stage2(RunArgs),
    /// Generate a synthetic crack corpus on disk
    Synth(SynthArgs),
    /// Split one image into its 9x9 region grid
    Split(SplitArgs),
    /// Stitch region predictions back into an annotated image
    Stitch(StitchArgs),
}

/// Flags shared by the experiment subcommands. Flag overrides take
/// precedence over config file values; the cache directory resolves as
/// flag, then QUANVIS_CACHE_DIR, then config.
#[derive(Args, Debug)]
pub struct RunArgs {
    /// Experiment config file (TOML)
    #[arg(long)]
    pub config: PathBuf,
    /// Override the config's master seeds (comma separated)
    #[arg(long, value_delimiter = ',')]
    pub seeds: Option<Vec<u64>>,
    /// Override the quantum-tensor cache directory
    #[arg(long)]
    pub cache_dir: Option<PathBuf>,
    /// Override the output directory
    #[arg(long)]
    pub output_dir: Option<PathBuf>,
    /// Stage 1 only: run a single training-input count
    #[arg(long)]
    pub train_count: Option<usize>,
    /// Stage 2 only: run a single train/test split ratio
    #[arg(long)]
    pub split_ratio: Option<f64>,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[command(flatten)]
    pub run: RunArgs,
    /// Which model to train
    #[arg(long, value_parser = ["qnn", "cnn"])]
    pub model: String,
}

#[derive(Args, Debug)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub run: RunArgs,
    /// Model checkpoint to evaluate
    #[arg(long)]
    pub checkpoint: PathBuf,
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    /// Experiment config file (TOML); the synthetic section drives generation
    #[arg(long)]
    pub config: PathBuf,
    /// Directory to write the corpus into
    #[arg(long)]
    pub out: PathBuf,
    /// Override the number of images
    #[arg(long)]
    pub count: Option<usize>,
    /// Write masks alongside (stage-two layout); defaults to the stage's needs
    #[arg(long)]
    pub with_masks: bool,
}

#[derive(Args, Debug)]
pub struct SplitArgs {
    /// Image to split
    #[arg(long)]
    pub image: PathBuf,
    /// Category table file (height,width,target,weight rows); omitted means
    /// fallback padding to the next multiple of 9
    #[arg(long)]
    pub categories: Option<PathBuf>,
    /// Ground-truth mask aligned with the image
    #[arg(long)]
    pub mask: Option<PathBuf>,
    /// Fraction of defect pixels that makes a region positive
    #[arg(long, default_value_t = 0.01)]
    pub threshold: f64,
    /// Output directory for region tiles and labels
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct StitchArgs {
    /// Source image the predictions belong to
    #[arg(long)]
    pub image: PathBuf,
    /// Category table file; omitted means fallback padding
    #[arg(long)]
    pub categories: Option<PathBuf>,
    /// Sidecar file of row,col,label,confidence records (81 lines)
    #[arg(long)]
    pub predictions: PathBuf,
    /// Annotated PNG to write
    #[arg(long)]
    pub out: PathBuf,
}

/// Top-level clap command, exposed for the help golden tests.
pub fn command() -> clap::Command {
    Cli::command()
}

/// Parse argv and run; the caller maps errors to exit codes.
pub fn parse_and_dispatch() -> Result<()> {
    let cli = Cli::parse();
    init_logging(cli.verbose);
    dispatch(cli.command)
}

fn init_logging(verbosity: u8) {
    let level = match verbosity {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    let _ = env_logger::Builder::new()
        .filter_level(level)
        .format_timestamp(None)
        .try_init();
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Quanvolve(args) => {
            let config = load_config(&args)?;
            let stats = harness::quanvolve_corpus(&config)?;
            println!(
                "quanvolved: {} computed, {} cache hits, {:.2}s wall",
                stats.computed, stats.cache_hits, stats.wall_seconds
            );
            Ok(())
        }
        Command::Train(args) => {
            let config = load_config(&args.run)?;
            let kind = match args.model.as_str() {
                "qnn" => ModelKind::Qnn,
                _ => ModelKind::Cnn,
            };
            let (checkpoint, metrics) = harness::train_single(&config, kind)?;
            println!("checkpoint: {}", checkpoint.display());
            println!("metrics: {}", metrics.display());
            Ok(())
        }
        Command::Evaluate(args) => {
            let config = load_config(&args.run)?;
            let (loss, acc) = harness::evaluate_checkpoint(&config, &args.checkpoint)?;
            println!("test_loss={loss} test_acc={acc}");
            Ok(())
        }
        Command::Stage1(args) => {
            let config = load_config(&args)?;
            let report = harness::run_stage1(&config)?;
            let written = harness::emit_report(&report, &config.output_dir)?;
            println!("stage 1 complete: {} runs, {} files", report.runs.len(), written.len());
            for protocol in report.protocols() {
                println!(
                    "  {protocol}: mean final test acc qnn={:.4} cnn={:.4}",
                    report.mean_final_test_acc(&protocol, ModelKind::Qnn),
                    report.mean_final_test_acc(&protocol, ModelKind::Cnn)
                );
            }
            Ok(())
        }
        Command::Stage2(args) => {
            let config = load_config(&args)?;
            let report = harness::run_stage2(&config)?;
            let written = harness::emit_report(&report, &config.output_dir)?;
            println!("stage 2 complete: {} runs, {} files", report.runs.len(), written.len());
            for protocol in report.protocols() {
                println!(
                    "  {protocol}: mean final test acc qnn={:.4} cnn={:.4}",
                    report.mean_final_test_acc(&protocol, ModelKind::Qnn),
                    report.mean_final_test_acc(&protocol, ModelKind::Cnn)
                );
            }
            if let Some(reference) = report.reference_validation_accuracy {
                println!("  reference validation accuracy (reported): {reference}");
            }
            Ok(())
        }
        Command::Synth(args) => {
            let config = ExperimentConfig::from_path(&args.config)?;
            let mut corpus = harness::load_corpus_synthetic_override(&config, args.count)?;
            let with_masks = args.with_masks || config.stage == Stage::Two;
            if !with_masks {
                for img in &mut corpus {
                    img.mask = None;
                }
            }
            harness::dataset::write_corpus(&corpus, &args.out, with_masks)?;
            println!("wrote {} images to {}", corpus.len(), args.out.display());
            Ok(())
        }
        Command::Split(args) => run_split(args),
        Command::Stitch(args) => run_stitch(args),
    }
}

fn load_config(args: &RunArgs) -> Result<ExperimentConfig> {
    let mut config = ExperimentConfig::from_path(&args.config)?;
    if let Some(seeds) = &args.seeds {
        if seeds.is_empty() {
            return Err(Error::Config("--seeds needs at least one value".into()));
        }
        config.seeds = seeds.clone();
    }
    if let Some(dir) = &args.cache_dir {
        config.cache_dir = Some(dir.clone());
        // The flag outranks the environment override.
        std::env::set_var("QUANVIS_CACHE_DIR", dir);
    }
    if let Some(dir) = &args.output_dir {
        config.output_dir = dir.clone();
    }
    match (args.train_count, config.stage) {
        (Some(count), Stage::One) => config.dataset.train_counts = vec![count],
        (Some(_), Stage::Two) => {
            return Err(Error::Config(
                "--train-count applies to stage-one configs; use --split-ratio".into(),
            ))
        }
        (None, _) => {}
    }
    match (args.split_ratio, config.stage) {
        (Some(ratio), Stage::Two) => config.dataset.split_ratios = vec![ratio],
        (Some(_), Stage::One) => {
            return Err(Error::Config(
                "--split-ratio applies to stage-two configs; use --train-count".into(),
            ))
        }
        (None, _) => {}
    }
    config.validate()?;
    Ok(config)
}

fn load_image_gray(path: &std::path::Path) -> Result<ndarray::Array2<f64>> {
    let rgb = image::open(path)?.to_rgb8();
    let mut gray = crate::quanv::luminance_gray(&rgb);
    crate::quanv::normalize_unit(&mut gray);
    Ok(gray)
}

fn load_table(path: &Option<PathBuf>) -> Result<CategoryTable> {
    match path {
        Some(p) => CategoryTable::load(p),
        None => Ok(CategoryTable::default()),
    }
}

fn run_split(args: SplitArgs) -> Result<()> {
    let image = load_image_gray(&args.image)?;
    let table = load_table(&args.categories)?;
    let source_id = args
        .image
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "image".into());
    let mut grid = imaging::split_image(&image, &source_id, &table, true)?;

    if let Some(mask_path) = &args.mask {
        let gray = image::open(mask_path)?.to_luma8();
        let (w, h) = gray.dimensions();
        let mask = ndarray::Array2::from_shape_fn((h as usize, w as usize), |(y, x)| {
            gray.get_pixel(x as u32, y as u32).0[0] > 127
        });
        imaging::label_regions(
            &mut grid,
            &MaskLabeling {
                mask,
                positive_threshold: args.threshold,
            },
        )?;
    }

    std::fs::create_dir_all(&args.out)?;
    let mut labels = String::from("row,col,label\n");
    for region in &grid.regions {
        let (rh, rw) = grid.region_size;
        let mut tile = image::GrayImage::new(rw as u32, rh as u32);
        for ((y, x), &v) in region.pixels.indexed_iter() {
            tile.put_pixel(x as u32, y as u32, image::Luma([(v * 255.0).round() as u8]));
        }
        tile.save(args.out.join(format!(
            "region_r{}c{}.png",
            region.row, region.col
        )))?;
        labels.push_str(&format!(
            "{},{},{}\n",
            region.row,
            region.col,
            u8::from(region.label)
        ));
    }
    std::fs::write(args.out.join("labels.csv"), labels)?;
    println!(
        "split {} into 81 regions of {}x{} (weight {}), wrote {}",
        source_id,
        grid.region_size.0,
        grid.region_size.1,
        grid.category.weight(),
        args.out.display()
    );
    Ok(())
}

fn run_stitch(args: StitchArgs) -> Result<()> {
    let image = load_image_gray(&args.image)?;
    let table = load_table(&args.categories)?;
    let source_id = args
        .image
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "image".into());
    let grid = imaging::split_image(&image, &source_id, &table, true)?;

    let text = std::fs::read_to_string(&args.predictions)?;
    let records = imaging::parse_sidecar(&text)?;
    if records.len() != imaging::GRID * imaging::GRID {
        return Err(Error::Structural(format!(
            "expected 81 prediction records, found {}",
            records.len()
        )));
    }
    let mut predictions = vec![false; records.len()];
    let mut confidences = vec![0.0; records.len()];
    for record in &records {
        if record.row >= imaging::GRID || record.col >= imaging::GRID {
            return Err(Error::Structural(format!(
                "record ({}, {}) outside the 9x9 grid",
                record.row, record.col
            )));
        }
        let at = record.row * imaging::GRID + record.col;
        predictions[at] = record.label;
        confidences[at] = record.confidence;
    }

    let stitched = imaging::stitch_predictions(&grid, &predictions, &confidences)?;
    stitched.annotated.save(&args.out)?;
    println!(
        "stitched {} with {} positive regions into {}",
        source_id,
        predictions.iter().filter(|&&p| p).count(),
        args.out.display()
    );
    Ok(())
}
