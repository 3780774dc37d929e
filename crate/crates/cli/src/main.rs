//! `tubeloc`: detection, pose estimation and stereo localization of sample
//! tubes from the command line. Results are written to stdout as one JSON
//! record per line; diagnostics go to stderr.

mod commands;
mod config;
mod error;
mod model;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::commands::{BoxArg, Ctx, ModelSpec};
use crate::config::{RunConfig, CONFIG_ENV};
use crate::error::CliError;

#[derive(Debug, Parser)]
#[command(name = "tubeloc", version, about = "Sample-tube detection, pose estimation and stereo localization")]
struct Cli {
    #[command(flatten)]
    overrides: Overrides,
    #[command(subcommand)]
    command: Command,
}

/// Flags overriding the config file; every one is optional.
#[derive(Debug, Args)]
struct Overrides {
    /// TOML run configuration
    #[arg(long, global = true, env = CONFIG_ENV, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Darknet network cfg (default: built-in single-class YOLOv3-tiny)
    #[arg(long, global = true, value_name = "FILE")]
    cfg: Option<PathBuf>,
    /// Darknet weight file
    #[arg(long, global = true, value_name = "FILE")]
    weights: Option<PathBuf>,
    /// Quantization sidecar; runs the 8-bit path
    #[arg(long, global = true, value_name = "FILE")]
    calibration: Option<PathBuf>,
    /// Stereo rig file (key = value)
    #[arg(long, global = true, value_name = "FILE")]
    rig: Option<PathBuf>,
    /// Detection confidence threshold
    #[arg(long = "conf", global = true, value_name = "P")]
    confidence: Option<f32>,
    /// NMS IoU threshold
    #[arg(long, global = true, value_name = "IOU")]
    nms_iou: Option<f32>,
    /// IoU needed for a detection to match a label
    #[arg(long, global = true, value_name = "IOU")]
    match_iou: Option<f64>,
    /// Adaptive threshold block size (odd)
    #[arg(long, global = true, value_name = "PX")]
    block: Option<usize>,
    /// Adaptive threshold offset
    #[arg(long, global = true, allow_negative_numbers = true, value_name = "LEVELS")]
    offset: Option<i32>,
    /// Directory for reports, debug rasters and DEMs
    #[arg(long, global = true, value_name = "DIR")]
    out_dir: Option<PathBuf>,
    /// Write intermediate pose-stage rasters
    #[arg(long, global = true)]
    debug: bool,
    /// DEM cell size in metres
    #[arg(long, global = true, value_name = "M")]
    dem_cell: Option<f64>,
    /// Images processed concurrently (default: all cores)
    #[arg(short, long, global = true, value_name = "N")]
    jobs: Option<usize>,
}

impl Overrides {
    fn apply(self, mut cfg: RunConfig) -> RunConfig {
        fn set<T>(slot: &mut T, v: Option<T>) {
            if let Some(v) = v {
                *slot = v;
            }
        }
        cfg.model.cfg = self.cfg.or(cfg.model.cfg);
        cfg.model.weights = self.weights.or(cfg.model.weights);
        cfg.model.calibration = self.calibration.or(cfg.model.calibration);
        cfg.rig.path = self.rig.or(cfg.rig.path);
        set(&mut cfg.thresholds.confidence, self.confidence);
        set(&mut cfg.thresholds.nms_iou, self.nms_iou);
        set(&mut cfg.thresholds.match_iou, self.match_iou);
        set(&mut cfg.pose.block, self.block);
        set(&mut cfg.pose.offset, self.offset);
        cfg.output.dir = self.out_dir.or(cfg.output.dir);
        cfg.output.debug |= self.debug;
        set(&mut cfg.output.dem_cell_m, self.dem_cell);
        cfg.run.jobs = self.jobs.or(cfg.run.jobs);
        cfg
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Detect tubes; one JSON line per detection
    Detect {
        /// PGM frames
        #[arg(required = true)]
        images: Vec<PathBuf>,
    },
    /// Estimate the image-plane axis of one tube
    Pose {
        image: PathBuf,
        /// Box x,y,w,h in image pixels
        #[arg(long = "box", value_name = "X,Y,W,H", required_unless_present = "auto", conflicts_with = "auto")]
        bbox: Option<BoxArg>,
        /// Use the most confident detection
        #[arg(long)]
        auto: bool,
    },
    /// Detect, estimate pose and lift every tube to world coordinates
    Localize {
        image: PathBuf,
        /// PFM disparity aligned with the image
        disparity: PathBuf,
        /// Skip detection and localize this box
        #[arg(long = "box", value_name = "X,Y,W,H")]
        bbox: Option<BoxArg>,
        /// Also write a digital elevation map of the frame
        #[arg(long)]
        dem: bool,
    },
    /// Calibrate activation ranges and write an 8-bit model
    Quantize {
        /// Directory of PGM calibration frames
        calib_dir: PathBuf,
        /// Output prefix; writes PREFIX.cfg, PREFIX.weights and PREFIX.calib
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Copy backbone layers from one weight file into another
    Transplant {
        /// Weights providing the backbone
        source: PathBuf,
        /// Weights receiving it
        dest: PathBuf,
        /// Cfg of the source model (default: same as --cfg)
        #[arg(long, value_name = "FILE")]
        source_cfg: Option<PathBuf>,
        /// First layer not copied (default: the first route layer)
        #[arg(long)]
        cutoff: Option<usize>,
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Evaluate detection (and optionally orientation) on a labelled dataset
    Eval {
        /// Dataset root with images/ and labels/
        dataset: PathBuf,
        /// Also score pose orientation against the annotated angles
        #[arg(long)]
        orientation: bool,
        /// Print aligned text tables instead of JSON
        #[arg(long)]
        table: bool,
    },
    /// Time forward pass plus decoding, single-threaded
    Bench {
        /// NAME=WEIGHTS, NAME=CFG,WEIGHTS or NAME=CFG,WEIGHTS,CALIB (default: the configured model)
        #[arg(long = "model", value_name = "SPEC")]
        models: Vec<ModelSpec>,
        /// Directory of PGM frames
        #[arg(long, value_name = "DIR")]
        images: PathBuf,
        #[arg(long, default_value_t = 5)]
        warmup: usize,
        #[arg(long, default_value_t = 50)]
        iters: usize,
        /// Print an aligned text table instead of JSON
        #[arg(long)]
        table: bool,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    let base = match cli.overrides.config.as_deref() {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    let config = cli.overrides.apply(base);
    config.validate()?;
    let ctx = Ctx::new(config)?;
    match cli.command {
        Command::Detect { images } => commands::detect(&ctx, &images),
        Command::Pose { image, bbox, auto: _ } => commands::pose(&ctx, &image, bbox.map(|b| b.0)),
        Command::Localize { image, disparity, bbox, dem } => commands::localize(&ctx, &image, &disparity, bbox.map(|b| b.0), dem),
        Command::Quantize { calib_dir, out } => commands::quantize(&ctx, &calib_dir, &out),
        Command::Transplant { source, dest, source_cfg, cutoff, out } => {
            commands::transplant(&ctx, &source, &dest, source_cfg.as_deref(), cutoff, &out)
        }
        Command::Eval { dataset, orientation, table } => commands::eval(&ctx, &dataset, orientation, table),
        Command::Bench { models, images, warmup, iters, table } => commands::bench(&ctx, &models, &images, warmup, iters, table),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("tubeloc: error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
