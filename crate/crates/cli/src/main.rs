use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

mod commands;
mod error;

use error::CliError;

#[derive(Parser, Debug)]
#[command(
    name = "panoalign",
    version,
    about = "Scale-consistent 360-degree depth from per-face cubemap predictions"
)]
struct Cli {
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true, env = "PANOALIGN_THREADS")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum SceneArg {
    Box,
    Sphere,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Project an ERP depth map onto six cube faces and write a manifest.
    Split {
        /// ERP depth (PFM or 16-bit PNG), radial distances.
        #[arg(long)]
        erp: PathBuf,
        /// Optional ERP world-frame normal map (three-channel PFM).
        #[arg(long)]
        normals: Option<PathBuf>,
        /// Optional ERP intensity image recorded in the manifest.
        #[arg(long)]
        intensity: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Face side in pixels (default: ERP height / 2).
        #[arg(long)]
        face_size: Option<usize>,
        /// Overwrite existing outputs.
        #[arg(long)]
        force: bool,
    },
    /// Merge per-face predictions into ERP depth (and normals).
    Merge {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        normals_out: Option<PathBuf>,
    },
    /// Merge, then jointly refine depth, normals and per-face scales.
    Align {
        #[arg(long)]
        manifest: PathBuf,
        /// Optimizer settings (JSON); defaults when absent.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Drop unknown config keys with a warning instead of failing.
        #[arg(long)]
        lenient: bool,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        normals_out: Option<PathBuf>,
        #[arg(long)]
        ply: Option<PathBuf>,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Median-align a prediction to ground truth and report metrics.
    Eval {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        /// Comma-separated metric groups: 2d, 3d.
        #[arg(long, default_value = "2d,3d")]
        metrics: String,
        /// F-score threshold in meters.
        #[arg(long, default_value_t = 0.1)]
        tau: f64,
        /// Voxel size for IoU in meters.
        #[arg(long, default_value_t = 0.1)]
        voxel: f64,
        #[arg(long, default_value_t = 100_000)]
        max_points: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Also write the report as JSON.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Render a synthetic scene with per-face scale corruption.
    Synth {
        #[arg(long, value_enum, default_value_t = SceneArg::Box)]
        scene: SceneArg,
        /// ERP size as WxH with W = 2H.
        #[arg(long, default_value = "256x128")]
        size: String,
        /// Six per-face scale factors.
        #[arg(long, value_delimiter = ',', default_value = "1,1,1,1,1,1")]
        scales: Vec<f64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        face_size: Option<usize>,
        /// Angular normal noise, degrees.
        #[arg(long, default_value_t = 0.0)]
        normal_noise: f64,
        /// Relative multiplicative depth noise.
        #[arg(long, default_value_t = 0.0)]
        depth_noise: f64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        force: bool,
    },
    /// Compare analytic gradients with central differences.
    Gradcheck {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Instance size as WxH, at most 32x16.
        #[arg(long, default_value = "16x8")]
        size: String,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::validation("--threads must be positive"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::runtime(e.to_string()))?;
    }
    match cli.command {
        Command::Split {
            erp,
            normals,
            intensity,
            out,
            face_size,
            force,
        } => commands::split(&commands::SplitArgs {
            erp,
            normals,
            intensity,
            out,
            face_size,
            force,
        }),
        Command::Merge {
            manifest,
            out,
            normals_out,
        } => commands::merge(&manifest, &out, normals_out.as_deref()),
        Command::Align {
            manifest,
            config,
            lenient,
            out,
            normals_out,
            ply,
            report,
        } => commands::align(&commands::AlignArgs {
            manifest,
            config,
            lenient,
            out,
            normals_out,
            ply,
            report,
        }),
        Command::Eval {
            pred,
            gt,
            metrics,
            tau,
            voxel,
            max_points,
            seed,
            out,
        } => commands::eval(&commands::EvalArgs {
            pred,
            gt,
            metrics,
            tau,
            voxel,
            max_points,
            seed,
            out,
        }),
        Command::Synth {
            scene,
            size,
            scales,
            seed,
            face_size,
            normal_noise,
            depth_noise,
            out,
            force,
        } => commands::synth(&commands::SynthArgs {
            scene,
            size,
            scales,
            seed,
            face_size,
            normal_noise,
            depth_noise,
            out,
            force,
        }),
        Command::Gradcheck { seed, size } => commands::gradcheck(seed, &size),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
