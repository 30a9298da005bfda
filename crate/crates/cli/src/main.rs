use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use geneoh::pipeline::ModelTrainConfig;
use geneoh_cli::commands;
use geneoh_cli::config::{
    load, DenoiseConfig, EvalConfig, ExportConfig, ExportFormat, GenDataConfig, NoiseMode, PerturbConfig, Selection,
};
use geneoh_cli::CliResult;

#[derive(Parser)]
#[command(name = "geneoh", version, about = "Denoise hand-object interaction clips")]
struct Cli {
    /// JSON config merged over the command's defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Base seed; overrides the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Clips processed concurrently.
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a corpus of clean synthetic clips.
    GenData {
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        clips: Option<usize>,
        #[arg(long)]
        frames: Option<usize>,
    },
    /// Add parameter-space noise to every clip of a corpus.
    Perturb {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum)]
        mode: Option<NoiseMode>,
    },
    /// Train the three stage denoisers on a clean corpus.
    Train {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Disable rotation augmentation.
        #[arg(long)]
        no_augment: bool,
    },
    /// Denoise every clip of a corpus.
    Denoise {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        models: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        num_samples: Option<usize>,
        #[arg(long, value_enum)]
        select: Option<Selection>,
    },
    /// Metrics of every clip, with per-metric medians.
    Eval {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gt: Option<PathBuf>,
        /// Output JSON table.
        #[arg(long)]
        out: PathBuf,
    },
    /// Export one clip as OBJ frames or flat binary keypoints.
    Export {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum)]
        format: Option<ExportFormat>,
    },
}

fn run(cli: Cli) -> CliResult<()> {
    let file = cli.config.as_deref();
    let jobs = cli.jobs.max(1);
    match cli.command {
        Command::GenData { out, clips, frames } => {
            let mut cfg: GenDataConfig = load(file)?;
            set(&mut cfg.seed, cli.seed);
            set(&mut cfg.clips, clips);
            set(&mut cfg.synth.frames, frames);
            let files = commands::gen_data(&cfg, &out, jobs)?;
            println!("wrote {} clips to {}", files.len(), out.display());
        }
        Command::Perturb { input, out, mode } => {
            let mut cfg: PerturbConfig = load(file)?;
            set(&mut cfg.seed, cli.seed);
            set(&mut cfg.mode, mode);
            commands::perturb(&cfg, &input, &out, jobs)?;
            println!("wrote perturbed corpus to {}", out.display());
        }
        Command::Train { input, out, no_augment } => {
            let mut cfg: ModelTrainConfig = load(file)?;
            if let Some(s) = cli.seed {
                cfg.motion.seed = s;
                cfg.spatial.seed = s.wrapping_add(1);
                cfg.temporal.seed = s.wrapping_add(2);
            }
            if no_augment {
                cfg.augment = false;
            }
            commands::train(&cfg, &input, &out, jobs)?;
            println!("wrote models to {}", out.display());
        }
        Command::Denoise {
            input,
            models,
            out,
            num_samples,
            select,
        } => {
            let mut cfg: DenoiseConfig = load(file)?;
            set(&mut cfg.seed, cli.seed);
            set(&mut cfg.num_samples, num_samples);
            set(&mut cfg.select, select);
            let records = commands::denoise(&cfg, &input, &models, &out, jobs)?;
            println!("denoised {} clips into {}", records.len(), out.display());
        }
        Command::Eval { pred, gt, out } => {
            let mut cfg: EvalConfig = load(file)?;
            set(&mut cfg.contact_seed, cli.seed);
            let table = commands::eval(&cfg, &pred, gt.as_deref(), &out, jobs)?;
            println!("{} clips", table.rows.len());
            for (name, v) in &table.median {
                println!("median {name:<20} {v:.4}");
            }
        }
        Command::Export { input, out, format } => {
            let mut cfg: ExportConfig = load(file)?;
            set(&mut cfg.format, format);
            let n = commands::export(&cfg, &input, &out)?;
            println!("exported {n} file(s) to {}", display(&out));
        }
    }
    Ok(())
}

fn set<T>(slot: &mut T, flag: Option<T>) {
    if let Some(v) = flag {
        *slot = v;
    }
}

fn display(p: &Path) -> String {
    p.display().to_string()
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("GENEOH_LOG", "warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
