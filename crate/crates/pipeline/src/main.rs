use std::path::PathBuf;
use std::process::ExitCode;

use carvepaint_pipeline::{
    cmd_attend_demo, cmd_carve, cmd_inpaint, cmd_paint, cmd_pipeline, cmd_remesh, Ini, PipelineConfig, PipelineError, Summary,
};
use clap::{Args, Parser, Subcommand};

/// Occupancy fields to textured meshes.
#[derive(Parser)]
#[command(name = "carvepaint", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct Common {
    /// INI-style config file.
    #[arg(short, long, global = true)]
    config: Option<PathBuf>,
    /// Override any config key, e.g. `--set remesh.edge_length=0.02`. Repeatable.
    #[arg(long = "set", value_name = "SECTION.KEY=VALUE", global = true)]
    set: Vec<String>,
    /// RNG seed (`run.seed`).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads, 0 for one per core (`run.workers`).
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Output directory (`output.dir`).
    #[arg(short, long, global = true)]
    out: Option<PathBuf>,
    /// Input mesh for remesh, paint and inpaint (`input.mesh`).
    #[arg(short, long, global = true)]
    input: Option<PathBuf>,
    /// Coarse atlas PNG for inpaint (`input.atlas`).
    #[arg(long, global = true)]
    atlas: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Sample or load a field, extract, clean and remesh it.
    Carve,
    /// Remesh an OBJ.
    Remesh,
    /// Back-project views onto a mesh and inpaint what they miss.
    Paint,
    /// Inpaint the untextured texels of a coarse atlas.
    Inpaint,
    /// Carve, then paint.
    Pipeline,
    /// Write decoupled cross-attention maps for seeded random inputs.
    AttendDemo,
}

fn config(common: &Common) -> Result<PipelineConfig, PipelineError> {
    let mut ini = match &common.config {
        Some(p) => Ini::read(p)?,
        None => Ini::default(),
    };
    for s in &common.set {
        ini.set(s)?;
    }
    let flags = [
        ("run.seed", common.seed.map(|v| v.to_string())),
        ("run.workers", common.workers.map(|v| v.to_string())),
        ("output.dir", common.out.as_ref().map(|p| p.display().to_string())),
        ("input.mesh", common.input.as_ref().map(|p| p.display().to_string())),
        ("input.atlas", common.atlas.as_ref().map(|p| p.display().to_string())),
    ];
    for (key, value) in flags {
        if let Some(v) = value {
            ini.insert(key, v);
        }
    }
    PipelineConfig::from_ini(&ini)
}

fn run(cli: &Cli) -> Result<Summary, PipelineError> {
    let cfg = config(&cli.common)?;
    if cfg.workers > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.workers)
            .build_global()
            .map_err(|e| PipelineError::config(format!("run.workers: {e}")))?;
    }
    match cli.command {
        Command::Carve => cmd_carve(&cfg),
        Command::Remesh => cmd_remesh(&cfg),
        Command::Paint => cmd_paint(&cfg),
        Command::Inpaint => cmd_inpaint(&cfg),
        Command::Pipeline => cmd_pipeline(&cfg),
        Command::AttendDemo => cmd_attend_demo(&cfg),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(summary) => {
            for f in &summary.files {
                println!("wrote {}", f.display());
            }
            for (stage, d) in &summary.timings {
                println!("time {stage} {:.3}s", d.as_secs_f64());
            }
            println!("time total {:.3}s", summary.total().as_secs_f64());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
