use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use nrf::cli::{self, EXIT_OK, EXIT_USAGE, EXIT_VALIDATION};
use nrf::config::Config;

/// Neural reflectance fields: synthetic capture, training, relighting and
/// volume export.
///
/// Settings come from a `key = value` file (`--config`) and `--set
/// key=value` overrides. Camera and light specs are space-separated
/// fields, for example
///   camera = pos=0,-3,1 lookat=0,0,0 fov=40 intensity=20,20,20 res=64x64
///   light  = pos=2,-2,2 intensity=30,30,30
/// Without a light the camera's flash is used.
#[derive(Parser)]
#[command(name = "nrf", version, verbatim_doc_comment)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// key = value settings file
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// key=value override, repeatable
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Worker thread cap
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Single worker thread; results are bitwise reproducible either way
    #[arg(long, global = true)]
    deterministic: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Render a synthetic collocated dataset (keys: scene, data_dir, views, resolution, ...)
    GenData,
    /// Fit coarse and fine networks (keys: data_dir, run_dir, iterations, ...)
    Train,
    /// Render a view from a checkpoint (keys: checkpoint, camera, light, tau_mode, out)
    Render,
    /// Write a voxel grid of the fine network (keys: checkpoint, dims, out)
    ExportVolume,
    /// Run the self-check suite (key: fixture)
    Validate,
    /// List configuration keys
    Keys,
}

fn run(cli: Cli) -> Result<i32, nrf::Error> {
    let mut config = match &cli.config {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    for o in &cli.overrides {
        config.apply_override(o)?;
    }
    match cli.command {
        Command::GenData => {
            let ds = cli::cmd_gen_data(&config)?;
            println!("wrote {} views", ds.views.len());
        }
        Command::Train => cli::cmd_train(&config)?,
        Command::Render => {
            cli::cmd_render(&config)?;
        }
        Command::ExportVolume => {
            let v = cli::cmd_export_volume(&config)?;
            println!("wrote {:?} grid", v.dims);
        }
        Command::Validate => {
            if !cli::cmd_validate(&config)? {
                return Ok(EXIT_VALIDATION);
            }
        }
        Command::Keys => {
            for (k, d) in nrf::config::KEYS {
                println!("{k:<18} {d}");
            }
        }
    }
    Ok(EXIT_OK)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE as u8 } else { EXIT_OK as u8 });
        }
    };
    let threads = if cli.deterministic { Some(1) } else { cli.threads };
    if let Some(n) = threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_USAGE as u8);
        }
    }
    match run(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(cli::exit_code(&e) as u8)
        }
    }
}
