use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use dwa_cli::{
    cmd_bench, cmd_dtwcheck, cmd_eval, cmd_gradcheck, cmd_synth, cmd_train, parse_overrides, CliResult, Sources,
    CHECKPOINT_FILE,
};

/// Temporal CNNs with DTW-aligned convolution filters.
#[derive(Parser)]
#[command(name = "dwa", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Config file of `key = value` lines.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Preset geometry and schedule: synth, unipen, arabic or adl.
    #[arg(long)]
    preset: Option<String>,
    /// Run deterministically: no worker threads, no wall-clock column.
    #[arg(long)]
    serial: bool,
    /// Setting overrides, `--key=value` or `--key value`.
    #[arg(trailing_var_arg = true, allow_hyphen_values = true, value_name = "OVERRIDES")]
    overrides: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model; writes metrics.csv and model.ckpt under output.dir.
    Train(Common),
    /// Evaluate a checkpoint on the configured test set.
    Eval {
        /// Defaults to model.ckpt under output.dir.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Finite-difference check of the analytic gradients.
    Gradcheck {
        #[arg(long, hide = true)]
        corrupt_backward: bool,
        #[command(flatten)]
        common: Common,
    },
    /// Dynamic programme against exhaustive path search.
    Dtwcheck(Common),
    /// Write a synthetic warped dataset as one CSV per series.
    Synth {
        /// Defaults to output.dir.
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Single-sample latency, aligned versus linear convolution.
    Bench(Common),
}

fn sources(common: &Common) -> CliResult<Sources> {
    let mut s = Sources {
        preset: common.preset.clone(),
        config_file: common.config.clone(),
        overrides: Vec::new(),
        serial: common.serial,
        ..Sources::default()
    };
    parse_overrides(&common.overrides, &mut s)?;
    Ok(s)
}

fn run(cli: Cli, out: &mut dyn Write) -> CliResult<()> {
    match cli.command {
        Command::Train(c) => {
            cmd_train(&sources(&c)?.resolve()?, out)?;
        }
        Command::Eval { checkpoint, common } => {
            let src = sources(&common)?;
            let cfg = src.resolve()?;
            let path = checkpoint
                .or_else(|| src.command_options.get("checkpoint").map(PathBuf::from))
                .unwrap_or_else(|| cfg.output_dir.join(CHECKPOINT_FILE));
            cmd_eval(&cfg, &path, out)?;
        }
        Command::Gradcheck {
            corrupt_backward,
            common,
        } => {
            let src = sources(&common)?;
            let corrupt = corrupt_backward || src.switches.iter().any(|s| s == "corrupt-backward");
            cmd_gradcheck(&src.resolve()?, corrupt, out)?;
        }
        Command::Dtwcheck(c) => {
            cmd_dtwcheck(&sources(&c)?.resolve()?, out)?;
        }
        Command::Synth { out: dir, common } => {
            let src = sources(&common)?;
            let cfg = src.resolve()?;
            let dir = dir
                .or_else(|| src.command_options.get("out").map(PathBuf::from))
                .unwrap_or_else(|| cfg.output_dir.clone());
            cmd_synth(&cfg, &dir, out)?;
        }
        Command::Bench(c) => {
            cmd_bench(&sources(&c)?.resolve()?, out)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let stdout = io::stdout();
    let mut out = stdout.lock();
    match run(cli, &mut out) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let _ = out.flush();
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
