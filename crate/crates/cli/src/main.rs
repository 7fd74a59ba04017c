mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use gapcast::error::Error;

#[derive(Parser)]
#[command(name = "gapcast", version, about = "Forecasting with gaps: masking, training, forecasting and benchmarks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Debug, Default)]
pub struct ConfigArgs {
    /// `key = value` configuration file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Override one configuration key, e.g. `--set hidden=9`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Block-mask every series of a CSV file.
    Mask {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        /// Masking report; defaults to `<output>.report.txt`.
        #[arg(long)]
        report: Option<PathBuf>,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Train one model over all series of a CSV file.
    Train {
        #[arg(long)]
        input: PathBuf,
        /// Receives model.ckpt, scaling.txt, loss_trace.csv and config.txt.
        #[arg(long)]
        out_dir: PathBuf,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Forecast `out_len` ticks per series from a trained checkpoint.
    Forecast {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        scaling: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        /// First forecast tick; defaults to the last `out_len` ticks.
        #[arg(long)]
        at: Option<i64>,
        /// Restrict to one series.
        #[arg(long)]
        series: Option<String>,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Train and score the configured methods on identical splits.
    Benchmark {
        /// Ground-truth CSV. Mutually exclusive with `--synthetic`.
        #[arg(long, conflicts_with = "synthetic", required_unless_present = "synthetic")]
        input: Option<PathBuf>,
        /// Use the seeded synthetic dataset (`synthetic.*` keys).
        #[arg(long)]
        synthetic: bool,
        /// Receives report.json, report.txt, per_series.csv and config.txt.
        #[arg(long)]
        out_dir: PathBuf,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Print the dual-stream encoding of one input window.
    EncodeInspect {
        #[arg(long)]
        input: PathBuf,
        /// Series id; defaults to the first series.
        #[arg(long)]
        series: Option<String>,
        /// 0-based window index (window `i` covers ticks `i .. i + in_len`).
        #[arg(long, default_value_t = 0)]
        window: usize,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Usage(_) | Error::Protocol(_) => 2,
        Error::Data(_) | Error::Codec(_) | Error::Csv(_) | Error::Scaling(_) | Error::Rejected(_) => 3,
        Error::Diverged(_) => 4,
        _ => 1,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Mask { input, output, report, cfg } => commands::mask(&input, &output, report.as_deref(), &cfg),
        Command::Train { input, out_dir, cfg } => commands::train(&input, &out_dir, &cfg),
        Command::Forecast {
            checkpoint,
            scaling,
            input,
            output,
            at,
            series,
            cfg,
        } => commands::forecast(&checkpoint, &scaling, &input, &output, at, series.as_deref(), &cfg),
        Command::Benchmark {
            input,
            synthetic: _,
            out_dir,
            cfg,
        } => commands::benchmark(input.as_deref(), &out_dir, &cfg),
        Command::EncodeInspect {
            input,
            series,
            window,
            cfg,
        } => commands::encode_inspect(&input, series.as_deref(), window, &cfg),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
