use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use gfflab::commands::{run, Command};

#[derive(Parser)]
#[command(name = "gfflab", version, about = "Gaussian free field spectral numerics")]
struct Cli {
    #[command(subcommand)]
    command: Sub,

    /// Experiment configuration (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory; overrides `output_dir` in the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Worker threads.
    #[arg(long, global = true, env = "GFFLAB_THREADS")]
    threads: Option<usize>,

    /// Seed override for stochastic commands.
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Subcommand, Clone, Copy)]
enum Sub {
    /// Build the spectrum and write it as `value count` lines.
    Spectrum,
    /// Feynman amplitudes c_n.
    Amplitudes,
    /// Partition function on the configured coupling grid.
    Partition,
    /// Monte Carlo check of the partition function and Wick moments.
    Mc,
    /// Recover eigenvalues from determinant zeros and fit heat coefficients.
    Invert,
    /// Smoothed wave trace and detected lengths.
    Wavetrace,
    /// X-ray transform over closed geodesics of the flat 2-torus.
    Xray,
}

impl From<Sub> for Command {
    fn from(s: Sub) -> Self {
        match s {
            Sub::Spectrum => Command::Spectrum,
            Sub::Amplitudes => Command::Amplitudes,
            Sub::Partition => Command::Partition,
            Sub::Mc => Command::Mc,
            Sub::Invert => Command::Invert,
            Sub::Wavetrace => Command::Wavetrace,
            Sub::Xray => Command::Xray,
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be positive");
            return ExitCode::from(2);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    }
    let Some(config) = cli.config else {
        eprintln!("error: --config is required");
        return ExitCode::from(2);
    };
    match run(cli.command.into(), &config, cli.out.as_deref(), cli.seed) {
        Ok(m) => {
            for f in &m.files {
                println!("{}  {}", f.sha256, f.path);
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
