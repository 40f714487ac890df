use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use monce::cli::{self, DemoSpec, Generator, SweepSpec};
use monce::io::RunConfig;
use monce::losses::Mode;
use monce::weighting::Strategy;

const EXIT_INPUT: u8 = 2;
const EXIT_CHECK: u8 = 3;

#[derive(Parser)]
#[command(
    name = "monce",
    version,
    about = "Contrastive patch similarity losses with transport-modulated negative weights"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate the configured loss on two feature files.
    Loss {
        #[arg(long)]
        x: PathBuf,
        #[arg(long)]
        y: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Per-layer CSV output.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Loss over a grid of beta, Q and modes.
    Sweep {
        #[arg(long)]
        x: PathBuf,
        #[arg(long)]
        y: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_delimiter = ',', default_value = "0.07,0.1,0.5,1.0")]
        betas: Vec<f64>,
        #[arg(long, value_delimiter = ',', default_value = "0.5,1,2")]
        qs: Vec<f64>,
        #[arg(
            long,
            value_delimiter = ',',
            default_value = "patchnce,weightnce,monce"
        )]
        modes: Vec<Mode>,
        #[arg(long, default_value = "hard")]
        strategy: Strategy,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Histogram of positive and negative pair similarities.
    Hist {
        #[arg(long)]
        x: PathBuf,
        #[arg(long)]
        y: PathBuf,
        #[arg(long, default_value_t = 20)]
        bins: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare analytic gradients with central differences for every mode.
    Gradcheck {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 4)]
        n: usize,
        #[arg(long, default_value_t = 6)]
        d: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Optimize free embeddings against fixed synthetic features.
    Demo {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Overrides the mode from the config file.
        #[arg(long)]
        mode: Option<Mode>,
        #[arg(long, default_value_t = 64)]
        n: usize,
        #[arg(long, default_value_t = 16)]
        d: usize,
        #[arg(long, default_value_t = 200)]
        steps: usize,
        #[arg(long, default_value_t = 0.05)]
        lr: f64,
        /// Defaults to the config seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "gaussian_clusters")]
        generator: Generator,
        #[arg(long, default_value_t = 0.5)]
        init_noise: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn run(cli: Cli) -> monce::Result<u8> {
    match cli.command {
        Command::Loss { x, y, config, out } => {
            let report = cli::cmd_loss(&x, &y, config.as_deref(), out.as_deref())?;
            print!("{}", cli::format_report(&report));
        }
        Command::Sweep {
            x,
            y,
            config,
            betas,
            qs,
            modes,
            strategy,
            out,
        } => {
            let spec = SweepSpec {
                beta_values: betas,
                q_values: qs,
                modes,
                strategy,
            };
            let table = cli::cmd_sweep(&x, &y, config.as_deref(), &spec, out.as_deref())?;
            if out.is_none() {
                print_table(&table);
            }
        }
        Command::Hist { x, y, bins, out } => {
            let table = cli::cmd_hist(&x, &y, bins, out.as_deref())?;
            if out.is_none() {
                print_table(&table);
            }
        }
        Command::Gradcheck { config, n, d, seed } => {
            let report = cli::cmd_gradcheck(config.as_deref(), n, d, seed)?;
            print!("{report}");
            if !report.all_pass() {
                return Ok(EXIT_CHECK);
            }
        }
        Command::Demo {
            config,
            mode,
            n,
            d,
            steps,
            lr,
            seed,
            generator,
            init_noise,
            out,
        } => {
            let cfg = match config {
                Some(p) => RunConfig::read(p)?,
                None => RunConfig::default(),
            };
            let mut loss = cfg.loss;
            if let Some(m) = mode {
                loss.mode = m;
            }
            let spec = DemoSpec {
                n_patches: n,
                dim: d,
                steps,
                learning_rate: lr,
                seed: seed.unwrap_or(cfg.seed),
                loss,
                generator,
                init_noise,
            };
            let result = cli::cmd_demo(&spec, out.as_deref())?;
            for w in &result.warnings {
                eprintln!("warning: {w}");
            }
            if out.is_none() {
                print_table(&result.trajectory);
            } else {
                let first = result.losses.first().copied().unwrap_or(f64::NAN);
                let last = result.losses.last().copied().unwrap_or(f64::NAN);
                println!("initial loss {first}\nfinal loss {last}");
            }
        }
    }
    Ok(0)
}

fn print_table(t: &monce::io::Table) {
    println!("{}", t.columns().join(","));
    for row in t.rows() {
        let cells: Vec<String> = row.iter().map(|c| c.to_string()).collect();
        println!("{}", cells.join(","));
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_INPUT)
        }
    }
}
