use std::net::SocketAddr;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use lago_cli::commands::{self, emit, CliError, CliResult, Report};
use lago_cli::config::{Command as ConfigCommand, ConfsetSection, FitSection, RecommendSection, RunConfig, Search};
use lago_core::engine::presets;
use lago_core::{ComponentBounds, CostFunction, LinkFunction};

#[derive(Parser)]
#[command(name = "lago", version, about = "Adaptive multi-component trial analysis")]
struct Cli {
    /// Suppress the summary table on stderr.
    #[arg(long, global = true)]
    quiet: bool,
    /// Directory for JSON and CSV artifacts.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Monte Carlo study from a config or a named preset.
    Simulate {
        #[arg(short, long, conflicts_with = "preset", required_unless_present = "preset")]
        config: Option<PathBuf>,
        #[arg(long)]
        preset: Option<String>,
        #[arg(long)]
        replications: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Fit the outcome model to a trial CSV.
    Fit {
        #[arg(long)]
        csv: PathBuf,
        #[arg(long, value_parser = commands::parse_link)]
        link: LinkFunction,
        #[arg(long)]
        no_intercept: bool,
    },
    /// Cheapest package reaching `theta` under a saved fit.
    Recommend {
        #[arg(long)]
        fit: PathBuf,
        /// `linear:c1,c2[+fixed]` or `cubic:a,b,c,d/a,b,c,d`.
        #[arg(long)]
        cost: CostFunction,
        #[arg(long, allow_negative_numbers = true)]
        theta: f64,
        /// `lo:hi,lo:hi`.
        #[arg(long)]
        bounds: ComponentBounds,
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
        z: Vec<f64>,
        #[arg(long)]
        increment: Option<f64>,
        /// Grid search even for a linear cost.
        #[arg(long)]
        grid: bool,
    },
    /// Confidence set for the optimal package, optionally with bands.
    Confset {
        #[arg(long)]
        fit: PathBuf,
        #[arg(long, allow_negative_numbers = true)]
        theta: f64,
        #[arg(long)]
        bounds: ComponentBounds,
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
        z: Vec<f64>,
        #[arg(long)]
        increment: Option<f64>,
        #[arg(long)]
        level: Option<f64>,
        #[arg(long)]
        bands: bool,
        #[arg(long)]
        cost: Option<CostFunction>,
    },
    /// Run the trial API.
    Serve {
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        #[arg(long)]
        store: PathBuf,
    },
    /// Execute a TOML run file.
    Run { config: PathBuf },
    /// List preset names.
    Presets,
}

fn init_threads() -> CliResult<()> {
    if let Ok(v) = std::env::var("LAGO_THREADS") {
        let n: usize = v
            .parse()
            .map_err(|_| CliError::usage(format!("LAGO_THREADS=`{v}` is not a thread count")))?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(CliError::runtime)?;
    }
    Ok(())
}

fn run(cli: Cli) -> CliResult<()> {
    init_threads()?;
    let out = cli.out.clone();
    let report = match cli.command {
        Cmd::Simulate {
            config,
            preset,
            replications,
            seed,
            threads,
        } => {
            let (mut spec, cfg_threads) = match (config, preset) {
                (Some(path), _) => {
                    let cfg = RunConfig::load(&path)?;
                    if cfg.command != ConfigCommand::Simulate {
                        return Err(CliError::usage(format!("{}: command must be `simulate`", path.display())));
                    }
                    (cfg.design.expect("checked"), cfg.threads)
                }
                (None, Some(name)) => {
                    let spec = presets::by_name(&name).ok_or_else(|| {
                        CliError::usage(format!("unknown preset `{name}`; try one of {}", presets::PRESET_NAMES.join(", ")))
                    })?;
                    (spec, None)
                }
                (None, None) => unreachable!("clap requires one"),
            };
            if let Some(r) = replications {
                spec.replications = r;
            }
            if let Some(s) = seed {
                spec.seed = s;
            }
            Report::Simulate(commands::simulate(&spec, threads.or(cfg_threads))?)
        }
        Cmd::Fit { csv, link, no_intercept } => Report::Fit(commands::fit_csv(&FitSection {
            csv,
            link,
            intercept: !no_intercept,
        })?),
        Cmd::Recommend {
            fit,
            cost,
            theta,
            bounds,
            z,
            increment,
            grid,
        } => Report::Recommend(commands::recommend(&RecommendSection {
            fit,
            z,
            bounds,
            cost,
            theta,
            increment,
            search: if grid { Search::Grid } else { Search::Auto },
        })?),
        Cmd::Confset {
            fit,
            theta,
            bounds,
            z,
            increment,
            level,
            bands,
            cost,
        } => Report::Confset(commands::confset(&ConfsetSection {
            fit,
            z,
            bounds,
            theta,
            increment,
            level,
            bands,
            cost,
        })?),
        Cmd::Serve { port, host, store } => {
            let addr: SocketAddr = format!("{host}:{port}")
                .parse()
                .map_err(|e| CliError::usage(format!("address {host}:{port}: {e}")))?;
            let rt = tokio::runtime::Runtime::new().map_err(CliError::runtime)?;
            return rt.block_on(lago_cli::serve(addr, store)).map_err(CliError::runtime);
        }
        Cmd::Run { config } => {
            let cfg = RunConfig::load(&config)?;
            let report = commands::run_config(&cfg)?;
            let dir = out.clone().or(cfg.output_dir.clone());
            return emit(&report, dir.as_deref(), cli.quiet);
        }
        Cmd::Presets => {
            for name in presets::PRESET_NAMES {
                println!("{name}");
            }
            return Ok(());
        }
    };
    emit(&report, out.as_deref(), cli.quiet)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code as u8)
        }
    }
}
