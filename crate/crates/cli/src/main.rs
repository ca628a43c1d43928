use std::net::SocketAddr;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use logan_cli::{CliError, CliResult, ExtractOptions, RunOptions};
use logan_service::ServiceConfig;

/// Local editing of generated scenes through intermediate feature maps.
#[derive(Parser)]
#[command(name = "logan", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Execute an edit script and write the resulting image.
    Run {
        script: PathBuf,
        /// Checkpoint manifest path or `toy:SEED`.
        #[arg(long, default_value = "toy:7")]
        model: String,
        #[arg(long)]
        bank: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Also render the script with every single-layer op moved to each of these layers.
        #[arg(long, value_delimiter = ',')]
        dump_layers: Vec<usize>,
        /// Replaces the script's base seed or codes.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Render the unedited image for a seed.
    Synthesize {
        #[arg(long, default_value = "toy:7")]
        model: String,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Regenerate the removal and insertion layer-sweep grids.
    Figures {
        dir: PathBuf,
        #[arg(long, default_value = "toy:7")]
        model: String,
        #[arg(long, default_value_t = 3)]
        seed: u64,
    },
    /// Manage an object bank directory.
    #[command(subcommand)]
    Bank(BankCommand),
    /// Serve the HTTP session API.
    Serve(ServeArgs),
}

#[derive(Subcommand)]
enum BankCommand {
    /// Lift a masked object out of a scene.
    Extract {
        #[arg(long)]
        bank: PathBuf,
        #[arg(long, default_value = "toy:7")]
        model: String,
        /// Scene seed, used when no script is given.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Extract from the result of this edit script instead.
        #[arg(long, conflicts_with = "seed")]
        script: Option<PathBuf>,
        /// 8-bit grayscale PNG at canonical resolution.
        #[arg(long)]
        mask: PathBuf,
        #[arg(long)]
        id: String,
        #[arg(long)]
        category: String,
        #[arg(long, value_delimiter = ',', default_value = "4,7")]
        layers: Vec<usize>,
        #[arg(long)]
        priority: Option<u32>,
    },
    List {
        #[arg(long)]
        bank: PathBuf,
    },
    /// Fit pose clusters for one category.
    Cluster {
        #[arg(long)]
        bank: PathBuf,
        #[arg(long)]
        category: String,
        #[arg(long, short = 'm', default_value_t = 2)]
        clusters: usize,
        /// Side of the square grid masks are downsampled to.
        #[arg(long, default_value_t = 32)]
        dims: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long, env = "LOGAN_BIND", default_value = "127.0.0.1:8080")]
    bind: SocketAddr,
    #[arg(long, env = "LOGAN_MODEL")]
    model: Option<String>,
    #[arg(long, env = "LOGAN_BANK")]
    bank: Option<PathBuf>,
    #[arg(long, env = "LOGAN_MAX_SESSIONS", default_value_t = 64)]
    max_sessions: usize,
}

fn dispatch(command: Command) -> CliResult<()> {
    match command {
        Command::Run {
            script,
            model,
            bank,
            out,
            dump_layers,
            seed,
        } => {
            let written = logan_cli::run(&RunOptions {
                script: &script,
                model: &model,
                bank: bank.as_deref(),
                out: &out,
                dump_layers: &dump_layers,
                seed,
            })?;
            for p in written {
                println!("{}", p.display());
            }
        }
        Command::Synthesize { model, seed, out } => logan_cli::synthesize(&model, seed, &out)?,
        Command::Figures { dir, model, seed } => {
            for p in logan_cli::figures(&dir, &model, seed)? {
                println!("{}", p.display());
            }
        }
        Command::Bank(BankCommand::Extract {
            bank,
            model,
            seed,
            script,
            mask,
            id,
            category,
            layers,
            priority,
        }) => {
            let asset = logan_cli::bank_extract(&ExtractOptions {
                bank: &bank,
                model: &model,
                seed,
                script: script.as_deref(),
                mask: &mask,
                id: &id,
                category: &category,
                layers: &layers,
                priority,
            })?;
            println!(
                "{}\t{}\tpriority={}",
                asset.id, asset.category, asset.priority
            );
        }
        Command::Bank(BankCommand::List { bank }) => {
            for line in logan_cli::bank_list(&bank)? {
                println!("{line}");
            }
        }
        Command::Bank(BankCommand::Cluster {
            bank,
            category,
            clusters,
            dims,
            seed,
        }) => {
            for line in logan_cli::bank_cluster(&bank, &category, clusters, dims, seed)? {
                println!("{line}");
            }
        }
        Command::Serve(args) => {
            let config = ServiceConfig {
                bind: args.bind,
                model: args.model,
                bank: args.bank,
                max_sessions: args.max_sessions,
            };
            let rt = tokio::runtime::Runtime::new().map_err(|e| CliError::Setup(e.to_string()))?;
            rt.block_on(logan_service::serve(config))
                .map_err(|e| CliError::Setup(e.to_string()))?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
