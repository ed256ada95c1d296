use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

mod bench;
mod commands;
mod config;
mod error;

use bench::BenchArgs;
use config::Config;
use error::CliError;

#[derive(Debug, Parser)]
#[command(name = "hefuzz", version, about = "Private fuzzy name matching over approximate homomorphic encryption")]
struct Cli {
    /// Config file (falls back to $HEFUZZ_CONFIG, then ./hefuzz.toml).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Directory for every artifact a command writes.
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// Worker threads for independent column scores.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// More log output; repeat for debug.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a key set.
    Keygen {
        /// Key file to write.
        #[arg(long)]
        out: PathBuf,
        /// Also write the secret key (file mode 0600).
        #[arg(long)]
        include_secret: bool,
    },
    /// MinHash-encode a newline-delimited list of names.
    Encode { input: PathBuf },
    /// Cluster a signature file into a responder model.
    Cluster {
        signatures: PathBuf,
        /// Defaults to round(sqrt(n)).
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        iterations: Option<usize>,
        #[arg(long)]
        cluster_seed: Option<u64>,
    },
    /// Serve matching sessions, one at a time.
    Serve {
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        bind: Option<String>,
        #[arg(long)]
        tau: Option<f64>,
        /// Exit after this many sessions.
        #[arg(long)]
        max_sessions: Option<usize>,
    },
    /// Query a responder with a newline-delimited list of names.
    Query {
        names: PathBuf,
        #[arg(long)]
        address: Option<String>,
        /// Key file with a secret key; fresh keys are derived from the seed otherwise.
        #[arg(long)]
        keys: Option<PathBuf>,
        /// Run the responder in this process from the given model.
        #[arg(long)]
        in_process: Option<PathBuf>,
        #[arg(long)]
        no_early_exit: bool,
        #[arg(long)]
        linear: bool,
        #[arg(long)]
        compress: bool,
    },
    /// Run an evaluation scenario and write its report bundle.
    Bench(BenchArgs),
}

fn resolve(cli: &Cli) -> Result<Config, CliError> {
    let (mut cfg, source) = Config::load(cli.config.as_deref())?;
    if let Some(p) = source {
        log::info!("config from {}", p.display());
    }
    if let Some(d) = &cli.out_dir {
        cfg.out_dir = d.clone();
    }
    if let Some(t) = cli.threads {
        cfg.protocol.threads = t;
    }
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    match &cli.command {
        Command::Cluster {
            k,
            iterations,
            cluster_seed,
            ..
        } => {
            cfg.cluster.k = k.or(cfg.cluster.k);
            cfg.cluster.iterations = iterations.unwrap_or(cfg.cluster.iterations);
            cfg.cluster.seed = cluster_seed.unwrap_or(cfg.cluster.seed);
        }
        Command::Serve { model, bind, tau, .. } => {
            cfg.paths.model = model.clone().or(cfg.paths.model);
            if let Some(b) = bind {
                cfg.transport.address = b.clone();
            }
            cfg.protocol.tau = tau.unwrap_or(cfg.protocol.tau);
        }
        Command::Query {
            address,
            keys,
            no_early_exit,
            linear,
            compress,
            ..
        } => {
            if let Some(a) = address {
                cfg.transport.address = a.clone();
            }
            cfg.paths.keys = keys.clone().or(cfg.paths.keys);
            cfg.protocol.early_exit &= !no_early_exit;
            cfg.protocol.linear |= linear;
            cfg.transport.compress |= compress;
        }
        _ => {}
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<(), CliError> {
    let cfg = resolve(&cli)?;
    match cli.command {
        Command::Keygen { out, include_secret } => commands::keygen(&cfg, &out, include_secret),
        Command::Encode { input } => commands::encode(&cfg, &input),
        Command::Cluster { signatures, .. } => commands::cluster(&cfg, &signatures),
        Command::Serve { max_sessions, .. } => commands::serve(&cfg, max_sessions),
        Command::Query { names, in_process, .. } => commands::query(&cfg, &names, in_process.as_deref()),
        Command::Bench(args) => bench::run(&cfg, &args),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("hefuzz: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
