use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};
use nwd_lens::analytics::ErrorMethod;
use nwd_lens::provider::{NoiseModel, ProtocolOptions};
use nwd_lens::report::{self, AnalyzeArgs, FetchArgs, ProviderKind};

#[derive(Parser)]
#[command(name = "nwd-lens", version, about = "Temporal normalized web distance")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ProviderArg {
    Oracle,
    Replay,
    Live,
}

#[derive(Clone, Copy, ValueEnum)]
enum ErrorArg {
    Delta,
    Session,
}

#[derive(Subcommand)]
enum Command {
    /// Run the measurement protocol and append samples to a store.
    Fetch {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_enum)]
        provider: ProviderArg,
        #[arg(long)]
        store: PathBuf,
        /// Corpus (JSON lines) for the oracle provider.
        #[arg(long)]
        corpus: Option<PathBuf>,
        /// Seed for oracle noise.
        #[arg(long)]
        seed: Option<u64>,
        /// Relative Gaussian noise on oracle counts.
        #[arg(long, default_value_t = 0.0)]
        noise_sigma: f64,
        /// Round oracle counts to this many significant digits.
        #[arg(long)]
        sig_digits: Option<u32>,
        /// Store to replay samples from.
        #[arg(long)]
        replay_from: Option<PathBuf>,
        /// JSON settings for the live provider.
        #[arg(long)]
        live_config: Option<PathBuf>,
        /// Session label recorded on every sample.
        #[arg(long, default_value = "session-1")]
        session: String,
        /// Also measure "u" OR "v" for each pair.
        #[arg(long)]
        with_or: bool,
    },
    /// Compute series, trends, diagnostics and figure data from a store.
    Analyze {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        store: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Significant digits in reports (0 = full precision).
        #[arg(long, default_value_t = report::DEFAULT_PRECISION)]
        precision: usize,
        #[arg(long, value_enum, default_value = "delta")]
        error_method: ErrorArg,
    },
    /// Generate a synthetic corpus from a growth spec.
    Corpus {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Check a study config.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
}

fn main() {
    let cli = Cli::parse();
    let mut stderr = std::io::stderr();
    let code = match cli.command {
        Command::Fetch {
            config,
            provider,
            store,
            corpus,
            seed,
            noise_sigma,
            sig_digits,
            replay_from,
            live_config,
            session,
            with_or,
        } => {
            let kind = match provider {
                ProviderArg::Oracle => ProviderKind::Oracle,
                ProviderArg::Replay => ProviderKind::Replay,
                ProviderArg::Live => ProviderKind::Live,
            };
            let mut args = FetchArgs::new(config, kind, store);
            args.corpus = corpus;
            args.seed = seed;
            args.noise = NoiseModel {
                relative_sigma: noise_sigma,
                significant_digits: sig_digits,
            };
            args.replay_from = replay_from;
            args.live_config = live_config;
            args.session_id = session;
            args.options = ProtocolOptions {
                include_or_queries: with_or,
            };
            report::cmd_fetch(&args, &mut stderr)
        }
        Command::Analyze {
            config,
            store,
            out,
            precision,
            error_method,
        } => {
            let mut args = AnalyzeArgs::new(config, store, out);
            args.precision = precision;
            args.error_method = match error_method {
                ErrorArg::Delta => ErrorMethod::DeltaMethod,
                ErrorArg::Session => ErrorMethod::SessionSpread,
            };
            report::cmd_analyze(&args, &mut stderr)
        }
        Command::Corpus { spec, out, seed } => report::cmd_corpus(&spec, &out, seed, &mut stderr),
        Command::Validate { config } => report::cmd_validate(&config, &mut std::io::stdout()),
    };
    std::process::exit(code);
}
