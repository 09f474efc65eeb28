use std::path::PathBuf;

use clap::Parser;
use patchswipe_server::Config;
use tracing_subscriber::EnvFilter;

/// Serve the patch annotation API and the swipe UI.
#[derive(Parser)]
#[command(name = "patchswipe-server", version)]
struct Args {
    /// TOML configuration file. PATCHSWIPE_* environment variables override
    /// its values.
    #[arg(short, long, env = "PATCHSWIPE_CONFIG")]
    config: Option<PathBuf>,
}

#[tokio::main]
async fn main() -> anyhow::Result<()> {
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("info")))
        .init();
    let args = Args::parse();
    let config = Config::load(args.config.as_deref())?;
    patchswipe_server::serve(config).await
}
