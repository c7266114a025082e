use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use meerkat::hub::{Hub, HubOptions};
use meerkat::server::{serve, ServeOptions, DEFAULT_BIND};
use meerkat_core::syntax::parse_program;

/// Coordinator for meerkat sessions over line-delimited JSON on TCP.
#[derive(Parser, Debug)]
#[command(name = "meerkat-server", version)]
struct Args {
    #[arg(long, default_value = DEFAULT_BIND)]
    bind: String,
    /// Program to install before accepting connections.
    #[arg(long, value_name = "FILE")]
    init: Option<PathBuf>,
    /// Let user sessions submit evolutions.
    #[arg(long)]
    open: bool,
    /// Versions kept per definition.
    #[arg(long, value_name = "N", default_value_t = meerkat_core::store::DEFAULT_HIST_CAP)]
    hist_cap: usize,
    /// Append every scheduler step to FILE as JSON lines.
    #[arg(long, value_name = "FILE")]
    trace: Option<PathBuf>,
    /// Replies buffered per session before a slow client is dropped.
    #[arg(long, value_name = "N", default_value_t = 1024)]
    buffer: usize,
}

fn main() -> ExitCode {
    let args = Args::parse();
    let mut hub = Hub::new(HubOptions {
        open: args.open,
        hist_cap: args.hist_cap,
        trace: args.trace.is_some(),
        ..HubOptions::default()
    });
    if let Some(path) = &args.init {
        let src = match std::fs::read_to_string(path) {
            Ok(s) => s,
            Err(e) => {
                eprintln!("meerkat-server: cannot read {}: {e}", path.display());
                return ExitCode::from(1);
            }
        };
        let r = match parse_program(&src) {
            Ok(r) => r,
            Err(e) => {
                eprintln!("meerkat-server: {}: {e}", path.display());
                return ExitCode::from(1);
            }
        };
        if let Err(e) = hub.boot(r) {
            eprintln!("meerkat-server: {} rejected: {e}", path.display());
            return ExitCode::from(1);
        }
    }
    let rt = tokio::runtime::Runtime::new().expect("tokio runtime");
    let res = rt.block_on(async {
        let listener = tokio::net::TcpListener::bind(&args.bind).await?;
        eprintln!("meerkat-server: listening on {}", listener.local_addr()?);
        let opts = ServeOptions { buffer: args.buffer, trace: args.trace.clone() };
        let stop = async {
            let _ = tokio::signal::ctrl_c().await;
        };
        serve(listener, hub, opts, stop).await
    });
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("meerkat-server: {e}");
            ExitCode::from(1)
        }
    }
}
