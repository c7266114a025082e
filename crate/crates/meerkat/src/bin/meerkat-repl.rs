use std::io::{self, BufReader, IsTerminal};
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::{Arc, Mutex};

use clap::Parser;
use meerkat::protocol::Role;
use meerkat::repl::{run, ReplOptions, Sink, EXIT_USAGE};

/// Interactive client for a meerkat server, or a self-contained session.
#[derive(Parser, Debug)]
#[command(name = "meerkat-repl", version)]
struct Args {
    /// Server address, e.g. 127.0.0.1:7788.
    #[arg(long, value_name = "HOST:PORT", conflicts_with = "embedded")]
    connect: Option<String>,
    /// Run the runtime in this process.
    #[arg(long)]
    embedded: bool,
    /// Read commands from FILE and echo them; for reproducible transcripts.
    #[arg(long, value_name = "FILE")]
    script: Option<PathBuf>,
    /// Schedule seed in embedded mode.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value = "programmer")]
    role: RoleArg,
}

#[derive(clap::ValueEnum, Clone, Copy, Debug)]
enum RoleArg {
    Programmer,
    User,
}

fn main() -> ExitCode {
    let args = match Args::try_parse() {
        Ok(a) => a,
        Err(e) if e.use_stderr() => {
            let _ = e.print();
            return ExitCode::from(EXIT_USAGE as u8);
        }
        Err(e) => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
    };
    let interactive = args.script.is_none() && io::stdin().is_terminal();
    let opts = ReplOptions {
        connect: args.connect,
        embedded: args.embedded,
        script: args.script.clone(),
        seed: args.seed,
        role: match args.role {
            RoleArg::Programmer => Role::Programmer,
            RoleArg::User => Role::User,
        },
        prompt: interactive,
    };
    let out: Sink = Arc::new(Mutex::new(io::stdout()));
    let code = match &args.script {
        Some(path) => match std::fs::File::open(path) {
            Ok(f) => run(&opts, &mut BufReader::new(f), out, true),
            Err(e) => {
                eprintln!("meerkat-repl: cannot read {}: {e}", path.display());
                EXIT_USAGE
            }
        },
        None => run(&opts, &mut io::stdin().lock(), out, false),
    };
    ExitCode::from(code as u8)
}
