use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use meerkat::json;
use meerkat::sim::{explore, replay, Mode, Scenario, MAX_DEPTH};

/// Explores the schedules of a scenario and checks runtime properties.
#[derive(Parser, Debug)]
#[command(name = "meerkat-sim", version)]
struct Args {
    /// Scenario JSON file.
    #[arg(long, value_name = "FILE")]
    scenario: PathBuf,
    /// Explore every schedule up to N steps (at most 8).
    #[arg(long, value_name = "N", conflicts_with_all = ["runs", "replay"])]
    exhaustive: Option<usize>,
    /// Number of seeded random schedules.
    #[arg(long, value_name = "N")]
    runs: Option<usize>,
    #[arg(long, value_name = "S", default_value_t = 0)]
    seed: u64,
    /// Write the first counterexample schedule to FILE as JSON lines.
    #[arg(long, value_name = "FILE")]
    trace_out: Option<PathBuf>,
    /// Replay a schedule (JSON lines, as written by --trace-out or the
    /// server's --trace) instead of exploring.
    #[arg(long, value_name = "FILE", conflicts_with = "runs")]
    replay: Option<PathBuf>,
}

fn fail(msg: impl std::fmt::Display) -> ExitCode {
    eprintln!("meerkat-sim: {msg}");
    ExitCode::from(1)
}

fn main() -> ExitCode {
    let args = Args::parse();
    let text = match std::fs::read_to_string(&args.scenario) {
        Ok(t) => t,
        Err(e) => return fail(format!("cannot read {}: {e}", args.scenario.display())),
    };
    let scenario = match Scenario::from_json(&text) {
        Ok(s) => s,
        Err(e) => return fail(e),
    };

    if let Some(path) = &args.replay {
        let text = match std::fs::read_to_string(path) {
            Ok(t) => t,
            Err(e) => return fail(format!("cannot read {}: {e}", path.display())),
        };
        let mut trace = Vec::new();
        for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let parsed = serde_json::from_str(line).ok().and_then(|j| json::parse_choice(&j));
            match parsed {
                Some(c) => trace.push(c),
                None => return fail(format!("{}:{}: not a step", path.display(), i + 1)),
            }
        }
        return match replay(&scenario, &trace) {
            Err(e) => fail(e),
            Ok(r) => {
                println!("replayed {} steps", r.records.len());
                for v in &r.violations {
                    println!("violation {v}");
                }
                println!("values: {}", json::dump(r.config.store())["vars"]);
                if r.violations.is_empty() {
                    ExitCode::SUCCESS
                } else {
                    ExitCode::from(3)
                }
            }
        };
    }

    let mode = match (args.exhaustive, args.runs) {
        (Some(d), _) if d > MAX_DEPTH => return fail(format!("--exhaustive is capped at {MAX_DEPTH}")),
        (Some(d), _) => Mode::Exhaustive { depth: d },
        (None, Some(runs)) => Mode::Seeded { runs, seed: args.seed },
        (None, None) => Mode::Exhaustive { depth: MAX_DEPTH },
    };
    let v = explore(&scenario, mode);
    println!("schedules: {}", v.schedules);
    println!("states: {}", v.states);
    println!("truncated: {}", v.truncated);
    println!("distinct finals: {}", v.distinct_finals);
    println!("violations: {}", v.violations.len());
    for x in &v.violations {
        println!("violation {x}");
    }
    if let (Some(path), Some(first)) = (&args.trace_out, v.violations.first()) {
        let mut buf = Vec::new();
        for c in &first.trace {
            let _ = writeln!(buf, "{}", json::choice(c));
        }
        if let Err(e) = std::fs::write(path, buf) {
            return fail(format!("cannot write {}: {e}", path.display()));
        }
    }
    if v.is_ok() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(3)
    }
}
