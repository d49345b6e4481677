use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};

use qpricer::{run, Command, Overrides, ScenarioConfig};

/// Entropy-penalized robust pricing of bounded claims in an incomplete
/// Brownian market.
#[derive(Parser)]
#[command(name = "qpricer", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(clap::Args)]
struct CommonArgs {
    /// Scenario configuration file (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Override the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (overrides the config).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads; must not affect any result bytes.
    #[arg(long, default_value_t = 1)]
    threads: usize,
    /// Treat solver warnings as failures.
    #[arg(long, default_value_t = false)]
    strict: bool,
}

#[derive(Subcommand)]
enum Cmd {
    /// Price one claim and verify its bounds.
    Price(CommonArgs),
    /// Estimate relative entropies by both routes.
    Entropy(CommonArgs),
    /// Dual candidate objectives against the primal price.
    Dual(CommonArgs),
    /// Sweep the price over the aversion parameter.
    Sweep(CommonArgs),
    /// Run the property battery.
    Properties(CommonArgs),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (cmd, args) = match cli.command {
        Cmd::Price(a) => (Command::Price, a),
        Cmd::Entropy(a) => (Command::Entropy, a),
        Cmd::Dual(a) => (Command::Dual, a),
        Cmd::Sweep(a) => (Command::Sweep, a),
        Cmd::Properties(a) => (Command::Properties, a),
    };
    let text = match std::fs::read_to_string(&args.config) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: cannot read {}: {e}", args.config.display());
            return ExitCode::from(2);
        }
    };
    let cfg = match ScenarioConfig::from_str(&text) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    let ov = Overrides {
        seed: args.seed,
        out: args.out,
        threads: args.threads,
        strict: args.strict,
    };
    let started = Instant::now();
    match run(cmd, &cfg, &ov) {
        Ok(outcome) => {
            for w in &outcome.warnings {
                eprintln!("warning: {w}");
            }
            for f in &outcome.files {
                println!("wrote {}", f.display());
            }
            // Wall-clock details go to a side channel so report files stay
            // byte-identical across runs.
            if let Some(dir) = outcome.files.first().and_then(|f| f.parent()) {
                let meta = format!(
                    "elapsed_ms={}\nthreads={}\nstrict={}\n",
                    started.elapsed().as_millis(),
                    ov.threads,
                    ov.strict
                );
                let _ = std::fs::write(dir.join("meta.txt"), meta);
            }
            if outcome.passed {
                println!("all checks passed");
                ExitCode::SUCCESS
            } else {
                eprintln!("error: at least one invariant check failed");
                ExitCode::FAILURE
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
