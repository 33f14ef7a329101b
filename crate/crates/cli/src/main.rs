use clap::{Parser, Subcommand};
use ricci_iter::checks::{audit_config, run_acceptance};
use ricci_iter::commands::{
    forward, green, invricci, iterate, write_artifacts, CommandOutput, EXIT_CONFIG, EXIT_INVARIANT, EXIT_OK,
};
use ricci_iter::config::{parse_config, RunConfig};
use std::path::{Path, PathBuf};
use std::process::exit;

#[derive(Parser)]
#[command(name = "ricci-iter", version, about = "Ricci iteration on the round sphere and flat tori")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct RunArgs {
    /// JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Directory receiving the artifacts.
    #[arg(long, default_value = "ricci-out")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Run the backward iteration.
    Iterate(RunArgs),
    /// Run the forward iteration (sphere only).
    Fwd(RunArgs),
    /// Solve for a metric with prescribed Ricci density.
    Invricci(RunArgs),
    /// Green-function bound for a stored potential.
    Green(RunArgs),
    /// Run the acceptance criteria, or audit a single configuration.
    Check {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Criteria to run (1-8); all when omitted.
        #[arg(long = "criterion", value_parser = clap::value_parser!(u8).range(1..=8))]
        criteria: Vec<u8>,
    },
}

fn load(path: &Path) -> RunConfig {
    let text = match std::fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("cannot read {}: {e}", path.display());
            exit(EXIT_CONFIG);
        }
    };
    let base = path.parent().unwrap_or(Path::new("."));
    match parse_config(&text, base) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("{}: {e}", path.display());
            exit(EXIT_CONFIG);
        }
    }
}

fn configure_threads() {
    let Ok(raw) = std::env::var("RICCI_ITER_THREADS") else {
        return;
    };
    let threads = match raw.trim().parse::<usize>() {
        Ok(n) if n > 0 => n,
        _ => {
            eprintln!("RICCI_ITER_THREADS must be a positive integer, got {raw:?}");
            exit(EXIT_CONFIG);
        }
    };
    if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global() {
        eprintln!("cannot configure the thread pool: {e}");
        exit(EXIT_CONFIG);
    }
}

fn finish(out: &CommandOutput, dir: &Path) -> ! {
    if let Err(e) = write_artifacts(dir, &out.artifacts) {
        eprintln!("cannot write artifacts to {}: {e}", dir.display());
        exit(1);
    }
    if out.exit == EXIT_OK {
        println!("{}", out.message);
    } else {
        eprintln!("{}", out.message);
    }
    exit(out.exit)
}

fn main() {
    let cli = Cli::parse();
    configure_threads();
    let (run, args): (fn(&RunConfig) -> CommandOutput, RunArgs) = match cli.command {
        Command::Iterate(a) => (iterate, a),
        Command::Fwd(a) => (forward, a),
        Command::Invricci(a) => (invricci, a),
        Command::Green(a) => (green, a),
        Command::Check { config: Some(path), .. } => {
            let cfg = load(&path);
            let lines = audit_config(&cfg);
            for l in &lines {
                println!("{:<22} {} {}", l.name, if l.passed { "PASS" } else { "FAIL" }, l.detail);
            }
            exit(if lines.iter().all(|l| l.passed) { EXIT_OK } else { EXIT_INVARIANT });
        }
        Command::Check { config: None, criteria } => {
            let reports = run_acceptance(&criteria);
            for r in &reports {
                println!("{}", r.line());
            }
            exit(if reports.iter().all(|r| r.passed) { EXIT_OK } else { EXIT_INVARIANT });
        }
    };
    let cfg = load(&args.config);
    finish(&run(&cfg), &args.out);
}
