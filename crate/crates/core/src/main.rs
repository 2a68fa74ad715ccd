use clap::{Args, Parser, Subcommand};
use pinnlab::config::{
    check_manifest, resolve_out, run_bench, run_profile, run_select, run_theory, run_train,
    CliError, ConfigError, RunConfig,
};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "pinnlab", about = "Desk-scale laboratory for gradient conflict in physics-informed training")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct Common {
    /// Path to a key=value config file
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override the config seed
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (default: $PINNLAB_OUT_ROOT/<subcommand>)
    #[arg(long)]
    out: Option<PathBuf>,
    /// Extra key=value overrides, applied after the config file
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Verify the manifest in the output directory instead of running
    #[arg(long)]
    check: bool,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run the cheap vanilla conflict profiler and emit profile.csv
    Profile(Common),
    /// Profile, then print and save the method-selection decision
    Select(Common),
    /// Train one model on one problem and emit logs plus a checkpoint
    Train(Common),
    /// Monte Carlo estimates of the conflict statistic under magnitude tails
    Theory(Common),
    /// Sweep methods x seeds over worker threads and emit a summary
    Bench(Common),
}

fn load(common: &Common) -> Result<RunConfig, ConfigError> {
    let mut overrides: Vec<(String, String)> = Vec::new();
    for pair in &common.set {
        let Some((k, v)) = pair.split_once('=') else {
            return Err(ConfigError::Malformed(0, pair.clone()));
        };
        overrides.push((k.to_string(), v.to_string()));
    }
    if let Some(seed) = common.seed {
        overrides.push(("seed".into(), seed.to_string()));
    }
    match &common.config {
        Some(path) => RunConfig::from_file(path, &overrides),
        None => RunConfig::parse("", &overrides),
    }
}

fn dispatch(name: &str, common: &Common, run: impl Fn(&RunConfig, &std::path::Path) -> Result<(), CliError>) -> Result<(), CliError> {
    let cfg = load(common)?;
    let out = resolve_out(common.out.as_deref(), &cfg, name);
    if common.check {
        let bad = check_manifest(&out)?;
        if bad.is_empty() {
            println!("manifest ok: {}", out.display());
            return Ok(());
        }
        for line in &bad {
            eprintln!("{line}");
        }
        return Err(CliError::Internal(format!(
            "{} manifest entries failed verification",
            bad.len()
        )));
    }
    run(&cfg, &out)?;
    println!("wrote {}", out.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.cmd {
        Cmd::Profile(c) => dispatch("profile", c, run_profile),
        Cmd::Select(c) => dispatch("select", c, run_select),
        Cmd::Train(c) => dispatch("train", c, run_train),
        Cmd::Theory(c) => dispatch("theory", c, run_theory),
        Cmd::Bench(c) => dispatch("bench", c, run_bench),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Config(e)) => {
            eprintln!("config error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(3)
        }
    }
}
