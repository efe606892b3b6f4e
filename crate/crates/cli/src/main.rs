use std::path::PathBuf;
use std::process::ExitCode;

use bcucb::contract::ChainMode;
use bcucb::runner::{self, RunRequest, ScenarioSource, OUT_DIR_ENV};
use bcucb::{ConfigError, Error, Preset};
use clap::{ArgGroup, Parser, ValueEnum};

const EXIT_CONFIG: u8 = 2;
const EXIT_INVARIANT: u8 = 3;
const EXIT_IO: u8 = 1;

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ChainArg {
    /// Keep and export every block.
    Full,
    /// Track only the head digest.
    Head,
    /// Build no blocks.
    Off,
}

/// Run BC-UCB scenarios, presets and seed sweeps.
#[derive(Debug, Parser)]
#[command(name = "bcucb", version, group(ArgGroup::new("scenario").required(true).args(["preset", "config"])))]
struct Cli {
    /// Preset name: no-attack, theorem1 .. theorem7.
    #[arg(long)]
    preset: Option<String>,

    /// Scenario document (TOML).
    #[arg(long)]
    config: Option<PathBuf>,

    /// Seeds, e.g. `1,2,3`, `0..20` or `1..=5`.
    #[arg(long, value_parser = parse_list)]
    seeds: Option<NumList>,

    /// Horizons, e.g. `2000,4000,8000`.
    #[arg(long, value_parser = parse_list)]
    horizons: Option<NumList>,

    /// Output directory.
    #[arg(long, env = OUT_DIR_ENV)]
    out: Option<PathBuf>,

    /// Replica worker threads (1 = sequential, 0 = all cores).
    #[arg(long, default_value_t = 1)]
    jobs: usize,

    /// How much of the chain to keep.
    #[arg(long, value_enum, default_value_t = ChainArg::Head)]
    chain: ChainArg,

    /// Suppress the per-horizon table.
    #[arg(long)]
    quiet: bool,
}

#[derive(Debug, Clone)]
struct NumList(Vec<u64>);

fn parse_list(s: &str) -> Result<NumList, String> {
    let mut out = Vec::new();
    for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let num = |x: &str| x.trim().parse::<u64>().map_err(|e| format!("`{x}`: {e}"));
        if let Some((a, b)) = part.split_once("..=") {
            out.extend(num(a)?..=num(b)?);
        } else if let Some((a, b)) = part.split_once("..") {
            out.extend(num(a)?..num(b)?);
        } else {
            out.push(num(part)?);
        }
    }
    if out.is_empty() {
        return Err("empty list".into());
    }
    Ok(NumList(out))
}

fn source(cli: &Cli) -> Result<ScenarioSource, ConfigError> {
    if let Some(name) = &cli.preset {
        return Ok(ScenarioSource::Preset(name.parse::<Preset>()?));
    }
    let path = cli.config.as_ref().expect("clap enforces one of preset/config");
    let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io {
        path: path.display().to_string(),
        reason: e.to_string(),
    })?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "scenario".into());
    Ok(ScenarioSource::Document { name, text })
}

fn execute(cli: &Cli) -> Result<(), Error> {
    let mut request = RunRequest::new(source(cli)?);
    request.seeds = cli.seeds.clone().map(|l| l.0).unwrap_or_default();
    request.horizons = cli.horizons.clone().map(|l| l.0).unwrap_or_default();
    request.out = cli.out.clone();
    request.jobs = cli.jobs;
    request.chain = match cli.chain {
        ChainArg::Full => ChainMode::Full,
        ChainArg::Head => ChainMode::HeadOnly,
        ChainArg::Off => ChainMode::Off,
    };

    let (replicas, defaults) = runner::plan(&request)?;
    for d in &defaults {
        eprintln!("{d}");
    }
    eprintln!(
        "running {} replica(s) of {} into {}",
        replicas.len(),
        request.source.name(),
        runner::output_dir(request.out.as_deref()).join(request.source.name()).display()
    );

    let report = runner::run(&request)?;
    if !cli.quiet {
        println!("{:>8} {:>6} {:>12} {:>10} {:>10} {:>12}", "T", "seeds", "mean R_T", "stderr", "R_T/lnT", "mean cost");
        for r in &report.rows {
            println!(
                "{:>8} {:>6} {:>12.3} {:>10.3} {:>10.3} {:>12.4e}",
                r.horizon, r.seeds, r.mean_regret, r.stderr, r.ratio, r.mean_cost
            );
        }
        if let Some(d) = &report.diagnostics {
            println!("verdict: {}", d.verdict);
        }
    }
    Ok(())
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) => EXIT_CONFIG,
        Error::Invariant(_) => EXIT_INVARIANT,
        Error::Io { .. } => EXIT_IO,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
