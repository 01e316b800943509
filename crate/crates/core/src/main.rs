use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use cmdp::harness::experiment::{build_environment, run_experiment, write_outputs};
use cmdp::harness::sweep::run_sweep;
use cmdp::harness::verify::{run_suite, Suite};
use cmdp::harness::ExperimentConfig;
use cmdp::Result;

/// Contextual MDP exploration experiments.
#[derive(Parser)]
#[command(name = "cmdp", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment and print its summary.
    Run(ConfigArgs),
    /// Run the grid in the config's [sweep] section in parallel.
    Sweep(ConfigArgs),
    /// Run verification suites; exits 1 if any check fails.
    Verify {
        /// Suite names, or `all`.
        #[arg(default_value = "all")]
        suites: Vec<String>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Write the environment a config describes as JSON.
    GenEnv(ConfigArgs),
}

#[derive(Args, Clone)]
struct ConfigArgs {
    #[arg(long)]
    config: PathBuf,
    /// Replaces the config's seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (a file for gen-env); replaces output.dir.
    #[arg(long)]
    out: Option<PathBuf>,
    /// `key=value` with a dotted key, e.g. `agent.m=50`. Repeatable.
    #[arg(long = "override", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

impl ConfigArgs {
    fn load(&self) -> Result<ExperimentConfig> {
        let mut config = ExperimentConfig::load(&self.config, &self.overrides)?;
        if let Some(seed) = self.seed {
            config.seed = seed;
        }
        if let Some(out) = &self.out {
            config.output.dir = Some(out.clone());
        }
        Ok(config)
    }
}

fn run(args: &ConfigArgs) -> Result<()> {
    let config = args.load()?;
    let result = run_experiment(&config)?;
    if let Some(dir) = &config.output.dir {
        write_outputs(&result, dir, config.output.checkpoint)?;
    }
    println!("{}", serde_json::to_string_pretty(&result.summary)?);
    Ok(())
}

fn sweep(args: &ConfigArgs) -> Result<()> {
    let config = args.load()?;
    let rows = run_sweep(&config, config.output.dir.as_deref())?;
    let mut writer = csv::Writer::from_writer(std::io::stdout());
    for row in &rows {
        writer.serialize(row)?;
    }
    writer.flush()?;
    Ok(())
}

fn gen_env(args: &ConfigArgs) -> Result<()> {
    // --out is the output file here, not a run directory
    let config = ConfigArgs { out: None, ..args.clone() }.load()?;
    let env = build_environment(&config)?;
    let json = serde_json::to_string_pretty(&env)?;
    match &args.out {
        Some(path) => write_file(path, &json)?,
        None => println!("{json}"),
    }
    Ok(())
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)?;
    }
    let mut file = std::fs::File::create(path)?;
    writeln!(file, "{text}")?;
    Ok(())
}

fn verify(names: &[String], seed: u64) -> Result<bool> {
    let suites: Vec<Suite> = if names.iter().any(|n| n == "all") {
        Suite::ALL.to_vec()
    } else {
        names.iter().map(|n| n.parse()).collect::<Result<_>>()?
    };
    let mut all_passed = true;
    for suite in suites {
        let report = run_suite(suite, seed);
        println!("{report}");
        all_passed &= report.passed();
    }
    Ok(all_passed)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Run(args) => run(args).map(|_| true),
        Command::Sweep(args) => sweep(args).map(|_| true),
        Command::GenEnv(args) => gen_env(args).map(|_| true),
        Command::Verify { suites, seed } => verify(suites, *seed),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
