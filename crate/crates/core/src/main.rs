use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use driftnet::config::ExperimentConfig;
use driftnet::harness;
use driftnet::Result;

#[derive(Parser)]
#[command(
    name = "driftnet",
    version,
    about = "Drainage-network bounding-walk simulator"
)]
struct Cli {
    /// Experiment configuration (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the master seed of the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; all cores by default.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Output directory; overrides the configuration.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the bounding walks and write one CSV row per replica.
    Simulate,
    /// Sample the limiting pair (θ, ∫).
    LimitSample,
    /// Exact law of τ on the pure lattice.
    ExactPmf {
        #[arg(long)]
        ell: u64,
        #[arg(long, default_value_t = 1000)]
        n_max: u64,
    },
    /// KS comparison of rescaled walk output against limit samples.
    Compare,
    /// Bounding walk against the brute-force forest on shared realizations.
    OracleCheck,
    /// SVG and CSV of one realized forest.
    ForestDump {
        #[arg(long, default_value_t = 0)]
        replica: u64,
    },
}

enum Outcome {
    Pass,
    StatisticalFailure,
}

fn load(cli: &Cli) -> Result<ExperimentConfig> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| driftnet::Error::Config("--config is required for this command".into()))?;
    let mut config = ExperimentConfig::load(path)?;
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Some(out) = &cli.out {
        config.out = out.clone();
    }
    Ok(config)
}

fn run(cli: &Cli) -> Result<Outcome> {
    let pass = |ok: bool| {
        if ok {
            Outcome::Pass
        } else {
            Outcome::StatisticalFailure
        }
    };
    if let Command::ExactPmf { ell, n_max } = cli.command {
        let out = cli.out.clone().unwrap_or_else(|| PathBuf::from("out"));
        let path = harness::cmd_exact_pmf(ell, n_max, &out)?;
        println!("wrote {}", path.display());
        return Ok(Outcome::Pass);
    }
    let config = load(cli)?;
    let out = config.out.clone();
    harness::with_threads(cli.threads, || match cli.command {
        Command::Simulate => {
            for s in harness::cmd_simulate(&config, &out)? {
                println!(
                    "ell = {}: {} replicas, censor rate {}",
                    s.ell,
                    s.replicas,
                    s.censor_rate.map_or("n/a".into(), |r| format!("{r:.4}"))
                );
            }
            Ok(Outcome::Pass)
        }
        Command::LimitSample => {
            let n = harness::cmd_limit_sample(&config, &out)?;
            println!(
                "wrote {n} limit samples to {}",
                out.join("limit_samples.csv").display()
            );
            Ok(Outcome::Pass)
        }
        Command::Compare => {
            let v = harness::cmd_compare(&config, &out)?;
            for e in &v.entries {
                println!(
                    "ell = {}: KS tau {:.4} (<= {}), KS integral {:.4} (<= {}) {}",
                    e.ell,
                    e.tau.statistic,
                    e.tau.threshold,
                    e.integral.statistic,
                    e.integral.threshold,
                    if e.pass { "PASS" } else { "FAIL" }
                );
            }
            Ok(pass(v.pass))
        }
        Command::OracleCheck => {
            let v = harness::cmd_oracle_check(&config, &out)?;
            for e in &v.entries {
                println!(
                    "ell = {}: {} matched, {} discarded of {}",
                    e.ell, e.matched, e.discarded, e.seeds
                );
                if let Some(m) = &e.first_mismatch {
                    println!("first mismatch at seed {}: {:?}", m.seed_id, m.status);
                }
            }
            Ok(pass(v.pass))
        }
        Command::ForestDump { replica } => {
            let (svg, csv) = harness::cmd_forest_dump(&config, replica, &out)?;
            println!("wrote {} and {}", svg.display(), csv.display());
            Ok(Outcome::Pass)
        }
        Command::ExactPmf { .. } => unreachable!(),
    })?
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(Outcome::Pass) => ExitCode::SUCCESS,
        Ok(Outcome::StatisticalFailure) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
