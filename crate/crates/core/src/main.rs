use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};

use wsn_recovery::experiments::{comparison_csv, preset, results_csv, run_preset, PRESET_NAMES};
use wsn_recovery::{Config, Error, Protocol, ScenarioMetrics, Simulation};

#[derive(Parser)]
#[command(name = "wsn-recovery", version, about = "Sensing-hole recovery simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario.
    Run {
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        protocol: Option<Protocol>,
        /// Write the metrics CSV here instead of standard output.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Write the per-node energy ledger CSV here.
        #[arg(long)]
        ledger: Option<PathBuf>,
        /// Print registration, death and per-iteration movement events to
        /// standard error.
        #[arg(long)]
        verbose: bool,
    },
    /// Run a preset sweep for both protocols.
    Experiment {
        name: String,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Parse and check a config without running it.
    Validate { config: PathBuf },
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Invariant(_) | Error::Registration(_) | Error::ComparisonInvalid(_) => 3,
        _ => 2,
    }
}

fn fail(e: Error) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(exit_code(&e))
}

fn load(path: &Path) -> Result<Config, Error> {
    let c = Config::load(path)?;
    c.validate()?;
    Ok(c)
}

fn write(path: &Path, text: &str) -> Result<(), Error> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(path, text)?;
    Ok(())
}

fn cmd_run(
    path: &Path,
    seed: Option<u64>,
    protocol: Option<Protocol>,
    out: Option<&Path>,
    ledger: Option<&Path>,
    verbose: bool,
) -> Result<(), Error> {
    let mut config = load(path)?;
    if let Some(s) = seed {
        config.field.rng_seed = s;
    }
    if let Some(p) = protocol {
        config.scenario.protocol = p;
    }
    if verbose {
        config.relocation.trace = true;
    }
    print!("# effective config\n{}\n", config.resolved().to_toml());
    let report = Simulation::new(&config)?.run()?;
    if verbose {
        for line in &report.events {
            eprintln!("{line}");
        }
    }
    let csv = format!(
        "{}\n{}\n",
        ScenarioMetrics::CSV_HEADER,
        report.metrics.to_csv_row(config.scenario.holes as f64)
    );
    println!("# summary\n{}", report.metrics.summary());
    match out {
        Some(p) => write(p, &csv)?,
        None => print!("# metrics\n{csv}"),
    }
    if let Some(p) = ledger {
        write(p, &report.ledger_csv)?;
    }
    Ok(())
}

fn cmd_experiment(name: &str, dir: &Path) -> Result<(), Error> {
    let Some(p) = preset(name) else {
        return Err(Error::Config(format!(
            "unknown experiment {name:?} (expected one of {})",
            PRESET_NAMES.join(", ")
        )));
    };
    let started = Instant::now();
    let out = run_preset(&p)?;
    write(&dir.join(format!("{}.csv", p.name)), &results_csv(&out.rows))?;
    write(&dir.join(format!("{}_comparison.csv", p.name)), &comparison_csv(&out.comparisons))?;
    println!("{}: {} ({} runs, {:.1} s)", p.name, p.title, out.rows.len(), started.elapsed().as_secs_f64());
    println!("{:>6} {:>8} {:>8} {:>9} {:>9} {:>9} {:>9}", "value", "T_r(h)", "T_r(s)", "cov(h)", "cov(s)", "energy(h)", "energy(s)");
    for (v, c) in &out.comparisons {
        println!(
            "{:>6} {:>8} {:>8} {:>9.4} {:>9.4} {:>9.4} {:>9.4}",
            v,
            c.hybrid.recovery_time_steps,
            c.ssoa.recovery_time_steps,
            c.hybrid.final_coverage,
            c.ssoa.final_coverage,
            c.hybrid.energy_spent_fraction,
            c.ssoa.energy_spent_fraction
        );
    }
    Ok(())
}

fn cmd_validate(path: &Path) -> Result<(), Error> {
    let config = load(path)?;
    print!("{}", config.resolved().to_toml());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run {
            config,
            seed,
            protocol,
            out,
            ledger,
            verbose,
        } => cmd_run(config, *seed, *protocol, out.as_deref(), ledger.as_deref(), *verbose),
        Command::Experiment { name, out } => cmd_experiment(name, out),
        Command::Validate { config } => cmd_validate(config),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fail(e),
    }
}
