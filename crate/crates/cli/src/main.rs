use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use critfield_cli::config::{read_config, Command};
use critfield_cli::output::default_out_dir;
use critfield_cli::plot::{emit, load_record, PlotKind};
use critfield_cli::run::{execute, Invocation};
use critfield_cli::{exit_code, EXIT_CONFIG};

#[derive(Parser)]
#[command(
    name = "critfield",
    version,
    about = "Critical points of Gaussian random fields: batch runs"
)]
struct Cli {
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Spectral moments, nondegeneracy, covariance jet and C_m(w).
    Spectrum(RunArgs),
    /// Synthesize realizations and check their jet statistics.
    Field(RunArgs),
    /// Count critical points with the Newton locator.
    Count(RunArgs),
    /// Wick moments, shifted determinants and the semicircle.
    Randmat(RunArgs),
    /// Second-chaos coefficients and V_2,inf.
    Chaos(RunArgs),
    /// Mean, variance plateau and normality of critical point counts.
    Clt(RunArgs),
    /// Newton counts against smoothed Kac-Rice counts.
    Crosscheck(RunArgs),
    /// Write plot-ready CSVs from a run record.
    Plot(PlotArgs),
}

#[derive(Args)]
struct RunArgs {
    /// TOML run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Master seed; overrides the file.
    #[arg(long)]
    seed: Option<u64>,
    /// Run directory (default: $CRITFIELD_OUT_ROOT/<command>-seed<seed>, root `runs`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write into a non-empty run directory.
    #[arg(long)]
    force: bool,
    /// Print the resolved plan and exit without writing anything.
    #[arg(long)]
    dry_run: bool,
}

#[derive(Args)]
struct PlotArgs {
    /// `record.json` or the run directory holding it.
    #[arg(long)]
    record: PathBuf,
    /// zeta-hist, variance-plateau, semicircle or rho-identity.
    #[arg(long)]
    kind: String,
    /// Output directory (default: next to the record).
    #[arg(long)]
    out: Option<PathBuf>,
}

fn run_command(command: Command, args: RunArgs) -> Result<()> {
    let config = read_config(&args.config, command, args.seed)?;
    let out = args
        .out
        .or_else(|| config.out.clone())
        .unwrap_or_else(|| default_out_dir(&command.to_string(), config.seed));
    let inv = Invocation {
        config,
        out,
        force: args.force,
        dry_run: args.dry_run,
    };
    print!("{}", execute(&inv)?);
    if !inv.dry_run {
        println!("results in {}", inv.out.display());
    }
    Ok(())
}

fn plot(args: PlotArgs) -> Result<()> {
    let kind: PlotKind = args.kind.parse()?;
    let (record, dir) = load_record(&args.record)?;
    let out = args.out.unwrap_or(dir);
    std::fs::create_dir_all(&out).with_context(|| format!("cannot create {}", out.display()))?;
    let path = emit(&record, kind, &out)?;
    println!("wrote {}", path.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(k) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(k)
            .build_global()
        {
            eprintln!("error: cannot start {k} threads: {e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    }
    let result = match cli.command {
        Cmd::Spectrum(a) => run_command(Command::Spectrum, a),
        Cmd::Field(a) => run_command(Command::Field, a),
        Cmd::Count(a) => run_command(Command::Count, a),
        Cmd::Randmat(a) => run_command(Command::Randmat, a),
        Cmd::Chaos(a) => run_command(Command::Chaos, a),
        Cmd::Clt(a) => run_command(Command::Clt, a),
        Cmd::Crosscheck(a) => run_command(Command::Crosscheck, a),
        Cmd::Plot(a) => plot(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
