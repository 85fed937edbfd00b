use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use consortia::harness::{self, Format, RunOptions, RunOutput, Scenario};
use consortia::Result;

#[derive(Parser)]
#[command(name = "consortia", version, about = "Simulate multicellular feedback control in microbial consortia")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Overrides the scenario seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (default: the scenario's, else out/<name>).
    #[arg(long, global = true, env = "CONSORTIA_OUT_DIR")]
    out_dir: Option<PathBuf>,
    /// Worker threads for replicates and sweep points.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[arg(long, global = true, value_enum)]
    format: Option<FormatArg>,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario (Monte Carlo, comparison, sweep or single run).
    Run { config: PathBuf },
    /// Parse and validate a scenario without running it.
    Validate {
        config: PathBuf,
        /// Print the canonical form of the scenario.
        #[arg(long)]
        canonical: bool,
    },
    /// Run the scenario's sweep block.
    Sweep { config: PathBuf },
    /// Run the scenario's closed/open comparison block.
    Compare { config: PathBuf },
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Svg,
    Both,
}

impl From<FormatArg> for Format {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Csv => Format::Csv,
            FormatArg::Svg => Format::Svg,
            FormatArg::Both => Format::Both,
        }
    }
}

fn load(cli: &Cli, path: &Path) -> Result<Scenario> {
    let mut s = Scenario::load(path)?;
    if let Some(seed) = cli.seed {
        s.seed = seed;
    }
    Ok(s)
}

fn options(cli: &Cli, s: &Scenario) -> RunOptions {
    let out_dir = cli
        .out_dir
        .clone()
        .or_else(|| s.output.dir.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out").join(&s.name));
    RunOptions {
        out_dir,
        format: cli.format.map(Format::from).unwrap_or(s.output.format),
        threads: cli.threads,
    }
}

fn report(out: &RunOutput) {
    for w in &out.warnings {
        eprintln!("warning: {w}");
    }
    for f in &out.files {
        println!("{}", f.display());
    }
}

type Runner = fn(&Scenario, &RunOptions) -> Result<RunOutput>;

fn execute(cli: &Cli) -> Result<()> {
    let (path, runner): (&Path, Runner) = match &cli.command {
        Command::Validate { config, canonical } => {
            let s = load(cli, config)?;
            if *canonical {
                print!("{}", s.to_canonical_toml()?);
            } else {
                println!("{}: ok", s.name);
            }
            return Ok(());
        }
        Command::Run { config } => (config, harness::run_scenario),
        Command::Sweep { config } => (config, harness::run_sweep),
        Command::Compare { config } => (config, harness::run_compare),
    };
    let s = load(cli, path)?;
    let out = runner(&s, &options(cli, &s))?;
    report(&out);
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let mut src = std::error::Error::source(&e);
            while let Some(inner) = src {
                eprintln!("  caused by: {inner}");
                src = inner.source();
            }
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
