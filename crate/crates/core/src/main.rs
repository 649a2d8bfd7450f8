use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use dynfuse::config::ExperimentConfig;
use dynfuse::{experiment, trace, Error};

#[derive(Parser)]
#[command(name = "dynfuse", version, about = "Context-aware dynamic score fusion experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment suite described by a config file.
    Run {
        config: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Replay a recorded score trace through the authentication loop.
    Replay {
        config: PathBuf,
        trace: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Parse and validate a config file without running it.
    Validate { config: PathBuf },
}

#[derive(Args)]
struct Overrides {
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    #[arg(long)]
    trials: Option<usize>,
}

impl Overrides {
    fn apply(self, cfg: &mut ExperimentConfig) -> Result<(), Error> {
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(dir) = self.out_dir {
            cfg.out_dir = dir;
        }
        if let Some(n) = self.trials {
            if n == 0 {
                return Err(Error::Validation("--trials must be positive".into()));
            }
            cfg.trials = n;
        }
        Ok(())
    }
}

fn load(path: &PathBuf, overrides: Option<Overrides>) -> Result<ExperimentConfig, Error> {
    let mut cfg = ExperimentConfig::load(path)?;
    if let Some(o) = overrides {
        o.apply(&mut cfg)?;
    }
    Ok(cfg)
}

fn execute(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Validate { config } => {
            let cfg = load(&config, None)?;
            println!(
                "{}: ok ({} classifiers, {} contexts, {} approaches)",
                config.display(),
                cfg.classifiers.len(),
                cfg.contexts.len(),
                cfg.approaches.len()
            );
        }
        Command::Run { config, overrides } => {
            let cfg = load(&config, Some(overrides))?;
            let (result, files) = experiment::run_experiment(&cfg)?;
            print_table(&cfg, &result.summary);
            println!("wrote {} files to {}", files.len(), cfg.out_dir.display());
        }
        Command::Replay {
            config,
            trace: trace_path,
            overrides,
        } => {
            let cfg = load(&config, Some(overrides))?;
            let records = trace::parse_trace(&trace_path)?;
            let (trace, path) = experiment::run_replay(&cfg, &records)?;
            println!(
                "replayed {} records over {} steps: {} lock events, final state {}",
                records.len(),
                trace.rows.len(),
                trace.lock_events(),
                trace.final_state().map_or("n/a".into(), |s| s.to_string())
            );
            println!("wrote {}", path.display());
        }
    }
    Ok(())
}

fn print_table(cfg: &ExperimentConfig, summary: &experiment::Summary) {
    let contexts = cfg.context_labels();
    print!("{:<10}", "approach");
    for ctx in &contexts {
        print!("{:>10}", ctx.as_str());
    }
    println!("{:>8}", "#calcs");
    for a in &summary.approaches {
        print!("{:<10}", a.approach);
        for ctx in &contexts {
            print!("{:>9.2}%", a.eer[ctx] * 100.0);
        }
        println!("{:>8.2}", a.score_calculations);
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_validation() {
                ExitCode::from(1)
            } else {
                ExitCode::from(2)
            }
        }
    }
}
