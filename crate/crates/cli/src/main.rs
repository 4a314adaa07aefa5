//! `preflearn`: seeded preference-learning experiments from a JSON config.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use preflearn::acquisition::AcquisitionKind;
use preflearn::batch::BatchMethod;
use preflearn::domain::Response;
use preflearn::experiment::{
    compare_strategies, run_experiment, write_comparison, write_outputs, BatchSpec, ExperimentConfig, Summary,
};
use preflearn::session::{ActiveSession, SessionConfig};
use preflearn::{Error, Result};

#[derive(Parser)]
#[command(
    name = "preflearn",
    version,
    about = "Active preference-based reward learning experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run seeded sessions against a simulated human and write learning curves.
    Run {
        #[command(flatten)]
        io: Io,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Run several strategies on paired seeds and tabulate mean cosine per iteration.
    Compare {
        #[command(flatten)]
        io: Io,
        #[command(flatten)]
        overrides: Overrides,
        /// Comma-separated strategy names; replaces `strategies` in the config.
        #[arg(long, value_delimiter = ',')]
        strategies: Vec<AcquisitionKind>,
    },
    /// Feed a fixed answer sequence through one session and write the resulting belief.
    Replay {
        #[command(flatten)]
        io: Io,
        /// JSON lines, one response per line, answering each query in turn.
        #[arg(long)]
        responses: PathBuf,
    },
}

#[derive(Args)]
struct Io {
    /// JSON config file. `run` and `compare` take an experiment config,
    /// `replay` a session config.
    #[arg(long)]
    config: PathBuf,
    /// Output directory, created if missing.
    #[arg(long)]
    out: PathBuf,
    /// Master seed; overrides the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Print nothing on success.
    #[arg(long)]
    quiet: bool,
}

#[derive(Args)]
struct Overrides {
    #[arg(long)]
    strategy: Option<AcquisitionKind>,
    /// β
    #[arg(long)]
    rationality: Option<f64>,
    /// δ
    #[arg(long)]
    equality_threshold: Option<f64>,
    /// β_D
    #[arg(long)]
    demo_rationality: Option<f64>,
    #[arg(long)]
    iterations: Option<usize>,
    #[arg(long)]
    runs: Option<usize>,
    /// Enables batch mode with this selection method.
    #[arg(long)]
    batch_method: Option<BatchMethod>,
    /// b
    #[arg(long)]
    batch_size: Option<usize>,
    /// B
    #[arg(long)]
    reduced_size: Option<usize>,
    #[arg(long)]
    dpp_sigma: Option<f64>,
    #[arg(long)]
    dpp_gamma: Option<f64>,
}

impl Overrides {
    fn apply(&self, config: &mut ExperimentConfig) {
        if let Some(s) = self.strategy {
            config.strategy = s;
        }
        if let Some(v) = self.rationality {
            config.model.rationality = v;
        }
        if let Some(v) = self.equality_threshold {
            config.model.equality_threshold = v;
        }
        if let Some(v) = self.demo_rationality {
            config.model.demo_rationality = v;
        }
        if let Some(v) = self.iterations {
            config.iterations = v;
        }
        if let Some(v) = self.runs {
            config.runs = v;
        }
        let batch_flags = self.batch_method.is_some()
            || self.batch_size.is_some()
            || self.reduced_size.is_some()
            || self.dpp_sigma.is_some()
            || self.dpp_gamma.is_some();
        if batch_flags {
            let spec = config.batch.get_or_insert_with(BatchSpec::default);
            if let Some(m) = self.batch_method {
                spec.method = m;
            }
            if let Some(b) = self.batch_size {
                spec.batch_size = b;
            }
            if self.reduced_size.is_some() {
                spec.reduced_size = self.reduced_size;
            }
            if self.dpp_sigma.is_some() {
                spec.dpp_sigma = self.dpp_sigma;
            }
            if let Some(g) = self.dpp_gamma {
                spec.dpp_gamma = g;
            }
        }
    }
}

fn load_experiment(io: &Io, overrides: &Overrides) -> Result<ExperimentConfig> {
    let mut config = ExperimentConfig::parse(&read(&io.config)?)?;
    if let Some(seed) = io.seed {
        config.seed = seed;
    }
    overrides.apply(&mut config);
    config.validate()?;
    Ok(config)
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

fn describe(s: &Summary) -> String {
    let name = match s.batch_method {
        Some(m) => format!("{} + {m}", s.strategy),
        None => s.strategy.to_string(),
    };
    format!(
        "{name}: final cosine {:.4} ± {:.4} over {} runs of {} iterations",
        s.final_cosine_mean, s.final_cosine_std, s.runs, s.iterations
    )
}

fn run(io: &Io, overrides: &Overrides) -> Result<()> {
    let config = load_experiment(io, overrides)?;
    let result = run_experiment(&config)?;
    write_outputs(&result, &io.out)?;
    if !io.quiet {
        println!("{}", describe(&result.summary));
        println!("wrote {}", io.out.display());
    }
    Ok(())
}

fn compare(io: &Io, overrides: &Overrides, strategies: &[AcquisitionKind]) -> Result<()> {
    let mut config = load_experiment(io, overrides)?;
    if !strategies.is_empty() {
        config.strategies = strategies.to_vec();
    }
    let (comparison, results) = compare_strategies(&config)?;
    write_comparison(&comparison, &results, &io.out)?;
    if !io.quiet {
        for s in &comparison.summaries {
            println!("{}", describe(s));
        }
        println!("wrote {}", io.out.display());
    }
    Ok(())
}

fn replay(io: &Io, responses: &Path) -> Result<()> {
    let mut config = SessionConfig::from_json(&read(&io.config)?)?;
    if let Some(seed) = io.seed {
        config.seed = seed;
    }
    let answers = read(responses)?
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(n, l)| {
            serde_json::from_str::<Response>(l)
                .map_err(|e| Error::Config(format!("{} line {}: {e}", responses.display(), n + 1)))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut session = ActiveSession::new(config)?;
    let mut transcript = String::new();
    for response in &answers {
        let pending = session.next_query()?;
        session.answer(Some(pending.query_id), response)?;
        let line = serde_json::json!({
            "query_id": pending.query_id,
            "query": pending.query,
            "response": response,
        });
        transcript.push_str(&line.to_string());
        transcript.push('\n');
    }
    fs::create_dir_all(&io.out)?;
    let summary = session.summary()?;
    let mut json = serde_json::to_string_pretty(&summary).map_err(|e| Error::Io(e.to_string()))?;
    json.push('\n');
    fs::write(io.out.join("belief.json"), json)?;
    fs::write(io.out.join("transcript.jsonl"), transcript)?;
    if !io.quiet {
        println!("replayed {} responses", answers.len());
        if let Some(mean) = &summary.mean {
            println!("belief mean {mean:?}");
        }
        println!("wrote {}", io.out.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Run { io, overrides } => run(io, overrides),
        Command::Compare {
            io,
            overrides,
            strategies,
        } => compare(io, overrides, strategies),
        Command::Replay { io, responses } => replay(io, responses),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Config(_) | Error::InvalidParameter { .. } | Error::UnknownName { .. } => ExitCode::from(2),
                _ => ExitCode::FAILURE,
            }
        }
    }
}
