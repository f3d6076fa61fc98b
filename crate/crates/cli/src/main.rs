mod eval;
mod files;
mod manifest;
mod sample;
mod score;
mod synth;
mod train;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

/// Environment variable naming the directory that relative input paths are read from.
pub const DATA_DIR_ENV: &str = "KGEBM_DATA_DIR";

#[derive(Debug, Parser)]
#[command(name = "kgebm", version, about = "Energy-based knowledge graph embeddings")]
struct Cli {
    /// Directory that relative input paths are resolved against.
    #[arg(long, global = true, env = DATA_DIR_ENV)]
    data_dir: Option<PathBuf>,

    /// Worker threads for evaluation and scoring. Training stays serial.
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train a model and write `<out>.kgeb`, `<out>.vocab` and `<out>.manifest.json`.
    Train(train::TrainArgs),
    /// Retrain from a manifest and check that its metrics come out identical.
    Replay(train::ReplayArgs),
    /// Filtered link-prediction metrics and score distributions.
    Eval(eval::EvalArgs),
    /// Rank events by suspiciousness.
    #[command(alias = "rank")]
    Score(score::ScoreArgs),
    /// Draw triples from the model with Metropolis-Hastings chains.
    Sample(sample::SampleArgs),
    /// Write a synthetic plant baseline and labeled events.
    Synth(synth::SynthArgs),
}

/// Shared context for every command.
pub struct Env {
    data_dir: Option<PathBuf>,
    pub parallel: bool,
}

impl Env {
    pub fn input(&self, path: &Path) -> PathBuf {
        files::resolve_input(self.data_dir.as_deref(), path)
    }
}

/// A command-line misuse that clap cannot detect.
#[derive(Debug)]
pub struct Usage(pub String);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

/// Flags named after the config keys; each overrides the config file.
#[derive(Debug, Clone, Default, Args)]
pub struct ConfigFlags {
    /// enm, enmd, rese, rekl or transe.
    #[arg(long)]
    model: Option<String>,
    #[arg(long)]
    dim: Option<String>,
    #[arg(long)]
    lr: Option<String>,
    #[arg(long)]
    epochs: Option<String>,
    #[arg(long)]
    batch: Option<String>,
    #[arg(long)]
    neg_subject: Option<String>,
    #[arg(long)]
    neg_object: Option<String>,
    /// Metropolis-Hastings steps per chain.
    #[arg(long)]
    free_samples: Option<String>,
    /// Chains per batch triple.
    #[arg(long)]
    chains: Option<String>,
    /// Positions the sampler may change, e.g. `s,o`.
    #[arg(long)]
    positions: Option<String>,
    #[arg(long)]
    l1: Option<String>,
    #[arg(long)]
    l2: Option<String>,
    /// adagrad or adam.
    #[arg(long)]
    optimizer: Option<String>,
    #[arg(long)]
    init_mu: Option<String>,
    #[arg(long)]
    init_sigma: Option<String>,
    #[arg(long)]
    margin: Option<String>,
    #[arg(long)]
    seed: Option<String>,
}

impl ConfigFlags {
    pub fn overrides(&self) -> Vec<(String, String)> {
        let fields = [
            ("model", &self.model),
            ("dim", &self.dim),
            ("lr", &self.lr),
            ("epochs", &self.epochs),
            ("batch", &self.batch),
            ("neg_subject", &self.neg_subject),
            ("neg_object", &self.neg_object),
            ("free_samples", &self.free_samples),
            ("chains", &self.chains),
            ("positions", &self.positions),
            ("l1", &self.l1),
            ("l2", &self.l2),
            ("optimizer", &self.optimizer),
            ("init_mu", &self.init_mu),
            ("init_sigma", &self.init_sigma),
            ("margin", &self.margin),
            ("seed", &self.seed),
        ];
        fields
            .into_iter()
            .filter_map(|(k, v)| v.as_ref().map(|v| (k.to_string(), v.clone())))
            .collect()
    }
}

/// 1 for usage and configuration errors, 3 for non-finite parameters, 2 otherwise.
fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<Usage>() {
            return 1;
        }
        if let Some(e) = cause.downcast_ref::<kgebm::Error>() {
            return match e {
                kgebm::Error::Config(_) => 1,
                kgebm::Error::NonFinite(_) => 3,
                _ => 2,
            };
        }
    }
    2
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let parallel = match cli.threads {
        Some(0) => return Err(Usage("--threads must be at least 1".into()).into()),
        Some(n) => {
            rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
            n > 1
        }
        None => false,
    };
    let env = Env {
        data_dir: cli.data_dir,
        parallel,
    };
    match cli.command {
        Command::Train(args) => train::cmd_train(&env, &args),
        Command::Replay(args) => train::cmd_replay(&env, &args),
        Command::Eval(args) => eval::cmd_eval(&env, &args),
        Command::Score(args) => score::cmd_score(&env, &args),
        Command::Sample(args) => sample::cmd_sample(&env, &args),
        Command::Synth(args) => synth::cmd_synth(&args),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
