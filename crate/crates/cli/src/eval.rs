use std::path::PathBuf;

use anyhow::Context;
use clap::Args;
use kgebm::eval::{evaluate, score_distributions, FilterSet, MetricsReport, DEFAULT_BINS, DEFAULT_HITS};
use kgebm::graph::{encode, parse_triples};
use kgebm::rng::{stream, Stream};
use kgebm::trainer::negative_samples;
use kgebm::Triple;

use crate::files::{self, ModelFiles};
use crate::{Env, Usage};

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Model prefix or `.kgeb` path.
    #[arg(long)]
    pub model: PathBuf,
    /// Test triples.
    #[arg(long)]
    pub test: PathBuf,
    /// Known-true triples removed from the candidate lists; repeatable. The test file is always included.
    #[arg(long)]
    pub filter: Vec<PathBuf>,
    /// Cutoffs for hits@k.
    #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_HITS)]
    pub hits: Vec<usize>,
    #[arg(long, default_value_t = DEFAULT_BINS)]
    pub bins: usize,
    /// Seed for the corrupted triples behind the negative score distribution.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Write the full report, including distributions, as JSON.
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Print JSON instead of `metric<TAB>value` lines.
    #[arg(long)]
    pub json: bool,
}

pub fn cmd_eval(env: &Env, args: &EvalArgs) -> anyhow::Result<()> {
    if args.hits.contains(&0) {
        return Err(Usage("hits cutoffs must be at least 1".into()).into());
    }
    let loaded = files::load_model(&ModelFiles::new(&env.input(&args.model)))?;
    let vocab = &loaded.vocab;
    let test_path = env.input(&args.test);
    let (text, _) = files::read_text(&test_path)?;
    let test = encode(vocab, &parse_triples(&text)?).with_context(|| format!("in {}", test_path.display()))?;
    if test.is_empty() {
        return Err(kgebm::Error::Invalid(format!("{} holds no triples", test_path.display())).into());
    }

    let mut filter: FilterSet = test.triples().iter().copied().collect();
    for path in &args.filter {
        let path = env.input(path);
        let (text, _) = files::read_text(&path)?;
        let triples = parse_triples(&text).with_context(|| format!("in {}", path.display()))?;
        // Triples with symbols outside the vocabulary can never be candidates.
        filter.extend(triples.iter().filter_map(|t| vocab.encode_triple(t).ok()));
    }

    let metrics = evaluate(&loaded.model, test.triples(), &filter, &args.hits, env.parallel)?;
    let mut report = MetricsReport::from_link_metrics(&metrics);

    let mut rng = stream(args.seed, Stream::Negatives);
    let mut negatives: Vec<Triple> = Vec::with_capacity(2 * test.len());
    if vocab.num_entities() > 1 {
        for &t in test.triples() {
            negatives.extend(negative_samples(&mut rng, t, 1, 1, vocab.num_entities())?);
        }
        report.distributions = Some(score_distributions(&loaded.model, test.triples(), &negatives, args.bins)?);
    }

    if let Some(path) = &args.report {
        files::write_atomic(path, (report.to_json()? + "\n").as_bytes())?;
    }
    if args.json {
        println!("{}", report.to_json()?);
    } else {
        print!("{}", report.to_tsv());
    }
    Ok(())
}
