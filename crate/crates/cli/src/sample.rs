use std::path::PathBuf;

use anyhow::Context;
use clap::Args;
use kgebm::graph::{format_triples, parse_triples};
use kgebm::rng::{stream, Stream};
use kgebm::sampler::{generate_samples, PositionSet, SamplerConfig};
use kgebm::{StoredModel, Triple};
use rand::Rng as _;

use crate::files::{self, ModelFiles};
use crate::{Env, Usage};

#[derive(Debug, Args)]
pub struct SampleArgs {
    /// Model prefix or `.kgeb` path; energy and RESCAL models only.
    #[arg(long)]
    pub model: PathBuf,
    /// Number of chains, one sample each.
    #[arg(long, default_value_t = 100)]
    pub count: usize,
    /// Metropolis-Hastings steps per chain.
    #[arg(long, default_value_t = 20)]
    pub steps: usize,
    /// Positions the sampler may change, e.g. `s,o`.
    #[arg(long, default_value = "s,p,o")]
    pub positions: String,
    /// Chains start at these triples in turn; uniformly drawn triples otherwise.
    #[arg(long)]
    pub start: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Sample file; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn cmd_sample(env: &Env, args: &SampleArgs) -> anyhow::Result<()> {
    if args.count == 0 {
        return Err(Usage("--count must be at least 1".into()).into());
    }
    let loaded = files::load_model(&ModelFiles::new(&env.input(&args.model)))?;
    let StoredModel::Bilinear(space) = &loaded.model else {
        return Err(kgebm::Error::Config("sampling needs a bilinear model".into()).into());
    };
    let cfg = SamplerConfig {
        steps_per_chain: args.steps,
        chains_per_batch_triple: 1,
        positions: args.positions.parse::<PositionSet>()?,
        seed: args.seed,
    };
    cfg.validate(space.num_entities(), space.num_relations())?;

    let mut rng = stream(args.seed, Stream::Sampler);
    let starts: Vec<Triple> = match &args.start {
        Some(path) => {
            let path = env.input(path);
            let (text, _) = files::read_text(&path)?;
            let named = parse_triples(&text).with_context(|| format!("in {}", path.display()))?;
            let seeds = named
                .iter()
                .map(|t| loaded.vocab.encode_triple(t))
                .collect::<kgebm::Result<Vec<_>>>()
                .with_context(|| format!("in {}", path.display()))?;
            if seeds.is_empty() {
                return Err(kgebm::Error::Invalid(format!("{} holds no triples", path.display())).into());
            }
            (0..args.count).map(|i| seeds[i % seeds.len()]).collect()
        }
        None => (0..args.count)
            .map(|_| {
                Triple::new(
                    rng.random_range(0..space.num_entities()),
                    rng.random_range(0..space.num_relations()),
                    rng.random_range(0..space.num_entities()),
                )
            })
            .collect(),
    };
    let set = generate_samples(space, &starts, &cfg, &mut rng, env.parallel)?;
    let text = format_triples(&loaded.vocab, &set.samples)?;
    match &args.out {
        Some(path) => files::write_atomic(path, text.as_bytes())?,
        None => print!("{text}"),
    }
    eprintln!("acceptance_rate\t{}", set.acceptance_rate());
    Ok(())
}
