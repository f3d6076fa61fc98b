use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::Args;
use kgebm::config;
use kgebm::eval::{evaluate, EpochRecord, FilterSet, MetricsReport, DEFAULT_HITS};
use kgebm::graph::{build_vocabulary, encode, parse_triples, NamedTriple};
use kgebm::{ModelKind, Preset, StoredModel, TrainConfig, Trainer, TripleStore, Vocabulary};

use crate::files::{self, ModelFiles};
use crate::manifest::{DatasetRecord, RunManifest, MANIFEST_FORMAT};
use crate::{ConfigFlags, Env, Usage};

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Training triples, tab-separated.
    #[arg(long)]
    pub train: PathBuf,
    /// Validation triples; enables per-epoch MRR.
    #[arg(long)]
    pub valid: Option<PathBuf>,
    /// Output prefix.
    #[arg(long)]
    pub out: PathBuf,
    /// link-prediction, anomaly or umls.
    #[arg(long, default_value = "link-prediction")]
    pub preset: String,
    /// `key = value` file; flags win over its entries.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Validation MRR every this many epochs (the last epoch is always evaluated).
    #[arg(long, default_value_t = 1)]
    pub eval_every: usize,
    #[command(flatten)]
    pub flags: ConfigFlags,
}

#[derive(Debug, Args)]
pub struct ReplayArgs {
    pub manifest: PathBuf,
    /// Also write the retrained model under this prefix.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

struct Dataset {
    record: DatasetRecord,
    triples: Vec<NamedTriple>,
}

fn load_dataset(role: &str, path: &Path) -> anyhow::Result<Dataset> {
    let (text, sha256) = files::read_text(path)?;
    let triples = parse_triples(&text).map_err(|e| anyhow::Error::from(e).context(format!("in {}", path.display())))?;
    Ok(Dataset {
        record: DatasetRecord {
            role: role.to_string(),
            path: files::absolute(path),
            sha256,
            triples: triples.len(),
        },
        triples,
    })
}

struct RunOutput {
    model: StoredModel,
    vocab: Vocabulary,
    epochs: Vec<EpochRecord>,
    metrics: BTreeMap<String, f64>,
}

/// Trains serially; validation ranking may use the thread pool.
fn execute(env: &Env, cfg: &TrainConfig, train: &Dataset, valid: Option<&Dataset>, eval_every: usize) -> anyhow::Result<RunOutput> {
    let vocab = build_vocabulary(train.triples.iter().chain(valid.iter().flat_map(|v| &v.triples)));
    let train_store = encode(&vocab, &train.triples)?;
    let valid_store = valid.map(|v| encode(&vocab, &v.triples)).transpose()?;
    let filter = FilterSet::from_stores([Some(&train_store), valid_store.as_ref()].into_iter().flatten());
    let validate = |model: &StoredModel, store: &TripleStore| evaluate(model, store.triples(), &filter, &DEFAULT_HITS, env.parallel);

    let mut trainer = Trainer::new(cfg.clone(), vocab.num_entities(), vocab.num_relations())?;
    let mut epochs = Vec::with_capacity(cfg.epochs);
    println!("epoch\tloss\tacceptance\tvalid_mrr");
    while trainer.epoch() < cfg.epochs {
        let stats = trainer.run_epoch(train_store.triples())?;
        let done = trainer.epoch();
        let mrr = match &valid_store {
            Some(store) if done % eval_every == 0 || done == cfg.epochs => Some(validate(trainer.model(), store)?.mrr),
            _ => None,
        };
        let show = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |x| format!("{x:.6}"));
        println!("{done}\t{:.6}\t{}\t{}", stats.loss, show(stats.acceptance_rate), show(mrr));
        epochs.push(EpochRecord {
            epoch: done,
            loss: stats.loss,
            acceptance_rate: stats.acceptance_rate,
            mrr,
        });
    }
    let model = trainer.into_model();
    let metrics = match &valid_store {
        Some(store) => MetricsReport::from_link_metrics(&validate(&model, store)?).metrics,
        None => BTreeMap::new(),
    };
    Ok(RunOutput {
        model,
        vocab,
        epochs,
        metrics,
    })
}

fn write_bundle(out: &Path, run: &RunOutput, mut manifest: RunManifest) -> anyhow::Result<()> {
    let files = ModelFiles::new(out);
    let bytes = run.model.to_bytes();
    files::write_atomic(&files.embeddings, &bytes)?;
    files::write_atomic(&files.vocab, run.vocab.to_tsv().as_bytes())?;
    manifest.model_path = files::absolute(&files.embeddings);
    manifest.vocab_path = files::absolute(&files.vocab);
    files::write_atomic(&files.manifest, manifest.to_json()?.as_bytes())?;
    println!("wrote {}", files.embeddings.display());
    Ok(())
}

pub fn cmd_train(env: &Env, args: &TrainArgs) -> anyhow::Result<()> {
    if args.eval_every == 0 {
        return Err(Usage("--eval-every must be at least 1".into()).into());
    }
    let preset: Preset = args.preset.parse()?;
    let file_entries = match &args.config {
        Some(path) => {
            let (text, _) = files::read_text(&env.input(path))?;
            config::parse_entries(&text)?.into_iter().map(|(k, v, _)| (k, v)).collect()
        }
        None => Vec::new(),
    };
    let cfg = config::resolve(preset, ModelKind::EnM, &file_entries, &args.flags.overrides())?;
    let train = load_dataset("train", &env.input(&args.train))?;
    let valid = args.valid.as_ref().map(|p| load_dataset("valid", &env.input(p))).transpose()?;

    let started = Instant::now();
    let run = execute(env, &cfg, &train, valid.as_ref(), args.eval_every)?;
    let manifest = RunManifest {
        format: MANIFEST_FORMAT,
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        preset,
        config_text: config::to_config_string(&cfg),
        seed: cfg.seed,
        config: cfg,
        datasets: std::iter::once(train.record).chain(valid.map(|v| v.record)).collect(),
        model_path: PathBuf::new(),
        model_sha256: files::sha256_hex(&run.model.to_bytes()),
        vocab_path: PathBuf::new(),
        eval_every: args.eval_every,
        epochs: run.epochs.clone(),
        metrics: run.metrics.clone(),
        wall_clock_seconds: started.elapsed().as_secs_f64(),
    };
    for (k, v) in &run.metrics {
        println!("{k}\t{v}");
    }
    write_bundle(&args.out, &run, manifest)
}

pub fn cmd_replay(env: &Env, args: &ReplayArgs) -> anyhow::Result<()> {
    let (text, _) = files::read_text(&env.input(&args.manifest))?;
    let recorded = RunManifest::from_json(&text)?;
    let mut train = None;
    let mut valid = None;
    for record in &recorded.datasets {
        let data = load_dataset(&record.role, &record.path)?;
        if data.record.sha256 != record.sha256 {
            return Err(kgebm::Error::Invalid(format!("{} changed since the run was recorded", record.path.display())).into());
        }
        match record.role.as_str() {
            "train" => train = Some(data),
            "valid" => valid = Some(data),
            other => return Err(kgebm::Error::Format(format!("unknown dataset role `{other}`")).into()),
        }
    }
    let train = train.ok_or_else(|| kgebm::Error::Format("manifest lists no training data".into()))?;
    let serial = Env {
        data_dir: None,
        parallel: false,
    };
    let started = Instant::now();
    let run = execute(&serial, &recorded.config, &train, valid.as_ref(), recorded.eval_every)?;
    let sha = files::sha256_hex(&run.model.to_bytes());
    let mut mismatches = Vec::new();
    if run.epochs != recorded.epochs {
        mismatches.push("per-epoch series");
    }
    if run.metrics != recorded.metrics {
        mismatches.push("final metrics");
    }
    if sha != recorded.model_sha256 {
        mismatches.push("model checksum");
    }
    if let Some(out) = &args.out {
        let manifest = RunManifest {
            model_sha256: sha,
            wall_clock_seconds: started.elapsed().as_secs_f64(),
            ..recorded.clone()
        };
        write_bundle(out, &run, manifest)?;
    }
    if !mismatches.is_empty() {
        return Err(kgebm::Error::Invalid(format!("replay differs from the manifest in: {}", mismatches.join(", "))).into());
    }
    println!("replay reproduces {} epochs and {} metrics", run.epochs.len(), run.metrics.len());
    Ok(())
}
