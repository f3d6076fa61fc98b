use std::path::{Path, PathBuf};

use anyhow::Context;
use clap::Args;
use kgebm::anomaly::{alerts_tsv, class_means, encode_records, ordering_accuracy_of, rank_alerts, AnomalyScorer, Suspiciousness};
use kgebm::graph::parse_events;
use kgebm::{ModelKind, SeverityClass, Triple};
use rayon::prelude::*;
use serde::Serialize;

use crate::files::{self, LoadedModel, ModelFiles};
use crate::{Env, Usage};

#[derive(Debug, Args)]
pub struct ScoreArgs {
    /// Model prefix or `.kgeb` path. Repeat to average suspiciousness over several runs.
    #[arg(long, required = true)]
    pub model: Vec<PathBuf>,
    /// Events, `s<TAB>p<TAB>o` with an optional severity label column.
    #[arg(long)]
    pub events: PathBuf,
    /// Model kind; read from the manifest when omitted.
    #[arg(long)]
    pub kind: Option<String>,
    /// Alert file; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also write the alerts involving this entity to `<out stem>.<entity>.tsv`.
    #[arg(long)]
    pub entity: Option<String>,
    /// Drop events with unknown symbols instead of failing.
    #[arg(long)]
    pub skip_unknown: bool,
    /// Summary as JSON.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Serialize)]
struct ClassMean {
    class: SeverityClass,
    mean: f64,
    count: usize,
}

#[derive(Debug, Serialize)]
struct ScoreReport {
    model: ModelKind,
    runs: usize,
    events: usize,
    skipped: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    ordering_accuracy: Option<f64>,
    class_means: Vec<ClassMean>,
}

fn model_kind(arg: Option<&str>, loaded: &LoadedModel, path: &Path) -> anyhow::Result<ModelKind> {
    match (arg, &loaded.manifest) {
        (Some(k), _) => Ok(k.parse()?),
        (None, Some(m)) => Ok(m.config.model),
        (None, None) => Err(Usage(format!("{} has no manifest; pass --kind", path.display())).into()),
    }
}

/// `alerts.tsv` with entity `plc` becomes `alerts.plc.tsv`.
fn entity_path(out: &Path, entity: &str) -> PathBuf {
    let stem = out.file_stem().map_or_else(|| "alerts".into(), |s| s.to_string_lossy().into_owned());
    let ext = out.extension().map_or_else(|| "tsv".into(), |s| s.to_string_lossy().into_owned());
    out.with_file_name(format!("{stem}.{entity}.{ext}"))
}

pub fn cmd_score(env: &Env, args: &ScoreArgs) -> anyhow::Result<()> {
    let mut runs = Vec::with_capacity(args.model.len());
    for path in &args.model {
        let path = env.input(path);
        let loaded = files::load_model(&ModelFiles::new(&path))?;
        let kind = model_kind(args.kind.as_deref(), &loaded, &path)?;
        runs.push((loaded, kind));
    }
    let (first, kind) = &runs[0];
    let vocab = &first.vocab;
    for (other, other_kind) in &runs[1..] {
        if other.vocab != *vocab || other_kind != kind {
            return Err(Usage("averaged models must share kind and vocabulary".into()).into());
        }
    }

    let events_path = env.input(&args.events);
    let (text, _) = files::read_text(&events_path)?;
    let records = parse_events(&text).with_context(|| format!("in {}", events_path.display()))?;
    let (known, unknown) = encode_records(vocab, &records);
    for u in &unknown {
        eprintln!("line {}: unknown symbol(s): {}", u.line, u.names.join(", "));
    }
    if !unknown.is_empty() && !args.skip_unknown {
        return Err(kgebm::Error::Invalid(format!(
            "{} event(s) in {} use symbols outside the vocabulary",
            unknown.len(),
            events_path.display()
        ))
        .into());
    }

    let scorers = runs
        .iter()
        .map(|(l, k)| AnomalyScorer::new(&l.model, *k))
        .collect::<kgebm::Result<Vec<_>>>()?;
    let score_one = |&(triple, label): &(Triple, Option<SeverityClass>)| -> kgebm::Result<Suspiciousness> {
        let mut total = 0.0;
        for s in &scorers {
            total += s.suspiciousness(triple)?;
        }
        Ok(Suspiciousness {
            triple,
            value: total / scorers.len() as f64,
            label,
            model: *kind,
        })
    };
    let scored: Vec<Suspiciousness> = if env.parallel {
        known.par_iter().map(score_one).collect::<kgebm::Result<_>>()?
    } else {
        known.iter().map(score_one).collect::<kgebm::Result<_>>()?
    };

    let entity = args.entity.as_deref().map(|name| vocab.entity(name).map(|id| (name, id))).transpose()?;
    let ranked = rank_alerts(&scored, None);
    match &args.out {
        Some(out) => files::write_atomic(out, alerts_tsv(vocab, &ranked)?.as_bytes())?,
        None if entity.is_none() => print!("{}", alerts_tsv(vocab, &ranked)?),
        None => {}
    }
    if let Some((name, id)) = entity {
        let tsv = alerts_tsv(vocab, &rank_alerts(&scored, Some(id)))?;
        match &args.out {
            Some(out) => files::write_atomic(&entity_path(out, name), tsv.as_bytes())?,
            None => print!("{tsv}"),
        }
    }

    let labeled = scored.iter().filter(|s| s.label.is_some()).count();
    let distinct = SeverityClass::ALL
        .iter()
        .filter(|&&c| scored.iter().any(|s| s.label == Some(c)))
        .count();
    let report = ScoreReport {
        model: *kind,
        runs: runs.len(),
        events: scored.len(),
        skipped: unknown.len(),
        ordering_accuracy: (distinct >= 2).then(|| ordering_accuracy_of(&scored)).transpose()?,
        class_means: class_means(&scored)
            .into_iter()
            .map(|(class, mean, count)| ClassMean { class, mean, count })
            .collect(),
    };
    // Keep stdout parseable when alerts go there.
    let summary = |line: String| {
        if args.out.is_some() {
            println!("{line}");
        } else {
            eprintln!("{line}");
        }
    };
    summary(format!("events\t{}\tskipped\t{}\tlabeled\t{labeled}", report.events, report.skipped));
    if let Some(acc) = report.ordering_accuracy {
        summary(format!("ordering_accuracy\t{acc}"));
    }
    for m in &report.class_means {
        summary(format!("mean\t{}\t{}\t{}", m.class, m.mean, m.count));
    }
    if let Some(path) = &args.report {
        files::write_atomic(path, (serde_json::to_string_pretty(&report)? + "\n").as_bytes())?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn entity_file_sits_next_to_alerts() {
        assert_eq!(entity_path(Path::new("out/alerts.tsv"), "plc"), PathBuf::from("out/alerts.plc.tsv"));
        assert_eq!(entity_path(Path::new("alerts"), "edge_0"), PathBuf::from("alerts.edge_0.tsv"));
    }
}
