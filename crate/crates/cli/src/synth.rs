use std::path::PathBuf;

use anyhow::Context;
use clap::{Args, ValueEnum};
use kgebm::graph::{format_events, format_triples};
use kgebm::synth::{synth_industrial_graph, SynthParams};
use kgebm::SeverityClass;

use crate::files;

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Scale {
    /// A few hundred entities.
    Small,
    /// Tens of thousands of baseline triples.
    Plant,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Receives `baseline.tsv` and `events.tsv`.
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = Scale::Small)]
    pub scale: Scale,
    #[arg(long)]
    pub highly_suspicious: Option<usize>,
    #[arg(long)]
    pub suspicious: Option<usize>,
    #[arg(long)]
    pub unexpected: Option<usize>,
    #[arg(long)]
    pub expected: Option<usize>,
    #[arg(long)]
    pub observed: Option<usize>,
}

pub fn cmd_synth(args: &SynthArgs) -> anyhow::Result<()> {
    let mut params = match args.scale {
        Scale::Small => SynthParams::default(),
        Scale::Plant => SynthParams::plant_scale(),
    };
    let counts = [
        (&mut params.highly_suspicious, args.highly_suspicious),
        (&mut params.suspicious, args.suspicious),
        (&mut params.unexpected, args.unexpected),
        (&mut params.expected, args.expected),
        (&mut params.observed, args.observed),
    ];
    for (slot, value) in counts {
        if let Some(v) = value {
            *slot = v;
        }
    }
    let graph = synth_industrial_graph(&params, args.seed)?;
    std::fs::create_dir_all(&args.out_dir).with_context(|| format!("cannot create {}", args.out_dir.display()))?;
    let baseline = args.out_dir.join("baseline.tsv");
    let events = args.out_dir.join("events.tsv");
    files::write_atomic(&baseline, format_triples(&graph.vocab, graph.baseline.triples())?.as_bytes())?;
    files::write_atomic(&events, format_events(&graph.vocab, &graph.events)?.as_bytes())?;
    println!(
        "baseline\t{}\tentities\t{}\trelations\t{}",
        graph.baseline.len(),
        graph.vocab.num_entities(),
        graph.vocab.num_relations()
    );
    for class in SeverityClass::ALL {
        let n = graph.events.iter().filter(|e| e.label == class).count();
        println!("{class}\t{n}");
    }
    Ok(())
}
