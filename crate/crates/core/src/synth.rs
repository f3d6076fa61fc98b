//! Synthetic industrial-automation graph with labeled test events.
//!
//! The baseline mimics a small plant: developer hosts talk to the historian,
//! the app repository and the internet; edge computers pull apps from the
//! repository, host them, and read process data from the PLC; apps read PLC
//! variables. Every local device resolves names and syncs time against local
//! DNS and NTP servers, which internet hosts never do. Routine activity
//! repeats many times, internet browsing less often, and a few
//! developer-to-edge SSH maintenance sessions occur once or twice.
//!
//! Events come from fixed templates, one severity class each:
//!
//! - observed: a baseline triple;
//! - expected: behavior seen for a sibling device of the same role, or a
//!   developer host moving a different data volume to a local server it
//!   already uses;
//! - unexpected: a new instance of the rare maintenance pattern;
//! - suspicious: a local device starting a local interaction its role never
//!   performs, e.g. an edge computer talking to the historian;
//! - highly suspicious: an edge computer reaching the internet, or SSH
//!   started by an edge computer.

use std::collections::{BTreeSet, HashSet};

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng as _;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{LabeledEvent, SeverityClass, Triple, TripleStore, Vocabulary};
use crate::rng::{stream, Rng, Stream};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthParams {
    pub dev_hosts: usize,
    pub edge_computers: usize,
    pub apps: usize,
    pub internet_hosts: usize,
    pub plc_variables: usize,
    /// Mean repetitions of a routine activity triple.
    pub routine_rate: f64,
    /// Mean repetitions of an internet-browsing triple.
    pub browsing_rate: f64,
    /// Chance that a developer host visits an internet host owned by a sibling.
    pub shared_browsing: f64,
    /// Chance that an app reads a given PLC variable.
    pub app_reads: f64,
    /// Rare developer-to-edge SSH sessions in the baseline.
    pub maintenance_sessions: usize,
    pub observed: usize,
    pub expected: usize,
    pub unexpected: usize,
    pub suspicious: usize,
    pub highly_suspicious: usize,
}

impl Default for SynthParams {
    fn default() -> Self {
        Self {
            dev_hosts: 3,
            edge_computers: 3,
            apps: 5,
            internet_hosts: 40,
            plc_variables: 30,
            routine_rate: 20.0,
            browsing_rate: 4.0,
            shared_browsing: 0.4,
            app_reads: 0.3,
            maintenance_sessions: 2,
            observed: 60,
            expected: 60,
            unexpected: 15,
            suspicious: 30,
            highly_suspicious: 60,
        }
    }
}

impl SynthParams {
    /// Roughly 37k baseline triples over about 4.3k entities.
    pub fn plant_scale() -> Self {
        Self {
            internet_hosts: 4200,
            plc_variables: 133,
            shared_browsing: 0.1,
            ..Self::default()
        }
    }

    pub fn count(&self, class: SeverityClass) -> usize {
        match class {
            SeverityClass::HighlySuspicious => self.highly_suspicious,
            SeverityClass::Suspicious => self.suspicious,
            SeverityClass::Unexpected => self.unexpected,
            SeverityClass::Expected => self.expected,
            SeverityClass::Observed => self.observed,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.dev_hosts < 2 || self.edge_computers < 2 {
            return Err(Error::Config("need at least 2 developer hosts and 2 edge computers".into()));
        }
        if self.apps == 0 || self.internet_hosts == 0 || self.plc_variables == 0 {
            return Err(Error::Config("apps, internet hosts and PLC variables must be at least 1".into()));
        }
        for (name, v) in [("routine rate", self.routine_rate), ("browsing rate", self.browsing_rate)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::Config(format!("{name} must be finite and >= 0")));
            }
        }
        for (name, v) in [("shared browsing", self.shared_browsing), ("app reads", self.app_reads)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Config(format!("{name} must be a probability")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthGraph {
    pub vocab: Vocabulary,
    /// Baseline activity with repetitions.
    pub baseline: TripleStore,
    pub events: Vec<LabeledEvent>,
}

const HTTPS: [&str; 3] = ["https_small", "https_medium", "https_large"];
const SSH: [&str; 2] = ["ssh_small", "ssh_medium"];

struct Plant {
    vocab: Vocabulary,
    dev: Vec<usize>,
    edge: Vec<usize>,
    app: Vec<usize>,
    inet: Vec<usize>,
    var: Vec<usize>,
    historian: usize,
    repo: usize,
    plc: usize,
    dns: usize,
    ntp: usize,
}

impl Plant {
    fn new(p: &SynthParams) -> Self {
        let mut vocab = Vocabulary::new();
        let many = |prefix: &str, n: usize, vocab: &mut Vocabulary| -> Vec<usize> {
            (1..=n).map(|i| vocab.add_entity(&format!("{prefix}_{i}"))).collect()
        };
        let dev = many("dev_host", p.dev_hosts, &mut vocab);
        let edge = many("edge", p.edge_computers, &mut vocab);
        let app = many("app", p.apps, &mut vocab);
        let historian = vocab.add_entity("historian");
        let repo = vocab.add_entity("app_repository");
        let plc = vocab.add_entity("plc");
        let dns = vocab.add_entity("dns_server");
        let ntp = vocab.add_entity("ntp_server");
        let var = many("plc_var", p.plc_variables, &mut vocab);
        let inet = many("internet", p.internet_hosts, &mut vocab);
        for r in HTTPS.iter().chain(&SSH).chain(&["opcua", "hosts_app", "reads_variable", "provides_variable", "dns_query", "ntp_sync"]) {
            vocab.add_relation(r);
        }
        Self {
            vocab,
            dev,
            edge,
            app,
            inet,
            var,
            historian,
            repo,
            plc,
            dns,
            ntp,
        }
    }

    fn rel(&self, name: &str) -> usize {
        self.vocab.relation(name).expect("relation registered in Plant::new")
    }
}

/// Unique baseline facts with their mean repetition counts.
fn baseline_facts(plant: &Plant, p: &SynthParams, rng: &mut Rng) -> (Vec<(Triple, f64)>, Vec<Triple>) {
    let mut routine = Vec::new();
    let mut browsing = Vec::new();
    let t = |s, r: &str, o| Triple::new(s, plant.rel(r), o);
    for &d in &plant.dev {
        let small = rng.random_bool(0.6);
        let medium = !small || rng.random_bool(0.6);
        if small {
            routine.push(t(d, "https_small", plant.historian));
        }
        if medium {
            routine.push(t(d, "https_medium", plant.historian));
        }
        routine.push(t(d, "https_medium", plant.repo));
        routine.push(t(d, "ssh_small", plant.repo));
        if rng.random_bool(0.5) {
            routine.push(t(d, "https_large", plant.repo));
        }
        if rng.random_bool(0.5) {
            routine.push(t(d, "ssh_medium", plant.repo));
        }
    }
    for &host in &plant.inet {
        let owner = *plant.dev.choose(rng).expect("at least two developer hosts");
        for &d in &plant.dev {
            if d == owner || rng.random_bool(p.shared_browsing) {
                let bucket = HTTPS[rng.random_range(0..2)];
                browsing.push(t(d, bucket, host));
            }
        }
    }
    for &e in &plant.edge {
        routine.push(t(e, "https_large", plant.repo));
        routine.push(t(e, "opcua", plant.plc));
    }
    routine.push(t(plant.historian, "opcua", plant.plc));
    for &a in &plant.app {
        let home = *plant.edge.choose(rng).expect("at least two edge computers");
        routine.push(t(home, "hosts_app", a));
        for &e in &plant.edge {
            if e != home && rng.random_bool(0.4) {
                routine.push(t(e, "hosts_app", a));
            }
        }
        let mut reads: Vec<usize> = plant.var.iter().copied().filter(|_| rng.random_bool(p.app_reads)).collect();
        if reads.is_empty() {
            reads.push(*plant.var.choose(rng).expect("at least one variable"));
        }
        routine.extend(reads.into_iter().map(|v| t(a, "reads_variable", v)));
    }
    for &v in &plant.var {
        routine.push(t(plant.plc, "provides_variable", v));
    }
    let local = plant.dev.iter().chain(&plant.edge).chain([&plant.historian, &plant.repo, &plant.plc]);
    for &host in local {
        routine.push(t(host, "dns_query", plant.dns));
        routine.push(t(host, "ntp_sync", plant.ntp));
    }
    let mut maintenance = Vec::new();
    let mut pairs: Vec<(usize, usize)> = plant.dev.iter().flat_map(|&d| plant.edge.iter().map(move |&e| (d, e))).collect();
    pairs.shuffle(rng);
    for &(d, e) in pairs.iter().take(p.maintenance_sessions) {
        maintenance.push(t(d, SSH[rng.random_range(0..SSH.len())], e));
    }
    let facts = routine
        .into_iter()
        .map(|x| (x, p.routine_rate))
        .chain(browsing.into_iter().map(|x| (x, p.browsing_rate)))
        .collect();
    (facts, maintenance)
}

/// Occurrences of a fact: one plus a Poisson draw with the given mean.
fn repetitions(rng: &mut Rng, mean: f64) -> usize {
    if mean <= 0.0 {
        return 1;
    }
    let draw: f64 = Poisson::new(mean).expect("positive finite mean").sample(rng);
    1 + draw as usize
}

fn candidates(plant: &Plant, class: SeverityClass, known: &HashSet<Triple>, unique: &[Triple]) -> Vec<Triple> {
    let t = |s, r: &str, o| Triple::new(s, plant.rel(r), o);
    let mut out = BTreeSet::new();
    match class {
        SeverityClass::Observed => out.extend(unique.iter().copied()),
        SeverityClass::Expected => {
            let network: HashSet<usize> = HTTPS.iter().chain(&SSH).map(|r| plant.rel(r)).collect();
            for x in unique {
                if plant.dev.contains(&x.s) && network.contains(&x.p) && !plant.edge.contains(&x.o) {
                    out.extend(plant.dev.iter().map(|&d| Triple::new(d, x.p, x.o)));
                }
                if plant.dev.contains(&x.s) && (x.o == plant.historian || x.o == plant.repo) {
                    for protocol in [&HTTPS[..], &SSH[..]] {
                        let rels: Vec<usize> = protocol.iter().map(|r| plant.rel(r)).collect();
                        if rels.contains(&x.p) {
                            out.extend(rels.iter().map(|&r| Triple::new(x.s, r, x.o)));
                        }
                    }
                }
                if x.p == plant.rel("hosts_app") {
                    out.extend(plant.edge.iter().map(|&e| Triple::new(e, x.p, x.o)));
                }
            }
        }
        SeverityClass::Unexpected => {
            for &d in &plant.dev {
                for &e in &plant.edge {
                    out.extend(SSH.iter().map(|r| t(d, r, e)));
                }
            }
        }
        SeverityClass::Suspicious => {
            for &e in &plant.edge {
                out.extend(HTTPS[..2].iter().map(|r| t(e, r, plant.historian)));
                for &d in &plant.dev {
                    out.extend(HTTPS.iter().map(|r| t(e, r, d)));
                }
                out.insert(t(e, "ssh_small", plant.repo));
            }
            for &d in &plant.dev {
                out.insert(t(d, "opcua", plant.plc));
            }
        }
        SeverityClass::HighlySuspicious => {
            for &e in &plant.edge {
                for &h in &plant.inet {
                    out.extend(HTTPS[..2].iter().map(|r| t(e, r, h)));
                }
                for &other in plant.edge.iter().filter(|&&o| o != e) {
                    out.extend(SSH.iter().map(|r| t(e, r, other)));
                }
                out.extend(SSH.iter().map(|r| t(e, r, plant.plc)));
            }
        }
    }
    if class != SeverityClass::Observed {
        out.retain(|x| !known.contains(x));
    }
    out.into_iter().collect()
}

/// Baseline activity plus labeled events; identical seeds give identical output.
pub fn synth_industrial_graph(params: &SynthParams, seed: u64) -> Result<SynthGraph> {
    params.validate()?;
    let mut rng = stream(seed, Stream::Synth);
    let plant = Plant::new(params);
    let (facts, maintenance) = baseline_facts(&plant, params, &mut rng);
    let mut baseline = Vec::new();
    for &(fact, mean) in &facts {
        let n = repetitions(&mut rng, mean);
        baseline.extend(std::iter::repeat_n(fact, n));
    }
    for &m in &maintenance {
        let n = rng.random_range(1..=2);
        baseline.extend(std::iter::repeat_n(m, n));
    }
    baseline.shuffle(&mut rng);
    let baseline: TripleStore = baseline.into_iter().collect();
    let unique = baseline.unique();
    let known: HashSet<Triple> = unique.iter().copied().collect();

    let mut events = Vec::new();
    for class in SeverityClass::ALL {
        let mut pool = candidates(&plant, class, &known, &unique);
        let wanted = params.count(class);
        if pool.len() < wanted {
            return Err(Error::Config(format!(
                "only {} distinct {} events available, {wanted} requested",
                pool.len(),
                class.as_str()
            )));
        }
        pool.shuffle(&mut rng);
        events.extend(pool.into_iter().take(wanted).map(|triple| LabeledEvent { triple, label: class }));
    }
    events.shuffle(&mut rng);
    Ok(SynthGraph {
        vocab: plant.vocab,
        baseline,
        events,
    })
}
