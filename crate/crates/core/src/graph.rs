//! Triples, vocabularies and triple stores.
//!
//! The canonical on-disk format is UTF-8 TSV, one `subject<TAB>predicate<TAB>object`
//! statement per line. Lines starting with `#` and blank lines are ignored;
//! CRLF line endings are accepted. Labeled event files add a fourth column
//! holding a [`SeverityClass`] name.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

/// Integer-encoded `(subject, predicate, object)` statement.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Triple {
    pub s: usize,
    pub p: usize,
    pub o: usize,
}

impl Triple {
    pub const fn new(s: usize, p: usize, o: usize) -> Self {
        Self { s, p, o }
    }

    pub fn involves(&self, entity: usize) -> bool {
        self.s == entity || self.o == entity
    }
}

impl fmt::Display for Triple {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {})", self.s, self.p, self.o)
    }
}

/// A statement before encoding, as read from a file.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct NamedTriple {
    pub s: String,
    pub p: String,
    pub o: String,
}

impl NamedTriple {
    pub fn new(s: impl Into<String>, p: impl Into<String>, o: impl Into<String>) -> Self {
        Self {
            s: s.into(),
            p: p.into(),
            o: o.into(),
        }
    }
}

/// Dense 0-based indices for entity and relation names.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Vocabulary {
    entity_names: Vec<String>,
    relation_names: Vec<String>,
    entity_index: HashMap<String, usize>,
    relation_index: HashMap<String, usize>,
}

impl Vocabulary {
    pub fn new() -> Self {
        Self::default()
    }

    /// Rebuilds a vocabulary from ordered name lists. Duplicate names are rejected.
    pub fn from_names(entities: Vec<String>, relations: Vec<String>) -> Result<Self> {
        let mut vocab = Self::new();
        for name in entities {
            if vocab.entity_index.contains_key(&name) {
                return Err(Error::Invalid(format!("duplicate entity name `{name}`")));
            }
            vocab.add_entity(&name);
        }
        for name in relations {
            if vocab.relation_index.contains_key(&name) {
                return Err(Error::Invalid(format!("duplicate relation name `{name}`")));
            }
            vocab.add_relation(&name);
        }
        Ok(vocab)
    }

    /// Registers an entity if unseen and returns its index.
    pub fn add_entity(&mut self, name: &str) -> usize {
        if let Some(&i) = self.entity_index.get(name) {
            return i;
        }
        let i = self.entity_names.len();
        self.entity_names.push(name.to_owned());
        self.entity_index.insert(name.to_owned(), i);
        i
    }

    pub fn add_relation(&mut self, name: &str) -> usize {
        if let Some(&i) = self.relation_index.get(name) {
            return i;
        }
        let i = self.relation_names.len();
        self.relation_names.push(name.to_owned());
        self.relation_index.insert(name.to_owned(), i);
        i
    }

    pub fn num_entities(&self) -> usize {
        self.entity_names.len()
    }

    pub fn num_relations(&self) -> usize {
        self.relation_names.len()
    }

    pub fn entity_names(&self) -> &[String] {
        &self.entity_names
    }

    pub fn relation_names(&self) -> &[String] {
        &self.relation_names
    }

    pub fn entity(&self, name: &str) -> Result<usize> {
        self.entity_index
            .get(name)
            .copied()
            .ok_or_else(|| Error::UnknownSymbol(name.to_owned()))
    }

    pub fn relation(&self, name: &str) -> Result<usize> {
        self.relation_index
            .get(name)
            .copied()
            .ok_or_else(|| Error::UnknownSymbol(name.to_owned()))
    }

    pub fn entity_name(&self, index: usize) -> Result<&str> {
        self.entity_names
            .get(index)
            .map(String::as_str)
            .ok_or(Error::IndexOutOfRange {
                what: "entity",
                index,
                size: self.entity_names.len(),
            })
    }

    pub fn relation_name(&self, index: usize) -> Result<&str> {
        self.relation_names
            .get(index)
            .map(String::as_str)
            .ok_or(Error::IndexOutOfRange {
                what: "relation",
                index,
                size: self.relation_names.len(),
            })
    }

    pub fn encode_triple(&self, t: &NamedTriple) -> Result<Triple> {
        Ok(Triple::new(
            self.entity(&t.s)?,
            self.relation(&t.p)?,
            self.entity(&t.o)?,
        ))
    }

    pub fn decode(&self, t: Triple) -> Result<NamedTriple> {
        Ok(NamedTriple::new(
            self.entity_name(t.s)?,
            self.relation_name(t.p)?,
            self.entity_name(t.o)?,
        ))
    }

    pub fn contains(&self, t: Triple) -> bool {
        t.s < self.num_entities() && t.o < self.num_entities() && t.p < self.num_relations()
    }

    /// Serializes as `E<TAB>name` / `R<TAB>name` lines, in index order.
    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for name in &self.entity_names {
            out.push_str("E\t");
            out.push_str(name);
            out.push('\n');
        }
        for name in &self.relation_names {
            out.push_str("R\t");
            out.push_str(name);
            out.push('\n');
        }
        out
    }

    pub fn from_tsv(text: &str) -> Result<Self> {
        let mut entities = Vec::new();
        let mut relations = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.strip_suffix('\r').unwrap_or(line);
            if line.is_empty() {
                continue;
            }
            match line.split_once('\t') {
                Some(("E", name)) => entities.push(name.to_owned()),
                Some(("R", name)) => relations.push(name.to_owned()),
                _ => {
                    return Err(Error::Parse {
                        line: i + 1,
                        message: "expected `E<TAB>name` or `R<TAB>name`".into(),
                    })
                }
            }
        }
        Self::from_names(entities, relations)
    }
}

/// Ordered list of triples plus a deduplicated membership set.
#[derive(Debug, Clone, Default)]
pub struct TripleStore {
    triples: Vec<Triple>,
    membership: HashSet<Triple>,
}

/// Two stores are equal when their triple lists are.
impl PartialEq for TripleStore {
    fn eq(&self, other: &Self) -> bool {
        self.triples == other.triples
    }
}

impl Eq for TripleStore {}

impl TripleStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, t: Triple) {
        self.triples.push(t);
        self.membership.insert(t);
    }

    pub fn triples(&self) -> &[Triple] {
        &self.triples
    }

    pub fn len(&self) -> usize {
        self.triples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triples.is_empty()
    }

    pub fn contains(&self, t: &Triple) -> bool {
        self.membership.contains(t)
    }

    pub fn membership(&self) -> &HashSet<Triple> {
        &self.membership
    }

    pub fn unique_len(&self) -> usize {
        self.membership.len()
    }

    /// Distinct triples in first-appearance order.
    pub fn unique(&self) -> Vec<Triple> {
        let mut seen = HashSet::with_capacity(self.membership.len());
        self.triples
            .iter()
            .copied()
            .filter(|t| seen.insert(*t))
            .collect()
    }

    /// Largest entity and relation index referenced, plus one.
    pub fn extent(&self) -> (usize, usize) {
        self.triples.iter().fold((0, 0), |(e, r), t| {
            (e.max(t.s + 1).max(t.o + 1), r.max(t.p + 1))
        })
    }
}

impl FromIterator<Triple> for TripleStore {
    fn from_iter<I: IntoIterator<Item = Triple>>(iter: I) -> Self {
        let mut store = TripleStore::new();
        for t in iter {
            store.push(t);
        }
        store
    }
}

/// Ground-truth severity of a system event, from most to least severe.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SeverityClass {
    HighlySuspicious,
    Suspicious,
    Unexpected,
    Expected,
    Observed,
}

impl SeverityClass {
    /// All classes, most severe first.
    pub const ALL: [SeverityClass; 5] = [
        SeverityClass::HighlySuspicious,
        SeverityClass::Suspicious,
        SeverityClass::Unexpected,
        SeverityClass::Expected,
        SeverityClass::Observed,
    ];

    /// Higher is more severe.
    pub fn rank(self) -> u8 {
        match self {
            SeverityClass::HighlySuspicious => 4,
            SeverityClass::Suspicious => 3,
            SeverityClass::Unexpected => 2,
            SeverityClass::Expected => 1,
            SeverityClass::Observed => 0,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            SeverityClass::HighlySuspicious => "highly_suspicious",
            SeverityClass::Suspicious => "suspicious",
            SeverityClass::Unexpected => "unexpected",
            SeverityClass::Expected => "expected",
            SeverityClass::Observed => "observed",
        }
    }
}

impl PartialOrd for SeverityClass {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for SeverityClass {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.rank().cmp(&other.rank())
    }
}

impl fmt::Display for SeverityClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SeverityClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SeverityClass::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| Error::Invalid(format!("unknown severity label `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LabeledEvent {
    pub triple: Triple,
    pub label: SeverityClass,
}

/// An event line before encoding. The label column is optional.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EventRecord {
    pub line: usize,
    pub triple: NamedTriple,
    pub label: Option<SeverityClass>,
}

fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines().enumerate().filter_map(|(i, line)| {
        let line = line.strip_suffix('\r').unwrap_or(line);
        if line.trim().is_empty() || line.starts_with('#') {
            None
        } else {
            Some((i + 1, line))
        }
    })
}

/// Parses tab-separated triples, skipping blank and `#` lines.
pub fn parse_triples(text: &str) -> Result<Vec<NamedTriple>> {
    content_lines(text)
        .map(|(line, content)| {
            let fields: Vec<&str> = content.split('\t').collect();
            match fields.as_slice() {
                [s, p, o] => Ok(NamedTriple::new(*s, *p, *o)),
                _ => Err(Error::Parse {
                    line,
                    message: format!("expected 3 tab-separated fields, found {}", fields.len()),
                }),
            }
        })
        .collect()
}

/// Parses event lines with an optional fourth severity-label column.
pub fn parse_events(text: &str) -> Result<Vec<EventRecord>> {
    content_lines(text)
        .map(|(line, content)| {
            let fields: Vec<&str> = content.split('\t').collect();
            let (triple, label) = match fields.as_slice() {
                [s, p, o] => (NamedTriple::new(*s, *p, *o), None),
                [s, p, o, l] => {
                    let label = l.parse().map_err(|_| Error::Parse {
                        line,
                        message: format!("unknown severity label `{l}`"),
                    })?;
                    (NamedTriple::new(*s, *p, *o), Some(label))
                }
                _ => {
                    return Err(Error::Parse {
                        line,
                        message: format!("expected 3 or 4 tab-separated fields, found {}", fields.len()),
                    })
                }
            };
            Ok(EventRecord {
                line,
                triple,
                label,
            })
        })
        .collect()
}

pub fn format_triples(vocab: &Vocabulary, triples: &[Triple]) -> Result<String> {
    let mut out = String::new();
    for &t in triples {
        let n = vocab.decode(t)?;
        out.push_str(&format!("{}\t{}\t{}\n", n.s, n.p, n.o));
    }
    Ok(out)
}

pub fn format_events(vocab: &Vocabulary, events: &[LabeledEvent]) -> Result<String> {
    let mut out = String::new();
    for e in events {
        let n = vocab.decode(e.triple)?;
        out.push_str(&format!("{}\t{}\t{}\t{}\n", n.s, n.p, n.o, e.label));
    }
    Ok(out)
}

/// Collects entities (subject and object positions) and relations in first-appearance order.
pub fn build_vocabulary<'a>(triples: impl IntoIterator<Item = &'a NamedTriple>) -> Vocabulary {
    let mut vocab = Vocabulary::new();
    for t in triples {
        vocab.add_entity(&t.s);
        vocab.add_relation(&t.p);
        vocab.add_entity(&t.o);
    }
    vocab
}

pub fn encode(vocab: &Vocabulary, triples: &[NamedTriple]) -> Result<TripleStore> {
    triples.iter().map(|t| vocab.encode_triple(t)).collect()
}

/// Random disjoint partition of the deduplicated triple set.
///
/// The test side receives `round(test_fraction * n)` triples.
pub fn split(store: &TripleStore, test_fraction: f64, seed: u64) -> Result<(TripleStore, TripleStore)> {
    if store.is_empty() {
        return Err(Error::Invalid("cannot split an empty triple store".into()));
    }
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::Invalid(format!(
            "test fraction must lie in (0, 1), got {test_fraction}"
        )));
    }
    let mut unique = store.unique();
    let mut rng = rng::stream(seed, rng::Stream::Split);
    unique.shuffle(&mut rng);
    let n_test = (test_fraction * unique.len() as f64).round() as usize;
    let test = unique[..n_test].iter().copied().collect();
    let train = unique[n_test..].iter().copied().collect();
    Ok((train, test))
}

/// Shuffled permutation of the triple list cut into consecutive batches.
pub fn iterate_batches(store: &TripleStore, batch_size: usize, seed: u64) -> Result<Vec<Vec<Triple>>> {
    shuffled_batches(store.triples(), batch_size, seed)
}

pub(crate) fn shuffled_batches(triples: &[Triple], batch_size: usize, seed: u64) -> Result<Vec<Vec<Triple>>> {
    if batch_size == 0 {
        return Err(Error::Config("batch size must be at least 1".into()));
    }
    let mut order = triples.to_vec();
    let mut rng = rng::stream(seed, rng::Stream::Batching);
    order.shuffle(&mut rng);
    Ok(order.chunks(batch_size).map(<[Triple]>::to_vec).collect())
}
