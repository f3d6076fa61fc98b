//! Suspiciousness of novel events and ranked alert lists.

use std::cmp::Ordering;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{EventRecord, LabeledEvent, SeverityClass, Triple, Vocabulary};
use crate::model::sigmoid;
use crate::persist::StoredModel;
use crate::trainer::ModelKind;

/// A trained model together with the rule turning its score into suspiciousness.
#[derive(Debug, Clone, Copy)]
pub struct AnomalyScorer<'a> {
    model: &'a StoredModel,
    kind: ModelKind,
}

impl<'a> AnomalyScorer<'a> {
    pub fn new(model: &'a StoredModel, kind: ModelKind) -> Result<Self> {
        let fits = match (model, kind.relation_kind()) {
            (StoredModel::Bilinear(s), Some(k)) => s.kind() == k,
            (StoredModel::TransE(_), None) => true,
            _ => false,
        };
        if !fits {
            return Err(Error::Config(format!("stored parameters cannot be read as a {kind} model")));
        }
        Ok(Self { model, kind })
    }

    pub fn kind(&self) -> ModelKind {
        self.kind
    }

    /// Energy models: `1 - σ(f)`; ReSE: `1 - f`; ReKL: `-f`; TransE: `‖e_s + r_p - e_o‖`.
    pub fn suspiciousness(&self, t: Triple) -> Result<f64> {
        if !self.model.contains(t) {
            return Err(Error::IndexOutOfRange {
                what: "event triple",
                index: t.s.max(t.p).max(t.o),
                size: self.model.num_entities(),
            });
        }
        Ok(match self.model {
            StoredModel::Bilinear(space) => {
                let f = space.score(t);
                match self.kind {
                    ModelKind::EnM | ModelKind::EnMd => 1.0 - sigmoid(f),
                    ModelKind::ReSE => 1.0 - f,
                    ModelKind::ReKL | ModelKind::TransE => -f,
                }
            }
            StoredModel::TransE(params) => params.score_transe(t),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Suspiciousness {
    pub triple: Triple,
    pub value: f64,
    pub label: Option<SeverityClass>,
    pub model: ModelKind,
}

pub fn score_events(scorer: &AnomalyScorer<'_>, events: &[LabeledEvent]) -> Result<Vec<Suspiciousness>> {
    events
        .iter()
        .map(|e| score_triple(scorer, e.triple, Some(e.label)))
        .collect()
}

pub fn score_triple(scorer: &AnomalyScorer<'_>, triple: Triple, label: Option<SeverityClass>) -> Result<Suspiciousness> {
    Ok(Suspiciousness {
        triple,
        value: scorer.suspiciousness(triple)?,
        label,
        model: scorer.kind(),
    })
}

/// An event line whose symbols are not in the training vocabulary.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UnknownEvent {
    pub line: usize,
    pub names: Vec<String>,
}

/// Encodes event records, collecting every record that mentions an unknown symbol.
pub fn encode_records(vocab: &Vocabulary, records: &[EventRecord]) -> (Vec<(Triple, Option<SeverityClass>)>, Vec<UnknownEvent>) {
    let mut known = Vec::with_capacity(records.len());
    let mut unknown = Vec::new();
    for r in records {
        let s = vocab.entity(&r.triple.s);
        let p = vocab.relation(&r.triple.p);
        let o = vocab.entity(&r.triple.o);
        match (s, p, o) {
            (Ok(s), Ok(p), Ok(o)) => known.push((Triple::new(s, p, o), r.label)),
            _ => {
                let mut names = Vec::new();
                if vocab.entity(&r.triple.s).is_err() {
                    names.push(r.triple.s.clone());
                }
                if vocab.relation(&r.triple.p).is_err() {
                    names.push(r.triple.p.clone());
                }
                if vocab.entity(&r.triple.o).is_err() && r.triple.o != r.triple.s {
                    names.push(r.triple.o.clone());
                }
                unknown.push(UnknownEvent { line: r.line, names });
            }
        }
    }
    (known, unknown)
}

/// Descending suspiciousness; equal values keep triple index order.
fn alert_order(a: &Suspiciousness, b: &Suspiciousness) -> Ordering {
    b.value.total_cmp(&a.value).then_with(|| a.triple.cmp(&b.triple))
}

/// Optionally keeps events involving `entity`, then sorts most suspicious first.
pub fn rank_alerts(scored: &[Suspiciousness], entity: Option<usize>) -> Vec<Suspiciousness> {
    let mut out: Vec<Suspiciousness> = scored
        .iter()
        .filter(|s| entity.is_none_or(|e| s.triple.involves(e)))
        .copied()
        .collect();
    out.sort_by(alert_order);
    out
}

/// Fraction of event pairs from different classes ordered correctly by
/// suspiciousness; ties count half.
pub fn severity_ordering_accuracy(scored: &[(f64, SeverityClass)]) -> Result<f64> {
    let mut class_counts = [0usize; 5];
    for &(_, c) in scored {
        class_counts[c.rank() as usize] += 1;
    }
    if class_counts.iter().filter(|&&c| c > 0).count() < 2 {
        return Err(Error::Invalid("ordering accuracy needs at least two severity classes".into()));
    }
    let mut sorted = scored.to_vec();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut below = [0u64; 5];
    let (mut correct, mut tied) = (0u64, 0u64);
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i;
        while j < sorted.len() && sorted[j].0.total_cmp(&sorted[i].0) == Ordering::Equal {
            j += 1;
        }
        let mut group = [0u64; 5];
        for &(_, c) in &sorted[i..j] {
            group[c.rank() as usize] += 1;
        }
        for r in 0..5 {
            for lower in 0..r {
                correct += group[r] * below[lower];
                tied += group[r] * group[lower];
            }
        }
        for r in 0..5 {
            below[r] += group[r];
        }
        i = j;
    }
    let n = scored.len() as u64;
    let same: u64 = class_counts.iter().map(|&c| (c as u64) * (c as u64)).sum();
    let pairs = (n * n - same) / 2;
    Ok((correct as f64 + 0.5 * tied as f64) / pairs as f64)
}

pub fn ordering_accuracy_of(scored: &[Suspiciousness]) -> Result<f64> {
    let labeled: Vec<(f64, SeverityClass)> = scored.iter().filter_map(|s| s.label.map(|l| (s.value, l))).collect();
    severity_ordering_accuracy(&labeled)
}

/// Mean suspiciousness per class, most severe first; absent classes are skipped.
pub fn class_means(scored: &[Suspiciousness]) -> Vec<(SeverityClass, f64, usize)> {
    SeverityClass::ALL
        .iter()
        .filter_map(|&class| {
            let values: Vec<f64> = scored.iter().filter(|s| s.label == Some(class)).map(|s| s.value).collect();
            (!values.is_empty()).then(|| (class, values.iter().sum::<f64>() / values.len() as f64, values.len()))
        })
        .collect()
}

/// Alert report, one line per ranked event; rank starts at 1.
pub fn alerts_tsv(vocab: &Vocabulary, ranked: &[Suspiciousness]) -> Result<String> {
    let mut out = String::from("rank\tsubject\tpredicate\tobject\tsuspiciousness\tlabel\n");
    for (i, a) in ranked.iter().enumerate() {
        let t = vocab.decode(a.triple)?;
        let label = a.label.map_or("", SeverityClass::as_str);
        writeln!(out, "{}\t{}\t{}\t{}\t{}\t{}", i + 1, t.s, t.p, t.o, a.value, label).expect("writing to a String cannot fail");
    }
    Ok(out)
}
