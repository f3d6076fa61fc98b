//! Filtered link-prediction metrics and score distribution summaries.

use std::collections::{BTreeMap, HashSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Triple, TripleStore};
use crate::model::{sigmoid, EmbeddingSpace, TransEParams};
use crate::persist::StoredModel;

/// Anything that assigns a plausibility score to triples; larger is more plausible.
pub trait Scorer: Sync {
    fn num_entities(&self) -> usize;

    fn score(&self, t: Triple) -> f64;

    fn score_objects(&self, s: usize, p: usize) -> Vec<f64> {
        (0..self.num_entities()).map(|o| self.score(Triple::new(s, p, o))).collect()
    }

    fn score_subjects(&self, p: usize, o: usize) -> Vec<f64> {
        (0..self.num_entities()).map(|s| self.score(Triple::new(s, p, o))).collect()
    }
}

impl Scorer for EmbeddingSpace {
    fn num_entities(&self) -> usize {
        EmbeddingSpace::num_entities(self)
    }

    fn score(&self, t: Triple) -> f64 {
        EmbeddingSpace::score(self, t)
    }

    fn score_objects(&self, s: usize, p: usize) -> Vec<f64> {
        self.score_all_objects(s, p)
    }

    fn score_subjects(&self, p: usize, o: usize) -> Vec<f64> {
        self.score_all_subjects(p, o)
    }
}

/// TransE ranks by negated distance.
impl Scorer for TransEParams {
    fn num_entities(&self) -> usize {
        TransEParams::num_entities(self)
    }

    fn score(&self, t: Triple) -> f64 {
        -self.score_transe(t)
    }
}

impl Scorer for StoredModel {
    fn num_entities(&self) -> usize {
        StoredModel::num_entities(self)
    }

    fn score(&self, t: Triple) -> f64 {
        match self {
            StoredModel::Bilinear(s) => s.score(t),
            StoredModel::TransE(p) => Scorer::score(p, t),
        }
    }

    fn score_objects(&self, s: usize, p: usize) -> Vec<f64> {
        match self {
            StoredModel::Bilinear(space) => space.score_all_objects(s, p),
            StoredModel::TransE(params) => params.score_objects(s, p),
        }
    }

    fn score_subjects(&self, p: usize, o: usize) -> Vec<f64> {
        match self {
            StoredModel::Bilinear(space) => space.score_all_subjects(p, o),
            StoredModel::TransE(params) => params.score_subjects(p, o),
        }
    }
}

/// Every triple known to be true; excluded from the competitors when ranking.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FilterSet {
    known: HashSet<Triple>,
}

impl FilterSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_stores<'a>(stores: impl IntoIterator<Item = &'a TripleStore>) -> Self {
        let mut f = Self::new();
        for store in stores {
            f.extend(store.triples().iter().copied());
        }
        f
    }

    pub fn insert(&mut self, t: Triple) {
        self.known.insert(t);
    }

    pub fn contains(&self, t: Triple) -> bool {
        self.known.contains(&t)
    }

    pub fn len(&self) -> usize {
        self.known.len()
    }

    pub fn is_empty(&self) -> bool {
        self.known.is_empty()
    }
}

impl Extend<Triple> for FilterSet {
    fn extend<I: IntoIterator<Item = Triple>>(&mut self, iter: I) {
        self.known.extend(iter);
    }
}

impl FromIterator<Triple> for FilterSet {
    fn from_iter<I: IntoIterator<Item = Triple>>(iter: I) -> Self {
        Self {
            known: iter.into_iter().collect(),
        }
    }
}

/// Ranks are reals because tied candidates share the mean of their positions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RankResult {
    pub triple: Triple,
    pub subject_rank: f64,
    pub object_rank: f64,
}

fn rank_among(scores: &[f64], target: usize, excluded: impl Fn(usize) -> bool) -> f64 {
    let own = scores[target];
    let (mut greater, mut ties) = (0usize, 0usize);
    for (i, &x) in scores.iter().enumerate() {
        if i == target || excluded(i) {
            continue;
        }
        if x > own {
            greater += 1;
        } else if x == own {
            ties += 1;
        }
    }
    1.0 + greater as f64 + ties as f64 / 2.0
}

pub fn filtered_rank<S: Scorer + ?Sized>(scorer: &S, t: Triple, filter: &FilterSet) -> Result<RankResult> {
    let n = scorer.num_entities();
    if t.s >= n || t.o >= n {
        return Err(Error::IndexOutOfRange {
            what: "entity",
            index: t.s.max(t.o),
            size: n,
        });
    }
    let objects = scorer.score_objects(t.s, t.p);
    let object_rank = rank_among(&objects, t.o, |o| filter.contains(Triple::new(t.s, t.p, o)));
    let subjects = scorer.score_subjects(t.p, t.o);
    let subject_rank = rank_among(&subjects, t.s, |s| filter.contains(Triple::new(s, t.p, t.o)));
    Ok(RankResult {
        triple: t,
        subject_rank,
        object_rank,
    })
}

pub fn rank_all<S: Scorer + ?Sized>(scorer: &S, test: &[Triple], filter: &FilterSet, parallel: bool) -> Result<Vec<RankResult>> {
    if parallel {
        test.par_iter().map(|&t| filtered_rank(scorer, t, filter)).collect()
    } else {
        test.iter().map(|&t| filtered_rank(scorer, t, filter)).collect()
    }
}

fn all_ranks(ranks: &[RankResult]) -> impl Iterator<Item = f64> + '_ {
    ranks.iter().flat_map(|r| [r.subject_rank, r.object_rank])
}

/// Mean reciprocal rank over subject and object ranks together.
pub fn mrr_of(ranks: &[RankResult]) -> Result<f64> {
    if ranks.is_empty() {
        return Err(Error::Invalid("no test triples to evaluate".into()));
    }
    Ok(all_ranks(ranks).map(|r| 1.0 / r).sum::<f64>() / (2 * ranks.len()) as f64)
}

/// Fraction of subject and object ranks that are at most `k`.
pub fn hits_of(ranks: &[RankResult], k: usize) -> Result<f64> {
    if k == 0 {
        return Err(Error::Invalid("hits@k needs k >= 1".into()));
    }
    if ranks.is_empty() {
        return Err(Error::Invalid("no test triples to evaluate".into()));
    }
    let hits = all_ranks(ranks).filter(|&r| r <= k as f64).count();
    Ok(hits as f64 / (2 * ranks.len()) as f64)
}

pub fn mrr<S: Scorer + ?Sized>(scorer: &S, test: &[Triple], filter: &FilterSet) -> Result<f64> {
    mrr_of(&rank_all(scorer, test, filter, false)?)
}

pub fn hits_at_k<S: Scorer + ?Sized>(scorer: &S, test: &[Triple], filter: &FilterSet, k: usize) -> Result<f64> {
    hits_of(&rank_all(scorer, test, filter, false)?, k)
}

pub const DEFAULT_HITS: [usize; 3] = [1, 3, 10];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkMetrics {
    pub triples: usize,
    pub mrr: f64,
    /// `(k, hits@k)` in ascending `k`.
    pub hits: Vec<(usize, f64)>,
}

impl LinkMetrics {
    pub fn hits_at(&self, k: usize) -> Option<f64> {
        self.hits.iter().find(|(kk, _)| *kk == k).map(|h| h.1)
    }
}

pub fn evaluate<S: Scorer + ?Sized>(scorer: &S, test: &[Triple], filter: &FilterSet, ks: &[usize], parallel: bool) -> Result<LinkMetrics> {
    let ranks = rank_all(scorer, test, filter, parallel)?;
    let mut ks = ks.to_vec();
    ks.sort_unstable();
    ks.dedup();
    Ok(LinkMetrics {
        triples: test.len(),
        mrr: mrr_of(&ranks)?,
        hits: ks.iter().map(|&k| Ok((k, hits_of(&ranks, k)?))).collect::<Result<_>>()?,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub lo: f64,
    pub hi: f64,
    pub counts: Vec<usize>,
}

impl Histogram {
    /// Equal-width bins over `[lo, hi]`; the top edge falls in the last bin.
    pub fn build(values: &[f64], lo: f64, hi: f64, bins: usize) -> Self {
        let mut counts = vec![0; bins.max(1)];
        let width = (hi - lo) / counts.len() as f64;
        for &v in values {
            let i = if width > 0.0 { ((v - lo) / width).floor() } else { 0.0 };
            let i = (i.max(0.0) as usize).min(counts.len() - 1);
            counts[i] += 1;
        }
        Self { lo, hi, counts }
    }

    pub fn occupied_bins(&self) -> usize {
        self.counts.iter().filter(|&&c| c > 0).count()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupSummary {
    pub count: usize,
    pub mean: f64,
    pub median: f64,
    pub histogram: Histogram,
}

fn summarize(values: &[f64], lo: f64, hi: f64, bins: usize) -> GroupSummary {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let median = if n % 2 == 1 {
        sorted[n / 2]
    } else {
        (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0
    };
    GroupSummary {
        count: n,
        mean: values.iter().sum::<f64>() / n as f64,
        median,
        histogram: Histogram::build(values, lo, hi, bins),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistributionPair {
    pub positive: GroupSummary,
    pub negative: GroupSummary,
}

/// Raw scores and sigmoid probabilities of positive and negative triples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreDistributions {
    pub scores: DistributionPair,
    pub probabilities: DistributionPair,
}

pub const DEFAULT_BINS: usize = 20;

/// Score histograms share bins spanning both groups; probability bins span `[0, 1]`.
pub fn score_distributions<S: Scorer + ?Sized>(
    scorer: &S,
    positives: &[Triple],
    negatives: &[Triple],
    bins: usize,
) -> Result<ScoreDistributions> {
    if positives.is_empty() || negatives.is_empty() {
        return Err(Error::Invalid("score distributions need positive and negative triples".into()));
    }
    let pos: Vec<f64> = positives.iter().map(|&t| scorer.score(t)).collect();
    let neg: Vec<f64> = negatives.iter().map(|&t| scorer.score(t)).collect();
    let (mut lo, mut hi) = pos
        .iter()
        .chain(&neg)
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
    if hi <= lo {
        lo -= 0.5;
        hi += 0.5;
    }
    let prob = |v: &[f64]| v.iter().map(|&x| sigmoid(x)).collect::<Vec<_>>();
    Ok(ScoreDistributions {
        scores: DistributionPair {
            positive: summarize(&pos, lo, hi, bins),
            negative: summarize(&neg, lo, hi, bins),
        },
        probabilities: DistributionPair {
            positive: summarize(&prob(&pos), 0.0, 1.0, bins),
            negative: summarize(&prob(&neg), 0.0, 1.0, bins),
        },
    })
}

/// One row of the per-epoch metric series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub acceptance_rate: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mrr: Option<f64>,
}

/// Final metrics plus an optional per-epoch series.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    /// Metric name to value, e.g. `mrr` and `hits@10`.
    pub metrics: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub epochs: Vec<EpochRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub distributions: Option<ScoreDistributions>,
}

impl MetricsReport {
    pub fn from_link_metrics(m: &LinkMetrics) -> Self {
        let mut metrics = BTreeMap::new();
        metrics.insert("mrr".to_string(), m.mrr);
        for &(k, h) in &m.hits {
            metrics.insert(format!("hits@{k}"), h);
        }
        Self {
            metrics,
            ..Self::default()
        }
    }

    /// `metric<TAB>value` lines in key order.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("metric\tvalue\n");
        for (k, v) in &self.metrics {
            out.push_str(&format!("{k}\t{v}\n"));
        }
        out
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Format(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Format(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::RelationKind;

    /// Scores looked up from a table indexed by `(s, o)`; one relation.
    struct Table(Vec<Vec<f64>>);

    impl Scorer for Table {
        fn num_entities(&self) -> usize {
            self.0.len()
        }

        fn score(&self, t: Triple) -> f64 {
            self.0[t.s][t.o]
        }
    }

    #[test]
    fn strict_maximum_ranks_first() {
        let table = Table(vec![vec![0.0, 5.0, 1.0], vec![0.0; 3], vec![0.0; 3]]);
        let r = filtered_rank(&table, Triple::new(0, 0, 1), &FilterSet::new()).unwrap();
        assert_eq!(r.object_rank, 1.0);
    }

    #[test]
    fn tie_at_top_shares_rank() {
        let table = Table(vec![vec![5.0, 5.0, 1.0], vec![0.0; 3], vec![0.0; 3]]);
        let r = filtered_rank(&table, Triple::new(0, 0, 1), &FilterSet::new()).unwrap();
        assert_eq!(r.object_rank, 1.5);
    }

    #[test]
    fn filtered_competitors_are_skipped() {
        let table = Table(vec![vec![9.0, 5.0, 7.0], vec![0.0; 3], vec![0.0; 3]]);
        let t = Triple::new(0, 0, 1);
        let filter: FilterSet = [t, Triple::new(0, 0, 0)].into_iter().collect();
        assert_eq!(filtered_rank(&table, t, &filter).unwrap().object_rank, 2.0);
        assert_eq!(filtered_rank(&table, t, &FilterSet::new()).unwrap().object_rank, 3.0);
    }

    #[test]
    fn hand_mrr() {
        let t = Triple::new(0, 0, 0);
        let ranks = [RankResult {
            triple: t,
            subject_rank: 1.0,
            object_rank: 4.0,
        }];
        assert_eq!(mrr_of(&ranks).unwrap(), 0.625);
        assert_eq!(hits_of(&ranks, 1).unwrap(), 0.5);
        assert!(hits_of(&ranks, 0).is_err());
        assert!(mrr_of(&[]).is_err());
    }

    #[test]
    fn hits_at_entity_count_is_one() {
        let space = EmbeddingSpace::init(7, 2, 3, RelationKind::Full, 0.0, 1.0, &mut crate::rng::stream(1, crate::rng::Stream::Init)).unwrap();
        let test = [Triple::new(0, 1, 2), Triple::new(3, 0, 6)];
        assert_eq!(hits_at_k(&space, &test, &FilterSet::new(), 7).unwrap(), 1.0);
    }

    #[test]
    fn zero_space_probabilities_in_one_bin() {
        let space = EmbeddingSpace::zeros(4, 1, 2, RelationKind::Diagonal).unwrap();
        let pos = [Triple::new(0, 0, 1)];
        let neg = [Triple::new(2, 0, 3), Triple::new(1, 0, 1)];
        let d = score_distributions(&space, &pos, &neg, DEFAULT_BINS).unwrap();
        assert_eq!(d.probabilities.positive.mean, 0.5);
        assert_eq!(d.probabilities.negative.histogram.occupied_bins(), 1);
        assert_eq!(d.probabilities.positive.histogram.occupied_bins(), 1);
    }

    #[test]
    fn identical_groups_identical_histograms() {
        let space = EmbeddingSpace::init(5, 1, 3, RelationKind::Full, 0.0, 1.0, &mut crate::rng::stream(2, crate::rng::Stream::Init)).unwrap();
        let ts: Vec<Triple> = (0..5).map(|i| Triple::new(i, 0, (i + 2) % 5)).collect();
        let d = score_distributions(&space, &ts, &ts, 7).unwrap();
        assert_eq!(d.scores.positive, d.scores.negative);
        assert_eq!(d.probabilities.positive, d.probabilities.negative);
    }

    #[test]
    fn report_formats() {
        let m = LinkMetrics {
            triples: 2,
            mrr: 0.5,
            hits: vec![(1, 0.25), (10, 1.0)],
        };
        let report = MetricsReport::from_link_metrics(&m);
        assert_eq!(report.to_tsv(), "metric\tvalue\nhits@1\t0.25\nhits@10\t1\nmrr\t0.5\n");
        let back = MetricsReport::from_json(&report.to_json().unwrap()).unwrap();
        assert_eq!(back, report);
    }
}
