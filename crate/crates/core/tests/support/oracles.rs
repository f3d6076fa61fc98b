//! Brute-force reference computations for the integration tests.
//!
//! Everything here works from the raw parameter tables with plain loops and
//! shares no code with the library's scoring, ranking or gradient paths.

#![allow(dead_code)]

use std::collections::HashSet;

use kgebm::anomaly::Suspiciousness;
use kgebm::model::{EmbeddingSpace, RelationKind, TransEParams};
use kgebm::rng::{stream, Rng, Stream};
use kgebm::{SeverityClass, Triple};
use rand::Rng as _;

pub fn rng(seed: u64) -> Rng {
    stream(seed, Stream::Synth)
}

pub fn random_space(kind: RelationKind, ne: usize, nr: usize, dim: usize, sigma: f64, seed: u64) -> EmbeddingSpace {
    EmbeddingSpace::init(ne, nr, dim, kind, 0.0, sigma, &mut stream(seed, Stream::Init)).unwrap()
}

/// Parameters drawn from {-1, 0, 1}, so scores are small integers and ties are common.
pub fn integer_space(kind: RelationKind, ne: usize, nr: usize, dim: usize, rng: &mut Rng) -> EmbeddingSpace {
    let rel_len = EmbeddingSpace::relation_len_for(kind, dim);
    let mut draw = |len: usize| -> Vec<f64> { (0..len).map(|_| rng.random_range(-1i32..=1) as f64).collect() };
    let entities = draw(ne * dim);
    let relations = draw(nr * rel_len);
    EmbeddingSpace::from_parts(kind, dim, entities, relations).unwrap()
}

pub fn random_transe(ne: usize, nr: usize, dim: usize, seed: u64) -> TransEParams {
    TransEParams::init(ne, nr, dim, 0.0, 1.0, &mut stream(seed, Stream::Init)).unwrap()
}

/// `Σ_i Σ_j e_s[i] R[i][j] e_o[j]`, with `R` diagonal for the diagonal kind.
pub fn naive_score(space: &EmbeddingSpace, t: Triple) -> f64 {
    let n = space.dim();
    let e = space.entities();
    let r = space.relations();
    let es = &e[t.s * n..(t.s + 1) * n];
    let eo = &e[t.o * n..(t.o + 1) * n];
    let mut f = 0.0;
    match space.kind() {
        RelationKind::Full => {
            let rp = &r[t.p * n * n..(t.p + 1) * n * n];
            for i in 0..n {
                for j in 0..n {
                    f += es[i] * rp[i * n + j] * eo[j];
                }
            }
        }
        RelationKind::Diagonal => {
            let rp = &r[t.p * n..(t.p + 1) * n];
            for i in 0..n {
                f += es[i] * rp[i] * eo[i];
            }
        }
    }
    f
}

pub fn all_slots(ne: usize, nr: usize) -> Vec<Triple> {
    let mut out = Vec::with_capacity(ne * ne * nr);
    for s in 0..ne {
        for p in 0..nr {
            for o in 0..ne {
                out.push(Triple::new(s, p, o));
            }
        }
    }
    out
}

pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// `ln Σ_X exp(-E(X))` by listing every subset of slots.
pub fn brute_log_partition(space: &EmbeddingSpace) -> f64 {
    let slots = all_slots(space.num_entities(), space.num_relations());
    assert!(slots.len() <= 20, "too many slots to enumerate");
    let f: Vec<f64> = slots.iter().map(|&t| naive_score(space, t)).collect();
    let neg_energy: Vec<f64> = (0..1u64 << slots.len())
        .map(|mask| (0..slots.len()).filter(|i| mask >> i & 1 == 1).map(|i| f[i]).sum())
        .collect();
    log_sum_exp(&neg_energy)
}

/// `Σ_slots x ln σ(f) + (1 - x) ln(1 - σ(f))`.
pub fn bernoulli_log_prob(space: &EmbeddingSpace, present: &HashSet<Triple>) -> f64 {
    all_slots(space.num_entities(), space.num_relations())
        .into_iter()
        .map(|t| {
            let p = 1.0 / (1.0 + (-naive_score(space, t)).exp());
            if present.contains(&t) {
                p.ln()
            } else {
                (1.0 - p).ln()
            }
        })
        .sum()
}

pub fn se_loss(space: &EmbeddingSpace, pos: &[Triple], neg: &[Triple]) -> f64 {
    let p: f64 = pos.iter().map(|&t| (naive_score(space, t) - 1.0).powi(2)).sum();
    let n: f64 = neg.iter().map(|&t| naive_score(space, t).powi(2)).sum();
    p + n
}

/// `-Σ_pos ln( e^{f_i} / Σ_{support} e^{f_j} )`.
pub fn kl_loss(space: &EmbeddingSpace, pos: &[Triple], neg: &[Triple]) -> f64 {
    let z: f64 = pos.iter().chain(neg).map(|&t| naive_score(space, t).exp()).sum();
    pos.iter().map(|&t| -(naive_score(space, t).exp() / z).ln()).sum()
}

pub fn transe_distance(params: &TransEParams, t: Triple) -> f64 {
    let n = params.dim();
    let e = params.entities();
    let r = params.relations();
    (0..n)
        .map(|i| e[t.s * n + i] + r[t.p * n + i] - e[t.o * n + i])
        .map(|d| d * d)
        .sum::<f64>()
        .sqrt()
}

pub fn transe_loss(params: &TransEParams, pairs: &[(Triple, Triple)], margin: f64) -> f64 {
    pairs
        .iter()
        .map(|&(p, n)| (1.0 + (margin + transe_distance(params, p) - transe_distance(params, n)).exp()).ln())
        .sum()
}

pub trait Params: Clone {
    fn tables(&mut self) -> (&mut [f64], &mut [f64]);
}

impl Params for EmbeddingSpace {
    fn tables(&mut self) -> (&mut [f64], &mut [f64]) {
        self.tables_mut()
    }
}

impl Params for TransEParams {
    fn tables(&mut self) -> (&mut [f64], &mut [f64]) {
        self.tables_mut()
    }
}

/// Central differences over every entity parameter, then every relation parameter.
pub fn numeric_gradient<P: Params>(params: &P, loss: impl Fn(&P) -> f64, h: f64) -> Vec<f64> {
    let mut probe = params.clone();
    let ne = probe.tables().0.len();
    let total = ne + probe.tables().1.len();
    let bumped = |k: usize, delta: f64| {
        let mut w = params.clone();
        let (e, r) = w.tables();
        if k < ne {
            e[k] += delta;
        } else {
            r[k - ne] += delta;
        }
        w
    };
    (0..total)
        .map(|k| (loss(&bumped(k, h)) - loss(&bumped(k, -h))) / (2.0 * h))
        .collect()
}

/// `‖a - b‖ / max(‖a‖, ‖b‖)`.
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    norm(&diff) / norm(a).max(norm(b)).max(1e-300)
}

/// Exact one-step Metropolis-Hastings kernel from `x` under target `∝ exp(f)`
/// when the proposal picks one enabled position uniformly and a different
/// symbol uniformly. Entries include the probability of staying at `x`.
pub fn mh_kernel(space: &EmbeddingSpace, x: Triple, positions: [bool; 3]) -> Vec<(Triple, f64)> {
    let enabled = positions.iter().filter(|&&b| b).count() as f64;
    let fx = naive_score(space, x);
    let mut moves = Vec::new();
    let (ne, nr) = (space.num_entities(), space.num_relations());
    if positions[0] {
        for s in (0..ne).filter(|&s| s != x.s) {
            moves.push((Triple::new(s, x.p, x.o), 1.0 / enabled / (ne - 1) as f64));
        }
    }
    if positions[1] {
        for p in (0..nr).filter(|&p| p != x.p) {
            moves.push((Triple::new(x.s, p, x.o), 1.0 / enabled / (nr - 1) as f64));
        }
    }
    if positions[2] {
        for o in (0..ne).filter(|&o| o != x.o) {
            moves.push((Triple::new(x.s, x.p, o), 1.0 / enabled / (ne - 1) as f64));
        }
    }
    let mut out: Vec<(Triple, f64)> = moves
        .into_iter()
        .map(|(y, q)| (y, q * (naive_score(space, y) - fx).exp().min(1.0)))
        .collect();
    let stay = 1.0 - out.iter().map(|m| m.1).sum::<f64>();
    out.push((x, stay));
    out
}

/// Position of `own` in a descending sort of the unfiltered candidates,
/// averaged over the block of equal scores.
pub fn sorted_rank(scores: &[f64], own: usize, filtered: impl Fn(usize) -> bool) -> f64 {
    let mut kept: Vec<f64> = (0..scores.len()).filter(|&i| i == own || !filtered(i)).map(|i| scores[i]).collect();
    kept.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let target = scores[own];
    let places: Vec<f64> = kept
        .iter()
        .enumerate()
        .filter(|(_, &v)| v == target)
        .map(|(i, _)| (i + 1) as f64)
        .collect();
    places.iter().sum::<f64>() / places.len() as f64
}

/// Filtered `(subject_rank, object_rank)` of `t` under `score`.
pub fn brute_ranks(score: impl Fn(Triple) -> f64, ne: usize, t: Triple, known: &HashSet<Triple>) -> (f64, f64) {
    let objects: Vec<f64> = (0..ne).map(|o| score(Triple::new(t.s, t.p, o))).collect();
    let subjects: Vec<f64> = (0..ne).map(|s| score(Triple::new(s, t.p, t.o))).collect();
    let o_rank = sorted_rank(&objects, t.o, |o| known.contains(&Triple::new(t.s, t.p, o)));
    let s_rank = sorted_rank(&subjects, t.s, |s| known.contains(&Triple::new(s, t.p, t.o)));
    (s_rank, o_rank)
}

/// Pairwise count over all pairs of events from different classes.
pub fn brute_ordering_accuracy(scored: &[(f64, SeverityClass)]) -> f64 {
    let (mut good, mut pairs) = (0.0, 0usize);
    for (i, &(vi, ci)) in scored.iter().enumerate() {
        for &(vj, cj) in &scored[i + 1..] {
            if ci == cj {
                continue;
            }
            pairs += 1;
            let (hi, lo) = if ci.rank() > cj.rank() { (vi, vj) } else { (vj, vi) };
            if hi > lo {
                good += 1.0;
            } else if hi == lo {
                good += 0.5;
            }
        }
    }
    good / pairs as f64
}

/// Selection-sort ranking: repeatedly take the most suspicious remaining
/// event, breaking ties by the smallest triple.
pub fn brute_rank_alerts(scored: &[Suspiciousness], entity: Option<usize>) -> Vec<Suspiciousness> {
    let mut rest: Vec<Suspiciousness> = scored
        .iter()
        .filter(|s| entity.is_none_or(|e| s.triple.s == e || s.triple.o == e))
        .copied()
        .collect();
    let mut out = Vec::with_capacity(rest.len());
    while !rest.is_empty() {
        let mut best = 0;
        for i in 1..rest.len() {
            let (a, b) = (&rest[i], &rest[best]);
            if a.value > b.value || (a.value == b.value && (a.triple.s, a.triple.p, a.triple.o) < (b.triple.s, b.triple.p, b.triple.o)) {
                best = i;
            }
        }
        out.push(rest.remove(best));
    }
    out
}
