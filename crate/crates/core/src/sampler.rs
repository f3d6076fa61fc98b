//! Metropolis-Hastings sampling of triples from the model.
//!
//! The target over single triples is `π(t) ∝ exp(f(t))`. A proposal replaces
//! one enabled position (chosen uniformly) with a uniformly drawn different
//! symbol. The proposal is symmetric, so a move is accepted with probability
//! `min(1, exp(f(new) - f(old)))`.

use std::fmt;
use std::str::FromStr;

use rand::{Rng as _, RngCore, SeedableRng};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Triple;
use crate::model::EmbeddingSpace;
use crate::rng::{self, Rng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Position {
    Subject,
    Predicate,
    Object,
}

/// Non-empty set of triple positions a proposal may corrupt.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PositionSet {
    subject: bool,
    predicate: bool,
    object: bool,
}

impl PositionSet {
    pub const ALL: PositionSet = PositionSet {
        subject: true,
        predicate: true,
        object: true,
    };

    pub fn new(positions: &[Position]) -> Result<Self> {
        let set = Self {
            subject: positions.contains(&Position::Subject),
            predicate: positions.contains(&Position::Predicate),
            object: positions.contains(&Position::Object),
        };
        if set.enabled().is_empty() {
            return Err(Error::Config("at least one sampling position must be enabled".into()));
        }
        Ok(set)
    }

    pub fn enabled(&self) -> Vec<Position> {
        [
            (self.subject, Position::Subject),
            (self.predicate, Position::Predicate),
            (self.object, Position::Object),
        ]
        .into_iter()
        .filter_map(|(on, p)| on.then_some(p))
        .collect()
    }

    pub fn contains(&self, p: Position) -> bool {
        match p {
            Position::Subject => self.subject,
            Position::Predicate => self.predicate,
            Position::Object => self.object,
        }
    }
}

impl Default for PositionSet {
    fn default() -> Self {
        Self::ALL
    }
}

impl fmt::Display for PositionSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names: Vec<&str> = self
            .enabled()
            .into_iter()
            .map(|p| match p {
                Position::Subject => "s",
                Position::Predicate => "p",
                Position::Object => "o",
            })
            .collect();
        f.write_str(&names.join(","))
    }
}

impl FromStr for PositionSet {
    type Err = Error;

    /// Accepts comma-separated `s`/`p`/`o` (or `subject`/`predicate`/`object`).
    fn from_str(s: &str) -> Result<Self> {
        let positions = s
            .split(',')
            .map(|part| match part.trim() {
                "s" | "subject" => Ok(Position::Subject),
                "p" | "predicate" => Ok(Position::Predicate),
                "o" | "object" => Ok(Position::Object),
                other => Err(Error::Config(format!("unknown sampling position `{other}`"))),
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(&positions)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    /// Metropolis-Hastings steps per chain ("free samples").
    pub steps_per_chain: usize,
    pub chains_per_batch_triple: usize,
    pub positions: PositionSet,
    pub seed: u64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            steps_per_chain: 20,
            chains_per_batch_triple: 1,
            positions: PositionSet::ALL,
            seed: 0,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self, num_entities: usize, num_relations: usize) -> Result<()> {
        if self.steps_per_chain == 0 {
            return Err(Error::Config("steps per chain must be at least 1".into()));
        }
        if self.chains_per_batch_triple == 0 {
            return Err(Error::Config("chains per batch triple must be at least 1".into()));
        }
        check_vocab_sizes(self.positions, num_entities, num_relations)
    }
}

fn check_vocab_sizes(positions: PositionSet, num_entities: usize, num_relations: usize) -> Result<()> {
    if (positions.subject || positions.object) && num_entities < 2 {
        return Err(Error::Config(format!(
            "entity replacement needs at least 2 entities, vocabulary has {num_entities}"
        )));
    }
    if positions.predicate && num_relations < 2 {
        return Err(Error::Config(format!(
            "relation replacement needs at least 2 relations, vocabulary has {num_relations}"
        )));
    }
    Ok(())
}

/// Uniform draw from `0..n` excluding `current`.
fn draw_other(rng: &mut Rng, n: usize, current: usize) -> usize {
    let v = rng.random_range(0..n - 1);
    if v >= current {
        v + 1
    } else {
        v
    }
}

/// Corrupts one enabled position of `t` with a different, uniformly drawn symbol.
pub fn propose(
    rng: &mut Rng,
    t: Triple,
    num_entities: usize,
    num_relations: usize,
    positions: PositionSet,
) -> Result<(Triple, Position)> {
    check_vocab_sizes(positions, num_entities, num_relations)?;
    Ok(propose_unchecked(rng, t, num_entities, num_relations, &positions.enabled()))
}

fn propose_unchecked(
    rng: &mut Rng,
    t: Triple,
    num_entities: usize,
    num_relations: usize,
    enabled: &[Position],
) -> (Triple, Position) {
    let position = enabled[rng.random_range(0..enabled.len())];
    let mut candidate = t;
    match position {
        Position::Subject => candidate.s = draw_other(rng, num_entities, t.s),
        Position::Predicate => candidate.p = draw_other(rng, num_relations, t.p),
        Position::Object => candidate.o = draw_other(rng, num_entities, t.o),
    }
    (candidate, position)
}

/// `min(1, exp(new_score - old_score))`, never overflowing.
pub fn acceptance_from_scores(old_score: f64, new_score: f64) -> f64 {
    let delta = new_score - old_score;
    if delta >= 0.0 {
        1.0
    } else {
        delta.exp()
    }
}

pub fn acceptance_prob(space: &EmbeddingSpace, old: Triple, new: Triple) -> f64 {
    acceptance_from_scores(space.score(old), space.score(new))
}

/// One Markov chain seeded at a data triple.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChainState {
    pub current: Triple,
    pub origin: Triple,
    current_score: f64,
}

impl ChainState {
    pub fn new(space: &EmbeddingSpace, origin: Triple) -> Self {
        Self {
            current: origin,
            origin,
            current_score: space.score(origin),
        }
    }
}

/// One proposal plus accept/reject. Returns the new state and whether the move was accepted.
pub fn step(space: &EmbeddingSpace, chain: ChainState, positions: PositionSet, rng: &mut Rng) -> Result<(ChainState, bool)> {
    check_vocab_sizes(positions, space.num_entities(), space.num_relations())?;
    Ok(step_unchecked(space, chain, &positions.enabled(), rng))
}

fn step_unchecked(space: &EmbeddingSpace, chain: ChainState, enabled: &[Position], rng: &mut Rng) -> (ChainState, bool) {
    let (candidate, _) = propose_unchecked(rng, chain.current, space.num_entities(), space.num_relations(), enabled);
    let candidate_score = space.score(candidate);
    let accept = acceptance_from_scores(chain.current_score, candidate_score);
    if rng.random::<f64>() < accept {
        (
            ChainState {
                current: candidate,
                origin: chain.origin,
                current_score: candidate_score,
            },
            true,
        )
    } else {
        (chain, false)
    }
}

/// Endpoints of the chains plus acceptance bookkeeping.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SampleSet {
    pub samples: Vec<Triple>,
    pub proposals: usize,
    pub accepted: usize,
}

impl SampleSet {
    pub fn acceptance_rate(&self) -> f64 {
        if self.proposals == 0 {
            0.0
        } else {
            self.accepted as f64 / self.proposals as f64
        }
    }
}

/// Runs `chains_per_batch_triple` chains of `steps_per_chain` steps from every
/// batch triple and keeps each chain's final state.
///
/// Each chain draws from its own generator derived from one value of `rng`, so
/// the result is identical whether chains run serially or in parallel.
pub fn generate_samples(
    space: &EmbeddingSpace,
    batch: &[Triple],
    cfg: &SamplerConfig,
    rng: &mut Rng,
    parallel: bool,
) -> Result<SampleSet> {
    if batch.is_empty() {
        return Err(Error::Invalid("cannot sample from an empty batch".into()));
    }
    cfg.validate(space.num_entities(), space.num_relations())?;
    for &t in batch {
        space.check(t)?;
    }
    let base = rng.next_u64();
    let enabled = cfg.positions.enabled();
    let chains = cfg.chains_per_batch_triple;
    let run_chain = |index: usize| -> (Triple, usize) {
        let mut chain_rng = Rng::seed_from_u64(rng::derive(base, index as u64));
        let mut state = ChainState::new(space, batch[index / chains]);
        let mut accepted = 0;
        for _ in 0..cfg.steps_per_chain {
            let (next, ok) = step_unchecked(space, state, &enabled, &mut chain_rng);
            state = next;
            accepted += usize::from(ok);
        }
        (state.current, accepted)
    };
    let total = batch.len() * chains;
    let results: Vec<(Triple, usize)> = if parallel {
        (0..total).into_par_iter().map(run_chain).collect()
    } else {
        (0..total).map(run_chain).collect()
    };
    Ok(SampleSet {
        accepted: results.iter().map(|r| r.1).sum(),
        samples: results.into_iter().map(|r| r.0).collect(),
        proposals: total * cfg.steps_per_chain,
    })
}
