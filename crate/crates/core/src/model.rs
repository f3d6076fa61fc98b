//! Bilinear triple scoring and the energy-based graph distribution.
//!
//! A triple `(s, p, o)` scores `f = e_sᵀ R_p e_o`. A graph `X` (a binary
//! indicator over every `(s, p, o)` slot) has energy `E(X) = -Σ X·f` and
//! probability `exp(-E(X)) / Z`. Because slots are independent,
//! `log Z = Σ softplus(f)` and every slot is an independent Bernoulli with
//! success probability `σ(f)`.

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Triple;
use crate::rng::Rng;

/// Logistic function, evaluated without overflow for any finite input.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let z = x.exp();
        z / (1.0 + z)
    }
}

/// `ln(1 + e^x)` as `max(x, 0) + ln1p(e^{-|x|})`.
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// `ln σ(x) = -softplus(-x)`.
pub fn log_sigmoid(x: f64) -> f64 {
    -softplus(-x)
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RelationKind {
    /// Full `N×N` relation matrices (RESCAL).
    Full,
    /// Diagonal relations stored as length-`N` vectors (DistMult).
    Diagonal,
}

/// Entity vectors and relation matrices, stored row-major in flat buffers.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSpace {
    kind: RelationKind,
    dim: usize,
    num_entities: usize,
    num_relations: usize,
    entities: Vec<f64>,
    relations: Vec<f64>,
}

fn check_sizes(num_entities: usize, num_relations: usize, dim: usize) -> Result<()> {
    if num_entities == 0 {
        return Err(Error::Config("at least one entity is required".into()));
    }
    if num_relations == 0 {
        return Err(Error::Config("at least one relation is required".into()));
    }
    if dim == 0 {
        return Err(Error::Config("embedding dimension must be at least 1".into()));
    }
    Ok(())
}

fn normal_fill(len: usize, mu: f64, sigma: f64, rng: &mut Rng) -> Result<Vec<f64>> {
    if !(sigma >= 0.0 && sigma.is_finite() && mu.is_finite()) {
        return Err(Error::Config(format!("invalid init distribution N({mu}, {sigma}²)")));
    }
    if sigma == 0.0 {
        return Ok(vec![mu; len]);
    }
    let normal = Normal::new(mu, sigma).map_err(|e| Error::Config(e.to_string()))?;
    Ok((0..len).map(|_| normal.sample(rng)).collect())
}

impl EmbeddingSpace {
    /// Draws every parameter i.i.d. from `N(mu, sigma²)`; entities first, then relations.
    pub fn init(
        num_entities: usize,
        num_relations: usize,
        dim: usize,
        kind: RelationKind,
        mu: f64,
        sigma: f64,
        rng: &mut Rng,
    ) -> Result<Self> {
        check_sizes(num_entities, num_relations, dim)?;
        let rel_len = Self::relation_len_for(kind, dim);
        let entities = normal_fill(num_entities * dim, mu, sigma, rng)?;
        let relations = normal_fill(num_relations * rel_len, mu, sigma, rng)?;
        Ok(Self {
            kind,
            dim,
            num_entities,
            num_relations,
            entities,
            relations,
        })
    }

    pub fn zeros(num_entities: usize, num_relations: usize, dim: usize, kind: RelationKind) -> Result<Self> {
        Self::from_parts(
            kind,
            dim,
            vec![0.0; num_entities * dim],
            vec![0.0; num_relations * Self::relation_len_for(kind, dim)],
        )
    }

    /// Builds a space from flat entity and relation buffers.
    pub fn from_parts(kind: RelationKind, dim: usize, entities: Vec<f64>, relations: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Config("embedding dimension must be at least 1".into()));
        }
        let rel_len = Self::relation_len_for(kind, dim);
        if entities.len() % dim != 0 || relations.len() % rel_len != 0 {
            return Err(Error::Shape(format!(
                "buffers of length {} / {} do not divide into rows of {dim} / {rel_len}",
                entities.len(),
                relations.len()
            )));
        }
        let space = Self {
            kind,
            dim,
            num_entities: entities.len() / dim,
            num_relations: relations.len() / rel_len,
            entities,
            relations,
        };
        check_sizes(space.num_entities, space.num_relations, dim)?;
        Ok(space)
    }

    pub fn relation_len_for(kind: RelationKind, dim: usize) -> usize {
        match kind {
            RelationKind::Full => dim * dim,
            RelationKind::Diagonal => dim,
        }
    }

    pub fn kind(&self) -> RelationKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_entities(&self) -> usize {
        self.num_entities
    }

    pub fn num_relations(&self) -> usize {
        self.num_relations
    }

    pub fn relation_len(&self) -> usize {
        Self::relation_len_for(self.kind, self.dim)
    }

    pub fn entity(&self, i: usize) -> &[f64] {
        &self.entities[i * self.dim..(i + 1) * self.dim]
    }

    pub fn entity_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.entities[i * self.dim..(i + 1) * self.dim]
    }

    pub fn relation(&self, p: usize) -> &[f64] {
        let n = self.relation_len();
        &self.relations[p * n..(p + 1) * n]
    }

    pub fn relation_mut(&mut self, p: usize) -> &mut [f64] {
        let n = self.relation_len();
        &mut self.relations[p * n..(p + 1) * n]
    }

    pub fn entities(&self) -> &[f64] {
        &self.entities
    }

    pub fn relations(&self) -> &[f64] {
        &self.relations
    }

    pub fn entities_mut(&mut self) -> &mut [f64] {
        &mut self.entities
    }

    pub fn relations_mut(&mut self) -> &mut [f64] {
        &mut self.relations
    }

    /// Both tables at once, for optimizer steps.
    pub fn tables_mut(&mut self) -> (&mut [f64], &mut [f64]) {
        (&mut self.entities, &mut self.relations)
    }

    pub fn is_finite(&self) -> bool {
        self.entities.iter().chain(&self.relations).all(|x| x.is_finite())
    }

    pub fn contains(&self, t: Triple) -> bool {
        t.s < self.num_entities && t.o < self.num_entities && t.p < self.num_relations
    }

    pub fn check(&self, t: Triple) -> Result<()> {
        if t.s >= self.num_entities || t.o >= self.num_entities {
            let index = if t.s >= self.num_entities { t.s } else { t.o };
            return Err(Error::IndexOutOfRange {
                what: "entity",
                index,
                size: self.num_entities,
            });
        }
        if t.p >= self.num_relations {
            return Err(Error::IndexOutOfRange {
                what: "relation",
                index: t.p,
                size: self.num_relations,
            });
        }
        Ok(())
    }

    /// `e_sᵀ R_p` written into `out`.
    pub fn left_product(&self, s: usize, p: usize, out: &mut [f64]) {
        let es = self.entity(s);
        let r = self.relation(p);
        match self.kind {
            RelationKind::Full => {
                for (j, acc) in out.iter_mut().enumerate() {
                    *acc = es.iter().enumerate().map(|(i, &x)| x * r[i * self.dim + j]).sum();
                }
            }
            RelationKind::Diagonal => {
                for ((acc, &x), &d) in out.iter_mut().zip(es).zip(r) {
                    *acc = x * d;
                }
            }
        }
    }

    /// `R_p e_o` written into `out`.
    pub fn right_product(&self, p: usize, o: usize, out: &mut [f64]) {
        let eo = self.entity(o);
        let r = self.relation(p);
        match self.kind {
            RelationKind::Full => {
                for (i, acc) in out.iter_mut().enumerate() {
                    *acc = dot(&r[i * self.dim..(i + 1) * self.dim], eo);
                }
            }
            RelationKind::Diagonal => {
                for ((acc, &x), &d) in out.iter_mut().zip(eo).zip(r) {
                    *acc = x * d;
                }
            }
        }
    }

    /// `f(s, p, o) = e_sᵀ R_p e_o`.
    ///
    /// Summation order matches [`Self::score_all_objects`] exactly, and the
    /// diagonal form multiplies `e_s ⊙ e_o` first so it is bitwise symmetric.
    pub fn score(&self, t: Triple) -> f64 {
        let es = self.entity(t.s);
        let eo = self.entity(t.o);
        let r = self.relation(t.p);
        match self.kind {
            RelationKind::Full => (0..self.dim)
                .map(|j| {
                    let left_j: f64 = es.iter().enumerate().map(|(i, &x)| x * r[i * self.dim + j]).sum();
                    left_j * eo[j]
                })
                .sum(),
            RelationKind::Diagonal => es.iter().zip(eo).zip(r).map(|((a, b), d)| d * (a * b)).sum(),
        }
    }

    /// Probability `σ(f)` that the triple is present.
    pub fn prob(&self, t: Triple) -> f64 {
        sigmoid(self.score(t))
    }

    /// Scores of `(s, p, o')` for every entity `o'`.
    pub fn score_all_objects(&self, s: usize, p: usize) -> Vec<f64> {
        match self.kind {
            RelationKind::Full => {
                let mut left = vec![0.0; self.dim];
                self.left_product(s, p, &mut left);
                self.entities.chunks_exact(self.dim).map(|e| dot(&left, e)).collect()
            }
            RelationKind::Diagonal => (0..self.num_entities).map(|o| self.score(Triple::new(s, p, o))).collect(),
        }
    }

    /// Scores of `(s', p, o)` for every entity `s'`.
    pub fn score_all_subjects(&self, p: usize, o: usize) -> Vec<f64> {
        let mut right = vec![0.0; self.dim];
        self.right_product(p, o, &mut right);
        self.entities.chunks_exact(self.dim).map(|e| dot(e, &right)).collect()
    }

    /// `E(X) = -Σ X_{spo} f(s, p, o)`.
    pub fn graph_energy(&self, x: &GraphIndicator) -> Result<f64> {
        self.check_indicator(x)?;
        Ok(-x.present().map(|t| self.score(t)).sum::<f64>())
    }

    /// `ln Z = Σ_{s,p,o} softplus(f(s, p, o))` over the full slot universe, self-loops included.
    pub fn log_partition(&self) -> f64 {
        let mut total = 0.0;
        for s in 0..self.num_entities {
            for p in 0..self.num_relations {
                total += self.score_all_objects(s, p).into_iter().map(softplus).sum::<f64>();
            }
        }
        total
    }

    /// `ln p(X) = -E(X) - ln Z`.
    pub fn log_prob_graph(&self, x: &GraphIndicator) -> Result<f64> {
        Ok(-self.graph_energy(x)? - self.log_partition())
    }

    /// `ln p(X)` as a sum of independent Bernoulli log-probabilities.
    pub fn log_prob_graph_bernoulli(&self, x: &GraphIndicator) -> Result<f64> {
        self.check_indicator(x)?;
        Ok(x
            .slots()
            .map(|(t, present)| {
                let f = self.score(t);
                if present {
                    log_sigmoid(f)
                } else {
                    log_sigmoid(-f)
                }
            })
            .sum())
    }

    fn check_indicator(&self, x: &GraphIndicator) -> Result<()> {
        if x.num_entities != self.num_entities || x.num_relations != self.num_relations {
            return Err(Error::Shape(format!(
                "indicator over {}×{} does not match space with {} entities and {} relations",
                x.num_entities, x.num_relations, self.num_entities, self.num_relations
            )));
        }
        Ok(())
    }
}

/// Translational embeddings scoring `‖e_s + r_p - e_o‖`.
#[derive(Debug, Clone, PartialEq)]
pub struct TransEParams {
    dim: usize,
    num_entities: usize,
    num_relations: usize,
    entities: Vec<f64>,
    relations: Vec<f64>,
}

impl TransEParams {
    pub fn init(num_entities: usize, num_relations: usize, dim: usize, mu: f64, sigma: f64, rng: &mut Rng) -> Result<Self> {
        check_sizes(num_entities, num_relations, dim)?;
        let entities = normal_fill(num_entities * dim, mu, sigma, rng)?;
        let relations = normal_fill(num_relations * dim, mu, sigma, rng)?;
        Ok(Self {
            dim,
            num_entities,
            num_relations,
            entities,
            relations,
        })
    }

    pub fn from_parts(dim: usize, entities: Vec<f64>, relations: Vec<f64>) -> Result<Self> {
        if dim == 0 || entities.len() % dim != 0 || relations.len() % dim != 0 {
            return Err(Error::Shape(format!(
                "buffers of length {} / {} do not divide into rows of {dim}",
                entities.len(),
                relations.len()
            )));
        }
        let params = Self {
            dim,
            num_entities: entities.len() / dim,
            num_relations: relations.len() / dim,
            entities,
            relations,
        };
        check_sizes(params.num_entities, params.num_relations, dim)?;
        Ok(params)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_entities(&self) -> usize {
        self.num_entities
    }

    pub fn num_relations(&self) -> usize {
        self.num_relations
    }

    pub fn entity(&self, i: usize) -> &[f64] {
        &self.entities[i * self.dim..(i + 1) * self.dim]
    }

    pub fn relation(&self, p: usize) -> &[f64] {
        &self.relations[p * self.dim..(p + 1) * self.dim]
    }

    pub fn entity_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.entities[i * self.dim..(i + 1) * self.dim]
    }

    pub fn relation_mut(&mut self, p: usize) -> &mut [f64] {
        &mut self.relations[p * self.dim..(p + 1) * self.dim]
    }

    pub fn entities(&self) -> &[f64] {
        &self.entities
    }

    pub fn relations(&self) -> &[f64] {
        &self.relations
    }

    pub fn entities_mut(&mut self) -> &mut [f64] {
        &mut self.entities
    }

    pub fn relations_mut(&mut self) -> &mut [f64] {
        &mut self.relations
    }

    /// Both tables at once, for optimizer steps.
    pub fn tables_mut(&mut self) -> (&mut [f64], &mut [f64]) {
        (&mut self.entities, &mut self.relations)
    }

    pub fn is_finite(&self) -> bool {
        self.entities.iter().chain(&self.relations).all(|x| x.is_finite())
    }

    pub fn contains(&self, t: Triple) -> bool {
        t.s < self.num_entities && t.o < self.num_entities && t.p < self.num_relations
    }

    /// `e_s + r_p - e_o` written into `out`.
    pub fn residual(&self, t: Triple, out: &mut [f64]) {
        let (es, r, eo) = (self.entity(t.s), self.relation(t.p), self.entity(t.o));
        for i in 0..self.dim {
            out[i] = es[i] + r[i] - eo[i];
        }
    }

    /// Euclidean distance `‖e_s + r_p - e_o‖`; zero for a perfect translation.
    pub fn score_transe(&self, t: Triple) -> f64 {
        let (es, r, eo) = (self.entity(t.s), self.relation(t.p), self.entity(t.o));
        (0..self.dim)
            .map(|i| {
                let d = es[i] + r[i] - eo[i];
                d * d
            })
            .sum::<f64>()
            .sqrt()
    }
}

/// Dense binary assignment over every slot of a small universe. Oracle use only.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GraphIndicator {
    num_entities: usize,
    num_relations: usize,
    bits: Vec<bool>,
}

impl GraphIndicator {
    /// Largest slot count for which whole-graph enumeration is allowed.
    pub const ORACLE_CAP: usize = 20;

    pub fn empty(num_entities: usize, num_relations: usize) -> Result<Self> {
        let slots = num_entities * num_entities * num_relations;
        if slots > Self::ORACLE_CAP {
            return Err(Error::Invalid(format!(
                "{slots} triple slots exceed the enumeration cap of {}",
                Self::ORACLE_CAP
            )));
        }
        Ok(Self {
            num_entities,
            num_relations,
            bits: vec![false; slots],
        })
    }

    /// The graph whose slot `i` is set iff bit `i` of `mask` is set.
    pub fn from_mask(num_entities: usize, num_relations: usize, mask: u64) -> Result<Self> {
        let mut x = Self::empty(num_entities, num_relations)?;
        for (i, b) in x.bits.iter_mut().enumerate() {
            *b = mask >> i & 1 == 1;
        }
        Ok(x)
    }

    pub fn from_triples(num_entities: usize, num_relations: usize, triples: &[Triple]) -> Result<Self> {
        let mut x = Self::empty(num_entities, num_relations)?;
        for &t in triples {
            x.set(t, true)?;
        }
        Ok(x)
    }

    pub fn num_slots(&self) -> usize {
        self.bits.len()
    }

    /// Iterates every possible graph over the universe.
    pub fn enumerate(num_entities: usize, num_relations: usize) -> Result<impl Iterator<Item = GraphIndicator>> {
        let slots = Self::empty(num_entities, num_relations)?.num_slots();
        Ok((0..1u64 << slots).map(move |m| {
            Self::from_mask(num_entities, num_relations, m).expect("size checked above")
        }))
    }

    fn index(&self, t: Triple) -> Result<usize> {
        if t.s >= self.num_entities || t.o >= self.num_entities || t.p >= self.num_relations {
            return Err(Error::Invalid(format!("triple {t} outside the indicator universe")));
        }
        Ok((t.s * self.num_relations + t.p) * self.num_entities + t.o)
    }

    fn triple_at(&self, i: usize) -> Triple {
        let o = i % self.num_entities;
        let rest = i / self.num_entities;
        Triple::new(rest / self.num_relations, rest % self.num_relations, o)
    }

    pub fn set(&mut self, t: Triple, present: bool) -> Result<()> {
        let i = self.index(t)?;
        self.bits[i] = present;
        Ok(())
    }

    pub fn get(&self, t: Triple) -> bool {
        self.index(t).map(|i| self.bits[i]).unwrap_or(false)
    }

    pub fn slots(&self) -> impl Iterator<Item = (Triple, bool)> + '_ {
        self.bits.iter().enumerate().map(|(i, &b)| (self.triple_at(i), b))
    }

    pub fn present(&self) -> impl Iterator<Item = Triple> + '_ {
        self.slots().filter(|&(_, b)| b).map(|(t, _)| t)
    }
}
