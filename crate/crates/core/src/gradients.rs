//! Parameter gradients for every training objective.
//!
//! Sign convention: [`wake_sleep_gradients`] and [`eta_gated_update`] return
//! the *ascent* direction of the log-likelihood, exactly as the update rules
//! are written. The loss functions (`*_loss_and_grad`) and
//! [`apply_regularization`] accumulate *descent* gradients of a loss. The
//! energy trainer negates the wake-sleep result before handing it to the
//! optimizer, which always descends.

use crate::graph::Triple;
use crate::model::{sigmoid, softplus, EmbeddingSpace, RelationKind, TransEParams};

/// Dense gradient tables with a record of which rows were touched.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientSet {
    dim: usize,
    relation_len: usize,
    entities: Vec<f64>,
    relations: Vec<f64>,
    entity_touched: Vec<bool>,
    relation_touched: Vec<bool>,
}

impl GradientSet {
    pub fn new(num_entities: usize, num_relations: usize, dim: usize, relation_len: usize) -> Self {
        Self {
            dim,
            relation_len,
            entities: vec![0.0; num_entities * dim],
            relations: vec![0.0; num_relations * relation_len],
            entity_touched: vec![false; num_entities],
            relation_touched: vec![false; num_relations],
        }
    }

    pub fn for_space(space: &EmbeddingSpace) -> Self {
        Self::new(space.num_entities(), space.num_relations(), space.dim(), space.relation_len())
    }

    pub fn for_transe(params: &TransEParams) -> Self {
        Self::new(params.num_entities(), params.num_relations(), params.dim(), params.dim())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn relation_len(&self) -> usize {
        self.relation_len
    }

    pub fn entity(&self, i: usize) -> &[f64] {
        &self.entities[i * self.dim..(i + 1) * self.dim]
    }

    pub fn relation(&self, p: usize) -> &[f64] {
        &self.relations[p * self.relation_len..(p + 1) * self.relation_len]
    }

    pub fn entity_mut(&mut self, i: usize) -> &mut [f64] {
        self.entity_touched[i] = true;
        &mut self.entities[i * self.dim..(i + 1) * self.dim]
    }

    pub fn relation_mut(&mut self, p: usize) -> &mut [f64] {
        self.relation_touched[p] = true;
        &mut self.relations[p * self.relation_len..(p + 1) * self.relation_len]
    }

    pub fn entity_values(&self) -> &[f64] {
        &self.entities
    }

    pub fn relation_values(&self) -> &[f64] {
        &self.relations
    }

    pub fn touched_entities(&self) -> impl Iterator<Item = usize> + '_ {
        self.entity_touched.iter().enumerate().filter_map(|(i, &t)| t.then_some(i))
    }

    pub fn touched_relations(&self) -> impl Iterator<Item = usize> + '_ {
        self.relation_touched.iter().enumerate().filter_map(|(i, &t)| t.then_some(i))
    }

    pub fn is_entity_touched(&self, i: usize) -> bool {
        self.entity_touched[i]
    }

    pub fn is_relation_touched(&self, p: usize) -> bool {
        self.relation_touched[p]
    }

    pub fn clear(&mut self) {
        self.entities.fill(0.0);
        self.relations.fill(0.0);
        self.entity_touched.fill(false);
        self.relation_touched.fill(false);
    }

    /// Multiplies every value by `factor`.
    pub fn scale(&mut self, factor: f64) {
        self.entities.iter_mut().chain(&mut self.relations).for_each(|x| *x *= factor);
    }

    /// Adds `weight · other`, merging touched rows.
    pub fn add_scaled(&mut self, other: &GradientSet, weight: f64) {
        for (a, b) in self.entities.iter_mut().zip(&other.entities) {
            *a += weight * b;
        }
        for (a, b) in self.relations.iter_mut().zip(&other.relations) {
            *a += weight * b;
        }
        for (a, b) in self.entity_touched.iter_mut().zip(&other.entity_touched) {
            *a |= b;
        }
        for (a, b) in self.relation_touched.iter_mut().zip(&other.relation_touched) {
            *a |= b;
        }
    }

    pub fn max_abs_diff(&self, other: &GradientSet) -> f64 {
        self.entities
            .iter()
            .zip(&other.entities)
            .chain(self.relations.iter().zip(&other.relations))
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.entities.iter().chain(&self.relations).map(|x| x.abs()).fold(0.0, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.entities.iter().chain(&self.relations).all(|x| x.is_finite())
    }
}

/// Adds `weight · ∂f(s,p,o)/∂θ` to `grads` for the bilinear score.
///
/// `∂f/∂R_p = e_s e_oᵀ` (`e_s ⊙ e_o` for diagonal relations),
/// `∂f/∂e_s = R_p e_o`, `∂f/∂e_o = R_pᵀ e_s`.
pub fn accumulate_score_gradient(space: &EmbeddingSpace, t: Triple, weight: f64, grads: &mut GradientSet, scratch: &mut Vec<f64>) {
    let n = space.dim();
    scratch.resize(2 * n, 0.0);
    let (left, right) = scratch.split_at_mut(n);
    space.left_product(t.s, t.p, left);
    space.right_product(t.p, t.o, right);
    let es = space.entity(t.s);
    let eo = space.entity(t.o);
    let rel = grads.relation_mut(t.p);
    match space.kind() {
        RelationKind::Full => {
            for i in 0..n {
                let wi = weight * es[i];
                for (g, &x) in rel[i * n..(i + 1) * n].iter_mut().zip(eo) {
                    *g += wi * x;
                }
            }
        }
        RelationKind::Diagonal => {
            for i in 0..n {
                rel[i] += weight * es[i] * eo[i];
            }
        }
    }
    for (g, &x) in grads.entity_mut(t.s).iter_mut().zip(right.iter()) {
        *g += weight * x;
    }
    for (g, &x) in grads.entity_mut(t.o).iter_mut().zip(left.iter()) {
        *g += weight * x;
    }
}

/// Two-phase log-likelihood ascent direction with per-triple weights.
///
/// Computes `Σ_data w·∂f - Σ_model w·∂f`. Plain wake-sleep uses weights
/// `1/|B|` and `1/|S|`; replacing the model phase by every slot weighted
/// with `σ(f)` gives the exact gradient of `ln p(X)`.
pub fn wake_sleep_gradients_weighted(
    space: &EmbeddingSpace,
    data: &[(Triple, f64)],
    model: &[(Triple, f64)],
) -> GradientSet {
    let mut scratch = Vec::new();
    let mut phase = |set: &[(Triple, f64)]| {
        let mut g = GradientSet::for_space(space);
        for &(t, w) in set {
            accumulate_score_gradient(space, t, w, &mut g, &mut scratch);
        }
        g
    };
    let mut grads = phase(data);
    if !model.is_empty() {
        grads.add_scaled(&phase(model), -1.0);
    }
    grads
}

/// `⟨∂f⟩_B - ⟨∂f⟩_S` with each average over its whole set.
///
/// An empty sample list contributes zero.
pub fn wake_sleep_gradients(space: &EmbeddingSpace, data: &[Triple], samples: &[Triple]) -> GradientSet {
    let weighted = |set: &[Triple]| -> Vec<(Triple, f64)> {
        let w = if set.is_empty() { 0.0 } else { 1.0 / set.len() as f64 };
        set.iter().map(|&t| (t, w)).collect()
    };
    wake_sleep_gradients_weighted(space, &weighted(data), &weighted(samples))
}

/// Global third factor gating the plasticity phases.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Eta {
    /// Data-driven phase, `η = +1`.
    Data,
    /// Free-running phase, `η = 0`; the network only generates triples.
    FreeRunning,
    /// Model-driven replay of generated triples, `η = -1`.
    Model,
}

impl Eta {
    pub fn value(self) -> f64 {
        match self {
            Eta::Data => 1.0,
            Eta::FreeRunning => 0.0,
            Eta::Model => -1.0,
        }
    }
}

/// Per-triple three-factor update `η · s_p · (e_s e_oᵀ, R_p e_o, R_pᵀ e_s)`,
/// scaled by `weight` and added into `grads`.
///
/// `spike` is the teaching signal of output neuron `p`. This evaluates the
/// rule element by element from the raw embeddings rather than through
/// [`accumulate_score_gradient`].
pub fn accumulate_eta_gated(space: &EmbeddingSpace, t: Triple, eta: Eta, spike: bool, weight: f64, grads: &mut GradientSet) {
    let factor = eta.value() * if spike { 1.0 } else { 0.0 } * weight;
    if factor == 0.0 {
        return;
    }
    let n = space.dim();
    let r = space.relation(t.p);
    let es = space.entity(t.s).to_vec();
    let eo = space.entity(t.o).to_vec();
    let entry = |i: usize, j: usize| -> f64 {
        match space.kind() {
            RelationKind::Full => r[i * n + j],
            RelationKind::Diagonal if i == j => r[i],
            RelationKind::Diagonal => 0.0,
        }
    };
    {
        let rel = grads.relation_mut(t.p);
        match space.kind() {
            RelationKind::Full => {
                for i in 0..n {
                    for j in 0..n {
                        rel[i * n + j] += factor * (es[i] * eo[j]);
                    }
                }
            }
            RelationKind::Diagonal => {
                for i in 0..n {
                    rel[i] += factor * (es[i] * eo[i]);
                }
            }
        }
    }
    let ds: Vec<f64> = (0..n).map(|i| (0..n).map(|j| entry(i, j) * eo[j]).sum()).collect();
    let dob: Vec<f64> = (0..n).map(|j| (0..n).map(|i| es[i] * entry(i, j)).sum()).collect();
    for (g, d) in grads.entity_mut(t.s).iter_mut().zip(ds) {
        *g += factor * d;
    }
    for (g, d) in grads.entity_mut(t.o).iter_mut().zip(dob) {
        *g += factor * d;
    }
}

/// The three-factor contribution of one triple as a standalone gradient set.
pub fn eta_gated_update(space: &EmbeddingSpace, t: Triple, eta: Eta, spike: bool) -> GradientSet {
    let mut grads = GradientSet::for_space(space);
    accumulate_eta_gated(space, t, eta, spike, 1.0, &mut grads);
    grads
}

/// Squared reconstruction error `Σ_pos (1 - f)² + Σ_neg f²`; adds `∂L/∂θ` into `grads`.
pub fn se_loss_and_grad(space: &EmbeddingSpace, positives: &[Triple], negatives: &[Triple], grads: &mut GradientSet) -> f64 {
    let mut scratch = Vec::new();
    let mut loss = 0.0;
    let labeled = positives.iter().map(|&t| (t, 1.0)).chain(negatives.iter().map(|&t| (t, 0.0)));
    for (t, target) in labeled {
        let residual = space.score(t) - target;
        loss += residual * residual;
        accumulate_score_gradient(space, t, 2.0 * residual, grads, &mut scratch);
    }
    loss
}

/// Cross-entropy of the positives against a softmax over `positives ∪ negatives`:
/// `L = -Σ_pos ln softmax(θ)_i`. Adds `∂L/∂θ` into `grads`.
pub fn kl_loss_and_grad(space: &EmbeddingSpace, positives: &[Triple], negatives: &[Triple], grads: &mut GradientSet) -> f64 {
    if positives.is_empty() {
        return 0.0;
    }
    let support: Vec<Triple> = positives.iter().chain(negatives).copied().collect();
    let scores: Vec<f64> = support.iter().map(|&t| space.score(t)).collect();
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let log_norm = max + scores.iter().map(|s| (s - max).exp()).sum::<f64>().ln();
    let n_pos = positives.len() as f64;
    let loss = scores[..positives.len()].iter().map(|s| log_norm - s).sum();
    let mut scratch = Vec::new();
    for (i, (&t, &s)) in support.iter().zip(&scores).enumerate() {
        let softmax = (s - log_norm).exp();
        let indicator = if i < positives.len() { 1.0 } else { 0.0 };
        accumulate_score_gradient(space, t, n_pos * softmax - indicator, grads, &mut scratch);
    }
    loss
}

/// Soft-margin ranking loss `Σ softplus(margin + d(pos) - d(neg))` over
/// positive/negative pairs, with `d` the TransE distance.
pub fn transe_loss_and_grad(params: &TransEParams, pairs: &[(Triple, Triple)], margin: f64, grads: &mut GradientSet) -> f64 {
    let n = params.dim();
    let mut res = vec![0.0; n];
    let mut loss = 0.0;
    for &(pos, neg) in pairs {
        let d_pos = params.score_transe(pos);
        let d_neg = params.score_transe(neg);
        let z = margin + d_pos - d_neg;
        loss += softplus(z);
        let w = sigmoid(z);
        for (t, sign, d) in [(pos, 1.0, d_pos), (neg, -1.0, d_neg)] {
            if d == 0.0 {
                // the norm is not differentiable at zero; use the zero subgradient
                continue;
            }
            params.residual(t, &mut res);
            let c = w * sign / d;
            for (g, r) in grads.entity_mut(t.s).iter_mut().zip(&res) {
                *g += c * r;
            }
            for (g, r) in grads.relation_mut(t.p).iter_mut().zip(&res) {
                *g += c * r;
            }
            for (g, r) in grads.entity_mut(t.o).iter_mut().zip(&res) {
                *g -= c * r;
            }
        }
    }
    loss
}

/// Adds `l2·2θ + l1·sign(θ)` for every touched row and returns the
/// corresponding penalty `Σ l2·θ² + l1·|θ|` over those rows.
pub fn apply_regularization(grads: &mut GradientSet, entities: &[f64], relations: &[f64], l1: f64, l2: f64) -> f64 {
    if l1 == 0.0 && l2 == 0.0 {
        return 0.0;
    }
    let (dim, rel_len) = (grads.dim, grads.relation_len);
    let mut penalty = 0.0;
    let mut regularize = |g: &mut [f64], theta: &[f64]| {
        for (gi, &x) in g.iter_mut().zip(theta) {
            let sign = if x > 0.0 {
                1.0
            } else if x < 0.0 {
                -1.0
            } else {
                0.0
            };
            *gi += 2.0 * l2 * x + l1 * sign;
            penalty += l2 * x * x + l1 * x.abs();
        }
    };
    for i in 0..grads.entity_touched.len() {
        if grads.entity_touched[i] {
            regularize(&mut grads.entities[i * dim..(i + 1) * dim], &entities[i * dim..(i + 1) * dim]);
        }
    }
    for p in 0..grads.relation_touched.len() {
        if grads.relation_touched[p] {
            regularize(
                &mut grads.relations[p * rel_len..(p + 1) * rel_len],
                &relations[p * rel_len..(p + 1) * rel_len],
            );
        }
    }
    penalty
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Stream};

    fn space(kind: RelationKind, seed: u64) -> EmbeddingSpace {
        EmbeddingSpace::init(5, 3, 3, kind, 0.0, 0.7, &mut stream(seed, Stream::Init)).unwrap()
    }

    #[test]
    fn identical_phases_cancel_exactly() {
        for kind in [RelationKind::Full, RelationKind::Diagonal] {
            let sp = space(kind, 1);
            let b = vec![Triple::new(0, 1, 2), Triple::new(3, 0, 3), Triple::new(4, 2, 1)];
            let g = wake_sleep_gradients(&sp, &b, &b);
            assert_eq!(g.max_abs(), 0.0);
        }
    }

    #[test]
    fn hand_computed_single_triple() {
        let sp = EmbeddingSpace::from_parts(RelationKind::Full, 1, vec![2.0, 3.0], vec![0.5]).unwrap();
        let g = wake_sleep_gradients(&sp, &[Triple::new(0, 0, 1)], &[]);
        assert_eq!(g.relation(0), &[6.0]);
        assert_eq!(g.entity(0), &[0.5 * 3.0]);
        assert_eq!(g.entity(1), &[0.5 * 2.0]);
    }

    #[test]
    fn only_batch_rows_are_touched() {
        let sp = space(RelationKind::Full, 2);
        let g = wake_sleep_gradients(&sp, &[Triple::new(0, 1, 2)], &[Triple::new(0, 1, 4)]);
        assert_eq!(g.touched_entities().collect::<Vec<_>>(), vec![0, 2, 4]);
        assert_eq!(g.touched_relations().collect::<Vec<_>>(), vec![1]);
        assert!(g.entity(1).iter().chain(g.entity(3)).all(|&x| x == 0.0));
    }

    #[test]
    fn gating_silences_updates() {
        let sp = space(RelationKind::Full, 3);
        let t = Triple::new(1, 2, 3);
        assert_eq!(eta_gated_update(&sp, t, Eta::FreeRunning, true).max_abs(), 0.0);
        assert_eq!(eta_gated_update(&sp, t, Eta::Data, false).max_abs(), 0.0);
        assert!(eta_gated_update(&sp, t, Eta::Data, true).max_abs() > 0.0);
    }

    #[test]
    fn perfect_fit_has_zero_se_gradient() {
        // one-hot entities: score(s, 0, o) = R[s][o]
        let sp = EmbeddingSpace::from_parts(RelationKind::Full, 2, vec![1.0, 0.0, 0.0, 1.0], vec![1.0, 0.0, 0.0, 0.0]).unwrap();
        let mut g = GradientSet::for_space(&sp);
        let loss = se_loss_and_grad(&sp, &[Triple::new(0, 0, 0)], &[Triple::new(0, 0, 1), Triple::new(1, 0, 1)], &mut g);
        assert_eq!(loss, 0.0);
        assert_eq!(g.max_abs(), 0.0);
    }

    #[test]
    fn lone_positive_softmax_has_zero_loss() {
        let sp = space(RelationKind::Full, 4);
        let mut g = GradientSet::for_space(&sp);
        let loss = kl_loss_and_grad(&sp, &[Triple::new(0, 0, 1)], &[], &mut g);
        assert!(loss.abs() < 1e-15);
        assert!(g.max_abs() < 1e-15);
    }

    #[test]
    fn equal_distances_give_softplus_margin() {
        let p = TransEParams::from_parts(1, vec![0.0, 1.0, -1.0], vec![0.0]).unwrap();
        let mut g = GradientSet::for_transe(&p);
        let loss = transe_loss_and_grad(&p, &[(Triple::new(0, 0, 1), Triple::new(0, 0, 2))], 1.0, &mut g);
        assert!((loss - 1.3132616875182228).abs() < 1e-12);
    }

    #[test]
    fn zero_weights_leave_gradients_unchanged() {
        let sp = space(RelationKind::Full, 5);
        let mut g = wake_sleep_gradients(&sp, &[Triple::new(0, 1, 2)], &[]);
        let before = g.clone();
        assert_eq!(apply_regularization(&mut g, sp.entities(), sp.relations(), 0.0, 0.0), 0.0);
        assert_eq!(g, before);
    }

    #[test]
    fn regularization_sign_of_zero_is_zero() {
        let sp = EmbeddingSpace::from_parts(RelationKind::Diagonal, 2, vec![0.0, -2.0], vec![3.0, 0.0]).unwrap();
        let mut g = GradientSet::for_space(&sp);
        g.entity_mut(0);
        g.relation_mut(0);
        let penalty = apply_regularization(&mut g, sp.entities(), sp.relations(), 0.5, 0.25);
        assert_eq!(g.entity(0), &[0.0, 2.0 * 0.25 * -2.0 - 0.5]);
        assert_eq!(g.relation(0), &[2.0 * 0.25 * 3.0 + 0.5, 0.0]);
        assert!((penalty - (0.25 * 4.0 + 0.5 * 2.0 + 0.25 * 9.0 + 0.5 * 3.0)).abs() < 1e-15);
    }
}
