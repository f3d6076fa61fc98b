//! Adagrad and Adam with lazy, row-sparse updates.
//!
//! Only rows marked as touched in the [`GradientSet`] are updated, so entities
//! and relations absent from a batch keep their values and accumulators.
//! Adam's bias correction uses a global step counter that advances once per
//! call to [`OptimizerState::step`].

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gradients::GradientSet;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum OptimizerKind {
    Adagrad,
    Adam,
}

impl fmt::Display for OptimizerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OptimizerKind::Adagrad => "adagrad",
            OptimizerKind::Adam => "adam",
        })
    }
}

impl FromStr for OptimizerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "adagrad" | "ag" => Ok(OptimizerKind::Adagrad),
            "adam" | "a" => Ok(OptimizerKind::Adam),
            other => Err(Error::Config(format!("unknown optimizer `{other}`"))),
        }
    }
}

pub const ADAGRAD_EPS: f64 = 1e-10;
pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
struct Moments {
    first: Vec<f64>,
    second: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
enum Accumulators {
    /// Running sum of squared gradients.
    Adagrad { eps: f64, sum_sq: [Vec<f64>; 2] },
    Adam { step: u64, moments: [Moments; 2] },
}

/// Per-parameter optimizer memory for one entity table and one relation table.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    dim: usize,
    relation_len: usize,
    acc: Accumulators,
}

impl OptimizerState {
    pub fn new(kind: OptimizerKind, entity_params: usize, relation_params: usize, dim: usize, relation_len: usize) -> Self {
        let acc = match kind {
            OptimizerKind::Adagrad => Accumulators::Adagrad {
                eps: ADAGRAD_EPS,
                sum_sq: [vec![0.0; entity_params], vec![0.0; relation_params]],
            },
            OptimizerKind::Adam => {
                let m = |n: usize| Moments {
                    first: vec![0.0; n],
                    second: vec![0.0; n],
                };
                Accumulators::Adam {
                    step: 0,
                    moments: [m(entity_params), m(relation_params)],
                }
            }
        };
        Self { dim, relation_len, acc }
    }

    /// Adagrad with a custom stabilizer; mainly for hand-checked examples.
    pub fn adagrad_with_eps(entity_params: usize, relation_params: usize, dim: usize, relation_len: usize, eps: f64) -> Self {
        Self {
            dim,
            relation_len,
            acc: Accumulators::Adagrad {
                eps,
                sum_sq: [vec![0.0; entity_params], vec![0.0; relation_params]],
            },
        }
    }

    pub fn kind(&self) -> OptimizerKind {
        match self.acc {
            Accumulators::Adagrad { .. } => OptimizerKind::Adagrad,
            Accumulators::Adam { .. } => OptimizerKind::Adam,
        }
    }

    /// Descends along `grads` on the touched rows of both tables.
    pub fn step(&mut self, entities: &mut [f64], relations: &mut [f64], grads: &GradientSet, lr: f64) -> Result<()> {
        let [ne, nr] = self.sizes();
        if entities.len() != ne || relations.len() != nr || grads.entity_values().len() != ne || grads.relation_values().len() != nr {
            return Err(Error::Shape("optimizer, parameter and gradient tables disagree".into()));
        }
        let (dim, rel_len) = (self.dim, self.relation_len);
        let entity_rows: Vec<usize> = grads.touched_entities().collect();
        let relation_rows: Vec<usize> = grads.touched_relations().collect();
        let tables = [
            (entities, grads.entity_values(), entity_rows, dim),
            (relations, grads.relation_values(), relation_rows, rel_len),
        ];
        match &mut self.acc {
            Accumulators::Adagrad { eps, sum_sq } => {
                for ((theta, g, rows, width), acc) in tables.into_iter().zip(sum_sq.iter_mut()) {
                    for row in rows {
                        for k in row * width..(row + 1) * width {
                            acc[k] += g[k] * g[k];
                            let denom = (acc[k] + *eps).sqrt();
                            if denom > 0.0 {
                                theta[k] -= lr * g[k] / denom;
                            }
                        }
                    }
                }
            }
            Accumulators::Adam { step, moments } => {
                *step += 1;
                let t = *step as i32;
                let c1 = 1.0 - ADAM_BETA1.powi(t);
                let c2 = 1.0 - ADAM_BETA2.powi(t);
                for ((theta, g, rows, width), m) in tables.into_iter().zip(moments.iter_mut()) {
                    for row in rows {
                        for k in row * width..(row + 1) * width {
                            m.first[k] = ADAM_BETA1 * m.first[k] + (1.0 - ADAM_BETA1) * g[k];
                            m.second[k] = ADAM_BETA2 * m.second[k] + (1.0 - ADAM_BETA2) * g[k] * g[k];
                            let m_hat = m.first[k] / c1;
                            let v_hat = m.second[k] / c2;
                            theta[k] -= lr * m_hat / (v_hat.sqrt() + ADAM_EPS);
                        }
                    }
                }
            }
        }
        Ok(())
    }

    fn sizes(&self) -> [usize; 2] {
        match &self.acc {
            Accumulators::Adagrad { sum_sq, .. } => [sum_sq[0].len(), sum_sq[1].len()],
            Accumulators::Adam { moments, .. } => [moments[0].first.len(), moments[1].first.len()],
        }
    }

    /// True if every accumulator that must be nonnegative is.
    pub fn accumulators_nonnegative(&self) -> bool {
        match &self.acc {
            Accumulators::Adagrad { sum_sq, .. } => sum_sq.iter().flatten().all(|&x| x >= 0.0),
            Accumulators::Adam { moments, .. } => moments.iter().flat_map(|m| &m.second).all(|&x| x >= 0.0),
        }
    }
}
