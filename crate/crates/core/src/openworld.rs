//! Query store, class prototypes, contrastive clustering and
//! reachability-based probability correction.
//!
//! Class slots follow the class-head layout: slot 0 is the unknown class,
//! slots `1..=K` are the known classes of the current task.

use alloc::collections::VecDeque;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{input, Error, Result};
use crate::math::{l2_distance, ln, sigmoid};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum UnionMode {
    /// `p + q - p*q`: union of independent events.
    #[default]
    NoisyOr,
    Max,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OpenWorldConfig {
    /// Contrastive margin.
    pub delta: f64,
    pub ema_momentum: f64,
    pub store_capacity: usize,
    /// Prototype refresh cadence in training steps.
    pub proto_update_every: usize,
    pub union_mode: UnionMode,
    /// Weight of the contrastive term in the training objective.
    pub contrastive_weight: f64,
}

impl Default for OpenWorldConfig {
    fn default() -> Self {
        OpenWorldConfig {
            delta: 1.0,
            ema_momentum: 0.9,
            store_capacity: 256,
            proto_update_every: 10,
            union_mode: UnionMode::NoisyOr,
            contrastive_weight: 0.1,
        }
    }
}

impl OpenWorldConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.delta > 0.0) {
            return Err(Error::Config("ow.delta must be > 0".into()));
        }
        if !(0.0..=1.0).contains(&self.ema_momentum) {
            return Err(Error::Config("ow.ema_momentum must be in [0,1]".into()));
        }
        if self.store_capacity == 0 || self.proto_update_every == 0 {
            return Err(Error::Config(
                "ow.store_capacity and ow.proto_update_every must be >= 1".into(),
            ));
        }
        Ok(())
    }
}

/// Per-class FIFO queues of labeled refined queries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryStore {
    capacity: usize,
    queues: Vec<VecDeque<Vec<f64>>>,
}

impl QueryStore {
    /// Store for the unknown slot plus `known` classes.
    pub fn new(known: usize, capacity: usize) -> Self {
        QueryStore {
            capacity,
            queues: vec![VecDeque::new(); known + 1],
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn slots(&self) -> usize {
        self.queues.len()
    }

    pub fn len(&self, slot: usize) -> usize {
        self.queues.get(slot).map_or(0, VecDeque::len)
    }

    pub fn queue(&self, slot: usize) -> impl Iterator<Item = &[f64]> {
        self.queues[slot].iter().map(Vec::as_slice)
    }

    /// Append a query to its class queue, evicting the oldest at capacity.
    pub fn push(&mut self, slot: usize, query: &[f64]) -> Result<()> {
        let q = self
            .queues
            .get_mut(slot)
            .ok_or_else(|| input(alloc::format!("class slot {slot} not in store")))?;
        if q.len() == self.capacity {
            q.pop_front();
        }
        q.push_back(query.to_vec());
        Ok(())
    }

    pub fn widen(&mut self, new_classes: usize) {
        self.queues
            .extend(core::iter::repeat_n(VecDeque::new(), new_classes));
    }

    pub fn mean(&self, slot: usize) -> Option<Vec<f64>> {
        let q = &self.queues[slot];
        let first = q.front()?;
        let mut m = vec![0.0; first.len()];
        for v in q {
            for (a, b) in m.iter_mut().zip(v) {
                *a += b;
            }
        }
        let n = q.len() as f64;
        m.iter_mut().for_each(|a| *a /= n);
        Some(m)
    }
}

/// Push matched queries to their class queues.
pub fn store_labeled_queries<'a>(
    store: &mut QueryStore,
    labeled: impl IntoIterator<Item = (usize, &'a [f64])>,
) -> Result<()> {
    for (slot, q) in labeled {
        store.push(slot, q)?;
    }
    Ok(())
}

/// One prototype per class slot. Slots never seen in the store stay
/// uninitialized and are skipped by the loss and by reachability.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrototypeBank {
    pub momentum: f64,
    pub margin: f64,
    prototypes: Vec<Option<Vec<f64>>>,
}

impl PrototypeBank {
    pub fn new(known: usize, momentum: f64, margin: f64) -> Self {
        PrototypeBank {
            momentum,
            margin,
            prototypes: vec![None; known + 1],
        }
    }

    pub fn from_prototypes(prototypes: Vec<Option<Vec<f64>>>, momentum: f64, margin: f64) -> Self {
        PrototypeBank {
            momentum,
            margin,
            prototypes,
        }
    }

    pub fn slots(&self) -> usize {
        self.prototypes.len()
    }

    pub fn get(&self, slot: usize) -> Option<&[f64]> {
        self.prototypes.get(slot)?.as_deref()
    }

    pub fn set(&mut self, slot: usize, v: Vec<f64>) {
        self.prototypes[slot] = Some(v);
    }

    pub fn widen(&mut self, new_classes: usize) {
        self.prototypes
            .extend(core::iter::repeat_n(None, new_classes));
    }

    pub fn known_prototypes(&self) -> impl Iterator<Item = &[f64]> {
        self.prototypes.iter().skip(1).filter_map(|p| p.as_deref())
    }
}

/// EMA-update every prototype whose queue is nonempty. An uninitialized
/// prototype is seeded with its queue mean.
pub fn update_prototypes(store: &QueryStore, bank: &mut PrototypeBank) {
    let mu = bank.momentum;
    for slot in 0..bank.prototypes.len().min(store.slots()) {
        let Some(mean) = store.mean(slot) else { continue };
        match &mut bank.prototypes[slot] {
            Some(p) => {
                for (pi, mi) in p.iter_mut().zip(&mean) {
                    *pi = mu * *pi + (1.0 - mu) * mi;
                }
            }
            slot_ref @ None => *slot_ref = Some(mean),
        }
    }
}

/// Hinge-embedding contrastive loss of query `q` labeled `class_slot`.
///
/// Returns the loss and its gradient with respect to `q`; prototypes are
/// treated as constants.
pub fn contrastive_loss(q: &[f64], class_slot: usize, bank: &PrototypeBank) -> Result<(f64, Vec<f64>)> {
    if class_slot >= bank.slots() {
        return Err(input(alloc::format!("class slot {class_slot} not in bank")));
    }
    let mut loss = 0.0;
    let mut grad = vec![0.0; q.len()];
    for (i, p) in bank.prototypes.iter().enumerate() {
        let Some(p) = p else { continue };
        let d = l2_distance(q, p);
        if i == class_slot {
            loss += d;
            if d > 0.0 {
                for ((g, a), b) in grad.iter_mut().zip(q).zip(p) {
                    *g += (a - b) / d;
                }
            }
        } else if d < bank.margin {
            loss += bank.margin - d;
            if d > 0.0 {
                for ((g, a), b) in grad.iter_mut().zip(q).zip(p) {
                    *g -= (a - b) / d;
                }
            }
        }
    }
    Ok((loss, grad))
}

/// Shift and scale of the reachability sigmoid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PcCalibration {
    pub shift: f64,
    pub scale: f64,
}

impl PcCalibration {
    /// Correction probability `sigma((gamma - shift) / scale)`.
    pub fn unknown_given_object(&self, gamma: f64) -> f64 {
        sigmoid((gamma - self.shift) / self.scale)
    }
}

/// Solve `sigma(-a/b) = 0.05` and `sigma((margin/2 - a)/b) = 0.95`.
///
/// `sigma(x) = 0.95` at `x = ln 19`, so the two constraints are symmetric
/// around the midpoint `margin/4`, giving `a = margin/4`, `b = margin / (4 ln 19)`.
pub fn calibrate_pc(margin: f64) -> Result<PcCalibration> {
    if !(margin > 0.0) || !margin.is_finite() {
        return Err(input("margin must be positive and finite"));
    }
    Ok(PcCalibration {
        shift: margin / 4.0,
        scale: margin / (4.0 * ln(19.0)),
    })
}

/// Distance from `q` to the nearest known-class prototype.
pub fn reachability(q: &[f64], bank: &PrototypeBank) -> Result<f64> {
    bank.known_prototypes()
        .map(|p| l2_distance(q, p))
        .fold(None, |acc: Option<f64>, d| Some(acc.map_or(d, |a| a.min(d))))
        .ok_or_else(|| Error::State("no known-class prototypes in the bank".into()))
}

/// Corrected distribution over `{unknown} ∪ known`.
///
/// `probs` is the class-head output with layout `[unknown, known.., no-object]`;
/// the returned vector has the no-object entry dropped and sums to 1.
pub fn correct_probabilities(
    probs: &[f64],
    gamma: f64,
    cal: &PcCalibration,
    mode: UnionMode,
) -> Vec<f64> {
    let k = probs.len() - 2;
    let p_unknown = probs[0];
    let known = &probs[1..=k];
    let known_sum: f64 = known.iter().sum();
    let p_obj = (1.0 - known_sum).clamp(0.0, 1.0);
    let p_corr = cal.unknown_given_object(gamma) * p_obj;
    if known_sum <= 0.0 {
        let mut out = vec![0.0; k + 1];
        out[0] = 1.0;
        return out;
    }
    let p0 = match mode {
        UnionMode::NoisyOr => p_unknown + p_corr - p_unknown * p_corr,
        UnionMode::Max => p_unknown.max(p_corr),
    };
    renormalize_known(known, p0)
}

/// `[p_unknown, known_c / sum(known) * (1 - p_unknown) ..]`.
pub fn renormalize_known(known: &[f64], p_unknown: f64) -> Vec<f64> {
    let known_sum: f64 = known.iter().sum();
    let rest = 1.0 - p_unknown;
    let mut out = Vec::with_capacity(known.len() + 1);
    out.push(p_unknown);
    out.extend(known.iter().map(|&p| p / known_sum * rest));
    out
}
