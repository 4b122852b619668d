//! Unknown-object pseudo-labels from the model's own predictions.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scene::{binarize_unchecked, iou_bits, Instance, Label, Mask};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum SelectionMode {
    /// Keep every candidate scoring at least `tau`.
    #[default]
    #[serde(rename = "ct", alias = "threshold")]
    Threshold,
    /// Keep the `k` best candidates.
    #[serde(rename = "top-k", alias = "topk", alias = "top_k")]
    TopK,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AutoLabelConfig {
    pub mode: SelectionMode,
    pub tau: f64,
    pub k: usize,
    pub iou_gate: f64,
}

impl Default for AutoLabelConfig {
    fn default() -> Self {
        AutoLabelConfig {
            mode: SelectionMode::Threshold,
            tau: 0.7,
            k: 5,
            iou_gate: 0.5,
        }
    }
}

impl AutoLabelConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0 && self.tau < 1.0) {
            return Err(Error::Config("autolabel.tau must be in (0, 1)".into()));
        }
        if self.k == 0 {
            return Err(Error::Config("autolabel.k must be at least 1".into()));
        }
        if !(self.iou_gate > 0.0 && self.iou_gate <= 1.0) {
            return Err(Error::Config("autolabel.iou_gate must be in (0, 1]".into()));
        }
        Ok(())
    }
}

/// Largest foreground probability (unknown + known, no-object excluded).
pub fn class_confidence(probs: &[f64]) -> f64 {
    probs[..probs.len() - 1].iter().copied().fold(0.0, f64::max)
}

/// Mean heatmap value over voxels above 0.5; `None` if there are none.
pub fn mask_mean(heat: &[f64]) -> Option<f64> {
    let (s, n) = heat
        .iter()
        .filter(|&&m| m > 0.5)
        .fold((0.0, 0usize), |(s, n), &m| (s + m, n + 1));
    (n > 0).then(|| s / n as f64)
}

/// Class confidence times the mean heatmap value inside the binarized mask.
pub fn objectness_score(probs: &[f64], heat: &[f64]) -> f64 {
    mask_mean(heat).map_or(0.0, |m| class_confidence(probs) * m)
}

/// Indices to keep given scores and each candidate's best IoU with a known target.
pub fn select_indices(scores: &[f64], max_iou: &[f64], cfg: &AutoLabelConfig) -> Vec<usize> {
    let mut cand: Vec<usize> = (0..scores.len())
        .filter(|&j| max_iou[j] < cfg.iou_gate && scores[j] > 0.0)
        .collect();
    match cfg.mode {
        SelectionMode::Threshold => cand.retain(|&j| scores[j] >= cfg.tau),
        SelectionMode::TopK => {
            cand.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
            cand.truncate(cfg.k);
            cand.sort_unstable();
        }
    }
    cand
}

#[derive(Debug, Clone, PartialEq)]
pub struct PseudoLabel {
    pub query: usize,
    pub score: f64,
    pub mask: Mask,
}

impl PseudoLabel {
    pub fn into_instance(self) -> Instance {
        Instance {
            mask: self.mask,
            label: Label::Unknown,
        }
    }
}

/// Pseudo-label unknown objects among `(probs, heatmap)` predictions.
///
/// Candidates whose binarized mask overlaps a known target at IoU
/// `>= iou_gate` are dropped, then the configured selection rule applies.
pub fn select_pseudo_labels<'a>(
    preds: impl IntoIterator<Item = (&'a [f64], &'a [f64])>,
    known: &[&Mask],
    cfg: &AutoLabelConfig,
) -> Vec<PseudoLabel> {
    let mut masks = Vec::new();
    let mut scores = Vec::new();
    let mut max_iou = Vec::new();
    for (probs, heat) in preds {
        let mask = binarize_unchecked(heat);
        let iou = known
            .iter()
            .map(|k| iou_bits(mask.bits(), k.bits()))
            .fold(0.0, f64::max);
        scores.push(objectness_score(probs, heat));
        max_iou.push(iou);
        masks.push(mask);
    }
    select_indices(&scores, &max_iou, cfg)
        .into_iter()
        .map(|j| PseudoLabel {
            query: j,
            score: scores[j],
            mask: core::mem::replace(&mut masks[j], Mask::empty(0)),
        })
        .collect()
}
