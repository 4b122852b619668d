//! Open-world evaluation: per-class AP / mAP, U-Recall, WI and A-OSE.

pub mod oracle;

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scene::{iou_bits, ClassId, Label, Mask, Scene};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    /// AP is averaged over these IoU thresholds (`[0.5]` gives mAP@0.5).
    pub map_thresholds: Vec<f64>,
    pub wi_confidence: f64,
    pub wi_iou: f64,
    pub unknown_iou: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            map_thresholds: vec![0.5],
            wi_confidence: 0.5,
            wi_iou: 0.5,
            unknown_iou: 0.5,
        }
    }
}

impl EvalConfig {
    /// Thresholds 0.5, 0.55, .., 0.95.
    pub fn coco_thresholds() -> Vec<f64> {
        (0..10).map(|i| 0.5 + 0.05 * i as f64).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |t: f64| t > 0.0 && t <= 1.0;
        if self.map_thresholds.is_empty() || !self.map_thresholds.iter().all(|&t| ok(t)) {
            return Err(Error::Config("eval.map_thresholds must be nonempty and in (0, 1]".into()));
        }
        if !ok(self.wi_iou) || !ok(self.unknown_iou) || !(0.0..=1.0).contains(&self.wi_confidence) {
            return Err(Error::Config("eval thresholds must be in (0, 1]".into()));
        }
        Ok(())
    }
}

/// One predicted instance.
#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    /// `Unknown` or a known class.
    pub label: Label,
    pub confidence: f64,
    pub mask: Mask,
}

/// Outcome of matching ranked predictions to ground truth.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MatchOutcome {
    /// Prediction indices in descending confidence order.
    pub order: Vec<usize>,
    /// TP flag per rank (aligned with `order`).
    pub tp: Vec<bool>,
    /// For each GT, the matched prediction index.
    pub gt_match: Vec<Option<usize>>,
}

impl MatchOutcome {
    pub fn n_matched(&self) -> usize {
        self.gt_match.iter().filter(|m| m.is_some()).count()
    }
}

/// Descending confidence, ties by index.
pub fn rank_by_confidence(conf: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..conf.len()).collect();
    order.sort_by(|&a, &b| conf[b].total_cmp(&conf[a]).then(a.cmp(&b)));
    order
}

/// Match predictions to GT one-to-one in descending confidence.
///
/// Each prediction in turn is a TP if it can join the current matching,
/// allowing already matched predictions to move to another GT they also
/// overlap at the threshold. When every prediction overlaps at most one
/// GT this is the usual greedy rule; in general it yields the largest TP
/// count, preferring higher-ranked predictions.
pub fn match_predictions(conf: &[f64], pred_masks: &[&Mask], gt_masks: &[&Mask], iou_thr: f64) -> MatchOutcome {
    let order = rank_by_confidence(conf);
    let edges: Vec<Vec<usize>> = order
        .iter()
        .map(|&p| {
            (0..gt_masks.len())
                .filter(|&g| iou_bits(pred_masks[p].bits(), gt_masks[g].bits()) >= iou_thr)
                .collect()
        })
        .collect();
    let mut owner: Vec<Option<usize>> = vec![None; gt_masks.len()];
    let mut tp = Vec::with_capacity(order.len());
    for r in 0..order.len() {
        let mut seen = vec![false; gt_masks.len()];
        tp.push(augment(r, &edges, &mut owner, &mut seen));
    }
    let gt_match = owner.iter().map(|o| o.map(|r| order[r])).collect();
    MatchOutcome { order, tp, gt_match }
}

fn augment(r: usize, edges: &[Vec<usize>], owner: &mut [Option<usize>], seen: &mut [bool]) -> bool {
    for &g in &edges[r] {
        if seen[g] {
            continue;
        }
        seen[g] = true;
        let free = match owner[g] {
            None => true,
            Some(o) => augment(o, edges, owner, seen),
        };
        if free {
            owner[g] = Some(r);
            return true;
        }
    }
    false
}

/// All-point interpolated AP of TP flags in rank order; `None` without GT.
pub fn average_precision(tp: &[bool], n_gt: usize) -> Option<f64> {
    if n_gt == 0 {
        return None;
    }
    let mut prec = Vec::with_capacity(tp.len());
    let mut hits = 0usize;
    for (k, &t) in tp.iter().enumerate() {
        if t {
            hits += 1;
        }
        prec.push(hits as f64 / (k + 1) as f64);
    }
    for k in (0..prec.len().saturating_sub(1)).rev() {
        prec[k] = prec[k].max(prec[k + 1]);
    }
    let sum: f64 = tp.iter().zip(&prec).filter(|(t, _)| **t).map(|(_, p)| p).sum();
    Some(sum / n_gt as f64)
}

/// Fraction of unknown GT recovered by unknown-labeled predictions.
pub fn u_recall(unknown_preds: &[(f64, &Mask)], unknown_gt: &[&Mask], iou_thr: f64) -> Option<f64> {
    if unknown_gt.is_empty() {
        return None;
    }
    let (conf, masks): (Vec<f64>, Vec<&Mask>) = unknown_preds.iter().copied().unzip();
    let m = match_predictions(&conf, &masks, unknown_gt, iou_thr);
    Some(m.n_matched() as f64 / unknown_gt.len() as f64)
}

/// Unknown GT matched one-to-one by known-labeled predictions.
pub fn a_ose(known_preds: &[(f64, &Mask)], unknown_gt: &[&Mask], iou_thr: f64) -> usize {
    let (conf, masks): (Vec<f64>, Vec<&Mask>) = known_preds.iter().copied().unzip();
    match_predictions(&conf, &masks, unknown_gt, iou_thr).n_matched()
}

/// `P_K / P_{K∪U} - 1`, zero when there is no true positive.
pub fn wilderness_impact(tp: usize, fp: usize, fp_unknown: usize) -> f64 {
    if tp == 0 {
        return 0.0;
    }
    let p_k = tp as f64 / (tp + fp) as f64;
    let p_ku = tp as f64 / (tp + fp + fp_unknown) as f64;
    p_k / p_ku - 1.0
}

/// WI counts for one scene.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct WiCounts {
    pub tp: usize,
    pub fp: usize,
    pub fp_unknown: usize,
}

/// Known-labeled predictions at or above `wi_confidence` are matched per
/// class to known GT; the leftovers are matched to unknown GT (FP_u) and
/// the rest are FP.
pub fn wi_counts(dets: &[Detection], gt: &[(Label, &Mask)], cfg: &EvalConfig) -> WiCounts {
    let confident: Vec<&Detection> = dets
        .iter()
        .filter(|d| d.label.class().is_some() && d.confidence >= cfg.wi_confidence)
        .collect();
    let mut c = WiCounts::default();
    let mut leftovers: Vec<usize> = Vec::new();
    for class in classes_of(confident.iter().map(|d| d.label)) {
        let idx: Vec<usize> = (0..confident.len()).filter(|&i| confident[i].label == class).collect();
        let gts: Vec<&Mask> = gt.iter().filter(|(l, _)| *l == class).map(|(_, m)| *m).collect();
        let conf: Vec<f64> = idx.iter().map(|&i| confident[i].confidence).collect();
        let masks: Vec<&Mask> = idx.iter().map(|&i| &confident[i].mask).collect();
        let m = match_predictions(&conf, &masks, &gts, cfg.wi_iou);
        for (r, &p) in m.order.iter().enumerate() {
            if m.tp[r] {
                c.tp += 1;
            } else {
                leftovers.push(idx[p]);
            }
        }
    }
    leftovers.sort_unstable();
    let unknown_gt: Vec<&Mask> = gt.iter().filter(|(l, _)| *l == Label::Unknown).map(|(_, m)| *m).collect();
    let pairs: Vec<(f64, &Mask)> = leftovers
        .iter()
        .map(|&i| (confident[i].confidence, &confident[i].mask))
        .collect();
    c.fp_unknown = a_ose(&pairs, &unknown_gt, cfg.wi_iou);
    c.fp = leftovers.len() - c.fp_unknown;
    c
}

fn classes_of(labels: impl Iterator<Item = Label>) -> Vec<Label> {
    let mut v: Vec<Label> = labels.collect();
    v.sort_by_key(|l| l.to_code());
    v.dedup();
    v
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ClassStats {
    pub ap: Option<f64>,
    pub n_gt: usize,
    pub tp: usize,
    pub fp: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub map_prev: Option<f64>,
    pub map_curr: Option<f64>,
    pub map_all: Option<f64>,
    pub u_recall: Option<f64>,
    pub wi: f64,
    pub a_ose: u64,
    pub per_class: BTreeMap<ClassId, ClassStats>,
}

/// Mean of the defined APs of `classes`.
pub fn mean_ap(per_class: &BTreeMap<ClassId, ClassStats>, classes: &[ClassId]) -> Option<f64> {
    let aps: Vec<f64> = classes
        .iter()
        .filter_map(|c| per_class.get(c).and_then(|s| s.ap))
        .collect();
    (!aps.is_empty()).then(|| aps.iter().sum::<f64>() / aps.len() as f64)
}

/// Ground truth of a relabeled evaluation scene: `(label, mask)` without ignored instances.
pub fn scene_gt(scene: &Scene) -> Vec<(Label, &Mask)> {
    scene
        .instances
        .iter()
        .filter(|i| i.label != Label::Ignore)
        .map(|i| (i.label, &i.mask))
        .collect()
}

/// Evaluate detections over a dataset.
///
/// `scenes` pairs each evaluation-relabeled scene (future classes marked
/// unknown) with its detections. `prev` and `curr` are the previously and
/// currently known class ids.
pub fn evaluate(
    scenes: &[(&Scene, Vec<Detection>)],
    prev: &[ClassId],
    curr: &[ClassId],
    cfg: &EvalConfig,
) -> Result<EvalReport> {
    cfg.validate()?;
    let known: Vec<ClassId> = prev.iter().chain(curr).copied().collect();
    let mut per_class = BTreeMap::new();
    for &class in &known {
        let label = Label::Class(class);
        let mut ap_sum = 0.0;
        let mut stats = ClassStats::default();
        let mut defined = true;
        for (ti, &thr) in cfg.map_thresholds.iter().enumerate() {
            // (confidence, scene, rank) -> tp
            let mut ranked: Vec<(f64, usize, usize, bool)> = Vec::new();
            let mut n_gt = 0;
            for (si, (scene, dets)) in scenes.iter().enumerate() {
                let gts: Vec<&Mask> = scene_gt(scene)
                    .into_iter()
                    .filter(|(l, _)| *l == label)
                    .map(|(_, m)| m)
                    .collect();
                n_gt += gts.len();
                let preds: Vec<&Detection> = dets.iter().filter(|d| d.label == label).collect();
                let conf: Vec<f64> = preds.iter().map(|d| d.confidence).collect();
                let masks: Vec<&Mask> = preds.iter().map(|d| &d.mask).collect();
                let m = match_predictions(&conf, &masks, &gts, thr);
                for (r, &p) in m.order.iter().enumerate() {
                    ranked.push((conf[p], si, r, m.tp[r]));
                }
            }
            ranked.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
            let flags: Vec<bool> = ranked.iter().map(|x| x.3).collect();
            if ti == 0 {
                stats.n_gt = n_gt;
                stats.tp = flags.iter().filter(|&&t| t).count();
                stats.fp = flags.len() - stats.tp;
            }
            match average_precision(&flags, n_gt) {
                Some(ap) => ap_sum += ap,
                None => defined = false,
            }
        }
        stats.ap = defined.then(|| ap_sum / cfg.map_thresholds.len() as f64);
        if stats.n_gt > 0 || stats.tp + stats.fp > 0 {
            per_class.insert(class, stats);
        }
    }

    let mut unknown_total = 0usize;
    let mut unknown_hit = 0usize;
    let mut a_ose_total = 0u64;
    let mut wi = WiCounts::default();
    for (scene, dets) in scenes {
        let gt = scene_gt(scene);
        let unknown_gt: Vec<&Mask> = gt.iter().filter(|(l, _)| *l == Label::Unknown).map(|(_, m)| *m).collect();
        let unk: Vec<(f64, &Mask)> = dets
            .iter()
            .filter(|d| d.label == Label::Unknown)
            .map(|d| (d.confidence, &d.mask))
            .collect();
        let kn: Vec<(f64, &Mask)> = dets
            .iter()
            .filter(|d| d.label.class().is_some())
            .map(|d| (d.confidence, &d.mask))
            .collect();
        unknown_total += unknown_gt.len();
        let (conf, masks): (Vec<f64>, Vec<&Mask>) = unk.into_iter().unzip();
        unknown_hit += match_predictions(&conf, &masks, &unknown_gt, cfg.unknown_iou).n_matched();
        a_ose_total += a_ose(&kn, &unknown_gt, cfg.unknown_iou) as u64;
        let c = wi_counts(dets, &gt, cfg);
        wi.tp += c.tp;
        wi.fp += c.fp;
        wi.fp_unknown += c.fp_unknown;
    }

    Ok(EvalReport {
        map_prev: mean_ap(&per_class, prev),
        map_curr: mean_ap(&per_class, curr),
        map_all: mean_ap(&per_class, &known),
        u_recall: (unknown_total > 0).then(|| unknown_hit as f64 / unknown_total as f64),
        wi: wilderness_impact(wi.tp, wi.fp, wi.fp_unknown),
        a_ose: a_ose_total,
        per_class,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(bits: &[u8]) -> Mask {
        Mask::new(bits.iter().map(|&b| b == 1).collect())
    }

    #[test]
    fn ap_examples() {
        assert_eq!(average_precision(&[true, true], 2), Some(1.0));
        assert_eq!(average_precision(&[false, false], 2), Some(0.0));
        let ap = average_precision(&[true, false, true], 2).unwrap();
        assert!((ap - 5.0 / 6.0).abs() < 1e-15);
        assert_eq!(average_precision(&[true], 0), None);
        assert_eq!(average_precision(&[], 3), Some(0.0));
    }

    #[test]
    fn matching_examples() {
        let g = m(&[1, 1, 0, 0]);
        let out = match_predictions(&[0.9], &[&g], &[&g], 0.5);
        assert_eq!(out.tp, vec![true]);
        assert_eq!(out.gt_match, vec![Some(0)]);
        let out = match_predictions(&[0.3, 0.8], &[&g, &g], &[&g], 0.5);
        assert_eq!(out.order, vec![1, 0]);
        assert_eq!(out.tp, vec![true, false]);
        assert_eq!(out.gt_match, vec![Some(1)]);
    }

    #[test]
    fn tie_case_reassigns() {
        // Prediction 0 overlaps both GTs at IoU exactly 0.5; prediction 1 only GT 0.
        let g0 = m(&[1, 0, 0, 0]);
        let g1 = m(&[0, 1, 0, 0]);
        let p0 = m(&[1, 1, 0, 0]);
        let p1 = m(&[1, 0, 0, 0]);
        let out = match_predictions(&[0.9, 0.8], &[&p0, &p1], &[&g0, &g1], 0.5);
        assert_eq!(out.tp, vec![true, true]);
    }

    #[test]
    fn recall_and_aose_examples() {
        let gts: Vec<Mask> = (0..4)
            .map(|i| Mask::new((0..8).map(|v| v / 2 == i).collect()))
            .collect();
        let refs: Vec<&Mask> = gts.iter().collect();
        let preds: Vec<(f64, &Mask)> = gts[..3].iter().map(|g| (0.6, g)).collect();
        assert_eq!(u_recall(&preds, &refs, 0.5), Some(0.75));
        let all: Vec<(f64, &Mask)> = gts.iter().map(|g| (0.6, g)).collect();
        assert_eq!(u_recall(&all, &refs, 0.5), Some(1.0));
        assert_eq!(u_recall(&[], &refs, 0.5), Some(0.0));
        assert_eq!(u_recall(&all, &[], 0.5), None);
        assert_eq!(a_ose(&preds[..2], &refs[..3], 0.5), 2);
        assert_eq!(a_ose(&[], &refs, 0.5), 0);
    }

    #[test]
    fn wi_examples() {
        assert!((wilderness_impact(8, 2, 2) - 0.2).abs() < 1e-12);
        assert_eq!(wilderness_impact(5, 1, 0), 0.0);
        assert_eq!(wilderness_impact(0, 0, 3), 0.0);
    }

    #[test]
    fn wi_counts_split_fp() {
        let known = m(&[1, 1, 0, 0, 0, 0]);
        let unknown = m(&[0, 0, 1, 1, 0, 0]);
        let nothing = m(&[0, 0, 0, 0, 1, 1]);
        let det = |mask: &Mask, conf| Detection {
            label: Label::Class(1),
            confidence: conf,
            mask: mask.clone(),
        };
        let dets = vec![det(&known, 0.9), det(&unknown, 0.8), det(&nothing, 0.7), det(&unknown, 0.3)];
        let gt = vec![(Label::Class(1), &known), (Label::Unknown, &unknown)];
        let c = wi_counts(&dets, &gt, &EvalConfig::default());
        assert_eq!(
            c,
            WiCounts {
                tp: 1,
                fp: 1,
                fp_unknown: 1
            }
        );
    }
}
