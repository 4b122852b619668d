//! Exhaustive reference implementation of the evaluation metrics.
//!
//! Matchings are found by enumerating every one-to-one assignment of
//! predictions to ground truth, keeping the one with the most true
//! positives and, among those, the lexicographically best TP pattern in
//! confidence order. Only meant for tiny scenes.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use super::{scene_gt, ClassStats, Detection, EvalConfig, EvalReport};
use crate::error::{input, Result};
use crate::scene::{mask_iou, ClassId, Label, Mask, Scene};

/// Largest prediction or GT count the oracle accepts per matching problem.
pub const MAX_ITEMS: usize = 8;

/// TP flags in descending-confidence order (ties by index) and the match count.
pub fn best_matching(conf: &[f64], preds: &[&Mask], gts: &[&Mask], thr: f64) -> Result<(Vec<bool>, usize)> {
    if preds.len() > MAX_ITEMS || gts.len() > MAX_ITEMS {
        return Err(input("oracle problem too large"));
    }
    let mut order: Vec<usize> = (0..preds.len()).collect();
    // Insertion sort keeps the tie rule explicit.
    for i in 1..order.len() {
        let mut j = i;
        while j > 0 && conf[order[j]] > conf[order[j - 1]] {
            order.swap(j, j - 1);
            j -= 1;
        }
    }
    let mut ok = vec![vec![false; gts.len()]; preds.len()];
    for (r, &p) in order.iter().enumerate() {
        for (g, gt) in gts.iter().enumerate() {
            ok[r][g] = mask_iou(preds[p], gt)? >= thr;
        }
    }
    let mut best = vec![false; preds.len()];
    let mut best_n = 0;
    let mut cur = vec![false; preds.len()];
    let mut used = vec![false; gts.len()];
    search(0, 0, &ok, &mut used, &mut cur, &mut best, &mut best_n);
    Ok((best, best_n))
}

fn search(
    r: usize,
    n: usize,
    ok: &[Vec<bool>],
    used: &mut [bool],
    cur: &mut [bool],
    best: &mut Vec<bool>,
    best_n: &mut usize,
) {
    if r == ok.len() {
        if n > *best_n || (n == *best_n && &cur[..] > &best[..]) {
            *best_n = n;
            best.copy_from_slice(cur);
        }
        return;
    }
    for g in 0..used.len() {
        if ok[r][g] && !used[g] {
            used[g] = true;
            cur[r] = true;
            search(r + 1, n + 1, ok, used, cur, best, best_n);
            cur[r] = false;
            used[g] = false;
        }
    }
    search(r + 1, n, ok, used, cur, best, best_n);
}

/// AP with interpolated precision `max_{j >= k} precision(j)` computed directly.
pub fn average_precision(tp: &[bool], n_gt: usize) -> Option<f64> {
    if n_gt == 0 {
        return None;
    }
    let prec: Vec<f64> = (0..tp.len())
        .map(|k| tp[..=k].iter().filter(|&&t| t).count() as f64 / (k + 1) as f64)
        .collect();
    let mut sum = 0.0;
    for k in 0..tp.len() {
        if tp[k] {
            sum += prec[k..].iter().copied().fold(0.0, f64::max);
        }
    }
    Some(sum / n_gt as f64)
}

/// Exhaustive counterpart of [`super::evaluate`].
pub fn evaluate(
    scenes: &[(&Scene, Vec<Detection>)],
    prev: &[ClassId],
    curr: &[ClassId],
    cfg: &EvalConfig,
) -> Result<EvalReport> {
    let known: Vec<ClassId> = prev.iter().chain(curr).copied().collect();
    let mut per_class = BTreeMap::new();
    for &class in &known {
        let label = Label::Class(class);
        let mut stats = ClassStats::default();
        let mut aps = Vec::new();
        for (ti, &thr) in cfg.map_thresholds.iter().enumerate() {
            let mut rows: Vec<(f64, usize, usize, bool)> = Vec::new();
            let mut n_gt = 0;
            for (si, (scene, dets)) in scenes.iter().enumerate() {
                let gts: Vec<&Mask> = scene_gt(scene).into_iter().filter(|(l, _)| *l == label).map(|(_, m)| m).collect();
                n_gt += gts.len();
                let idx: Vec<usize> = (0..dets.len()).filter(|&i| dets[i].label == label).collect();
                let conf: Vec<f64> = idx.iter().map(|&i| dets[i].confidence).collect();
                let masks: Vec<&Mask> = idx.iter().map(|&i| &dets[i].mask).collect();
                let (flags, _) = best_matching(&conf, &masks, &gts, thr)?;
                let mut sorted: Vec<usize> = (0..idx.len()).collect();
                sorted.sort_by(|&a, &b| conf[b].partial_cmp(&conf[a]).unwrap().then(a.cmp(&b)));
                for (r, &k) in sorted.iter().enumerate() {
                    rows.push((conf[k], si, idx[k], flags[r]));
                }
            }
            rows.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then((a.1, a.2).cmp(&(b.1, b.2))));
            let flags: Vec<bool> = rows.iter().map(|r| r.3).collect();
            if ti == 0 {
                stats.n_gt = n_gt;
                stats.tp = flags.iter().filter(|&&t| t).count();
                stats.fp = flags.len() - stats.tp;
            }
            aps.push(average_precision(&flags, n_gt));
        }
        stats.ap = if aps.iter().all(|a| a.is_some()) {
            Some(aps.iter().map(|a| a.unwrap()).sum::<f64>() / aps.len() as f64)
        } else {
            None
        };
        if stats.n_gt > 0 || stats.tp + stats.fp > 0 {
            per_class.insert(class, stats);
        }
    }

    let mean = |classes: &[ClassId]| -> Option<f64> {
        let v: Vec<f64> = classes.iter().filter_map(|c| per_class.get(c).and_then(|s: &ClassStats| s.ap)).collect();
        if v.is_empty() {
            None
        } else {
            Some(v.iter().sum::<f64>() / v.len() as f64)
        }
    };

    let (mut n_unknown, mut hit, mut aose) = (0usize, 0usize, 0u64);
    let (mut tp, mut fp, mut fpu) = (0usize, 0usize, 0usize);
    for (scene, dets) in scenes {
        let gt = scene_gt(scene);
        let ugt: Vec<&Mask> = gt.iter().filter(|(l, _)| *l == Label::Unknown).map(|(_, m)| *m).collect();
        n_unknown += ugt.len();

        let pick = |f: &dyn Fn(&Detection) -> bool| -> (Vec<f64>, Vec<&Mask>) {
            dets.iter().filter(|d| f(d)).map(|d| (d.confidence, &d.mask)).unzip()
        };
        let (c, m) = pick(&|d| d.label == Label::Unknown);
        hit += best_matching(&c, &m, &ugt, cfg.unknown_iou)?.1;
        let (c, m) = pick(&|d| d.label.class().is_some());
        aose += best_matching(&c, &m, &ugt, cfg.unknown_iou)?.1 as u64;

        // WI: confident known-labeled detections, in original index order.
        let conf_idx: Vec<usize> = (0..dets.len())
            .filter(|&i| dets[i].label.class().is_some() && dets[i].confidence >= cfg.wi_confidence)
            .collect();
        let mut left = Vec::new();
        let mut labels: Vec<Label> = conf_idx.iter().map(|&i| dets[i].label).collect();
        labels.sort_by_key(|l| l.to_code());
        labels.dedup();
        for label in labels {
            let idx: Vec<usize> = conf_idx.iter().copied().filter(|&i| dets[i].label == label).collect();
            let gts: Vec<&Mask> = gt.iter().filter(|(l, _)| *l == label).map(|(_, m)| *m).collect();
            let conf: Vec<f64> = idx.iter().map(|&i| dets[i].confidence).collect();
            let masks: Vec<&Mask> = idx.iter().map(|&i| &dets[i].mask).collect();
            let (flags, n) = best_matching(&conf, &masks, &gts, cfg.wi_iou)?;
            tp += n;
            let mut sorted: Vec<usize> = (0..idx.len()).collect();
            sorted.sort_by(|&a, &b| conf[b].partial_cmp(&conf[a]).unwrap().then(a.cmp(&b)));
            for (r, &k) in sorted.iter().enumerate() {
                if !flags[r] {
                    left.push(idx[k]);
                }
            }
        }
        left.sort_unstable();
        let conf: Vec<f64> = left.iter().map(|&i| dets[i].confidence).collect();
        let masks: Vec<&Mask> = left.iter().map(|&i| &dets[i].mask).collect();
        let (_, u) = best_matching(&conf, &masks, &ugt, cfg.wi_iou)?;
        fpu += u;
        fp += left.len() - u;
    }

    let wi = if tp == 0 {
        0.0
    } else {
        let p_k = tp as f64 / (tp + fp) as f64;
        let p_ku = tp as f64 / (tp + fp + fpu) as f64;
        p_k / p_ku - 1.0
    };
    Ok(EvalReport {
        map_prev: mean(prev),
        map_curr: mean(curr),
        map_all: mean(&known),
        u_recall: (n_unknown > 0).then(|| hit as f64 / n_unknown as f64),
        wi,
        a_ose: aose,
        per_class,
    })
}
