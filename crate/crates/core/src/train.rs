//! Training and inference for one open-world learner.

use alloc::vec::Vec;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::assignment::{assign_targets, MatchWeights, Target};
use crate::autolabel::{mask_mean, select_pseudo_labels, AutoLabelConfig};
use crate::error::{Error, Result};
use crate::incremental::{advance_task, relabel_for_eval, relabel_for_training, Phase, ReplayConfig, TaskState};
use crate::metrics::{evaluate, Detection, EvalConfig, EvalReport};
use crate::openworld::{
    calibrate_pc, correct_probabilities, reachability, store_labeled_queries, update_prototypes,
    OpenWorldConfig, PrototypeBank, QueryStore,
};
use crate::rng;
use crate::scene::{binarize_unchecked, Label, Scene};
use crate::segmenter::{
    backward, forward, training_loss, Contrastive, LossParts, LossWeights, ModelConfig, ModelParams, Optimizer,
    OptimizerConfig,
};
use crate::splits::TaskSplit;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub optimizer: OptimizerConfig,
    pub loss: LossWeights,
    /// Generate unknown pseudo-labels during training.
    pub pseudo_labels: bool,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 30,
            optimizer: OptimizerConfig::default(),
            loss: LossWeights::default(),
            pseudo_labels: true,
            seed: 0,
        }
    }
}

/// Every tunable of a run, grouped the way the config file is.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct Config {
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub autolabel: AutoLabelConfig,
    pub ow: OpenWorldConfig,
    pub assign: MatchWeights,
    pub replay: ReplayConfig,
    pub eval: EvalConfig,
}

impl Config {
    pub fn validate(&self) -> Result<()> {
        self.autolabel.validate()?;
        self.ow.validate()?;
        self.replay.validate()?;
        self.eval.validate()?;
        let m = &self.model;
        if m.hidden == 0 || m.dim == 0 || m.queries == 0 || !(m.coord_scale > 0.0) {
            return Err(Error::Config("model sizes must be positive".into()));
        }
        let o = &self.train.optimizer;
        if !(o.lr >= 0.0) || !(0.0..1.0).contains(&o.momentum) || !(o.clip_norm >= 0.0) {
            return Err(Error::Config("optimizer lr >= 0, momentum in [0, 1), clip_norm >= 0".into()));
        }
        Ok(())
    }

    /// Same config with every seed replaced.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.model.seed = seed;
        self.train.seed = seed;
        self.replay.seed = seed;
        self
    }
}

/// Model plus everything that evolves with it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Learner {
    pub params: ModelParams,
    pub bank: PrototypeBank,
    pub store: QueryStore,
    pub state: TaskState,
    pub steps: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct StepLog {
    pub loss: LossParts,
    pub known_targets: usize,
    pub pseudo_labels: usize,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub mean_loss: f64,
    pub pseudo_labels: usize,
}

impl Learner {
    /// Fresh learner at `task` of `split`.
    pub fn new(cfg: &Config, split: TaskSplit, task: usize) -> Result<Self> {
        cfg.validate()?;
        let state = TaskState::new(split, task)?;
        let k = state.n_known();
        Ok(Learner {
            params: ModelParams::init(&cfg.model, k),
            bank: PrototypeBank::new(k, cfg.ow.ema_momentum, cfg.ow.delta),
            store: QueryStore::new(k, cfg.ow.store_capacity),
            state,
            steps: 0,
        })
    }

    /// Widen the head, bank and store for the next task.
    pub fn advance(&mut self) -> Result<()> {
        let (params, state) = advance_task(&self.params, &self.state)?;
        let n_new = state.current().len();
        self.params = params;
        self.state = state;
        self.bank.widen(n_new);
        self.store.widen(n_new);
        Ok(())
    }

    /// Supervision targets for a training-relabeled scene.
    pub fn known_targets(&self, scene: &Scene) -> Vec<Target> {
        scene
            .instances
            .iter()
            .filter_map(|inst| match inst.label {
                Label::Class(c) => self.state.head_index(c).map(|class_index| Target {
                    mask: inst.mask.clone(),
                    class_index,
                }),
                _ => None,
            })
            .collect()
    }

    /// One optimization step on a training-relabeled scene.
    pub fn step(&mut self, scene: &Scene, cfg: &Config, opt: &mut Optimizer) -> Result<StepLog> {
        let pass = forward(&self.params, scene)?;
        let mut targets = self.known_targets(scene);
        let n_known = targets.len();
        let mut n_pseudo = 0;
        if cfg.train.pseudo_labels {
            let known_masks: Vec<_> = targets.iter().map(|t| &t.mask).collect();
            let mut pseudo = select_pseudo_labels(pass.prob_heat_pairs(), &known_masks, &cfg.autolabel);
            let room = self.params.n_queries.saturating_sub(n_known);
            if pseudo.len() > room {
                pseudo.sort_by(|a, b| b.score.total_cmp(&a.score).then(a.query.cmp(&b.query)));
                pseudo.truncate(room);
            }
            n_pseudo = pseudo.len();
            targets.extend(pseudo.into_iter().map(|p| Target {
                mask: p.mask,
                class_index: 0,
            }));
        }
        let matching = assign_targets(pass.prob_heat_pairs(), self.params.n_queries, &targets, &cfg.assign)?;
        let contrastive = (cfg.ow.contrastive_weight > 0.0).then_some(Contrastive {
            bank: &self.bank,
            weight: cfg.ow.contrastive_weight,
        });
        let (loss, out) = training_loss(&pass, &targets, &matching, &cfg.train.loss, contrastive)?;

        store_labeled_queries(
            &mut self.store,
            matching.pairs.iter().map(|&(j, t)| (targets[t].class_index, pass.query(j))),
        )?;
        self.steps += 1;
        if self.steps % cfg.ow.proto_update_every as u64 == 0 {
            update_prototypes(&self.store, &mut self.bank);
        }

        let mut grad = self.params.zeros_like();
        backward(&self.params, &pass, &out, &mut grad);
        opt.step(&mut self.params, &grad);
        if !self.params.is_finite() {
            return Err(Error::Numeric("parameters became non-finite".into()));
        }
        Ok(StepLog {
            loss,
            known_targets: n_known,
            pseudo_labels: n_pseudo,
        })
    }

    /// Train for `epochs` over `scenes` (raw labels; relabeled per `phase`).
    ///
    /// On a numeric failure the learner is rolled back to the end of the
    /// last completed epoch and the error is returned.
    pub fn train(&mut self, scenes: &[Scene], phase: Phase, epochs: usize, cfg: &Config) -> Result<Vec<EpochLog>> {
        let relabeled: Vec<Scene> = scenes
            .iter()
            .map(|s| relabel_for_training(s, &self.state, phase))
            .collect();
        let stream = rng::streams::EPOCH_ORDER + ((self.state.task as u64) << 8) + (phase == Phase::Replay) as u64;
        let mut order_rng = rng::stream(cfg.train.seed, stream);
        let mut opt = Optimizer::new(cfg.train.optimizer, &self.params);
        let mut logs = Vec::with_capacity(epochs);
        let mut order: Vec<usize> = (0..relabeled.len()).collect();
        for epoch in 0..epochs {
            let good = self.clone();
            order.shuffle(&mut order_rng);
            let mut total = 0.0;
            let mut pseudo = 0;
            for &i in &order {
                match self.step(&relabeled[i], cfg, &mut opt) {
                    Ok(log) => {
                        total += log.loss.total();
                        pseudo += log.pseudo_labels;
                    }
                    Err(e @ Error::Numeric(_)) => {
                        *self = good;
                        return Err(e);
                    }
                    Err(e) => return Err(e),
                }
            }
            logs.push(EpochLog {
                epoch,
                mean_loss: total / relabeled.len().max(1) as f64,
                pseudo_labels: pseudo,
            });
        }
        Ok(logs)
    }

    /// Detections for one scene: one per query with a nonempty mask.
    ///
    /// Without correction the label is the arg-max over unknown and known
    /// outputs. With correction the distribution is first corrected using
    /// the distance to the nearest known prototype. Confidence is the label
    /// probability (times the object probability `1 - p(no-object)` when
    /// corrected) times the mean heatmap value inside the mask.
    pub fn detect(&self, scene: &Scene, correction: Option<&OpenWorldConfig>) -> Result<Vec<Detection>> {
        let pass = forward(&self.params, scene)?;
        let cal = correction.map(|c| calibrate_pc(c.delta)).transpose()?;
        let mut out = Vec::new();
        for j in 0..pass.n_queries {
            let heat = pass.heat(j);
            let Some(mean) = mask_mean(heat) else { continue };
            let probs = pass.probs(j);
            let k = probs.len() - 2;
            let (index, p) = match (correction, &cal) {
                (Some(c), Some(cal)) => {
                    let gamma = reachability(pass.query(j), &self.bank).map_err(|_| {
                        Error::State(alloc::format!(
                            "probability correction needs known-class prototypes, which first appear after {} training steps; train longer or disable correction",
                            c.proto_update_every
                        ))
                    })?;
                    let corrected = correct_probabilities(probs, gamma, cal, c.union_mode);
                    let (i, p) = argmax(&corrected);
                    (i, p * (1.0 - probs[k + 1]))
                }
                _ => argmax(&probs[..=k]),
            };
            out.push(Detection {
                label: self.state.label_of_head(index),
                confidence: (p * mean).clamp(0.0, 1.0),
                mask: binarize_unchecked(heat),
            });
        }
        Ok(out)
    }

    /// Evaluate on raw-labeled scenes (relabeled for the current task here).
    pub fn evaluate(&self, scenes: &[Scene], correction: Option<&OpenWorldConfig>, cfg: &EvalConfig) -> Result<EvalReport> {
        let relabeled: Vec<Scene> = scenes.iter().map(|s| relabel_for_eval(s, &self.state)).collect();
        let mut pairs = Vec::with_capacity(scenes.len());
        for s in &relabeled {
            pairs.push((s, self.detect(s, correction)?));
        }
        evaluate(&pairs, &self.state.previous(), self.state.current(), cfg)
    }
}

fn argmax(v: &[f64]) -> (usize, f64) {
    let mut best = (0, v[0]);
    for (i, &x) in v.iter().enumerate().skip(1) {
        if x > best.1 {
            best = (i, x);
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::segmenter::OptimizerKind;
    use crate::splits::Provenance;
    use crate::synthgen::{generate, GenConfig};
    use alloc::vec;

    fn tiny() -> (Vec<Scene>, TaskSplit, Config) {
        let data = generate(&GenConfig {
            scenes: 4,
            grid: 14,
            classes: 6,
            instances: (2, 3),
            seed: 3,
            ..Default::default()
        })
        .unwrap();
        let split = TaskSplit {
            tasks: vec![vec![1, 2], vec![3, 4], vec![5, 6]],
            provenance: Provenance::Random,
        };
        let mut cfg = Config::default();
        cfg.model = ModelConfig {
            hidden: 8,
            dim: 6,
            queries: 8,
            rounds: 1,
            coord_scale: 14.0,
            query_init_std: 1.0,
            seed: 1,
        };
        cfg.ow.proto_update_every = 2;
        (data.scenes, split, cfg)
    }

    #[test]
    fn lr_zero_keeps_params() {
        let (scenes, split, mut cfg) = tiny();
        cfg.train.optimizer.lr = 0.0;
        let mut l = Learner::new(&cfg, split, 0).unwrap();
        let before = l.params.clone();
        l.train(&scenes, Phase::Main, 1, &cfg).unwrap();
        assert_eq!(l.params, before);
    }

    #[test]
    fn deterministic_training() {
        let (scenes, split, cfg) = tiny();
        let run = || {
            let mut l = Learner::new(&cfg, split.clone(), 0).unwrap();
            l.train(&scenes, Phase::Main, 2, &cfg).unwrap();
            l
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn advance_widens_everything() {
        let (_, split, cfg) = tiny();
        let mut l = Learner::new(&cfg, split, 0).unwrap();
        let before = l.params.num_params();
        l.advance().unwrap();
        assert_eq!(l.params.num_params() - before, (cfg.model.dim + 1) * 2);
        assert_eq!(l.bank.slots(), 5);
        assert_eq!(l.store.slots(), 5);
        l.advance().unwrap();
        assert!(matches!(l.advance(), Err(Error::State(_))));
    }

    #[test]
    fn loss_decreases_on_one_scene() {
        let (scenes, split, mut cfg) = tiny();
        cfg.train.pseudo_labels = false;
        cfg.ow.contrastive_weight = 0.0;
        cfg.train.optimizer.kind = OptimizerKind::Momentum;
        cfg.train.optimizer.lr = 0.002;
        cfg.train.optimizer.momentum = 0.0;
        let mut l = Learner::new(&cfg, split, 0).unwrap();
        let scene = relabel_for_training(&scenes[0], &l.state, Phase::Main);
        let mut opt = Optimizer::new(cfg.train.optimizer, &l.params);
        let losses: Vec<f64> = (0..6).map(|_| l.step(&scene, &cfg, &mut opt).unwrap().loss.total()).collect();
        for w in losses.windows(2) {
            assert!(w[1] <= w[0] + 1e-12, "{losses:?}");
        }
    }

    #[test]
    fn detections_are_well_formed() {
        let (scenes, split, cfg) = tiny();
        let mut l = Learner::new(&cfg, split, 0).unwrap();
        l.train(&scenes, Phase::Main, 2, &cfg).unwrap();
        for d in l.detect(&scenes[0], None).unwrap() {
            assert!((0.0..=1.0).contains(&d.confidence));
            assert!(d.mask.count() > 0);
            assert!(matches!(d.label, Label::Unknown | Label::Class(1) | Label::Class(2)));
        }
    }
}
