//! Task progression: which classes are known, relabeling, exemplar replay.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;
use crate::scene::{ClassId, Label, Scene};
use crate::segmenter::ModelParams;
use crate::splits::TaskSplit;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ReplayConfig {
    pub exemplars_per_class: usize,
    pub seed: u64,
    /// Fine-tuning epochs as a fraction of the main-phase epochs.
    pub epoch_fraction: f64,
}

impl Default for ReplayConfig {
    fn default() -> Self {
        ReplayConfig {
            exemplars_per_class: 40,
            seed: 0,
            epoch_fraction: 0.25,
        }
    }
}

impl ReplayConfig {
    pub fn validate(&self) -> Result<()> {
        if self.exemplars_per_class == 0 {
            return Err(Error::Config("replay.exemplars_per_class must be positive".into()));
        }
        if !(self.epoch_fraction >= 0.0) || !self.epoch_fraction.is_finite() {
            return Err(Error::Config("replay.epoch_fraction must be >= 0".into()));
        }
        Ok(())
    }
}

/// Retained instances: class id -> `(scene id, instance index)`.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ExemplarSet {
    pub per_class: BTreeMap<ClassId, Vec<(String, usize)>>,
}

impl ExemplarSet {
    pub fn len(&self) -> usize {
        self.per_class.values().map(|v| v.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Scene ids referenced by any exemplar, sorted.
    pub fn scene_ids(&self) -> Vec<&str> {
        let mut ids: Vec<&str> = self
            .per_class
            .values()
            .flatten()
            .map(|(s, _)| s.as_str())
            .collect();
        ids.sort_unstable();
        ids.dedup();
        ids
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    /// Learn the classes introduced by the current task.
    Main,
    /// Exemplar fine-tuning: previous and current classes are supervised.
    Replay,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskState {
    pub task: usize,
    pub split: TaskSplit,
    #[serde(default)]
    pub exemplars: ExemplarSet,
}

impl TaskState {
    pub fn new(split: TaskSplit, task: usize) -> Result<Self> {
        if task >= split.tasks.len() {
            return Err(Error::State(format!(
                "task {} out of range for a {}-task split",
                task + 1,
                split.tasks.len()
            )));
        }
        Ok(TaskState {
            task,
            split,
            exemplars: ExemplarSet::default(),
        })
    }

    pub fn previous(&self) -> Vec<ClassId> {
        self.split.tasks[..self.task].concat()
    }

    pub fn current(&self) -> &[ClassId] {
        &self.split.tasks[self.task]
    }

    pub fn future(&self) -> Vec<ClassId> {
        self.split.tasks[self.task + 1..].concat()
    }

    /// Previous followed by current classes; this is the class-head order.
    pub fn known(&self) -> Vec<ClassId> {
        self.split.known_through(self.task)
    }

    pub fn n_known(&self) -> usize {
        self.split.tasks[..=self.task].iter().map(|t| t.len()).sum()
    }

    pub fn is_final(&self) -> bool {
        self.task + 1 == self.split.tasks.len()
    }

    /// Class-head index of a known class (1-based; 0 is unknown).
    pub fn head_index(&self, class: ClassId) -> Option<usize> {
        self.split.tasks[..=self.task]
            .iter()
            .flatten()
            .position(|&c| c == class)
            .map(|i| i + 1)
    }

    /// Inverse of [`TaskState::head_index`], with 0 mapping to unknown.
    pub fn label_of_head(&self, index: usize) -> Label {
        if index == 0 {
            return Label::Unknown;
        }
        match self.split.tasks[..=self.task].iter().flatten().nth(index - 1) {
            Some(&c) => Label::Class(c),
            None => Label::Ignore,
        }
    }
}

/// Keep labels of supervised classes; everything else becomes `Ignore`.
pub fn relabel_for_training(scene: &Scene, state: &TaskState, phase: Phase) -> Scene {
    let prev = state.previous();
    let keep = |c: ClassId| state.current().contains(&c) || (phase == Phase::Replay && prev.contains(&c));
    let mut out = scene.clone();
    for inst in &mut out.instances {
        inst.label = match inst.label {
            Label::Class(c) if keep(c) => Label::Class(c),
            _ => Label::Ignore,
        };
    }
    out
}

/// Known classes keep labels; future-task classes become unknown.
pub fn relabel_for_eval(scene: &Scene, state: &TaskState) -> Scene {
    let future = state.future();
    let mut out = scene.clone();
    for inst in &mut out.instances {
        if let Label::Class(c) = inst.label {
            if future.contains(&c) {
                inst.label = Label::Unknown;
            }
        }
    }
    out
}

/// Sample up to `exemplars_per_class` instances of each previously known
/// class. Returns the set and one warning per class without instances.
pub fn select_exemplars(scenes: &[Scene], state: &TaskState, cfg: &ReplayConfig) -> Result<(ExemplarSet, Vec<String>)> {
    cfg.validate()?;
    let prev = state.previous();
    if prev.is_empty() {
        return Err(Error::State("no previously known classes to replay".into()));
    }
    let mut pool: BTreeMap<ClassId, Vec<(String, usize)>> = prev.iter().map(|&c| (c, Vec::new())).collect();
    for s in scenes {
        for (i, inst) in s.instances.iter().enumerate() {
            if let Some(list) = inst.label.class().and_then(|c| pool.get_mut(&c)) {
                list.push((s.id.clone(), i));
            }
        }
    }
    let mut r = rng::stream(cfg.seed, rng::streams::EXEMPLARS);
    let mut set = ExemplarSet::default();
    let mut warnings = Vec::new();
    for (c, mut list) in pool {
        if list.is_empty() {
            warnings.push(format!("class {c} has no instances; no exemplars kept"));
            continue;
        }
        list.shuffle(&mut r);
        list.truncate(cfg.exemplars_per_class);
        list.sort();
        set.per_class.insert(c, list);
    }
    Ok((set, warnings))
}

/// Scenes holding at least one exemplar, relabeled for replay fine-tuning.
pub fn replay_scenes(scenes: &[Scene], state: &TaskState) -> Vec<Scene> {
    let ids = state.exemplars.scene_ids();
    scenes
        .iter()
        .filter(|s| ids.binary_search(&s.id.as_str()).is_ok())
        .map(|s| relabel_for_training(s, state, Phase::Replay))
        .collect()
}

/// Move to the next task, adding zero rows to the class head.
pub fn advance_task(params: &ModelParams, state: &TaskState) -> Result<(ModelParams, TaskState)> {
    if state.is_final() {
        return Err(Error::State("already at the final task".into()));
    }
    let mut next = state.clone();
    next.task += 1;
    let mut p = params.clone();
    p.widen(next.current().len());
    Ok((p, next))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::{Instance, Mask, Voxel};
    use crate::splits::Provenance;
    use alloc::vec;
    use alloc::vec::Vec;

    fn split() -> TaskSplit {
        TaskSplit {
            tasks: vec![vec![1, 2], vec![3], vec![4, 5]],
            provenance: Provenance::Random,
        }
    }

    fn scene(id: &str, labels: &[u32]) -> Scene {
        let n = labels.len();
        let voxels = (0..n)
            .map(|i| Voxel {
                pos: [i as i32, 0, 0],
                rgb: [0.5; 3],
            })
            .collect();
        let instances = labels
            .iter()
            .enumerate()
            .map(|(i, &c)| Instance {
                mask: Mask::from_indices(n, &[i]).unwrap(),
                label: Label::Class(c),
            })
            .collect();
        Scene::new(id, voxels, instances, None).unwrap()
    }

    fn supervised(s: &Scene) -> Vec<Label> {
        s.instances
            .iter()
            .map(|i| i.label)
            .filter(|l| *l != Label::Ignore)
            .collect()
    }

    #[test]
    fn training_relabel() {
        let s = scene("a", &[1, 4]);
        let t1 = TaskState::new(split(), 0).unwrap();
        let r = relabel_for_training(&s, &t1, Phase::Main);
        assert_eq!(supervised(&r), vec![Label::Class(1)]);
        for (a, b) in s.instances.iter().zip(&r.instances) {
            assert_eq!(a.mask, b.mask);
        }
        let t2 = TaskState::new(split(), 1).unwrap();
        let s = scene("b", &[1, 3]);
        assert_eq!(supervised(&relabel_for_training(&s, &t2, Phase::Main)), vec![Label::Class(3)]);
        assert_eq!(
            supervised(&relabel_for_training(&s, &t2, Phase::Replay)),
            vec![Label::Class(1), Label::Class(3)]
        );
        let empty = TaskState::new(
            TaskSplit {
                tasks: vec![vec![1], vec![], vec![2]],
                provenance: Provenance::Random,
            },
            1,
        )
        .unwrap();
        assert!(supervised(&relabel_for_training(&scene("c", &[1, 2]), &empty, Phase::Main)).is_empty());
    }

    #[test]
    fn eval_relabel() {
        let s = scene("a", &[1, 3, 5]);
        let t1 = TaskState::new(split(), 0).unwrap();
        let labels: Vec<_> = relabel_for_eval(&s, &t1).instances.iter().map(|i| i.label).collect();
        assert_eq!(labels, vec![Label::Class(1), Label::Unknown, Label::Unknown]);
        let t3 = TaskState::new(split(), 2).unwrap();
        assert!(relabel_for_eval(&s, &t3)
            .instances
            .iter()
            .all(|i| i.label != Label::Unknown));
    }

    #[test]
    fn head_indices() {
        let t2 = TaskState::new(split(), 1).unwrap();
        assert_eq!(t2.head_index(1), Some(1));
        assert_eq!(t2.head_index(3), Some(3));
        assert_eq!(t2.head_index(4), None);
        assert_eq!(t2.label_of_head(0), Label::Unknown);
        assert_eq!(t2.label_of_head(3), Label::Class(3));
    }

    #[test]
    fn exemplar_caps() {
        let mut scenes = Vec::new();
        for i in 0..100 {
            scenes.push(scene(&format!("s{i:03}"), &[1, 2, 3]));
        }
        let st = TaskState::new(
            TaskSplit {
                tasks: vec![vec![1, 2, 3], vec![4], vec![5]],
                provenance: Provenance::Random,
            },
            1,
        )
        .unwrap();
        let cfg = ReplayConfig::default();
        let (a, w) = select_exemplars(&scenes, &st, &cfg).unwrap();
        assert_eq!(a.len(), 120);
        assert!(w.is_empty());
        assert_eq!(a, select_exemplars(&scenes, &st, &cfg).unwrap().0);

        let few: Vec<Scene> = scenes[..10].to_vec();
        let (b, _) = select_exemplars(&few, &st, &cfg).unwrap();
        assert_eq!(b.per_class[&1].len(), 10);

        let t1 = TaskState::new(split(), 0).unwrap();
        assert!(select_exemplars(&scenes, &t1, &cfg).is_err());
    }

    #[test]
    fn missing_class_warns() {
        let st = TaskState::new(split(), 1).unwrap();
        let (set, w) = select_exemplars(&[scene("a", &[1])], &st, &ReplayConfig::default()).unwrap();
        assert_eq!(set.len(), 1);
        assert_eq!(w.len(), 1);
    }
}
