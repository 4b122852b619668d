//! Splitting a class catalog into an ordered sequence of tasks.

mod bundled;

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{input, Result, ValidationError};
use crate::rng;
use crate::scene::{ClassCatalog, ClassId, Scene};

pub const N_TASKS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Provenance {
    #[serde(rename = "freq")]
    Frequency,
    #[serde(rename = "region")]
    Region,
    #[serde(rename = "random")]
    Random,
    #[serde(rename = "bundled-A")]
    BundledA,
    #[serde(rename = "bundled-B")]
    BundledB,
    #[serde(rename = "bundled-C")]
    BundledC,
}

impl Provenance {
    pub fn as_str(self) -> &'static str {
        match self {
            Provenance::Frequency => "freq",
            Provenance::Region => "region",
            Provenance::Random => "random",
            Provenance::BundledA => "bundled-A",
            Provenance::BundledB => "bundled-B",
            Provenance::BundledC => "bundled-C",
        }
    }
}

/// Ordered class sets; task `t` introduces `tasks[t]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskSplit {
    pub tasks: Vec<Vec<ClassId>>,
    pub provenance: Provenance,
}

impl TaskSplit {
    /// Check that the tasks are a disjoint cover of the catalog.
    pub fn validate(&self, catalog: &ClassCatalog) -> core::result::Result<(), ValidationError> {
        let mut seen = BTreeMap::new();
        for (t, task) in self.tasks.iter().enumerate() {
            for &c in task {
                if !catalog.contains(c) {
                    return Err(ValidationError::Split(format!("task {} has class {c} not in the catalog", t + 1)));
                }
                if let Some(prev) = seen.insert(c, t) {
                    return Err(ValidationError::Split(format!(
                        "class {c} appears in tasks {} and {}",
                        prev + 1,
                        t + 1
                    )));
                }
            }
        }
        if let Some(c) = catalog.ids().find(|c| !seen.contains_key(c)) {
            return Err(ValidationError::Split(format!("class {c} is not assigned to any task")));
        }
        Ok(())
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.tasks.iter().map(|t| t.len()).collect()
    }

    /// Classes of tasks `0..=task`.
    pub fn known_through(&self, task: usize) -> Vec<ClassId> {
        self.tasks.iter().take(task + 1).flatten().copied().collect()
    }

    /// Task index that introduces `class`.
    pub fn task_of(&self, class: ClassId) -> Option<usize> {
        self.tasks.iter().position(|t| t.contains(&class))
    }
}

fn check_sizes(catalog: &ClassCatalog, sizes: &[usize; N_TASKS]) -> Result<()> {
    let total: usize = sizes.iter().sum();
    if total != catalog.len() {
        return Err(input(format!(
            "task sizes sum to {total} but the catalog has {} classes",
            catalog.len()
        )));
    }
    Ok(())
}

/// Sort by descending instance count (ties by id) and slice contiguously.
pub fn split_frequency(catalog: &ClassCatalog, sizes: [usize; N_TASKS]) -> Result<TaskSplit> {
    check_sizes(catalog, &sizes)?;
    let mut order: Vec<(u64, ClassId)> = catalog.classes().iter().map(|c| (c.count, c.id)).collect();
    order.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
    let mut it = order.into_iter().map(|(_, id)| id);
    let tasks = sizes.iter().map(|&n| it.by_ref().take(n).collect()).collect();
    Ok(TaskSplit {
        tasks,
        provenance: Provenance::Frequency,
    })
}

/// Per scene-type class occurrence counts plus pairwise set IoU.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneTypeMatrix {
    /// `class_counts[t]` maps class id to its instance count in type `t`.
    pub class_counts: Vec<BTreeMap<ClassId, u64>>,
    pub similarity: Vec<Vec<f64>>,
}

impl SceneTypeMatrix {
    pub fn n_types(&self) -> usize {
        self.class_counts.len()
    }

    pub fn class_set(&self, t: usize) -> Vec<ClassId> {
        self.class_counts[t].keys().copied().collect()
    }

    /// Count instances per scene type; untagged scenes are skipped.
    pub fn from_scenes<'a>(scenes: impl IntoIterator<Item = &'a Scene>) -> Result<Self> {
        let mut per_type: BTreeMap<u32, BTreeMap<ClassId, u64>> = BTreeMap::new();
        for s in scenes {
            let Some(t) = s.scene_type else { continue };
            let counts = per_type.entry(t).or_default();
            for inst in &s.instances {
                if let Some(c) = inst.label.class() {
                    *counts.entry(c).or_default() += 1;
                }
            }
        }
        Self::from_counts(per_type.into_values().collect())
    }

    pub fn from_counts(class_counts: Vec<BTreeMap<ClassId, u64>>) -> Result<Self> {
        let sets: Vec<Vec<ClassId>> = class_counts.iter().map(|m| m.keys().copied().collect()).collect();
        let similarity = scene_type_similarity(&sets)?.similarity;
        Ok(SceneTypeMatrix {
            class_counts,
            similarity,
        })
    }
}

fn set_iou(a: &[ClassId], b: &[ClassId]) -> f64 {
    let inter = a.iter().filter(|c| b.contains(c)).count();
    let union = a.len() + b.len() - inter;
    inter as f64 / union as f64
}

/// Pairwise intersection-over-union of per-type class sets.
pub fn scene_type_similarity(sets: &[Vec<ClassId>]) -> Result<SceneTypeMatrix> {
    let mut norm = Vec::with_capacity(sets.len());
    for (i, s) in sets.iter().enumerate() {
        if s.is_empty() {
            return Err(input(format!("scene type {i} has no classes")));
        }
        let mut s = s.clone();
        s.sort_unstable();
        s.dedup();
        norm.push(s);
    }
    let n = norm.len();
    let mut sim = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            sim[i][j] = if i == j { 1.0 } else { set_iou(&norm[i], &norm[j]) };
        }
    }
    let class_counts = norm
        .iter()
        .map(|s| s.iter().map(|&c| (c, 1)).collect())
        .collect();
    Ok(SceneTypeMatrix {
        class_counts,
        similarity: sim,
    })
}

/// Result of a region split; `warnings` lists size targets that were missed.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionSplit {
    pub split: TaskSplit,
    /// Scene types grouped into each task.
    pub groups: Vec<Vec<usize>>,
    pub warnings: Vec<String>,
}

/// Group scene types into three tasks and send each class to the task of
/// the scene type where it occurs most.
///
/// Types start as singleton clusters. While more than three remain, the pair
/// with the highest average-linkage similarity is merged, restricted to
/// merges that stay within the largest target size when any such merge
/// exists. The three groups are then matched to tasks by the permutation
/// with the smallest total size error.
pub fn split_region(
    catalog: &ClassCatalog,
    matrix: &SceneTypeMatrix,
    sizes: [usize; N_TASKS],
    tolerance: f64,
) -> Result<RegionSplit> {
    check_sizes(catalog, &sizes)?;
    let n_types = matrix.n_types();
    if n_types < N_TASKS {
        return Err(input(format!("need at least {N_TASKS} scene types, got {n_types}")));
    }

    // Home type per class; classes never observed go to the type with the fewest classes.
    let mut home: BTreeMap<ClassId, usize> = BTreeMap::new();
    for c in catalog.ids() {
        let best = (0..n_types)
            .filter_map(|t| matrix.class_counts[t].get(&c).map(|&k| (k, t)))
            .max_by(|a, b| a.0.cmp(&b.0).then(b.1.cmp(&a.1)));
        if let Some((_, t)) = best {
            home.insert(c, t);
        }
    }
    let mut type_size = vec![0usize; n_types];
    for &t in home.values() {
        type_size[t] += 1;
    }
    for c in catalog.ids() {
        if let alloc::collections::btree_map::Entry::Vacant(e) = home.entry(c) {
            let t = (0..n_types).min_by_key(|&t| (type_size[t], t)).unwrap_or(0);
            type_size[t] += 1;
            e.insert(t);
        }
    }

    let cap = *sizes.iter().max().unwrap_or(&0);
    let mut clusters: Vec<Vec<usize>> = (0..n_types).map(|t| vec![t]).collect();
    let size_of = |cl: &[usize]| cl.iter().map(|&t| type_size[t]).sum::<usize>();
    while clusters.len() > N_TASKS {
        let mut best: Option<(bool, f64, usize, usize, usize)> = None;
        for a in 0..clusters.len() {
            for b in a + 1..clusters.len() {
                let mut s = 0.0;
                for &i in &clusters[a] {
                    for &j in &clusters[b] {
                        s += matrix.similarity[i][j];
                    }
                }
                s /= (clusters[a].len() * clusters[b].len()) as f64;
                let merged = size_of(&clusters[a]) + size_of(&clusters[b]);
                let fits = merged <= cap;
                let better = match best {
                    None => true,
                    Some((bf, bs, bm, _, _)) => {
                        (fits, s) > (bf, bs) || (fits == bf && s == bs && merged < bm)
                    }
                };
                if better {
                    best = Some((fits, s, merged, a, b));
                }
            }
        }
        let (_, _, _, a, b) = best.expect("at least two clusters");
        let moved = clusters.remove(b);
        clusters[a].extend(moved);
        clusters[a].sort_unstable();
    }

    let group_sizes: Vec<usize> = clusters.iter().map(|c| size_of(c)).collect();
    let perms = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];
    let perm = perms
        .iter()
        .min_by_key(|p| {
            p.iter()
                .enumerate()
                .map(|(task, &g)| group_sizes[g].abs_diff(sizes[task]))
                .sum::<usize>()
        })
        .expect("nonempty");

    let mut tasks = vec![Vec::new(); N_TASKS];
    let mut groups = vec![Vec::new(); N_TASKS];
    for (task, &g) in perm.iter().enumerate() {
        groups[task] = clusters[g].clone();
        for (&c, &t) in &home {
            if clusters[g].contains(&t) {
                tasks[task].push(c);
            }
        }
    }
    let mut warnings = Vec::new();
    for (t, task) in tasks.iter().enumerate() {
        let slack = libm::ceil(tolerance * sizes[t] as f64) as usize;
        if task.len().abs_diff(sizes[t]) > slack {
            warnings.push(format!(
                "task {} has {} classes, target {}",
                t + 1,
                task.len(),
                sizes[t]
            ));
        }
    }
    Ok(RegionSplit {
        split: TaskSplit {
            tasks,
            provenance: Provenance::Region,
        },
        groups,
        warnings,
    })
}

/// Seeded shuffle then consecutive blocks of `size`. Classes beyond
/// `3 * size` are appended to the last task so the split stays a cover.
pub fn split_random(catalog: &ClassCatalog, size: usize, seed: u64) -> Result<TaskSplit> {
    if size == 0 || N_TASKS * size > catalog.len() {
        return Err(input(format!(
            "{N_TASKS} tasks of {size} classes do not fit in {} classes",
            catalog.len()
        )));
    }
    let mut ids: Vec<ClassId> = catalog.ids().collect();
    let mut r = rng::stream(seed, rng::streams::SPLIT_RANDOM);
    ids.shuffle(&mut r);
    let mut tasks: Vec<Vec<ClassId>> = ids.chunks(size).take(N_TASKS).map(|c| c.to_vec()).collect();
    tasks[N_TASKS - 1].extend_from_slice(&ids[N_TASKS * size..]);
    Ok(TaskSplit {
        tasks,
        provenance: Provenance::Random,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BundledSplit {
    A,
    B,
    C,
}

impl BundledSplit {
    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "A" | "a" | "bundled-A" => Ok(BundledSplit::A),
            "B" | "b" | "bundled-B" => Ok(BundledSplit::B),
            "C" | "c" | "bundled-C" => Ok(BundledSplit::C),
            _ => Err(input(format!("unknown bundled split {name:?}"))),
        }
    }

    /// Class names per task, verbatim.
    pub fn names(self) -> [&'static [&'static str]; N_TASKS] {
        match self {
            BundledSplit::A => bundled::SPLIT_A,
            BundledSplit::B => bundled::SPLIT_B,
            BundledSplit::C => bundled::SPLIT_C,
        }
    }

    pub fn provenance(self) -> Provenance {
        match self {
            BundledSplit::A => Provenance::BundledA,
            BundledSplit::B => Provenance::BundledB,
            BundledSplit::C => Provenance::BundledC,
        }
    }
}

/// The 198 classes covered by the bundled splits, in split-A task order,
/// with ids `1..=198` and zero counts.
pub fn bundled_catalog() -> ClassCatalog {
    let names: Vec<&str> = bundled::SPLIT_A.iter().flat_map(|t| t.iter().copied()).collect();
    ClassCatalog::from_names(&names).expect("bundled names are unique")
}

/// Resolve a bundled split against `catalog` by class name.
pub fn load_bundled(which: BundledSplit, catalog: &ClassCatalog) -> Result<TaskSplit> {
    let mut tasks = Vec::with_capacity(N_TASKS);
    for names in which.names() {
        let mut ids = Vec::with_capacity(names.len());
        for name in names {
            let id = catalog
                .id_of(name)
                .ok_or_else(|| input(format!("bundled class {name:?} is not in the catalog")))?;
            ids.push(id);
        }
        tasks.push(ids);
    }
    let split = TaskSplit {
        tasks,
        provenance: which.provenance(),
    };
    split.validate(catalog)?;
    Ok(split)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::ClassEntry;

    fn counted(counts: &[u64]) -> ClassCatalog {
        ClassCatalog::new(
            counts
                .iter()
                .enumerate()
                .map(|(i, &count)| ClassEntry {
                    id: i as u32 + 1,
                    name: format!("c{}", i + 1),
                    count,
                })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn frequency_examples() {
        let s = split_frequency(&counted(&[100, 50, 30, 10, 5, 1]), [2, 2, 2]).unwrap();
        assert_eq!(s.tasks, vec![vec![1, 2], vec![3, 4], vec![5, 6]]);
        let s = split_frequency(&counted(&[7; 6]), [1, 2, 3]).unwrap();
        assert_eq!(s.tasks, vec![vec![1], vec![2, 3], vec![4, 5, 6]]);
        let s = split_frequency(&counted(&[1, 5, 5, 9]), [1, 2, 1]).unwrap();
        assert_eq!(s.tasks, vec![vec![4], vec![2, 3], vec![1]]);
        assert!(split_frequency(&counted(&[1, 2, 3]), [1, 1, 2]).is_err());
    }

    #[test]
    fn similarity_examples() {
        let m = scene_type_similarity(&[vec![1, 2], vec![2, 3], vec![1, 2], vec![4]]).unwrap();
        assert!((m.similarity[0][1] - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(m.similarity[0][2], 1.0);
        assert_eq!(m.similarity[0][3], 0.0);
        assert_eq!(m.similarity[1][1], 1.0);
        assert!(scene_type_similarity(&[vec![1], vec![]]).is_err());
    }

    #[test]
    fn identical_types_share_a_task() {
        let cat = counted(&[1; 6]);
        let mut counts: Vec<BTreeMap<ClassId, u64>> = vec![
            [(1, 3), (2, 3)].into(),
            [(1, 2), (2, 2)].into(),
            [(3, 4), (4, 4)].into(),
            [(5, 4), (6, 4)].into(),
        ];
        counts[1].insert(1, 1);
        let m = SceneTypeMatrix::from_counts(counts).unwrap();
        let r = split_region(&cat, &m, [2, 2, 2], 0.0).unwrap();
        r.split.validate(&cat).unwrap();
        let g = r.groups.iter().find(|g| g.contains(&0)).unwrap();
        assert!(g.contains(&1));
        assert!(r.warnings.is_empty());
    }

    #[test]
    fn random_split() {
        let cat = counted(&[1; 20]);
        let a = split_random(&cat, 6, 3).unwrap();
        assert_eq!(a, split_random(&cat, 6, 3).unwrap());
        a.validate(&cat).unwrap();
        assert_eq!(a.sizes(), vec![6, 6, 8]);
        assert!(split_random(&cat, 7, 3).is_err());
    }

    #[test]
    fn bundled_tables() {
        let cat = bundled_catalog();
        assert_eq!(cat.len(), 198);
        for (which, sizes) in [
            (BundledSplit::A, [64, 68, 66]),
            (BundledSplit::B, [73, 55, 70]),
            (BundledSplit::C, [66, 66, 66]),
        ] {
            let s = load_bundled(which, &cat).unwrap();
            assert_eq!(s.sizes(), sizes.to_vec());
        }
        let a = load_bundled(BundledSplit::A, &cat).unwrap();
        assert!(a.tasks[0].contains(&cat.id_of("tv stand").unwrap()));
        assert!(a.tasks[2].contains(&cat.id_of("paper").unwrap()));
        assert!(BundledSplit::parse("D").is_err());
    }
}
