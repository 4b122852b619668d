//! Scenes, instances and masks.

use alloc::collections::BTreeSet;
use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{input, Result, ValidationError};

/// Semantic class id. Catalog ids start at 1; 0 is reserved for "unknown".
pub type ClassId = u32;

/// Label attached to a ground-truth or pseudo instance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Label {
    /// Label `0`: an object outside the known set.
    Unknown,
    Class(ClassId),
    /// Excluded from supervision for the current task.
    Ignore,
}

impl Label {
    /// Integer encoding used in files: `0` unknown, `-1` ignore, `>0` class.
    pub fn to_code(self) -> i64 {
        match self {
            Label::Unknown => 0,
            Label::Class(c) => c as i64,
            Label::Ignore => -1,
        }
    }

    pub fn from_code(code: i64) -> Result<Self> {
        match code {
            0 => Ok(Label::Unknown),
            -1 => Ok(Label::Ignore),
            c if c > 0 && c <= u32::MAX as i64 => Ok(Label::Class(c as u32)),
            c => Err(input(alloc::format!("invalid label code {c}"))),
        }
    }

    pub fn class(self) -> Option<ClassId> {
        match self {
            Label::Class(c) => Some(c),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Voxel {
    pub pos: [i32; 3],
    pub rgb: [f64; 3],
}

/// Binary mask over the voxels of one scene.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct Mask(Vec<bool>);

impl Mask {
    pub fn new(bits: Vec<bool>) -> Self {
        Mask(bits)
    }

    pub fn empty(n: usize) -> Self {
        Mask(alloc::vec![false; n])
    }

    /// Build from a list of set indices. Indices must be `< n`.
    pub fn from_indices(n: usize, indices: &[usize]) -> Result<Self> {
        let mut bits = alloc::vec![false; n];
        for &i in indices {
            if i >= n {
                return Err(input(alloc::format!("mask index {i} out of range for {n} voxels")));
            }
            bits[i] = true;
        }
        Ok(Mask(bits))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn bits(&self) -> &[bool] {
        &self.0
    }

    pub fn get(&self, i: usize) -> bool {
        self.0[i]
    }

    pub fn count(&self) -> usize {
        self.0.iter().filter(|&&b| b).count()
    }

    pub fn none(&self) -> bool {
        !self.0.iter().any(|&b| b)
    }

    /// Sorted indices of set voxels.
    pub fn indices(&self) -> Vec<usize> {
        self.0
            .iter()
            .enumerate()
            .filter_map(|(i, &b)| b.then_some(i))
            .collect()
    }

    pub fn as_f64(&self) -> Vec<f64> {
        self.0.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub mask: Mask,
    pub label: Label,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub id: String,
    pub voxels: Vec<Voxel>,
    pub instances: Vec<Instance>,
    /// Optional scene-type tag (region-based splits).
    pub scene_type: Option<u32>,
}

impl Scene {
    /// Construct and validate.
    pub fn new(
        id: impl Into<String>,
        voxels: Vec<Voxel>,
        instances: Vec<Instance>,
        scene_type: Option<u32>,
    ) -> Result<Self> {
        let scene = Scene {
            id: id.into(),
            voxels,
            instances,
            scene_type,
        };
        scene.validate()?;
        Ok(scene)
    }

    pub fn n_voxels(&self) -> usize {
        self.voxels.len()
    }

    /// Check every scene invariant, returning the first violation.
    pub fn validate(&self) -> core::result::Result<(), ValidationError> {
        let n = self.voxels.len();
        let mut seen = BTreeSet::new();
        for (index, v) in self.voxels.iter().enumerate() {
            if !seen.insert(v.pos) {
                return Err(ValidationError::DuplicateVoxel {
                    coord: v.pos,
                    index,
                });
            }
            if v.rgb.iter().any(|c| !(0.0..=1.0).contains(c)) {
                return Err(ValidationError::ColorRange { voxel: index });
            }
        }
        let mut owner: Vec<Option<usize>> = alloc::vec![None; n];
        for (k, inst) in self.instances.iter().enumerate() {
            if inst.mask.len() != n {
                return Err(ValidationError::MaskLength {
                    instance: k,
                    len: inst.mask.len(),
                    expected: n,
                });
            }
            if inst.mask.none() {
                return Err(ValidationError::EmptyMask { instance: k });
            }
            for v in inst.mask.indices() {
                if let Some(first) = owner[v] {
                    return Err(ValidationError::OverlappingInstances {
                        voxel: v,
                        first,
                        second: k,
                    });
                }
                owner[v] = Some(k);
            }
        }
        Ok(())
    }

    /// Additionally require every class label to exist in `catalog`.
    pub fn validate_against(&self, catalog: &ClassCatalog) -> core::result::Result<(), ValidationError> {
        self.validate()?;
        for (k, inst) in self.instances.iter().enumerate() {
            if let Label::Class(c) = inst.label {
                if !catalog.contains(c) {
                    return Err(ValidationError::UnknownClass {
                        instance: k,
                        label: c,
                    });
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassEntry {
    pub id: ClassId,
    pub name: String,
    pub count: u64,
}

/// Ordered class list with per-class instance counts.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ClassCatalog {
    classes: Vec<ClassEntry>,
}

impl ClassCatalog {
    pub fn new(classes: Vec<ClassEntry>) -> core::result::Result<Self, ValidationError> {
        let mut names = BTreeSet::new();
        for (position, c) in classes.iter().enumerate() {
            if c.id as usize != position + 1 {
                return Err(ValidationError::CatalogIds {
                    position,
                    found: c.id,
                });
            }
            if !names.insert(c.name.as_str()) {
                return Err(ValidationError::CatalogDuplicateName(c.name.clone()));
            }
        }
        Ok(ClassCatalog { classes })
    }

    /// Catalog from names; ids assigned 1.. in order, counts zero.
    pub fn from_names<S: AsRef<str>>(names: &[S]) -> core::result::Result<Self, ValidationError> {
        Self::new(
            names
                .iter()
                .enumerate()
                .map(|(i, n)| ClassEntry {
                    id: i as ClassId + 1,
                    name: n.as_ref().into(),
                    count: 0,
                })
                .collect(),
        )
    }

    pub fn classes(&self) -> &[ClassEntry] {
        &self.classes
    }

    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ClassId> + '_ {
        self.classes.iter().map(|c| c.id)
    }

    pub fn contains(&self, id: ClassId) -> bool {
        id >= 1 && (id as usize) <= self.classes.len()
    }

    pub fn name(&self, id: ClassId) -> Option<&str> {
        self.classes
            .get((id as usize).wrapping_sub(1))
            .map(|c| c.name.as_str())
    }

    pub fn id_of(&self, name: &str) -> Option<ClassId> {
        self.classes.iter().find(|c| c.name == name).map(|c| c.id)
    }

    pub fn count(&self, id: ClassId) -> Option<u64> {
        self.classes.get((id as usize).wrapping_sub(1)).map(|c| c.count)
    }

    pub fn set_counts(&mut self, counts: &[u64]) -> Result<()> {
        if counts.len() != self.classes.len() {
            return Err(input("count vector length differs from catalog size"));
        }
        for (c, &n) in self.classes.iter_mut().zip(counts) {
            c.count = n;
        }
        Ok(())
    }

    /// Recount instances per class over `scenes`.
    pub fn recount<'a>(&mut self, scenes: impl IntoIterator<Item = &'a Scene>) {
        for c in &mut self.classes {
            c.count = 0;
        }
        for s in scenes {
            for inst in &s.instances {
                if let Label::Class(c) = inst.label {
                    if let Some(e) = self.classes.get_mut((c as usize).wrapping_sub(1)) {
                        e.count += 1;
                    }
                }
            }
        }
    }
}

/// Intersection over union of two binary masks. Empty union gives 0.
pub fn mask_iou(a: &Mask, b: &Mask) -> Result<f64> {
    if a.len() != b.len() {
        return Err(input(alloc::format!(
            "mask length mismatch: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    Ok(iou_bits(a.bits(), b.bits()))
}

pub(crate) fn iou_bits(a: &[bool], b: &[bool]) -> f64 {
    let mut inter = 0usize;
    let mut union = 0usize;
    for (&x, &y) in a.iter().zip(b) {
        inter += (x && y) as usize;
        union += (x || y) as usize;
    }
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}

/// Threshold a heatmap at 0.5 (strictly greater is foreground).
pub fn binarize(heatmap: &[f64]) -> Result<Mask> {
    if let Some(i) = heatmap.iter().position(|v| !(0.0..=1.0).contains(v)) {
        return Err(input(alloc::format!(
            "heatmap value {} at {i} outside [0,1]",
            heatmap[i]
        )));
    }
    Ok(binarize_unchecked(heatmap))
}

pub(crate) fn binarize_unchecked(heatmap: &[f64]) -> Mask {
    Mask(heatmap.iter().map(|&v| v > 0.5).collect())
}
