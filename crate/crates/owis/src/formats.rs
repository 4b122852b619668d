//! On-disk formats. Everything is JSON except the summary tables (CSV).

use std::fs;
use std::path::{Path, PathBuf};

use owis_core::error::ValidationError;
use owis_core::incremental::ExemplarSet;
use owis_core::metrics::{Detection, EvalReport};
use owis_core::scene::{ClassCatalog, ClassEntry, ClassId, Instance, Label, Mask, Scene, Voxel};
use owis_core::splits::TaskSplit;
use owis_core::train::{Config, Learner};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const CATALOG_FILE: &str = "catalog.json";
pub const CHECKPOINT_VERSION: u32 = 1;

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        line: e.line(),
        column: e.column(),
        msg: e.to_string(),
    })
}

/// Pretty JSON with a trailing newline. Parent directories are created.
pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).expect("in-memory values always serialize");
    text.push('\n');
    write_bytes(path, text.as_bytes())
}

pub fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn file_sha256(path: &Path) -> Result<String> {
    Ok(sha256_hex(&fs::read(path).map_err(|e| Error::io(path, e))?))
}

// ---- scenes ----

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceFile {
    pub mask_indices: Vec<usize>,
    pub label: i64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneFile {
    pub id: String,
    pub voxels: Vec<(i32, i32, i32, f64, f64, f64)>,
    pub instances: Vec<InstanceFile>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scene_type: Option<u32>,
}

impl From<&Scene> for SceneFile {
    fn from(s: &Scene) -> Self {
        SceneFile {
            id: s.id.clone(),
            voxels: s
                .voxels
                .iter()
                .map(|v| (v.pos[0], v.pos[1], v.pos[2], v.rgb[0], v.rgb[1], v.rgb[2]))
                .collect(),
            instances: s
                .instances
                .iter()
                .map(|i| InstanceFile {
                    mask_indices: i.mask.indices(),
                    label: i.label.to_code(),
                })
                .collect(),
            scene_type: s.scene_type,
        }
    }
}

impl SceneFile {
    pub fn into_scene(self) -> owis_core::error::Result<Scene> {
        let n = self.voxels.len();
        let voxels = self
            .voxels
            .into_iter()
            .map(|(x, y, z, r, g, b)| Voxel {
                pos: [x, y, z],
                rgb: [r, g, b],
            })
            .collect();
        let mut instances = Vec::with_capacity(self.instances.len());
        for (instance, inst) in self.instances.into_iter().enumerate() {
            let mut bits = vec![false; n];
            for index in inst.mask_indices {
                if index >= n {
                    return Err(ValidationError::MaskIndexOutOfRange { instance, index, n }.into());
                }
                bits[index] = true;
            }
            instances.push(Instance {
                mask: Mask::new(bits),
                label: Label::from_code(inst.label)?,
            });
        }
        Scene::new(self.id, voxels, instances, self.scene_type)
    }
}

pub fn read_scene(path: &Path) -> Result<Scene> {
    let file: SceneFile = read_json(path)?;
    file.into_scene().map_err(|source| Error::InFile {
        path: path.to_path_buf(),
        source,
    })
}

pub fn write_scene(scene: &Scene, path: &Path) -> Result<()> {
    write_json(path, &SceneFile::from(scene))
}

/// Scene files (`*.json` other than the catalog) in `dir`, in file-name order.
pub fn scene_paths(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut paths = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        let is_json = path.extension().is_some_and(|e| e == "json");
        if is_json && path.file_name().is_some_and(|n| n != CATALOG_FILE) {
            paths.push(path);
        }
    }
    paths.sort();
    Ok(paths)
}

pub fn read_scene_dir(dir: &Path) -> Result<Vec<Scene>> {
    scene_paths(dir)?.iter().map(|p| read_scene(p)).collect()
}

pub fn write_scene_dir(scenes: &[Scene], dir: &Path) -> Result<()> {
    for s in scenes {
        write_scene(s, &dir.join(format!("{}.json", s.id)))?;
    }
    Ok(())
}

// ---- catalog ----

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassEntryFile {
    pub id: ClassId,
    pub name: String,
    #[serde(default)]
    pub count: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CatalogFile {
    pub classes: Vec<ClassEntryFile>,
}

impl From<&ClassCatalog> for CatalogFile {
    fn from(c: &ClassCatalog) -> Self {
        CatalogFile {
            classes: c
                .classes()
                .iter()
                .map(|e| ClassEntryFile {
                    id: e.id,
                    name: e.name.clone(),
                    count: e.count,
                })
                .collect(),
        }
    }
}

pub fn read_catalog(path: &Path) -> Result<ClassCatalog> {
    let file: CatalogFile = read_json(path)?;
    let entries = file
        .classes
        .into_iter()
        .map(|e| ClassEntry {
            id: e.id,
            name: e.name,
            count: e.count,
        })
        .collect();
    ClassCatalog::new(entries).map_err(|e| Error::InFile {
        path: path.to_path_buf(),
        source: e.into(),
    })
}

pub fn write_catalog(catalog: &ClassCatalog, path: &Path) -> Result<()> {
    write_json(path, &CatalogFile::from(catalog))
}

/// Hash of the class ids and names (not counts), binding checkpoints to a class set.
pub fn catalog_hash(catalog: &ClassCatalog) -> String {
    let mut text = String::new();
    for e in catalog.classes() {
        text.push_str(&format!("{}\t{}\n", e.id, e.name));
    }
    sha256_hex(text.as_bytes())
}

// ---- dataset layout: ROOT/catalog.json, ROOT/train/*.json, ROOT/test/*.json ----

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Subset {
    Train,
    Test,
}

impl Subset {
    pub fn dir_name(self) -> &'static str {
        match self {
            Subset::Train => "train",
            Subset::Test => "test",
        }
    }
}

pub fn read_dataset(root: &Path, subset: Subset) -> Result<(ClassCatalog, Vec<Scene>)> {
    let catalog = read_catalog(&root.join(CATALOG_FILE))?;
    let dir = root.join(subset.dir_name());
    let scenes = read_scene_dir(&dir)?;
    for (s, p) in scenes.iter().zip(scene_paths(&dir)?) {
        s.validate_against(&catalog).map_err(|e| Error::InFile {
            path: p,
            source: e.into(),
        })?;
    }
    Ok((catalog, scenes))
}

pub fn write_dataset(root: &Path, catalog: &ClassCatalog, train: &[Scene], test: &[Scene]) -> Result<()> {
    write_catalog(catalog, &root.join(CATALOG_FILE))?;
    write_scene_dir(train, &root.join(Subset::Train.dir_name()))?;
    write_scene_dir(test, &root.join(Subset::Test.dir_name()))
}

// ---- splits, config, exemplars ----

pub fn read_split(path: &Path, catalog: &ClassCatalog) -> Result<TaskSplit> {
    let split: TaskSplit = read_json(path)?;
    split.validate(catalog).map_err(|e| Error::InFile {
        path: path.to_path_buf(),
        source: e.into(),
    })?;
    Ok(split)
}

pub fn read_exemplars(path: &Path) -> Result<ExemplarSet> {
    read_json(path)
}

// ---- checkpoints ----

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub catalog_hash: String,
    pub config: Config,
    pub learner: Learner,
}

impl Checkpoint {
    pub fn new(catalog: &ClassCatalog, config: Config, learner: Learner) -> Self {
        Checkpoint {
            version: CHECKPOINT_VERSION,
            catalog_hash: catalog_hash(catalog),
            config,
            learner,
        }
    }

    pub fn check_catalog(&self, catalog: &ClassCatalog) -> Result<()> {
        if self.catalog_hash != catalog_hash(catalog) {
            return Err(Error::Checkpoint("catalog does not match the one the model was trained with".into()));
        }
        Ok(())
    }
}

pub fn read_checkpoint(path: &Path) -> Result<Checkpoint> {
    let ck: Checkpoint = read_json(path)?;
    if ck.version != CHECKPOINT_VERSION {
        return Err(Error::Checkpoint(format!(
            "{}: version {} (expected {CHECKPOINT_VERSION})",
            path.display(),
            ck.version
        )));
    }
    Ok(ck)
}

pub fn write_checkpoint(ck: &Checkpoint, path: &Path) -> Result<()> {
    write_json(path, ck)
}

// ---- reports ----

pub fn read_report(path: &Path) -> Result<EvalReport> {
    read_json(path)
}

pub fn write_report(report: &EvalReport, path: &Path) -> Result<()> {
    write_json(path, report)
}

/// Summary columns for one task, following the results-table layout:
/// task 1 shows open-set metrics and current mAP, task 2 adds previous and
/// overall mAP, the final task has no unknowns left and only shows mAP.
/// Percentages use two decimals.
pub fn table_columns(task: usize, r: &EvalReport) -> Vec<(String, String)> {
    let pct = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |x| format!("{:.2}", 100.0 * x));
    let t = task + 1;
    let mut cols = Vec::new();
    if task < 2 {
        cols.push((format!("t{t}_wi"), format!("{:.4}", r.wi)));
        cols.push((format!("t{t}_a_ose"), r.a_ose.to_string()));
        cols.push((format!("t{t}_u_recall"), pct(r.u_recall)));
    }
    if task > 0 {
        cols.push((format!("t{t}_map_prev"), pct(r.map_prev)));
    }
    cols.push((format!("t{t}_map_curr"), pct(r.map_curr)));
    if task > 0 {
        cols.push((format!("t{t}_map_all"), pct(r.map_all)));
    }
    cols
}

/// Write rows of `(column, value)` pairs; the header comes from the first row.
pub fn write_table(path: &Path, rows: &[Vec<(String, String)>]) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    if let Some(first) = rows.first() {
        w.write_record(first.iter().map(|(k, _)| k))?;
    }
    for row in rows {
        w.write_record(row.iter().map(|(_, v)| v))?;
    }
    let bytes = w.into_inner().map_err(|e| Error::io(path, e.into_error()))?;
    write_bytes(path, &bytes)
}

// ---- predictions and ground truth for the metrics oracle ----

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionFile {
    pub label: i64,
    pub confidence: f64,
    pub mask_indices: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenePredictions {
    pub id: String,
    pub detections: Vec<DetectionFile>,
}

/// Detections per scene plus the class lists the report is split by.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionsFile {
    pub prev: Vec<ClassId>,
    pub curr: Vec<ClassId>,
    pub scenes: Vec<ScenePredictions>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthFile {
    pub scenes: Vec<SceneFile>,
}

impl ScenePredictions {
    pub fn new(id: &str, dets: &[Detection]) -> Self {
        ScenePredictions {
            id: id.to_string(),
            detections: dets
                .iter()
                .map(|d| DetectionFile {
                    label: d.label.to_code(),
                    confidence: d.confidence,
                    mask_indices: d.mask.indices(),
                })
                .collect(),
        }
    }

    pub fn detections(&self, n_voxels: usize) -> owis_core::error::Result<Vec<Detection>> {
        self.detections
            .iter()
            .map(|d| {
                Ok(Detection {
                    label: Label::from_code(d.label)?,
                    confidence: d.confidence,
                    mask: Mask::from_indices(n_voxels, &d.mask_indices)?,
                })
            })
            .collect()
    }
}

/// Pair each ground-truth scene with its detections (by id).
pub fn read_oracle_inputs(predictions: &Path, gt: &Path) -> Result<(PredictionsFile, Vec<(Scene, Vec<Detection>)>)> {
    let preds: PredictionsFile = read_json(predictions)?;
    let gt_file: GroundTruthFile = read_json(gt)?;
    let in_file = |path: &Path| {
        let path = path.to_path_buf();
        move |source| Error::InFile { path, source }
    };
    let mut pairs = Vec::with_capacity(gt_file.scenes.len());
    for sf in gt_file.scenes {
        let scene = sf.into_scene().map_err(in_file(gt))?;
        let dets = match preds.scenes.iter().find(|p| p.id == scene.id) {
            Some(p) => p.detections(scene.n_voxels()).map_err(in_file(predictions))?,
            None => Vec::new(),
        };
        pairs.push((scene, dets));
    }
    Ok((preds, pairs))
}
