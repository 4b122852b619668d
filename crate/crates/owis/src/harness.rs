//! Experiment driver: data and split preparation, the three-task protocol,
//! the ablation grid and the reproduction manifest.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use owis_core::autolabel::SelectionMode;
use owis_core::error::Error as CoreError;
use owis_core::incremental::{replay_scenes, select_exemplars, Phase};
use owis_core::metrics::EvalReport;
use owis_core::openworld::UnionMode;
use owis_core::scene::{ClassCatalog, Scene};
use owis_core::splits::{
    load_bundled, split_frequency, split_random, split_region, BundledSplit, SceneTypeMatrix, TaskSplit, N_TASKS,
};
use owis_core::synthgen::{generate_scene, GenConfig};
use owis_core::train::{Config, Learner};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::formats::{self, Checkpoint, Subset};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DataConfig {
    /// Existing dataset root (`catalog.json`, `train/`, `test/`). When unset
    /// the data is generated from `generate`.
    pub dir: Option<PathBuf>,
    /// Generator settings; `generate.scenes` is the training-set size.
    pub generate: GenConfig,
    /// Held-out scenes generated after the training scenes.
    pub test_scenes: usize,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            dir: None,
            generate: GenConfig {
                scenes: 80,
                ..GenConfig::default()
            },
            test_scenes: 60,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SplitSpec {
    Freq {
        sizes: [usize; N_TASKS],
    },
    Region {
        sizes: [usize; N_TASKS],
        #[serde(default = "default_tolerance")]
        tolerance: f64,
    },
    Random {
        size: usize,
        #[serde(default)]
        seed: u64,
    },
    /// One of the bundled tables: `A`, `B` or `C`.
    Bundled {
        which: String,
    },
    File {
        path: PathBuf,
    },
}

fn default_tolerance() -> f64 {
    0.1
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec::Freq { sizes: [4, 4, 4] }
    }
}

/// The three ablation switches.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct Ablation {
    /// Confidence-threshold pseudo-labels (off: top-k).
    pub ct: bool,
    /// Probability correction at evaluation.
    pub pc: bool,
    /// Exemplar replay fine-tuning after tasks 2 and 3.
    pub finetune: bool,
}

impl Default for Ablation {
    fn default() -> Self {
        Ablation {
            ct: true,
            pc: true,
            finetune: true,
        }
    }
}

impl Ablation {
    pub fn label(&self) -> String {
        let b = |on: bool| if on { "on" } else { "off" };
        format!("ct-{}_pc-{}_ft-{}", b(self.ct), b(self.pc), b(self.finetune))
    }

    /// All eight combinations, CT varying slowest.
    pub fn grid() -> Vec<Ablation> {
        let mut out = Vec::new();
        for ct in [true, false] {
            for finetune in [true, false] {
                for pc in [true, false] {
                    out.push(Ablation { ct, pc, finetune });
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub data: DataConfig,
    pub split: SplitSpec,
    /// Main-phase epochs for each task.
    pub epochs: [usize; N_TASKS],
    pub ablation: Ablation,
    pub seeds: Vec<u64>,
    /// Module configs, at the top level of the file.
    #[serde(flatten)]
    pub modules: Config,
}

impl Default for ExperimentConfig {
    /// The calibrated protocol. Differs from the library defaults only in
    /// taking the max of the two unknown probabilities: with noisy-OR the
    /// correction costs several mAP points on the synthetic scenes.
    fn default() -> Self {
        let mut modules = Config::default();
        modules.ow.union_mode = UnionMode::Max;
        ExperimentConfig {
            data: DataConfig::default(),
            split: SplitSpec::default(),
            epochs: [40; N_TASKS],
            ablation: Ablation::default(),
            seeds: vec![0, 1, 2],
            modules,
        }
    }
}

fn merge(base: &mut Value, patch: Value) {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            for (k, v) in p {
                merge(b.entry(k).or_insert(Value::Null), v);
            }
        }
        (b, p) => *b = p,
    }
}

impl ExperimentConfig {
    /// Parse a config file. Keys it leaves out, at any depth, come from
    /// [`ExperimentConfig::default`].
    pub fn from_json(text: &str) -> serde_json::Result<Self> {
        // Typed parse first so type errors carry a position.
        serde_json::from_str::<ExperimentConfig>(text)?;
        let mut merged = serde_json::to_value(Self::default())?;
        merge(&mut merged, serde_json::from_str(text)?);
        serde_json::from_value(merged)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg = Self::from_json(&text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: e.line(),
            column: e.column(),
            msg: e.to_string(),
        })?;
        cfg.validate().map_err(|e| match e {
            Error::Core(source) => Error::InFile {
                path: path.to_path_buf(),
                source,
            },
            e => e,
        })?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(CoreError::Config("seeds must not be empty".into()).into());
        }
        let missing = |p: &Path| CoreError::Config(format!("{} does not exist", p.display()));
        if let Some(dir) = &self.data.dir {
            if !dir.is_dir() {
                return Err(missing(dir).into());
            }
        } else {
            self.data.generate.validate()?;
        }
        if let SplitSpec::File { path } = &self.split {
            if !path.is_file() {
                return Err(missing(path).into());
            }
        }
        self.modules.validate()?;
        Ok(())
    }

    /// Module configs for one seed and switch setting.
    pub fn run_config(&self, seed: u64, ablation: Ablation) -> Config {
        let mut cfg = self.modules.clone().with_seed(seed);
        cfg.autolabel.mode = if ablation.ct {
            SelectionMode::Threshold
        } else {
            SelectionMode::TopK
        };
        cfg
    }
}

/// Catalog (counted on the training scenes) and the two scene sets.
#[derive(Debug, Clone, PartialEq)]
pub struct Data {
    pub catalog: ClassCatalog,
    pub train: Vec<Scene>,
    pub test: Vec<Scene>,
}

pub fn load_data(cfg: &DataConfig) -> Result<Data> {
    if let Some(dir) = &cfg.dir {
        let (catalog, train) = formats::read_dataset(dir, Subset::Train)?;
        let (_, test) = formats::read_dataset(dir, Subset::Test)?;
        return Ok(Data { catalog, train, test });
    }
    generate_data(&cfg.generate, cfg.test_scenes)
}

/// `gen.scenes` training scenes followed by `test_scenes` more from the same stream.
pub fn generate_data(gen: &GenConfig, test_scenes: usize) -> Result<Data> {
    let all = GenConfig {
        scenes: gen.scenes + test_scenes,
        ..gen.clone()
    };
    all.validate()?;
    let shapes = all.class_shapes();
    let scenes = (0..all.scenes)
        .map(|i| generate_scene(&all, &shapes, i))
        .collect::<owis_core::error::Result<Vec<_>>>()?;
    let mut catalog = ClassCatalog::from_names(
        &(1..=gen.classes).map(|c| format!("class_{c:02}")).collect::<Vec<_>>(),
    )
    .map_err(CoreError::from)?;
    let (train, test) = scenes.split_at(gen.scenes);
    catalog.recount(train);
    Ok(Data {
        catalog,
        train: train.to_vec(),
        test: test.to_vec(),
    })
}

/// Build the split a spec describes, plus any warnings.
pub fn build_split(spec: &SplitSpec, catalog: &ClassCatalog, scenes: &[Scene]) -> Result<(TaskSplit, Vec<String>)> {
    let split = match spec {
        SplitSpec::Freq { sizes } => split_frequency(catalog, *sizes)?,
        SplitSpec::Region { sizes, tolerance } => {
            let matrix = SceneTypeMatrix::from_scenes(scenes)?;
            let r = split_region(catalog, &matrix, *sizes, *tolerance)?;
            return Ok((r.split, r.warnings));
        }
        SplitSpec::Random { size, seed } => split_random(catalog, *size, *seed)?,
        SplitSpec::Bundled { which } => load_bundled(BundledSplit::parse(which)?, catalog)?,
        SplitSpec::File { path } => formats::read_split(path, catalog)?,
    };
    Ok((split, Vec::new()))
}

/// Replay epochs: `replay.epoch_fraction` of the main phase, at least one unless the fraction is 0.
pub fn finetune_epochs(cfg: &Config, main_epochs: usize) -> usize {
    let e = cfg.replay.epoch_fraction * main_epochs as f64;
    if e > 0.0 {
        (e.round() as usize).max(1)
    } else {
        0
    }
}

/// Shared state of one protocol execution: inputs plus the artifact sink.
pub struct Runner<'a> {
    pub data: &'a Data,
    pub split: &'a TaskSplit,
    pub epochs: [usize; N_TASKS],
    /// Artifact root; nothing is written when `None`.
    pub out: Option<&'a Path>,
    /// Reuse checkpoints already present under `out` instead of retraining.
    pub resume: bool,
    /// Relative artifact path -> SHA-256 of its bytes.
    pub artifacts: BTreeMap<String, String>,
}

impl<'a> Runner<'a> {
    pub fn new(data: &'a Data, split: &'a TaskSplit, epochs: [usize; N_TASKS], out: Option<&'a Path>) -> Self {
        Runner {
            data,
            split,
            epochs,
            out,
            resume: false,
            artifacts: BTreeMap::new(),
        }
    }

    fn record(&mut self, rel: &str, write: impl FnOnce(&Path) -> Result<()>) -> Result<()> {
        if let Some(out) = self.out {
            let path = out.join(rel);
            write(&path)?;
            self.artifacts.insert(rel.to_string(), formats::file_sha256(&path)?);
        }
        Ok(())
    }

    /// Run `train` unless a resumable checkpoint `rel` exists; save the result.
    fn stage(
        &mut self,
        name: &str,
        rel: &str,
        cfg: &Config,
        learner: &mut Learner,
        train: impl FnOnce(&mut Learner) -> owis_core::error::Result<()>,
    ) -> Result<()> {
        if self.resume {
            if let Some(path) = self.out.map(|o| o.join(rel)).filter(|p| p.is_file()) {
                let ck = formats::read_checkpoint(&path)?;
                ck.check_catalog(&self.data.catalog)?;
                *learner = ck.learner;
                self.artifacts.insert(rel.to_string(), formats::file_sha256(&path)?);
                return Ok(());
            }
        }
        train(learner).map_err(|e| Error::stage(name, e.into()))?;
        let ck = Checkpoint::new(&self.data.catalog, cfg.clone(), learner.clone());
        self.record(rel, |p| formats::write_checkpoint(&ck, p))
    }

    fn evaluate(&mut self, name: &str, rel: &str, learner: &Learner, cfg: &Config, pc: bool) -> Result<EvalReport> {
        let report = learner
            .evaluate(&self.data.test, pc.then_some(&cfg.ow), &cfg.eval)
            .map_err(|e| Error::stage(name, e.into()))?;
        self.record(rel, |p| formats::write_report(&report, p))?;
        Ok(report)
    }

    fn main_phase(&mut self, dir: &str, task: usize, cfg: &Config, learner: &mut Learner) -> Result<()> {
        let t = task + 1;
        let epochs = self.epochs[task];
        let train = &self.data.train;
        self.stage(&format!("task{t}-train"), &format!("{dir}/task{t}.ckpt.json"), cfg, learner, |l| {
            if task > 0 {
                l.advance()?;
            }
            l.train(train, Phase::Main, epochs, cfg).map(drop)
        })
    }

    fn finetune_phase(&mut self, dir: &str, task: usize, cfg: &Config, learner: &mut Learner) -> Result<()> {
        let t = task + 1;
        let epochs = finetune_epochs(cfg, self.epochs[task]);
        let train = &self.data.train;
        self.stage(
            &format!("task{t}-finetune"),
            &format!("{dir}/task{t}.finetuned.ckpt.json"),
            cfg,
            learner,
            |l| {
                let (set, _) = select_exemplars(train, &l.state, &cfg.replay)?;
                l.state.exemplars = set;
                let scenes = replay_scenes(train, &l.state);
                l.train(&scenes, Phase::Replay, epochs, cfg).map(drop)
            },
        )
    }

    /// Full three-task protocol for one seed and switch setting.
    pub fn run_protocol(&mut self, exp: &ExperimentConfig, seed: u64, ablation: Ablation) -> Result<Vec<EvalReport>> {
        let runs = self.run_branches(exp, seed, ablation.ct, &[ablation.finetune], &[ablation.pc])?;
        Ok(runs.into_values().next().expect("one branch requested"))
    }

    /// Every PC and fine-tuning combination for one CT setting, sharing the
    /// stages the branches have in common. Keys are the switch settings.
    pub fn run_branches(
        &mut self,
        exp: &ExperimentConfig,
        seed: u64,
        ct: bool,
        finetune: &[bool],
        pc: &[bool],
    ) -> Result<BTreeMap<Ablation, Vec<EvalReport>>> {
        let cfg = exp.run_config(seed, Ablation { ct, pc: false, finetune: false });
        let base = format!("seed-{seed}/ct-{}", if ct { "on" } else { "off" });
        let mut learner = Learner::new(&cfg, self.split.clone(), 0).map_err(|e| Error::stage("init", e.into()))?;

        // Task 1 has no fine-tuning, so every branch shares it.
        self.main_phase(&base, 0, &cfg, &mut learner)?;
        let mut t1 = BTreeMap::new();
        for &p in pc {
            t1.insert(p, self.evaluate("task1-eval", &format!("{base}/task1.{}.report.json", pc_tag(p)), &learner, &cfg, p)?);
        }
        // Task 2 main phase is also shared.
        self.main_phase(&base, 1, &cfg, &mut learner)?;
        let after_t2 = learner.clone();

        let mut out = BTreeMap::new();
        for &ft in finetune {
            let dir = format!("{base}/ft-{}", if ft { "on" } else { "off" });
            let mut l = after_t2.clone();
            let mut reports: BTreeMap<bool, Vec<EvalReport>> = pc.iter().map(|&p| (p, vec![t1[&p].clone()])).collect();
            for task in 1..N_TASKS {
                if task > 1 {
                    self.main_phase(&dir, task, &cfg, &mut l)?;
                }
                if ft {
                    self.finetune_phase(&dir, task, &cfg, &mut l)?;
                }
                let t = task + 1;
                for &p in pc {
                    let rel = format!("{dir}/task{t}.{}.report.json", pc_tag(p));
                    let r = self.evaluate(&format!("task{t}-eval"), &rel, &l, &cfg, p)?;
                    reports.get_mut(&p).unwrap().push(r);
                }
            }
            for (p, r) in reports {
                out.insert(Ablation { ct, pc: p, finetune: ft }, r);
            }
        }
        Ok(out)
    }

    /// All eight switch combinations for one seed.
    pub fn run_grid(&mut self, exp: &ExperimentConfig, seed: u64) -> Result<BTreeMap<Ablation, Vec<EvalReport>>> {
        let mut out = BTreeMap::new();
        for ct in [true, false] {
            out.extend(self.run_branches(exp, seed, ct, &[true, false], &[true, false])?);
        }
        Ok(out)
    }
}

fn pc_tag(pc: bool) -> &'static str {
    if pc {
        "pc-on"
    } else {
        "pc-off"
    }
}

impl PartialOrd for Ablation {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Ablation {
    /// Matches [`Ablation::grid`]: switches on before off, CT slowest.
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        let key = |a: &Ablation| (!a.ct, !a.finetune, !a.pc);
        key(self).cmp(&key(other))
    }
}

/// Numbers the directional ablation checks compare, for one seed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AblationOutcome {
    pub seed: u64,
    /// Task 1 known mAP without correction, CT vs top-k pseudo-labels.
    pub t1_map_ct: f64,
    pub t1_map_topk: f64,
    /// Task 1 with CT, correction on vs off.
    pub t1_u_recall_pc: f64,
    pub t1_u_recall_no_pc: f64,
    pub t1_map_pc: f64,
    /// Task 2 previously-known mAP without correction, with and without replay.
    pub t2_prev_map_replay: f64,
    pub t2_prev_map_no_replay: f64,
}

/// The cheapest set of runs that answers the three ablation questions:
/// two task-1 trainings (CT, top-k) and one task-2 training whose
/// fine-tuned and plain versions are both evaluated.
pub fn run_ablation(exp: &ExperimentConfig, data: &Data, split: &TaskSplit, seed: u64) -> Result<AblationOutcome> {
    let mut runner = Runner::new(data, split, exp.epochs, None);
    let cfg = exp.run_config(seed, Ablation::default());
    let mut l = Learner::new(&cfg, split.clone(), 0)?;
    runner.main_phase("", 0, &cfg, &mut l)?;
    let pc_on = runner.evaluate("task1-eval", "", &l, &cfg, true)?;
    let pc_off = runner.evaluate("task1-eval", "", &l, &cfg, false)?;

    let topk_cfg = exp.run_config(seed, Ablation { ct: false, ..Ablation::default() });
    let mut topk = Learner::new(&topk_cfg, split.clone(), 0)?;
    runner.main_phase("", 0, &topk_cfg, &mut topk)?;
    let topk_report = runner.evaluate("task1-eval", "", &topk, &topk_cfg, false)?;

    runner.main_phase("", 1, &cfg, &mut l)?;
    let no_replay = runner.evaluate("task2-eval", "", &l, &cfg, false)?;
    runner.finetune_phase("", 1, &cfg, &mut l)?;
    let replay = runner.evaluate("task2-eval", "", &l, &cfg, false)?;

    let v = |x: Option<f64>| x.unwrap_or(0.0);
    Ok(AblationOutcome {
        seed,
        t1_map_ct: v(pc_off.map_curr),
        t1_map_topk: v(topk_report.map_curr),
        t1_u_recall_pc: v(pc_on.u_recall),
        t1_u_recall_no_pc: v(pc_off.u_recall),
        t1_map_pc: v(pc_on.map_curr),
        t2_prev_map_replay: v(replay.map_prev),
        t2_prev_map_no_replay: v(no_replay.map_prev),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DatasetInfo {
    pub catalog_hash: String,
    pub train_scenes: usize,
    pub test_scenes: usize,
    /// SHA-256 over the compact JSON of every scene, train then test.
    pub content_hash: String,
}

impl DatasetInfo {
    pub fn of(data: &Data) -> Self {
        let mut bytes = Vec::new();
        for s in data.train.iter().chain(&data.test) {
            serde_json::to_writer(&mut bytes, &formats::SceneFile::from(s)).expect("scenes serialize");
            bytes.push(b'\n');
        }
        DatasetInfo {
            catalog_hash: formats::catalog_hash(&data.catalog),
            train_scenes: data.train.len(),
            test_scenes: data.test.len(),
            content_hash: formats::sha256_hex(&bytes),
        }
    }
}

/// Everything needed to interpret and check a protocol run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Manifest {
    pub tool: String,
    pub seeds: Vec<u64>,
    pub runs: Vec<String>,
    /// Full configuration, defaults included.
    pub config: ExperimentConfig,
    /// Settings the method leaves to the implementer, repeated for quick reading.
    pub open_choices: BTreeMap<String, serde_json::Value>,
    pub dataset: DatasetInfo,
    pub split: TaskSplit,
    pub split_warnings: Vec<String>,
    /// Relative artifact path -> SHA-256 of its bytes.
    pub artifacts: BTreeMap<String, String>,
}

fn open_choices(cfg: &Config) -> BTreeMap<String, serde_json::Value> {
    use serde_json::json;
    [
        ("autolabel.tau", json!(cfg.autolabel.tau)),
        ("autolabel.iou_gate", json!(cfg.autolabel.iou_gate)),
        ("autolabel.k", json!(cfg.autolabel.k)),
        ("ow.delta", json!(cfg.ow.delta)),
        ("ow.ema_momentum", json!(cfg.ow.ema_momentum)),
        ("ow.store_capacity", json!(cfg.ow.store_capacity)),
        ("ow.contrastive_weight", json!(cfg.ow.contrastive_weight)),
        ("ow.union_mode", json!(cfg.ow.union_mode)),
        ("assign", json!(cfg.assign)),
        ("train.loss", json!(cfg.train.loss)),
        ("train.optimizer", json!(cfg.train.optimizer)),
        ("model", json!(cfg.model)),
        ("replay", json!(cfg.replay)),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v))
    .collect()
}

/// Run the protocol (or the full grid) for every seed, writing checkpoints,
/// reports, `summary.csv` and `manifest.json` under `out`.
pub fn run_experiment(exp: &ExperimentConfig, out: &Path, grid: bool, resume: bool) -> Result<Manifest> {
    exp.validate()?;
    let data = load_data(&exp.data).map_err(|e| Error::stage("data", e))?;
    let (split, split_warnings) =
        build_split(&exp.split, &data.catalog, &data.train).map_err(|e| Error::stage("split", e))?;
    let mut runner = Runner::new(&data, &split, exp.epochs, Some(out));
    runner.resume = resume;
    runner.record("split.json", |p| formats::write_json(p, &split))?;

    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for &seed in &exp.seeds {
        let runs = if grid {
            runner.run_grid(exp, seed)?
        } else {
            let reports = runner.run_protocol(exp, seed, exp.ablation)?;
            BTreeMap::from([(exp.ablation, reports)])
        };
        for (ablation, reports) in runs {
            let mut row = vec![
                ("seed".to_string(), seed.to_string()),
                ("run".to_string(), ablation.label()),
            ];
            for (task, r) in reports.iter().enumerate() {
                row.extend(formats::table_columns(task, r));
            }
            rows.push(row);
            if !labels.contains(&ablation.label()) {
                labels.push(ablation.label());
            }
        }
    }
    runner.record("summary.csv", |p| formats::write_table(p, &rows))?;
    let artifacts = runner.artifacts;

    let manifest = Manifest {
        tool: format!("owis {}", env!("CARGO_PKG_VERSION")),
        seeds: exp.seeds.clone(),
        runs: labels,
        config: exp.clone(),
        open_choices: open_choices(&exp.modules),
        dataset: DatasetInfo::of(&data),
        split,
        split_warnings,
        artifacts,
    };
    formats::write_json(&out.join("manifest.json"), &manifest)?;
    Ok(manifest)
}

/// Median of a nonempty sample (mean of the middle two for even sizes).
pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}
